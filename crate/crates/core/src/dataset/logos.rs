use image::RgbImage;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::extract::place_on_canvas;
use crate::error::{Error, Result};

/// Scales each square logo to the 232-px content box on a white 256 canvas.
pub fn prepare_logos(logos: &[RgbImage]) -> Result<Vec<RgbImage>> {
    if let Some((i, l)) = logos.iter().enumerate().find(|(_, l)| l.width() != l.height()) {
        return Err(Error::InvalidArgument(format!(
            "logo {i} is {}x{}, expected a square image",
            l.width(),
            l.height()
        )));
    }
    Ok(logos.par_iter().map(place_on_canvas).collect())
}

/// Indices of `n` items drawn without replacement from `total`, in
/// ascending order.
pub fn select_random(total: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > total {
        return Err(Error::InvalidArgument(format!("cannot select {n} of {total} items")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, total, n).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::extract::border_is_white;
    use crate::dataset::{MARGIN, WHITE};
    use image::Rgb;

    #[test]
    fn geometry_and_margin() {
        let logo = RgbImage::from_pixel(400, 400, Rgb([10, 20, 30]));
        let out = prepare_logos(&[logo]).unwrap();
        assert_eq!(out[0].dimensions(), (256, 256));
        assert_eq!(*out[0].get_pixel(0, 0), WHITE);
        assert!(border_is_white(&out[0], MARGIN));
        assert_eq!(*out[0].get_pixel(MARGIN, MARGIN), Rgb([10, 20, 30]));
        assert_eq!(*out[0].get_pixel(255 - MARGIN, 255 - MARGIN), Rgb([10, 20, 30]));
    }

    #[test]
    fn gray_stays_gray() {
        let out = prepare_logos(&[RgbImage::from_pixel(400, 400, Rgb([128; 3]))]).unwrap();
        for y in MARGIN..256 - MARGIN {
            for x in MARGIN..256 - MARGIN {
                for c in out[0].get_pixel(x, y).0 {
                    assert!((c as i32 - 128).abs() <= 1);
                }
            }
        }
    }

    #[test]
    fn non_square_rejected() {
        assert!(prepare_logos(&[RgbImage::new(400, 300)]).is_err());
    }

    #[test]
    fn selection() {
        let s = select_random(100, 20, 3).unwrap();
        assert_eq!(s.len(), 20);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s, select_random(100, 20, 3).unwrap());
        assert!(select_random(3, 4, 0).is_err());
    }
}
