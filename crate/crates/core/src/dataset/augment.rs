use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentParams {
    /// Maximum shift as a fraction of the image side.
    pub max_translate: f64,
    pub max_rotate_deg: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Copies per input, the first being the original.
    pub k: usize,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            max_translate: 0.1,
            max_rotate_deg: 15.0,
            scale_min: 0.8,
            scale_max: 1.2,
            k: 10,
        }
    }
}

impl AugmentParams {
    pub fn with_k(k: usize) -> Self {
        Self { k, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.k < 1 {
            bad.push("k must be >= 1".to_owned());
        }
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max && self.scale_max.is_finite()) {
            bad.push(format!(
                "scale range [{}, {}] must be positive and ordered",
                self.scale_min, self.scale_max
            ));
        }
        if !(self.max_translate >= 0.0 && self.max_translate.is_finite()) {
            bad.push(format!("max_translate {} must be >= 0", self.max_translate));
        }
        if !(self.max_rotate_deg >= 0.0 && self.max_rotate_deg.is_finite()) {
            bad.push(format!("max_rotate_deg {} must be >= 0", self.max_rotate_deg));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(bad.join("; ")))
        }
    }
}

/// Similarity transform about the image center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine {
    pub dx: f64,
    pub dy: f64,
    pub angle_rad: f64,
    pub scale: f64,
}

impl Affine {
    pub fn sample<R: Rng>(params: &AugmentParams, width: u32, height: u32, rng: &mut R) -> Self {
        let t = params.max_translate;
        let r = params.max_rotate_deg.to_radians();
        Self {
            dx: rng.random_range(-t..=t) * width as f64,
            dy: rng.random_range(-t..=t) * height as f64,
            angle_rad: rng.random_range(-r..=r),
            scale: rng.random_range(params.scale_min..=params.scale_max),
        }
    }

    /// Inverse-maps each output pixel and samples bilinearly; out-of-frame
    /// samples read white.
    pub fn apply(&self, img: &RgbImage) -> RgbImage {
        let (w, h) = img.dimensions();
        let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
        let (sin, cos) = self.angle_rad.sin_cos();
        RgbImage::from_fn(w, h, |x, y| {
            let px = x as f64 + 0.5 - cx - self.dx;
            let py = y as f64 + 0.5 - cy - self.dy;
            let sx = (cos * px + sin * py) / self.scale + cx - 0.5;
            let sy = (-sin * px + cos * py) / self.scale + cy - 0.5;
            bilinear_white(img, sx, sy)
        })
    }
}

fn bilinear_white(img: &RgbImage, x: f64, y: f64) -> Rgb<u8> {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x0 = x.floor();
    let y0 = y.floor();
    let (fx, fy) = (x - x0, y - y0);
    let fetch = |xi: i64, yi: i64| -> [f64; 3] {
        if xi < 0 || yi < 0 || xi >= w || yi >= h {
            [255.0; 3]
        } else {
            let p = img.get_pixel(xi as u32, yi as u32).0;
            [p[0] as f64, p[1] as f64, p[2] as f64]
        }
    };
    let (x0, y0) = (x0 as i64, y0 as i64);
    let (a, b, c, d) = (
        fetch(x0, y0),
        fetch(x0 + 1, y0),
        fetch(x0, y0 + 1),
        fetch(x0 + 1, y0 + 1),
    );
    let mut out = [0u8; 3];
    for ch in 0..3 {
        let top = a[ch] * (1.0 - fx) + b[ch] * fx;
        let bottom = c[ch] * (1.0 - fx) + d[ch] * fx;
        out[ch] = (top * (1.0 - fy) + bottom * fy).round().clamp(0.0, 255.0) as u8;
    }
    Rgb(out)
}

/// `k` copies of every icon in input order: the original followed by `k − 1`
/// random translate/rotate/scale variants. Copy `j` of icon `i` draws from
/// its own stream of the seeded generator, so output is independent of
/// thread scheduling.
pub fn augment_icons(icons: &[RgbImage], params: &AugmentParams, seed: u64) -> Result<Vec<RgbImage>> {
    params.validate()?;
    let k = params.k;
    Ok((0..icons.len() * k)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / k, idx % k);
            if j == 0 {
                return icons[i].clone();
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(idx as u64);
            let (w, h) = icons[i].dimensions();
            Affine::sample(params, w, h, &mut rng).apply(&icons[i])
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn icon(v: u8) -> RgbImage {
        RgbImage::from_fn(16, 16, |x, y| {
            if (4..12).contains(&x) && (4..12).contains(&y) {
                Rgb([v, 0, 0])
            } else {
                Rgb([255; 3])
            }
        })
    }

    #[test]
    fn counts_and_originals() {
        let icons: Vec<_> = (0..3).map(|i| icon(i * 10)).collect();
        let out = augment_icons(&icons, &AugmentParams::with_k(4), 5).unwrap();
        assert_eq!(out.len(), 12);
        for (i, ic) in icons.iter().enumerate() {
            assert_eq!(&out[i * 4], ic);
        }
        assert!(out.iter().skip(1).take(3).any(|o| o != &icons[0]));
        assert_eq!(out, augment_icons(&icons, &AugmentParams::with_k(4), 5).unwrap());
    }

    #[test]
    fn k_one_is_identity() {
        let icons = vec![icon(1), icon(2)];
        assert_eq!(augment_icons(&icons, &AugmentParams::with_k(1), 0).unwrap(), icons);
        assert!(augment_icons(&icons, &AugmentParams::with_k(0), 0).is_err());
    }

    #[test]
    fn identity_transform_and_white_fill() {
        let img = icon(50);
        let id = Affine {
            dx: 0.0,
            dy: 0.0,
            angle_rad: 0.0,
            scale: 1.0,
        };
        assert_eq!(id.apply(&img), img);
        let shifted = Affine { dx: 16.0, ..id }.apply(&img);
        assert!(shifted.pixels().all(|p| *p == Rgb([255; 3])));
    }
}
