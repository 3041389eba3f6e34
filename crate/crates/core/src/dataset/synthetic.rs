//! Two toy domains: filled coloured squares (X) and black outlined circles
//! (Y) on white.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::WHITE;

pub const SYNTHETIC_SIZE: u32 = 32;
pub const SYNTHETIC_COUNT: usize = 64;
pub const SYNTHETIC_SEED: u64 = 0;

pub fn filled_square<R: Rng>(size: u32, rng: &mut R) -> RgbImage {
    let side = rng.random_range(size / 4..=size / 2);
    let x0 = rng.random_range(2..=size - side - 2);
    let y0 = rng.random_range(2..=size - side - 2);
    let color = Rgb([
        rng.random_range(0..200u8),
        rng.random_range(0..200u8),
        rng.random_range(0..200u8),
    ]);
    RgbImage::from_fn(size, size, |x, y| {
        if (x0..x0 + side).contains(&x) && (y0..y0 + side).contains(&y) {
            color
        } else {
            WHITE
        }
    })
}

pub fn outlined_circle<R: Rng>(size: u32, rng: &mut R) -> RgbImage {
    let s = size as f64;
    let r = rng.random_range(s * 0.18..=s * 0.34);
    let cx = rng.random_range(r + 2.0..=s - r - 2.0);
    let cy = rng.random_range(r + 2.0..=s - r - 2.0);
    RgbImage::from_fn(size, size, |x, y| {
        let d = ((x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2)).sqrt();
        if (d - r).abs() <= 1.0 {
            Rgb([0, 0, 0])
        } else {
            WHITE
        }
    })
}

/// `(squares, circles)`, `count` images each.
pub fn synthetic_shapes(count: usize, size: u32, seed: u64) -> (Vec<RgbImage>, Vec<RgbImage>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs = (0..count).map(|_| filled_square(size, &mut rng)).collect();
    let ys = (0..count).map(|_| outlined_circle(size, &mut rng)).collect();
    (xs, ys)
}
