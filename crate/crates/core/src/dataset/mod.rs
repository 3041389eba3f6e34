//! Data preparation: object cutouts from instance masks, icon augmentation,
//! logo framing, prepared-domain directories and unpaired sampling.

pub mod annotation;
mod augment;
mod domain;
mod extract;
mod logos;
pub mod synthetic;

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

pub use annotation::{load_coco, AnnotatedImage, Instance, Mask};
pub use augment::{augment_icons, Affine, AugmentParams};
pub use domain::{
    load_domain_dir, read_manifest, sample_unpaired_batch, stage_resize, write_domain_dir, DomainDataset,
    ManifestEntry, SubsetFilter, MANIFEST_FILE, STAGE_RESOLUTIONS,
};
pub use extract::{border_is_white, extract_all, extract_objects, ObjectCutout, SkipReport, DEFAULT_MIN_AREA};
pub use logos::{prepare_logos, select_random};
pub use synthetic::{synthetic_shapes, SYNTHETIC_COUNT, SYNTHETIC_SEED, SYNTHETIC_SIZE};

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub const CANVAS: u32 = 256;
pub const MARGIN: u32 = 12;
pub const CONTENT: u32 = CANVAS - 2 * MARGIN;
pub const WHITE: Rgb<u8> = Rgb([255, 255, 255]);

/// `p / 127.5 − 1`, laid out `3×H×W`.
pub fn to_tensor<T: Element>(img: &RgbImage) -> Tensor<T> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    Tensor::from_fn([3, h, w], |i| {
        let (c, rest) = (i / (h * w), i % (h * w));
        let p = img.get_pixel((rest % w) as u32, (rest / w) as u32).0[c];
        T::of(p as f64 / 127.5 - 1.0)
    })
}

/// Maps [−1, 1] back to 8-bit with rounding and clamping. Accepts `3×H×W` or
/// `1×3×H×W`.
pub fn from_tensor<T: Element>(t: &Tensor<T>) -> Result<RgbImage> {
    let (h, w) = match t.shape() {
        [3, h, w] | [1, 3, h, w] => (*h, *w),
        s => return Err(Error::shape("from_tensor", format!("expected 3xHxW image, got {s:?}"))),
    };
    let d = t.data();
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let at = |c: usize| {
            let v = (d[c * h * w + y as usize * w + x as usize].as_f64() + 1.0) * 127.5;
            v.round().clamp(0.0, 255.0) as u8
        };
        Rgb([at(0), at(1), at(2)])
    }))
}

pub fn read_rgb(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path).map_err(|e| Error::image(path, e))?.to_rgb8())
}

/// `*.png` files directly inside `dir`, sorted by name.
pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_round_trip_is_exact() {
        let img = RgbImage::from_fn(256, 1, |x, _| Rgb([x as u8, 255 - x as u8, (x as u8).wrapping_mul(7)]));
        let t = to_tensor::<f32>(&img);
        assert!(t.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(from_tensor(&t).unwrap(), img);
        assert_eq!(from_tensor(&to_tensor::<f64>(&img)).unwrap(), img);
        let clamped = from_tensor(&Tensor::<f32>::full([3, 1, 1], 1.5)).unwrap();
        assert_eq!(*clamped.get_pixel(0, 0), WHITE);
    }
}
