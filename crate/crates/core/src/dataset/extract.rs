use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};
use rayon::prelude::*;
use serde::Serialize;

use super::annotation::AnnotatedImage;
use super::{CANVAS, CONTENT, MARGIN, WHITE};

pub const DEFAULT_MIN_AREA: usize = 1024;

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectCutout {
    pub image: RgbImage,
    pub label: String,
    /// Object pixel count in the source mask.
    pub area: usize,
    pub source_id: u64,
    pub instance: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SkipReport {
    pub zero_area: usize,
    pub below_min_area: usize,
}

impl SkipReport {
    pub fn total(&self) -> usize {
        self.zero_area + self.below_min_area
    }

    pub fn merge(&mut self, other: SkipReport) {
        self.zero_area += other.zero_area;
        self.below_min_area += other.below_min_area;
    }
}

/// Scales `content` to fit the 232-px box preserving aspect ratio and
/// centers it on a white 256 canvas.
pub(crate) fn place_on_canvas(content: &RgbImage) -> RgbImage {
    let (w, h) = content.dimensions();
    let s = CONTENT as f64 / w.max(h) as f64;
    let nw = ((w as f64 * s).round() as u32).clamp(1, CONTENT);
    let nh = ((h as f64 * s).round() as u32).clamp(1, CONTENT);
    let scaled = if (nw, nh) == (w, h) {
        content.clone()
    } else {
        imageops::resize(content, nw, nh, FilterType::Triangle)
    };
    let mut canvas = RgbImage::from_pixel(CANVAS, CANVAS, WHITE);
    let ox = MARGIN + (CONTENT - nw) / 2;
    let oy = MARGIN + (CONTENT - nh) / 2;
    imageops::replace(&mut canvas, &scaled, ox as i64, oy as i64);
    canvas
}

/// One cutout per instance whose mask covers at least `min_area` pixels.
pub fn extract_objects(src: &AnnotatedImage, min_area: usize) -> (Vec<ObjectCutout>, SkipReport) {
    let results: Vec<Result<ObjectCutout, bool>> = src
        .instances
        .par_iter()
        .enumerate()
        .map(|(idx, inst)| {
            let area = inst.mask.area();
            if area == 0 {
                return Err(true);
            }
            if area < min_area {
                return Err(false);
            }
            let (x0, y0, x1, y1) = inst.mask.bbox().expect("non-empty mask");
            let crop = RgbImage::from_fn(x1 - x0, y1 - y0, |x, y| {
                if inst.mask.get(x0 + x, y0 + y) {
                    *src.image.get_pixel(x0 + x, y0 + y)
                } else {
                    WHITE
                }
            });
            Ok(ObjectCutout {
                image: place_on_canvas(&crop),
                label: inst.label.clone(),
                area,
                source_id: src.id,
                instance: idx,
            })
        })
        .collect();
    let mut report = SkipReport::default();
    let mut cutouts = Vec::new();
    for r in results {
        match r {
            Ok(c) => cutouts.push(c),
            Err(true) => report.zero_area += 1,
            Err(false) => report.below_min_area += 1,
        }
    }
    (cutouts, report)
}

/// Runs [`extract_objects`] over a corpus, keeping corpus order.
pub fn extract_all(corpus: &[AnnotatedImage], min_area: usize) -> (Vec<ObjectCutout>, SkipReport) {
    let mut all = Vec::new();
    let mut report = SkipReport::default();
    for img in corpus {
        let (c, r) = extract_objects(img, min_area);
        all.extend(c);
        report.merge(r);
    }
    (all, report)
}

/// True when every pixel of the outer `width`-px ring is white.
pub fn border_is_white(img: &RgbImage, width: u32) -> bool {
    let (w, h) = img.dimensions();
    img.enumerate_pixels()
        .filter(|(x, y, _)| *x < width || *y < width || *x >= w - width || *y >= h - width)
        .all(|(_, _, p)| *p == Rgb([255, 255, 255]))
}
