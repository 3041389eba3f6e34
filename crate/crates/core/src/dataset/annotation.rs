//! COCO-style instance annotations: JSON manifest, polygon and run-length
//! mask decoding.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use image::RgbImage;
use serde::Deserialize;

use crate::error::{Error, Result};

/// Binary instance mask, row-major, `true` for object pixels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width as usize * height as usize {
            return Err(Error::Annotation(format!(
                "mask of {width}x{height} needs {} values, got {}",
                width as usize * height as usize,
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, f: impl Fn(u32, u32) -> bool) -> Self {
        let bits = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self { width, height, bits }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn area(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Inclusive-exclusive bounding box `(x0, y0, x1, y1)`; `None` if empty.
    pub fn bbox(&self) -> Option<(u32, u32, u32, u32)> {
        let mut bb: Option<(u32, u32, u32, u32)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    bb = Some(match bb {
                        None => (x, y, x + 1, y + 1),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x + 1), y1.max(y + 1)),
                    });
                }
            }
        }
        bb
    }

    fn union(&mut self, other: &Mask) {
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }
}

/// Rasterizes one polygon (flat `[x0, y0, x1, y1, ...]`): a pixel belongs to
/// the mask when its center lies inside under the even-odd rule.
pub fn rasterize_polygon(coords: &[f64], width: u32, height: u32) -> Result<Mask> {
    if coords.len() < 6 || !coords.len().is_multiple_of(2) {
        return Err(Error::Annotation(format!(
            "polygon needs an even number (>= 6) of coordinates, got {}",
            coords.len()
        )));
    }
    let pts: Vec<(f64, f64)> = coords.chunks_exact(2).map(|c| (c[0], c[1])).collect();
    let mut mask = Mask::empty(width, height);
    let mut xs = Vec::new();
    for y in 0..height {
        let cy = y as f64 + 0.5;
        xs.clear();
        for i in 0..pts.len() {
            let (ax, ay) = pts[i];
            let (bx, by) = pts[(i + 1) % pts.len()];
            if (ay <= cy) != (by <= cy) {
                xs.push(ax + (cy - ay) * (bx - ax) / (by - ay));
            }
        }
        xs.sort_by(f64::total_cmp);
        for span in xs.chunks_exact(2) {
            // Pixel centers x + 0.5 in [span0, span1).
            let start = (span[0] - 0.5).ceil().max(0.0);
            let end = (span[1] - 0.5).ceil().min(width as f64);
            let mut x = start;
            while x < end {
                mask.set(x as u32, y, true);
                x += 1.0;
            }
        }
    }
    Ok(mask)
}

/// Decodes run lengths in column-major order, starting with a background run.
pub fn decode_rle(counts: &[u32], width: u32, height: u32) -> Result<Mask> {
    let total = width as usize * height as usize;
    let sum: usize = counts.iter().map(|c| *c as usize).sum();
    if sum != total {
        return Err(Error::Annotation(format!(
            "run lengths sum to {sum}, mask has {total} pixels"
        )));
    }
    let mut mask = Mask::empty(width, height);
    let mut pos = 0usize;
    for (i, &c) in counts.iter().enumerate() {
        if i % 2 == 1 {
            for p in pos..pos + c as usize {
                let x = (p / height as usize) as u32;
                let y = (p % height as usize) as u32;
                mask.set(x, y, true);
            }
        }
        pos += c as usize;
    }
    Ok(mask)
}

/// Decodes the compact string form of run lengths (6-bit groups offset by 48,
/// continuation bit 0x20, sign bit 0x10, counts from the fourth on stored as
/// deltas from the count two positions back).
pub fn decode_rle_string(s: &str) -> Result<Vec<u32>> {
    let bytes = s.as_bytes();
    let mut counts: Vec<i64> = Vec::new();
    let mut p = 0;
    while p < bytes.len() {
        let mut x: i64 = 0;
        let mut k = 0;
        loop {
            let b = *bytes
                .get(p)
                .ok_or_else(|| Error::Annotation("truncated compressed run-length string".into()))?;
            if !(48..48 + 64).contains(&b) {
                return Err(Error::Annotation(format!(
                    "invalid run-length character {:?}",
                    b as char
                )));
            }
            let c = (b - 48) as i64;
            x |= (c & 0x1f) << (5 * k);
            let more = c & 0x20 != 0;
            p += 1;
            k += 1;
            if !more {
                if c & 0x10 != 0 {
                    x |= -1i64 << (5 * k);
                }
                break;
            }
        }
        if counts.len() > 2 {
            x += counts[counts.len() - 2];
        }
        counts.push(x);
    }
    counts
        .into_iter()
        .map(|c| u32::try_from(c).map_err(|_| Error::Annotation(format!("negative run length {c}"))))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub label: String,
    pub mask: Mask,
}

#[derive(Clone, Debug)]
pub struct AnnotatedImage {
    pub id: u64,
    pub file_name: String,
    pub image: RgbImage,
    pub instances: Vec<Instance>,
}

impl AnnotatedImage {
    pub fn new(id: u64, file_name: impl Into<String>, image: RgbImage, instances: Vec<Instance>) -> Result<Self> {
        for (i, inst) in instances.iter().enumerate() {
            if (inst.mask.width(), inst.mask.height()) != image.dimensions() {
                return Err(Error::Annotation(format!(
                    "instance {i} mask is {}x{}, image is {}x{}",
                    inst.mask.width(),
                    inst.mask.height(),
                    image.width(),
                    image.height()
                )));
            }
        }
        Ok(Self {
            id,
            file_name: file_name.into(),
            image,
            instances,
        })
    }
}

#[derive(Debug, Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    categories: Vec<CocoCategory>,
    annotations: Vec<CocoAnnotation>,
}

#[derive(Debug, Deserialize)]
struct CocoImage {
    id: u64,
    file_name: String,
    width: u32,
    height: u32,
}

#[derive(Debug, Deserialize)]
struct CocoCategory {
    id: u64,
    name: String,
}

#[derive(Debug, Deserialize)]
struct CocoAnnotation {
    image_id: u64,
    category_id: u64,
    segmentation: Segmentation,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Segmentation {
    Polygons(Vec<Vec<f64>>),
    Rle { counts: RleCounts, size: [u32; 2] },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RleCounts {
    Plain(Vec<u32>),
    Compact(String),
}

fn decode_segmentation(seg: &Segmentation, width: u32, height: u32) -> Result<Mask> {
    match seg {
        Segmentation::Polygons(polys) => {
            let mut mask = Mask::empty(width, height);
            for poly in polys {
                mask.union(&rasterize_polygon(poly, width, height)?);
            }
            Ok(mask)
        }
        Segmentation::Rle { counts, size } => {
            if *size != [height, width] {
                return Err(Error::Annotation(format!(
                    "run-length size {size:?} does not match image {height}x{width}"
                )));
            }
            let counts = match counts {
                RleCounts::Plain(c) => c.clone(),
                RleCounts::Compact(s) => decode_rle_string(s)?,
            };
            decode_rle(&counts, width, height)
        }
    }
}

/// Loads a COCO-style manifest; image files are resolved against
/// `image_root`. Images come back in manifest order, instances in annotation
/// order.
pub fn load_coco(manifest: &Path, image_root: &Path) -> Result<Vec<AnnotatedImage>> {
    let text = fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let coco: CocoFile = serde_json::from_str(&text)?;
    let categories: HashMap<u64, &str> = coco.categories.iter().map(|c| (c.id, c.name.as_str())).collect();
    let mut by_image: HashMap<u64, Vec<&CocoAnnotation>> = HashMap::new();
    for ann in &coco.annotations {
        by_image.entry(ann.image_id).or_default().push(ann);
    }
    let mut out = Vec::with_capacity(coco.images.len());
    for img in &coco.images {
        let path = image_root.join(&img.file_name);
        let pixels = image::open(&path).map_err(|e| Error::image(&path, e))?.to_rgb8();
        if pixels.dimensions() != (img.width, img.height) {
            return Err(Error::Annotation(format!(
                "{} is {}x{}, manifest says {}x{}",
                img.file_name,
                pixels.width(),
                pixels.height(),
                img.width,
                img.height
            )));
        }
        let mut instances = Vec::new();
        for ann in by_image.get(&img.id).map(Vec::as_slice).unwrap_or_default() {
            let label = categories
                .get(&ann.category_id)
                .ok_or_else(|| Error::Annotation(format!("unknown category id {}", ann.category_id)))?;
            instances.push(Instance {
                label: (*label).to_owned(),
                mask: decode_segmentation(&ann.segmentation, img.width, img.height)?,
            });
        }
        out.push(AnnotatedImage::new(img.id, img.file_name.clone(), pixels, instances)?);
    }
    Ok(out)
}
