use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use image::RgbImage;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{from_tensor, to_tensor};
use crate::error::{Error, Result};
use crate::nn::Domain;
use crate::tensor::{resize_area, Tensor};

pub const STAGE_RESOLUTIONS: [usize; 4] = [32, 64, 128, 256];
pub const MANIFEST_FILE: &str = "manifest.csv";

/// A normalized image set for one side of the translation.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainDataset {
    pub role: Domain,
    items: Vec<Tensor<f32>>,
    pub seed: u64,
}

impl DomainDataset {
    /// Items must be `3×H×W`, all the same size, with values in [−1, 1].
    pub fn new(role: Domain, items: Vec<Tensor<f32>>, seed: u64) -> Result<Self> {
        if let Some(first) = items.first() {
            if first.rank() != 3 || first.shape()[0] != 3 {
                return Err(Error::shape(
                    "DomainDataset",
                    format!("items must be 3xHxW, got {:?}", first.shape()),
                ));
            }
            for (i, it) in items.iter().enumerate() {
                if it.shape() != first.shape() {
                    return Err(Error::shape(
                        "DomainDataset",
                        format!("item {i} has shape {:?}, item 0 {:?}", it.shape(), first.shape()),
                    ));
                }
                if it.data().iter().any(|v| !(-1.0..=1.0).contains(v)) {
                    return Err(Error::InvalidArgument(format!("item {i} has values outside [-1, 1]")));
                }
            }
        }
        Ok(Self { role, items, seed })
    }

    pub fn from_images(role: Domain, images: &[RgbImage], seed: u64) -> Result<Self> {
        Self::new(role, images.par_iter().map(to_tensor).collect(), seed)
    }

    pub fn items(&self) -> &[Tensor<f32>] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn resolution(&self) -> Option<usize> {
        self.items.first().map(|t| t.shape()[1])
    }

    pub fn to_images(&self) -> Result<Vec<RgbImage>> {
        self.items.iter().map(from_tensor).collect()
    }
}

/// Area-resizes every item to `resolution × resolution`.
pub fn stage_resize(set: &DomainDataset, resolution: usize) -> Result<DomainDataset> {
    if !STAGE_RESOLUTIONS.contains(&resolution) {
        return Err(Error::InvalidArgument(format!(
            "unsupported stage resolution {resolution} (expected one of {STAGE_RESOLUTIONS:?})"
        )));
    }
    let items = set
        .items
        .par_iter()
        .map(|t| resize_area(t, resolution, resolution))
        .collect::<Result<Vec<_>>>()?;
    Ok(DomainDataset {
        role: set.role,
        items,
        seed: set.seed,
    })
}

/// Draws `batch` items uniformly with replacement from each domain,
/// independently (all X draws, then all Y draws).
pub fn sample_unpaired_batch<R: Rng>(
    x_set: &DomainDataset,
    y_set: &DomainDataset,
    batch: usize,
    rng: &mut R,
) -> Result<(Tensor<f32>, Tensor<f32>)> {
    for set in [x_set, y_set] {
        if set.is_empty() {
            return Err(Error::EmptyDomain(set.role.tag().to_owned()));
        }
    }
    if batch == 0 {
        return Err(Error::InvalidArgument("batch size must be >= 1".into()));
    }
    let mut draw = |set: &DomainDataset| -> Result<Tensor<f32>> {
        let picks: Vec<&Tensor<f32>> = (0..batch).map(|_| &set.items[rng.random_range(0..set.len())]).collect();
        Tensor::stack_batch(&picks)
    };
    let x = draw(x_set)?;
    let y = draw(y_set)?;
    Ok((x, y))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub label: String,
    pub source_id: String,
}

/// Writes numbered PNGs (`000000.png`, …) and `manifest.csv` into `dir`.
pub fn write_domain_dir(dir: &Path, images: &[RgbImage], labels: &[(String, String)]) -> Result<Vec<ManifestEntry>> {
    if images.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} images but {} manifest labels",
            images.len(),
            labels.len()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let entries: Vec<ManifestEntry> = labels
        .iter()
        .enumerate()
        .map(|(i, (label, source))| ManifestEntry {
            file: format!("{i:06}.png"),
            label: label.clone(),
            source_id: source.clone(),
        })
        .collect();
    images.par_iter().zip(&entries).try_for_each(|(img, e)| {
        let path = dir.join(&e.file);
        img.save(&path).map_err(|err| Error::image(path, err))
    })?;
    let mut w = csv::Writer::from_path(dir.join(MANIFEST_FILE))?;
    for e in &entries {
        w.serialize(e)?;
    }
    w.flush().map_err(|e| Error::io(dir.join(MANIFEST_FILE), e))?;
    Ok(entries)
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let mut r = csv::Reader::from_path(dir.join(MANIFEST_FILE))?;
    r.deserialize().map(|e| e.map_err(Error::from)).collect()
}

/// Manual subset selection: optional class label, optional allowlist and a
/// denylist. List entries match a manifest entry's file name or source id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SubsetFilter {
    pub label: Option<String>,
    pub allow: Option<BTreeSet<String>>,
    pub deny: BTreeSet<String>,
}

impl SubsetFilter {
    /// Reads a list file: one entry per line, blank lines and `#` comments
    /// ignored.
    pub fn read_list(path: &Path) -> Result<BTreeSet<String>> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(str::to_owned)
            .collect())
    }

    pub fn accepts(&self, e: &ManifestEntry) -> bool {
        let listed = |set: &BTreeSet<String>| set.contains(&e.file) || set.contains(&e.source_id);
        self.label.as_ref().is_none_or(|l| *l == e.label)
            && self.allow.as_ref().is_none_or(listed)
            && !listed(&self.deny)
    }
}

/// Loads a prepared domain directory, keeping manifest order.
pub fn load_domain_dir(
    dir: &Path,
    role: Domain,
    filter: &SubsetFilter,
    seed: u64,
) -> Result<(DomainDataset, Vec<ManifestEntry>)> {
    let entries: Vec<ManifestEntry> = read_manifest(dir)?.into_iter().filter(|e| filter.accepts(e)).collect();
    let images = entries
        .par_iter()
        .map(|e| super::read_rgb(&dir.join(&e.file)))
        .collect::<Result<Vec<_>>>()?;
    Ok((DomainDataset::from_images(role, &images, seed)?, entries))
}
