use std::fs;
use std::path::{Path, PathBuf};

use clap::Args as ClapArgs;
use iconify::dataset::{
    augment_icons, extract_all, list_pngs, load_coco, prepare_logos, read_rgb, select_random, write_domain_dir,
    AugmentParams, DEFAULT_MIN_AREA,
};
use image::RgbImage;
use log::info;
use serde::Serialize;

use crate::exit::{require_exists, CmdResult, Failure, OutputDir};
use crate::Globals;

pub const SUMMARY_FILE: &str = "summary.json";

#[derive(ClapArgs)]
pub struct Args {
    /// COCO-style instance annotations; objects become the photo domain.
    #[arg(long, value_name = "JSON", requires = "images")]
    coco: Option<PathBuf>,
    /// Directory holding the annotated images.
    #[arg(long, value_name = "DIR", requires = "coco")]
    images: Option<PathBuf>,
    /// Objects with fewer mask pixels are dropped.
    #[arg(long, default_value_t = DEFAULT_MIN_AREA)]
    min_area: usize,
    /// Keep only objects of this category.
    #[arg(long)]
    label: Option<String>,
    /// Directory of icon PNGs; augmented copies become the icon domain.
    #[arg(long, value_name = "DIR")]
    icons: Option<PathBuf>,
    /// Images per icon, the original included.
    #[arg(long, default_value_t = 10)]
    augment: usize,
    /// Directory of square logo PNGs.
    #[arg(long, value_name = "DIR")]
    logos: Option<PathBuf>,
    /// Randomly keep this many logos.
    #[arg(long, value_name = "N")]
    select: Option<usize>,
}

#[derive(Default, Serialize)]
struct Summary {
    #[serde(skip_serializing_if = "Option::is_none")]
    photos: Option<PhotoSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    icons: Option<Counts>,
    #[serde(skip_serializing_if = "Option::is_none")]
    logos: Option<Counts>,
}

#[derive(Serialize)]
struct PhotoSummary {
    images: usize,
    cutouts: usize,
    skipped_zero_area: usize,
    skipped_below_min_area: usize,
    skipped_other_label: usize,
}

#[derive(Serialize)]
struct Counts {
    inputs: usize,
    outputs: usize,
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn read_dir_images(dir: &Path) -> CmdResult<(Vec<String>, Vec<RgbImage>)> {
    let files = list_pngs(dir)?;
    if files.is_empty() {
        return Err(Failure::usage(anyhow::anyhow!("no PNG files in {}", dir.display())));
    }
    let images = files.iter().map(|p| read_rgb(p)).collect::<Result<Vec<_>, _>>()?;
    Ok((files.iter().map(|p| stem(p)).collect(), images))
}

pub fn run(g: &Globals, args: Args) -> CmdResult {
    if args.coco.is_none() && args.icons.is_none() && args.logos.is_none() {
        return Err(Failure::usage(anyhow::anyhow!(
            "nothing to prepare: give --coco, --icons or --logos"
        )));
    }
    let inputs = [&args.coco, &args.images, &args.icons, &args.logos];
    require_exists(inputs.into_iter().flatten().map(PathBuf::as_path))?;
    AugmentParams::with_k(args.augment).validate()?;
    let seed = g.seed.unwrap_or(0);
    let out = OutputDir::create(&g.output_dir_or("prepared"))?;
    let mut summary = Summary::default();

    if let (Some(manifest), Some(root)) = (&args.coco, &args.images) {
        let corpus = load_coco(manifest, root)?;
        let (cutouts, skipped) = extract_all(&corpus, args.min_area);
        let total = cutouts.len();
        let kept: Vec<_> = cutouts
            .into_iter()
            .filter(|c| args.label.as_ref().is_none_or(|l| &c.label == l))
            .collect();
        let images: Vec<_> = kept.iter().map(|c| c.image.clone()).collect();
        let labels: Vec<_> = kept
            .iter()
            .map(|c| (c.label.clone(), format!("{}/{}", c.source_id, c.instance)))
            .collect();
        write_domain_dir(&out.path().join("photos"), &images, &labels)?;
        println!(
            "photos: {} cutouts from {} images (skipped {} below min area, {} empty)",
            kept.len(),
            corpus.len(),
            skipped.below_min_area,
            skipped.zero_area
        );
        summary.photos = Some(PhotoSummary {
            images: corpus.len(),
            cutouts: kept.len(),
            skipped_zero_area: skipped.zero_area,
            skipped_below_min_area: skipped.below_min_area,
            skipped_other_label: total - kept.len(),
        });
    }

    if let Some(dir) = &args.icons {
        let (stems, icons) = read_dir_images(dir)?;
        let augmented = augment_icons(&icons, &AugmentParams::with_k(args.augment), seed)?;
        let labels: Vec<_> = (0..augmented.len())
            .map(|i| ("icon".to_string(), stems[i / args.augment].clone()))
            .collect();
        write_domain_dir(&out.path().join("icons"), &augmented, &labels)?;
        println!("icons: {} -> {}", icons.len(), augmented.len());
        summary.icons = Some(Counts {
            inputs: icons.len(),
            outputs: augmented.len(),
        });
    }

    if let Some(dir) = &args.logos {
        let (mut stems, mut logos) = read_dir_images(dir)?;
        if let Some(n) = args.select {
            let picked = select_random(logos.len(), n, seed)?;
            stems = picked.iter().map(|&i| stems[i].clone()).collect();
            logos = picked.iter().map(|&i| logos[i].clone()).collect();
        }
        let inputs = logos.len();
        let framed = prepare_logos(&logos)?;
        let labels: Vec<_> = stems.into_iter().map(|s| ("logo".to_string(), s)).collect();
        write_domain_dir(&out.path().join("logos"), &framed, &labels)?;
        println!("logos: {inputs} -> {}", framed.len());
        summary.logos = Some(Counts {
            inputs,
            outputs: framed.len(),
        });
    }

    let path = out.path().join(SUMMARY_FILE);
    let json = serde_json::to_string_pretty(&summary).map_err(Failure::failed)?;
    fs::write(&path, json + "\n").map_err(|e| Failure::failed(anyhow::anyhow!("writing {}: {e}", path.display())))?;
    info!("wrote {}", path.display());
    out.keep();
    Ok(())
}
