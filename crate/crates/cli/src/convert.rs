use std::path::{Path, PathBuf};

use clap::{Args as ClapArgs, ValueEnum};
use iconify::dataset::{from_tensor, list_pngs, read_rgb, to_tensor};
use iconify::tensor::resize_area;
use iconify::training::{Direction, Session};
use log::{info, warn};
use rayon::prelude::*;

use crate::exit::{require_exists, CmdResult, Failure, OutputDir};
use crate::Globals;

#[derive(Clone, Copy, ValueEnum)]
enum Dir {
    #[value(name = "photo2icon")]
    PhotoToIcon,
    #[value(name = "icon2photo")]
    IconToPhoto,
}

#[derive(ClapArgs)]
pub struct Args {
    /// Checkpoint written by `train`.
    #[arg(long, value_name = "CKPT")]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value = "photo2icon")]
    direction: Dir,
    /// Also write the round trip back to the input domain.
    #[arg(long)]
    reconstruct: bool,
    /// Square side inputs are resized to; defaults to the last trained
    /// resolution.
    #[arg(long)]
    size: Option<usize>,
    /// PNG files or directories of PNGs.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

fn suffix(d: Direction) -> &'static str {
    match d {
        Direction::PhotoToIcon => "iconified",
        Direction::IconToPhoto => "photoified",
    }
}

fn convert_one(
    session: &Session,
    input: &Path,
    out: &Path,
    direction: Direction,
    size: usize,
    trained: &[usize],
    with_cycle: bool,
) -> iconify::Result<Vec<PathBuf>> {
    let img = to_tensor::<f32>(&read_rgb(input)?);
    let img = resize_area(&img, size, size)?.reshape([1, 3, size, size])?;
    let (translated, cycled) = session.model.reconstruct(&img, direction, trained)?;
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut written = vec![out.join(format!("{stem}.{}.png", suffix(direction)))];
    if with_cycle {
        written.push(out.join(format!("{stem}.cycled.png")));
    }
    for (t, path) in [translated, cycled].iter().zip(&written) {
        from_tensor(t)?.save(path).map_err(|e| iconify::Error::Io {
            path: path.clone(),
            source: std::io::Error::other(e),
        })?;
    }
    Ok(written)
}

pub fn run(g: &Globals, args: Args) -> CmdResult {
    require_exists([args.checkpoint.as_path()])?;
    require_exists(args.inputs.iter().map(PathBuf::as_path))?;
    let session = Session::load(&args.checkpoint)?;
    let trained = session.trained_resolutions();
    if trained.is_empty() {
        warn!("checkpoint has not completed any training step");
    }
    let size = args
        .size
        .or_else(|| trained.last().copied())
        .or_else(|| session.schedule.resolutions().first().copied())
        .unwrap_or(32);
    if size == 0 || !size.is_multiple_of(4) {
        return Err(Failure::usage(anyhow::anyhow!(
            "--size must be a positive multiple of 4"
        )));
    }
    let mut files = Vec::new();
    for p in &args.inputs {
        if p.is_dir() {
            files.extend(list_pngs(p)?);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(Failure::usage(anyhow::anyhow!("no input images")));
    }
    let direction = match args.direction {
        Dir::PhotoToIcon => Direction::PhotoToIcon,
        Dir::IconToPhoto => Direction::IconToPhoto,
    };
    let out = OutputDir::create(&g.output_dir_or("out"))?;
    let results: Vec<_> = files
        .par_iter()
        .map(|f| convert_one(&session, f, out.path(), direction, size, &trained, args.reconstruct))
        .collect();
    let mut ok = 0;
    for (f, r) in files.iter().zip(results) {
        match r {
            Ok(paths) => {
                ok += 1;
                for p in paths {
                    println!("{}", p.display());
                }
            }
            Err(e) => warn!("skipping {}: {e}", f.display()),
        }
    }
    if ok == 0 {
        return Err(Failure::failed(anyhow::anyhow!("all {} input(s) failed", files.len())));
    }
    info!("converted {ok} of {} image(s) at {size}x{size}", files.len());
    out.keep();
    Ok(())
}
