use std::path::PathBuf;

use clap::Args as ClapArgs;
use iconify::dataset::read_rgb;
use iconify::grid::render_grid;
use log::info;

use crate::exit::{require_exists, CmdResult, Failure, OutputDir};
use crate::Globals;

#[derive(ClapArgs)]
pub struct Args {
    /// One sheet row: comma-separated image paths, e.g. original,translated,cycled.
    #[arg(long = "row", value_name = "PNG,...")]
    rows: Vec<String>,
    /// Sheet file name inside the output directory.
    #[arg(long, default_value = "grid.png")]
    out: PathBuf,
}

pub fn run(g: &Globals, args: Args) -> CmdResult {
    let paths: Vec<Vec<PathBuf>> = args
        .rows
        .iter()
        .map(|r| r.split(',').filter(|s| !s.is_empty()).map(PathBuf::from).collect())
        .collect();
    if paths.iter().all(Vec::is_empty) {
        return Err(Failure::usage(anyhow::anyhow!(
            "grid needs at least one --row with an image"
        )));
    }
    require_exists(paths.iter().flatten().map(PathBuf::as_path))?;
    let rows = paths
        .iter()
        .map(|r| r.iter().map(|p| read_rgb(p)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    let sheet = render_grid(&rows).map_err(Failure::usage)?;
    let out = OutputDir::create(&g.output_dir_or("out"))?;
    let path = out.path().join(&args.out);
    sheet
        .save(&path)
        .map_err(|e| Failure::failed(anyhow::anyhow!("writing {}: {e}", path.display())))?;
    info!("wrote {} ({}x{})", path.display(), sheet.width(), sheet.height());
    println!("{}", path.display());
    out.keep();
    Ok(())
}
