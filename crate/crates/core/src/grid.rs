//! Contact sheets: rows of equally sized images tiled on white.

use image::RgbImage;

use crate::dataset::WHITE;
use crate::error::{Error, Result};

/// Gutter between tiles and border around the sheet, in pixels.
pub const GRID_GAP: u32 = 2;

/// Sheet size for `rows × cols` tiles of `w × h`: tiles plus `cols - 1`
/// gutters plus a border on each side.
pub fn grid_size(rows: u32, cols: u32, w: u32, h: u32) -> (u32, u32) {
    let span = |n: u32, s: u32| n * s + n.saturating_sub(1) * GRID_GAP + 2 * GRID_GAP;
    (span(cols, w), span(rows, h))
}

/// Tiles `rows` left to right, top to bottom. Rows may have different
/// lengths; short rows leave white cells.
pub fn render_grid(rows: &[Vec<RgbImage>]) -> Result<RgbImage> {
    let first = rows
        .iter()
        .flatten()
        .next()
        .ok_or_else(|| Error::InvalidArgument("grid needs at least one image".into()))?;
    let (w, h) = first.dimensions();
    if let Some(bad) = rows.iter().flatten().find(|im| im.dimensions() != (w, h)) {
        return Err(Error::Shape {
            op: "render_grid",
            detail: format!(
                "images must share one size: {w}x{h} vs {}x{}",
                bad.width(),
                bad.height()
            ),
        });
    }
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0) as u32;
    let (sw, sh) = grid_size(rows.len() as u32, cols, w, h);
    let mut sheet = RgbImage::from_pixel(sw, sh, WHITE);
    for (r, row) in rows.iter().enumerate() {
        for (c, im) in row.iter().enumerate() {
            let x0 = GRID_GAP + c as u32 * (w + GRID_GAP);
            let y0 = GRID_GAP + r as u32 * (h + GRID_GAP);
            image::imageops::replace(&mut sheet, im, x0.into(), y0.into());
        }
    }
    Ok(sheet)
}
