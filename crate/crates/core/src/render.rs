//! Static RGB renders of maps with building overlays and position markers.

use crate::error::{Error, Result};
use crate::grid::{Grid, Point};
use crate::scenario::BuildingLayout;

pub const BUILDING: [u8; 3] = [0, 0, 255];
pub const TRUTH: [u8; 3] = [0, 255, 0];
pub const PREDICTION: [u8; 3] = [255, 0, 0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderOptions {
    /// Output pixels per map cell.
    pub scale: usize,
    /// Cross half-length in output pixels.
    pub arm: usize,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { scale: 4, arm: 4 }
    }
}

/// Draws a `+` centered on `p`; pixels falling outside the image are skipped.
fn cross(img: &mut Grid<[u8; 3]>, p: Point, scale: usize, arm: usize, color: [u8; 3]) {
    let cx = (p.x * scale as f64).floor() as isize;
    let cy = (p.y * scale as f64).floor() as isize;
    let arm = arm as isize;
    let (w, h) = (img.width() as isize, img.height() as isize);
    for d in -arm..=arm {
        for (x, y) in [(cx + d, cy), (cx, cy + d)] {
            if (0..w).contains(&x) && (0..h).contains(&y) {
                img.set(y as usize, x as usize, color);
            }
        }
    }
}

/// Grayscale map, buildings in blue, truths as green and predictions as red crosses.
pub fn render(
    map: &Grid<u8>,
    layout: Option<&BuildingLayout>,
    truths: &[Point],
    predictions: &[Point],
    opts: RenderOptions,
) -> Result<Grid<[u8; 3]>> {
    if opts.scale == 0 {
        return Err(Error::invalid("scale must be at least 1"));
    }
    if let Some(l) = layout {
        if l.cells().dims() != map.dims() {
            return Err(Error::invalid(format!(
                "layout is {}x{} but the map is {}x{}",
                l.width(),
                l.height(),
                map.width(),
                map.height()
            )));
        }
    }
    let s = opts.scale;
    let mut img = Grid::from_fn(map.width() * s, map.height() * s, |r, c| {
        let (row, col) = (r / s, c / s);
        if layout.is_some_and(|l| l.is_building(row, col)) {
            BUILDING
        } else {
            let v = *map.get(row, col);
            [v, v, v]
        }
    });
    for &p in truths {
        cross(&mut img, p, s, opts.arm, TRUTH);
    }
    for &p in predictions {
        cross(&mut img, p, s, opts.arm, PREDICTION);
    }
    Ok(img)
}
