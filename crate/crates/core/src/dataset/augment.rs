//! Flips and quarter-turn rotations applied consistently to rasters and coordinates.
//!
//! Coordinates use the continuous convention: a flip maps `x` to `W - x`, so a cell
//! center `j + 0.5` lands on the center of cell `W - 1 - j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Point};
use crate::scenario::{BuildingLayout, Scenario, Source};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Augmentation {
    #[default]
    Identity,
    FlipH,
    FlipV,
    /// Counterclockwise quarter turn.
    Rot90,
    Rot180,
    Rot270,
}

impl Augmentation {
    pub const ALL: [Augmentation; 6] = [
        Augmentation::Identity,
        Augmentation::FlipH,
        Augmentation::FlipV,
        Augmentation::Rot90,
        Augmentation::Rot180,
        Augmentation::Rot270,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Augmentation::Identity => "identity",
            Augmentation::FlipH => "flip_h",
            Augmentation::FlipV => "flip_v",
            Augmentation::Rot90 => "rot90",
            Augmentation::Rot180 => "rot180",
            Augmentation::Rot270 => "rot270",
        }
    }

    pub fn inverse(self) -> Self {
        match self {
            Augmentation::Rot90 => Augmentation::Rot270,
            Augmentation::Rot270 => Augmentation::Rot90,
            other => other,
        }
    }

    fn is_quarter_turn(self) -> bool {
        matches!(self, Augmentation::Rot90 | Augmentation::Rot270)
    }

    fn check(self, width: usize, height: usize) -> Result<()> {
        if self.is_quarter_turn() && width != height {
            return Err(Error::invalid(format!(
                "{} needs a square grid, got {width}x{height}",
                self.name()
            )));
        }
        Ok(())
    }

    /// Maps a point of a `width x height` map.
    pub fn apply_point(self, p: Point, width: usize, height: usize) -> Point {
        let (w, h) = (width as f64, height as f64);
        match self {
            Augmentation::Identity => p,
            Augmentation::FlipH => Point::new(w - p.x, p.y),
            Augmentation::FlipV => Point::new(p.x, h - p.y),
            Augmentation::Rot90 => Point::new(p.y, w - p.x),
            Augmentation::Rot180 => Point::new(w - p.x, h - p.y),
            Augmentation::Rot270 => Point::new(h - p.y, p.x),
        }
    }

    /// Transforms a raster. Quarter turns of non-square grids are rejected.
    pub fn apply_grid<T: Clone>(self, grid: &Grid<T>) -> Result<Grid<T>> {
        let (w, h) = grid.dims();
        self.check(w, h)?;
        let src = |row: usize, col: usize| grid.get(row, col).clone();
        Ok(match self {
            Augmentation::Identity => grid.clone(),
            Augmentation::FlipH => Grid::from_fn(w, h, |r, c| src(r, w - 1 - c)),
            Augmentation::FlipV => Grid::from_fn(w, h, |r, c| src(h - 1 - r, c)),
            Augmentation::Rot90 => Grid::from_fn(h, w, |r, c| src(c, w - 1 - r)),
            Augmentation::Rot180 => Grid::from_fn(w, h, |r, c| src(h - 1 - r, w - 1 - c)),
            Augmentation::Rot270 => Grid::from_fn(h, w, |r, c| src(h - 1 - c, r)),
        })
    }
}

impl std::fmt::Display for Augmentation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Applies `aug` to a raster and to points expressed in its coordinates.
pub fn augment<T: Clone>(grid: &Grid<T>, points: &[Point], aug: Augmentation) -> Result<(Grid<T>, Vec<Point>)> {
    let (w, h) = grid.dims();
    let out = aug.apply_grid(grid)?;
    Ok((out, points.iter().map(|&p| aug.apply_point(p, w, h)).collect()))
}

/// The scenario seen through `aug`: layout and sources transformed, powers and seed kept.
pub fn augment_scenario(scenario: &Scenario, aug: Augmentation) -> Result<Scenario> {
    let (w, h) = (scenario.width(), scenario.height());
    let layout = BuildingLayout::new(aug.apply_grid(scenario.layout.cells())?)?;
    let sources = scenario
        .sources
        .iter()
        .map(|s| Source {
            position: aug.apply_point(s.position, w, h),
            ..*s
        })
        .collect();
    // isometry: spacing was validated on the original
    Scenario::new(scenario.id.clone(), layout, sources, scenario.seed, 0.0)
}
