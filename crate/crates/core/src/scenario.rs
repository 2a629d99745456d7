//! The simulated world: rasterized building layouts and transmitter placements.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Point};
use crate::seed;

/// Transmit power used when none is given, in dBm.
pub const DEFAULT_TX_POWER_DBM: f64 = 24.0;
/// Omnidirectional antenna gain, in dBi.
pub const DEFAULT_GAIN_DBI: f64 = 10.0;
/// Default minimum pairwise distance between generated sources, in meters.
pub const DEFAULT_MIN_SPACING: f64 = 5.0;
pub const MAX_SOURCES: usize = 16;
pub const MIN_SIDE: usize = 8;

const LAYOUT_RETRIES: usize = 1000;
const PLACEMENT_ATTEMPTS: usize = 10_000;
const MIN_FREE_FRACTION: f64 = 0.3;

/// Binary occupancy raster: 1 = building interior, 0 = free space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildingLayout {
    cells: Grid<u8>,
}

impl BuildingLayout {
    pub fn new(cells: Grid<u8>) -> Result<Self> {
        if cells.width() < MIN_SIDE || cells.height() < MIN_SIDE {
            return Err(Error::invalid(format!(
                "layout must be at least {MIN_SIDE}x{MIN_SIDE}, got {}x{}",
                cells.width(),
                cells.height()
            )));
        }
        if let Some(v) = cells.as_slice().iter().find(|&&v| v > 1) {
            return Err(Error::invalid(format!(
                "layout cells must be 0 or 1, found {v}"
            )));
        }
        Ok(BuildingLayout { cells })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(Grid::filled(width, height, 0))
    }

    pub fn width(&self) -> usize {
        self.cells.width()
    }

    pub fn height(&self) -> usize {
        self.cells.height()
    }

    pub fn cells(&self) -> &Grid<u8> {
        &self.cells
    }

    #[inline]
    pub fn is_building(&self, row: usize, col: usize) -> bool {
        *self.cells.get(row, col) == 1
    }

    /// Whether `p` is inside the map and on a free cell.
    pub fn is_free_point(&self, p: &Point) -> bool {
        p.cell(self.width(), self.height())
            .is_some_and(|(r, c)| !self.is_building(r, c))
    }

    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        self.cells
            .indexed()
            .filter(|(_, _, &v)| v == 0)
            .map(|(r, c, _)| (r, c))
            .collect()
    }

    pub fn free_fraction(&self) -> f64 {
        let free = self.cells.as_slice().iter().filter(|&&v| v == 0).count();
        free as f64 / self.cells.as_slice().len() as f64
    }

    /// The layout as an 8-bit image (building = 255) for PGM export.
    pub fn to_image(&self) -> Grid<u8> {
        self.cells.map(|&v| if v == 1 { 255 } else { 0 })
    }

    /// Inverse of [`Self::to_image`]; any nonzero pixel is a building.
    pub fn from_image(image: &Grid<u8>) -> Result<Self> {
        Self::new(image.map(|&v| u8::from(v != 0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Source {
    #[serde(flatten)]
    pub position: Point,
    #[serde(rename = "tx_power_dbm")]
    pub tx_power: f64,
    #[serde(rename = "gain_dbi")]
    pub gain: f64,
}

impl Source {
    pub fn at(position: Point) -> Self {
        Source {
            position,
            tx_power: DEFAULT_TX_POWER_DBM,
            gain: DEFAULT_GAIN_DBI,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub layout: BuildingLayout,
    pub sources: Vec<Source>,
    pub seed: u64,
}

impl Scenario {
    /// Checks the source-count, bounds, free-cell and spacing invariants.
    pub fn new(
        id: impl Into<String>,
        layout: BuildingLayout,
        sources: Vec<Source>,
        seed: u64,
        min_spacing: f64,
    ) -> Result<Self> {
        if sources.is_empty() || sources.len() > MAX_SOURCES {
            return Err(Error::invalid(format!(
                "scenario needs 1..={MAX_SOURCES} sources, got {}",
                sources.len()
            )));
        }
        for (k, s) in sources.iter().enumerate() {
            if !layout.is_free_point(&s.position) {
                return Err(Error::invalid(format!(
                    "source {k} at ({}, {}) is outside the map or inside a building",
                    s.position.x, s.position.y
                )));
            }
        }
        for (a, b) in pairs(sources.len()) {
            let d = sources[a].position.distance(&sources[b].position);
            if d < min_spacing {
                return Err(Error::invalid(format!(
                    "sources {a} and {b} are {d:.3} m apart, below {min_spacing} m"
                )));
            }
        }
        Ok(Scenario {
            id: id.into(),
            layout,
            sources,
            seed,
        })
    }

    pub fn positions(&self) -> Vec<Point> {
        self.sources.iter().map(|s| s.position).collect()
    }

    pub fn width(&self) -> usize {
        self.layout.width()
    }

    pub fn height(&self) -> usize {
        self.layout.height()
    }
}

fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |a| (a + 1..n).map(move |b| (a, b)))
}

/// Synthesizes a layout of axis-aligned rectangular buildings.
///
/// A one-cell free margin is kept at the border and free pockets unreachable from the
/// border are filled in, so every building has a reachable exterior. Retries until at
/// least 30% of the cells are free.
pub fn generate_layout(
    width: usize,
    height: usize,
    n_buildings: usize,
    seed: u64,
) -> Result<BuildingLayout> {
    if width < MIN_SIDE || height < MIN_SIDE {
        return Err(Error::invalid(format!(
            "layout must be at least {MIN_SIDE}x{MIN_SIDE}, got {width}x{height}"
        )));
    }
    if n_buildings == 0 {
        return BuildingLayout::empty(width, height);
    }
    let mut rng = seed::stream(seed, &[0x1a70]);
    let min_side = 6.min(width.min(height) - 2);
    let max_side = (width.min(height) / 5).clamp(min_side, width.min(height) - 2);

    for _ in 0..LAYOUT_RETRIES {
        let mut cells = Grid::filled(width, height, 0u8);
        for _ in 0..n_buildings {
            let w = rng.random_range(min_side..=max_side);
            let h = rng.random_range(min_side..=max_side);
            let col0 = rng.random_range(1..=width - 1 - w);
            let row0 = rng.random_range(1..=height - 1 - h);
            for r in row0..row0 + h {
                for c in col0..col0 + w {
                    cells.set(r, c, 1);
                }
            }
        }
        fill_enclosed(&mut cells);
        let layout = BuildingLayout { cells };
        if layout.free_fraction() >= MIN_FREE_FRACTION {
            return Ok(layout);
        }
    }
    Err(Error::Infeasible(format!(
        "no layout with {n_buildings} buildings and >= {:.0}% free cells after {LAYOUT_RETRIES} attempts",
        MIN_FREE_FRACTION * 100.0
    )))
}

/// Marks free cells that are not 8-connected to the map border as building.
fn fill_enclosed(cells: &mut Grid<u8>) {
    let (w, h) = cells.dims();
    let mut reached = Grid::filled(w, h, false);
    let mut queue = VecDeque::new();
    for (r, c, &v) in cells.indexed() {
        if v == 0 && (r == 0 || c == 0 || r == h - 1 || c == w - 1) {
            reached.set(r, c, true);
            queue.push_back((r, c));
        }
    }
    while let Some((r, c)) = queue.pop_front() {
        for (dr, dc) in NEIGHBORS_8 {
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            if cells.checked(nr, nc) == Some(&0) && !reached.get(nr as usize, nc as usize) {
                reached.set(nr as usize, nc as usize, true);
                queue.push_back((nr as usize, nc as usize));
            }
        }
    }
    for (v, &ok) in cells.as_mut_slice().iter_mut().zip(reached.as_slice()) {
        if *v == 0 && !ok {
            *v = 1;
        }
    }
}

pub(crate) const NEIGHBORS_8: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Rejection-samples `m` sources on free cells with pairwise spacing `>= min_spacing`.
///
/// A free cell is chosen uniformly, then the position is uniform within that cell.
pub fn place_sources(
    layout: &BuildingLayout,
    m: usize,
    min_spacing: f64,
    seed: u64,
) -> Result<Vec<Source>> {
    if m == 0 {
        return Err(Error::invalid("at least one source is required"));
    }
    let free = layout.free_cells();
    if free.is_empty() {
        return Err(Error::Infeasible("layout has no free cells".into()));
    }
    let mut rng = seed::stream(seed, &[0x50c]);
    let mut placed: Vec<Source> = Vec::with_capacity(m);
    for _ in 0..PLACEMENT_ATTEMPTS {
        if placed.len() == m {
            break;
        }
        let p = random_point_in(&free, &mut rng);
        if placed
            .iter()
            .all(|s| s.position.distance(&p) >= min_spacing)
        {
            placed.push(Source::at(p));
        }
    }
    if placed.len() < m {
        return Err(Error::Infeasible(format!(
            "placed only {} of {m} sources with spacing {min_spacing} m after {PLACEMENT_ATTEMPTS} attempts",
            placed.len()
        )));
    }
    Ok(placed)
}

/// Like [`place_sources`], but sources 0 and 1 are exactly `pair_spacing` apart.
///
/// Used to build dense scenarios where two local areas overlap; every other pair keeps
/// `min_spacing`.
pub fn place_sources_with_pair(
    layout: &BuildingLayout,
    m: usize,
    pair_spacing: f64,
    min_spacing: f64,
    seed: u64,
) -> Result<Vec<Source>> {
    if m < 2 {
        return Err(Error::invalid("a close pair needs at least two sources"));
    }
    let free = layout.free_cells();
    if free.is_empty() {
        return Err(Error::Infeasible("layout has no free cells".into()));
    }
    let mut rng = seed::stream(seed, &[0xd3a5e]);
    let mut placed: Vec<Source> = Vec::with_capacity(m);
    for _ in 0..PLACEMENT_ATTEMPTS {
        match placed.len() {
            n if n == m => break,
            0 => placed.push(Source::at(random_point_in(&free, &mut rng))),
            1 => {
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                let a = placed[0].position;
                let p = Point::new(
                    a.x + pair_spacing * theta.cos(),
                    a.y + pair_spacing * theta.sin(),
                );
                if layout.is_free_point(&p) {
                    placed.push(Source::at(p));
                } else {
                    placed.clear();
                }
            }
            _ => {
                let p = random_point_in(&free, &mut rng);
                if placed
                    .iter()
                    .all(|s| s.position.distance(&p) >= min_spacing)
                {
                    placed.push(Source::at(p));
                }
            }
        }
    }
    if placed.len() < m {
        return Err(Error::Infeasible(format!(
            "could not place {m} sources with a {pair_spacing} m pair after {PLACEMENT_ATTEMPTS} attempts"
        )));
    }
    Ok(placed)
}

fn random_point_in(free: &[(usize, usize)], rng: &mut impl Rng) -> Point {
    let (r, c) = free[rng.random_range(0..free.len())];
    Point::new(
        c as f64 + rng.random::<f64>(),
        r as f64 + rng.random::<f64>(),
    )
}
