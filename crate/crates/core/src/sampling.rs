//! Vehicle-mounted measurement collection along routes that circle the buildings.

use std::collections::{HashMap, VecDeque};

use rand::seq::index;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Point};
use crate::propagation::{BitmapEncoding, DbmMap};
use crate::scenario::{BuildingLayout, NEIGHBORS_8};
use crate::separation::{label_foreground, Connectivity};
use crate::seed;

/// Sampling intervals in seconds used for dataset generation.
pub const INTERVALS_S: [f64; 6] = [1.0, 2.0, 4.0, 6.0, 8.0, 10.0];
pub const DEFAULT_SPEED: f64 = 1.0;

/// Polyline through 8-adjacent free cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub waypoints: Vec<Point>,
    pub total_length: f64,
}

impl Route {
    fn from_cells(cells: &[(usize, usize)]) -> Self {
        let waypoints: Vec<Point> = cells.iter().map(|&(r, c)| Point::cell_center(r, c)).collect();
        let total_length = waypoints.windows(2).map(|w| w[0].distance(&w[1])).sum();
        Route {
            waypoints,
            total_length,
        }
    }

    /// Cumulative arc length at each waypoint.
    fn arc_lengths(&self) -> Vec<f64> {
        let mut acc = Vec::with_capacity(self.waypoints.len());
        let mut s = 0.0;
        acc.push(0.0);
        for w in self.waypoints.windows(2) {
            s += w[0].distance(&w[1]);
            acc.push(s);
        }
        acc
    }
}

// clockwise on screen (rows grow downward), starting west
const MOORE: [(isize, isize); 8] = [
    (0, -1),
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
];

fn moore_index(dr: isize, dc: isize) -> usize {
    MOORE
        .iter()
        .position(|&d| d == (dr, dc))
        .expect("offset is a Moore neighbor")
}

/// Clockwise outer contour of a region, starting at its topmost-leftmost pixel.
fn trace_contour(region: &Grid<bool>) -> Vec<(usize, usize)> {
    let start = region
        .indexed()
        .find(|(_, _, &v)| v)
        .map(|(r, c, _)| (r, c))
        .expect("region is non-empty");
    let inside = |r: isize, c: isize| region.checked(r, c).copied().unwrap_or(false);

    let step = |cur: (usize, usize), back: usize| -> Option<((usize, usize), usize)> {
        for k in 1..=8 {
            let d = (back + k) % 8;
            let (nr, nc) = (cur.0 as isize + MOORE[d].0, cur.1 as isize + MOORE[d].1);
            if inside(nr, nc) {
                let prev = MOORE[(d + 7) % 8];
                let (pr, pc) = (cur.0 as isize + prev.0, cur.1 as isize + prev.1);
                let next_back = moore_index(pr - nr, pc - nc);
                return Some(((nr as usize, nc as usize), next_back));
            }
        }
        None
    };

    let mut contour = vec![start];
    let Some((second, mut back)) = step(start, 0) else {
        return contour;
    };
    let mut cur = second;
    loop {
        let (next, nb) = step(cur, back).expect("connected region");
        if cur == start && next == second {
            break;
        }
        contour.push(cur);
        cur = next;
        back = nb;
    }
    contour
}

/// 8-connected breadth-first shortest path over free cells; excludes `from`, includes `to`.
fn shortest_free_path(
    layout: &BuildingLayout,
    from: (usize, usize),
    to: (usize, usize),
) -> Option<Vec<(usize, usize)>> {
    if from == to {
        return Some(vec![]);
    }
    let (w, h) = (layout.width(), layout.height());
    let mut prev: Grid<Option<(usize, usize)>> = Grid::filled(w, h, None);
    let mut queue = VecDeque::from([from]);
    prev.set(from.0, from.1, Some(from));
    while let Some(cur) = queue.pop_front() {
        if cur == to {
            let mut path = vec![to];
            let mut at = to;
            while let Some(p) = *prev.get(at.0, at.1) {
                if p == from {
                    break;
                }
                path.push(p);
                at = p;
            }
            path.reverse();
            return Some(path);
        }
        for (dr, dc) in NEIGHBORS_8 {
            let (nr, nc) = (cur.0 as isize + dr, cur.1 as isize + dc);
            if layout.cells().checked(nr, nc) == Some(&0) && prev.get(nr as usize, nc as usize).is_none() {
                prev.set(nr as usize, nc as usize, Some(cur));
                queue.push_back((nr as usize, nc as usize));
            }
        }
    }
    None
}

/// Deterministic measurement route.
///
/// Each building (8-connected occupied region, in label order) contributes one clockwise
/// loop over the outer contour of its one-cell dilation, starting from the topmost-leftmost
/// ring cell and closing back on it. Loops are joined by breadth-first shortest free paths.
/// Without buildings the route is the map border loop.
pub fn build_routes(layout: &BuildingLayout) -> Result<Route> {
    let (w, h) = (layout.width(), layout.height());
    if layout.free_cells().is_empty() {
        return Err(Error::Infeasible("layout has no free cells".into()));
    }
    let buildings = label_foreground(layout.cells(), Connectivity::Eight);
    if buildings.count() == 0 {
        let mut cells = Vec::with_capacity(2 * (w + h));
        cells.extend((0..w).map(|c| (0, c)));
        cells.extend((1..h).map(|r| (r, w - 1)));
        cells.extend((0..w - 1).rev().map(|c| (h - 1, c)));
        cells.extend((0..h - 1).rev().map(|r| (r, 0)));
        return Ok(Route::from_cells(&cells));
    }

    let mut cells: Vec<(usize, usize)> = Vec::new();
    for comp in &buildings.components {
        let mut dilated = Grid::filled(w, h, false);
        for (r, c, &l) in buildings.labels.indexed() {
            if l != comp.id {
                continue;
            }
            for dr in -1..=1isize {
                for dc in -1..=1isize {
                    let (nr, nc) = (r as isize + dr, c as isize + dc);
                    if nr >= 0 && nc >= 0 && (nr as usize) < h && (nc as usize) < w {
                        dilated.set(nr as usize, nc as usize, true);
                    }
                }
            }
        }
        let mut ring = trace_contour(&dilated);
        // only a building touching the map edge puts occupied cells on the contour
        if let Some(&(r, c)) = ring.iter().find(|&&(r, c)| layout.is_building(r, c)) {
            return Err(Error::Infeasible(format!(
                "building {} touches the map edge at ({r}, {c}); no route around it",
                comp.id
            )));
        }
        let start = ring[0];
        if let Some(&last) = cells.last() {
            let link = shortest_free_path(layout, last, start).ok_or_else(|| {
                Error::Infeasible(format!(
                    "building {} is unreachable from the previous loop",
                    comp.id
                ))
            })?;
            cells.extend(link);
            ring.remove(0);
        }
        cells.extend(ring);
        cells.push(start);
    }
    Ok(Route::from_cells(&cells))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub position: Point,
    pub rss: f64,
}

/// Sparse RSS measurements, with collection metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    samples: Vec<Sample>,
    pub interval_s: f64,
    pub speed: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Collection metadata stored next to the samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingMeta {
    pub interval_s: f64,
    pub speed: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SampleSet {
    /// Builds a non-empty set; samples at identical positions are merged by their
    /// dB-domain mean, keeping the first occurrence's order.
    pub fn new(samples: Vec<Sample>, meta: SamplingMeta) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("a sample set needs at least one sample"));
        }
        let mut slot: HashMap<(u64, u64), usize> = HashMap::new();
        let mut sums: Vec<(Point, f64, usize)> = Vec::new();
        for s in samples {
            let key = (s.position.x.to_bits(), s.position.y.to_bits());
            match slot.get(&key) {
                Some(&k) => {
                    sums[k].1 += s.rss;
                    sums[k].2 += 1;
                }
                None => {
                    slot.insert(key, sums.len());
                    sums.push((s.position, s.rss, 1));
                }
            }
        }
        Ok(SampleSet {
            samples: sums
                .into_iter()
                .map(|(position, total, n)| Sample {
                    position,
                    rss: total / n as f64,
                })
                .collect(),
            interval_s: meta.interval_s,
            speed: meta.speed,
            noise_sigma: meta.noise_sigma,
            seed: meta.seed,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn meta(&self) -> SamplingMeta {
        SamplingMeta {
            interval_s: self.interval_s,
            speed: self.speed,
            noise_sigma: self.noise_sigma,
            seed: self.seed,
        }
    }

    pub fn positions(&self) -> Vec<Point> {
        self.samples.iter().map(|s| s.position).collect()
    }
}

/// Measurements every `interval_s * speed` meters of arc length, starting at the route
/// origin. Values are read from the containing cell of `global` plus optional noise.
pub fn sample_along(
    route: &Route,
    global: &DbmMap,
    interval_s: f64,
    speed: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<SampleSet> {
    if !(interval_s > 0.0) || !(speed > 0.0) {
        return Err(Error::invalid("interval and speed must be positive"));
    }
    if route.waypoints.is_empty() {
        return Err(Error::Empty("route has no waypoints"));
    }
    let spacing = interval_s * speed;
    let arc = route.arc_lengths();
    let total = *arc.last().unwrap();
    let (w, h) = global.values.dims();

    let mut samples = Vec::new();
    let mut seg = 0usize;
    let mut k = 0u64;
    loop {
        let s = k as f64 * spacing;
        if s > total + 1e-9 {
            break;
        }
        while seg + 1 < arc.len() - 1 && arc[seg + 1] < s {
            seg += 1;
        }
        let (a, b) = if arc.len() == 1 {
            (route.waypoints[0], route.waypoints[0])
        } else {
            (route.waypoints[seg], route.waypoints[seg + 1])
        };
        let seg_len = a.distance(&b);
        let t = if seg_len > 0.0 {
            ((s - arc[seg]) / seg_len).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let p = Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
        // a diagonal step passes only through its two end cells and their shared corner
        let (row, col) = p
            .cell(w, h)
            .or_else(|| a.cell(w, h))
            .ok_or_else(|| Error::invalid("route leaves the map"))?;
        samples.push(Sample {
            position: p,
            rss: *global.values.get(row, col),
        });
        k += 1;
    }
    let meta = SamplingMeta {
        interval_s,
        speed,
        noise_sigma: 0.0,
        seed,
    };
    let clean = SampleSet::new(samples, meta)?;
    add_noise(&clean, noise_sigma, seed)
}

/// Uniform-random baseline: `count` distinct free cells, sampled at their centers.
pub fn sample_uniform(
    layout: &BuildingLayout,
    global: &DbmMap,
    count: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<SampleSet> {
    let free = layout.free_cells();
    if count == 0 || count > free.len() {
        return Err(Error::invalid(format!(
            "cannot draw {count} samples from {} free cells",
            free.len()
        )));
    }
    let mut rng = seed::stream(seed, &[0x0f1f]);
    let mut picks = index::sample(&mut rng, free.len(), count).into_vec();
    picks.sort_unstable();
    let samples = picks
        .into_iter()
        .map(|k| {
            let (r, c) = free[k];
            Sample {
                position: Point::cell_center(r, c),
                rss: *global.values.get(r, c),
            }
        })
        .collect();
    let meta = SamplingMeta {
        interval_s: 0.0,
        speed: 0.0,
        noise_sigma: 0.0,
        seed,
    };
    add_noise(&SampleSet::new(samples, meta)?, noise_sigma, seed)
}

/// Adds independent zero-mean Gaussian noise of std `sigma` to every value.
///
/// Draw `j` comes from a stream keyed by `(seed, j)`, so the same seed with different
/// sigmas yields proportional perturbations.
pub fn add_noise(set: &SampleSet, sigma: f64, seed: u64) -> Result<SampleSet> {
    if !(sigma >= 0.0) {
        return Err(Error::invalid("noise sigma must be non-negative"));
    }
    let mut out = set.clone();
    out.noise_sigma = set.noise_sigma.hypot(sigma);
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    for (j, s) in out.samples.iter_mut().enumerate() {
        let mut rng = seed::stream(seed, &[0xadd, j as u64]);
        s.rss += normal.sample(&mut rng);
    }
    Ok(out)
}

/// Rasterized samples: encoded value per sampled cell plus a 0/1 mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledMap {
    pub values: Grid<u8>,
    pub mask: Grid<u8>,
}

/// Collapses samples sharing a cell into one sample at the cell center, with the
/// dB-domain mean as its value. Cells appear in row-major order.
pub fn merge_by_cell(set: &SampleSet, width: usize, height: usize) -> Result<SampleSet> {
    let mut acc: Grid<(f64, u32)> = Grid::filled(width, height, (0.0, 0));
    for s in set.samples() {
        let (r, c) = s
            .position
            .cell(width, height)
            .ok_or_else(|| Error::invalid(format!("sample at ({}, {}) is off the map", s.position.x, s.position.y)))?;
        let e = acc.get_mut(r, c);
        e.0 += s.rss;
        e.1 += 1;
    }
    let samples = acc
        .indexed()
        .filter(|(_, _, &(_, n))| n > 0)
        .map(|(r, c, &(sum, n))| Sample {
            position: Point::cell_center(r, c),
            rss: sum / n as f64,
        })
        .collect();
    SampleSet::new(samples, set.meta())
}

pub fn to_sampled_map(set: &SampleSet, width: usize, height: usize, enc: &BitmapEncoding) -> Result<SampledMap> {
    let merged = merge_by_cell(set, width, height)?;
    let mut values = Grid::filled(width, height, 0u8);
    let mut mask = Grid::filled(width, height, 0u8);
    for s in merged.samples() {
        let (r, c) = s.position.cell(width, height).expect("merged onto the grid");
        values.set(r, c, enc.encode(s.rss));
        mask.set(r, c, 1);
    }
    Ok(SampledMap { values, mask })
}
