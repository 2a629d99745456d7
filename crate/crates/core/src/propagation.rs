//! Received power, multi-source aggregation and radio map rasterization.
//!
//! Large-scale propagation is log-distance path loss plus a per-meter penetration loss
//! for the portion of the straight source-receiver ray that crosses building interiors.
//! Shadowing, when enabled, is a single zero-mean Gaussian per (source, cell) pair.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Point};
use crate::scenario::{BuildingLayout, Scenario, Source};
use crate::seed;

/// How per-source received powers combine into one RSS value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Sum in linear milliwatts, reported back in dBm.
    #[default]
    Linear,
    /// Literal sum of dBm values. Not physical; kept for comparison only.
    DbmSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationParams {
    /// Path loss at the reference distance, dB.
    pub l0: f64,
    /// Reference distance, meters.
    pub d0: f64,
    /// Path-loss exponent.
    pub eta: f64,
    /// Std of the combined shadowing term, dB.
    pub sigma_shadow: f64,
    /// Loss per meter of building interior crossed, dB/m.
    pub beta_penetration: f64,
    /// Upper bound on the total penetration loss, dB.
    pub penetration_cap: f64,
    pub aggregation: Aggregation,
}

impl Default for PropagationParams {
    fn default() -> Self {
        PropagationParams {
            l0: 38.5,
            d0: 1.0,
            eta: 3.0,
            sigma_shadow: 0.0,
            beta_penetration: 2.0,
            penetration_cap: 60.0,
            aggregation: Aggregation::Linear,
        }
    }
}

impl PropagationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.d0 > 0.0) || !(self.eta > 0.0) {
            return Err(Error::invalid("d0 and eta must be positive"));
        }
        if !(self.sigma_shadow >= 0.0) || !(self.beta_penetration >= 0.0) {
            return Err(Error::invalid(
                "sigma_shadow and beta_penetration must be non-negative",
            ));
        }
        Ok(())
    }
}

/// Linear mapping of a dBm range onto 0..=255.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BitmapEncoding {
    pub p_min: f64,
    pub p_max: f64,
}

impl Default for BitmapEncoding {
    fn default() -> Self {
        BitmapEncoding {
            p_min: -110.0,
            p_max: 0.0,
        }
    }
}

impl BitmapEncoding {
    pub fn validate(&self) -> Result<()> {
        if self.p_min < self.p_max {
            Ok(())
        } else {
            Err(Error::invalid("bitmap encoding needs p_min < p_max"))
        }
    }

    /// `round_half_up(255 * clamp((p - p_min) / (p_max - p_min), 0, 1))`.
    pub fn encode(&self, p: f64) -> u8 {
        let t = ((p - self.p_min) / (self.p_max - self.p_min)).clamp(0.0, 1.0);
        (255.0 * t + 0.5).floor() as u8
    }

    /// Center of the dBm interval that encodes to `v`.
    pub fn decode(&self, v: u8) -> f64 {
        self.p_min + (v as f64 / 255.0) * (self.p_max - self.p_min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Global,
    Local,
    Binarized,
    SingleSource,
}

/// A 2D scalar field over the layout grid, tagged with its role.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioMap<T> {
    pub kind: MapKind,
    pub values: Grid<T>,
}

/// Field in dBm.
pub type DbmMap = RadioMap<f64>;
/// 8-bit encoded field.
pub type Bitmap = RadioMap<u8>;

impl<T> RadioMap<T> {
    pub fn new(kind: MapKind, values: Grid<T>) -> Self {
        RadioMap { kind, values }
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }
}

/// `L0 + 10 eta log10(d / d0)` with `d` clamped to at least `d0`.
pub fn path_loss(d: f64, params: &PropagationParams) -> f64 {
    let d = d.max(params.d0);
    params.l0 + 10.0 * params.eta * (d / params.d0).log10()
}

/// Length in meters of the segment `a -> b` that lies inside building cells.
///
/// Walks the cells the segment crosses (Amanatides-Woo traversal) and sums the
/// per-cell parametric intervals. Stops early once `cap_m` meters are reached.
pub fn building_crossing_length(a: Point, b: Point, layout: &BuildingLayout, cap_m: f64) -> f64 {
    let (w, h) = (layout.width() as i64, layout.height() as i64);
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len = dx.hypot(dy);
    if len == 0.0 {
        return 0.0;
    }
    let mut col = a.x.floor() as i64;
    let mut row = a.y.floor() as i64;
    let end_col = (b.x.floor() as i64).clamp(0, w - 1);
    let end_row = (b.y.floor() as i64).clamp(0, h - 1);
    col = col.clamp(0, w - 1);
    row = row.clamp(0, h - 1);

    let step_c: i64 = if dx > 0.0 { 1 } else { -1 };
    let step_r: i64 = if dy > 0.0 { 1 } else { -1 };
    let next_boundary = |cell: i64, step: i64| (cell + i64::from(step > 0)) as f64;
    let mut t_max_x = if dx != 0.0 {
        (next_boundary(col, step_c) - a.x) / dx
    } else {
        f64::INFINITY
    };
    let mut t_max_y = if dy != 0.0 {
        (next_boundary(row, step_r) - a.y) / dy
    } else {
        f64::INFINITY
    };
    let t_delta_x = if dx != 0.0 { 1.0 / dx.abs() } else { f64::INFINITY };
    let t_delta_y = if dy != 0.0 { 1.0 / dy.abs() } else { f64::INFINITY };

    let mut t = 0.0;
    let mut inside = 0.0;
    loop {
        let t_next = t_max_x.min(t_max_y).min(1.0);
        if layout.is_building(row as usize, col as usize) {
            inside += (t_next - t) * len;
            if inside >= cap_m {
                return inside;
            }
        }
        if t_next >= 1.0 || (row == end_row && col == end_col) {
            break;
        }
        t = t_next;
        if t_max_x < t_max_y {
            col += step_c;
            t_max_x += t_delta_x;
        } else if t_max_y < t_max_x {
            row += step_r;
            t_max_y += t_delta_y;
        } else {
            // exact corner crossing: the segment touches no side cell
            col += step_c;
            row += step_r;
            t_max_x += t_delta_x;
            t_max_y += t_delta_y;
        }
        if col < 0 || row < 0 || col >= w || row >= h {
            break;
        }
    }
    inside
}

/// `min(cap, beta * interior length)` along the straight ray from `a` to `b`.
pub fn penetration_loss(a: Point, b: Point, layout: &BuildingLayout, params: &PropagationParams) -> f64 {
    if params.beta_penetration == 0.0 {
        return 0.0;
    }
    let cap_m = params.penetration_cap / params.beta_penetration;
    (params.beta_penetration * building_crossing_length(a, b, layout, cap_m))
        .min(params.penetration_cap)
}

fn deterministic_power(source: &Source, point: Point, layout: &BuildingLayout, params: &PropagationParams) -> f64 {
    let d = source.position.distance(&point);
    source.tx_power + source.gain
        - path_loss(d, params)
        - penetration_loss(source.position, point, layout, params)
}

/// Received power in dBm from one source at `point`.
///
/// `rng` is only drawn from when `sigma_shadow > 0`.
pub fn received_power(
    source: &Source,
    point: Point,
    layout: &BuildingLayout,
    params: &PropagationParams,
    rng: &mut impl Rng,
) -> f64 {
    let p = deterministic_power(source, point, layout, params);
    if params.sigma_shadow > 0.0 {
        let n = Normal::new(0.0, params.sigma_shadow).expect("finite sigma");
        p - n.sample(rng)
    } else {
        p
    }
}

/// Combines per-source powers (dBm) into the total RSS (dBm).
///
/// Linear mode is evaluated as `max + 10 log10(sum 10^((p - max) / 10))`, which keeps
/// the result within `[max, max + 10 log10(n)]` exactly in floating point.
pub fn aggregate_rss(powers: &[f64], mode: Aggregation) -> Result<f64> {
    if powers.is_empty() {
        return Err(Error::Empty("aggregate_rss needs at least one power"));
    }
    match mode {
        Aggregation::DbmSum => Ok(powers.iter().sum()),
        Aggregation::Linear => {
            let max = powers.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Ok(max);
            }
            let sum: f64 = powers.iter().map(|p| 10f64.powf((p - max) / 10.0)).sum();
            Ok(max + 10.0 * sum.log10())
        }
    }
}

/// Total RSS at the center of a free cell, including shadowing when enabled.
///
/// Shadowing draws come from a stream keyed by (scenario seed, source index, cell index),
/// so any subset of cells can be evaluated independently.
pub fn cell_rss(scenario: &Scenario, params: &PropagationParams, row: usize, col: usize) -> f64 {
    let point = Point::cell_center(row, col);
    let cell_index = (row * scenario.width() + col) as u64;
    let mut powers = [0.0f64; crate::scenario::MAX_SOURCES];
    let n = scenario.sources.len();
    for (k, s) in scenario.sources.iter().enumerate() {
        powers[k] = if params.sigma_shadow > 0.0 {
            let mut rng = seed::stream(scenario.seed, &[0x5ad0, k as u64, cell_index]);
            received_power(s, point, &scenario.layout, params, &mut rng)
        } else {
            deterministic_power(s, point, &scenario.layout, params)
        };
    }
    aggregate_rss(&powers[..n], params.aggregation).expect("scenario has sources")
}

/// Dense global field; building cells hold `enc.p_min`.
pub fn rasterize_global(scenario: &Scenario, params: &PropagationParams, enc: &BitmapEncoding) -> DbmMap {
    let (w, h) = (scenario.width(), scenario.height());
    let data: Vec<f64> = (0..h)
        .into_par_iter()
        .flat_map_iter(|row| {
            (0..w).map(move |col| {
                if scenario.layout.is_building(row, col) {
                    enc.p_min
                } else {
                    cell_rss(scenario, params, row, col)
                }
            })
        })
        .collect();
    RadioMap::new(MapKind::Global, Grid::from_vec(w, h, data))
}

pub fn to_bitmap(map: &DbmMap, enc: &BitmapEncoding) -> Bitmap {
    RadioMap::new(map.kind, map.values.map(|&p| enc.encode(p)))
}

/// Whether the center of `(row, col)` lies within `r` of any point.
fn in_any_disk(row: usize, col: usize, centers: &[Point], r: f64) -> bool {
    let c = Point::cell_center(row, col);
    centers.iter().any(|s| s.distance_sq(&c) <= r * r)
}

/// Cells whose centers lie within `r` of `center`, clipped to the grid.
pub(crate) fn disk_cells(center: Point, r: f64, width: usize, height: usize) -> impl Iterator<Item = (usize, usize)> {
    let r0 = ((center.y - 0.5 - r).ceil().max(0.0)) as usize;
    let r1 = ((center.y - 0.5 + r).floor().min(height as f64 - 1.0)).max(-1.0) as isize;
    let c0 = ((center.x - 0.5 - r).ceil().max(0.0)) as usize;
    let c1 = ((center.x - 0.5 + r).floor().min(width as f64 - 1.0)).max(-1.0) as isize;
    (r0 as isize..=r1).flat_map(move |row| {
        (c0 as isize..=c1).filter_map(move |col| {
            let (row, col) = (row as usize, col as usize);
            (Point::cell_center(row, col).distance_sq(&center) <= r * r).then_some((row, col))
        })
    })
}

/// Zeroes every pixel whose center is farther than `r` from all `centers`.
pub fn mask_to_disks(map: &Bitmap, centers: &[Point], r: f64) -> Bitmap {
    let values = Grid::from_fn(map.width(), map.height(), |row, col| {
        if in_any_disk(row, col, centers, r) {
            *map.values.get(row, col)
        } else {
            0
        }
    });
    RadioMap::new(MapKind::Local, values)
}

/// Ground-truth local radio map: the encoded global field inside radius-`r` disks
/// around each source, zero elsewhere.
///
/// Only in-disk cells are evaluated; the result equals masking the full
/// [`rasterize_global`] output.
pub fn ground_truth_local(
    scenario: &Scenario,
    params: &PropagationParams,
    r: f64,
    enc: &BitmapEncoding,
) -> Result<Bitmap> {
    if !(r > 0.0) {
        return Err(Error::invalid("local radius r must be positive"));
    }
    let (w, h) = (scenario.width(), scenario.height());
    let mut values = Grid::filled(w, h, 0u8);
    let mut done = Grid::filled(w, h, false);
    for s in &scenario.sources {
        for (row, col) in disk_cells(s.position, r, w, h) {
            if *done.get(row, col) {
                continue;
            }
            done.set(row, col, true);
            let p = if scenario.layout.is_building(row, col) {
                enc.p_min
            } else {
                cell_rss(scenario, params, row, col)
            };
            values.set(row, col, enc.encode(p));
        }
    }
    Ok(RadioMap::new(MapKind::Local, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{BuildingLayout, Scenario};
    use proptest::prelude::*;

    fn flat(n: usize) -> BuildingLayout {
        BuildingLayout::empty(n, n).unwrap()
    }

    fn with_block(n: usize, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> BuildingLayout {
        let mut g = Grid::filled(n, n, 0u8);
        for r in rows {
            for c in cols.clone() {
                g.set(r, c, 1);
            }
        }
        BuildingLayout::new(g).unwrap()
    }

    /// Liang-Barsky clip of the segment against one half-open unit square.
    fn clip_len(a: Point, b: Point, row: usize, col: usize) -> f64 {
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        let checks = [
            (-dx, a.x - col as f64),
            (dx, col as f64 + 1.0 - a.x),
            (-dy, a.y - row as f64),
            (dy, row as f64 + 1.0 - a.y),
        ];
        for (k, (p, q)) in checks.into_iter().enumerate() {
            if p == 0.0 {
                // axis-parallel on a shared edge belongs to the higher-index cell
                if q < 0.0 || (k % 2 == 1 && q == 0.0) {
                    return 0.0;
                }
            } else {
                let t = q / p;
                if p < 0.0 {
                    t0 = t0.max(t);
                } else {
                    t1 = t1.min(t);
                }
            }
        }
        if t1 > t0 {
            (t1 - t0) * dx.hypot(dy)
        } else {
            0.0
        }
    }

    fn clip_oracle(a: Point, b: Point, layout: &BuildingLayout) -> f64 {
        layout
            .cells()
            .indexed()
            .filter(|(_, _, &v)| v == 1)
            .map(|(r, c, _)| clip_len(a, b, r, c))
            .sum()
    }

    #[test]
    fn path_loss_reference_values() {
        let p = PropagationParams::default();
        assert_eq!(path_loss(1.0, &p), 38.5);
        assert!((path_loss(10.0, &p) - 68.5).abs() < 1e-12);
        // 38.5 + 30 log10(200), evaluated at higher precision offline
        assert!((path_loss(200.0, &p) - 107.530_899_869_919_4).abs() < 1e-9);
        assert_eq!(path_loss(0.0, &p), 38.5);
        assert_eq!(path_loss(0.3, &p), 38.5);
    }

    #[test]
    fn penetration_free_space_is_zero() {
        let l = flat(20);
        let p = PropagationParams::default();
        assert_eq!(penetration_loss(Point::new(1.5, 1.5), Point::new(18.2, 13.7), &l, &p), 0.0);
    }

    #[test]
    fn penetration_three_meter_crossing() {
        // horizontal ray through a 3-column building
        let l = with_block(20, 5..10, 8..11);
        let p = PropagationParams::default();
        let a = Point::new(2.5, 7.5);
        let b = Point::new(15.5, 7.5);
        assert!((clip_oracle(a, b, &l) - 3.0).abs() < 1e-12);
        assert!((penetration_loss(a, b, &l, &p) - 6.0).abs() < 1e-9);
    }

    #[test]
    fn penetration_cap_binds() {
        let l = with_block(100, 10..90, 10..90);
        let p = PropagationParams::default();
        let loss = penetration_loss(Point::new(5.5, 50.5), Point::new(95.5, 50.5), &l, &p);
        assert_eq!(loss, 60.0);
    }

    #[test]
    fn traversal_matches_clip_oracle_on_fixed_layout() {
        let l = with_block(30, 4..17, 9..21);
        let cases = [
            (Point::new(0.2, 0.3), Point::new(29.7, 29.9)),
            (Point::new(3.5, 25.5), Point::new(25.5, 3.5)),
            (Point::new(15.0, 1.0), Point::new(15.0, 28.0)),
            (Point::new(29.9, 10.1), Point::new(0.1, 12.7)),
            (Point::new(10.0, 10.0), Point::new(12.0, 12.0)),
        ];
        for (a, b) in cases {
            let got = building_crossing_length(a, b, &l, f64::INFINITY);
            let want = clip_oracle(a, b, &l);
            assert!((got - want).abs() < 1e-9, "{a:?}->{b:?}: {got} vs {want}");
        }
    }

    #[test]
    fn received_power_examples() {
        let l = flat(40);
        let p = PropagationParams::default();
        let s = Source::at(Point::new(10.5, 10.5));
        let mut rng = seed::stream(0, &[]);
        assert_eq!(received_power(&s, Point::new(10.5, 10.5), &l, &p, &mut rng), -4.5);
        assert_eq!(received_power(&s, Point::new(11.0, 10.5), &l, &p, &mut rng), -4.5);
        let los = received_power(&s, Point::new(20.5, 10.5), &l, &p, &mut rng);
        assert!((los + 34.5).abs() < 1e-12);

        let walled = with_block(40, 0..40, 14..17);
        let nlos = received_power(&s, Point::new(20.5, 10.5), &walled, &p, &mut rng);
        assert!((nlos + 40.5).abs() < 1e-9);
    }

    #[test]
    fn shadowing_draws_from_rng() {
        let l = flat(40);
        let p = PropagationParams {
            sigma_shadow: 4.0,
            ..Default::default()
        };
        let s = Source::at(Point::new(10.5, 10.5));
        let q = Point::new(20.5, 10.5);
        let a = received_power(&s, q, &l, &p, &mut seed::stream(3, &[]));
        let b = received_power(&s, q, &l, &p, &mut seed::stream(3, &[]));
        let c = received_power(&s, q, &l, &p, &mut seed::stream(4, &[]));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn aggregation_examples() {
        let lin = Aggregation::Linear;
        assert_eq!(aggregate_rss(&[-60.0], lin).unwrap(), -60.0);
        assert!((aggregate_rss(&[-60.0, -60.0], lin).unwrap() + 56.989_700_043_360_19).abs() < 1e-9);
        // 10 log10(1e-6 + 1e-9) computed at high precision
        assert!((aggregate_rss(&[-60.0, -90.0], lin).unwrap() + 59.995_659_225_206_81).abs() < 1e-9);
        assert!(aggregate_rss(&[], lin).is_err());
        assert_eq!(aggregate_rss(&[-60.0, -90.0], Aggregation::DbmSum).unwrap(), -150.0);
    }

    #[test]
    fn encoding_examples() {
        let e = BitmapEncoding::default();
        assert_eq!(e.encode(-110.0), 0);
        assert_eq!(e.encode(0.0), 255);
        assert_eq!(e.encode(-55.0), 128);
        assert_eq!(e.encode(-200.0), 0);
        assert_eq!(e.encode(5.0), 255);
    }

    #[test]
    fn in_disk_pixels_encode_at_least_200() {
        // worst in-disk LOS distance is r = 2 m
        let p = PropagationParams::default();
        let worst = 24.0 + 10.0 - path_loss(2.0, &p);
        assert!(BitmapEncoding::default().encode(worst) >= 200);

        let l = flat(30);
        for k in 0..25 {
            let pos = Point::new(10.0 + k as f64 * 0.37 % 1.0, 12.0 + k as f64 * 0.61 % 1.0);
            let sc = Scenario::new("s", l.clone(), vec![Source::at(pos)], 0, 5.0).unwrap();
            let m = ground_truth_local(&sc, &p, 2.0, &BitmapEncoding::default()).unwrap();
            for (r, c, &v) in m.values.indexed() {
                if Point::cell_center(r, c).distance(&pos) <= 2.0 {
                    assert!(v >= 200, "pixel ({r},{c}) = {v}");
                }
            }
        }
    }

    #[test]
    fn local_disk_counts() {
        let p = PropagationParams::default();
        let e = BitmapEncoding::default();
        let l = flat(40);
        let one = Scenario::new("a", l.clone(), vec![Source::at(Point::new(20.5, 20.5))], 0, 5.0).unwrap();
        let m = ground_truth_local(&one, &p, 2.0, &e).unwrap();
        assert_eq!(m.values.as_slice().iter().filter(|&&v| v > 0).count(), 13);

        let two = Scenario::new(
            "b",
            l.clone(),
            vec![Source::at(Point::new(10.5, 20.5)), Source::at(Point::new(20.5, 20.5))],
            0,
            5.0,
        )
        .unwrap();
        let m = ground_truth_local(&two, &p, 2.0, &e).unwrap();
        assert_eq!(m.values.as_slice().iter().filter(|&&v| v > 0).count(), 26);

        let edge = Scenario::new("c", l, vec![Source::at(Point::new(0.5, 20.5))], 0, 5.0).unwrap();
        let m = ground_truth_local(&edge, &p, 2.0, &e).unwrap();
        // columns 0..=2 of the 13-pixel disk survive: 5 + 3 + 1
        assert_eq!(m.values.as_slice().iter().filter(|&&v| v > 0).count(), 9);
    }

    #[test]
    fn local_equals_masked_global_and_is_idempotent() {
        let layout = crate::scenario::generate_layout(64, 64, 5, 2).unwrap();
        let src = crate::scenario::place_sources(&layout, 3, 5.0, 4).unwrap();
        let sc = Scenario::new("g", layout, src, 4, 5.0).unwrap();
        let p = PropagationParams::default();
        let e = BitmapEncoding::default();
        let global = to_bitmap(&rasterize_global(&sc, &p, &e), &e);
        let masked = mask_to_disks(&global, &sc.positions(), 2.0);
        let local = ground_truth_local(&sc, &p, 2.0, &e).unwrap();
        assert_eq!(masked, local);
        assert_eq!(mask_to_disks(&local, &sc.positions(), 2.0), local);
        assert!(ground_truth_local(&sc, &p, 0.0, &e).is_err());
    }

    #[test]
    fn single_source_field_decreases_with_distance() {
        let l = flat(41);
        let sc = Scenario::new("m", l, vec![Source::at(Point::new(20.5, 20.5))], 0, 5.0).unwrap();
        let g = rasterize_global(&sc, &PropagationParams::default(), &BitmapEncoding::default());
        let mut cells: Vec<(f64, f64)> = g
            .values
            .indexed()
            .map(|(r, c, &v)| (Point::cell_center(r, c).distance(&Point::new(20.5, 20.5)), v))
            .collect();
        cells.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in cells.windows(2) {
            if w[1].0 > w[0].0 + 1e-12 && w[0].0 >= 1.0 {
                assert!(w[1].1 < w[0].1);
            }
        }
    }

    #[test]
    fn symmetric_pair_gives_symmetric_map() {
        let l = flat(40);
        let sc = Scenario::new(
            "sym",
            l,
            vec![Source::at(Point::new(12.0, 17.3)), Source::at(Point::new(28.0, 17.3))],
            0,
            5.0,
        )
        .unwrap();
        let g = rasterize_global(&sc, &PropagationParams::default(), &BitmapEncoding::default());
        for (r, c, &v) in g.values.indexed() {
            let mirrored = *g.values.get(r, 39 - c);
            assert!((v - mirrored).abs() < 1e-9);
        }
    }

    #[test]
    fn global_dominates_each_source() {
        let layout = crate::scenario::generate_layout(48, 48, 4, 9).unwrap();
        let src = crate::scenario::place_sources(&layout, 4, 5.0, 1).unwrap();
        let sc = Scenario::new("d", layout.clone(), src.clone(), 1, 5.0).unwrap();
        let p = PropagationParams::default();
        let e = BitmapEncoding::default();
        let g = rasterize_global(&sc, &p, &e);
        for s in &src {
            let single = Scenario::new("s", layout.clone(), vec![*s], 1, 5.0).unwrap();
            let gs = rasterize_global(&single, &p, &e);
            for (a, b) in g.values.as_slice().iter().zip(gs.values.as_slice()) {
                assert!(a >= b);
            }
        }
    }

    proptest! {
        #[test]
        fn aggregation_dominance(ps in proptest::collection::vec(-150.0f64..30.0, 1..20)) {
            let agg = aggregate_rss(&ps, Aggregation::Linear).unwrap();
            let max = ps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(agg >= max);
            prop_assert!(agg <= max + 10.0 * (ps.len() as f64).log10());
        }

        #[test]
        fn path_loss_strictly_increasing(a in 1.0f64..500.0, b in 1.0f64..500.0) {
            let p = PropagationParams::default();
            if a < b {
                prop_assert!(path_loss(a, &p) < path_loss(b, &p));
            }
        }

        #[test]
        fn encoding_is_monotone(a in -200.0f64..50.0, b in -200.0f64..50.0) {
            let e = BitmapEncoding::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(e.encode(lo) <= e.encode(hi));
        }

        #[test]
        fn traversal_matches_clip_oracle(
            ax in 0.0f64..24.0, ay in 0.0f64..24.0, bx in 0.0f64..24.0, by in 0.0f64..24.0,
            seed in 0u64..50,
        ) {
            let layout = crate::scenario::generate_layout(24, 24, 4, seed).unwrap();
            let (a, b) = (Point::new(ax, ay), Point::new(bx, by));
            let got = building_crossing_length(a, b, &layout, f64::INFINITY);
            let want = clip_oracle(a, b, &layout);
            prop_assert!((got - want).abs() < 1e-9, "{} vs {}", got, want);
        }
    }
}
