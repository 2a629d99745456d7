//! Dense radio map reconstruction from sparse samples.
//!
//! Interpolators implement [`Reconstructor`]; a trained model can stand in through the
//! same trait or by writing a local map file that the CLI ingests directly.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Point};
use crate::propagation::{
    disk_cells, ground_truth_local, Bitmap, BitmapEncoding, DbmMap, MapKind, PropagationParams, RadioMap,
};
use crate::sampling::SampleSet;
use crate::scenario::{BuildingLayout, Scenario};

/// Turns sparse samples into a dense dBm field over the layout grid.
pub trait Reconstructor: Send + Sync {
    fn name(&self) -> &str;
    fn reconstruct(&self, samples: &SampleSet, layout: &BuildingLayout) -> Result<DbmMap>;
}

fn eval_grid(layout: &BuildingLayout, f: impl Fn(Point) -> f64 + Sync) -> DbmMap {
    let (w, h) = (layout.width(), layout.height());
    let data: Vec<f64> = (0..h)
        .into_par_iter()
        .flat_map_iter(|row| {
            let f = &f;
            (0..w).map(move |col| f(Point::cell_center(row, col)))
        })
        .collect();
    RadioMap::new(MapKind::Global, Grid::from_vec(w, h, data))
}

/// Inverse-distance weighting, `w_j = d_j^-power`, evaluated at cell centers.
pub fn idw_reconstruct(samples: &SampleSet, layout: &BuildingLayout, power: f64) -> Result<DbmMap> {
    if samples.is_empty() {
        return Err(Error::Empty("IDW needs at least one sample"));
    }
    let pts = samples.samples();
    Ok(eval_grid(layout, |q| {
        let mut num = 0.0;
        let mut den = 0.0;
        for s in pts {
            let d2 = s.position.distance_sq(&q);
            if d2 == 0.0 {
                return s.rss;
            }
            let w = d2.powf(-power / 2.0);
            num += w * s.rss;
            den += w;
        }
        num / den
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Idw {
    pub power: f64,
}

impl Default for Idw {
    fn default() -> Self {
        Idw { power: 2.0 }
    }
}

impl Reconstructor for Idw {
    fn name(&self) -> &str {
        "idw"
    }

    fn reconstruct(&self, samples: &SampleSet, layout: &BuildingLayout) -> Result<DbmMap> {
        idw_reconstruct(samples, layout, self.power)
    }
}

/// Exponential variogram `nugget + sill (1 - exp(-3 d / range))`, zero at `d = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VariogramParams {
    pub nugget: f64,
    pub sill: f64,
    pub range_m: f64,
}

impl Default for VariogramParams {
    fn default() -> Self {
        VariogramParams {
            nugget: 0.0,
            sill: 25.0,
            range_m: 30.0,
        }
    }
}

impl VariogramParams {
    pub fn validate(&self) -> Result<()> {
        if self.nugget >= 0.0 && self.sill > 0.0 && self.range_m > 0.0 {
            Ok(())
        } else {
            Err(Error::invalid("variogram needs nugget >= 0, sill > 0, range > 0"))
        }
    }

    #[inline]
    pub fn gamma(&self, d: f64) -> f64 {
        if d == 0.0 {
            0.0
        } else {
            self.nugget + self.sill * (1.0 - (-3.0 * d / self.range_m).exp())
        }
    }
}

/// The `(J+1) x (J+1)` ordinary-kriging matrix `[[Gamma, 1], [1^T, 0]]`.
pub fn kriging_matrix(positions: &[Point], variogram: &VariogramParams) -> DMatrix<f64> {
    let n = positions.len();
    DMatrix::from_fn(n + 1, n + 1, |i, j| match (i < n, j < n) {
        (true, true) => variogram.gamma(positions[i].distance(&positions[j])),
        (false, false) => 0.0,
        _ => 1.0,
    })
}

fn check_kriging_input(samples: &SampleSet, variogram: &VariogramParams) -> Result<()> {
    variogram.validate()?;
    if samples.len() < 2 {
        return Err(Error::invalid("kriging needs at least two samples"));
    }
    Ok(())
}

/// Ordinary-kriging weights for one query point (solves the system directly).
pub fn kriging_weights(samples: &SampleSet, query: Point, variogram: &VariogramParams) -> Result<Vec<f64>> {
    check_kriging_input(samples, variogram)?;
    let pos = samples.positions();
    let n = pos.len();
    let mut rhs = DVector::from_element(n + 1, 1.0);
    for (k, p) in pos.iter().enumerate() {
        rhs[k] = variogram.gamma(p.distance(&query));
    }
    let sol = solve(kriging_matrix(&pos, variogram), rhs)?;
    Ok(sol.iter().take(n).copied().collect())
}

fn solve(m: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    let n = m.nrows();
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular(format!("{n}x{n} kriging system")))?;
    if sol.iter().all(|v| v.is_finite()) {
        Ok(sol)
    } else {
        Err(Error::Singular(format!("{n}x{n} kriging system is ill-conditioned")))
    }
}

/// Ordinary kriging over every cell center.
///
/// The system is factored once in its dual form: solving `K [a; b] = [z; 0]` gives
/// the prediction `sum_j a_j gamma(|x - s_j|) + b`, identical to weighting the samples
/// with per-point kriging weights. Duplicate sample positions make the system singular
/// and are reported as an error.
pub fn kriging_reconstruct(samples: &SampleSet, layout: &BuildingLayout, variogram: &VariogramParams) -> Result<DbmMap> {
    check_kriging_input(samples, variogram)?;
    let pos = samples.positions();
    let n = pos.len();
    let mut seen = std::collections::HashSet::new();
    if !pos.iter().all(|p| seen.insert((p.x.to_bits(), p.y.to_bits()))) {
        return Err(Error::Singular("duplicate sample positions".into()));
    }
    let mut rhs = DVector::zeros(n + 1);
    for (k, s) in samples.samples().iter().enumerate() {
        rhs[k] = s.rss;
    }
    let dual = solve(kriging_matrix(&pos, variogram), rhs)?;
    let coef: Vec<f64> = dual.iter().take(n).copied().collect();
    let mean = dual[n];
    let pts = samples.samples();
    Ok(eval_grid(layout, |q| {
        let mut z = mean;
        for (s, a) in pts.iter().zip(&coef) {
            let d = s.position.distance(&q);
            if d == 0.0 {
                return s.rss;
            }
            z += a * variogram.gamma(d);
        }
        z
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Kriging {
    pub variogram: VariogramParams,
}

impl Reconstructor for Kriging {
    fn name(&self) -> &str {
        "kriging"
    }

    fn reconstruct(&self, samples: &SampleSet, layout: &BuildingLayout) -> Result<DbmMap> {
        kriging_reconstruct(samples, layout, &self.variogram)
    }
}

/// The ground-truth local map, used to test downstream stages without reconstruction error.
pub fn oracle_reconstruct(scenario: &Scenario, params: &PropagationParams, r: f64, enc: &BitmapEncoding) -> Result<Bitmap> {
    ground_truth_local(scenario, params, r, enc)
}

/// Default drop below a peak that still counts as local area, in dB.
pub const DEFAULT_PROXY_DELTA_DB: f64 = 9.5;

/// Non-learned local map from a dense field.
///
/// Repeatedly takes the strongest unsuppressed cell as a peak while it is within
/// `delta_db` of the global maximum, keeps the cells inside its `3r` disk that are within
/// `delta_db` of the peak, and suppresses that disk. Kept cells are encoded, all others are 0.
pub fn proxy_local_map(dense: &DbmMap, delta_db: f64, r: f64, enc: &BitmapEncoding) -> Result<Bitmap> {
    let vals = dense.values.as_slice();
    let (min, max) = vals
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(max > min) {
        return Err(Error::invalid("dense map is constant or empty"));
    }
    let (w, h) = dense.values.dims();
    let floor = max - delta_db;
    let mut suppressed = Grid::filled(w, h, false);
    let mut out = Grid::filled(w, h, 0u8);
    loop {
        let peak = dense
            .values
            .indexed()
            .filter(|&(r, c, v)| !suppressed.get(r, c) && *v >= floor)
            .fold(None, |best: Option<(usize, usize, f64)>, (r, c, &v)| match best {
                Some((_, _, bv)) if bv >= v => best,
                _ => Some((r, c, v)),
            });
        let Some((pr, pc, pv)) = peak else { break };
        for (row, col) in disk_cells(Point::cell_center(pr, pc), 3.0 * r, w, h) {
            if *suppressed.get(row, col) {
                continue;
            }
            suppressed.set(row, col, true);
            let v = *dense.values.get(row, col);
            if v >= pv - delta_db {
                out.set(row, col, enc.encode(v));
            }
        }
    }
    Ok(RadioMap::new(MapKind::Local, out))
}
