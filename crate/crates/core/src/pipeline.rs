//! Batch pipeline over a generated dataset: local map, separation, localization and
//! evaluation for every scenario (and sampling interval, for interpolating
//! reconstructors).

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{formats, interval_dir, Dataset, IndexEntry, SampleFile};
use crate::error::{Error, Result};
use crate::localize::{localize_all, ArgMax, CenterOfMass, Estimator, FourNeighborhood, PredictionSet};
use crate::metrics::{aggregate, EvalReport, ScenarioEval, DEFAULT_OSPA_CUTOFF};
use crate::propagation::{Bitmap, MapKind, RadioMap};
use crate::reconstruct::{proxy_local_map, Idw, Kriging, Reconstructor, VariogramParams, DEFAULT_PROXY_DELTA_DB};
use crate::sampling::{add_noise, merge_by_cell};
use crate::separation::{separate, Connectivity, SeparationParams, DEFAULT_AREA_FACTOR, DEFAULT_GAMMA};
use crate::seed;

/// Where local maps come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ReconstructorKind {
    /// Ground-truth local maps stored in the dataset.
    #[default]
    Oracle,
    /// Inverse-distance weighting of the samples, then the proxy local map.
    Idw,
    /// Ordinary kriging of the samples, then the proxy local map.
    Kriging,
}

impl ReconstructorKind {
    pub fn name(self) -> &'static str {
        match self {
            ReconstructorKind::Oracle => "oracle",
            ReconstructorKind::Idw => "idw",
            ReconstructorKind::Kriging => "kriging",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// Brightest pixel center.
    Argmax,
    /// Intensity-weighted centroid of the component.
    #[default]
    CenterOfMass,
    /// Weighted centroid of the brightest pixel and its four neighbors.
    FourNeighborhood,
}

impl EstimatorKind {
    pub fn build(self) -> Box<dyn Estimator> {
        match self {
            EstimatorKind::Argmax => Box::new(ArgMax),
            EstimatorKind::CenterOfMass => Box::new(CenterOfMass),
            EstimatorKind::FourNeighborhood => Box::new(FourNeighborhood),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub reconstructor: ReconstructorKind,
    pub idw_power: f64,
    pub variogram: VariogramParams,
    pub proxy_delta_db: f64,
    pub estimator: EstimatorKind,
    pub r: f64,
    pub gamma: u8,
    pub g: f64,
    pub connectivity: Connectivity,
    pub area_factor: f64,
    /// Intervals to process; all intervals in the dataset when absent.
    pub intervals: Option<Vec<f64>>,
    /// Extra measurement noise added before reconstruction, dB.
    pub noise_sigma: f64,
    pub seed: u64,
    /// Externally produced local maps, `<dir>/<scenario id>.pgm`, used instead of any
    /// reconstruction.
    pub local_map_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            reconstructor: ReconstructorKind::Oracle,
            idw_power: 2.0,
            variogram: VariogramParams::default(),
            proxy_delta_db: DEFAULT_PROXY_DELTA_DB,
            estimator: EstimatorKind::CenterOfMass,
            r: 2.0,
            gamma: DEFAULT_GAMMA,
            g: DEFAULT_OSPA_CUTOFF,
            connectivity: Connectivity::Eight,
            area_factor: DEFAULT_AREA_FACTOR,
            intervals: None,
            noise_sigma: 0.0,
            seed: 0,
            local_map_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0) || !(self.g > 0.0) || !(self.area_factor > 0.0) {
            return Err(Error::invalid("r, g and area_factor must be positive"));
        }
        if !(self.noise_sigma >= 0.0) || !(self.proxy_delta_db > 0.0) || !(self.idw_power > 0.0) {
            return Err(Error::invalid(
                "noise_sigma must be >= 0, proxy_delta_db and idw_power > 0",
            ));
        }
        self.variogram.validate()
    }

    /// `<local map source>+<estimator>`, e.g. `kriging+center-of-mass`.
    pub fn method_name(&self) -> String {
        let source = if self.local_map_dir.is_some() {
            "external"
        } else {
            self.reconstructor.name()
        };
        format!("{source}+{}", self.estimator.build().name())
    }

    pub fn separation(&self) -> SeparationParams {
        SeparationParams {
            gamma: self.gamma,
            connectivity: self.connectivity,
            r: self.r,
            area_factor: self.area_factor,
        }
    }

    fn uses_samples(&self) -> bool {
        self.local_map_dir.is_none() && self.reconstructor != ReconstructorKind::Oracle
    }
}

/// One scenario, or one (scenario, interval) pair for sample-based reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitResult {
    pub scenario_id: String,
    pub interval_s: Option<f64>,
    pub predictions: Option<PredictionSet>,
    pub eval: ScenarioEval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalReport {
    pub interval_s: Option<f64>,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub method: String,
    pub config: PipelineConfig,
    pub overall: EvalReport,
    pub by_interval: Vec<IntervalReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub units: Vec<UnitResult>,
    pub report: PipelineReport,
}

impl PipelineOutput {
    pub fn failures(&self) -> usize {
        self.report.overall.failed
    }
}

fn external_local_map(dir: &Path, id: &str, dims: (usize, usize)) -> Result<Bitmap> {
    let grid = formats::read_pgm8(&dir.join(format!("{id}.pgm")))?;
    if grid.dims() != dims {
        return Err(Error::invalid(format!(
            "external local map is {}x{}, scenario is {}x{}",
            grid.width(),
            grid.height(),
            dims.0,
            dims.1
        )));
    }
    Ok(RadioMap::new(MapKind::Local, grid))
}

fn local_map_for(ds: &Dataset, cfg: &PipelineConfig, entry: &IndexEntry, file: Option<&SampleFile>) -> Result<Bitmap> {
    let scenario = ds.scenario(entry)?;
    if let Some(dir) = &cfg.local_map_dir {
        return external_local_map(dir, &entry.id, (scenario.width(), scenario.height()));
    }
    let Some(file) = file else {
        return ds.local_map(entry);
    };
    let raw = ds.samples(file)?;
    let noisy = add_noise(&raw, cfg.noise_sigma, seed::derive(cfg.seed, &[file.seed]))?;
    let merged = merge_by_cell(&noisy, scenario.width(), scenario.height())?;
    let dense = match cfg.reconstructor {
        ReconstructorKind::Idw => Idw { power: cfg.idw_power }.reconstruct(&merged, &scenario.layout)?,
        ReconstructorKind::Kriging => Kriging {
            variogram: cfg.variogram,
        }
        .reconstruct(&merged, &scenario.layout)?,
        ReconstructorKind::Oracle => unreachable!("oracle maps are read directly"),
    };
    proxy_local_map(&dense, cfg.proxy_delta_db, cfg.r, &ds.index.config.encoding)
}

fn run_unit(ds: &Dataset, cfg: &PipelineConfig, estimator: &dyn Estimator, entry: &IndexEntry, file: Option<&SampleFile>) -> UnitResult {
    let interval_s = file.map(|f| f.interval_s);
    let attempt = || -> Result<(PredictionSet, ScenarioEval)> {
        let truth = ds.scenario(entry)?.positions();
        let local = local_map_for(ds, cfg, entry, file)?;
        let sep = separate(&local, &cfg.separation())?;
        let preds = localize_all(&sep, estimator)?;
        let eval = ScenarioEval::evaluate(&entry.id, interval_s, &preds.points(), &truth, preds.flagged_count(), cfg.g)?;
        Ok((preds, eval))
    };
    match attempt() {
        Ok((preds, eval)) => UnitResult {
            scenario_id: entry.id.clone(),
            interval_s,
            predictions: Some(preds),
            eval,
        },
        Err(e) => UnitResult {
            scenario_id: entry.id.clone(),
            interval_s,
            predictions: None,
            eval: ScenarioEval::failed(&entry.id, interval_s, entry.source_count, e.to_string()),
        },
    }
}

/// Runs every unit on the current rayon pool. Per-unit failures are recorded in the
/// report; only an invalid configuration or an empty selection is an error.
pub fn run_pipeline(ds: &Dataset, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let estimator = cfg.estimator.build();
    let mut work: Vec<(&IndexEntry, Option<&SampleFile>)> = Vec::new();
    for entry in &ds.index.entries {
        if cfg.uses_samples() {
            for file in &entry.samples {
                let wanted = cfg
                    .intervals
                    .as_ref()
                    .is_none_or(|list| list.contains(&file.interval_s));
                if wanted {
                    work.push((entry, Some(file)));
                }
            }
        } else {
            work.push((entry, None));
        }
    }
    if work.is_empty() {
        return Err(Error::Empty("no scenario matches the selection"));
    }
    let mut units: Vec<UnitResult> = work
        .par_iter()
        .map(|&(entry, file)| run_unit(ds, cfg, estimator.as_ref(), entry, file))
        .collect();
    units.sort_by(|a, b| {
        a.scenario_id
            .cmp(&b.scenario_id)
            .then(a.interval_s.partial_cmp(&b.interval_s).expect("finite intervals"))
    });

    let evals: Vec<ScenarioEval> = units.iter().map(|u| u.eval.clone()).collect();
    let overall = aggregate(&evals)?;
    let mut intervals: Vec<Option<f64>> = units.iter().map(|u| u.interval_s).collect();
    intervals.sort_by(|a, b| a.partial_cmp(b).expect("finite intervals"));
    intervals.dedup();
    let by_interval = intervals
        .into_iter()
        .map(|interval_s| {
            let subset: Vec<ScenarioEval> = evals.iter().filter(|e| e.interval_s == interval_s).cloned().collect();
            let mut report = aggregate(&subset)?;
            report.per_scenario.clear();
            Ok(IntervalReport { interval_s, report })
        })
        .collect::<Result<_>>()?;
    Ok(PipelineOutput {
        units,
        report: PipelineReport {
            method: cfg.method_name(),
            config: cfg.clone(),
            overall,
            by_interval,
        },
    })
}

/// Writes `predictions/[<interval>s/]<id>.csv` and `report.json` under `out`.
pub fn write_outputs(out: &Path, output: &PipelineOutput) -> Result<()> {
    for unit in &output.units {
        let Some(preds) = &unit.predictions else { continue };
        let rel = match unit.interval_s {
            Some(t) => format!("predictions/{}/{}.csv", interval_dir(t), unit.scenario_id),
            None => format!("predictions/{}.csv", unit.scenario_id),
        };
        formats::write_predictions_csv(&out.join(rel), preds)?;
    }
    formats::write_json(&out.join("report.json"), &output.report)
}
