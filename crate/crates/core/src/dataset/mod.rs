//! Synthetic dataset generation and loading.
//!
//! A dataset directory looks like
//!
//! ```text
//! dataset/
//!   index.json
//!   layouts/<layout>[_<aug>].pgm
//!   scenarios/<id>.json
//!   maps/global/<id>.lrmf
//!   maps/local/<id>.pgm
//!   samples/<interval>s/<id>.csv
//! ```
//!
//! Layouts are split between train, validation and test, so no layout appears in two
//! splits. Every file is a pure function of the configuration and its master seed.

pub mod augment;
pub mod formats;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagation::{
    ground_truth_local, rasterize_global, Bitmap, BitmapEncoding, DbmMap, MapKind, PropagationParams, RadioMap,
};
use crate::sampling::{build_routes, sample_along, Route, SampleSet, SamplingMeta, DEFAULT_SPEED, INTERVALS_S};
use crate::scenario::{
    generate_layout, place_sources, place_sources_with_pair, BuildingLayout, Scenario, Source, DEFAULT_MIN_SPACING,
    MAX_SOURCES, MIN_SIDE,
};
use crate::seed;

pub use augment::{augment, augment_scenario, Augmentation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Splits {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }

    /// Split of the `k`-th layout: the first `train` layouts train, then val, then test.
    pub fn of(&self, k: usize) -> Split {
        if k < self.train {
            Split::Train
        } else if k < self.train + self.val {
            Split::Val
        } else {
            Split::Test
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub width: usize,
    pub height: usize,
    /// Buildings per generated layout.
    pub buildings: usize,
    /// Number of layouts per split.
    pub splits: Splits,
    pub source_counts: Vec<usize>,
    /// Source placements per (layout, count).
    pub placements: usize,
    pub intervals_s: Vec<f64>,
    pub speed: f64,
    /// Measurement noise baked into the sample files, dB.
    pub noise_sigma: f64,
    pub min_spacing: f64,
    /// When set, sources 0 and 1 of every scenario sit exactly this far apart.
    pub pair_spacing: Option<f64>,
    /// Local-area radius of the ground-truth local maps, meters.
    pub r: f64,
    pub augmentations: Vec<Augmentation>,
    pub propagation: PropagationParams,
    pub encoding: BitmapEncoding,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            width: 200,
            height: 200,
            buildings: 12,
            splits: Splits {
                train: 8,
                val: 1,
                test: 1,
            },
            source_counts: vec![1, 3, 5, 7],
            placements: 10,
            intervals_s: INTERVALS_S.to_vec(),
            speed: DEFAULT_SPEED,
            noise_sigma: 0.0,
            min_spacing: DEFAULT_MIN_SPACING,
            pair_spacing: None,
            r: 2.0,
            augmentations: vec![Augmentation::Identity],
            propagation: PropagationParams::default(),
            encoding: BitmapEncoding::default(),
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < MIN_SIDE || self.height < MIN_SIDE {
            return Err(Error::invalid(format!("maps must be at least {MIN_SIDE}x{MIN_SIDE}")));
        }
        if self.splits.total() == 0 {
            return Err(Error::invalid("at least one layout is required"));
        }
        if self.source_counts.is_empty() || self.placements == 0 || self.augmentations.is_empty() {
            return Err(Error::invalid(
                "source_counts, placements and augmentations must be non-empty",
            ));
        }
        if let Some(&m) = self.source_counts.iter().find(|&&m| m == 0 || m > MAX_SOURCES) {
            return Err(Error::invalid(format!("source count {m} not in 1..={MAX_SOURCES}")));
        }
        if self.pair_spacing.is_some() && self.source_counts.contains(&1) {
            return Err(Error::invalid("pair_spacing needs every source count to be at least 2"));
        }
        if self.intervals_s.iter().any(|&t| !(t > 0.0)) || !(self.speed > 0.0) {
            return Err(Error::invalid("intervals and speed must be positive"));
        }
        if !(self.noise_sigma >= 0.0) || !(self.min_spacing >= 0.0) || !(self.r > 0.0) {
            return Err(Error::invalid("noise_sigma, min_spacing must be >= 0 and r > 0"));
        }
        if self.width != self.height
            && self
                .augmentations
                .iter()
                .any(|a| matches!(a, Augmentation::Rot90 | Augmentation::Rot270))
        {
            return Err(Error::invalid("quarter-turn augmentations need a square map"));
        }
        self.propagation.validate()?;
        self.encoding.validate()
    }

    pub fn layout_count(&self) -> usize {
        self.splits.total()
    }

    pub fn scenario_count(&self) -> usize {
        self.layout_count() * self.source_counts.len() * self.placements * self.augmentations.len()
    }
}

/// Directory name for an interval, e.g. `2s` or `0.5s`.
pub fn interval_dir(interval_s: f64) -> String {
    format!("{interval_s}s")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFile {
    pub interval_s: f64,
    pub speed: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub count: usize,
    pub path: String,
}

impl SampleFile {
    pub fn meta(&self) -> SamplingMeta {
        SamplingMeta {
            interval_s: self.interval_s,
            speed: self.speed,
            noise_sigma: self.noise_sigma,
            seed: self.seed,
        }
    }
}

/// One scenario's files, with paths relative to the dataset root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub split: Split,
    pub layout_id: String,
    pub augmentation: Augmentation,
    pub source_count: usize,
    pub placement: usize,
    pub scenario: String,
    pub layout: String,
    pub global_map: String,
    pub local_map: String,
    pub samples: Vec<SampleFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub config: DatasetConfig,
    pub entries: Vec<IndexEntry>,
}

/// Scenario metadata as stored in `scenarios/<id>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    pub layout: String,
    pub sources: Vec<Source>,
}

struct Job {
    layout: usize,
    count: usize,
    placement: usize,
    aug: usize,
}

fn layout_name(k: usize) -> String {
    format!("L{k:03}")
}

fn layout_path(k: usize, aug: Augmentation) -> String {
    match aug {
        Augmentation::Identity => format!("layouts/{}.pgm", layout_name(k)),
        a => format!("layouts/{}_{a}.pgm", layout_name(k)),
    }
}

fn scenario_id(job: &Job, aug: Augmentation) -> String {
    let base = format!("{}_m{}_p{:02}", layout_name(job.layout), job.count, job.placement);
    match aug {
        Augmentation::Identity => base,
        a => format!("{base}_{a}"),
    }
}

/// The un-augmented scenario for one (layout, count, placement) cell of the grid.
fn base_scenario(config: &DatasetConfig, layout: &BuildingLayout, job: &Job, id: &str) -> Result<Scenario> {
    let s = seed::derive(config.seed, &[2, job.layout as u64, job.count as u64, job.placement as u64]);
    let (sources, spacing) = match config.pair_spacing {
        Some(pair) => (
            place_sources_with_pair(layout, job.count, pair, config.min_spacing, s)?,
            pair.min(config.min_spacing),
        ),
        None => (place_sources(layout, job.count, config.min_spacing, s)?, config.min_spacing),
    };
    Scenario::new(id, layout.clone(), sources, s, spacing)
}

struct Written {
    entry: IndexEntry,
    files: Vec<(String, Vec<u8>)>,
}

fn build_scenario(
    config: &DatasetConfig,
    layouts: &[BuildingLayout],
    routes: &[Vec<(BuildingLayout, Route)>],
    job: &Job,
) -> Result<Written> {
    let aug = config.augmentations[job.aug];
    let id = scenario_id(job, aug);
    let inner = || -> Result<Written> {
        let base_id = scenario_id(job, Augmentation::Identity);
        let base = base_scenario(config, &layouts[job.layout], job, &base_id)?;
        let mut scenario = augment_scenario(&base, aug)?;
        scenario.id.clone_from(&id);
        let (_, route) = &routes[job.layout][job.aug];

        let global = rasterize_global(&scenario, &config.propagation, &config.encoding);
        let local = ground_truth_local(&scenario, &config.propagation, config.r, &config.encoding)?;

        let layout = layout_path(job.layout, aug);
        let entry_paths = (
            format!("scenarios/{id}.json"),
            format!("maps/global/{id}.lrmf"),
            format!("maps/local/{id}.pgm"),
        );
        let meta = ScenarioFile {
            id: id.clone(),
            width: scenario.width(),
            height: scenario.height(),
            seed: scenario.seed,
            layout: layout.clone(),
            sources: scenario.sources.clone(),
        };
        let mut json = serde_json::to_vec_pretty(&meta)?;
        json.push(b'\n');
        let mut files = vec![
            (entry_paths.0.clone(), json),
            (entry_paths.1.clone(), formats::encode_lrmf(&global.values)),
            (entry_paths.2.clone(), formats::encode_pgm8(&local.values)),
        ];

        let mut samples = Vec::with_capacity(config.intervals_s.len());
        for (k, &interval) in config.intervals_s.iter().enumerate() {
            let noise_seed = seed::derive(
                config.seed,
                &[3, job.layout as u64, job.count as u64, job.placement as u64, job.aug as u64, k as u64],
            );
            let set = sample_along(route, &global, interval, config.speed, config.noise_sigma, noise_seed)?;
            let path = format!("samples/{}/{id}.csv", interval_dir(interval));
            files.push((path.clone(), formats::encode_samples_csv(&set)));
            samples.push(SampleFile {
                interval_s: interval,
                speed: config.speed,
                noise_sigma: set.noise_sigma,
                seed: noise_seed,
                count: set.len(),
                path,
            });
        }
        Ok(Written {
            entry: IndexEntry {
                id: id.clone(),
                split: config.splits.of(job.layout),
                layout_id: layout_name(job.layout),
                augmentation: aug,
                source_count: job.count,
                placement: job.placement,
                scenario: entry_paths.0,
                layout,
                global_map: entry_paths.1,
                local_map: entry_paths.2,
                samples,
            },
            files,
        })
    };
    inner().map_err(|e| e.in_scenario(id.clone()))
}

fn ensure_empty_target(out: &Path) -> Result<()> {
    match fs::read_dir(out) {
        Ok(mut it) => {
            if it.next().is_some() {
                return Err(Error::invalid(format!(
                    "output directory {} already exists and is not empty",
                    out.display()
                )));
            }
            fs::remove_dir(out).map_err(|e| Error::io(out, e))
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(Error::io(out, e)),
    }
}

fn staging_dir(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_else(|| "dataset".into());
    name.push(".partial");
    out.with_file_name(name)
}

/// Generates the whole dataset under `out`, which must not exist or be empty.
///
/// Files are first written to a sibling staging directory that is renamed into place
/// on success and removed on failure, so a failed run leaves nothing behind.
pub fn generate_dataset(config: &DatasetConfig, out: &Path) -> Result<DatasetIndex> {
    config.validate()?;
    ensure_empty_target(out)?;
    let staging = staging_dir(out);
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    let result = generate_into(config, &staging);
    match result {
        Ok(index) => {
            fs::rename(&staging, out).map_err(|e| Error::io(out, e))?;
            Ok(index)
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

fn generate_into(config: &DatasetConfig, root: &Path) -> Result<DatasetIndex> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let layouts: Vec<BuildingLayout> = (0..config.layout_count())
        .into_par_iter()
        .map(|k| {
            let s = seed::derive(config.seed, &[1, k as u64]);
            generate_layout(config.width, config.height, config.buildings, s)
                .map_err(|e| e.in_scenario(layout_name(k)))
        })
        .collect::<Result<_>>()?;

    let routes: Vec<Vec<(BuildingLayout, Route)>> = layouts
        .par_iter()
        .enumerate()
        .map(|(k, layout)| {
            config
                .augmentations
                .iter()
                .map(|&aug| {
                    let moved = BuildingLayout::new(aug.apply_grid(layout.cells())?)?;
                    let route = build_routes(&moved)?;
                    formats::write_pgm8(&root.join(layout_path(k, aug)), &moved.to_image())?;
                    Ok((moved, route))
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.in_scenario(layout_name(k)))
        })
        .collect::<Result<_>>()?;

    let mut jobs = Vec::with_capacity(config.scenario_count());
    for layout in 0..config.layout_count() {
        for &count in &config.source_counts {
            for placement in 0..config.placements {
                for aug in 0..config.augmentations.len() {
                    jobs.push(Job {
                        layout,
                        count,
                        placement,
                        aug,
                    });
                }
            }
        }
    }
    let entries: Vec<IndexEntry> = jobs
        .par_iter()
        .map(|job| {
            let written = build_scenario(config, &layouts, &routes, job)?;
            for (path, bytes) in &written.files {
                formats::write_bytes(&root.join(path), bytes)?;
            }
            Ok(written.entry)
        })
        .collect::<Result<_>>()?;

    let index = DatasetIndex {
        config: config.clone(),
        entries,
    };
    formats::write_json(&root.join("index.json"), &index)?;
    Ok(index)
}

/// A generated dataset opened for reading.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub index: DatasetIndex,
}

impl Dataset {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let index = formats::read_json(&root.join("index.json"))?;
        Ok(Dataset { root, index })
    }

    pub fn path(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }

    pub fn scenario(&self, entry: &IndexEntry) -> Result<Scenario> {
        let meta: ScenarioFile = formats::read_json(&self.path(&entry.scenario))?;
        let layout = BuildingLayout::from_image(&formats::read_pgm8(&self.path(&meta.layout))?)?;
        if (layout.width(), layout.height()) != (meta.width, meta.height) {
            return Err(Error::invalid(format!(
                "layout {} does not match the scenario size",
                meta.layout
            )));
        }
        Scenario::new(meta.id, layout, meta.sources, meta.seed, 0.0)
    }

    pub fn global_map(&self, entry: &IndexEntry) -> Result<DbmMap> {
        Ok(RadioMap::new(MapKind::Global, formats::read_lrmf(&self.path(&entry.global_map))?))
    }

    pub fn local_map(&self, entry: &IndexEntry) -> Result<Bitmap> {
        Ok(RadioMap::new(MapKind::Local, formats::read_pgm8(&self.path(&entry.local_map))?))
    }

    pub fn samples(&self, file: &SampleFile) -> Result<SampleSet> {
        formats::read_samples_csv(&self.path(&file.path), file.meta())
    }
}
