//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error, 3 when some
//! scenarios failed but the batch completed.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use crate::dataset::formats;
use crate::dataset::{generate_dataset, interval_dir, Dataset, DatasetConfig};
use crate::error::Error;
use crate::metrics::{aggregate, format_table, EvalReport, ScenarioEval, DEFAULT_OSPA_CUTOFF};
use crate::pipeline::{run_pipeline, write_outputs, EstimatorKind, PipelineConfig, PipelineReport, ReconstructorKind};
use crate::propagation::BitmapEncoding;
use crate::render::{render, RenderOptions};
use crate::scenario::BuildingLayout;
use crate::separation::Connectivity;

#[derive(Debug, Parser)]
#[command(name = "rssloc", version, about = "Multi-source RSS localization toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Generate(GenerateArgs),
    /// Run separation, localization and evaluation over a dataset.
    Pipeline(PipelineArgs),
    /// Print metric tables from pipeline reports or prediction files.
    Evaluate(EvaluateArgs),
    /// Render a map with buildings, truths and predictions to a PPM image.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Dataset configuration (JSON); defaults are used for missing fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; must not exist or be empty.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the master seed of the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Dataset directory containing index.json.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output directory for predictions and report.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Pipeline configuration (JSON); flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Local map source.
    #[arg(long, value_enum)]
    pub reconstructor: Option<ReconstructorKind>,
    /// Position estimator applied to each separated component.
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorKind>,
    /// Local-area radius in meters.
    #[arg(long)]
    pub r: Option<f64>,
    /// Binarization threshold.
    #[arg(long)]
    pub gamma: Option<u8>,
    /// OSPA cutoff in meters.
    #[arg(long)]
    pub g: Option<f64>,
    /// Pixel connectivity for component labeling.
    #[arg(long, value_parser = ["4", "8"])]
    pub connectivity: Option<String>,
    /// Sampling intervals to process, comma separated (default: all).
    #[arg(long, value_delimiter = ',')]
    pub intervals: Option<Vec<f64>>,
    /// Extra measurement noise in dB added before reconstruction.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Seed for the extra noise.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory of externally produced local maps, `<scenario id>.pgm`.
    #[arg(long)]
    pub local_map_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Pipeline report files to tabulate.
    pub reports: Vec<PathBuf>,
    /// Dataset providing ground truth for `--predictions`.
    #[arg(long, requires = "predictions")]
    pub dataset: Option<PathBuf>,
    /// Pipeline output directory whose predictions are scored against `--dataset`.
    #[arg(long, requires = "dataset")]
    pub predictions: Option<PathBuf>,
    /// Row label for `--predictions`.
    #[arg(long, default_value = "predictions")]
    pub name: String,
    /// OSPA cutoff in meters for `--predictions`.
    #[arg(long, default_value_t = DEFAULT_OSPA_CUTOFF)]
    pub g: f64,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Map to draw: an 8-bit PGM, or an LRMF dBm raster.
    #[arg(long)]
    pub map: PathBuf,
    /// Layout PGM; buildings are drawn in blue.
    #[arg(long)]
    pub layout: Option<PathBuf>,
    /// Scenario JSON whose sources are drawn as green crosses.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Predictions CSV drawn as red crosses.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Output pixels per map cell.
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
    /// Output PPM path.
    #[arg(long)]
    pub out: PathBuf,
}

/// A command failure mapped to an exit code.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
        }
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn data(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Data(e.into())
}

/// Configuration problems are usage errors; everything else is a data error.
fn classify(e: Error) -> Failure {
    match e {
        Error::InvalidInput(_) => usage(e),
        other => data(other),
    }
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(usage(anyhow::anyhow!("--jobs must be at least 1"))),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(data)?;
            Ok(pool.install(f))
        }
    }
}

fn cmd_generate(args: GenerateArgs) -> Result<u8, Failure> {
    let mut config: DatasetConfig = match &args.config {
        Some(path) => formats::read_json(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(usage)?,
        None => DatasetConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate().map_err(usage)?;
    let index = with_jobs(args.jobs, || generate_dataset(&config, &args.out))?.map_err(classify)?;
    println!("wrote {} scenarios to {}", index.entries.len(), args.out.display());
    Ok(0)
}

fn pipeline_config(args: &PipelineArgs) -> Result<PipelineConfig, Failure> {
    let mut cfg: PipelineConfig = match &args.config {
        Some(path) => formats::read_json(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(usage)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = args.reconstructor {
        cfg.reconstructor = v;
    }
    if let Some(v) = args.estimator {
        cfg.estimator = v;
    }
    if let Some(v) = args.r {
        cfg.r = v;
    }
    if let Some(v) = args.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = args.g {
        cfg.g = v;
    }
    if let Some(v) = &args.connectivity {
        let n: u32 = v.parse().map_err(usage)?;
        cfg.connectivity = Connectivity::from_count(n).map_err(usage)?;
    }
    if let Some(v) = &args.intervals {
        cfg.intervals = Some(v.clone());
    }
    if let Some(v) = args.noise_sigma {
        cfg.noise_sigma = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = &args.local_map_dir {
        cfg.local_map_dir = Some(v.clone());
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn cmd_pipeline(args: PipelineArgs) -> Result<u8, Failure> {
    let cfg = pipeline_config(&args)?;
    let ds = Dataset::open(&args.dataset)
        .with_context(|| format!("opening dataset {}", args.dataset.display()))
        .map_err(data)?;
    let output = with_jobs(args.jobs, || run_pipeline(&ds, &cfg))?.map_err(classify)?;
    write_outputs(&args.out, &output).map_err(data)?;
    print!("{}", format_table(&[(output.report.method.clone(), &output.report.overall)]));
    for unit in output.units.iter().filter(|u| u.eval.error.is_some()) {
        eprintln!(
            "failed: {}{}: {}",
            unit.scenario_id,
            unit.interval_s.map(|t| format!(" @ {t} s")).unwrap_or_default(),
            unit.eval.error.as_deref().unwrap_or_default()
        );
    }
    Ok(if output.failures() > 0 { 3 } else { 0 })
}

fn score_predictions(dataset: &Path, run: &Path, g: f64) -> anyhow::Result<EvalReport> {
    let ds = Dataset::open(dataset)?;
    let mut evals = Vec::new();
    let mut intervals: Vec<f64> = ds
        .index
        .entries
        .iter()
        .flat_map(|e| e.samples.iter().map(|s| s.interval_s))
        .collect();
    intervals.sort_by(f64::total_cmp);
    intervals.dedup();
    for entry in &ds.index.entries {
        let truth = ds.scenario(entry)?.positions();
        let mut candidates = vec![(None, run.join(format!("predictions/{}.csv", entry.id)))];
        for &t in &intervals {
            candidates.push((Some(t), run.join(format!("predictions/{}/{}.csv", interval_dir(t), entry.id))));
        }
        let found: Vec<_> = candidates.into_iter().filter(|(_, p)| p.exists()).collect();
        if found.is_empty() {
            evals.push(ScenarioEval::failed(&entry.id, None, truth.len(), "no predictions file".into()));
        }
        for (interval, path) in found {
            let preds = formats::read_predictions_csv(&path)?;
            evals.push(ScenarioEval::evaluate(&entry.id, interval, &preds.points(), &truth, preds.flagged_count(), g)?);
        }
    }
    Ok(aggregate(&evals)?)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<u8, Failure> {
    let mut rows: Vec<(String, EvalReport)> = Vec::new();
    for path in &args.reports {
        let report: PipelineReport = formats::read_json(path)
            .with_context(|| format!("reading report {}", path.display()))
            .map_err(data)?;
        rows.push((report.method.clone(), report.overall.clone()));
        if report.by_interval.len() > 1 {
            for ir in &report.by_interval {
                if let Some(t) = ir.interval_s {
                    rows.push((format!("{} @ {t} s", report.method), ir.report.clone()));
                }
            }
        }
    }
    if let (Some(dataset), Some(run)) = (&args.dataset, &args.predictions) {
        rows.push((args.name.clone(), score_predictions(dataset, run, args.g).map_err(data)?));
    }
    if rows.is_empty() {
        return Err(usage(anyhow::anyhow!("give report files or --dataset with --predictions")));
    }
    if args.json {
        let obj: serde_json::Map<String, serde_json::Value> = rows
            .iter()
            .map(|(name, r)| Ok((name.clone(), serde_json::to_value(r)?)))
            .collect::<Result<_, serde_json::Error>>()
            .map_err(data)?;
        println!("{}", serde_json::to_string_pretty(&obj).map_err(data)?);
    } else {
        let refs: Vec<(String, &EvalReport)> = rows.iter().map(|(n, r)| (n.clone(), r)).collect();
        print!("{}", format_table(&refs));
    }
    Ok(0)
}

fn cmd_render(args: RenderArgs) -> Result<u8, Failure> {
    let is_lrmf = args.map.extension().is_some_and(|e| e.eq_ignore_ascii_case("lrmf"));
    let map = if is_lrmf {
        let enc = BitmapEncoding::default();
        formats::read_lrmf(&args.map).map_err(data)?.map(|&p| enc.encode(p))
    } else {
        formats::read_pgm8(&args.map).map_err(data)?
    };
    let layout = match &args.layout {
        Some(p) => Some(
            formats::read_pgm8(p)
                .and_then(|g| BuildingLayout::from_image(&g))
                .map_err(data)?,
        ),
        None => None,
    };
    let truths = match &args.scenario {
        Some(p) => {
            let s: crate::dataset::ScenarioFile = formats::read_json(p).map_err(data)?;
            s.sources.iter().map(|s| s.position).collect()
        }
        None => vec![],
    };
    let preds = match &args.predictions {
        Some(p) => formats::read_predictions_csv(p).map_err(data)?.points(),
        None => vec![],
    };
    let opts = RenderOptions {
        scale: args.scale,
        arm: 2 * args.scale.max(1),
    };
    let img = render(&map, layout.as_ref(), &truths, &preds, opts).map_err(classify)?;
    formats::write_bytes(&args.out, &formats::encode_ppm(&img)).map_err(data)?;
    Ok(0)
}

/// The error chain joined by `: `, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Pipeline(a) => cmd_pipeline(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Render(a) => cmd_render(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            let code = f.code();
            let (Failure::Usage(e) | Failure::Data(e)) = f;
            eprintln!("error: {}", describe(&e));
            ExitCode::from(code)
        }
    }
}
