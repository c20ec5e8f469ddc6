//! Command-line interface.
//!
//! Exit codes: 0 success, 2 invalid arguments or configuration, 3 bad or
//! missing data, 4 internal failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::baselines::{Baseline, BaselineError, KrigingConfig, VariogramKind, DEFAULT_KEYS_A};
use crate::cluster::{Connectivity, MainBy};
use crate::grid::{GridGeometry, PrecipSequence};
use crate::harness::{
    self, crossval, export_inputs, make_folds, scatter, Aggregation, CrossvalResult, HarnessError, Leaderboard,
    LeaderboardFormat, LeaderboardRow, Method, RunOptions,
};
use crate::io::{self, build_index, read_pair, write_pair, ContainerFormat, IoError, ReadOptions};
use crate::metrics::{evaluate, MetricConfig, MetricError};
use crate::synth::{degrade, generate_event, write_corpus, CorpusSpec, EventConfig, EventTemplate, SensorConfig, SynthError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Data(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Data(_) => EXIT_DATA,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::InvalidTau(_)
            | MetricError::InvalidHeavyThreshold(_)
            | MetricError::Cluster(_)
            | MetricError::NonPositiveAmo { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::InvalidFactor(_) | BaselineError::InvalidParameter(_) => CliError::Validation(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Io(io) => io.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        let msg = e.to_string();
        match e.root() {
            HarnessError::Metric(m) => match CliError::from(m.clone()) {
                CliError::Validation(_) => CliError::Validation(msg),
                _ => CliError::Data(msg),
            },
            HarnessError::Baseline(b) => match CliError::from(b.clone()) {
                CliError::Validation(_) => CliError::Validation(msg),
                _ => CliError::Data(msg),
            },
            HarnessError::Pool(_) => CliError::Internal(msg),
            _ => CliError::Data(msg),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "rainbench", version, about = "Precipitation downscaling evaluation toolkit")]
pub struct Cli {
    /// JSON configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic HR event and its degraded LR pair.
    Generate(GenerateArgs),
    /// Write a multi-year synthetic dataset of monthly pairs.
    GenerateCorpus(CorpusArgs),
    /// Degrade an HR sequence into LR with a sensor model.
    Degrade(DegradeArgs),
    /// Upsample an LR sequence with a classical baseline.
    Downscale(DownscaleArgs),
    /// Score a prediction against observations.
    Evaluate(EvaluateArgs),
    /// Write LR inputs and a manifest for external models.
    ExportInputs(ExportArgs),
    /// Cross-validate predictions produced by an external model.
    ScoreExternal(ScoreExternalArgs),
    /// Cross-validate baselines over a dataset.
    Crossval(CrossvalArgs),
    /// Render a leaderboard and scatter plot from crossval output.
    Report(ReportArgs),
}

/// Keys accepted in the `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub metric: MetricConfig,
    pub read: ReadOptions,
    pub sensor: SensorConfig,
    pub event: Option<EventConfig>,
    pub corpus: Option<CorpusSpec>,
    pub kriging: KrigingConfig,
    pub kernel_a: Option<f64>,
    pub workers: Option<usize>,
    pub data_root: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Args, Default)]
pub struct MetricArgs {
    /// Quantile level for MPPE.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Heavy-rain threshold for HRRE, mm/hour.
    #[arg(long)]
    pub heavy_threshold: Option<f64>,
    /// Rain threshold for cluster membership, mm/hour.
    #[arg(long)]
    pub rain_threshold: Option<f64>,
    /// Pixel connectivity for clusters (4 or 8).
    #[arg(long)]
    pub connectivity: Option<u8>,
    /// Main-cluster selection rule.
    #[arg(long, value_enum)]
    pub main_by: Option<MainByArg>,
    #[arg(long)]
    pub amo_mppe: Option<f64>,
    #[arg(long)]
    pub amo_hrre: Option<f64>,
    #[arg(long)]
    pub amo_ammd: Option<f64>,
    #[arg(long)]
    pub amo_cpmse: Option<f64>,
    #[arg(long)]
    pub amo_hrts: Option<f64>,
    #[arg(long)]
    pub amo_cmd: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MainByArg {
    Mass,
    PixelCount,
}

impl MetricArgs {
    pub fn apply(&self, mut c: MetricConfig) -> Result<MetricConfig, CliError> {
        macro_rules! set {
            ($flag:expr, $field:expr) => {
                if let Some(v) = $flag {
                    $field = v;
                }
            };
        }
        set!(self.tau, c.quantile_tau);
        set!(self.heavy_threshold, c.heavy_threshold);
        set!(self.rain_threshold, c.cluster.rain_threshold);
        if let Some(n) = self.connectivity {
            c.cluster.connectivity = Connectivity::try_from(n).map_err(|e| CliError::Validation(e.to_string()))?;
        }
        if let Some(m) = self.main_by {
            c.cluster.main_by = match m {
                MainByArg::Mass => MainBy::Mass,
                MainByArg::PixelCount => MainBy::PixelCount,
            };
        }
        set!(self.amo_mppe, c.amo.mppe);
        set!(self.amo_hrre, c.amo.hrre);
        set!(self.amo_ammd, c.amo.ammd);
        set!(self.amo_cpmse, c.amo.cpmse);
        set!(self.amo_hrts, c.amo.hrts);
        set!(self.amo_cmd, c.amo.cmd);
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Args, Default)]
pub struct ReadArgs {
    /// HR dataset name inside HDF5 files.
    #[arg(long)]
    pub hdf5_hr_name: Option<String>,
    /// LR dataset name inside HDF5 files.
    #[arg(long)]
    pub hdf5_lr_name: Option<String>,
    /// Stored value meaning "missing", read as 0.
    #[arg(long, allow_hyphen_values = true)]
    pub missing_sentinel: Option<f32>,
}

impl ReadArgs {
    pub fn apply(&self, mut r: ReadOptions) -> ReadOptions {
        if let Some(n) = &self.hdf5_hr_name {
            r.hdf5_hr_name = n.clone();
        }
        if let Some(n) = &self.hdf5_lr_name {
            r.hdf5_lr_name = n.clone();
        }
        if self.missing_sentinel.is_some() {
            r.missing_sentinel = self.missing_sentinel;
        }
        r
    }
}

#[derive(Debug, Clone, Args, Default)]
pub struct BaselineArgs {
    /// Bicubic kernel parameter a.
    #[arg(long, allow_hyphen_values = true)]
    pub kernel_a: Option<f64>,
    /// Kriging neighbourhood size.
    #[arg(long)]
    pub k: Option<usize>,
    /// Kriging variogram family.
    #[arg(long, value_enum)]
    pub variogram: Option<VariogramArg>,
    #[arg(long)]
    pub bin_width_km: Option<f64>,
    #[arg(long)]
    pub max_lag_km: Option<f64>,
    /// Pair cap for the empirical variogram (0 disables subsampling).
    #[arg(long)]
    pub sample_cap: Option<u64>,
    #[arg(long)]
    pub kriging_seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariogramArg {
    Exponential,
    Spherical,
    Gaussian,
}

impl BaselineArgs {
    pub fn build(&self, name: &str, file: &FileConfig) -> Result<Baseline, CliError> {
        let base = Baseline::from_name(name)?;
        Ok(match base {
            Baseline::Bicubic { .. } => Baseline::Bicubic {
                a: self.kernel_a.or(file.kernel_a).unwrap_or(DEFAULT_KEYS_A),
            },
            Baseline::Kriging(_) => {
                let mut k = file.kriging;
                if let Some(v) = self.k {
                    k.neighborhood_k = v;
                }
                if let Some(v) = self.variogram {
                    k.kind = match v {
                        VariogramArg::Exponential => VariogramKind::Exponential,
                        VariogramArg::Spherical => VariogramKind::Spherical,
                        VariogramArg::Gaussian => VariogramKind::Gaussian,
                    };
                }
                if self.bin_width_km.is_some() {
                    k.bin_width_km = self.bin_width_km;
                }
                if self.max_lag_km.is_some() {
                    k.max_lag_km = self.max_lag_km;
                }
                if let Some(cap) = self.sample_cap {
                    k.sample_cap = (cap > 0).then_some(cap);
                }
                if let Some(s) = self.kriging_seed {
                    k.seed = s;
                }
                Baseline::Kriging(k)
            }
            other => other,
        })
    }
}

#[derive(Debug, Clone, Args, Default)]
pub struct SensorArgs {
    #[arg(long)]
    pub blur_sigma_km: Option<f64>,
    #[arg(long)]
    pub gain: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub shift_x_km: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub shift_y_km: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub time_offset_hours: Option<f64>,
}

impl SensorArgs {
    pub fn apply(&self, mut s: SensorConfig) -> Result<SensorConfig, CliError> {
        if let Some(v) = self.blur_sigma_km {
            s.blur_sigma_km = v;
        }
        if let Some(v) = self.gain {
            s.gain = v;
        }
        if let Some(v) = self.noise_sigma {
            s.noise_sigma = v;
        }
        if let Some(v) = self.shift_x_km {
            s.misalign_shift_km.0 = v;
        }
        if let Some(v) = self.shift_y_km {
            s.misalign_shift_km.1 = v;
        }
        if let Some(v) = self.time_offset_hours {
            s.misalign_time_hours = v;
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TemplateArg {
    HurricaneLike,
    SquallLike,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output pair container (`.rnb`).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum)]
    pub template: Option<TemplateArg>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    #[arg(long)]
    pub pixel_size_km: Option<f64>,
    #[arg(long)]
    pub factor: Option<usize>,
    /// Also write the ground-truth dynamics as JSON.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[command(flatten)]
    pub sensor: SensorArgs,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub first_year: Option<i32>,
    #[arg(long)]
    pub years: Option<usize>,
    /// Comma-separated month numbers.
    #[arg(long, value_delimiter = ',')]
    pub months: Option<Vec<u32>>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    #[command(flatten)]
    pub sensor: SensorArgs,
}

#[derive(Debug, Args)]
pub struct DegradeArgs {
    /// HR sequence, or a pair whose HR half is used.
    #[arg(long)]
    pub input: PathBuf,
    /// Output pair container holding the HR input and the new LR.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub factor: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub sensor: SensorArgs,
}

#[derive(Debug, Args)]
pub struct DownscaleArgs {
    /// LR sequence, or a pair whose LR half is used.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// nearest, bilinear, bicubic or kriging.
    #[arg(long, default_value = "bicubic")]
    pub method: String,
    #[arg(long, default_value_t = 3)]
    pub factor: usize,
    #[command(flatten)]
    pub baseline: BaselineArgs,
    #[command(flatten)]
    pub read: ReadArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predicted HR sequence (`.rnb`).
    #[arg(long)]
    pub pred: PathBuf,
    /// Observed HR sequence, or a pair (`.rnb` or HDF5) whose HR half is used.
    #[arg(long)]
    pub obs: PathBuf,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also print the non-canonical temporal-derivative RMSE.
    #[arg(long)]
    pub derivative_diagnostic: bool,
    #[command(flatten)]
    pub metric: MetricArgs,
    #[command(flatten)]
    pub read: ReadArgs,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Directory of monthly `YYYY-MM` files.
    #[arg(long, env = "RAINBENCH_DATA_ROOT")]
    pub data_root: Option<PathBuf>,
    #[command(flatten)]
    pub read: ReadArgs,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Exchange directory to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory for crossval.json, leaderboards and scatter files.
    #[arg(long)]
    pub out: PathBuf,
    /// Aggregation used for the leaderboard files.
    #[arg(long, value_enum, default_value_t = AggregationArg::FoldMean)]
    pub aggregation: AggregationArg,
    #[command(flatten)]
    pub metric: MetricArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AggregationArg {
    FoldMean,
    FrameWeighted,
}

impl From<AggregationArg> for Aggregation {
    fn from(a: AggregationArg) -> Self {
        match a {
            AggregationArg::FoldMean => Aggregation::FoldMean,
            AggregationArg::FrameWeighted => Aggregation::FrameWeighted,
        }
    }
}

#[derive(Debug, Args)]
pub struct ScoreExternalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Directory holding `<id>.pred.rnb` files.
    #[arg(long)]
    pub exchange: PathBuf,
    /// Name shown in the leaderboard.
    #[arg(long, default_value = "external")]
    pub name: String,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated baseline names.
    #[arg(long, default_value = "bicubic,kriging", value_delimiter = ',')]
    pub methods: Vec<String>,
    #[command(flatten)]
    pub baseline: BaselineArgs,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// One or more crossval.json files; their methods are merged.
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long, default_value = "markdown")]
    pub format: LeaderboardFormat,
    #[arg(long, value_enum, default_value_t = AggregationArg::FoldMean)]
    pub aggregation: AggregationArg,
    /// Write the leaderboard here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub scatter_csv: Option<PathBuf>,
    #[arg(long)]
    pub scatter_svg: Option<PathBuf>,
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Data(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_file(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

/// Reads a container with one sequence, or picks one half of a pair.
fn read_any(path: &Path, read: &ReadOptions, want_hr: bool) -> Result<PrecipSequence, CliError> {
    let format = ContainerFormat::from_path(path)
        .ok_or_else(|| CliError::Validation(format!("{}: unknown container extension", path.display())))?;
    if format == ContainerFormat::Rnb {
        let mut seqs = io::read_rnb(path, read.missing_sentinel)?;
        if seqs.len() == 1 {
            return Ok(seqs.pop().expect("one sequence"));
        }
    }
    let (hr, lr) = read_pair(path, format, read)?;
    Ok(if want_hr { hr } else { lr })
}

fn data_root(args: &DataArgs, file: &FileConfig) -> Result<PathBuf, CliError> {
    args.data_root
        .clone()
        .or_else(|| file.data_root.clone())
        .ok_or_else(|| CliError::Validation("no data root: pass --data-root or set RAINBENCH_DATA_ROOT".into()))
}

fn write_run_outputs(result: &CrossvalResult, dir: &Path, aggregation: Aggregation) -> Result<String, CliError> {
    let json = serde_json::to_string_pretty(result).map_err(|e| CliError::Internal(e.to_string()))?;
    write_file(&dir.join("crossval.json"), &json)?;
    let rows = result.rows(aggregation);
    let board = Leaderboard::new(rows.clone())?;
    write_file(&dir.join("leaderboard.csv"), &board.to_csv())?;
    write_file(&dir.join("leaderboard.md"), &board.to_markdown())?;
    write_file(&dir.join("leaderboard.json"), &board.render(LeaderboardFormat::Json))?;
    let points = harness::scatter_points(&rows)?;
    write_file(&dir.join("scatter.csv"), &scatter::to_csv(&points))?;
    write_file(&dir.join("scatter.svg"), &scatter::to_svg(&points))?;
    Ok(board.to_markdown())
}

fn run_command(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(a) => {
            let mut event = file.event.clone().unwrap_or_default();
            if let Some(t) = a.template {
                event.template = Some(match t {
                    TemplateArg::HurricaneLike => EventTemplate::HurricaneLike,
                    TemplateArg::SquallLike => EventTemplate::SquallLike,
                });
            }
            if let Some(f) = a.frames {
                event.frames = f;
            }
            if let Some(f) = a.factor {
                event.factor = f;
            }
            if a.rows.is_some() || a.cols.is_some() || a.pixel_size_km.is_some() {
                let g = event.geometry;
                event.geometry = GridGeometry::with_timestep(
                    a.rows.unwrap_or(g.rows()),
                    a.cols.unwrap_or(g.cols()),
                    a.pixel_size_km.unwrap_or(g.pixel_size_km()),
                    g.timestep_hours(),
                )
                .map_err(|e| CliError::Validation(e.to_string()))?;
            }
            let sensor = a.sensor.apply(file.sensor)?;
            let (hr, truth) = generate_event(&event, a.seed)?;
            let lr = degrade(&hr, &sensor, event.factor, a.seed)?;
            write_pair(&a.out, &hr.to_storage_precision(), &lr.to_storage_precision())?;
            if let Some(p) = a.truth {
                let mut doc = serde_json::to_value(&truth).map_err(|e| CliError::Internal(e.to_string()))?;
                doc["per_frame"] = serde_json::to_value(truth.per_frame()).map_err(|e| CliError::Internal(e.to_string()))?;
                write_file(&p, &serde_json::to_string_pretty(&doc).expect("json value"))?;
            }
            Ok(())
        }
        Command::GenerateCorpus(a) => {
            let mut spec = file.corpus.clone().unwrap_or_default();
            if let Some(e) = &file.event {
                spec.event = e.clone();
            }
            if let Some(v) = a.first_year {
                spec.first_year = v;
            }
            if let Some(v) = a.years {
                spec.years = v;
            }
            if let Some(v) = a.months {
                spec.months = v;
            }
            if let Some(v) = a.frames {
                spec.event.frames = v;
            }
            if a.rows.is_some() || a.cols.is_some() {
                let g = spec.event.geometry;
                spec.event.geometry = GridGeometry::with_timestep(
                    a.rows.unwrap_or(g.rows()),
                    a.cols.unwrap_or(g.cols()),
                    g.pixel_size_km(),
                    g.timestep_hours(),
                )
                .map_err(|e| CliError::Validation(e.to_string()))?;
            }
            spec.sensor = a.sensor.apply(spec.sensor)?;
            let paths = write_corpus(&a.out, &spec, a.seed)?;
            eprintln!("wrote {} monthly files to {}", paths.len(), a.out.display());
            Ok(())
        }
        Command::Degrade(a) => {
            let sensor = a.sensor.apply(file.sensor)?;
            let hr = read_any(&a.input, &file.read, true)?;
            let lr = degrade(&hr, &sensor, a.factor, a.seed)?;
            write_pair(&a.out, &hr.to_storage_precision(), &lr.to_storage_precision())?;
            Ok(())
        }
        Command::Downscale(a) => {
            let read = a.read.apply(file.read.clone());
            let baseline = a.baseline.build(&a.method, &file)?;
            let lr = read_any(&a.input, &read, false)?;
            let (hr, report) = crate::baselines::downscale_sequence(&lr, a.factor, &baseline)?;
            io::write_sequence(&a.out, &hr)?;
            if report.singular_fallbacks > 0 || report.degenerate_fits > 0 {
                eprintln!(
                    "kriging: {} singular fallbacks, {} degenerate variogram fits",
                    report.singular_fallbacks, report.degenerate_fits
                );
            }
            Ok(())
        }
        Command::Evaluate(a) => {
            let metric = a.metric.apply(file.metric)?;
            let read = a.read.apply(file.read.clone());
            let pred = read_any(&a.pred, &read, true)?;
            let obs = read_any(&a.obs, &read, true)?;
            let report = evaluate(&pred, &obs, &metric)?;
            let mut json = report.to_json();
            if a.derivative_diagnostic {
                let d = crate::metrics::temporal_derivative_rmse(&pred, &obs)?;
                let mut v: serde_json::Value = serde_json::from_str(&json).expect("report json");
                v["diagnostic_temporal_derivative_rmse"] = d.into();
                json = serde_json::to_string_pretty(&v).expect("json value");
            }
            json.push('\n');
            emit(a.out.as_deref(), &json)
        }
        Command::ExportInputs(a) => {
            let read = a.data.read.apply(file.read.clone());
            let index = build_index(&data_root(&a.data, &file)?, &read)?;
            let plan = make_folds(&index)?;
            let manifest = export_inputs(&index, &plan, &a.out, &read)?;
            eprintln!("exported {} sequences in {} folds", manifest.sequences.len(), manifest.folds.len());
            Ok(())
        }
        Command::ScoreExternal(a) => {
            let options = RunOptions {
                metric: a.run.metric.apply(file.metric)?,
                read: a.data.read.apply(file.read.clone()),
            };
            let index = build_index(&data_root(&a.data, &file)?, &options.read)?;
            let plan = make_folds(&index)?;
            let method = Method::External {
                name: a.name,
                dir: a.exchange,
            };
            let workers = a.run.workers.or(file.workers).unwrap_or_else(default_workers);
            let result = crossval(&index, &plan, &[method], &options, workers)?;
            let md = write_run_outputs(&result, &a.run.out, a.run.aggregation.into())?;
            print!("{md}");
            Ok(())
        }
        Command::Crossval(a) => {
            let options = RunOptions {
                metric: a.run.metric.apply(file.metric)?,
                read: a.data.read.apply(file.read.clone()),
            };
            let methods = a
                .methods
                .iter()
                .map(|m| a.baseline.build(m.trim(), &file).map(Method::Baseline))
                .collect::<Result<Vec<_>, _>>()?;
            let index = build_index(&data_root(&a.data, &file)?, &options.read)?;
            let plan = make_folds(&index)?;
            let workers = a.run.workers.or(file.workers).unwrap_or_else(default_workers);
            let result = crossval(&index, &plan, &methods, &options, workers)?;
            let md = write_run_outputs(&result, &a.run.out, a.run.aggregation.into())?;
            print!("{md}");
            Ok(())
        }
        Command::Report(a) => {
            let aggregation: Aggregation = a.aggregation.into();
            let mut rows: Vec<LeaderboardRow> = Vec::new();
            for path in &a.input {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                let result: CrossvalResult =
                    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                rows.extend(result.rows(aggregation));
            }
            let board = Leaderboard::new(rows.clone())?;
            let points = harness::scatter_points(&rows)?;
            if let Some(p) = &a.scatter_csv {
                write_file(p, &scatter::to_csv(&points))?;
            }
            if let Some(p) = &a.scatter_svg {
                write_file(p, &scatter::to_svg(&points))?;
            }
            emit(a.out.as_deref(), &board.render(a.format))
        }
    }
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match run_command(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("rainbench: {e}");
            e.exit_code()
        }
    }
}
