//! Command-line front end. Every subcommand reads its settings from flags,
//! then from an optional flat `key = value` config file, then from built-in
//! defaults. Failures print one JSON line `{"error": kind, "message": ...}`
//! to stderr and exit nonzero.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::data::{build_sparse_tensor, DataError, Dataset, MergeTolerance};
use crate::eval::{self, Binning, CvData, EvalError, ExperimentSpec, Grid, DEFAULT_SEEDS};
use crate::models::{self, Model, ModelConfig, ModelError, ModelKind, TrainConfig, DEFAULT_DIM};
use crate::preprocess::{Discretizer, PreprocessError, Preprocessing, TargetTransform};
use crate::richardson::{self, ProfileLevel, RichardsonError, STANDARD_GRAVITY};
use crate::synth::{self, SynthError, SynthSpec};

const DEFAULT_BINS: usize = 10;
const DEFAULT_TIME_TOL_S: f64 = 3600.0;
const DEFAULT_HEIGHT_TOL_M: f64 = 50.0;

const CONFIG_KEYS: &[&str] = &[
    "batch", "bins", "data", "dim", "epochs", "folds", "gravity", "grid", "height_tol", "hidden",
    "identity", "lr", "model", "noise", "out", "pair_width", "preprocessing", "profile", "ranks",
    "samples", "secondary", "seed", "seeds", "sizes", "time_tol", "trace", "truth",
];

#[derive(Debug, Error)]
#[error("{0}")]
struct ConfigError(String);

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Parser)]
#[command(name = "neutucf", version, about = "Neural Tucker factorization of sparse wind-field observations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load observations, filling absent ri from a second file by interpolation.
    Ingest(IngestArgs),
    /// Per-layer Richardson number and stability class of a vertical profile.
    Richardson(RichardsonArgs),
    /// Fit bins and target transform, then write the sparse tensor.
    Discretize(DiscretizeArgs),
    /// Generate a low-rank synthetic dataset with known truth.
    Synth(SynthArgs),
    /// Train one model on all observations and write a checkpoint.
    Train(TrainArgs),
    /// K-fold cross-validation over several seeds.
    Cv(CvArgs),
    /// Cross-validated search over a hyperparameter grid.
    Gridsearch(GridArgs),
}

#[derive(Args)]
struct Common {
    /// Seed for every random draw.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (standard output when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key=value file supplying values for flags not given.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    common: Common,
    /// Observation CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// CSV whose ri values fill gaps in --data.
    #[arg(long)]
    secondary: Option<PathBuf>,
    /// Time tolerance for interpolation, s.
    #[arg(long)]
    time_tol: Option<f64>,
    /// Height tolerance for interpolation, m.
    #[arg(long)]
    height_tol: Option<f64>,
}

#[derive(Args)]
struct RichardsonArgs {
    #[command(flatten)]
    common: Common,
    /// Profile CSV with columns z,theta,u,v.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Gravitational acceleration, m/s².
    #[arg(long)]
    gravity: Option<f64>,
}

#[derive(Args)]
struct BinArgs {
    /// Observation CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Bins per mode: one count or four comma-separated counts.
    #[arg(long, value_name = "P,I,J,K")]
    bins: Option<String>,
    /// Treat h,u,v,w as ready-made labels below --bins instead of fitting quantiles.
    #[arg(long)]
    identity: bool,
}

#[derive(Args)]
struct DiscretizeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    bins: BinArgs,
    /// Where to save the fitted preprocessing JSON.
    #[arg(long)]
    preprocessing: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    /// Mode sizes, one value or four.
    #[arg(long, value_name = "P,I,J,K")]
    sizes: Option<String>,
    /// True rank per mode, one value or four.
    #[arg(long, value_name = "R1,R2,R3,R4")]
    ranks: Option<String>,
    /// Gaussian noise std added before clipping.
    #[arg(long)]
    noise: Option<f64>,
    /// Number of distinct cells to sample.
    #[arg(long)]
    samples: Option<usize>,
    /// Ground-truth JSON path (defaults to the --out path with extension truth.json).
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    /// Model: m1 (neural Tucker), m2 (MLP), m3 (linear), m4, m5.
    #[arg(long)]
    model: Option<String>,
    /// Latent dimension: one value or four (M1 ranks).
    #[arg(long)]
    dim: Option<String>,
    /// Hidden widths for m2/m5, comma-separated.
    #[arg(long)]
    hidden: Option<String>,
    /// Width of each pairwise layer in m4.
    #[arg(long)]
    pair_width: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Mini-batch size.
    #[arg(long)]
    batch: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    bins: BinArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Where to save the fitted preprocessing JSON.
    #[arg(long)]
    preprocessing: Option<PathBuf>,
    /// Where to save the per-epoch loss CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    bins: BinArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Number of folds.
    #[arg(long)]
    folds: Option<usize>,
    /// Comma-separated seeds (defaults to --seed, else 38,40,42,44,46).
    #[arg(long)]
    seeds: Option<String>,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    cv: CvArgs,
    /// Axes as `lr=1e-3,1e-2;epochs=50,200;batch=..;dim=..;hidden=..`.
    #[arg(long)]
    grid: Option<String>,
}

/// Flag values layered over a config file.
#[derive(Debug)]
struct Settings {
    file: BTreeMap<String, String>,
}

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self { file: BTreeMap::new() });
        };
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text)
    }

    fn parse(text: &str) -> Result<Self> {
        let mut file = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("config line {}: expected key = value", n + 1)))?;
            let key = key.trim().replace('-', "_");
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(config_err(format!("config line {}: unknown key `{key}`", n + 1)));
            }
            file.insert(key, value.trim().to_string());
        }
        Ok(Self { file })
    }

    fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.file
            .get(key)
            .map(|raw| {
                raw.parse::<T>()
                    .map_err(|e| config_err(format!("config key `{key}`: {e}")))
            })
            .transpose()
    }

    fn flag(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.get::<bool>(None, key)?.unwrap_or(false))
    }

    fn require<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        self.get(flag, key)?
            .ok_or_else(|| config_err(format!("missing --{}", key.replace('_', "-"))))
    }
}

fn parse_list<T: FromStr>(text: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| config_err(format!("{what}: `{s}`: {e}"))))
        .collect()
}

/// One value broadcast to all modes, or exactly four.
fn parse_quad(text: &str, what: &str) -> Result<[usize; 4]> {
    let values: Vec<usize> = parse_list(text, what)?;
    match values[..] {
        [x] => Ok([x; 4]),
        [a, b, c, d] => Ok([a, b, c, d]),
        _ => Err(config_err(format!("{what}: expected 1 or 4 values, got {}", values.len()))),
    }
}

fn write_output(out: Option<&Path>, contents: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, contents).with_context(|| format!("cannot write {}", path.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(contents)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Ok(Dataset::load_csv(path)?)
}

/// Parses the command line and runs it, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    0
                }
                _ => {
                    let text = e.to_string();
                    let first = text.lines().next().unwrap_or("invalid arguments");
                    report_error("usage", first.trim_start_matches("error: "));
                    2
                }
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            report_error(error_kind(&e), &format!("{e:#}"));
            1
        }
    }
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: &'a str,
    message: &'a str,
}

fn report_error(kind: &str, message: &str) {
    let line = serde_json::to_string(&ErrorLine { error: kind, message }).expect("error line serializes");
    eprintln!("{line}");
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if cause.is::<ConfigError>() {
            return "config";
        } else if cause.is::<DataError>() {
            return "data";
        } else if cause.is::<PreprocessError>() {
            return "preprocess";
        } else if cause.is::<RichardsonError>() {
            return "richardson";
        } else if cause.is::<SynthError>() {
            return "synth";
        } else if cause.is::<ModelError>() {
            return "model";
        } else if cause.is::<EvalError>() {
            return "eval";
        } else if cause.is::<std::io::Error>() || cause.is::<csv::Error>() {
            return "io";
        } else if cause.is::<serde_json::Error>() {
            return "json";
        }
    }
    "internal"
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Richardson(a) => richardson(a),
        Command::Discretize(a) => discretize(a),
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Cv(a) => cv(a),
        Command::Gridsearch(a) => gridsearch(a),
    }
}

fn output_path(s: &Settings, common: &Common) -> Result<Option<PathBuf>> {
    s.get(common.out.clone(), "out")
}

fn ingest(a: IngestArgs) -> Result<()> {
    let s = Settings::load(a.common.config.as_deref())?;
    let mut ds = load_dataset(&s.require(a.data, "data")?)?;
    if let Some(secondary) = s.get(a.secondary, "secondary")? {
        let tol = MergeTolerance {
            time_s: s.get(a.time_tol, "time_tol")?.unwrap_or(DEFAULT_TIME_TOL_S),
            height_m: s.get(a.height_tol, "height_tol")?.unwrap_or(DEFAULT_HEIGHT_TOL_M),
        };
        if !(tol.time_s > 0.0 && tol.height_m > 0.0) {
            return Err(config_err("tolerances must be positive"));
        }
        let other = load_dataset(&secondary)?;
        let mut merged = crate::data::merge_interpolate(&ds, &other, tol);
        merged.provenance.extend(other.provenance);
        ds = merged;
    }
    let with_ri = ds.records.iter().filter(|r| r.ri.is_some()).count();
    log::info!("{} records, {with_ri} with ri", ds.len());
    let mut buf = Vec::new();
    ds.write_csv(&mut buf)?;
    write_output(output_path(&s, &a.common)?.as_deref(), &buf)
}

fn read_profile(path: &Path) -> Result<Vec<ProfileLevel>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    rdr.deserialize()
        .enumerate()
        .map(|(n, row)| row.with_context(|| format!("profile row {}", n + 1)))
        .collect()
}

fn richardson(a: RichardsonArgs) -> Result<()> {
    let s = Settings::load(a.common.config.as_deref())?;
    let profile = read_profile(&s.require(a.profile, "profile")?)?;
    let g = s.get(a.gravity, "gravity")?.unwrap_or(STANDARD_GRAVITY);
    let layers = richardson::profile_ri(&profile, g)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["mid_height", "ri", "class"])?;
    for l in &layers {
        w.write_record([l.mid_height.to_string(), l.ri.to_string(), l.class.to_string()])?;
    }
    let buf = w.into_inner().map_err(|e| anyhow!("{e}"))?;
    write_output(output_path(&s, &a.common)?.as_deref(), &buf)
}

fn binning(s: &Settings, b: &BinArgs) -> Result<Binning> {
    let bins = match s.get(b.bins.clone(), "bins")? {
        Some(text) => parse_quad(&text, "bins")?,
        None => [DEFAULT_BINS; 4],
    };
    if bins.contains(&0) {
        return Err(config_err("bins must be positive"));
    }
    Ok(if s.flag(b.identity, "identity")? {
        Binning::Identity(bins)
    } else {
        Binning::Quantile(bins)
    })
}

fn fit_all(ds: &Dataset, binning: Binning) -> Result<Preprocessing> {
    let discretizer = match binning {
        Binning::Quantile(bins) => Discretizer::fit(&ds.features(), bins)?,
        Binning::Identity(sizes) => Discretizer::identity(sizes),
    };
    Ok(Preprocessing {
        discretizer,
        target: Some(TargetTransform::fit(&ds.targets()?)?),
    })
}

fn discretize(a: DiscretizeArgs) -> Result<()> {
    let s = Settings::load(a.common.config.as_deref())?;
    let ds = load_dataset(&s.require(a.bins.data.clone(), "data")?)?;
    let prep = fit_all(&ds, binning(&s, &a.bins)?)?;
    let target = prep.target.as_ref().expect("fitted above");
    let built = build_sparse_tensor(&ds, &prep.discretizer, target)?;
    let eff = prep.discretizer.effective_bins();
    eprintln!(
        "entries={} collisions={} effective_bins={},{},{},{}",
        built.tensor.len(),
        built.collisions,
        eff[0],
        eff[1],
        eff[2],
        eff[3]
    );
    if let Some(path) = s.get(a.preprocessing, "preprocessing")? {
        write_output(Some(&path), prep.to_json().as_bytes())?;
    }
    let mut buf = Vec::new();
    built.tensor.write_csv(&mut buf)?;
    write_output(output_path(&s, &a.common)?.as_deref(), &buf)
}

fn synth(a: SynthArgs) -> Result<()> {
    let s = Settings::load(a.common.config.as_deref())?;
    let quad = |flag: Option<String>, key: &str, default: usize| -> Result<[usize; 4]> {
        match s.get(flag, key)? {
            Some(text) => parse_quad(&text, key),
            None => Ok([default; 4]),
        }
    };
    let spec = SynthSpec {
        mode_sizes: quad(a.sizes, "sizes", 8)?,
        ranks: quad(a.ranks, "ranks", 3)?,
        noise_std: s.get(a.noise, "noise")?.unwrap_or(0.01),
        samples: s.get(a.samples, "samples")?.unwrap_or(2000),
        seed: s.get(a.common.seed, "seed")?.unwrap_or(TrainConfig::default().seed),
    };
    let generated = synth::generate(&spec)?;
    let out = output_path(&s, &a.common)?;
    let truth = s
        .get(a.truth, "truth")?
        .or_else(|| out.as_ref().map(|p| p.with_extension("truth.json")));
    let mut buf = Vec::new();
    synth::to_dataset(&generated.tensor).write_csv(&mut buf)?;
    write_output(out.as_deref(), &buf)?;
    if let Some(path) = truth {
        let ck = Model::Tucker(generated.truth).to_checkpoint();
        write_output(Some(&path), ck.to_json().as_bytes())?;
    }
    Ok(())
}

fn model_config(s: &Settings, m: &ModelArgs, mode_sizes: [usize; 4]) -> Result<ModelConfig> {
    let kind: ModelKind = s
        .get(m.model.clone(), "model")?
        .map(|t| t.parse::<ModelKind>().map_err(config_err))
        .transpose()?
        .unwrap_or(ModelKind::M1);
    let dims = match s.get(m.dim.clone(), "dim")? {
        Some(text) => parse_quad(&text, "dim")?,
        None => [DEFAULT_DIM; 4],
    };
    let hidden = match s.get(m.hidden.clone(), "hidden")? {
        Some(text) => parse_list(&text, "hidden")?,
        None => vec![DEFAULT_DIM],
    };
    let mut config = ModelConfig::new(kind, mode_sizes).with_dims(dims).with_hidden(hidden);
    config.pair_width = s.get(m.pair_width, "pair_width")?.unwrap_or(dims[0]);
    Ok(config)
}

fn train_config(s: &Settings, m: &ModelArgs, seed: Option<u64>) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        lr: s.get(m.lr, "lr")?.unwrap_or(d.lr),
        epochs: s.get(m.epochs, "epochs")?.unwrap_or(d.epochs),
        batch_size: s.get(m.batch, "batch")?.unwrap_or(d.batch_size),
        seed: s.get(seed, "seed")?.unwrap_or(d.seed),
        ..d
    };
    if !(cfg.lr >= 0.0 && cfg.lr.is_finite()) {
        return Err(config_err("lr must be finite and non-negative"));
    }
    if cfg.batch_size == 0 {
        return Err(config_err("batch must be positive"));
    }
    Ok(cfg)
}

fn train(a: TrainArgs) -> Result<()> {
    let s = Settings::load(a.common.config.as_deref())?;
    let ds = load_dataset(&s.require(a.bins.data.clone(), "data")?)?;
    let bins = binning(&s, &a.bins)?;
    let prep = fit_all(&ds, bins)?;
    let target = prep.target.as_ref().expect("fitted above");
    let tensor = build_sparse_tensor(&ds, &prep.discretizer, target)?.tensor;
    let config = model_config(&s, &a.model, bins.mode_sizes())?;
    let hp = train_config(&s, &a.model, a.common.seed)?;
    let mut model = Model::new(config, hp.seed)?;
    let report = models::train(&mut model, &tensor, &hp)?;
    if let Some(path) = s.get(a.preprocessing, "preprocessing")? {
        write_output(Some(&path), prep.to_json().as_bytes())?;
    }
    if let Some(path) = s.get(a.trace, "trace")? {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["epoch", "loss"])?;
        for (e, loss) in report.loss_trace.iter().enumerate() {
            w.write_record([(e + 1).to_string(), loss.to_string()])?;
        }
        write_output(Some(&path), &w.into_inner().map_err(|e| anyhow!("{e}"))?)?;
    }
    write_output(output_path(&s, &a.common)?.as_deref(), model.to_checkpoint().to_json().as_bytes())
}

struct CvSetup {
    settings: Settings,
    dataset: Dataset,
    binning: Binning,
    spec: ExperimentSpec,
    seeds: Vec<u64>,
    out: Option<PathBuf>,
}

fn cv_setup(a: CvArgs) -> Result<CvSetup> {
    let s = Settings::load(a.common.config.as_deref())?;
    let dataset = load_dataset(&s.require(a.bins.data.clone(), "data")?)?;
    let binning = binning(&s, &a.bins)?;
    let seed = s.get(a.common.seed, "seed")?;
    let seeds = match s.get(a.seeds, "seeds")? {
        Some(text) => parse_list(&text, "seeds")?,
        None => seed.map_or_else(|| DEFAULT_SEEDS.to_vec(), |x| vec![x]),
    };
    if seeds.is_empty() {
        bail!(config_err("at least one seed is required"));
    }
    let spec = ExperimentSpec {
        model: model_config(&s, &a.model, binning.mode_sizes())?,
        train: train_config(&s, &a.model, seed)?,
        folds: s.get(a.folds, "folds")?.unwrap_or(eval::DEFAULT_FOLDS),
    };
    let out = output_path(&s, &a.common)?;
    Ok(CvSetup {
        settings: s,
        dataset,
        binning,
        spec,
        seeds,
        out,
    })
}

fn cv(a: CvArgs) -> Result<()> {
    let c = cv_setup(a)?;
    let data = CvData::Observations {
        dataset: &c.dataset,
        binning: c.binning,
    };
    let report = eval::run_experiment(data, &c.spec, &c.seeds)?;
    write_output(c.out.as_deref(), report.to_json().as_bytes())
}

fn gridsearch(a: GridArgs) -> Result<()> {
    let grid_flag = a.grid;
    let c = cv_setup(a.cv)?;
    let mut grid = Grid::from_spec(&c.spec);
    if let Some(text) = c.settings.get(grid_flag, "grid")? {
        grid = grid.parse_overrides(&text)?;
    }
    let data = CvData::Observations {
        dataset: &c.dataset,
        binning: c.binning,
    };
    let report = eval::grid_search(data, &c.spec, &grid, &c.seeds)?;
    write_output(c.out.as_deref(), report.to_json().as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_parsing() {
        let s = Settings::parse("# defaults\nlr = 0.01\nbatch-size = 3\n").unwrap_err();
        assert!(s.to_string().contains("unknown key `batch_size`"));
        let s = Settings::parse("lr = 0.01 # tuned\n\nepochs=7\n").unwrap();
        assert_eq!(s.get::<f64>(None, "lr").unwrap(), Some(0.01));
        assert_eq!(s.get(Some(3usize), "epochs").unwrap(), Some(3));
        assert_eq!(s.get::<usize>(None, "epochs").unwrap(), Some(7));
        assert_eq!(s.get::<usize>(None, "folds").unwrap(), None);
        assert!(Settings::parse("lr 0.1").is_err());
        let bad = Settings::parse("epochs = many").unwrap();
        assert_eq!(error_kind(&bad.get::<usize>(None, "epochs").unwrap_err()), "config");
    }

    #[test]
    fn quads_broadcast_or_take_four() {
        assert_eq!(parse_quad("5", "dim").unwrap(), [5; 4]);
        assert_eq!(parse_quad("1, 2,3,4", "dim").unwrap(), [1, 2, 3, 4]);
        assert!(parse_quad("1,2", "dim").is_err());
        assert!(parse_quad("x", "dim").is_err());
    }

    #[test]
    fn defaults_follow_model_conventions() {
        let s = Settings::parse("").unwrap();
        let m = ModelArgs {
            model: None,
            dim: None,
            hidden: None,
            pair_width: None,
            lr: None,
            epochs: None,
            batch: None,
        };
        let config = model_config(&s, &m, [4; 4]).unwrap();
        assert_eq!((config.kind, config.dims), (ModelKind::M1, [5; 4]));
        assert_eq!(train_config(&s, &m, None).unwrap(), TrainConfig::default());
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        assert_eq!(run(["neutucf", "frobnicate"]), 2);
        assert_eq!(run(["neutucf", "cv", "--no-such-flag"]), 2);
    }
}
