//! Command-line front end.
//!
//! Every command reads a JSON [`RunConfig`] (or, for `estimate` and `report`,
//! can work from its other inputs alone) and writes CSV, JSON or SVG files
//! atomically. Each output carries a header comment with the artifact
//! version, the config hash and the seed.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::abc::{abc_estimate_batch, AbcConfig, Distance};
use crate::criticism::criticize;
use crate::deepbf::{
    intrinsic_bf, partial_bf, posterior_bf, sha256_hex, train_with_progress, BfEstimator, Direction, IntrinsicMode,
    TrainConfig,
};
use crate::evalkit::{
    evaluate, roc_auc, simulate_sample_set, surprise, BfEvaluator, BfSampleSet, ExactOracle, Grid, Kde,
};
use crate::io::{fmt_f64, write_atomic};
use crate::models::{make_builtin_pair, Hyperparams, ModelPair};
use crate::nn::Arch;
use crate::rngdist::RngStream;
use crate::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

const SIMULATE_STREAM: u64 = 0x7369_6d00;
const INTRINSIC_STREAM: u64 = 0x6962_6600;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSection {
    /// `data1`, `data2`, `data3` or `mpt`.
    pub name: String,
    #[serde(default)]
    pub hyperparams: Hyperparams,
    /// Prior model probabilities `[π₁, π₂]`; equal when omitted.
    #[serde(default)]
    pub priors: Option<[f64; 2]>,
}

/// [`TrainConfig`] with every field optional; `seed` falls back to the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub iterations: usize,
    pub batch_per_model: usize,
    pub arch: Arch,
    pub seed: Option<u64>,
    pub eval_reference_batch: usize,
    pub eps: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            iterations: d.iterations,
            batch_per_model: d.batch_per_model,
            arch: d.arch,
            seed: None,
            eval_reference_batch: d.eval_reference_batch,
            eps: d.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbcSection {
    pub total_samples: usize,
    pub strata: usize,
    pub per_stratum_keep: usize,
    pub final_keep: usize,
    pub distance: Distance,
}

impl Default for AbcSection {
    fn default() -> Self {
        let d = AbcConfig::scaled();
        Self {
            total_samples: d.total_samples,
            strata: d.strata,
            per_stratum_keep: d.per_stratum_keep,
            final_keep: d.final_keep,
            distance: d.distance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Datasets simulated per model for metrics and reference BFs.
    pub t0: usize,
    /// KDE grid size used by `report`.
    pub grid_points: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { t0: 1000, grid_points: crate::evalkit::DEFAULT_GRID_POINTS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticizeSection {
    pub replicates: usize,
    /// Which model of the pair (1 or 2) is criticized.
    pub model: usize,
}

impl Default for CriticizeSection {
    fn default() -> Self {
        Self { replicates: 1000, model: 1 }
    }
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// One reproducible run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub pair: PairSection,
    /// Dataset length.
    pub n: usize,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub abc: AbcSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub criticize: CriticizeSection,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl RunConfig {
    /// Defaults around a builtin pair.
    pub fn for_pair(name: &str, n: usize) -> Result<Self> {
        let cfg = Self {
            pair: PairSection { name: name.to_string(), hyperparams: Hyperparams::new(), priors: None },
            n,
            train: TrainSection::default(),
            abc: AbcSection::default(),
            eval: EvalSection::default(),
            criticize: CriticizeSection::default(),
            seed: 0,
            output: default_output(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses and validates; unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(config_err("n must be at least 1"));
        }
        let pair = self.pair()?;
        if !self.n.is_multiple_of(pair.unit_width()) {
            return Err(config_err(format!(
                "n = {} is not a multiple of the unit width {}",
                self.n,
                pair.unit_width()
            )));
        }
        self.train_config().validate().map_err(config_err)?;
        self.abc_config()?;
        if self.eval.t0 == 0 {
            return Err(config_err("eval.t0 must be at least 1"));
        }
        if self.eval.grid_points < 2 {
            return Err(config_err("eval.grid_points must be at least 2"));
        }
        if self.criticize.replicates < crate::criticism::MIN_REPLICATES {
            return Err(config_err(format!(
                "criticize.replicates must be at least {}",
                crate::criticism::MIN_REPLICATES
            )));
        }
        if !matches!(self.criticize.model, 1 | 2) {
            return Err(config_err("criticize.model must be 1 or 2"));
        }
        Ok(())
    }

    /// The configured model pair.
    pub fn pair(&self) -> Result<ModelPair> {
        let mut hyper = self.pair.hyperparams.clone();
        if let Some([p1, p2]) = self.pair.priors {
            if hyper.contains_key("prior_m1") {
                return Err(config_err("set the prior either in pair.priors or in pair.hyperparams.prior_m1"));
            }
            if !(p1 > 0.0 && p2 > 0.0 && (p1 + p2 - 1.0).abs() <= 1e-12) {
                return Err(config_err(format!("pair.priors must be positive and sum to 1, got [{p1}, {p2}]")));
            }
            hyper.insert("prior_m1".into(), p1);
        }
        make_builtin_pair(&self.pair.name, &hyper).map_err(config_err)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            iterations: self.train.iterations,
            batch_per_model: self.train.batch_per_model,
            arch: self.train.arch.clone(),
            seed: self.train.seed.unwrap_or(self.seed),
            eval_reference_batch: self.train.eval_reference_batch,
            eps: self.train.eps,
        }
    }

    pub fn abc_config(&self) -> Result<AbcConfig> {
        let a = &self.abc;
        Ok(AbcConfig::new(a.total_samples, a.strata, a.per_stratum_keep, a.final_keep)
            .map_err(config_err)?
            .with_distance(a.distance))
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> Result<String> {
        sha256_hex(self)
    }
}

#[derive(Debug, Parser)]
#[command(name = "deepbf", version, about = "Bayes factors from classifiers trained on simulated data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate datasets from the pair's models
    Simulate(SimulateArgs),
    /// Train a classifier and write its checkpoint
    Train(TrainArgs),
    /// Estimate Bayes factors for observed datasets
    Estimate(EstimateArgs),
    /// Rank-based ABC estimates for observed datasets
    Abc(AbcArgs),
    /// Evaluation metrics of a checkpoint against the closed form
    Evaluate(EvaluateArgs),
    /// Classifier-based posterior predictive check
    Criticize(CriticizeArgs),
    /// Render KDE, ROC and scatter figures from evaluation samples
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Datasets per model [default: eval.t0]
    #[arg(long)]
    count: Option<usize>,
    /// Restrict to model 1 or 2
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    model: Option<u8>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Train with the roles of the two models exchanged
    #[arg(long)]
    reversed: bool,
    /// Dataset length, overriding the config (companion estimators)
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// CSV of observed datasets, one per row
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reversed estimator on a training subset; enables PBF, ABF and GBF
    #[arg(long)]
    reversed_sub: Option<PathBuf>,
    /// Element indices of the PBF training part [default: the leading elements]
    #[arg(long, value_delimiter = ',')]
    split: Option<Vec<usize>>,
    /// Cap on the number of training subsets averaged by ABF/GBF
    #[arg(long, default_value_t = 1000)]
    subset_limit: usize,
    /// Estimator on doubled datasets; with --reversed enables the posterior BF
    #[arg(long, requires = "reversed")]
    double: Option<PathBuf>,
    /// Reversed estimator on full-length datasets
    #[arg(long, requires = "double")]
    reversed: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AbcArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint to evaluate; the closed form itself when omitted
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CriticizeArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Row of the data file to criticize
    #[arg(long, default_value_t = 0)]
    row: usize,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Samples CSV written by `evaluate`
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, default_value_t = crate::evalkit::DEFAULT_GRID_POINTS)]
    grid_points: usize,
}

/// Runs one command; `argv[0]` is the program name. Returns the exit code.
pub fn run_command<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match configure_threads().and_then(|_| dispatch(cli.command)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("deepbf: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_CONFIG,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("DEEPBF_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|t| *t > 0)
        .ok_or_else(|| config_err(format!("DEEPBF_THREADS must be a positive integer, got `{value}`")))?;
    // fails only when a global pool already exists, e.g. on repeated calls in one process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Train(a) => cmd_train(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Abc(a) => cmd_abc(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Criticize(a) => cmd_criticize(a),
        Command::Report(a) => cmd_report(a),
    }
}

/// Provenance stamped on every output file.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Stamp {
    config_hash: String,
    seed: u64,
}

impl Stamp {
    fn of(cfg: &RunConfig) -> Result<Self> {
        Ok(Self { config_hash: cfg.hash()?, seed: cfg.seed })
    }

    fn text(&self) -> String {
        format!("deepbf {VERSION} config_hash={} seed={}", self.config_hash, self.seed)
    }

    fn parse(line: &str) -> Option<Self> {
        let rest = line.trim_start_matches('#').trim().strip_prefix("deepbf ")?;
        let mut config_hash = None;
        let mut seed = None;
        for token in rest.split_whitespace() {
            if let Some(h) = token.strip_prefix("config_hash=") {
                config_hash = Some(h.to_string());
            } else if let Some(s) = token.strip_prefix("seed=") {
                seed = s.parse().ok();
            }
        }
        Some(Self { config_hash: config_hash?, seed: seed? })
    }
}

fn write_csv(path: &Path, stamp: &Stamp, columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let buf = format!("# {}\n", stamp.text()).into_bytes();
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(buf);
    w.write_record(columns)?;
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_output(path, &bytes)
}

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    generator: String,
    config_hash: &'a str,
    seed: u64,
    #[serde(flatten)]
    body: &'a T,
}

fn write_json<T: Serialize>(path: &Path, stamp: &Stamp, body: &T) -> Result<()> {
    let doc =
        Stamped { generator: format!("deepbf {VERSION}"), config_hash: &stamp.config_hash, seed: stamp.seed, body };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    write_output(path, text.as_bytes())
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_atomic(path, bytes)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

/// A CSV file with an optional stamp line, a header row and string cells.
struct Table {
    stamp: Option<Stamp>,
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let stamp = text.lines().find(|l| l.starts_with('#')).and_then(Stamp::parse);
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| Ok(rec?.iter().map(str::to_string).collect()))
            .collect::<Result<Vec<Vec<String>>>>()?;
        Ok(Self { stamp, headers, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers.iter().position(|h| h == name).ok_or_else(|| config_err(format!("missing CSV column `{name}`")))
    }
}

fn is_value_column(h: &str) -> bool {
    h.strip_prefix('y').is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
}

fn parse_cell(cell: &str) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| config_err(format!("not a number: `{cell}`")))
}

/// Datasets from a CSV: the `y1, y2, …` columns when present, every column otherwise.
fn read_datasets(path: &Path) -> Result<Vec<Vec<f64>>> {
    let table = Table::read(path)?;
    let mut cols: Vec<usize> = (0..table.headers.len()).filter(|&i| is_value_column(&table.headers[i])).collect();
    if cols.is_empty() {
        cols = (0..table.headers.len()).collect();
    }
    let data = table
        .rows
        .iter()
        .map(|row| cols.iter().map(|&c| parse_cell(&row[c])).collect::<Result<Vec<f64>>>())
        .collect::<Result<Vec<_>>>()?;
    if data.is_empty() {
        return Err(config_err(format!("{} holds no datasets", path.display())));
    }
    Ok(data)
}

fn value_columns(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("y{i}")).collect()
}

fn check_lengths(data: &[Vec<f64>], n: usize) -> Result<()> {
    match data.iter().position(|y| y.len() != n) {
        Some(i) => Err(Error::Shape(format!("data row {i} has length {}, expected {n}", data[i].len()))),
        None => Ok(()),
    }
}

fn oriented(pair: ModelPair, direction: Direction) -> ModelPair {
    match direction {
        Direction::Forward => pair,
        Direction::Reversed => pair.swapped(),
    }
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let pair = cfg.pair()?;
    let count = a.count.unwrap_or(cfg.eval.t0);
    let models: Vec<usize> = match a.model {
        Some(m) => vec![m as usize - 1],
        None => vec![0, 1],
    };
    let root = RngStream::new(cfg.seed, SIMULATE_STREAM);
    let mut rows = Vec::new();
    for m in models {
        let stream = root.substream(m as u64);
        for i in 0..count {
            let y = pair.model(m).simulate_dataset(cfg.n, &mut stream.substream(i as u64))?;
            let mut row = vec![rows.len().to_string(), (m + 1).to_string()];
            row.extend(y.into_iter().map(fmt_f64));
            rows.push(row);
        }
    }
    let mut columns = vec!["id".to_string(), "model".to_string()];
    columns.extend(value_columns(cfg.n));
    let columns: Vec<&str> = columns.iter().map(String::as_str).collect();
    let out = a.out.unwrap_or_else(|| cfg.output.join("datasets.csv"));
    write_csv(&out, &Stamp::of(&cfg)?, &columns, &rows)
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let n = a.n.unwrap_or(cfg.n);
    let pair = if a.reversed { cfg.pair()?.swapped() } else { cfg.pair()? };
    let tc = cfg.train_config();
    let every = (tc.iterations / 20).max(1);
    let quiet = a.quiet;
    let est = train_with_progress(&pair, n, &tc, |t, loss| {
        if !quiet && (t % every == 0 || t == tc.iterations) {
            eprintln!("step {t}/{} loss {loss:.6}", tc.iterations);
        }
    })?;
    let default_name =
        if a.reversed { format!("checkpoint_reversed_n{n}.json") } else { format!("checkpoint_n{n}.json") };
    let out = a.out.unwrap_or_else(|| cfg.output.join(default_name));
    let mut text = est.to_json()?;
    text.push('\n');
    write_output(&out, text.as_bytes())
}

fn load_checkpoint(path: &Path) -> Result<BfEstimator> {
    BfEstimator::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Checkpoint(format!("{}: {io}", path.display())),
        other => other,
    })
}

fn cmd_estimate(a: EstimateArgs) -> Result<()> {
    let est = load_checkpoint(&a.checkpoint)?;
    let cfg = match &a.config {
        Some(p) => {
            let cfg = RunConfig::load(p)?;
            if !est.pair.is_empty() && est.pair != cfg.pair.name {
                return Err(config_err(format!(
                    "checkpoint pair `{}` differs from config pair `{}`",
                    est.pair, cfg.pair.name
                )));
            }
            cfg
        }
        None if est.pair.is_empty() => return Err(config_err("checkpoint names no model pair; pass --config")),
        None => RunConfig::for_pair(&est.pair, est.n)?,
    };
    let pair = oriented(cfg.pair()?, est.direction);
    let data = read_datasets(&a.data)?;
    check_lengths(&data, est.n)?;

    let flat: Vec<f64> = data.iter().flatten().copied().collect();
    let ys = Array2::from_shape_vec((data.len(), est.n), flat).map_err(|e| Error::Shape(e.to_string()))?;
    let log_bf = est.log_bf_rows(ys.view())?;
    let reference = simulate_sample_set(&est, &pair, est.n, cfg.eval.t0, cfg.seed)?;
    let sims: [Vec<f64>; 2] =
        [reference.m1.iter().map(|s| s.estimate).collect(), reference.m2.iter().map(|s| s.estimate).collect()];

    let rev_sub = a.reversed_sub.as_deref().map(load_checkpoint).transpose()?;
    let posterior = match (&a.double, &a.reversed) {
        (Some(d), Some(r)) => Some((load_checkpoint(d)?, load_checkpoint(r)?)),
        _ => None,
    };
    let split: Option<Vec<usize>> = rev_sub.as_ref().map(|sub| a.split.clone().unwrap_or_else(|| (0..sub.n).collect()));

    let mut columns = vec!["row", "bf", "log_bf", "p1", "p2"];
    if rev_sub.is_some() {
        columns.extend(["pbf", "abf", "gbf"]);
    }
    if posterior.is_some() {
        columns.push("posterior_bf");
    }
    let root = RngStream::new(cfg.seed, INTRINSIC_STREAM);
    let mut rows = Vec::with_capacity(data.len());
    for (i, (y, lb)) in data.iter().zip(&log_bf).enumerate() {
        let s = surprise(*lb, &sims[0], &sims[1])?;
        let mut row = vec![i.to_string(), fmt_f64(est.bf(y)?), fmt_f64(*lb), fmt_f64(s.p1), fmt_f64(s.p2)];
        if let (Some(sub), Some(split)) = (&rev_sub, &split) {
            let n_x = sub.n / sub.unit_width.max(1);
            row.push(fmt_f64(partial_bf(&est, sub, y, split)?));
            for mode in [IntrinsicMode::Arithmetic, IntrinsicMode::Geometric] {
                let mut rng = root.substream(i as u64);
                row.push(fmt_f64(intrinsic_bf(&est, sub, y, n_x, mode, a.subset_limit, &mut rng)?));
            }
        }
        if let Some((double, rev)) = &posterior {
            row.push(fmt_f64(posterior_bf(double, rev, y)?));
        }
        rows.push(row);
    }
    let out = a.out.unwrap_or_else(|| cfg.output.join("estimates.csv"));
    write_csv(&out, &Stamp::of(&cfg)?, &columns, &rows)
}

fn cmd_abc(a: AbcArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let pair = cfg.pair()?;
    let data = read_datasets(&a.data)?;
    check_lengths(&data, cfg.n)?;
    let results = abc_estimate_batch(&pair, &data, &cfg.abc_config()?, cfg.seed)?;
    let rows: Vec<Vec<String>> = results
        .iter()
        .enumerate()
        .map(|(i, r)| vec![i.to_string(), fmt_f64(r.estimate), r.n1.to_string(), r.n2.to_string(), r.exact.to_string()])
        .collect();
    let out = a.out.unwrap_or_else(|| cfg.output.join("abc.csv"));
    write_csv(&out, &Stamp::of(&cfg)?, &["query", "estimate", "n1", "n2", "exact"], &rows)
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let base = cfg.pair()?;
    let est = a.checkpoint.as_deref().map(load_checkpoint).transpose()?;
    let oracle_pair = base.clone();
    let oracle = ExactOracle(&oracle_pair);
    let (pair, evaluator): (ModelPair, &dyn BfEvaluator) = match &est {
        Some(e) => {
            if e.n != cfg.n {
                return Err(config_err(format!("checkpoint was trained for n = {}, config has n = {}", e.n, cfg.n)));
            }
            (oriented(base, e.direction), e)
        }
        None => (base, &oracle),
    };
    let report = evaluate(evaluator, &pair, cfg.n, cfg.eval.t0, cfg.seed)?;
    let stamp = Stamp::of(&cfg)?;
    let dir = a.out_dir.unwrap_or_else(|| cfg.output.clone());
    let rows: Vec<Vec<String>> = report.to_csv_rows().into_iter().map(Vec::from).collect();
    write_csv(&dir.join("eval.csv"), &stamp, &["name", "value", "model", "n", "seed"], &rows)?;
    write_json(&dir.join("eval.json"), &stamp, &report)?;
    let samples = report.samples.as_ref().expect("evaluate keeps its samples");
    write_csv(&dir.join("samples.csv"), &stamp, &["model", "exact", "estimate"], &sample_rows(samples))
}

fn sample_rows(s: &BfSampleSet) -> Vec<Vec<String>> {
    let mut rows = Vec::with_capacity(s.m1.len() + s.m2.len());
    for (label, samples) in [("1", &s.m1), ("2", &s.m2)] {
        for x in samples.iter() {
            rows.push(vec![label.to_string(), x.exact.map(fmt_f64).unwrap_or_default(), fmt_f64(x.estimate)]);
        }
    }
    rows
}

#[derive(Serialize)]
struct ZSummary {
    model: usize,
    replicates: usize,
    lower: f64,
    upper: f64,
    contains_half: bool,
}

fn cmd_criticize(a: CriticizeArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let pair = cfg.pair()?;
    let data = read_datasets(&a.data)?;
    let y = data.get(a.row).ok_or_else(|| config_err(format!("data file has no row {}", a.row)))?;
    let model = pair.model(cfg.criticize.model - 1);
    let report = criticize(model, y, cfg.criticize.replicates, cfg.seed)?;
    let stamp = Stamp::of(&cfg)?;
    let dir = a.out_dir.unwrap_or_else(|| cfg.output.clone());
    let rows: Vec<Vec<String>> =
        report.z_samples.iter().enumerate().map(|(r, z)| vec![r.to_string(), fmt_f64(*z)]).collect();
    write_csv(&dir.join("z.csv"), &stamp, &["replicate", "z"], &rows)?;
    let summary = ZSummary {
        model: cfg.criticize.model,
        replicates: report.z_samples.len(),
        lower: report.lower,
        upper: report.upper,
        contains_half: report.contains_half,
    };
    write_json(&dir.join("z_summary.json"), &stamp, &summary)
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    if a.grid_points < 2 {
        return Err(config_err("grid_points must be at least 2"));
    }
    let table = Table::read(&a.samples)?;
    let stamp = table.stamp.clone().ok_or_else(|| config_err("samples file has no deepbf header line"))?;
    let (cm, cx, ce) = (table.column("model")?, table.column("exact")?, table.column("estimate")?);
    let mut exact = [Vec::new(), Vec::new()];
    let mut estimate = [Vec::new(), Vec::new()];
    for row in &table.rows {
        let m = match row[cm].as_str() {
            "1" => 0,
            "2" => 1,
            other => return Err(config_err(format!("unknown model label `{other}`"))),
        };
        estimate[m].push(parse_cell(&row[ce])?);
        if !row[cx].is_empty() {
            exact[m].push(parse_cell(&row[cx])?);
        }
    }
    if estimate.iter().any(Vec::is_empty) {
        return Err(config_err("samples file needs rows for both models"));
    }
    let dir = a.out_dir.unwrap_or_else(|| a.samples.parent().map(Path::to_path_buf).unwrap_or_default());
    let comment = stamp.text();

    let mut kde_series = Vec::new();
    let finite = |v: &[f64]| v.iter().copied().filter(|x| x.is_finite()).collect::<Vec<f64>>();
    let mut sources: Vec<(String, Vec<f64>, &'static str)> = Vec::new();
    for m in 0..2 {
        sources.push((format!("estimated, M{}", m + 1), finite(&estimate[m]), COLORS[2 * m]));
        if !exact[m].is_empty() {
            sources.push((format!("exact, M{}", m + 1), finite(&exact[m]), COLORS[2 * m + 1]));
        }
    }
    let kdes: Vec<(String, Kde, &'static str)> = sources
        .into_iter()
        .filter(|(_, v, _)| !v.is_empty())
        .map(|(label, v, color)| Ok((label, Kde::new(&v)?, color)))
        .collect::<Result<_>>()?;
    let refs: Vec<&Kde> = kdes.iter().map(|(_, k, _)| k).collect();
    let grid = Grid { count: a.grid_points, ..Grid::spanning(&refs) };
    for (label, kde, color) in &kdes {
        let points = grid.points().map(|x| (x, kde.density(x))).collect();
        kde_series.push(Series { label: label.clone(), color, mark: Mark::Line, points });
    }
    let kde_plot = Plot {
        title: "Density of log Bayes factors".into(),
        x_label: "log BF".into(),
        y_label: "density".into(),
        series: kde_series,
    };
    write_output(&dir.join("kde.svg"), kde_plot.render(&comment).as_bytes())?;

    let mut roc_series = Vec::new();
    let est_roc = roc_auc(&estimate[0], &estimate[1])?;
    roc_series.push(Series {
        label: format!("estimated (AUC {:.4})", est_roc.auc),
        color: COLORS[0],
        mark: Mark::Line,
        points: est_roc.curve,
    });
    if exact.iter().all(|e| !e.is_empty()) {
        let ex_roc = roc_auc(&exact[0], &exact[1])?;
        roc_series.push(Series {
            label: format!("exact (AUC {:.4})", ex_roc.auc),
            color: COLORS[1],
            mark: Mark::Line,
            points: ex_roc.curve,
        });
    }
    roc_series.push(Series {
        label: "chance".into(),
        color: "#999999",
        mark: Mark::Line,
        points: vec![(0.0, 0.0), (1.0, 1.0)],
    });
    let roc_plot = Plot {
        title: "ROC of estimated BF".into(),
        x_label: "false positive rate".into(),
        y_label: "true positive rate".into(),
        series: roc_series,
    };
    write_output(&dir.join("roc.svg"), roc_plot.render(&comment).as_bytes())?;

    let mut scatter = Vec::new();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for row in &table.rows {
        if row[cx].is_empty() {
            continue;
        }
        let (x, y) = (parse_cell(&row[cx])?, parse_cell(&row[ce])?);
        if x.is_finite() && y.is_finite() {
            lo = lo.min(x.min(y));
            hi = hi.max(x.max(y));
            scatter.push((row[cm] == "1", (x, y)));
        }
    }
    let mut series = Vec::new();
    for (m, color) in [(true, COLORS[0]), (false, COLORS[2])] {
        let points: Vec<(f64, f64)> = scatter.iter().filter(|(is1, _)| *is1 == m).map(|(_, p)| *p).collect();
        let label = if m { "data from M1" } else { "data from M2" };
        series.push(Series { label: label.into(), color, mark: Mark::Points, points });
    }
    if lo < hi {
        series.push(Series {
            label: "y = x".into(),
            color: "#999999",
            mark: Mark::Line,
            points: vec![(lo, lo), (hi, hi)],
        });
    }
    let scatter_plot = Plot {
        title: "Estimated vs exact log BF".into(),
        x_label: "exact log BF".into(),
        y_label: "estimated log BF".into(),
        series,
    };
    write_output(&dir.join("scatter.svg"), scatter_plot.render(&comment).as_bytes())
}

const COLORS: [&str; 4] = ["#1f77b4", "#aec7e8", "#d62728", "#ff9896"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mark {
    Line,
    Points,
}

struct Series {
    label: String,
    color: &'static str,
    mark: Mark,
    points: Vec<(f64, f64)>,
}

struct Plot {
    title: String,
    x_label: String,
    y_label: String,
    series: Vec<Series>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.03 * (hi - lo);
    (lo - pad, hi + pad)
}

impl Plot {
    fn render(&self, comment: &str) -> String {
        let all = || self.series.iter().flat_map(|s| s.points.iter());
        let (x0, x1) = padded_range(all().map(|p| p.0));
        let (y0, y1) = padded_range(all().map(|p| p.1));
        let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
        let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

        let mut s = String::new();
        let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(s, "<!-- {} -->", escape(comment).replace("--", "- -"));
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(
            s,
            r#"<polyline points="{left},{top} {left},{bottom} {right},{bottom}" fill="none" stroke="black"/>"#
        );
        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
            let (px, py) = (sx(xv), sy(yv));
            let _ =
                writeln!(s, r#"<line x1="{px:.2}" y1="{bottom}" x2="{px:.2}" y2="{}" stroke="black"/>"#, bottom + 5.0);
            let _ = writeln!(s, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#, bottom + 18.0, tick(xv));
            let _ = writeln!(s, r#"<line x1="{}" y1="{py:.2}" x2="{left}" y2="{py:.2}" stroke="black"/>"#, left - 5.0);
            let _ =
                writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, left - 8.0, py + 4.0, tick(yv));
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            HEIGHT - 18.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            HEIGHT / 2.0,
            escape(&self.y_label)
        );
        for series in &self.series {
            let pts = series.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite());
            match series.mark {
                Mark::Line => {
                    let coords: Vec<String> = pts.map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                    let _ = writeln!(
                        s,
                        r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                        coords.join(" "),
                        series.color
                    );
                }
                Mark::Points => {
                    for &(x, y) in pts {
                        let _ = writeln!(
                            s,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="1.5" fill="{}" fill-opacity="0.5"/>"#,
                            sx(x),
                            sy(y),
                            series.color
                        );
                    }
                }
            }
        }
        for (i, series) in self.series.iter().enumerate() {
            let y = top + 14.0 + 16.0 * i as f64;
            let x = right - 170.0;
            let _ = writeln!(s, r#"<rect x="{x}" y="{}" width="12" height="4" fill="{}"/>"#, y - 6.0, series.color);
            let _ = writeln!(s, r#"<text x="{}" y="{y}">{}</text>"#, x + 18.0, escape(&series.label));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}").trim_end_matches('0').trim_end_matches('.').to_string()
    }
}
