//! Command-line front end: `simulate`, `train`, `generate`, `evaluate`,
//! `account` and `benchmark`. Every command that writes files writes them under
//! `--out` together with a `manifest.json`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{fit_preprocessor, read_csv, split, write_csv, Preprocessor, SplitSpec, Table};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, Bandwidth, DownstreamModel, EvalOptions, DEFAULT_BINS};
use crate::model::{Checkpoint, RowNorms};
use crate::privacy::{calibrate_sigma, AccountReport, PrivacySpec, DEFAULT_DELTA};
use crate::sem::{sample_er_dag, sample_sf_dag, sample_weights, simulate, Dag, DagFile, SemKind, SemSpec};
use crate::train::{edge_f1, generate, select_edges, train_prada, train_two_step, TrainConfig};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "prada", version, about = "Private tabular synthesis with a sparsified sequential GAN")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a random DAG and a table from a structural equation model.
    Simulate(SimulateArgs),
    /// Train a generator on a CSV table.
    Train(TrainArgs),
    /// Draw synthetic rows from a checkpoint.
    Generate(GenerateArgs),
    /// Compare a synthetic table with a held-out table.
    Evaluate(EvaluateArgs),
    /// Privacy accounting: ε for a given σ, or σ for a target ε.
    Account(AccountArgs),
    /// Sweep one hyperparameter on simulated data.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Graph {
    Er,
    Sf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Linear,
    Nonlinear,
}

impl From<Kind> for SemKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Linear => SemKind::Linear,
            Kind::Nonlinear => SemKind::Nonlinear,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long, value_enum, default_value = "er")]
    pub graph: Graph,
    /// Expected edge count for ER graphs (default d).
    #[arg(long)]
    pub edges: Option<usize>,
    /// Parents attached per new node for SF graphs (default 1).
    #[arg(long)]
    pub attach: Option<usize>,
    #[arg(long, value_enum, default_value = "linear")]
    pub kind: Kind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write a seeded train/test split with this training fraction.
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct TrainArgs {
    /// Training CSV (may also come from the config file).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// TOML or JSON file with training fields; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub eta_theta: Option<f64>,
    #[arg(long)]
    pub eta_nu: Option<f64>,
    #[arg(long = "steps", short = 'T')]
    pub steps: Option<usize>,
    #[arg(long)]
    pub t_g: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long, conflicts_with = "epsilon")]
    pub sigma: Option<f64>,
    /// Target ε; σ is calibrated before training.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub two_step: bool,
    #[arg(long)]
    pub clamp: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub log_every: Option<usize>,
    /// Train on the raw values instead of standardized ones.
    #[arg(long)]
    pub no_standardize: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Map samples back to the original scale.
    #[arg(long)]
    pub preprocessor: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub synthetic: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    /// `auto` (median heuristic) or a positive number.
    #[arg(long, default_value = "auto")]
    pub bandwidth: String,
    /// Column to predict for the downstream regression.
    #[arg(long)]
    pub target: Option<String>,
    /// Comma-separated downstream models: ridge, small_mlp.
    #[arg(long, default_value = "ridge", value_delimiter = ',')]
    pub models: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AccountArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub batch: usize,
    #[arg(long, required_unless_present = "epsilon", conflicts_with = "epsilon")]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub steps: u64,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    /// Write `account.json` and a manifest here instead of only printing.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum SweepParam {
    DLr,
    GLr,
    Lambda,
    Gamma,
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::DLr => "d_lr",
            SweepParam::GLr => "g_lr",
            SweepParam::Lambda => "lambda",
            SweepParam::Gamma => "gamma",
        }
    }

    fn apply(self, cfg: &mut TrainConfig, v: f64) {
        match self {
            SweepParam::DLr => cfg.eta_nu = v,
            SweepParam::GLr => cfg.eta_theta = v,
            SweepParam::Lambda => cfg.lambda = v,
            SweepParam::Gamma => cfg.gamma = v,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchmarkArgs {
    #[arg(long, value_enum)]
    pub sweep: SweepParam,
    /// Comma-separated values of the swept parameter.
    #[arg(long, value_delimiter = ',', required = true)]
    pub grid: Vec<f64>,
    /// Comma-separated noise multipliers.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub sigmas: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Base training config (TOML or JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub d: usize,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, value_enum, default_value = "er")]
    pub graph: Graph,
    #[arg(long, value_enum, default_value = "linear")]
    pub kind: Kind,
    #[arg(long = "steps", short = 'T')]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    /// sha256 of every input file, keyed by the path as given.
    pub input_hashes: BTreeMap<String, String>,
    /// Output file names relative to the output directory.
    pub outputs: Vec<String>,
    pub wall_clock_secs: f64,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(path, e))
}

struct ManifestBuilder {
    command: &'static str,
    argv: Vec<String>,
    start: Instant,
    inputs: Vec<PathBuf>,
}

impl ManifestBuilder {
    fn new(command: &'static str, argv: &[String]) -> Self {
        ManifestBuilder {
            command,
            argv: argv.to_vec(),
            start: Instant::now(),
            inputs: Vec::new(),
        }
    }

    fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    fn write<C: Serialize>(self, out: &Path, config: &C, seed: Option<u64>, outputs: &[&str]) -> Result<()> {
        let mut input_hashes = BTreeMap::new();
        for p in &self.inputs {
            input_hashes.insert(p.display().to_string(), sha256_file(p)?);
        }
        let manifest = RunManifest {
            command: self.command.to_string(),
            argv: self.argv,
            config: serde_json::to_value(config)?,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            input_hashes,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            wall_clock_secs: self.start.elapsed().as_secs_f64(),
        };
        write_json(&out.join(MANIFEST), &manifest)
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<String> = args
        .into_iter()
        .map(|a| a.into().to_string_lossy().into_owned())
        .collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(Error::Usage(e.to_string())),
    };
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a, &argv),
        Command::Train(a) => cmd_train(&a, &argv),
        Command::Generate(a) => cmd_generate(&a, &argv),
        Command::Evaluate(a) => cmd_evaluate(&a, &argv),
        Command::Account(a) => cmd_account(&a, &argv),
        Command::Benchmark(a) => cmd_benchmark(&a, &argv),
    }
}

/// Runs the CLI and maps the outcome to a process exit code.
pub fn main_with_code<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match run(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn sample_dag(d: usize, graph: Graph, edges: Option<usize>, attach: Option<usize>, seed: u64) -> Result<Dag> {
    match graph {
        Graph::Er => sample_er_dag(d, edges.unwrap_or(d), seed),
        Graph::Sf => sample_sf_dag(d, attach.unwrap_or(1), seed),
    }
}

fn simulate_table(d: usize, n: usize, graph: Graph, kind: Kind, seed: u64) -> Result<(Dag, Table)> {
    let dag = sample_dag(d, graph, None, None, seed)?;
    let spec = SemSpec::new(kind.into());
    let weights = sample_weights(&dag, &spec, seed)?;
    let table = simulate(&dag, &weights, &spec, n, seed)?;
    Ok((dag, table))
}

pub fn cmd_simulate(a: &SimulateArgs, argv: &[String]) -> Result<()> {
    if a.d == 0 || a.n == 0 {
        return Err(Error::usage("--d and --n must be at least 1"));
    }
    match a.graph {
        Graph::Er if a.attach.is_some() => return Err(Error::usage("--attach only applies to --graph sf")),
        Graph::Sf if a.edges.is_some() => return Err(Error::usage("--edges only applies to --graph er")),
        _ => {}
    }
    if let Some(f) = a.train_fraction {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::usage("--train-fraction must lie in (0, 1)"));
        }
    }
    let manifest = ManifestBuilder::new("simulate", argv);
    let dag = sample_dag(a.d, a.graph, a.edges, a.attach, a.seed)?;
    let spec = SemSpec::new(a.kind.into());
    let weights = sample_weights(&dag, &spec, a.seed)?;
    let table = simulate(&dag, &weights, &spec, a.n, a.seed)?;

    create_out(&a.out)?;
    write_csv(&table, a.out.join("data.csv"))?;
    DagFile::new(&dag, a.kind.into(), a.seed).save(a.out.join("dag.json"))?;
    let mut outputs = vec!["data.csv", "dag.json"];
    if let Some(train_fraction) = a.train_fraction {
        let (train, test) = split(
            &table,
            &SplitSpec {
                train_fraction,
                seed: a.seed,
            },
        )?;
        write_csv(&train, a.out.join("train.csv"))?;
        write_csv(&test, a.out.join("test.csv"))?;
        outputs.extend(["train.csv", "test.csv"]);
    }
    outputs.push(MANIFEST);
    manifest.write(&a.out, a, Some(a.seed), &outputs)
}

/// Training config file: every [`TrainConfig`] key plus optional `data` and `out`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainFile {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub train: TrainConfig,
}

pub fn load_train_file(path: &Path) -> Result<TrainFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let is_json = path.extension().is_some_and(|e| e == "json");
    let mut value: serde_json::Value = if is_json {
        serde_json::from_str(&text)?
    } else {
        let t: toml::Table = toml::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        serde_json::to_value(t)?
    };
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Error::Data(format!("{}: config must be a table", path.display())))?;
    let take_path = |obj: &mut serde_json::Map<String, serde_json::Value>, key: &str| -> Result<Option<PathBuf>> {
        match obj.remove(key) {
            None => Ok(None),
            Some(serde_json::Value::String(s)) => Ok(Some(PathBuf::from(s))),
            Some(_) => Err(Error::Data(format!("config key {key:?} must be a string"))),
        }
    };
    let data = take_path(obj, "data")?;
    let out = take_path(obj, "out")?;
    let train: TrainConfig = serde_json::from_value(value)?;
    Ok(TrainFile { data, out, train })
}

fn resolve_train(a: &TrainArgs) -> Result<TrainFile> {
    let mut file = match &a.config {
        Some(p) => load_train_file(p)?,
        None => TrainFile::default(),
    };
    let c = &mut file.train;
    macro_rules! set {
        ($($flag:ident => $field:expr),* $(,)?) => {
            $(if let Some(v) = a.$flag { $field = v; })*
        };
    }
    set!(
        eta_theta => c.eta_theta,
        eta_nu => c.eta_nu,
        steps => c.steps,
        t_g => c.t_g,
        batch => c.batch,
        lambda => c.lambda,
        gamma => c.gamma,
        tau => c.tau,
        clip_norm => c.dp.clip_norm,
        sigma => c.dp.noise_multiplier,
        delta => c.delta,
        seed => c.seed,
        clamp => c.clamp,
        hidden => c.hidden,
        log_every => c.log_every,
    );
    if a.two_step {
        c.two_step = true;
    }
    if a.data.is_some() {
        file.data = a.data.clone();
    }
    if a.out.is_some() {
        file.out = a.out.clone();
    }
    Ok(file)
}

#[derive(Debug, Serialize)]
struct ResolvedTrain<'a> {
    data: &'a Path,
    out: &'a Path,
    standardize: bool,
    target_epsilon: Option<f64>,
    train: &'a TrainConfig,
}

pub fn cmd_train(a: &TrainArgs, argv: &[String]) -> Result<()> {
    let mut file = resolve_train(a)?;
    let data_path = file.data.clone().ok_or_else(|| Error::usage("--data is required"))?;
    let out = file.out.clone().ok_or_else(|| Error::usage("--out is required"))?;
    let mut manifest = ManifestBuilder::new("train", argv);
    manifest.input(&data_path);
    if let Some(c) = &a.config {
        manifest.input(c);
    }
    let raw = read_csv(&data_path)?;
    let cfg = &mut file.train;
    cfg.validate()?;
    let dp = cfg.dp_for(raw.n_rows())?;
    if let Some(eps) = a.epsilon {
        let total_steps = if cfg.two_step { 2 * cfg.steps } else { cfg.steps };
        let spec = PrivacySpec::new(eps, cfg.delta)?;
        cfg.dp.noise_multiplier = calibrate_sigma(&spec, dp.sample_rate, total_steps as u64, &dp.orders)?;
    }
    let (table, pre) = if a.no_standardize {
        (raw.clone(), None)
    } else {
        let pre = fit_preprocessor(&raw)?;
        (pre.transform(&raw)?, Some(pre))
    };
    let (g, f, mut report) = if cfg.two_step {
        train_two_step(&table, cfg)?
    } else {
        train_prada(&table, cfg)?
    };
    if pre.is_some() {
        report.notes.push(
            "standardization statistics (column means and standard deviations) come from the training data and are not privatized; epsilon covers training steps only".into(),
        );
    }

    create_out(&out)?;
    Checkpoint::from_models(&g, &f, raw.names())?.save(out.join("checkpoint.json"))?;
    report.save(out.join("report.json"))?;
    let mut outputs = vec!["checkpoint.json", "report.json"];
    if let Some(pre) = &pre {
        pre.save(out.join("preprocessor.json"))?;
        outputs.push("preprocessor.json");
    }
    outputs.push(MANIFEST);
    let resolved = ResolvedTrain {
        data: &data_path,
        out: &out,
        standardize: pre.is_some(),
        target_epsilon: a.epsilon,
        train: cfg,
    };
    manifest.write(&out, &resolved, Some(cfg.seed), &outputs)?;
    if report.private {
        println!("epsilon={} delta={}", report.epsilon, report.delta);
    } else {
        println!("epsilon=inf delta={} (non-private run)", report.delta);
    }
    Ok(())
}

pub fn cmd_generate(a: &GenerateArgs, argv: &[String]) -> Result<()> {
    if a.n == 0 {
        return Err(Error::usage("--n must be at least 1"));
    }
    let mut manifest = ManifestBuilder::new("generate", argv);
    manifest.input(&a.model);
    let ckpt = Checkpoint::load(&a.model)?;
    let (g, _) = ckpt.to_models()?;
    let pre = match &a.preprocessor {
        Some(p) => {
            manifest.input(p);
            let pre = Preprocessor::load(p)?;
            if pre.columns.len() != g.dim() {
                return Err(Error::usage(format!(
                    "preprocessor has {} columns, checkpoint has {}",
                    pre.columns.len(),
                    g.dim()
                )));
            }
            Some(pre)
        }
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut table = generate(&g, a.n, ckpt.columns.clone(), &mut rng)?;
    if let Some(pre) = pre {
        table = pre.inverse_transform(&table)?;
    }
    create_out(&a.out)?;
    write_csv(&table, a.out.join("synthetic.csv"))?;
    manifest.write(&a.out, a, Some(a.seed), &["synthetic.csv", MANIFEST])
}

fn parse_bandwidth(s: &str) -> Result<Bandwidth> {
    if s == "auto" {
        return Ok(Bandwidth::Auto);
    }
    match s.parse::<f64>() {
        Ok(h) if h > 0.0 && h.is_finite() => Ok(Bandwidth::Fixed(h)),
        _ => Err(Error::usage(format!("--bandwidth must be \"auto\" or a positive number, got {s:?}"))),
    }
}

pub fn cmd_evaluate(a: &EvaluateArgs, argv: &[String]) -> Result<()> {
    let mut manifest = ManifestBuilder::new("evaluate", argv);
    manifest.input(&a.synthetic);
    manifest.input(&a.test);
    let opts = EvalOptions {
        bins: a.bins,
        bandwidth: parse_bandwidth(&a.bandwidth)?,
        target: a.target.clone(),
        models: a.models.iter().map(|m| m.parse()).collect::<Result<Vec<DownstreamModel>>>()?,
    };
    let synthetic = read_csv(&a.synthetic)?;
    let test = read_csv(&a.test)?;
    let report = evaluate(&synthetic, &test, &opts)?;
    create_out(&a.out)?;
    write_json(&a.out.join("metrics.json"), &report)?;
    manifest.write(&a.out, a, None, &["metrics.json", MANIFEST])
}

pub fn cmd_account(a: &AccountArgs, argv: &[String]) -> Result<()> {
    let manifest = ManifestBuilder::new("account", argv);
    let sigma = match (a.sigma, a.epsilon) {
        (Some(s), None) => s,
        (None, Some(eps)) => {
            if a.n == 0 || a.batch == 0 || a.batch > a.n {
                return Err(Error::usage("need 1 <= batch <= n"));
            }
            let q = a.batch as f64 / a.n as f64;
            calibrate_sigma(&PrivacySpec::new(eps, a.delta)?, q, a.steps, &crate::privacy::default_orders())?
        }
        _ => return Err(Error::usage("give exactly one of --sigma and --epsilon")),
    };
    let report = AccountReport::compute(a.n, a.batch, sigma, a.steps, a.delta)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(out) = &a.out {
        create_out(out)?;
        write_json(&out.join("account.json"), &report)?;
        manifest.write(out, a, None, &["account.json", MANIFEST])?;
    }
    Ok(())
}

/// One benchmark cell: enough to rerun it in isolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub param: String,
    pub value: f64,
    pub sigma: f64,
    pub seed: u64,
    pub d: usize,
    pub n: usize,
    pub graph: Graph,
    pub kind: Kind,
    pub train_fraction: f64,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub param: String,
    pub value: f64,
    pub sigma: f64,
    pub seed: u64,
    pub wd: f64,
    pub tvd: f64,
    pub mmd: f64,
    pub js: f64,
    pub off_parent_norm: f64,
    pub edge_f1: f64,
}

/// Mean row norm over `(column, input)` pairs that are not edges of `dag`.
pub fn off_parent_norm(norms: &RowNorms, dag: &Dag) -> f64 {
    let off: Vec<f64> = norms
        .entries()
        .filter(|&(j, k, _)| !dag.has_edge(k, j))
        .map(|e| e.2)
        .collect();
    if off.is_empty() {
        0.0
    } else {
        off.iter().sum::<f64>() / off.len() as f64
    }
}

/// Simulates, trains and scores one cell. Metrics are computed on the
/// standardized scale against the held-out rows.
pub fn run_cell(cell: &BenchCell) -> Result<BenchRow> {
    let (dag, table) = simulate_table(cell.d, cell.n, cell.graph, cell.kind, cell.seed)?;
    let (train, test) = split(
        &table,
        &SplitSpec {
            train_fraction: cell.train_fraction,
            seed: cell.seed,
        },
    )?;
    let pre = fit_preprocessor(&train)?;
    let train = pre.transform(&train)?;
    let test = pre.transform(&test)?;
    let (g, _, report) = train_prada(&train, &cell.config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cell.seed);
    rng.set_stream(7);
    let synthetic = generate(&g, test.n_rows(), test.names().to_vec(), &mut rng)?;
    let m = evaluate(&synthetic, &test, &EvalOptions::default())?;
    let truth = dag.edges().into_iter().collect();
    Ok(BenchRow {
        param: cell.param.clone(),
        value: cell.value,
        sigma: cell.sigma,
        seed: cell.seed,
        wd: m.wd,
        tvd: m.tvd_2way,
        mmd: m.mmd,
        js: m.js,
        off_parent_norm: off_parent_norm(&report.row_norms, &dag),
        edge_f1: edge_f1(&select_edges(&report.row_norms), &truth),
    })
}

pub fn cmd_benchmark(a: &BenchmarkArgs, argv: &[String]) -> Result<()> {
    if a.repeats == 0 || a.grid.is_empty() || a.sigmas.is_empty() {
        return Err(Error::usage("benchmark needs a grid, at least one sigma and repeats >= 1"));
    }
    if a.d < 2 || a.n < 10 {
        return Err(Error::usage("benchmark needs d >= 2 and n >= 10"));
    }
    let mut manifest = ManifestBuilder::new("benchmark", argv);
    let mut base = match &a.config {
        Some(p) => {
            manifest.input(p);
            load_train_file(p)?.train
        }
        None => TrainConfig::default(),
    };
    if let Some(steps) = a.steps {
        base.steps = steps;
    }
    let mut cells = Vec::new();
    for &value in &a.grid {
        for &sigma in &a.sigmas {
            for r in 0..a.repeats {
                let seed = a.seed + r as u64;
                let mut config = base.clone();
                a.sweep.apply(&mut config, value);
                config.dp.noise_multiplier = sigma;
                config.seed = seed;
                config.validate()?;
                cells.push(BenchCell {
                    param: a.sweep.name().to_string(),
                    value,
                    sigma,
                    seed,
                    d: a.d,
                    n: a.n,
                    graph: a.graph,
                    kind: a.kind,
                    train_fraction: SplitSpec::default().train_fraction,
                    config,
                });
            }
        }
    }
    let rows: Vec<BenchRow> = cells.par_iter().map(run_cell).collect::<Result<_>>()?;

    create_out(&a.out)?;
    let path = a.out.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    for row in &rows {
        w.serialize(row).map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_json(&a.out.join("cells.json"), &cells)?;
    manifest.write(&a.out, a, Some(a.seed), &["sweep.csv", "cells.json", MANIFEST])
}
