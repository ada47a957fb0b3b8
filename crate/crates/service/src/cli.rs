//! Command-line interface.

use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cobras_ts::distance::{read_binary, read_csv, write_binary, write_csv};
use cobras_ts::{
    ari, distance_matrix, evaluate_prepared, generate_cbf, kshape_baseline, load_ucr, read_query_log_csv, run, sweep,
    write_ucr, CbfParams, DatasetF64, Delimiter, DistanceMatrixF64, EngineConfig, EvalSummary, FoldSplit, LabelOracle,
    Prepared, QueryRecord, Refiner, ReplayOracle, RunOutcome, WarpingWindow,
};
use serde::Serialize;

use crate::service::{self, ServiceConfig};

#[derive(Debug, Parser)]
#[command(name = "cobras", version, about = "Active semi-supervised clustering of time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the engine once and print the result as JSON.
    Cluster(ClusterArgs),
    /// Stratified k-fold evaluation; prints ARI-vs-queries curves as CSV.
    Evaluate(EvaluateArgs),
    /// Evaluate every gamma/window combination; prints a CSV grid.
    Sweep(SweepArgs),
    /// Write a synthetic Cylinder-Bell-Funnel dataset in UCR format.
    GenCbf(GenCbfArgs),
    /// Precompute the pairwise DTW matrix of a dataset.
    Distmat(DistmatArgs),
    /// Start the HTTP query session service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// UCR-format dataset: label then values on each line.
    #[arg(long)]
    pub data: PathBuf,
    /// Field separator (comma, tab or whitespace); detected when omitted.
    #[arg(long)]
    pub delimiter: Option<Delimiter>,
}

impl DataArgs {
    fn load(&self) -> anyhow::Result<DatasetF64> {
        Ok(load_ucr(&self.data, self.delimiter)?)
    }
}

#[derive(Debug, Args)]
pub struct EngineArgs {
    #[arg(long, default_value = "dtw-spectral")]
    pub refiner: Refiner,
    /// Warping window as a fraction of the series length, or `full`.
    #[arg(long, default_value = "0.1")]
    pub window: WarpingWindow,
    /// Affinity scale in exp(-gamma * d).
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    /// Maximum number of queries.
    #[arg(long, default_value_t = 50)]
    pub budget: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Compute DTW on the raw series instead of z-normalized ones.
    #[arg(long)]
    pub no_normalize: bool,
}

impl EngineArgs {
    pub fn config(&self) -> anyhow::Result<EngineConfig> {
        let config = EngineConfig {
            refiner: self.refiner,
            window: self.window,
            gamma: self.gamma,
            budget: self.budget,
            rng_seed: self.seed,
            normalize: !self.no_normalize,
            ..EngineConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    /// Answer from the dataset labels.
    Labels,
    /// Answer from a recorded constraint log (`--log`).
    Replay,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[arg(long, value_enum, default_value = "labels")]
    pub oracle: OracleKind,
    /// Constraint CSV to replay with `--oracle replay`.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Precomputed DTW matrix from `distmat` (binary, or CSV by extension).
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Write all constraints, queried and derived, as CSV.
    #[arg(long)]
    pub constraints_out: Option<PathBuf>,
    /// Write the JSON result here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FoldArgs {
    #[arg(long, default_value_t = cobras_ts::eval::DEFAULT_FOLDS)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub fold_seed: u64,
    /// Assign folds at random instead of stratifying by label.
    #[arg(long)]
    pub random_folds: bool,
}

impl FoldArgs {
    fn split(&self, ds: &DatasetF64) -> anyhow::Result<FoldSplit> {
        if self.folds < 2 {
            bail!("--folds must be at least 2");
        }
        Ok(match (self.random_folds, ds.labels()) {
            (false, Some(labels)) => FoldSplit::stratified(labels, self.folds, self.fold_seed),
            (false, None) => bail!("stratified folds need a labelled dataset"),
            (true, _) => FoldSplit::random(ds.len(), self.folds, self.fold_seed),
        })
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub folds: FoldArgs,
    /// Write the curves CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write a JSON summary, including the k-Shape baseline, here.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub folds: FoldArgs,
    /// Comma-separated gamma values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub gammas: Vec<f64>,
    /// Comma-separated window fractions (or `full`).
    #[arg(long, value_delimiter = ',', required = true)]
    pub windows: Vec<WarpingWindow>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenCbfArgs {
    #[arg(long, default_value_t = 10)]
    pub per_class: usize,
    #[arg(long, default_value_t = 128)]
    pub length: usize,
    /// Standard deviation of the additive Gaussian noise.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "whitespace")]
    pub delimiter: Delimiter,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatrixFormat {
    Binary,
    Csv,
}

#[derive(Debug, Args)]
pub struct DistmatArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "0.1")]
    pub window: WarpingWindow,
    /// Compute DTW on the raw series instead of z-normalized ones.
    #[arg(long)]
    pub no_normalize: bool,
    /// Defaults to CSV for a `.csv` output path, binary otherwise.
    #[arg(long, value_enum)]
    pub format: Option<MatrixFormat>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Directory of UCR datasets; a file's stem is its dataset id.
    #[arg(long, default_value = "data")]
    pub data_dir: PathBuf,
    /// Directory where session files are kept.
    #[arg(long, default_value = "sessions")]
    pub session_dir: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    #[arg(long, env = "COBRAS_PORT", default_value_t = 8080)]
    pub port: u16,
    /// Abort sessions whose query stays unanswered this many seconds.
    #[arg(long)]
    pub answer_timeout: Option<u64>,
}

pub fn run_cli(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Cluster(a) => cluster(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::GenCbf(a) => gen_cbf(a),
        Command::Distmat(a) => distmat(a),
        Command::Serve(a) => serve(a),
    }
}

/// Standard output unless a path is given.
fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn read_matrix(path: &Path) -> anyhow::Result<DistanceMatrixF64> {
    let f = BufReader::new(fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?);
    let dm = if path.extension().is_some_and(|e| e == "csv") {
        read_csv(f)
    } else {
        read_binary(f)
    };
    dm.with_context(|| format!("reading {}", path.display()))
}

#[derive(Debug, Serialize)]
struct ClusterOutput {
    dataset: String,
    n: usize,
    config: EngineConfig,
    oracle: OracleKind,
    outcome: RunOutcome,
    queries_used: usize,
    n_clusters: usize,
    /// Agreement with the dataset labels, when it has them.
    ari: Option<f64>,
    assignment: Vec<usize>,
    log: Vec<QueryRecord>,
}

fn cluster(args: ClusterArgs) -> anyhow::Result<()> {
    let ds = args.data.load()?;
    let config = args.engine.config()?;
    let prepared = match &args.matrix {
        Some(path) => Prepared::with_distance_matrix(&ds, &config, read_matrix(path)?)?,
        None => Prepared::new(&ds, &config)?,
    };
    let mask = vec![true; ds.len()];
    let result = match args.oracle {
        OracleKind::Labels => {
            let labels = ds.labels().context("the label oracle needs a labelled dataset")?;
            run(&prepared, LabelOracle::new(labels), &mask)?
        }
        OracleKind::Replay => {
            let path = args.log.as_ref().context("--oracle replay needs --log")?;
            let f = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
            let log = read_query_log_csv(BufReader::new(f))?;
            run(&prepared, ReplayOracle::new(log), &mask)?
        }
    };
    if let Some(path) = &args.constraints_out {
        result.constraints.write_csv(output(Some(path))?)?;
    }
    let out = ClusterOutput {
        dataset: ds.name().to_string(),
        n: ds.len(),
        config,
        oracle: args.oracle,
        outcome: result.outcome,
        queries_used: result.queries_used(),
        n_clusters: result.clustering.n_clusters(),
        ari: ds.labels().map(|l| ari(&result.clustering.assignment, l)).transpose()?,
        assignment: result.clustering.assignment,
        log: result.log,
    };
    let mut w = output(args.out.as_deref())?;
    serde_json::to_writer_pretty(&mut w, &out)?;
    writeln!(w)?;
    Ok(())
}

fn evaluate_cmd(args: EvaluateArgs) -> anyhow::Result<()> {
    let ds = args.data.load()?;
    let config = args.engine.config()?;
    let folds = args.folds.split(&ds)?;
    let prepared = Prepared::new(&ds, &config)?;
    let result = evaluate_prepared(&prepared, &folds)?;
    result.write_curves_csv(output(args.out.as_deref())?)?;

    let mut summary = EvalSummary::new(&ds, &config, &folds, &result);
    summary.kshape_baseline_ari = match ds.class_count() {
        Some(k) if k >= 1 => Some(kshape_baseline(&ds, k, config.rng_seed)?),
        _ => None,
    };
    eprintln!(
        "final mean ARI {:.4} over {} folds ({}){}",
        result.final_mean_ari,
        folds.k(),
        if folds.is_stratified() { "stratified" } else { "random" },
        summary
            .kshape_baseline_ari
            .map(|a| format!("; k-Shape baseline ARI {a:.4}"))
            .unwrap_or_default()
    );
    if let Some(path) = &args.summary {
        let mut w = output(Some(path))?;
        serde_json::to_writer_pretty(&mut w, &summary)?;
        writeln!(w)?;
    }
    Ok(())
}

fn sweep_cmd(args: SweepArgs) -> anyhow::Result<()> {
    let ds = args.data.load()?;
    let config = args.engine.config()?;
    if config.refiner != Refiner::DtwSpectral {
        bail!("sweep varies gamma and window, which only the dtw-spectral refiner uses");
    }
    let folds = args.folds.split(&ds)?;
    let points = sweep(&ds, &config, &args.gammas, &args.windows, &folds)?;
    cobras_ts::eval::write_sweep_csv(&points, output(args.out.as_deref())?)?;
    Ok(())
}

fn gen_cbf(args: GenCbfArgs) -> anyhow::Result<()> {
    let ds: DatasetF64 = generate_cbf(&CbfParams {
        per_class_count: args.per_class,
        length: args.length,
        noise_std: args.noise,
        rng_seed: args.seed,
    })?;
    write_ucr(&ds, &args.out, args.delimiter)?;
    Ok(())
}

fn distmat(args: DistmatArgs) -> anyhow::Result<()> {
    let ds = args.data.load()?;
    let working = if args.no_normalize { ds } else { ds.z_normalized() };
    let dm = distance_matrix(&working, args.window)?;
    let format = args
        .format
        .unwrap_or(if args.out.extension().is_some_and(|e| e == "csv") {
            MatrixFormat::Csv
        } else {
            MatrixFormat::Binary
        });
    let w = output(Some(&args.out))?;
    match format {
        MatrixFormat::Binary => write_binary(&dm, w)?,
        MatrixFormat::Csv => write_csv(&dm, w)?,
    }
    Ok(())
}

fn serve(args: ServeArgs) -> anyhow::Result<()> {
    tracing_subscriber::fmt().with_writer(io::stderr).init();
    let config = ServiceConfig {
        data_dir: args.data_dir,
        session_dir: args.session_dir,
        answer_timeout: args.answer_timeout.map(Duration::from_secs),
    };
    let addr = std::net::SocketAddr::new(args.host, args.port);
    tokio::runtime::Runtime::new()?.block_on(service::serve(config, addr))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn engine_flag_defaults_match_config_defaults() {
        let cli = Cli::try_parse_from(["cobras", "cluster", "--data", "x.txt"]).unwrap();
        let Command::Cluster(a) = cli.command else {
            panic!("expected cluster");
        };
        assert_eq!(a.engine.config().unwrap(), EngineConfig::default());
        assert_eq!(a.oracle, OracleKind::Labels);
    }

    #[test]
    fn list_flags_and_bad_values() {
        let cli = Cli::try_parse_from([
            "cobras",
            "sweep",
            "--data",
            "x",
            "--gammas",
            "0.1,1",
            "--windows",
            "0.05,full",
        ])
        .unwrap();
        let Command::Sweep(a) = cli.command else {
            panic!("expected sweep");
        };
        assert_eq!(a.gammas, vec![0.1, 1.0]);
        assert_eq!(a.windows, vec![WarpingWindow::Fraction(0.05), WarpingWindow::Full]);

        assert!(Cli::try_parse_from(["cobras", "cluster", "--data", "x", "--window", "2"]).is_err());
        assert!(Cli::try_parse_from(["cobras", "cluster", "--data", "x", "--refiner", "knn"]).is_err());
        assert!(Cli::try_parse_from(["cobras", "cluster", "--data", "x", "--bogus"]).is_err());
        let bad_gamma = Cli::try_parse_from(["cobras", "cluster", "--data", "x", "--gamma=-1"]).unwrap();
        let Command::Cluster(a) = bad_gamma.command else {
            panic!("expected cluster");
        };
        assert!(a.engine.config().is_err());
    }
}
