//! `cloudreg` command line: registration, map merging, offloading-point
//! planning, benchmarking and synthetic fixture generation.
//!
//! Exit codes: 0 success, 1 input or configuration error, 2 the algorithm
//! ran but did not converge (or found nothing to align).

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use cloudreg::registration::RegistrationConfig;
use cloudreg::{Algorithm, Error};

mod commands;
mod json;

/// Seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Parser)]
#[command(name = "cloudreg", version, about = "Point-cloud registration, map merging and offloading-point planning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Align SOURCE onto TARGET and report the transform as JSON.
    Register(RegisterArgs),
    /// Chain-register partial maps into one cloud, optionally as an octree.
    Merge(MergeArgs),
    /// Evaluate the offloading energy model over a scenario's split points.
    OffloadPlan(OffloadArgs),
    /// Run every algorithm over a directory of fixtures.
    Bench(BenchArgs),
    /// Write seeded synthetic fixtures.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmArg {
    PointToPoint,
    PointToPlane,
    FsHicp,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::PointToPoint => Algorithm::PointToPoint,
            AlgorithmArg::PointToPlane => Algorithm::PointToPlane,
            AlgorithmArg::FsHicp => Algorithm::FsHicp,
        }
    }
}

/// Registration parameter overrides shared by several commands.
#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    /// Seed of the FS-HICP acceptance draws.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Coarse voxel leaf, meters.
    #[arg(long)]
    pub leaf_coarse: Option<f64>,
    /// Fine voxel leaf, meters.
    #[arg(long)]
    pub leaf_fine: Option<f64>,
    /// Coarse correspondence cap, meters.
    #[arg(long)]
    pub max_corr_coarse: Option<f64>,
    /// Initial fine correspondence cap, meters.
    #[arg(long)]
    pub max_corr_fine: Option<f64>,
    /// Probability of keeping a fine step that did not improve the fitness.
    #[arg(long)]
    pub accept_prob: Option<f64>,
    /// Non-improving fine steps tolerated before stopping.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Correspondence cap of the classic engines, meters.
    #[arg(long)]
    pub max_corr: Option<f64>,
    /// Iteration cap of the classic engines and of the FS-HICP fine stage.
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Keep wall-clock timings in outputs (they are zeroed otherwise, so
    /// that repeated runs are byte-identical).
    #[arg(long)]
    pub timing: bool,
}

impl ParamArgs {
    pub fn config(&self) -> Result<RegistrationConfig, Failure> {
        let mut c = RegistrationConfig::default();
        let f = &mut c.fs_hicp;
        f.rng_seed = self.seed;
        set(&mut f.coarse_leaf, self.leaf_coarse);
        set(&mut f.fine_leaf, self.leaf_fine);
        set(&mut f.coarse_max_corr, self.max_corr_coarse);
        set(&mut f.fine_max_corr, self.max_corr_fine);
        set(&mut f.accept_prob, self.accept_prob);
        set(&mut f.patience, self.patience);
        set(&mut f.max_iterations, self.max_iterations);
        set(&mut c.icp.max_corr_dist, self.max_corr);
        set(&mut c.icp.max_iterations, self.max_iterations);
        c.fs_hicp.validate().map_err(Failure::from)?;
        c.icp.validate().map_err(Failure::from)?;
        Ok(c)
    }
}

fn set<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    pub source: PathBuf,
    pub target: PathBuf,
    #[arg(long, value_enum, default_value_t = AlgorithmArg::FsHicp)]
    pub algorithm: AlgorithmArg,
    #[command(flatten)]
    pub params: ParamArgs,
    /// Ground-truth transform JSON; adds error metrics to the report.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Report path (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-iteration trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    /// Partial maps, in chain order.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub params: ParamArgs,
    /// Merged cloud (.ply or .xyz).
    #[arg(long)]
    pub out: PathBuf,
    /// Octree file of the merged cloud.
    #[arg(long)]
    pub octree: Option<PathBuf>,
    /// Octree leaf size, meters.
    #[arg(long, default_value_t = 0.05)]
    pub resolution: f64,
    /// JSON with each map's transform into the first map's frame.
    #[arg(long)]
    pub transforms: Option<PathBuf>,
    /// Ground-truth transforms JSON (`{"transforms": [..]}`); adds per-map
    /// error metrics to the transforms report.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OffloadArgs {
    /// Scenario TOML; the built-in reference scenario when omitted.
    pub scenario: Option<PathBuf>,
    /// Override the link bandwidth, Mbit/s.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Directory of `<name>.source.ply`, `<name>.target.ply` and optional
    /// `<name>.truth.json` files.
    pub fixtures: PathBuf,
    #[command(flatten)]
    pub params: ParamArgs,
    /// Fitness threshold for the iterations-to-threshold column, m².
    #[arg(long, default_value_t = 0.005)]
    pub threshold: f64,
    /// Directory for `summary.csv` and `series.csv` (summary to stdout when
    /// omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Partially overlapping desk-corner pairs with known transforms.
    DeskPairs,
    /// Four overlapping quadrant maps of a room.
    Quadrants,
    /// One dense room scan.
    Room,
    /// A pair with no overlap at all.
    Disjoint,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    pub kind: SynthKind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Number of pairs (desk-pairs only).
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Points per cloud.
    #[arg(long)]
    pub points: Option<usize>,
    /// Overlap fraction (desk-pairs, quadrants).
    #[arg(long)]
    pub overlap: Option<f64>,
}

/// A command failure and its exit code.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    NotConverged(String),
}

impl Failure {
    pub fn input(msg: impl Into<String>) -> Self {
        Failure::Input(msg.into())
    }

    pub fn code(&self) -> i32 {
        match self {
            Failure::Input(_) => 1,
            Failure::NotConverged(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Input(m) => write!(f, "error: {m}"),
            Failure::NotConverged(m) => write!(f, "not converged: {m}"),
        }
    }
}

fn algorithmic(e: &Error) -> bool {
    match e {
        Error::NoCorrespondences | Error::DegenerateGeometry(_) | Error::SingularSystem { .. } => true,
        Error::PairFailed { source, .. } | Error::File { source, .. } => algorithmic(source),
        _ => false,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if algorithmic(&e) {
            Failure::NotConverged(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("CLOUDREG_LOG", "warn"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Register(a) => commands::register(&a),
        Command::Merge(a) => commands::merge(&a),
        Command::OffloadPlan(a) => commands::offload_plan(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Synth(a) => commands::synth(&a),
    };
    match outcome {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{f}");
            f.code()
        }
    }
}

/// Writes `text` to `path`, or to stdout when `path` is `None`.
fn emit(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            let mut out = std::io::stdout().lock();
            let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
            Ok(())
        }
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}
