use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use qwtomo::training::OptimizerKind;

/// Open quantum-walk simulation and neural-density-operator tomography.
///
/// All angles are in radians. Every option can also be given in a TOML file
/// passed with --config: top-level keys and keys in a section named after the
/// command (e.g. [train]) use the long flag name, with '-' or '_'. Flags on
/// the command line override file values.
#[derive(Parser, Debug)]
#[command(name = "qwtomo", version, args_override_self = true)]
pub struct Cli {
    /// TOML file with option values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Print summaries as JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Evolve a walk and write the final density matrix and position distribution.
    Simulate(SimulateArgs),
    /// Measure a state in every tomography basis and write a dataset.
    GenData(GenDataArgs),
    /// Fit a neural density operator to a dataset.
    Train(TrainArgs),
    /// Fit the Cholesky maximum-likelihood baseline to a dataset.
    Maxlik(MaxlikArgs),
    /// Score a reconstruction against a reference state or dataset.
    Evaluate(EvaluateArgs),
    /// Run all four optimizers from the same initialization on one dataset.
    BenchOpt(BenchOptArgs),
    /// Regenerate the benchmark, mixing-sweep or optimizer-comparison data.
    Reproduce(ReproduceArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    None,
    Mixing,
    Dephasing,
    Depolarizing,
}

impl NoiseKind {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseKind::None => "none",
            NoiseKind::Mixing => "mixing",
            NoiseKind::Dephasing => "dephasing",
            NoiseKind::Depolarizing => "depolarizing",
        }
    }
}

/// Walk definition shared by the commands that simulate.
#[derive(Args, Debug, Clone)]
pub struct WalkArgs {
    /// Number of walk steps N (dimension 2(N+1)).
    #[arg(long)]
    pub steps: Option<usize>,

    /// Constant coin angle; pi/4 (the Hadamard coin) by default.
    #[arg(long, conflicts_with = "disordered_seed")]
    pub alpha: Option<f64>,

    /// Redraw the coin angle uniformly from [0, pi] at every step, seeded.
    #[arg(long)]
    pub disordered_seed: Option<u64>,

    /// Noise applied after every step.
    #[arg(long, value_enum, default_value_t = NoiseKind::None)]
    pub noise: NoiseKind,

    /// Mixing weight of the coin-projector Kraus branch.
    #[arg(long)]
    pub w_s: Option<f64>,

    /// Mixing weight of the site-projector Kraus branch.
    #[arg(long)]
    pub w_l: Option<f64>,

    /// Half-width of the fluctuating dephasing phase, in [0, pi].
    #[arg(long)]
    pub delta_beta: Option<f64>,

    /// Depolarizing probability per step.
    #[arg(long = "depolarizing-p")]
    pub depolarizing_p: Option<f64>,

    /// Average dephasing over this many sampled phase gates instead of exactly.
    #[arg(long)]
    pub mc_samples: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub walk: WalkArgs,

    /// Seed for sampled dephasing.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Density-matrix output file.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Position-distribution CSV output file.
    #[arg(long)]
    pub positions: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("source").args(["from_state", "steps"]).required(true).multiple(true)))]
pub struct GenDataArgs {
    /// Measure this state file instead of simulating.
    #[arg(long)]
    pub from_state: Option<PathBuf>,

    #[command(flatten)]
    pub walk: WalkArgs,

    /// Sample this many shots per basis instead of exact probabilities.
    #[arg(long)]
    pub shots: Option<u64>,

    /// Seed for shot sampling and sampled dephasing.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Dataset output file.
    #[arg(long)]
    pub out: PathBuf,
}

/// Optimizer settings shared by train, bench-opt and reproduce.
#[derive(Args, Debug, Clone, Default)]
pub struct OptimArgs {
    /// Stop when the gradient norm falls to this value.
    #[arg(long)]
    pub grad_tol: Option<f64>,

    /// Iteration budget.
    #[arg(long)]
    pub max_iters: Option<usize>,

    /// Initial relative metric regularization for gngd.
    #[arg(long)]
    pub metric_eps: Option<f64>,

    /// Cap of the adaptive metric regularization (equal to --metric-eps to keep it fixed).
    #[arg(long)]
    pub metric_eps_max: Option<f64>,

    /// Half-width of the uniform parameter initialization.
    #[arg(long)]
    pub init_scale: Option<f64>,

    /// History length for lbfgs.
    #[arg(long)]
    pub lbfgs_memory: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset to fit.
    #[arg(long)]
    pub dataset: PathBuf,

    /// Expected number of walk steps; checked against the dataset.
    #[arg(long)]
    pub steps: Option<usize>,

    /// gd, cg, lbfgs or gngd. Defaults to gngd, or lbfgs for open walks.
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,

    /// Hidden units (default 10, or 15 for open walks).
    #[arg(long)]
    pub hidden: Option<usize>,

    /// Ancillary units (default 10, or 15 for open walks).
    #[arg(long)]
    pub ancillary: Option<usize>,

    /// Noise class of the measured walk; anything but none selects the open-walk defaults.
    #[arg(long, value_enum, default_value_t = NoiseKind::None)]
    pub noise: NoiseKind,

    #[command(flatten)]
    pub optim: OptimArgs,

    /// Seed of the parameter initialization.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Continue from this checkpoint instead of a random initialization.
    #[arg(long)]
    pub init: Option<PathBuf>,

    /// Reference state for fidelity and purity in the report.
    #[arg(long)]
    pub target: Option<PathBuf>,

    /// Checkpoint output file.
    #[arg(long)]
    pub out: PathBuf,

    /// Training report (JSON) output file.
    #[arg(long)]
    pub report: Option<PathBuf>,

    /// Per-iteration trace CSV output file.
    #[arg(long)]
    pub trace: Option<PathBuf>,

    /// Keep wall-clock times in the report and trace (otherwise zeroed so reruns are identical).
    #[arg(long)]
    pub timings: bool,
}

#[derive(Args, Debug)]
pub struct MaxlikArgs {
    /// Dataset to fit.
    #[arg(long)]
    pub dataset: PathBuf,

    /// Expected number of walk steps; checked against the dataset.
    #[arg(long)]
    pub steps: Option<usize>,

    #[arg(long, default_value_t = 1e-8)]
    pub grad_tol: f64,

    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,

    /// Seed of the random initialization.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Reference state for fidelity and purity in the report.
    #[arg(long)]
    pub target: Option<PathBuf>,

    /// Reconstructed density-matrix output file.
    #[arg(long)]
    pub out: PathBuf,

    /// Fitted Cholesky parameters (JSON) output file.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,

    /// Fit report (JSON) output file.
    #[arg(long)]
    pub report: Option<PathBuf>,

    /// Per-iteration trace CSV output file.
    #[arg(long)]
    pub trace: Option<PathBuf>,

    /// Keep wall-clock times in the report and trace.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("estimate").args(["checkpoint", "state"]).required(true)))]
#[command(group(ArgGroup::new("reference_source").args(["reference", "dataset"]).required(true)))]
pub struct EvaluateArgs {
    /// Network checkpoint to evaluate.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,

    /// Density-matrix file to evaluate.
    #[arg(long)]
    pub state: Option<PathBuf>,

    /// Reference density matrix.
    #[arg(long)]
    pub reference: Option<PathBuf>,

    /// Reference measurement dataset (fidelity is then unavailable).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("source").args(["dataset", "steps"]).required(true).multiple(true)))]
pub struct BenchOptArgs {
    /// Dataset to fit instead of simulating one.
    #[arg(long)]
    pub dataset: Option<PathBuf>,

    #[command(flatten)]
    pub walk: WalkArgs,

    /// Hidden units (default 10, or 15 for open walks).
    #[arg(long)]
    pub hidden: Option<usize>,

    /// Ancillary units (default 10, or 15 for open walks).
    #[arg(long)]
    pub ancillary: Option<usize>,

    #[command(flatten)]
    pub optim: OptimArgs,

    /// Seed of the shared initialization and of sampled dephasing.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Combined cost CSV (iter, optimizer, cost) output file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Network versus MaxLik fidelity against walk length.
    Fig3,
    /// Reconstructed purity across six dephasing strengths.
    Fig4,
    /// Cost against iteration for the four optimizers.
    Fig5,
}

#[derive(Args, Debug)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub preset: Preset,

    /// Output directory (default reproduce/<preset>).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,

    /// Samples per point (fig3: 10, fig4: 5; 20 with --full).
    #[arg(long)]
    pub samples: Option<usize>,

    /// Longest walk for fig3 (6; 10 with --full).
    #[arg(long)]
    pub max_steps: Option<usize>,

    /// Walk length for fig4 (5) and fig5 (10; 30 with --full).
    #[arg(long)]
    pub steps: Option<usize>,

    /// Hidden units; required for fig5 with --full.
    #[arg(long)]
    pub hidden: Option<usize>,

    /// Ancillary units; required for fig5 with --full.
    #[arg(long)]
    pub ancillary: Option<usize>,

    /// Full-scale sizes. The fig5 run at N=30 takes minutes per natural-gradient iteration.
    #[arg(long)]
    pub full: bool,

    /// Override the per-family default optimizer.
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,

    #[command(flatten)]
    pub optim: OptimArgs,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
