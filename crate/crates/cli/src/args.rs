use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use hydroode::evalbench::{Preset, Suite};
use hydroode::models::EncoderKind;
use hydroode::odeint::Solver;

#[derive(Debug, Parser)]
#[command(args_override_self = true)]
#[command(name = "hydroode", version, about = "Neural-ODE force forecasting on a synthetic towing-tank oracle")]
#[command(after_help = "Exit codes: 0 success, 1 verification failure, 2 usage, 3 i/o, 4 numerical divergence, 5 corrupt artifact.\nOutput directories default to $HYDROODE_OUT/<command> (or ./hydroode-out/<command>).")]
pub struct Cli {
    /// Flat JSON file of flag values; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads for data generation (1 guarantees the determinism contract).
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: u32,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with a train/val/test split.
    GenData(GenDataArgs),
    /// Train a model on a dataset's training split.
    Train(TrainArgs),
    /// Write per-trajectory force predictions.
    Predict(PredictArgs),
    /// Compute MAE/RMSE on a split and plot predictions against truth.
    Eval(EvalArgs),
    /// Run the model comparison benchmark and emit result tables.
    Bench(BenchArgs),
    /// Verify end-to-end gradients of a tiny model against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    AttentionOde,
    MlpOde,
    Lstm,
}

impl ModelArg {
    pub fn kind(self) -> EncoderKind {
        match self {
            ModelArg::AttentionOde => EncoderKind::Attention,
            ModelArg::MlpOde => EncoderKind::Mlp,
            ModelArg::Lstm => EncoderKind::Lstm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverArg {
    Euler,
    Rk4,
}

impl From<SolverArg> for Solver {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Euler => Solver::Euler,
            SolverArg::Rk4 => Solver::Rk4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteArg {
    Task1,
    Task2,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Task1 => Suite::Task1,
            SuiteArg::Task2 => Suite::Task2,
            SuiteArg::All => Suite::All,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetArg {
    Desk,
    Paper,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Desk => Preset::Desk,
            PresetArg::Paper => Preset::Paper,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct GenDataArgs {
    #[arg(long, value_parser = ["1.1", "1.2", "1.3", "2"])]
    pub task: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Defaults to the full 192-condition grid for Task 1 and 40 for Task 2.
    #[arg(long)]
    pub trajectories: Option<usize>,
    /// Steps per trajectory; defaults to 100 (1.1), 50 (1.2, 1.3) or 400 (2).
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long, default_value_t = 0.02)]
    pub dt: f64,
    /// Measurement noise as a fraction of each axis' spread (used by 1.3 and 2).
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Train/val/test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.8, 0.1, 0.1])]
    pub split: Vec<f64>,
}

/// Architecture flags shared by `train` and `gradcheck`. Unset values come
/// from the preset.
#[derive(Debug, Args, Serialize, Clone)]
pub struct ModelFlags {
    #[arg(long, value_enum, default_value_t = ModelArg::AttentionOde)]
    pub model: ModelArg,
    /// Integrator for ODE models (default euler); not accepted for lstm.
    #[arg(long, value_enum)]
    pub solver: Option<SolverArg>,
    #[arg(long, value_enum, default_value_t = PresetArg::Desk)]
    pub preset: PresetArg,
    #[arg(long)]
    pub d_model: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub latent: Option<usize>,
    /// Comma-separated hidden widths of the ODE kernel.
    #[arg(long, value_delimiter = ',')]
    pub kernel_hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub substeps: Option<usize>,
    #[arg(long)]
    pub lstm_hidden: Option<usize>,
    #[arg(long)]
    pub lstm_layers: Option<usize>,
    #[arg(long)]
    pub time_input: bool,
    #[arg(long)]
    pub positional_encoding: bool,
    #[arg(long)]
    pub layer_norm: bool,
    #[arg(long)]
    pub causal: bool,
    /// Expected condition width; defaults to the dataset's.
    #[arg(long)]
    pub n_in: Option<usize>,
    /// Expected force width; defaults to the dataset's.
    #[arg(long)]
    pub f_out: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelFlags,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 200)]
    pub max_epochs: usize,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub patience: usize,
    /// Global gradient-norm ceiling.
    #[arg(long, default_value_t = 1.0)]
    pub grad_clip: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::All)]
    pub split: SplitArg,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Maximum number of overlay plots to write.
    #[arg(long, default_value_t = 8)]
    pub plots: usize,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value_t = SuiteArg::All)]
    pub suite: SuiteArg,
    #[arg(long, value_enum, default_value_t = PresetArg::Desk)]
    pub preset: PresetArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Overrides the per-cell epoch budget.
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub task1_trajectories: Option<usize>,
    #[arg(long)]
    pub task2_trajectories: Option<usize>,
    #[arg(long)]
    pub task2_length: Option<usize>,
    /// Timed inference repeats per cell.
    #[arg(long)]
    pub repeats: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
#[command(args_override_self = true)]
pub struct GradcheckArgs {
    #[arg(long, value_enum, default_value_t = ModelArg::AttentionOde)]
    pub model: ModelArg,
    #[arg(long, value_enum)]
    pub solver: Option<SolverArg>,
    /// Sequence length of the random batch.
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    #[arg(long, default_value_t = 8)]
    pub d_model: usize,
    #[arg(long, default_value_t = 8)]
    pub latent: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Corrupts the backward pass (negative control for tests).
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}
