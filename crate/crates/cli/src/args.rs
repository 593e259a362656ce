use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ecic_core::tail::{
    DEFAULT_FIXED_POWER, DEFAULT_FIXED_SCALE, DEFAULT_GH_CRITICAL, DEFAULT_GH_WINDOW,
};
use ecic_core::{KRule, MethodChoice, SeMethod, TailChoice, TailTransform};

#[derive(Debug, Parser)]
#[command(name = "ecic", version, about = "Extreme and classic changes-in-changes estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate quantile treatment effects from a y,g,t CSV file.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo bias or coverage experiment.
    Simulate(SimulateArgs),
    /// Print the per-cell tail fits used by the extreme estimator.
    FitTail(FitTailArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KRuleArg {
    GuillouHall,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransformArg {
    Identity,
    Negate,
    Reciprocal,
}

impl From<TransformArg> for TailTransform {
    fn from(t: TransformArg) -> Self {
        match t {
            TransformArg::Identity => TailTransform::Identity,
            TransformArg::Negate => TailTransform::Negate,
            TransformArg::Reciprocal => TailTransform::Reciprocal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Auto,
    Cic,
    Ecic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TailArg {
    Auto,
    Right,
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SeArg {
    Analytic,
    Bootstrap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimMethodArg {
    Ecic,
    Cic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentArg {
    Bias,
    Coverage,
}

#[derive(Debug, Clone, Args)]
pub struct TailArgs {
    /// Threshold rule for the number of upper order statistics.
    #[arg(long, value_enum, default_value_t = KRuleArg::GuillouHall)]
    pub k_rule: KRuleArg,
    /// Exponent of the fixed rule k = scale * n^power.
    #[arg(long, default_value_t = DEFAULT_FIXED_POWER)]
    pub k_power: f64,
    /// Scale of the fixed rule k = scale * n^power.
    #[arg(long, default_value_t = DEFAULT_FIXED_SCALE)]
    pub k_scale: f64,
    /// Critical value of the Guillou-Hall statistic.
    #[arg(long, default_value_t = DEFAULT_GH_CRITICAL)]
    pub gh_critical: f64,
    /// Moving-average width of the Guillou-Hall statistic.
    #[arg(long, default_value_t = DEFAULT_GH_WINDOW)]
    pub gh_window: usize,
    /// Break tied outcomes with seeded jitter before tail fitting.
    #[arg(long)]
    pub jitter_ties: bool,
}

impl TailArgs {
    pub fn k_rule(&self) -> KRule {
        match self.k_rule {
            KRuleArg::GuillouHall => KRule::GuillouHall {
                c_crit: self.gh_critical,
                window: self.gh_window,
            },
            KRuleArg::Fixed => KRule::Fixed {
                power: self.k_power,
                scale: self.k_scale,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// CSV file with columns y, g, t.
    #[arg(long)]
    pub input: PathBuf,
    /// Quantile levels: a comma list or start:stop:step.
    #[arg(long, default_value = "0.5")]
    pub q: String,
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value_t = TailArg::Auto)]
    pub tail: TailArg,
    /// Decreasing map used for left-tail estimation.
    #[arg(long, value_enum, default_value_t = TransformArg::Negate)]
    pub transform: TransformArg,
    #[command(flatten)]
    pub tail_args: TailArgs,
    /// Lower bound on the extrapolation depth inside the log factor.
    #[arg(long, default_value_t = 10.0)]
    pub d_floor: f64,
    /// Levels at or below this use the left-tail extreme estimator.
    #[arg(long, default_value_t = 0.05)]
    pub extreme_low: f64,
    /// Levels at or above this use the right-tail extreme estimator.
    #[arg(long, default_value_t = 0.95)]
    pub extreme_high: f64,
    /// Standard error of the classic estimator.
    #[arg(long, value_enum, default_value_t = SeArg::Analytic)]
    pub se_method: SeArg,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(100..))]
    pub bootstrap_reps: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the report into this directory instead of standard output.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

impl EstimateArgs {
    pub fn run_config(&self, q_list: Vec<f64>) -> ecic_core::RunConfig {
        ecic_core::RunConfig {
            q_list,
            method: match self.method {
                MethodArg::Auto => MethodChoice::Auto,
                MethodArg::Cic => MethodChoice::Cic,
                MethodArg::Ecic => MethodChoice::Ecic,
            },
            tail: match self.tail {
                TailArg::Auto => TailChoice::Auto,
                TailArg::Right => TailChoice::Right,
                TailArg::Left => TailChoice::Left,
            },
            transform: self.transform.into(),
            k_rule: self.tail_args.k_rule(),
            d_floor: self.d_floor,
            extreme_low: self.extreme_low,
            extreme_high: self.extreme_high,
            se_method: match self.se_method {
                SeArg::Analytic => SeMethod::AnalyticKernel,
                SeArg::Bootstrap => SeMethod::Bootstrap {
                    reps: self.bootstrap_reps as usize,
                    seed: self.seed,
                },
            },
            jitter_ties: self.tail_args.jitter_ties,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Total sample size per replicate.
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    /// Number of replicates.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub reps: u64,
    /// Estimators to run on the shared datasets (comma separated).
    #[arg(long, value_enum, value_delimiter = ',', default_value = "ecic,cic")]
    pub method: Vec<SimMethodArg>,
    /// Quantile levels: a comma list or start:stop:step.
    #[arg(long, default_value = "0.90:0.995:0.005")]
    pub q: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub pi_g: f64,
    #[arg(long, default_value_t = 0.5)]
    pub pi_t: f64,
    #[arg(long, default_value_t = 1.0)]
    pub pi_a: f64,
    #[arg(long, default_value_t = 2.0)]
    pub pi_b: f64,
    /// Degrees of freedom of the Student-t outcome noise.
    #[arg(long, default_value_t = 10.0)]
    pub alpha_dof: f64,
    #[arg(long, value_enum, default_value_t = ExperimentArg::Coverage)]
    pub experiment: ExperimentArg,
    #[command(flatten)]
    pub tail_args: TailArgs,
    #[arg(long, default_value_t = 10.0)]
    pub d_floor: f64,
    /// Bootstrap draws behind each classic-CIC interval.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(100..))]
    pub bootstrap_reps: u64,
    #[arg(long, default_value = ".")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitTailArgs {
    /// CSV file with columns y, g, t.
    #[arg(long)]
    pub input: PathBuf,
    /// Map applied to the outcomes before fitting.
    #[arg(long, value_enum, default_value_t = TransformArg::Identity)]
    pub transform: TransformArg,
    #[command(flatten)]
    pub tail_args: TailArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}
