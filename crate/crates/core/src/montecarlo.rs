//! Simulation harness for a heavy-tailed two-group, two-period design with
//! a known quantile treatment effect.
//!
//! Outcomes are `Y^N = t_nu^-1(U) + T` without treatment and
//! `Y^I = t_nu^-1(U) + U + 1` with treatment, where `U | G=0 ~ Beta(a, b)`,
//! `U | G=1 ~ Uniform(0, 1)` and the treatment indicator is `G * T`. The
//! changes-in-changes effect at level `q` is exactly `q`.
//!
//! Replicate `r` draws from [`child_rng`]`(seed, r)`, so results do not depend
//! on thread scheduling and a longer run extends a shorter one.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cic::{cic_analytic_se, cic_bootstrap_se_grid, cic_composition, cic_estimate, SeMethod};
use crate::data::{Cell, QuadData};
use crate::ecic::{
    estimate_left_tail, estimate_right_tail, AutoConfig, EffectEstimate, Method,
};
use crate::error::{Error, Result};
use crate::seeding::child_rng;
use crate::special::{beta_quantile, student_t_quantile_unchecked};

/// Whole-dataset redraws allowed when a cell comes out empty.
pub const MAX_REDRAWS: usize = 100;

/// Replicates with an estimator failure beyond this share abort a run.
pub const MAX_FAILURE_RATE: f64 = 0.2;

/// Bootstrap draws per replicate for classic-CIC intervals in experiments.
pub const DEFAULT_SIM_BOOTSTRAP_REPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub pi_g: f64,
    pub pi_t: f64,
    pub pi_a: f64,
    pub pi_b: f64,
    pub alpha_dof: f64,
    pub n: usize,
    pub seed: u64,
}

impl Default for SimDesign {
    fn default() -> Self {
        Self {
            pi_g: 0.1,
            pi_t: 0.5,
            pi_a: 1.0,
            pi_b: 2.0,
            alpha_dof: 10.0,
            n: 5000,
            seed: 0,
        }
    }
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("pi_g", self.pi_g), ("pi_t", self.pi_t)] {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must lie in (0, 1), got {p}")));
            }
        }
        for (name, v) in [("pi_a", self.pi_a), ("pi_b", self.pi_b), ("alpha_dof", self.alpha_dof)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n < 100 {
            return Err(Error::InvalidArgument(format!("n must be at least 100, got {}", self.n)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratedObservation {
    pub y: f64,
    pub g: u8,
    pub t: u8,
    pub i_treat: u8,
    /// Latent rank variable, kept for inspection only.
    pub u: f64,
}

/// Draws one observation. Bernoulli rates of exactly 0 or 1 are allowed here.
pub fn draw_observation(design: &SimDesign, rng: &mut impl Rng) -> Result<GeneratedObservation> {
    let g = u8::from(rng.random::<f64>() < design.pi_g);
    let t = u8::from(rng.random::<f64>() < design.pi_t);
    let u = if g == 0 {
        // Open interval: the Beta quantile rejects the endpoints.
        let p = loop {
            let p: f64 = rng.random();
            if p > 0.0 {
                break p;
            }
        };
        beta_quantile(p, design.pi_a, design.pi_b)?
    } else {
        rng.random::<f64>()
    };
    let base = if u > 0.0 && u < 1.0 {
        student_t_quantile_unchecked(u, design.alpha_dof)
    } else if u <= 0.0 {
        f64::NEG_INFINITY
    } else {
        f64::INFINITY
    };
    let i_treat = g * t;
    let y = if i_treat == 1 { base + u + 1.0 } else { base + f64::from(t) };
    Ok(GeneratedObservation { y, g, t, i_treat, u })
}

/// `count` independent draws from `rng`.
pub fn draw_observations(
    design: &SimDesign,
    count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<GeneratedObservation>> {
    (0..count).map(|_| draw_observation(design, rng)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDataset {
    pub data: QuadData,
    /// Whole-dataset redraws triggered by an empty cell.
    pub redraws: usize,
}

/// The dataset of replicate `replicate`; bit-identical for identical inputs.
pub fn generate_dataset(design: &SimDesign, replicate: u64) -> Result<GeneratedDataset> {
    design.validate()?;
    let mut rng = child_rng(design.seed, replicate);
    for redraws in 0..=MAX_REDRAWS {
        let mut cells: [Vec<f64>; 4] = Default::default();
        for _ in 0..design.n {
            let obs = draw_observation(design, &mut rng)?;
            if !obs.y.is_finite() {
                // u == 0 for a treated-group draw; measure zero in theory.
                continue;
            }
            let cell = Cell::from_labels(obs.g, obs.t).expect("binary labels");
            cells[cell.index()].push(obs.y);
        }
        if cells.iter().all(|c| !c.is_empty()) {
            let [c00, c01, c10, c11] = cells;
            let data = QuadData::from_vecs(c00, c01, c10, c11)?;
            return Ok(GeneratedDataset { data, redraws });
        }
    }
    Err(Error::EmptyCellsInSimulation(MAX_REDRAWS + 1))
}

/// Population effect at level `q` in this design.
pub fn true_tau(q: f64) -> Result<f64> {
    if q > 0.0 && q < 1.0 {
        Ok(q)
    } else {
        Err(Error::InvalidLevel(q))
    }
}

/// Estimator used in a run. eCIC uses the right tail for `q >= 0.5` and the
/// left tail otherwise.
pub fn estimate_with(method: Method, data: &QuadData, q: f64, config: &AutoConfig) -> Result<EffectEstimate> {
    match method {
        Method::Ecic if q >= 0.5 => estimate_right_tail(data, q, &config.tail, config.d_floor),
        Method::Ecic => estimate_left_tail(data, q, config.left_transform, &config.tail, config.d_floor),
        Method::Cic => Ok(cic_estimate(data, q, config.se_method)?.into()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub q_grid: Vec<f64>,
    pub reps: usize,
    pub methods: Vec<Method>,
    pub estimator: AutoConfig,
}

impl ExperimentConfig {
    /// Defaults to bootstrap intervals for classic CIC: the kernel standard
    /// error breaks down at the extreme levels these experiments target.
    pub fn new(q_grid: Vec<f64>, reps: usize, methods: Vec<Method>) -> Self {
        Self {
            q_grid,
            reps,
            methods,
            estimator: AutoConfig {
                se_method: SeMethod::Bootstrap {
                    reps: DEFAULT_SIM_BOOTSTRAP_REPS,
                    seed: 0,
                },
                ..AutoConfig::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidArgument("reps must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("at least one method is required".into()));
        }
        if self.q_grid.is_empty() {
            return Err(Error::InvalidArgument("the quantile grid is empty".into()));
        }
        for &q in &self.q_grid {
            true_tau(q)?;
        }
        self.estimator.validate()
    }
}

/// The part of an estimate kept per replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointResult {
    pub tau_hat: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl From<&EffectEstimate> for PointResult {
    fn from(e: &EffectEstimate) -> Self {
        Self {
            tau_hat: e.tau_hat,
            se: e.se,
            ci_low: e.ci_low,
            ci_high: e.ci_high,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateRecord {
    pub replicate: u64,
    pub redraws: usize,
    /// Indexed `[method][q]`.
    pub results: Vec<Vec<Outcome>>,
}

type Outcome = std::result::Result<PointResult, String>;

fn point_only(tau_hat: f64) -> PointResult {
    PointResult {
        tau_hat,
        se: f64::NAN,
        ci_low: f64::NAN,
        ci_high: f64::NAN,
    }
}

/// Classic CIC over the grid. Bootstrap seeds are derived per replicate.
fn classic_over_grid(
    data: &QuadData,
    q_grid: &[f64],
    se_method: Option<SeMethod>,
    replicate: u64,
) -> Vec<Outcome> {
    let taus: Vec<Result<f64>> = q_grid.iter().map(|&q| Ok(cic_composition(data, q)?.tau())).collect();
    let ses: Vec<Result<f64>> = match se_method {
        None => return taus.into_iter().map(|t| t.map(point_only).map_err(|e| e.to_string())).collect(),
        Some(SeMethod::AnalyticKernel) => q_grid.iter().map(|&q| cic_analytic_se(data, q)).collect(),
        Some(SeMethod::Bootstrap { reps, seed }) => {
            let seed = child_rng(seed, replicate).random::<u64>();
            match cic_bootstrap_se_grid(data, q_grid, reps, seed) {
                Ok(v) => v.into_iter().map(Ok).collect(),
                Err(e) => vec![Err(e); q_grid.len()],
            }
        }
    };
    taus.into_iter()
        .zip(ses)
        .map(|(tau, se)| {
            let (tau_hat, se) = (tau.map_err(|e| e.to_string())?, se.map_err(|e| e.to_string())?);
            Ok(PointResult {
                tau_hat,
                se,
                ci_low: tau_hat - crate::Z_95 * se,
                ci_high: tau_hat + crate::Z_95 * se,
            })
        })
        .collect()
}

/// Runs one replicate: one dataset, every method at every level. Bias runs
/// skip the classic-CIC standard error.
pub fn run_replicate(
    kind: ExperimentKind,
    design: &SimDesign,
    config: &ExperimentConfig,
    replicate: u64,
) -> Result<ReplicateRecord> {
    let dataset = generate_dataset(design, replicate)?;
    let results = config
        .methods
        .iter()
        .map(|&m| match m {
            Method::Cic => {
                let se = (kind == ExperimentKind::Coverage).then_some(config.estimator.se_method);
                classic_over_grid(&dataset.data, &config.q_grid, se, replicate)
            }
            Method::Ecic => config
                .q_grid
                .iter()
                .map(|&q| {
                    estimate_with(m, &dataset.data, q, &config.estimator)
                        .map(|e| PointResult::from(&e))
                        .map_err(|e| e.to_string())
                })
                .collect(),
        })
        .collect();
    Ok(ReplicateRecord {
        replicate,
        redraws: dataset.redraws,
        results,
    })
}

/// Replicates `0..reps`, in replicate order.
pub fn run_replicates(
    kind: ExperimentKind,
    design: &SimDesign,
    config: &ExperimentConfig,
) -> Result<Vec<ReplicateRecord>> {
    design.validate()?;
    config.validate()?;
    (0..config.reps as u64)
        .into_par_iter()
        .map(|r| run_replicate(kind, design, config, r))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Bias,
    Coverage,
}

/// Summary of the estimates at one level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QSummary {
    pub q: f64,
    pub true_tau: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub median: f64,
    pub iqr_low: f64,
    pub iqr_high: f64,
    pub sd: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coverage_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_se: Option<f64>,
    pub successes: usize,
    pub failures: usize,
    pub failure_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub kind: ExperimentKind,
    pub method: Method,
    pub design: SimDesign,
    pub reps: usize,
    pub q_grid: Vec<f64>,
    pub redraws: usize,
    pub summaries: Vec<QSummary>,
}

impl ExperimentResult {
    pub fn summary(&self, q: f64) -> Option<&QSummary> {
        self.summaries.iter().find(|s| s.q == q)
    }
}

/// Linear-interpolation quantile of sorted values.
fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_mean(sorted: &[f64]) -> f64 {
    sorted.iter().sum::<f64>() / sorted.len() as f64
}

fn sorted_copy(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Summarises method `method_index` of `records`. Values are sorted before
/// any reduction, so the result does not depend on record order.
pub fn aggregate(
    kind: ExperimentKind,
    design: &SimDesign,
    config: &ExperimentConfig,
    method_index: usize,
    records: &[ReplicateRecord],
) -> Result<ExperimentResult> {
    let mut summaries = Vec::with_capacity(config.q_grid.len());
    for (qi, &q) in config.q_grid.iter().enumerate() {
        let truth = true_tau(q)?;
        let outcomes: Vec<_> = records.iter().map(|r| &r.results[method_index][qi]).collect();
        let ok: Vec<&PointResult> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
        let failures = outcomes.len() - ok.len();
        let failure_rate = failures as f64 / outcomes.len().max(1) as f64;
        if failure_rate > MAX_FAILURE_RATE || ok.is_empty() {
            let last_error = outcomes
                .iter()
                .filter_map(|o| o.as_ref().err())
                .min()
                .cloned()
                .unwrap_or_default();
            return Err(Error::ExcessiveFailures {
                q,
                rate: failure_rate,
                last_error,
            });
        }
        let taus = sorted_copy(ok.iter().map(|p| p.tau_hat));
        let mean = sorted_mean(&taus);
        let sd = if taus.len() > 1 {
            let dev = sorted_copy(taus.iter().map(|t| (t - mean) * (t - mean)));
            (dev.iter().sum::<f64>() / (taus.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        let (coverage_rate, mean_se) = match kind {
            ExperimentKind::Bias => (None, None),
            ExperimentKind::Coverage => {
                let covered = ok.iter().filter(|p| p.ci_low <= truth && truth <= p.ci_high).count();
                let ses = sorted_copy(ok.iter().map(|p| p.se));
                (Some(covered as f64 / ok.len() as f64), Some(sorted_mean(&ses)))
            }
        };
        summaries.push(QSummary {
            q,
            true_tau: truth,
            mean_estimate: mean,
            bias: mean - truth,
            median: sorted_quantile(&taus, 0.5),
            iqr_low: sorted_quantile(&taus, 0.25),
            iqr_high: sorted_quantile(&taus, 0.75),
            sd,
            coverage_rate,
            mean_se,
            successes: ok.len(),
            failures,
            failure_rate,
        });
    }
    Ok(ExperimentResult {
        kind,
        method: config.methods[method_index],
        design: *design,
        reps: records.len(),
        q_grid: config.q_grid.clone(),
        redraws: records.iter().map(|r| r.redraws).sum(),
        summaries,
    })
}

/// Runs all configured methods on shared datasets; one result per method.
pub fn run_experiments(
    kind: ExperimentKind,
    design: &SimDesign,
    config: &ExperimentConfig,
) -> Result<Vec<ExperimentResult>> {
    let records = run_replicates(kind, design, config)?;
    (0..config.methods.len())
        .map(|m| aggregate(kind, design, config, m, &records))
        .collect()
}

/// Mean, bias and quartiles of the estimates at each level.
pub fn run_bias_experiment(design: &SimDesign, q_grid: &[f64], reps: usize, method: Method) -> Result<ExperimentResult> {
    let config = ExperimentConfig::new(q_grid.to_vec(), reps, vec![method]);
    Ok(run_experiments(ExperimentKind::Bias, design, &config)?.remove(0))
}

/// As [`run_bias_experiment`], plus 95% interval coverage of the true effect
/// and the mean estimated standard error.
pub fn run_coverage_experiment(
    design: &SimDesign,
    q_grid: &[f64],
    reps: usize,
    method: Method,
) -> Result<ExperimentResult> {
    let config = ExperimentConfig::new(q_grid.to_vec(), reps, vec![method]);
    Ok(run_experiments(ExperimentKind::Coverage, design, &config)?.remove(0))
}

/// Tidy rows `q, statistic, value, method, n, reps, seed`, one per level and
/// statistic.
pub fn write_tidy_csv<W: Write>(results: &[ExperimentResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record(["q", "statistic", "value", "method", "n", "reps", "seed"])
        .map_err(csv_err)?;
    for res in results {
        for s in &res.summaries {
            let mut stats = vec![
                ("true_tau", s.true_tau),
                ("mean_estimate", s.mean_estimate),
                ("bias", s.bias),
                ("median", s.median),
                ("iqr_low", s.iqr_low),
                ("iqr_high", s.iqr_high),
                ("sd", s.sd),
            ];
            if let Some(c) = s.coverage_rate {
                stats.push(("coverage_rate", c));
            }
            if let Some(se) = s.mean_se {
                stats.push(("mean_se", se));
            }
            stats.push(("failure_rate", s.failure_rate));
            for (name, value) in stats {
                w.write_record([
                    s.q.to_string(),
                    name.to_string(),
                    value.to_string(),
                    res.method.name().to_string(),
                    res.design.n.to_string(),
                    res.reps.to_string(),
                    res.design.seed.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))
}
