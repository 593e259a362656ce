//! Order statistics, Hill tail-index estimation and power-law extrapolation.
//!
//! Everything here works on the upper tail. Lower tails are handled by first
//! mapping the outcomes through a strictly decreasing [`TailTransform`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::CellSample;
use crate::error::{Error, Result};
use crate::seeding::child_rng;

/// Outcomes of one cell in non-increasing order (`Y^(1) >= Y^(2) >= ...`).
#[derive(Debug, Clone, PartialEq)]
pub struct SortedSample {
    descending: Vec<f64>,
}

impl SortedSample {
    pub fn descending(&self) -> &[f64] {
        &self.descending
    }

    pub fn len(&self) -> usize {
        self.descending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descending.is_empty()
    }

    /// The `j`-th largest value, 1-based.
    pub fn order_stat(&self, j: usize) -> f64 {
        self.descending[j - 1]
    }

    /// Number of strictly positive values (a prefix, since the order is descending).
    pub fn positive_count(&self) -> usize {
        self.descending.partition_point(|&y| y > 0.0)
    }
}

/// Sorts a cell's outcomes into descending order. Equal values keep their
/// original relative order.
pub fn sort_descending(sample: &CellSample) -> SortedSample {
    let mut descending = sample.outcomes().to_vec();
    descending.sort_by(|a, b| b.total_cmp(a));
    SortedSample { descending }
}

/// Sorts raw outcomes, rejecting empty or non-finite input.
pub fn sort_values_descending(values: &[f64]) -> Result<SortedSample> {
    if values.is_empty() {
        return Err(Error::EmptyCell);
    }
    if let Some(pos) = values.iter().position(|y| !y.is_finite()) {
        return Err(Error::NonFinite(pos));
    }
    let mut descending = values.to_vec();
    descending.sort_by(|a, b| b.total_cmp(a));
    Ok(SortedSample { descending })
}

/// Per-cell summary of a fitted Pareto-type upper tail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    /// Number of top order statistics used.
    pub k: usize,
    /// `Y^(k+1)`, the tail threshold.
    pub threshold: f64,
    /// Hill estimate of the Pareto exponent.
    pub alpha_hat: f64,
    /// Cell size.
    pub n: usize,
}

impl TailFit {
    pub fn new(k: usize, threshold: f64, alpha_hat: f64, n: usize) -> Result<Self> {
        if k == 0 || k >= n {
            return Err(Error::KOutOfRange { k, n });
        }
        if !(threshold > 0.0) || !threshold.is_finite() {
            return Err(Error::NonPositiveThreshold);
        }
        if !(alpha_hat > 0.0) || !alpha_hat.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "alpha_hat must be positive and finite, got {alpha_hat}"
            )));
        }
        Ok(Self { k, threshold, alpha_hat, n })
    }

    /// `k / n`, the empirical exceedance probability of the threshold.
    pub fn tail_fraction(&self) -> f64 {
        self.k as f64 / self.n as f64
    }

    /// Extrapolation depth `k / (n (1 - q))`.
    pub fn depth(&self, q: f64) -> f64 {
        self.k as f64 / (self.n as f64 * (1.0 - q))
    }
}

/// Hill estimator on the top `k` order statistics:
/// `1 / alpha = (1/k) * sum_{j<=k} log(Y^(j) / Y^(k+1))`.
pub fn hill_estimate(sorted: &SortedSample, k: usize) -> Result<TailFit> {
    let n = sorted.len();
    if k == 0 || k >= n {
        return Err(Error::KOutOfRange { k, n });
    }
    let threshold = sorted.order_stat(k + 1);
    if !(threshold > 0.0) {
        return Err(Error::NonPositiveThreshold);
    }
    let log_excess: f64 = sorted.descending[..k]
        .iter()
        .map(|&y| (y / threshold).ln())
        .sum();
    if !(log_excess > 0.0) {
        return Err(Error::DegenerateTies);
    }
    let alpha_hat = k as f64 / log_excess;
    TailFit::new(k, threshold, alpha_hat, n)
}

fn check_open_level(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidLevel(q))
    }
}

/// Power-law quantile extrapolation `Y^(k+1) * (k / (n (1 - q)))^(1/alpha)`.
pub fn extreme_quantile(fit: &TailFit, q: f64) -> Result<f64> {
    check_open_level(q)?;
    Ok(fit.threshold * (fit.depth(q).ln() / fit.alpha_hat).exp())
}

/// Estimated exceedance probability `(k/n) * (y / Y^(k+1))^(-alpha)`.
///
/// Not clamped to `[0, 1]`: below the threshold the power law exceeds `k/n`
/// and can exceed one, and callers composing quantile maps need that raw value.
pub fn tail_probability(fit: &TailFit, y: f64) -> Result<f64> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::InvalidArgument(format!("tail probability needs y > 0, got {y}")));
    }
    Ok(fit.tail_fraction() * (y / fit.threshold).powf(-fit.alpha_hat))
}

/// `k = clamp(round(scale * n^power), 1, n - 1)`.
pub fn select_k_fixed(n: usize, power: f64, scale: f64) -> Result<usize> {
    if n < 10 {
        return Err(Error::InvalidArgument(format!("fixed k rule needs n >= 10, got {n}")));
    }
    if !(power > 0.0 && power < 1.0) {
        return Err(Error::InvalidArgument(format!("power must lie in (0, 1), got {power}")));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {scale}")));
    }
    let raw = (scale * (n as f64).powf(power)).round();
    Ok((raw as usize).clamp(1, n - 1))
}

pub const DEFAULT_FIXED_POWER: f64 = 0.5;
pub const DEFAULT_FIXED_SCALE: f64 = 2.0;
pub const DEFAULT_GH_CRITICAL: f64 = 1.25;
pub const DEFAULT_GH_WINDOW: usize = 5;

/// Outcome of a threshold-count selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KChoice {
    pub k: usize,
    /// The sequential diagnostic could not run and the fixed default rule was used.
    pub fallback: bool,
}

/// Sequential Guillou–Hall style choice of `k`.
///
/// With scaled log-spacings `Z_j = j * log(Y^(j) / Y^(j+1))`, the statistic
/// `T(k) = sqrt(3 / k^3) * sum_j (k - 2j + 1) Z_j / mean(Z_1..Z_k)` is
/// asymptotically standard normal when the top `k` values follow an exact
/// Pareto law. `|T|` is smoothed with a centred moving average of width
/// `window` over the candidates `k_min..=k_max`, where
/// `k_min = max(10, round(0.02 n))` and `k_max = round(0.2 n)` (capped by the
/// number of positive values). The choice is one below the first `k` whose
/// smoothed `|T|` exceeds `c_crit`, never below `k_min`; without an exceedance
/// it is `k_max`.
///
/// Falls back to [`select_k_fixed`] with default constants when there are too
/// few candidates.
pub fn select_k_guillou_hall(sorted: &SortedSample, c_crit: f64, window: usize) -> Result<KChoice> {
    if !(c_crit > 0.0) || !c_crit.is_finite() {
        return Err(Error::InvalidArgument(format!("critical value must be positive, got {c_crit}")));
    }
    if window == 0 || window % 2 == 0 {
        return Err(Error::InvalidArgument(format!("window must be odd and >= 1, got {window}")));
    }
    let n = sorted.len();
    let k_min = 10usize.max((0.02 * n as f64).round() as usize);
    let k_max = ((0.2 * n as f64).round() as usize)
        .min(sorted.positive_count().saturating_sub(1))
        .min(n.saturating_sub(1));

    if n < 20 || k_max < k_min + window {
        let k = select_k_fixed(n, DEFAULT_FIXED_POWER, DEFAULT_FIXED_SCALE)?;
        return Ok(KChoice { k, fallback: true });
    }

    let y = sorted.descending();
    // Prefix sums of Z_j and j * Z_j, j = 1..=k_max.
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut stats = Vec::with_capacity(k_max - k_min + 1);
    for j in 1..=k_max {
        let z = j as f64 * (y[j - 1] / y[j]).ln();
        s0 += z;
        s1 += j as f64 * z;
        if j >= k_min {
            let k = j as f64;
            let t = if s0 > 0.0 {
                (3.0 / (k * k * k)).sqrt() * ((k + 1.0) * s0 - 2.0 * s1) / (s0 / k)
            } else {
                0.0
            };
            stats.push(t.abs());
        }
    }

    let half = window / 2;
    let len = stats.len();
    for i in 0..len {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(len - 1);
        let smoothed = stats[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
        if smoothed > c_crit {
            let k = (k_min + i).saturating_sub(1).max(k_min);
            return Ok(KChoice { k, fallback: false });
        }
    }
    Ok(KChoice { k: k_max, fallback: false })
}

/// How the threshold count `k` is chosen in each cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum KRule {
    GuillouHall { c_crit: f64, window: usize },
    Fixed { power: f64, scale: f64 },
}

impl Default for KRule {
    fn default() -> Self {
        KRule::GuillouHall {
            c_crit: DEFAULT_GH_CRITICAL,
            window: DEFAULT_GH_WINDOW,
        }
    }
}

impl KRule {
    pub fn fixed_default() -> Self {
        KRule::Fixed {
            power: DEFAULT_FIXED_POWER,
            scale: DEFAULT_FIXED_SCALE,
        }
    }

    pub fn select(&self, sorted: &SortedSample) -> Result<KChoice> {
        match *self {
            KRule::GuillouHall { c_crit, window } => select_k_guillou_hall(sorted, c_crit, window),
            KRule::Fixed { power, scale } => Ok(KChoice {
                k: select_k_fixed(sorted.len(), power, scale)?,
                fallback: false,
            }),
        }
    }
}

/// Breaks ties by adding seeded uniform noise on `[-g/4, g/4]`, `g` being the
/// smallest positive gap between distinct outcomes. The ordering of distinct
/// values is preserved. Samples without ties are returned unchanged.
pub fn jitter_ties(sample: &CellSample, seed: u64) -> Result<CellSample> {
    let mut sorted = sample.outcomes().to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut has_ties = false;
    let mut min_gap = f64::INFINITY;
    for w in sorted.windows(2) {
        let gap = w[1] - w[0];
        if gap == 0.0 {
            has_ties = true;
        } else if gap < min_gap {
            min_gap = gap;
        }
    }
    if !has_ties {
        return Ok(sample.clone());
    }
    if !min_gap.is_finite() {
        return Err(Error::DegenerateTies);
    }
    let amplitude = 0.25 * min_gap;
    let mut rng = child_rng(seed, sample.cell().index() as u64);
    let jittered = sample
        .outcomes()
        .iter()
        .map(|&y| y + amplitude * (2.0 * rng.random::<f64>() - 1.0))
        .collect();
    CellSample::new(sample.cell(), jittered)
}

/// A strictly monotone map used to move a lower tail into the upper tail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TailTransform {
    Identity,
    #[default]
    Negate,
    Reciprocal,
}

impl TailTransform {
    pub fn name(self) -> &'static str {
        match self {
            TailTransform::Identity => "identity",
            TailTransform::Negate => "negate",
            TailTransform::Reciprocal => "reciprocal",
        }
    }

    pub fn is_decreasing(self) -> bool {
        !matches!(self, TailTransform::Identity)
    }

    fn map(self, y: f64) -> f64 {
        match self {
            TailTransform::Identity => y,
            TailTransform::Negate => -y,
            TailTransform::Reciprocal => 1.0 / y,
        }
    }

    /// `|d/dz inverse(z)|`, the delta-method scale factor.
    pub fn inverse_slope(self, z: f64) -> f64 {
        match self {
            TailTransform::Identity | TailTransform::Negate => 1.0,
            TailTransform::Reciprocal => 1.0 / (z * z),
        }
    }
}

impl std::str::FromStr for TailTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" => Ok(TailTransform::Identity),
            "negate" => Ok(TailTransform::Negate),
            "reciprocal" => Ok(TailTransform::Reciprocal),
            other => Err(Error::InvalidArgument(format!("unknown transform '{other}'"))),
        }
    }
}

pub fn apply_transform(sample: &CellSample, transform: TailTransform) -> Result<CellSample> {
    if transform == TailTransform::Reciprocal && sample.outcomes().iter().any(|&y| y <= 0.0) {
        return Err(Error::InadmissibleTransform {
            transform: "reciprocal",
            reason: "requires strictly positive outcomes",
        });
    }
    sample.try_map(|y| transform.map(y))
}

pub fn invert_transform(value: f64, transform: TailTransform) -> Result<f64> {
    if transform == TailTransform::Reciprocal && value == 0.0 {
        return Err(Error::InadmissibleTransform {
            transform: "reciprocal",
            reason: "cannot invert zero",
        });
    }
    // All three maps are involutions.
    Ok(transform.map(value))
}
