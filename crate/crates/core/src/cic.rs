//! Plug-in changes-in-changes estimator built from empirical CDFs, for
//! intermediate quantile levels.
//!
//! The treated-cell counterfactual quantile is `F01^-1(F00(F10^-1(q)))` with
//! every map replaced by its empirical counterpart, quantiles taken as
//! left-inverses (no interpolation).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Cell, CellSample, QuadData};
use crate::error::{Error, Result};
use crate::seeding::child_rng;

/// Right-continuous empirical CDF with left-inverse quantiles.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(sample: &CellSample) -> Self {
        Self::from_values(sample.outcomes())
    }

    /// Panics on empty input; `CellSample` guarantees non-emptiness.
    pub fn from_values(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "empirical CDF of an empty sample");
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self { sorted }
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted_ascending(&self) -> &[f64] {
        &self.sorted
    }

    /// Number of outcomes `<= y`.
    pub fn count_le(&self, y: f64) -> usize {
        self.sorted.partition_point(|&v| v <= y)
    }

    pub fn eval(&self, y: f64) -> f64 {
        self.count_le(y) as f64 / self.len() as f64
    }

    /// The `j`-th smallest outcome, 1-based.
    pub fn order_stat(&self, j: usize) -> f64 {
        self.sorted[j - 1]
    }

    /// `inf{y : F(y) >= q}`, the `ceil(q n)`-th smallest outcome.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::InvalidLevel(q));
        }
        let n = self.len();
        let r = q * n as f64;
        // q is only known to an ulp; a product that lands within rounding of
        // an integer is that integer.
        let nearest = r.round();
        let rank = if (r - nearest).abs() <= 4.0 * f64::EPSILON * r {
            nearest
        } else {
            r.ceil()
        };
        Ok(self.order_stat((rank as usize).clamp(1, n)))
    }

    /// Left-inverse at the exact rational level `num / den`, i.e. the
    /// `ceil(num * n / den)`-th smallest outcome.
    pub fn quantile_at_fraction(&self, num: usize, den: usize) -> f64 {
        debug_assert!(num >= 1 && num <= den);
        let rank = (num * self.len()).div_ceil(den);
        self.order_stat(rank.clamp(1, self.len()))
    }
}

pub fn ecdf_eval(cdf: &EmpiricalCdf, y: f64) -> f64 {
    cdf.eval(y)
}

pub fn ecdf_quantile(cdf: &EmpiricalCdf, q: f64) -> Result<f64> {
    cdf.quantile(q)
}

/// Intermediate values of one evaluation of the empirical composition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CicComposition {
    pub q: f64,
    /// `F10^-1(q)`.
    pub y_star: f64,
    /// `F00(y_star)`, after the zero clamp.
    pub q_prime: f64,
    /// `F00(y_star)` was zero and was replaced by `1 / n01`.
    pub q_prime_clamped: bool,
    /// `F11^-1(q)`.
    pub treated: f64,
    /// `F01^-1(q_prime)`.
    pub counterfactual: f64,
}

impl CicComposition {
    pub fn tau(&self) -> f64 {
        self.treated - self.counterfactual
    }
}

struct Cdfs([EmpiricalCdf; 4]);

impl Cdfs {
    fn new(data: &QuadData) -> Self {
        Cdfs(Cell::ALL.map(|c| EmpiricalCdf::new(data.cell(c))))
    }

    fn get(&self, cell: Cell) -> &EmpiricalCdf {
        &self.0[cell.index()]
    }

    fn compose(&self, q: f64) -> Result<CicComposition> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidLevel(q));
        }
        let y_star = self.get(Cell::C10).quantile(q)?;
        let f00 = self.get(Cell::C00);
        let f01 = self.get(Cell::C01);
        let below = f00.count_le(y_star);
        let (q_prime, counterfactual, clamped) = if below == 0 {
            (1.0 / f01.len() as f64, f01.order_stat(1), true)
        } else {
            let q_prime = below as f64 / f00.len() as f64;
            (q_prime, f01.quantile_at_fraction(below, f00.len()), false)
        };
        Ok(CicComposition {
            q,
            y_star,
            q_prime,
            q_prime_clamped: clamped,
            treated: self.get(Cell::C11).quantile(q)?,
            counterfactual,
        })
    }
}

/// The full empirical composition at level `q`.
pub fn cic_composition(data: &QuadData, q: f64) -> Result<CicComposition> {
    Cdfs::new(data).compose(q)
}

/// `F11^-1(q) - F01^-1(F00(F10^-1(q)))` on empirical CDFs.
pub fn cic_point_estimate(data: &QuadData, q: f64) -> Result<f64> {
    Ok(cic_composition(data, q)?.tau())
}

/// Epanechnikov kernel density estimate at `y`.
pub fn epanechnikov_density(sample: &[f64], y: f64, bandwidth: f64) -> Result<f64> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if sample.is_empty() {
        return Err(Error::EmptyCell);
    }
    let sum: f64 = sample
        .iter()
        .map(|&yi| {
            let u = (y - yi) / bandwidth;
            if u.abs() <= 1.0 {
                0.75 * (1.0 - u * u)
            } else {
                0.0
            }
        })
        .sum();
    Ok(sum / (sample.len() as f64 * bandwidth))
}

/// Silverman's rule `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`.
///
/// Falls back to whichever spread measure is positive when the other is zero.
pub fn silverman_bandwidth(sample: &[f64]) -> Result<f64> {
    let n = sample.len();
    if n < 2 {
        return Err(Error::DegenerateBandwidth);
    }
    let mean = sample.iter().sum::<f64>() / n as f64;
    let var = sample.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let cdf = EmpiricalCdf::from_values(sample);
    let iqr = cdf.quantile(0.75)? - cdf.quantile(0.25)?;
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr / 1.34),
        (true, false) => sd,
        (false, true) => iqr / 1.34,
        (false, false) => return Err(Error::DegenerateBandwidth),
    };
    Ok(0.9 * spread * (n as f64).powf(-0.2))
}

const MIN_DENSITY: f64 = 1e-12;
const MIN_CELL_FOR_SE: usize = 30;

/// Delta-method standard error of [`cic_point_estimate`] with Epanechnikov
/// densities and Silverman bandwidths, treating the four cells as independent.
pub fn cic_analytic_se(data: &QuadData, q: f64) -> Result<f64> {
    let cdfs = Cdfs::new(data);
    let comp = cdfs.compose(q)?;
    for cell in Cell::ALL {
        if data.cell(cell).len() < MIN_CELL_FOR_SE {
            return Err(Error::InvalidArgument(format!(
                "analytic CIC standard error needs at least {MIN_CELL_FOR_SE} outcomes per cell"
            ))
            .in_cell(cell));
        }
    }
    let density = |cell: Cell, y: f64| -> Result<f64> {
        let values = data.cell(cell).outcomes();
        let h = silverman_bandwidth(values).map_err(|e| e.in_cell(cell))?;
        let f = epanechnikov_density(values, y, h)?;
        if f < MIN_DENSITY {
            return Err(Error::VanishingDensity.in_cell(cell));
        }
        Ok(f)
    };
    let f11 = density(Cell::C11, comp.treated)?;
    let f01 = density(Cell::C01, comp.counterfactual)?;
    let f00 = density(Cell::C00, comp.y_star)?;
    let f10 = density(Cell::C10, comp.y_star)?;

    let [n00, n01, n10, n11] = data.sizes().map(|n| n as f64);
    let qp = comp.q_prime;
    let var = q * (1.0 - q) / (n11 * f11 * f11)
        + qp * (1.0 - qp) / (n01 * f01 * f01)
        + qp * (1.0 - qp) / (n00 * f01 * f01)
        + (f00 / f01).powi(2) * q * (1.0 - q) / (n10 * f10 * f10);
    if !var.is_finite() {
        return Err(Error::NonFiniteResult("classic CIC variance"));
    }
    Ok(var.sqrt())
}

fn resample(sample: &CellSample, rng: &mut impl Rng) -> Vec<f64> {
    let values = sample.outcomes();
    (0..values.len())
        .map(|_| values[rng.random_range(0..values.len())])
        .collect()
}

fn resample_quad(data: &QuadData, rng: &mut impl Rng) -> Result<QuadData> {
    data.try_map_cells(|s| CellSample::new(s.cell(), resample(s, rng)))
}

pub const MIN_BOOTSTRAP_REPS: usize = 100;

/// Bootstrap standard deviation of [`cic_point_estimate`], resampling each
/// cell independently. Replicate `r` draws from stream `r` of `seed`.
pub fn cic_bootstrap_se(data: &QuadData, q: f64, reps: usize, seed: u64) -> Result<f64> {
    Ok(cic_bootstrap_se_grid(data, &[q], reps, seed)?[0])
}

/// [`cic_bootstrap_se`] at several levels, sharing the resamples. Entry `i`
/// equals `cic_bootstrap_se(data, qs[i], reps, seed)`.
pub fn cic_bootstrap_se_grid(data: &QuadData, qs: &[f64], reps: usize, seed: u64) -> Result<Vec<f64>> {
    if reps < MIN_BOOTSTRAP_REPS {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least {MIN_BOOTSTRAP_REPS} replicates, got {reps}"
        )));
    }
    if let Some(&q) = qs.iter().find(|&&q| !(q > 0.0 && q < 1.0)) {
        return Err(Error::InvalidLevel(q));
    }
    let draws = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = child_rng(seed, r as u64);
            let cdfs = Cdfs::new(&resample_quad(data, &mut rng)?);
            qs.iter().map(|&q| Ok(cdfs.compose(q)?.tau())).collect()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok((0..qs.len())
        .map(|i| sample_sd(&draws.iter().map(|d| d[i]).collect::<Vec<_>>()))
        .collect())
}

pub(crate) fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeMethodTag {
    AnalyticKernel,
    Bootstrap,
}

/// Standard-error recipe for the classic estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum SeMethod {
    #[default]
    AnalyticKernel,
    Bootstrap { reps: usize, seed: u64 },
}

impl SeMethod {
    pub fn tag(&self) -> SeMethodTag {
        match self {
            SeMethod::AnalyticKernel => SeMethodTag::AnalyticKernel,
            SeMethod::Bootstrap { .. } => SeMethodTag::Bootstrap,
        }
    }
}

/// Classic CIC point estimate with a normal 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassicEstimate {
    pub q: f64,
    pub tau_hat: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub se_method: SeMethodTag,
    pub composition: CicComposition,
}

pub fn cic_estimate(data: &QuadData, q: f64, se_method: SeMethod) -> Result<ClassicEstimate> {
    let composition = cic_composition(data, q)?;
    let se = match se_method {
        SeMethod::AnalyticKernel => cic_analytic_se(data, q)?,
        SeMethod::Bootstrap { reps, seed } => cic_bootstrap_se(data, q, reps, seed)?,
    };
    let tau_hat = composition.tau();
    Ok(ClassicEstimate {
        q,
        tau_hat,
        se,
        ci_low: tau_hat - crate::Z_95 * se,
        ci_high: tau_hat + crate::Z_95 * se,
        se_method: se_method.tag(),
        composition,
    })
}
