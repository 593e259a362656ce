//! Extreme changes-in-changes: power-law tail extrapolation in each cell,
//! composed through the changes-in-changes identification map.
//!
//! For a right-tail level `q`, the treated quantile is extrapolated from the
//! Hill fit of cell 11 and the counterfactual quantile
//! `F01^-1(F00(F10^-1(q)))` is obtained in closed form from the Hill fits of
//! the three untreated cells. The interval uses the asymptotic normal law of
//! the estimator, scaled by `log(d11) / sqrt(k11)` where
//! `d11 = k11 / (n11 (1 - q))` is floored at `d_floor`.
//!
//! Lower tails go through a strictly decreasing [`TailTransform`]; the
//! standard error is carried back with a term-wise delta method. That mapping
//! is an extension: the asymptotic theory only covers the right tail.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cic::{cic_estimate, ClassicEstimate, SeMethod, SeMethodTag};
use crate::data::{Cell, QuadData};
use crate::error::{Error, Result};
use crate::tail::{
    apply_transform, extreme_quantile, hill_estimate, invert_transform, jitter_ties,
    sort_descending, KRule, TailFit, TailTransform,
};
use crate::Z_95;

pub const DEFAULT_D_FLOOR: f64 = 10.0;
pub const DEFAULT_EXTREME_LOW: f64 = 0.05;
pub const DEFAULT_EXTREME_HIGH: f64 = 0.95;

const FLOOR_SLACK: f64 = 8.0 * f64::EPSILON;

/// Plausible range for the treated/counterfactual quantile ratio; outside it a
/// warning is attached to the estimate.
const VARSIGMA_WARN_RANGE: (f64, f64) = (0.1, 10.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ecic,
    Cic,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ecic => "ecic",
            Method::Cic => "cic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tail {
    Right,
    Left,
}

/// Tail fits of all four cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EcicFit {
    fits: [TailFit; 4],
    k_fallback: [bool; 4],
}

impl EcicFit {
    pub fn new(fit_00: TailFit, fit_01: TailFit, fit_10: TailFit, fit_11: TailFit) -> Self {
        Self {
            fits: [fit_00, fit_01, fit_10, fit_11],
            k_fallback: [false; 4],
        }
    }

    pub fn fit(&self, cell: Cell) -> &TailFit {
        &self.fits[cell.index()]
    }

    /// Whether the threshold count of `cell` came from the fallback rule.
    pub fn k_fallback(&self, cell: Cell) -> bool {
        self.k_fallback[cell.index()]
    }

    /// `k11 / k_cell`.
    pub fn lambda(&self, cell: Cell) -> f64 {
        self.fit(Cell::C11).k as f64 / self.fit(cell).k as f64
    }

    /// `n11 / n_cell`.
    pub fn eta(&self, cell: Cell) -> f64 {
        self.fit(Cell::C11).n as f64 / self.fit(cell).n as f64
    }

    /// `k_cell / (n_cell (1 - q))`.
    pub fn depth(&self, cell: Cell, q: f64) -> f64 {
        self.fit(cell).depth(q)
    }

    /// Weight of the counterfactual term in the variance bracket:
    /// `(lambda_10 / eta_10)^2 * (lambda_00 + lambda_10 + lambda_01) * a00^2 / (a10^2 a01^2)`.
    fn counterfactual_weight(&self) -> f64 {
        let a00 = self.fit(Cell::C00).alpha_hat;
        let a01 = self.fit(Cell::C01).alpha_hat;
        let a10 = self.fit(Cell::C10).alpha_hat;
        let ratio = self.lambda(Cell::C10) / self.eta(Cell::C10);
        let lambda_sum = self.lambda(Cell::C00) + self.lambda(Cell::C10) + self.lambda(Cell::C01);
        ratio * ratio * lambda_sum * (a00 * a00) / (a10 * a10 * a01 * a01)
    }
}

fn check_level(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidLevel(q))
    }
}

/// Closed form of `F01^-1(F00(F10^-1(q)))` under the three tail fits:
///
/// `Y01 * (Y10/Y00)^(a00/a01) * (k01 n00 / (n01 k00))^(1/a01) * (k10/n10)^e * (1-q)^(-e)`
/// with `e = a00 / (a10 a01)` and `Ygt` the tail thresholds, evaluated in logs.
pub fn counterfactual_tail_quantile(
    fit_00: &TailFit,
    fit_01: &TailFit,
    fit_10: &TailFit,
    q: f64,
) -> Result<f64> {
    check_level(q)?;
    let (a00, a01, a10) = (fit_00.alpha_hat, fit_01.alpha_hat, fit_10.alpha_hat);
    // Grouped so that identical fits reproduce `extreme_quantile` bit for bit.
    let exponent = (a00 * (fit_10.threshold / fit_00.threshold).ln()
        + (fit_01.tail_fraction() / fit_00.tail_fraction()).ln()
        + (a00 / a10) * fit_10.depth(q).ln())
        / a01;
    let a = fit_01.threshold * exponent.exp();
    if !a.is_finite() {
        return Err(Error::NonFiniteResult("counterfactual tail quantile"));
    }
    Ok(a)
}

/// `F11^-1(q) - F01^-1(F00(F10^-1(q)))`, both from the tail fits.
pub fn ecic_point_estimate(efit: &EcicFit, q: f64) -> Result<f64> {
    let treated = extreme_quantile(efit.fit(Cell::C11), q)?;
    let cf = counterfactual_tail_quantile(
        efit.fit(Cell::C00),
        efit.fit(Cell::C01),
        efit.fit(Cell::C10),
        q,
    )?;
    Ok(treated - cf)
}

/// Plug-in asymptotic variance of the normalised estimator,
/// `1/a11^2 + (1/varsigma)^2 (lambda_10/eta_10)^2 (lambda_00 + lambda_10 + lambda_01) a00^2 / (a10^2 a01^2)`.
pub fn omega_variance(efit: &EcicFit, varsigma_hat: f64) -> Result<f64> {
    if !(varsigma_hat > 0.0) || !varsigma_hat.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "varsigma must be positive and finite, got {varsigma_hat}"
        )));
    }
    let a11 = efit.fit(Cell::C11).alpha_hat;
    let omega = 1.0 / (a11 * a11) + efit.counterfactual_weight() / (varsigma_hat * varsigma_hat);
    if !omega.is_finite() {
        return Err(Error::NonFiniteResult("omega"));
    }
    Ok(omega)
}

/// A quantile treatment effect estimate with its 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectEstimate {
    pub q: f64,
    pub tau_hat: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub method: Method,
    /// `None` for the classic estimator, which is not a tail method.
    pub tail: Option<Tail>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transform: Option<TailTransform>,
    pub diagnostics: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl EffectEstimate {
    fn with_interval(q: f64, tau_hat: f64, se: f64, method: Method, tail: Option<Tail>) -> Self {
        Self {
            q,
            tau_hat,
            se,
            ci_low: tau_hat - Z_95 * se,
            ci_high: tau_hat + Z_95 * se,
            method,
            tail,
            transform: None,
            diagnostics: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }

    pub fn diagnostic(&self, key: &str) -> Option<f64> {
        self.diagnostics.get(key).copied()
    }

    pub fn floor_applied(&self) -> bool {
        self.diagnostic("floor_applied") == Some(1.0)
    }
}

impl From<ClassicEstimate> for EffectEstimate {
    fn from(c: ClassicEstimate) -> Self {
        let mut est = EffectEstimate::with_interval(c.q, c.tau_hat, c.se, Method::Cic, None);
        let d = &mut est.diagnostics;
        d.insert("y_star".into(), c.composition.y_star);
        d.insert("q_prime".into(), c.composition.q_prime);
        d.insert("q_prime_clamped".into(), flag(c.composition.q_prime_clamped));
        d.insert("treated_quantile".into(), c.composition.treated);
        d.insert("counterfactual_quantile".into(), c.composition.counterfactual);
        d.insert("se_bootstrap".into(), flag(c.se_method == SeMethodTag::Bootstrap));
        if c.composition.q_prime_clamped {
            est.warnings
                .push("F00(F10^-1(q)) was zero and was clamped to 1/n01".to_string());
        }
        est
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Builds the estimate at right-tail level `p` on the (possibly transformed)
/// scale of `efit`. With a decreasing `transform`, quantiles are mapped back
/// and the bracket terms rescaled by the slope of the inverse.
fn tail_estimate(
    efit: &EcicFit,
    q: f64,
    p: f64,
    d_floor: f64,
    transform: Option<TailTransform>,
) -> Result<EffectEstimate> {
    check_level(p)?;
    if !(d_floor > 1.0) || !d_floor.is_finite() {
        return Err(Error::InvalidArgument(format!("d_floor must exceed 1, got {d_floor}")));
    }
    let fit_11 = efit.fit(Cell::C11);
    let treated = extreme_quantile(fit_11, p)?;
    let counterfactual = counterfactual_tail_quantile(
        efit.fit(Cell::C00),
        efit.fit(Cell::C01),
        efit.fit(Cell::C10),
        p,
    )?;
    if !(counterfactual > 0.0) {
        return Err(Error::NonPositiveCounterfactual);
    }
    let varsigma = treated / counterfactual;

    let d11 = efit.depth(Cell::C11, p);
    // A few ulps of slack so that levels like 0.99 do not trip the floor
    // through the rounding of 1 - q alone.
    let floor_applied = d11 < d_floor * (1.0 - FLOOR_SLACK);
    let d_eff = if floor_applied { d_floor } else { d11 };

    let (tau_hat, treated_scale, cf_scale, tail) = match transform {
        None => (treated - counterfactual, treated, counterfactual, Tail::Right),
        Some(t) => {
            let y_treated = invert_transform(treated, t)?;
            let y_cf = invert_transform(counterfactual, t)?;
            (
                y_treated - y_cf,
                t.inverse_slope(treated) * treated.abs(),
                t.inverse_slope(counterfactual) * counterfactual.abs(),
                Tail::Left,
            )
        }
    };

    let a11 = fit_11.alpha_hat;
    let bracket = treated_scale * treated_scale / (a11 * a11)
        + cf_scale * cf_scale * efit.counterfactual_weight();
    let se = d_eff.ln() * bracket.sqrt() / (fit_11.k as f64).sqrt();
    if !se.is_finite() || !tau_hat.is_finite() {
        return Err(Error::NonFiniteResult("eCIC estimate"));
    }

    let mut est = EffectEstimate::with_interval(q, tau_hat, se, Method::Ecic, Some(tail));
    est.transform = transform;
    let d = &mut est.diagnostics;
    d.insert("d_11".into(), d11);
    d.insert("d_eff".into(), d_eff);
    d.insert("floor_applied".into(), flag(floor_applied));
    d.insert("varsigma_hat".into(), varsigma);
    d.insert("omega_hat".into(), omega_variance(efit, varsigma)?);
    d.insert("treated_quantile".into(), treated);
    d.insert("counterfactual_quantile".into(), counterfactual);
    for cell in Cell::ALL {
        let fit = efit.fit(cell);
        d.insert(format!("k_{cell}"), fit.k as f64);
        d.insert(format!("n_{cell}"), fit.n as f64);
        d.insert(format!("alpha_hat_{cell}"), fit.alpha_hat);
        d.insert(format!("threshold_{cell}"), fit.threshold);
        d.insert(format!("k_fallback_{cell}"), flag(efit.k_fallback(cell)));
        if cell != Cell::C11 {
            d.insert(format!("d_{cell}"), efit.depth(cell, p));
        }
    }
    if !(VARSIGMA_WARN_RANGE.0..=VARSIGMA_WARN_RANGE.1).contains(&varsigma) {
        est.warnings.push(format!(
            "treated/counterfactual quantile ratio {varsigma:.4} is far from 1; the variance approximation may be poor"
        ));
    }
    if efit.k_fallback.iter().any(|&b| b) {
        est.warnings
            .push("threshold selection fell back to the fixed rule in at least one cell".to_string());
    }
    Ok(est)
}

/// Point estimate, standard error and 95% interval at right-tail level `q`.
pub fn ecic_confidence_interval(efit: &EcicFit, q: f64, d_floor: f64) -> Result<EffectEstimate> {
    tail_estimate(efit, q, q, d_floor, None)
}

/// Threshold selection and tie handling for the tail fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct TailConfig {
    pub k_rule: KRule,
    /// When set, tied outcomes are broken with seeded jitter before fitting.
    pub jitter_seed: Option<u64>,
}

/// Sorts each cell, chooses `k` and fits the Hill estimator.
pub fn fit_ecic(data: &QuadData, config: &TailConfig) -> Result<EcicFit> {
    let mut fits = Vec::with_capacity(4);
    let mut k_fallback = [false; 4];
    for cell in Cell::ALL {
        let fit_cell = || -> Result<(TailFit, bool)> {
            let sample = data.cell(cell);
            let sorted = match config.jitter_seed {
                Some(seed) => sort_descending(&jitter_ties(sample, seed)?),
                None => sort_descending(sample),
            };
            let choice = config.k_rule.select(&sorted)?;
            Ok((hill_estimate(&sorted, choice.k)?, choice.fallback))
        };
        let (fit, fallback) = fit_cell().map_err(|e| e.in_cell(cell))?;
        fits.push(fit);
        k_fallback[cell.index()] = fallback;
    }
    Ok(EcicFit {
        fits: [fits[0], fits[1], fits[2], fits[3]],
        k_fallback,
    })
}

/// Right-tail eCIC estimate straight from data.
pub fn estimate_right_tail(
    data: &QuadData,
    q: f64,
    config: &TailConfig,
    d_floor: f64,
) -> Result<EffectEstimate> {
    check_level(q)?;
    let efit = fit_ecic(data, config)?;
    ecic_confidence_interval(&efit, q, d_floor)
}

/// Left-tail eCIC estimate at level `q` (small `q`): the cells are mapped
/// through a decreasing `transform`, the right-tail machinery runs at
/// `1 - q`, and both quantiles are mapped back before differencing.
pub fn estimate_left_tail(
    data: &QuadData,
    q: f64,
    transform: TailTransform,
    config: &TailConfig,
    d_floor: f64,
) -> Result<EffectEstimate> {
    check_level(q)?;
    if !transform.is_decreasing() {
        return Err(Error::InadmissibleTransform {
            transform: transform.name(),
            reason: "left-tail estimation needs a decreasing transform",
        });
    }
    let mapped = data.try_map_cells(|s| apply_transform(s, transform).map_err(|e| e.in_cell(s.cell())))?;
    let efit = fit_ecic(&mapped, config)?;
    tail_estimate(&efit, q, 1.0 - q, d_floor, Some(transform))
}

/// Dispatch rule: eCIC at the extremes, classic CIC in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutoConfig {
    pub extreme_low: f64,
    pub extreme_high: f64,
    pub d_floor: f64,
    pub tail: TailConfig,
    pub left_transform: TailTransform,
    pub se_method: SeMethod,
}

impl Default for AutoConfig {
    fn default() -> Self {
        Self {
            extreme_low: DEFAULT_EXTREME_LOW,
            extreme_high: DEFAULT_EXTREME_HIGH,
            d_floor: DEFAULT_D_FLOOR,
            tail: TailConfig::default(),
            left_transform: TailTransform::Negate,
            se_method: SeMethod::AnalyticKernel,
        }
    }
}

impl AutoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.extreme_low && self.extreme_low < self.extreme_high && self.extreme_high < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "dispatch bounds must satisfy 0 < low < high < 1, got {} and {}",
                self.extreme_low, self.extreme_high
            )));
        }
        if !(self.d_floor > 1.0) {
            return Err(Error::InvalidArgument(format!("d_floor must exceed 1, got {}", self.d_floor)));
        }
        Ok(())
    }

    /// Which estimator `q` is routed to.
    pub fn route(&self, q: f64) -> (Method, Option<Tail>) {
        if q >= self.extreme_high {
            (Method::Ecic, Some(Tail::Right))
        } else if q <= self.extreme_low {
            (Method::Ecic, Some(Tail::Left))
        } else {
            (Method::Cic, None)
        }
    }
}

/// eCIC for `q <= extreme_low` (left tail) or `q >= extreme_high` (right
/// tail), classic CIC otherwise.
pub fn estimate_auto(data: &QuadData, q: f64, config: &AutoConfig) -> Result<EffectEstimate> {
    check_level(q)?;
    config.validate()?;
    match config.route(q) {
        (Method::Ecic, Some(Tail::Right)) => estimate_right_tail(data, q, &config.tail, config.d_floor),
        (Method::Ecic, _) => {
            estimate_left_tail(data, q, config.left_transform, &config.tail, config.d_floor)
        }
        (Method::Cic, _) => Ok(cic_estimate(data, q, config.se_method)?.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cic::cic_point_estimate;
    use crate::tail::tail_probability;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fit(k: usize, threshold: f64, alpha: f64, n: usize) -> TailFit {
        TailFit::new(k, threshold, alpha, n).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    fn worked_fit() -> EcicFit {
        EcicFit::new(
            fit(100, 4.0, 2.0, 1000),
            fit(100, 5.0, 2.0, 1000),
            fit(100, 8.0, 2.0, 1000),
            fit(100, 12.0, 2.0, 1000),
        )
    }

    /// Unsimplified route: quantile of 10, tail probability in 00, quantile of 01.
    fn composed(f00: &TailFit, f01: &TailFit, f10: &TailFit, q: f64) -> f64 {
        let y10 = extreme_quantile(f10, q).unwrap();
        let p00 = tail_probability(f00, y10).unwrap();
        f01.threshold * (f01.tail_fraction() / p00).powf(1.0 / f01.alpha_hat)
    }

    #[test]
    fn counterfactual_examples() {
        let f = fit(100, 3.0, 2.0, 1000);
        let a = counterfactual_tail_quantile(&f, &f, &f, 0.99).unwrap();
        assert!(rel(a, 3.0 * 10f64.sqrt()) < 1e-12);
        assert!(rel(a, extreme_quantile(&f, 0.99).unwrap()) < 1e-12);

        let e = worked_fit();
        let a = counterfactual_tail_quantile(e.fit(Cell::C00), e.fit(Cell::C01), e.fit(Cell::C10), 0.99)
            .unwrap();
        assert!(rel(a, 10.0 * 10f64.sqrt()) < 1e-12, "{a}");
        assert!((a - 31.6228).abs() < 1e-4);
    }

    #[test]
    fn point_estimate_examples() {
        let e = worked_fit();
        let tau = ecic_point_estimate(&e, 0.99).unwrap();
        assert!(rel(tau, 2.0 * 10f64.sqrt()) < 1e-12, "{tau}");
        assert!((tau - 6.3246).abs() < 1e-4);

        let f = fit(57, 1.7, 3.3, 800);
        let same = EcicFit::new(f, f, f, f);
        for i in 1..50 {
            assert_eq!(ecic_point_estimate(&same, i as f64 / 50.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn omega_examples() {
        let e = worked_fit();
        assert!(rel(omega_variance(&e, 1.0).unwrap(), 1.0) < 1e-12);
        let alpha = 3.0;
        let f = fit(100, 2.0, alpha, 1000);
        let eq = EcicFit::new(f, f, f, f);
        assert!(rel(omega_variance(&eq, 1.0).unwrap(), 4.0 / (alpha * alpha)) < 1e-12);

        let mixed = EcicFit::new(
            fit(100, 1.0, 2.0, 1000),
            fit(100, 1.0, 4.0, 1000),
            fit(100, 1.0, 1.0, 1000),
            fit(100, 1.0, 3.0, 1000),
        );
        let expect = 1.0 / 9.0 + 3.0 / 16.0;
        assert!(rel(omega_variance(&mixed, 2.0).unwrap(), expect) < 1e-12);
        assert!(omega_variance(&mixed, 3.0).unwrap() < omega_variance(&mixed, 2.0).unwrap());
        assert!(omega_variance(&mixed, 0.0).is_err());
    }

    #[test]
    fn interval_worked_example() {
        let est = ecic_confidence_interval(&worked_fit(), 0.99, DEFAULT_D_FLOOR).unwrap();
        let bracket = (12.0f64 * 10f64.sqrt()).powi(2) * 0.25 + (10.0 * 10f64.sqrt()).powi(2) * 3.0 * 0.25;
        let expect = 10f64.ln() * bracket.sqrt() / 10.0;
        assert!(rel(est.se, expect) < 1e-12);
        assert!((est.se - 7.671445).abs() < 1e-6, "{}", est.se);
        assert!(!est.floor_applied());
        assert!(rel(est.diagnostic("d_11").unwrap(), 10.0) < 1e-12);
        assert!(rel(est.ci_high - est.tau_hat, 1.96 * est.se) < 1e-12);
        assert_eq!(est.tail, Some(Tail::Right));

        let mid = ecic_confidence_interval(&worked_fit(), 0.5, DEFAULT_D_FLOOR).unwrap();
        assert!(mid.floor_applied());
        assert!(rel(mid.diagnostic("d_11").unwrap(), 0.2) < 1e-12);
        assert_eq!(mid.diagnostic("d_eff"), Some(10.0));
    }

    #[test]
    fn se_matches_omega_route() {
        let e = EcicFit::new(
            fit(80, 1.5, 2.5, 2000),
            fit(120, 2.5, 4.0, 2500),
            fit(40, 2.0, 1.5, 400),
            fit(30, 3.0, 3.0, 300),
        );
        for &q in &[0.9, 0.97, 0.995] {
            let est = ecic_confidence_interval(&e, q, DEFAULT_D_FLOOR).unwrap();
            let treated = extreme_quantile(e.fit(Cell::C11), q).unwrap();
            let omega = omega_variance(&e, est.diagnostic("varsigma_hat").unwrap()).unwrap();
            let d = est.diagnostic("d_eff").unwrap();
            let via_omega = d.ln() * treated * omega.sqrt() / 30f64.sqrt();
            assert!(rel(est.se, via_omega) < 1e-12);
        }
    }

    #[test]
    fn symmetric_fits_interval_straddles_zero() {
        let f = fit(50, 2.0, 3.0, 500);
        let est = ecic_confidence_interval(&EcicFit::new(f, f, f, f), 0.99, 10.0).unwrap();
        assert_eq!(est.tau_hat, 0.0);
        assert_eq!(est.ci_low, -est.ci_high);
        assert!(est.se > 0.0);
    }

    fn pareto_cell(n: usize, alpha: f64, scale: f64, rng: &mut impl Rng) -> Vec<f64> {
        (0..n)
            .map(|_| scale * (1.0 - rng.random::<f64>()).powf(-1.0 / alpha))
            .collect()
    }

    #[test]
    fn fit_errors_name_the_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pos = pareto_cell(500, 3.0, 1.0, &mut rng);
        let neg: Vec<f64> = pos.iter().map(|v| -v).collect();
        let data = QuadData::from_vecs(pos.clone(), pos.clone(), neg, pos).unwrap();
        let err = fit_ecic(&data, &TailConfig::default()).unwrap_err();
        assert!(matches!(err, Error::InCell { cell: Cell::C10, .. }), "{err}");
        assert_eq!(err.root(), &Error::NonPositiveThreshold);
        assert!(err.to_string().contains("cell 10"));
    }

    #[test]
    fn fit_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut cell = || pareto_cell(700, 4.0, 1.0, &mut rng);
        let data = QuadData::from_vecs(cell(), cell(), cell(), cell()).unwrap();
        for cfg in [TailConfig::default(), TailConfig { k_rule: KRule::fixed_default(), jitter_seed: None }] {
            assert_eq!(fit_ecic(&data, &cfg).unwrap(), fit_ecic(&data, &cfg).unwrap());
        }
    }

    #[test]
    fn jitter_rescues_tied_cells() {
        let tied: Vec<f64> = (0..400).map(|i| f64::from(1 + i / 40)).collect();
        let data = QuadData::from_vecs(tied.clone(), tied.clone(), tied.clone(), tied).unwrap();
        let strict = TailConfig { k_rule: KRule::Fixed { power: 0.5, scale: 1.0 }, jitter_seed: None };
        assert_eq!(fit_ecic(&data, &strict).unwrap_err().root(), &Error::DegenerateTies);
        let jittered = TailConfig { jitter_seed: Some(3), ..strict };
        assert!(fit_ecic(&data, &jittered).is_ok());
    }

    #[test]
    fn left_tail_identical_cells_and_negate_mirror() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y: Vec<f64> = pareto_cell(600, 3.0, 1.0, &mut rng).iter().map(|v| -v).collect();
        let same = QuadData::from_vecs(y.clone(), y.clone(), y.clone(), y).unwrap();
        let cfg = TailConfig::default();
        let est = estimate_left_tail(&same, 0.02, TailTransform::Negate, &cfg, 10.0).unwrap();
        assert_eq!(est.tau_hat, 0.0);
        assert_eq!(est.tail, Some(Tail::Left));
        assert_eq!(est.transform, Some(TailTransform::Negate));

        let mut cell = |s: f64| pareto_cell(900, 3.0, s, &mut rng);
        let data = QuadData::from_vecs(cell(1.0), cell(1.2), cell(1.5), cell(2.0)).unwrap();
        let mirrored = data.try_map_cells(|s| s.try_map(|v| -v)).unwrap();
        let right = estimate_right_tail(&data, 0.99, &cfg, 10.0).unwrap();
        let left = estimate_left_tail(&mirrored, 0.01, TailTransform::Negate, &cfg, 10.0).unwrap();
        assert_eq!(left.tau_hat, -right.tau_hat);
        assert_eq!(left.se, right.se);

        assert!(estimate_left_tail(&data, 0.01, TailTransform::Identity, &cfg, 10.0).is_err());
    }

    #[test]
    fn reciprocal_left_tail_delta_method() {
        // Small positive outcomes: the reciprocal puts their lower tail on top.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut cell = |s: f64| -> Vec<f64> {
            pareto_cell(1500, 4.0, 1.0, &mut rng).iter().map(|v| s / v).collect()
        };
        let data = QuadData::from_vecs(cell(1.0), cell(1.1), cell(0.9), cell(1.3)).unwrap();
        let cfg = TailConfig::default();
        let est = estimate_left_tail(&data, 0.02, TailTransform::Reciprocal, &cfg, 10.0).unwrap();
        let z11 = est.diagnostic("treated_quantile").unwrap();
        let za = est.diagnostic("counterfactual_quantile").unwrap();
        assert!(rel(est.tau_hat, 1.0 / z11 - 1.0 / za) < 1e-12);

        // Rebuild the bracket on the original scale by hand.
        let recip = data.try_map_cells(|s| apply_transform(s, TailTransform::Reciprocal)).unwrap();
        let efit = fit_ecic(&recip, &cfg).unwrap();
        let a11 = efit.fit(Cell::C11).alpha_hat;
        let w = efit.counterfactual_weight();
        let bracket = (1.0 / z11).powi(2) / (a11 * a11) + (1.0 / za).powi(2) * w;
        let expect = est.diagnostic("d_eff").unwrap().ln() * bracket.sqrt()
            / (efit.fit(Cell::C11).k as f64).sqrt();
        assert!(rel(est.se, expect) < 1e-12);

        let with_zero = QuadData::from_vecs(vec![0.0, 1.0], vec![1.0], vec![1.0], vec![1.0]).unwrap();
        assert!(estimate_left_tail(&with_zero, 0.02, TailTransform::Reciprocal, &cfg, 10.0).is_err());
    }

    #[test]
    fn auto_dispatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut cell = |s: f64| -> Vec<f64> {
            pareto_cell(800, 5.0, s, &mut rng).iter().map(|v| v - 1.2 * s).collect()
        };
        let data = QuadData::from_vecs(cell(1.0), cell(1.1), cell(1.2), cell(1.3)).unwrap();
        let cfg = AutoConfig::default();

        let mid = estimate_auto(&data, 0.5, &cfg).unwrap();
        assert_eq!(mid.method, Method::Cic);
        assert_eq!(mid.tail, None);
        assert_eq!(mid.tau_hat, cic_point_estimate(&data, 0.5).unwrap());

        let hi = estimate_auto(&data, 0.99, &cfg).unwrap();
        assert_eq!((hi.method, hi.tail), (Method::Ecic, Some(Tail::Right)));

        let bad = AutoConfig { extreme_low: 0.96, ..cfg };
        assert!(estimate_auto(&data, 0.5, &bad).is_err());
        assert_eq!(cfg.route(0.03), (Method::Ecic, Some(Tail::Left)));
        assert_eq!(cfg.route(0.05), (Method::Ecic, Some(Tail::Left)));
        assert_eq!(cfg.route(0.95), (Method::Ecic, Some(Tail::Right)));
        assert_eq!(cfg.route(0.0501), (Method::Cic, None));
    }

    #[test]
    fn auto_dispatch_left() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut cell = |s: f64| -> Vec<f64> {
            pareto_cell(800, 5.0, s, &mut rng).iter().map(|v| 1.2 * s - v).collect()
        };
        let data = QuadData::from_vecs(cell(1.0), cell(1.1), cell(1.2), cell(1.3)).unwrap();
        let lo = estimate_auto(&data, 0.03, &AutoConfig::default()).unwrap();
        assert_eq!((lo.method, lo.tail), (Method::Ecic, Some(Tail::Left)));
    }

    #[test]
    fn pareto_cells_recover_alpha() {
        let mut mean = [0.0; 4];
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let mut cell = || pareto_cell(5000, 10.0, 1.0, &mut rng);
            let data = QuadData::from_vecs(cell(), cell(), cell(), cell()).unwrap();
            let efit = fit_ecic(&data, &TailConfig::default()).unwrap();
            for c in Cell::ALL {
                mean[c.index()] += efit.fit(c).alpha_hat / 200.0;
            }
        }
        for m in mean {
            assert!((m / 10.0 - 1.0).abs() < 0.15, "{mean:?}");
        }
    }

    fn arb_fit() -> impl Strategy<Value = TailFit> {
        (1usize..400, 1usize..4000, 1e-2f64..1e2, 0.3f64..15.0)
            .prop_map(|(k, extra, thr, a)| fit(k, thr, a, k + extra))
    }

    proptest! {
        #[test]
        fn simplified_equals_composition(f00 in arb_fit(), f01 in arb_fit(), f10 in arb_fit(), q in 0.5f64..0.9999) {
            let a = counterfactual_tail_quantile(&f00, &f01, &f10, q).unwrap();
            let b = composed(&f00, &f01, &f10, q);
            prop_assert!(rel(a, b) < 1e-10, "{} vs {}", a, b);
        }

        #[test]
        fn homogeneous_of_degree_one(f00 in arb_fit(), f01 in arb_fit(), f10 in arb_fit(), f11 in arb_fit(),
                                      c in 1e-2f64..1e2, q in 0.9f64..0.999) {
            let scale = |f: TailFit| TailFit { threshold: c * f.threshold, ..f };
            let e = EcicFit::new(f00, f01, f10, f11);
            let s = EcicFit::new(scale(f00), scale(f01), scale(f10), scale(f11));
            let base = ecic_confidence_interval(&e, q, 10.0).unwrap();
            let scaled = ecic_confidence_interval(&s, q, 10.0).unwrap();
            let tol = 1e-10 * (base.diagnostic("treated_quantile").unwrap() + base.diagnostic("counterfactual_quantile").unwrap());
            prop_assert!((scaled.tau_hat - c * base.tau_hat).abs() <= c * tol);
            prop_assert!(rel(scaled.se, c * base.se) < 1e-10);
        }

        #[test]
        fn depth_increases_with_level(f in arb_fit(), q in 0.01f64..0.98, dq in 1e-4f64..0.01) {
            let e = EcicFit::new(f, f, f, f);
            prop_assert!(e.depth(Cell::C11, q + dq) > e.depth(Cell::C11, q));
            let est = ecic_confidence_interval(&e, q, 10.0).unwrap();
            prop_assert_eq!(est.floor_applied(), e.depth(Cell::C11, q) < 10.0 * (1.0 - FLOOR_SLACK));
            prop_assert!(est.se >= 0.0);
        }
    }
}
