//! CSV microdata input, run configuration and machine-readable reports.
//!
//! Input files carry one row per unit with columns `y` (outcome), `g`
//! (group, 0/1) and `t` (period, 0/1); header names are matched
//! case-insensitively and in any order. Reports are JSON documents tagged
//! with `"schema": 1`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cic::{cic_estimate, SeMethod};
use crate::data::{Cell, QuadData};
use crate::ecic::{
    estimate_auto, estimate_left_tail, estimate_right_tail, fit_ecic, AutoConfig, EffectEstimate,
    Method, Tail, TailConfig, DEFAULT_D_FLOOR, DEFAULT_EXTREME_HIGH, DEFAULT_EXTREME_LOW,
};
use crate::error::{Error, Result};
use crate::tail::{apply_transform, KRule, TailTransform};

pub const SCHEMA_VERSION: u32 = 1;

fn csv_error(e: csv::Error) -> Error {
    Error::Csv(e.to_string())
}

fn io_error(e: std::io::Error) -> Error {
    Error::Io(e.to_string())
}

fn parse_binary(field: &str, name: &str, row: usize) -> Result<u8> {
    match field.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::Row {
            row,
            message: format!("{name} must be 0 or 1, got {other:?}"),
        }),
    }
}

/// Reads `y, g, t` rows into the four cells. Row numbers in errors count
/// data rows from 1, excluding the header.
pub fn parse_csv<R: Read>(reader: R) -> Result<QuadData> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let column = |name: &'static str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or(Error::MissingColumn(name))
    };
    let (iy, ig, it) = (column("y")?, column("g")?, column("t")?);

    let mut cells: [Vec<f64>; 4] = Default::default();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Row { row, message: e.to_string() })?;
        let field = |idx: usize| record.get(idx).unwrap_or("");
        let g = parse_binary(field(ig), "g", row)?;
        let t = parse_binary(field(it), "t", row)?;
        let y: f64 = field(iy).parse().map_err(|_| Error::Row {
            row,
            message: format!("y is not a number: {:?}", field(iy)),
        })?;
        if !y.is_finite() {
            return Err(Error::Row {
                row,
                message: format!("y must be finite, got {y}"),
            });
        }
        cells[Cell::from_labels(g, t).expect("binary labels").index()].push(y);
    }
    let [c00, c01, c10, c11] = cells;
    QuadData::from_vecs(c00, c01, c10, c11)
}

pub fn read_csv_file(path: impl AsRef<Path>) -> Result<QuadData> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_csv(file)
}

/// Writes `y, g, t` rows, cell by cell, with round-trip exact outcomes.
pub fn write_csv<W: Write>(data: &QuadData, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["y", "g", "t"]).map_err(csv_error)?;
    for sample in data.cells() {
        let (g, t) = (sample.group().to_string(), sample.period().to_string());
        for y in sample.outcomes() {
            w.write_record([y.to_string().as_str(), &g, &t]).map_err(csv_error)?;
        }
    }
    w.flush().map_err(io_error)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    #[default]
    Auto,
    Cic,
    Ecic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TailChoice {
    #[default]
    Auto,
    Right,
    Left,
}

/// Everything that determines an `estimate` run besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub q_list: Vec<f64>,
    pub method: MethodChoice,
    pub tail: TailChoice,
    pub transform: TailTransform,
    pub k_rule: KRule,
    pub d_floor: f64,
    pub extreme_low: f64,
    pub extreme_high: f64,
    pub se_method: SeMethod,
    /// Break tied outcomes with seeded jitter before tail fitting.
    pub jitter_ties: bool,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            q_list: vec![0.5],
            method: MethodChoice::Auto,
            tail: TailChoice::Auto,
            transform: TailTransform::Negate,
            k_rule: KRule::default(),
            d_floor: DEFAULT_D_FLOOR,
            extreme_low: DEFAULT_EXTREME_LOW,
            extreme_high: DEFAULT_EXTREME_HIGH,
            se_method: SeMethod::AnalyticKernel,
            jitter_ties: false,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q_list.is_empty() {
            return Err(Error::InvalidArgument("no quantile levels given".into()));
        }
        if let Some(&q) = self.q_list.iter().find(|&&q| !(q > 0.0 && q < 1.0)) {
            return Err(Error::InvalidLevel(q));
        }
        self.auto_config().validate()
    }

    pub fn tail_config(&self) -> TailConfig {
        TailConfig {
            k_rule: self.k_rule,
            jitter_seed: self.jitter_ties.then_some(self.seed),
        }
    }

    pub fn auto_config(&self) -> AutoConfig {
        AutoConfig {
            extreme_low: self.extreme_low,
            extreme_high: self.extreme_high,
            d_floor: self.d_floor,
            tail: self.tail_config(),
            left_transform: self.transform,
            se_method: self.se_method,
        }
    }

    fn resolve_tail(&self, q: f64) -> Tail {
        match self.tail {
            TailChoice::Right => Tail::Right,
            TailChoice::Left => Tail::Left,
            TailChoice::Auto if q >= 0.5 => Tail::Right,
            TailChoice::Auto => Tail::Left,
        }
    }

    /// Estimate at one level. `auto` follows the dispatch bounds; a forced
    /// tail only matters when eCIC is used.
    pub fn estimate(&self, data: &QuadData, q: f64) -> Result<EffectEstimate> {
        let auto = self.auto_config();
        let method = match self.method {
            MethodChoice::Cic => Method::Cic,
            MethodChoice::Ecic => Method::Ecic,
            MethodChoice::Auto if self.tail == TailChoice::Auto => return estimate_auto(data, q, &auto),
            MethodChoice::Auto => auto.route(q).0,
        };
        match method {
            Method::Cic => Ok(cic_estimate(data, q, self.se_method)?.into()),
            Method::Ecic => match self.resolve_tail(q) {
                Tail::Right => estimate_right_tail(data, q, &auto.tail, self.d_floor),
                Tail::Left => estimate_left_tail(data, q, self.transform, &auto.tail, self.d_floor),
            },
        }
    }
}

/// One line of a report: an estimate, or the reason none was produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ReportEntry {
    Estimate(EffectEstimate),
    Failed { q: f64, error: String },
}

impl ReportEntry {
    pub fn q(&self) -> f64 {
        match self {
            ReportEntry::Estimate(e) => e.q,
            ReportEntry::Failed { q, .. } => *q,
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, ReportEntry::Failed { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub schema: u32,
    pub cell_counts: BTreeMap<Cell, usize>,
    pub estimates: Vec<ReportEntry>,
}

impl Report {
    pub fn has_failures(&self) -> bool {
        self.estimates.iter().any(ReportEntry::is_failure)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Csv(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    /// Flat table `q, tau_hat, se, ci_low, ci_high, method, tail, error`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["q", "tau_hat", "se", "ci_low", "ci_high", "method", "tail", "error"])
            .map_err(csv_error)?;
        for entry in &self.estimates {
            let row = match entry {
                ReportEntry::Estimate(e) => [
                    e.q.to_string(),
                    e.tau_hat.to_string(),
                    e.se.to_string(),
                    e.ci_low.to_string(),
                    e.ci_high.to_string(),
                    e.method.name().to_string(),
                    match e.tail {
                        Some(Tail::Right) => "right".into(),
                        Some(Tail::Left) => "left".into(),
                        None => String::new(),
                    },
                    String::new(),
                ],
                ReportEntry::Failed { q, error } => {
                    let mut row: [String; 8] = Default::default();
                    row[0] = q.to_string();
                    row[7] = error.clone();
                    row
                }
            };
            w.write_record(&row).map_err(csv_error)?;
        }
        w.flush().map_err(io_error)
    }
}

/// Estimates every level in `config.q_list`; failures are recorded per level.
pub fn run_estimates(data: &QuadData, config: &RunConfig) -> Result<Report> {
    config.validate()?;
    let estimates = config
        .q_list
        .iter()
        .map(|&q| match config.estimate(data, q) {
            Ok(e) => ReportEntry::Estimate(e),
            Err(e) => ReportEntry::Failed { q, error: e.to_string() },
        })
        .collect();
    Ok(Report {
        schema: SCHEMA_VERSION,
        cell_counts: Cell::ALL.into_iter().map(|c| (c, data.cell(c).len())).collect(),
        estimates,
    })
}

/// Per-cell tail fit, for inspection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellFitRow {
    pub cell: Cell,
    pub n: usize,
    pub k: usize,
    pub threshold: f64,
    pub alpha_hat: f64,
    pub k_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailFitReport {
    pub schema: u32,
    pub transform: TailTransform,
    pub cells: Vec<CellFitRow>,
}

/// Fits each cell after `transform`; errors name the failing cell.
pub fn tail_fit_report(data: &QuadData, config: &TailConfig, transform: TailTransform) -> Result<TailFitReport> {
    let mapped = data.try_map_cells(|s| apply_transform(s, transform).map_err(|e| e.in_cell(s.cell())))?;
    let efit = fit_ecic(&mapped, config)?;
    let cells = Cell::ALL
        .into_iter()
        .map(|c| {
            let f = efit.fit(c);
            CellFitRow {
                cell: c,
                n: f.n,
                k: f.k,
                threshold: f.threshold,
                alpha_hat: f.alpha_hat,
                k_fallback: efit.k_fallback(c),
            }
        })
        .collect();
    Ok(TailFitReport {
        schema: SCHEMA_VERSION,
        transform,
        cells,
    })
}

impl TailFitReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["cell", "n", "k", "threshold", "alpha_hat", "k_fallback"])
            .map_err(csv_error)?;
        for r in &self.cells {
            w.write_record([
                r.cell.label().to_string(),
                r.n.to_string(),
                r.k.to_string(),
                r.threshold.to_string(),
                r.alpha_hat.to_string(),
                r.k_fallback.to_string(),
            ])
            .map_err(csv_error)?;
        }
        w.flush().map_err(io_error)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<QuadData> {
        parse_csv(text.as_bytes())
    }

    #[test]
    fn four_rows_four_cells() {
        let data = parse("y,g,t\n1.5,0,0\n2,0,1\n-3,1,0\n4e-1,1,1\n").unwrap();
        assert_eq!(data.sizes(), [1, 1, 1, 1]);
        assert_eq!(data.cell(Cell::C10).outcomes(), &[-3.0]);
        assert_eq!(data.cell(Cell::C11).outcomes(), &[0.4]);
    }

    #[test]
    fn headers_any_case_and_order() {
        let data = parse("T, Y ,G\n0,1,0\n1,2,0\n0,3,1\n1,4,1\n").unwrap();
        assert_eq!(data.cell(Cell::C01).outcomes(), &[2.0]);
        assert_eq!(data.cell(Cell::C10).outcomes(), &[3.0]);
    }

    #[test]
    fn missing_column_named() {
        let err = parse("y,g\n1,0\n").unwrap_err();
        assert_eq!(err.to_string(), "missing column: t");
    }

    #[test]
    fn bad_rows_cite_row_number() {
        let mut text = String::from("y,g,t\n");
        for i in 0..6 {
            text.push_str(&format!("{i},{},{}\n", i % 2, (i / 2) % 2));
        }
        text.push_str("7,2,0\n");
        let err = parse(&text).unwrap_err();
        assert!(matches!(err, Error::Row { row: 7, .. }), "{err}");
        assert!(err.to_string().starts_with("row 7:"));

        let err = parse("y,g,t\n1,0,0\nabc,1,1\n").unwrap_err();
        assert!(matches!(err, Error::Row { row: 2, .. }), "{err}");
        let err = parse("y,g,t\ninf,0,0\n").unwrap_err();
        assert!(matches!(err, Error::Row { row: 1, .. }), "{err}");
    }

    #[test]
    fn empty_cell_named() {
        let err = parse("y,g,t\n1,0,0\n2,0,1\n3,1,0\n").unwrap_err();
        assert_eq!(err.to_string(), "cell 11: empty cell");
    }

    #[test]
    fn failures_are_reported_per_level() {
        let neg: Vec<f64> = (1..=200).map(|i| -f64::from(i)).collect();
        let data = QuadData::from_vecs(neg.clone(), neg.clone(), neg.clone(), neg).unwrap();
        let config = RunConfig {
            q_list: vec![0.99],
            method: MethodChoice::Ecic,
            tail: TailChoice::Right,
            ..RunConfig::default()
        };
        let report = run_estimates(&data, &config).unwrap();
        assert!(report.has_failures());
        let json = report.to_json().unwrap();
        assert!(json.contains("non-positive threshold"), "{json}");
        assert!(json.contains("\"schema\": 1"));
    }

    #[test]
    fn report_numbers_round_trip() {
        let y: Vec<f64> = (1..=300).map(|i| (f64::from(i) * 0.37).sin().abs() + 0.1).collect();
        let data = QuadData::from_vecs(y.clone(), y.clone(), y.clone(), y).unwrap();
        let config = RunConfig { q_list: vec![0.5, 0.99], ..RunConfig::default() };
        let report = run_estimates(&data, &config).unwrap();
        assert!(!report.has_failures());
        let value: serde_json::Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
        for (entry, parsed) in report.estimates.iter().zip(value["estimates"].as_array().unwrap()) {
            let ReportEntry::Estimate(e) = entry else { panic!() };
            assert_eq!(parsed["tau_hat"].as_f64().unwrap().to_bits(), e.tau_hat.to_bits());
            assert_eq!(parsed["se"].as_f64().unwrap().to_bits(), e.se.to_bits());
            assert_eq!(e.tau_hat, 0.0);
        }
        assert_eq!(value["cell_counts"]["11"], 300);
    }

    #[test]
    fn forced_tails_and_methods() {
        let y: Vec<f64> = (1..=400).map(|i| 1.0 / (1.0 - f64::from(i) / 401.0)).collect();
        let data = QuadData::from_vecs(y.clone(), y.clone(), y.clone(), y).unwrap();
        let base = RunConfig::default();
        let cic = RunConfig { method: MethodChoice::Cic, ..base.clone() }.estimate(&data, 0.99);
        assert_eq!(cic.unwrap().method, Method::Cic);
        let right = RunConfig { tail: TailChoice::Right, ..base.clone() }.estimate(&data, 0.97).unwrap();
        assert_eq!((right.method, right.tail), (Method::Ecic, Some(Tail::Right)));
        let bulk = RunConfig { tail: TailChoice::Right, ..base.clone() }.estimate(&data, 0.5).unwrap();
        assert_eq!(bulk.method, Method::Cic);
        let ecic = RunConfig { method: MethodChoice::Ecic, ..base.clone() }.estimate(&data, 0.9).unwrap();
        assert_eq!(ecic.tail, Some(Tail::Right));
        let bad = RunConfig { d_floor: 1.0, ..base };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn tail_fit_dump() {
        let y: Vec<f64> = (1..=500).map(|i| (1.0 - f64::from(i) / 501.0).powf(-0.5)).collect();
        let data = QuadData::from_vecs(y.clone(), y.clone(), y.clone(), y).unwrap();
        let report = tail_fit_report(&data, &TailConfig::default(), TailTransform::Identity).unwrap();
        assert_eq!(report.cells.len(), 4);
        assert!(report.cells.iter().all(|r| r.n == 500 && r.alpha_hat > 0.0));
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("cell,n,k,threshold,alpha_hat,k_fallback\n00,500,"));
        let err = tail_fit_report(&data, &TailConfig::default(), TailTransform::Negate).unwrap_err();
        assert!(err.to_string().starts_with("cell 00:"), "{err}");
    }

    fn arb_cell() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(prop_oneof![-1e6f64..1e6, -1e-6f64..1e-6, Just(0.0)], 1..20)
    }

    proptest! {
        #[test]
        fn csv_round_trip(a in arb_cell(), b in arb_cell(), c in arb_cell(), d in arb_cell()) {
            let data = QuadData::from_vecs(a, b, c, d).unwrap();
            let mut buf = Vec::new();
            write_csv(&data, &mut buf).unwrap();
            prop_assert_eq!(parse_csv(buf.as_slice()).unwrap(), data);
        }
    }
}
