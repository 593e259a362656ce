//! `ecic` command-line tool.
//!
//! Exit codes: 0 on success, 2 when `estimate` fails at some (not
//! necessarily all) levels, 1 on usage, input, output or simulation errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod grid;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use ecic_core::montecarlo::write_tidy_csv;
use ecic_core::{
    read_csv_file, run_estimates, run_experiments, tail_fit_report, ExperimentConfig, ExperimentKind,
    Method, SeMethod, SimDesign, TailConfig,
};

use args::{Cli, Command, EstimateArgs, ExperimentArg, FitTailArgs, Format, SimMethodArg, SimulateArgs};

type CliResult<T> = Result<T, String>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::Estimate(a) => estimate(&a),
        Command::Simulate(a) => simulate(&a),
        Command::FitTail(a) => fit_tail(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn emit(output_dir: Option<&Path>, file_name: &str, contents: &[u8]) -> CliResult<()> {
    match output_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
            let path = dir.join(file_name);
            fs::write(&path, contents).map_err(|e| format!("{}: {e}", path.display()))
        }
        None => std::io::stdout()
            .write_all(contents)
            .map_err(|e| format!("stdout: {e}")),
    }
}

fn estimate(a: &EstimateArgs) -> CliResult<ExitCode> {
    let q_list = grid::parse_q_list(&a.q)?;
    let config = a.run_config(q_list);
    config.validate().map_err(|e| e.to_string())?;
    let data = read_csv_file(&a.input).map_err(|e| e.to_string())?;
    let report = run_estimates(&data, &config).map_err(|e| e.to_string())?;
    let (name, bytes) = match a.format {
        Format::Json => ("estimates.json", report.to_json().map_err(|e| e.to_string())?.into_bytes()),
        Format::Csv => {
            let mut buf = Vec::new();
            report.write_csv(&mut buf).map_err(|e| e.to_string())?;
            ("estimates.csv", buf)
        }
    };
    emit(a.output_dir.as_deref(), name, &bytes)?;
    for entry in &report.estimates {
        if let ecic_core::ReportEntry::Failed { q, error } = entry {
            eprintln!("q = {q}: {error}");
        }
    }
    Ok(if report.has_failures() { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

fn simulate(a: &SimulateArgs) -> CliResult<ExitCode> {
    let design = SimDesign {
        pi_g: a.pi_g,
        pi_t: a.pi_t,
        pi_a: a.pi_a,
        pi_b: a.pi_b,
        alpha_dof: a.alpha_dof,
        n: a.n,
        seed: a.seed,
    };
    design.validate().map_err(|e| e.to_string())?;
    let mut methods: Vec<Method> = Vec::new();
    for m in &a.method {
        let m = match m {
            SimMethodArg::Ecic => Method::Ecic,
            SimMethodArg::Cic => Method::Cic,
        };
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    let mut config = ExperimentConfig::new(grid::parse_q_list(&a.q)?, a.reps as usize, methods);
    config.estimator.tail = TailConfig {
        k_rule: a.tail_args.k_rule(),
        jitter_seed: a.tail_args.jitter_ties.then_some(a.seed),
    };
    config.estimator.d_floor = a.d_floor;
    config.estimator.se_method = SeMethod::Bootstrap {
        reps: a.bootstrap_reps as usize,
        seed: a.seed,
    };
    let kind = match a.experiment {
        ExperimentArg::Bias => ExperimentKind::Bias,
        ExperimentArg::Coverage => ExperimentKind::Coverage,
    };
    let results = run_experiments(kind, &design, &config).map_err(|e| e.to_string())?;

    let json = serde_json::json!({ "schema": ecic_core::io::SCHEMA_VERSION, "experiments": results });
    let mut json = serde_json::to_string_pretty(&json).map_err(|e| e.to_string())?;
    json.push('\n');
    let mut csv = Vec::new();
    write_tidy_csv(&results, &mut csv).map_err(|e| e.to_string())?;
    emit(Some(&a.output_dir), "experiment.json", json.as_bytes())?;
    emit(Some(&a.output_dir), "experiment.csv", &csv)?;

    let mut out = std::io::stdout().lock();
    for res in &results {
        for s in &res.summaries {
            let mut line = format!(
                "{} q={} mean={:.4} bias={:+.4} iqr=[{:.4}, {:.4}]",
                res.method.name(),
                s.q,
                s.mean_estimate,
                s.bias,
                s.iqr_low,
                s.iqr_high
            );
            if let (Some(c), Some(se)) = (s.coverage_rate, s.mean_se) {
                line.push_str(&format!(" coverage={c:.3} mean_se={se:.4}"));
            }
            line.push_str(&format!(" failures={}", s.failures));
            if writeln!(out, "{line}").is_err() {
                // Closed pipe: the artifacts are already written.
                return Ok(ExitCode::SUCCESS);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn fit_tail(a: &FitTailArgs) -> CliResult<ExitCode> {
    let data = read_csv_file(&a.input).map_err(|e| e.to_string())?;
    let config = TailConfig {
        k_rule: a.tail_args.k_rule(),
        jitter_seed: a.tail_args.jitter_ties.then_some(a.seed),
    };
    let report = tail_fit_report(&data, &config, a.transform.into()).map_err(|e| e.to_string())?;
    let (name, bytes) = match a.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())?;
            s.push('\n');
            ("tail_fits.json", s.into_bytes())
        }
        Format::Csv => {
            let mut buf = Vec::new();
            report.write_csv(&mut buf).map_err(|e| e.to_string())?;
            ("tail_fits.csv", buf)
        }
    };
    emit(a.output_dir.as_deref(), name, &bytes)?;
    Ok(ExitCode::SUCCESS)
}
