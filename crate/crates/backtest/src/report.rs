//! Run artifacts. Every file is named `<config-hash>-s<seed>-<mode>.<kind>`
//! so reruns overwrite the same files. File contents do not depend on the
//! mode, so an online run with a single segment reproduces offline output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use trader_company_core::formula::{format_trader, FormatStyle};

use crate::backtest::{Mode, RunOutcome};
use crate::error::{BacktestError, Result};
use crate::inspect::census_rows;
use crate::state::{CompanyState, STATE_FORMAT};

/// Traders listed per stock in the formula report.
const FORMULAS_PER_STOCK: usize = 5;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunArtifacts {
    pub metrics_csv: PathBuf,
    pub metrics_json: PathBuf,
    pub curves_csv: PathBuf,
    pub census_csv: PathBuf,
    pub formulas: PathBuf,
    pub run_log: PathBuf,
    pub states: Vec<PathBuf>,
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    stock: &'a str,
    acc: f64,
    ar: f64,
    sr: Option<f64>,
    cr: Option<f64>,
    mdd: f64,
    final_cumulative: Option<f64>,
}

#[derive(Serialize)]
struct MetricsDocument<'a> {
    run: String,
    preset: String,
    periods_per_year: f64,
    test_periods: usize,
    stocks: Vec<MetricsRow<'a>>,
    average: MetricsRow<'a>,
}

fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Offline => "offline",
        Mode::Online => "online",
    }
}

fn metrics_document(outcome: &RunOutcome) -> MetricsDocument<'_> {
    let report = &outcome.report;
    let stocks = report
        .stocks
        .iter()
        .map(|m| MetricsRow {
            stock: &outcome.symbols[m.stock],
            acc: m.accuracy,
            ar: m.annualized_return,
            sr: m.sharpe,
            cr: m.calmar,
            mdd: m.max_drawdown,
            final_cumulative: Some(m.final_cumulative),
        })
        .collect();
    let a = &report.average;
    MetricsDocument {
        run: outcome.config.run_id(),
        preset: outcome.config.preset.to_string(),
        periods_per_year: outcome.periods_per_year,
        test_periods: outcome.stocks.first().map_or(0, |s| s.track.len()),
        stocks,
        average: MetricsRow {
            stock: "average",
            acc: a.accuracy,
            ar: a.annualized_return,
            sr: a.sharpe,
            cr: a.calmar,
            mdd: a.max_drawdown,
            final_cumulative: None,
        },
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn metrics_csv(outcome: &RunOutcome) -> Result<String> {
    let doc = metrics_document(outcome);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["stock", "acc_pct", "ar_pct", "sr", "cr", "mdd", "final_cumulative"])?;
    for row in doc.stocks.iter().chain(std::iter::once(&doc.average)) {
        w.write_record([
            row.stock.to_string(),
            row.acc.to_string(),
            row.ar.to_string(),
            cell(row.sr),
            cell(row.cr),
            row.mdd.to_string(),
            cell(row.final_cumulative),
        ])?;
    }
    finish(w)
}

pub fn metrics_json(outcome: &RunOutcome) -> Result<String> {
    Ok(serde_json::to_string_pretty(&metrics_document(outcome))? + "\n")
}

/// Long format `stock,time,cumulative_return`, one row per stock and test
/// period; `time` is the timestamp of the realised return.
pub fn curves_csv(outcome: &RunOutcome) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["stock", "time", "cumulative_return"])?;
    for (run, m) in outcome.stocks.iter().zip(&outcome.report.stocks) {
        for (&c, v) in run.track.times.iter().zip(&m.curve) {
            w.write_record([
                outcome.symbols[run.stock].clone(),
                outcome.timestamps[c].to_string(),
                v.to_string(),
            ])?;
        }
    }
    finish(w)
}

pub fn census_csv(outcome: &RunOutcome) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["target", "kind", "name", "count"])?;
    for run in &outcome.stocks {
        let Some(company) = &run.company else { continue };
        for (kind, name, count) in census_rows(&company.census(), &outcome.symbols) {
            w.write_record([outcome.symbols[run.stock].as_str(), kind, &name, &count.to_string()])?;
        }
    }
    finish(w)
}

pub fn formulas_text(outcome: &RunOutcome) -> String {
    let mut out = String::new();
    for run in &outcome.stocks {
        let (Some(company), Some(scores)) = (&run.company, &run.scores) else {
            continue;
        };
        let _ = writeln!(out, "[{}]", outcome.symbols[run.stock]);
        let mut order: Vec<usize> = (0..scores.values.len()).collect();
        order.sort_by(|&a, &b| scores.values[b].total_cmp(&scores.values[a]).then(a.cmp(&b)));
        for n in order.into_iter().take(FORMULAS_PER_STOCK) {
            let _ = writeln!(out, "trader {n} score {:.6}", scores.values[n]);
            let formula = format_trader(&company.traders()[n], &outcome.symbols, FormatStyle::Display);
            for line in formula.lines() {
                let _ = writeln!(out, "    {line}");
            }
        }
        out.push('\n');
    }
    out
}

pub fn run_log(outcome: &RunOutcome) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "run {} preset {}", outcome.config.run_id(), outcome.config.preset);
    let _ = writeln!(out, "segments start at columns {:?}", outcome.boundaries);
    for run in &outcome.stocks {
        for line in &run.log {
            let _ = writeln!(out, "{line}");
        }
    }
    out
}

pub fn company_states(outcome: &RunOutcome) -> Vec<(String, CompanyState)> {
    outcome
        .stocks
        .iter()
        .filter_map(|run| {
            let company = run.company.clone()?;
            Some((
                outcome.symbols[run.stock].clone(),
                CompanyState {
                    format: STATE_FORMAT,
                    data: outcome.config.data.clone(),
                    seed: outcome.config.seed,
                    symbols: outcome.symbols.clone(),
                    company,
                    scores: run.scores.clone(),
                },
            ))
        })
        .collect()
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| BacktestError::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn write(path: PathBuf, contents: &str) -> Result<PathBuf> {
    fs::write(&path, contents).map_err(|e| BacktestError::io(&path, e))?;
    Ok(path)
}

/// Writes every report into `dir`, creating it if needed.
pub fn emit_report(outcome: &RunOutcome, dir: &Path) -> Result<RunArtifacts> {
    fs::create_dir_all(dir).map_err(|e| BacktestError::io(dir, e))?;
    let id = format!("{}-{}", outcome.config.run_id(), mode_name(outcome.mode));
    let file = |kind: &str| dir.join(format!("{id}.{kind}"));
    let mut states = Vec::new();
    for (symbol, state) in company_states(outcome) {
        states.push(write(file(&format!("state.{symbol}.json")), &state.to_json()?)?);
    }
    Ok(RunArtifacts {
        metrics_csv: write(file("metrics.csv"), &metrics_csv(outcome)?)?,
        metrics_json: write(file("metrics.json"), &metrics_json(outcome)?)?,
        curves_csv: write(file("curves.csv"), &curves_csv(outcome)?)?,
        census_csv: write(file("census.csv"), &census_csv(outcome)?)?,
        formulas: write(file("formulas.txt"), &formulas_text(outcome))?,
        run_log: write(file("run.log"), &run_log(outcome))?,
        states,
    })
}
