//! Offline (train once, freeze) and online (walk-forward refit) protocols.
//!
//! Column conventions, for execution lag `l`: a prediction for return
//! column `c` is made at feature time `u = c − 1 − l` from columns `0..=u`.
//! Training before a boundary `b` (the first column predicted with the new
//! model) may only score against columns up to `b − 1 − l`, so feature
//! times run up to `b − 2 − 2l`.

use std::ops::Range;

use chrono::{DateTime, Datelike};
use rayon::prelude::*;
use trader_company_core::metrics::metrics_report;
use trader_company_core::rng::{derive_seed, seeded};
use trader_company_core::{Company, MetricsReport, PredictionTrack, ReturnsPanel};

use crate::config::{BacktestConfig, Preset, Refit, RefitName};
use crate::error::{BacktestError, Result};

const SECONDS_PER_DAY: f64 = 86_400.0;
const SECONDS_PER_YEAR: f64 = 365.25 * SECONDS_PER_DAY;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Offline,
    Online,
}

/// Trader scores over the last training window, kept for inspection.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StoredScores {
    pub times: Range<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StockRun {
    pub stock: usize,
    pub track: PredictionTrack,
    /// `None` for the buy-and-hold baseline.
    pub company: Option<Company>,
    pub scores: Option<StoredScores>,
    pub log: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub config: BacktestConfig,
    pub mode: Mode,
    pub symbols: Vec<String>,
    pub timestamps: Vec<i64>,
    /// First test column of each segment; the last segment ends at `T`.
    pub boundaries: Vec<usize>,
    pub periods_per_year: f64,
    pub stocks: Vec<StockRun>,
    pub report: MetricsReport,
}

/// 252 for daily-spaced data, otherwise observed periods per calendar year.
pub fn infer_periods_per_year(timestamps: &[i64]) -> f64 {
    if timestamps.len() < 2 {
        return 252.0;
    }
    let mut gaps: Vec<i64> = timestamps.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_unstable();
    let median = gaps[gaps.len() / 2] as f64;
    if (0.5 * SECONDS_PER_DAY..=4.0 * SECONDS_PER_DAY).contains(&median) {
        return 252.0;
    }
    let span = (timestamps[timestamps.len() - 1] - timestamps[0]) as f64;
    (timestamps.len() - 1) as f64 * SECONDS_PER_YEAR / span
}

fn year_of(ts: i64) -> Option<i32> {
    DateTime::from_timestamp(ts, 0).map(|d| d.year())
}

/// Refit boundaries: the split column, then every refit point after it.
pub fn refit_boundaries(refit: Refit, mode: Mode, split: usize, timestamps: &[i64]) -> Vec<usize> {
    let n = timestamps.len();
    let mut out = vec![split];
    if mode == Mode::Offline {
        return out;
    }
    match refit {
        Refit::Named(RefitName::Never) => {}
        Refit::Periods(p) => out.extend((1..).map(|k| split + k * p).take_while(|&b| b < n)),
        Refit::Named(RefitName::Yearly) => {
            out.extend((split + 1..n).filter(|&c| year_of(timestamps[c]) != year_of(timestamps[c - 1])))
        }
    }
    out
}

fn target_stocks(config: &BacktestConfig, panel: &ReturnsPanel) -> Result<Vec<usize>> {
    match &config.targets {
        None => Ok((0..panel.num_stocks()).collect()),
        Some(names) => names
            .iter()
            .map(|name| {
                panel.symbol_index(name).ok_or_else(|| BacktestError::UnknownSymbol {
                    symbol: name.clone(),
                    line: None,
                })
            })
            .collect(),
    }
}

/// Feature times available for training before boundary `b`.
fn training_times(b: usize, lag: usize, warmup: usize) -> Result<Range<usize>> {
    let end = b.saturating_sub(1 + 2 * lag);
    if end <= warmup {
        return Err(BacktestError::InsufficientData(format!(
            "training before column {b} needs feature times after warmup {warmup} (lag {lag})"
        )));
    }
    Ok(warmup..end)
}

fn run_stock(
    config: &BacktestConfig,
    panel: &ReturnsPanel,
    stock: usize,
    boundaries: &[usize],
) -> Result<StockRun> {
    let n = panel.num_periods();
    let lag = config.lag;
    let symbol = &panel.symbols()[stock];
    let columns: Vec<usize> = (boundaries[0]..n).collect();
    let actual: Vec<f64> = columns.iter().map(|&c| panel.get(stock, c)).collect();
    let mut log = Vec::new();

    if config.preset == Preset::Market {
        log.push(format!("{symbol}: buy-and-hold over columns {}..{n}", boundaries[0]));
        let track = PredictionTrack::new(stock, columns.clone(), vec![1.0; columns.len()], actual)?;
        return Ok(StockRun {
            stock,
            track,
            company: None,
            scores: None,
            log,
        });
    }

    let mut rng = seeded(derive_seed(config.seed, stock as u64));
    let company_config = config.company_config();
    let warmup = company_config.ranges.warmup();
    let mut company = Company::new(stock, panel.num_stocks(), company_config, &mut rng)?;
    let mut predicted = Vec::with_capacity(columns.len());
    let mut scores = None;
    for (k, &b) in boundaries.iter().enumerate() {
        let end = boundaries.get(k + 1).copied().unwrap_or(n);
        let times = training_times(b, lag, warmup)?;
        let view = panel.history(b - 1 - lag)?;
        for round in 0..config.rounds {
            let step = company.train_step(&view, times.clone(), &mut rng)?;
            let educated = step.educate.map_or(0, |e| e.educated.len());
            let replaced: usize = step
                .prune
                .map_or(0, |p| p.rounds.iter().map(|r| r.replaced.len()).sum());
            log.push(format!(
                "{symbol}: segment {k} round {round}: educated {educated}, replaced {replaced}"
            ));
        }
        let values = company.scores(&view, times.clone())?;
        scores = Some(StoredScores { times: times.clone(), values });
        log.push(format!(
            "{symbol}: segment {k} trained on feature times {}..{}, predicting columns {b}..{end}",
            times.start, times.end
        ));
        for c in b..end {
            let u = c - 1 - lag;
            predicted.push(company.predict(&panel.history(u)?, u)?);
        }
    }
    let track = PredictionTrack::new(stock, columns, predicted, actual)?;
    Ok(StockRun {
        stock,
        track,
        company: Some(company),
        scores,
        log,
    })
}

/// Runs every target stock in parallel; results are ordered by target.
pub fn run_backtest(config: &BacktestConfig, panel: &ReturnsPanel, mode: Mode) -> Result<RunOutcome> {
    config.validate()?;
    let split = config.split_column(panel)?;
    if split < 1 + config.lag {
        return Err(BacktestError::InsufficientData(format!(
            "first test column {split} precedes lag {}",
            config.lag
        )));
    }
    let boundaries = refit_boundaries(config.refit, mode, split, panel.timestamps());
    let targets = target_stocks(config, panel)?;
    let stocks = targets
        .par_iter()
        .map(|&stock| run_stock(config, panel, stock, &boundaries))
        .collect::<Result<Vec<_>>>()?;
    let periods_per_year = config
        .periods_per_year
        .unwrap_or_else(|| infer_periods_per_year(panel.timestamps()));
    let tracks: Vec<PredictionTrack> = stocks.iter().map(|s| s.track.clone()).collect();
    let report = metrics_report(&tracks, periods_per_year)?;
    Ok(RunOutcome {
        config: config.clone(),
        mode,
        symbols: panel.symbols().to_vec(),
        timestamps: panel.timestamps().to_vec(),
        boundaries,
        periods_per_year,
        stocks,
        report,
    })
}
