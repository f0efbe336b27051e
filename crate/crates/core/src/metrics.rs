//! Canonical sign strategy and its performance metrics.
//!
//! Every metric is computed from a [`PredictionTrack`]: the strategy holds
//! `sign(predicted)` units and earns `sign(predicted) · actual` per period.
//! Drawdown is measured additively on the cumulative log-return curve with
//! an implicit starting point of 0.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formula::sign;

/// Drawdowns below this make the Calmar ratio undefined.
pub const MIN_DRAWDOWN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTrack {
    pub target: usize,
    /// Panel column of each realised return.
    pub times: Vec<usize>,
    pub predicted: Vec<f64>,
    pub actual: Vec<f64>,
}

impl PredictionTrack {
    pub fn new(target: usize, times: Vec<usize>, predicted: Vec<f64>, actual: Vec<f64>) -> Result<Self> {
        if times.len() != predicted.len() || times.len() != actual.len() {
            return Err(Error::Shape(alloc::format!(
                "track lengths differ: {} times, {} predicted, {} actual",
                times.len(),
                predicted.len(),
                actual.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Shape("track times not strictly increasing".into()));
        }
        Ok(Self { target, times, predicted, actual })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Per-period strategy returns `sign(predicted) · actual`.
    pub fn strategy_returns(&self) -> Vec<f64> {
        self.predicted
            .iter()
            .zip(&self.actual)
            .map(|(&p, &r)| sign(p) * r)
            .collect()
    }
}

pub fn canonical_positions(predicted: &[f64]) -> Vec<f64> {
    predicted.iter().map(|&p| sign(p)).collect()
}

/// Running sum of position × realised return.
pub fn cumulative_return_series(track: &PredictionTrack) -> Vec<f64> {
    let mut acc = 0.0;
    track
        .strategy_returns()
        .into_iter()
        .map(|r| {
            acc += r;
            acc
        })
        .collect()
}

/// Percentage of periods where `sign(predicted) == sign(actual)`, zeros
/// included.
pub fn accuracy(track: &PredictionTrack) -> Result<f64> {
    if track.is_empty() {
        return Err(Error::Empty("empty track"));
    }
    let hits = track
        .predicted
        .iter()
        .zip(&track.actual)
        .filter(|(&p, &r)| sign(p) == sign(r))
        .count();
    Ok(100.0 * hits as f64 / track.len() as f64)
}

/// `100 · (T_Y / T) · C[T]`.
pub fn annualized_return(final_cumulative: f64, periods_per_year: f64, periods: usize) -> Result<f64> {
    if periods == 0 {
        return Err(Error::Empty("annualised return over zero periods"));
    }
    Ok(100.0 * (periods_per_year / periods as f64) * final_cumulative)
}

/// Per-period mean over population standard deviation of the strategy
/// returns; `None` when the returns are constant.
pub fn sharpe_ratio(track: &PredictionTrack) -> Option<f64> {
    let r = track.strategy_returns();
    if r.is_empty() || r.iter().all(|&v| v == r[0]) {
        return None;
    }
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let var = r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = libm::sqrt(var);
    (sd > 0.0).then(|| mean / sd)
}

/// Largest `peak − trough` of the curve, where the peak may be the implicit
/// origin 0.
pub fn max_drawdown(curve: &[f64]) -> f64 {
    let mut peak = 0.0f64;
    let mut worst = 0.0f64;
    for &c in curve {
        peak = peak.max(c);
        worst = worst.max(peak - c);
    }
    worst
}

pub fn calmar_ratio(annualized_return: f64, max_drawdown: f64) -> Option<f64> {
    (max_drawdown >= MIN_DRAWDOWN).then(|| annualized_return / max_drawdown)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockMetrics {
    pub stock: usize,
    /// Percent.
    pub accuracy: f64,
    /// Percent.
    pub annualized_return: f64,
    pub sharpe: Option<f64>,
    pub calmar: Option<f64>,
    pub max_drawdown: f64,
    pub final_cumulative: f64,
    pub curve: Vec<f64>,
}

impl StockMetrics {
    pub fn from_track(track: &PredictionTrack, periods_per_year: f64) -> Result<Self> {
        let curve = cumulative_return_series(track);
        let final_cumulative = curve.last().copied().unwrap_or(0.0);
        let ar = annualized_return(final_cumulative, periods_per_year, track.len())?;
        let mdd = max_drawdown(&curve);
        Ok(Self {
            stock: track.target,
            accuracy: accuracy(track)?,
            annualized_return: ar,
            sharpe: sharpe_ratio(track),
            calmar: calmar_ratio(ar, mdd),
            max_drawdown: mdd,
            final_cumulative,
            curve,
        })
    }
}

/// Arithmetic means over stocks; SR and CR average only the defined values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub accuracy: f64,
    pub annualized_return: f64,
    pub sharpe: Option<f64>,
    pub calmar: Option<f64>,
    pub max_drawdown: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub periods_per_year: f64,
    pub stocks: Vec<StockMetrics>,
    pub average: Averages,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn metrics_report(tracks: &[PredictionTrack], periods_per_year: f64) -> Result<MetricsReport> {
    if tracks.is_empty() {
        return Err(Error::Empty("no tracks to report"));
    }
    let stocks = tracks
        .iter()
        .map(|t| StockMetrics::from_track(t, periods_per_year))
        .collect::<Result<Vec<_>>>()?;
    let average = Averages {
        accuracy: mean(stocks.iter().map(|s| s.accuracy)).unwrap_or(0.0),
        annualized_return: mean(stocks.iter().map(|s| s.annualized_return)).unwrap_or(0.0),
        sharpe: mean(stocks.iter().filter_map(|s| s.sharpe)),
        calmar: mean(stocks.iter().filter_map(|s| s.calmar)),
        max_drawdown: mean(stocks.iter().map(|s| s.max_drawdown)).unwrap_or(0.0),
    };
    Ok(MetricsReport {
        periods_per_year,
        stocks,
        average,
    })
}
