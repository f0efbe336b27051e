//! Price and log-return panels.
//!
//! Both panels are stored row-major, one row per stock. Column `t` of a
//! [`ReturnsPanel`] is `log(p[t+1] / p[t])` of the price panel it came from,
//! and carries the timestamp of `p[t+1]`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};

fn validate_axes(symbols: &[String], timestamps: &[i64], rows: &[Vec<f64>]) -> Result<()> {
    if symbols.is_empty() {
        return Err(Error::Empty("panel has no symbols"));
    }
    if rows.len() != symbols.len() {
        return Err(Error::Shape(format!(
            "{} rows for {} symbols",
            rows.len(),
            symbols.len()
        )));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != timestamps.len() {
            return Err(Error::Shape(format!(
                "row {i} has {} cells, expected {}",
                row.len(),
                timestamps.len()
            )));
        }
        if let Some(t) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::Shape(format!("non-finite value at stock {i}, column {t}")));
        }
    }
    if let Some(t) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::Shape(format!(
            "timestamps not strictly increasing at column {}",
            t + 1
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    symbols: Vec<String>,
    timestamps: Vec<i64>,
    prices: Vec<f64>,
}

impl PricePanel {
    /// `rows[i][t]` is the price of `symbols[i]` at `timestamps[t]`.
    pub fn new(symbols: Vec<String>, timestamps: Vec<i64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        validate_axes(&symbols, &timestamps, &rows)?;
        Ok(Self {
            symbols,
            timestamps,
            prices: rows.into_iter().flatten().collect(),
        })
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn num_stocks(&self) -> usize {
        self.symbols.len()
    }

    pub fn num_times(&self) -> usize {
        self.timestamps.len()
    }

    pub fn row(&self, stock: usize) -> &[f64] {
        let n = self.num_times();
        &self.prices[stock * n..(stock + 1) * n]
    }
}

/// Per-stock log returns, `S` rows by `T` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnsPanel {
    symbols: Vec<String>,
    timestamps: Vec<i64>,
    data: Vec<f64>,
}

impl ReturnsPanel {
    pub fn new(symbols: Vec<String>, timestamps: Vec<i64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        validate_axes(&symbols, &timestamps, &rows)?;
        Ok(Self {
            symbols,
            timestamps,
            data: rows.into_iter().flatten().collect(),
        })
    }

    /// Builds a panel with generated symbols `S0..` and unit-spaced timestamps.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let periods = rows.first().map_or(0, Vec::len);
        let symbols = (0..rows.len()).map(|i| format!("S{i}")).collect();
        Self::new(symbols, (0..periods as i64).collect(), rows)
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn num_stocks(&self) -> usize {
        self.symbols.len()
    }

    pub fn num_periods(&self) -> usize {
        self.timestamps.len()
    }

    pub fn symbol_index(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }

    pub fn get(&self, stock: usize, t: usize) -> f64 {
        self.row(stock)[t]
    }

    pub fn row(&self, stock: usize) -> &[f64] {
        let n = self.num_periods();
        &self.data[stock * n..(stock + 1) * n]
    }

    pub(crate) fn row_mut(&mut self, stock: usize) -> &mut [f64] {
        let n = self.num_periods();
        &mut self.data[stock * n..(stock + 1) * n]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.num_stocks()).map(|i| self.row(i).to_vec()).collect()
    }

    /// All columns.
    pub fn view(&self) -> PanelView<'_> {
        PanelView {
            panel: self,
            first: 0,
            end: self.num_periods(),
        }
    }

    /// Columns `0..=last`: everything observable at time `last`.
    pub fn history(&self, last: usize) -> Result<PanelView<'_>> {
        if last >= self.num_periods() {
            return Err(Error::OutOfRange {
                t: last,
                last: self.num_periods().saturating_sub(1),
            });
        }
        Ok(PanelView {
            panel: self,
            first: 0,
            end: last + 1,
        })
    }
}

/// A contiguous range of visible columns of a [`ReturnsPanel`], indexed by
/// absolute column. Reading outside the range is an error for the
/// evaluators, which is how look-ahead is ruled out.
#[derive(Debug, Clone, Copy)]
pub struct PanelView<'a> {
    panel: &'a ReturnsPanel,
    first: usize,
    end: usize,
}

impl<'a> PanelView<'a> {
    pub fn panel(&self) -> &'a ReturnsPanel {
        self.panel
    }

    pub fn num_stocks(&self) -> usize {
        self.panel.num_stocks()
    }

    /// First visible column.
    pub fn first(&self) -> usize {
        self.first
    }

    /// One past the last visible column.
    pub fn end(&self) -> usize {
        self.end
    }

    pub fn width(&self) -> usize {
        self.end - self.first
    }

    /// Row of `stock`, truncated at the last visible column. Indices below
    /// [`first`](Self::first) are present in the slice but outside the view.
    pub fn row(&self, stock: usize) -> &'a [f64] {
        &self.panel.row(stock)[..self.end]
    }

    pub fn get(&self, stock: usize, t: usize) -> Option<f64> {
        (self.first..self.end)
            .contains(&t)
            .then(|| self.panel.get(stock, t))
    }
}

/// `r[i][t] = log(p[i][t+1] / p[i][t])`.
pub fn compute_log_returns(prices: &PricePanel) -> Result<ReturnsPanel> {
    let n = prices.num_times();
    if n < 2 {
        return Err(Error::Shape(format!("need at least 2 price columns, got {n}")));
    }
    let mut rows = Vec::with_capacity(prices.num_stocks());
    for stock in 0..prices.num_stocks() {
        let row = prices.row(stock);
        if let Some(t) = row.iter().position(|&p| p <= 0.0) {
            return Err(Error::NonPositivePrice {
                stock,
                timestamp: prices.timestamps[t],
                price: row[t],
            });
        }
        rows.push(row.windows(2).map(|w| libm::log(w[1] / w[0])).collect());
    }
    ReturnsPanel::new(
        prices.symbols.clone(),
        prices.timestamps[1..].to_vec(),
        rows,
    )
}

/// Columns `[t - lag - window, t - lag]` (inclusive), the history a model may
/// use when predicting column `t + 1` with an execution lag of `lag`.
pub fn slice_window(panel: &ReturnsPanel, t: usize, window: usize, lag: usize) -> Result<PanelView<'_>> {
    let earliest = window + lag;
    if t < earliest {
        return Err(Error::InsufficientHistory { t, earliest });
    }
    let last = t - lag;
    if last >= panel.num_periods() {
        return Err(Error::OutOfRange {
            t: last,
            last: panel.num_periods().saturating_sub(1),
        });
    }
    Ok(PanelView {
        panel,
        first: last - window,
        end: last + 1,
    })
}
