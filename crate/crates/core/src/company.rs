//! A Company: the Trader population for one target stock.
//!
//! Training interleaves three steps over one window of feature times:
//! educate (least-squares re-weighting of the bottom-quantile Traders),
//! prune-and-generate (replace the bottom quantile with Gaussian-mixture
//! samples fitted to the survivors), and an aggregator fit.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formula::{sample_uniform_trader, HyperRanges, Target, Trader};
use crate::gmm::{generate_traders, GenerationConfig};
use crate::linalg::ridge_least_squares;
use crate::returns::PanelView;

/// Ridge used when the unregularised normal equations are singular.
pub const FALLBACK_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    Mean,
    LinearRegression,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreKind {
    /// `Σ sign(f) · r` over the window.
    CumulativeReturn,
    /// `−mean((f − r)²)` over the window.
    NegativeMse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompanyConfig {
    /// Number of Traders.
    pub population: usize,
    /// Fraction of the population below which Traders are educated/pruned.
    pub quantile: f64,
    /// Prune-and-generate repetitions per training step.
    pub fit_times: usize,
    pub aggregation: Aggregation,
    pub score: ScoreKind,
    pub educate: bool,
    pub prune: bool,
    pub ranges: HyperRanges,
    pub ridge: f64,
    pub generation: GenerationConfig,
    /// Execution lag: a prediction made at `u` is scored on `r[u + 1 + lag]`.
    pub lag: usize,
}

impl Default for CompanyConfig {
    fn default() -> Self {
        Self {
            population: 100,
            quantile: 0.5,
            fit_times: 2,
            aggregation: Aggregation::LinearRegression,
            score: ScoreKind::CumulativeReturn,
            educate: true,
            prune: true,
            ranges: HyperRanges::default(),
            ridge: 0.0,
            generation: GenerationConfig::default(),
            lag: 0,
        }
    }
}

impl CompanyConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.population == 0 {
            return fail("population must be at least 1");
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return fail("quantile must lie in (0, 1)");
        }
        if self.fit_times == 0 {
            return fail("fit_times must be at least 1");
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return fail("ridge must be finite and non-negative");
        }
        if self.generation.components == 0 {
            return fail("mixture needs at least one component");
        }
        if !(self.generation.reg_floor > 0.0) {
            return fail("reg_floor must be positive");
        }
        self.ranges.validate()
    }
}

/// Linear-interpolation percentile at fraction `q` of `values`.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn score_of(kind: ScoreKind, predicted: &[f64], actual: &[f64]) -> f64 {
    match kind {
        ScoreKind::CumulativeReturn => predicted
            .iter()
            .zip(actual)
            .map(|(&p, &r)| crate::formula::sign(p) * r)
            .sum(),
        ScoreKind::NegativeMse => {
            let sse: f64 = predicted.iter().zip(actual).map(|(p, r)| (p - r) * (p - r)).sum();
            -sse / predicted.len().max(1) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EducateReport {
    pub threshold: f64,
    pub educated: Vec<usize>,
    pub ridge_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneRound {
    pub threshold: f64,
    pub survivors: Vec<usize>,
    pub replaced: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PruneReport {
    pub rounds: Vec<PruneRound>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReport {
    pub educate: Option<EducateReport>,
    pub prune: Option<PruneReport>,
    /// Ridge used by the aggregator fit, if one ran.
    pub aggregator_ridge: Option<f64>,
}

/// How often each stock, operator and activation appears across all terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageCensus {
    /// Both operands of a term are counted.
    pub stocks: Vec<usize>,
    pub operators: [usize; 10],
    pub activations: [usize; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Company {
    target: usize,
    num_stocks: usize,
    traders: Vec<Trader>,
    intercept: f64,
    weights: Vec<f64>,
    config: CompanyConfig,
}

impl Company {
    /// Uniformly sampled population with mean aggregation weights.
    pub fn new<R: Rng + ?Sized>(target: usize, num_stocks: usize, config: CompanyConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let traders = (0..config.population)
            .map(|_| sample_uniform_trader(&config.ranges, num_stocks, rng))
            .collect();
        Self::with_traders(target, num_stocks, traders, config)
    }

    pub fn with_traders(target: usize, num_stocks: usize, traders: Vec<Trader>, config: CompanyConfig) -> Result<Self> {
        let n = traders.len();
        let company = Self {
            target,
            num_stocks,
            traders,
            intercept: 0.0,
            weights: vec![1.0 / n.max(1) as f64; n],
            config,
        };
        company.validate()?;
        Ok(company)
    }

    /// Checks every structural invariant; used after deserialising.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.target >= self.num_stocks {
            return Err(Error::InvalidConfig(format!(
                "target {} outside {} stocks",
                self.target, self.num_stocks
            )));
        }
        if self.traders.len() != self.config.population || self.weights.len() != self.traders.len() {
            return Err(Error::InvalidConfig(format!(
                "population {} with {} traders and {} aggregator weights",
                self.config.population,
                self.traders.len(),
                self.weights.len()
            )));
        }
        if !self.intercept.is_finite() || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidConfig("non-finite aggregator weight".into()));
        }
        for trader in &self.traders {
            trader.validate(&self.config.ranges, self.num_stocks)?;
        }
        Ok(())
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn num_stocks(&self) -> usize {
        self.num_stocks
    }

    pub fn traders(&self) -> &[Trader] {
        &self.traders
    }

    pub fn config(&self) -> &CompanyConfig {
        &self.config
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn aggregator_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn set_aggregator(&mut self, intercept: f64, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.traders.len() {
            return Err(Error::InvalidConfig(format!(
                "{} aggregator weights for {} traders",
                weights.len(),
                self.traders.len()
            )));
        }
        self.intercept = intercept;
        self.weights = weights;
        Ok(())
    }

    fn target_spec(&self) -> Target {
        Target::new(self.target).with_lag(self.config.lag)
    }

    fn corr_window(&self) -> usize {
        self.config.ranges.corr_window
    }

    /// Earliest feature time at which every Trader can be evaluated.
    pub fn warmup(&self) -> usize {
        let cw = self.corr_window();
        self.traders
            .iter()
            .map(|t| t.history(cw))
            .fold(self.config.ranges.warmup(), usize::max)
    }

    /// Realised returns the window is scored against.
    pub fn actuals(&self, view: &PanelView<'_>, times: Range<usize>) -> Result<Vec<f64>> {
        self.target_spec().actuals(view, times)
    }

    /// One prediction series per Trader.
    pub fn trader_outputs(&self, view: &PanelView<'_>, times: Range<usize>) -> Result<Vec<Vec<f64>>> {
        self.traders
            .iter()
            .map(|t| t.predictions(view, times.clone(), self.corr_window()))
            .collect()
    }

    fn aggregate(&self, outputs: &[f64]) -> f64 {
        match self.config.aggregation {
            Aggregation::Mean => outputs.iter().sum::<f64>() / outputs.len() as f64,
            Aggregation::LinearRegression => {
                self.intercept + outputs.iter().zip(&self.weights).map(|(o, w)| o * w).sum::<f64>()
            }
        }
    }

    /// Company prediction of `r_target[t + 1 + lag]` from data visible at `t`.
    pub fn predict(&self, view: &PanelView<'_>, t: usize) -> Result<f64> {
        let outputs = self
            .traders
            .iter()
            .map(|tr| tr.predict(view, t, self.corr_window()))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.aggregate(&outputs))
    }

    pub fn predictions(&self, view: &PanelView<'_>, times: Range<usize>) -> Result<Vec<f64>> {
        let outputs = self.trader_outputs(view, times.clone())?;
        Ok((0..times.len())
            .map(|i| {
                let column: Vec<f64> = outputs.iter().map(|o| o[i]).collect();
                self.aggregate(&column)
            })
            .collect())
    }

    pub fn scores(&self, view: &PanelView<'_>, times: Range<usize>) -> Result<Vec<f64>> {
        let actual = self.actuals(view, times.clone())?;
        let outputs = self.trader_outputs(view, times)?;
        Ok(outputs.iter().map(|o| score_of(self.config.score, o, &actual)).collect())
    }

    /// Re-fits the term weights of every Trader scoring at or below the
    /// bottom-quantile threshold. Formula structure is left untouched.
    pub fn educate(&mut self, view: &PanelView<'_>, times: Range<usize>) -> Result<EducateReport> {
        if times.is_empty() {
            return Err(Error::Empty("education window has no rows"));
        }
        let scores = self.scores(view, times.clone())?;
        let threshold = percentile(&scores, self.config.quantile);
        let actual = self.actuals(view, times.clone())?;
        let cw = self.corr_window();
        let mut report = EducateReport {
            threshold,
            ..EducateReport::default()
        };
        for (n, score) in scores.iter().enumerate() {
            if *score > threshold {
                continue;
            }
            let trader = &mut self.traders[n];
            let columns = trader
                .terms
                .iter()
                .map(|term| term.series(view, times.clone(), cw))
                .collect::<Result<Vec<_>>>()?;
            let fit = ridge_least_squares(&columns, &actual, self.config.ridge, FALLBACK_RIDGE)?;
            if fit.ridge != self.config.ridge {
                report.ridge_fallbacks += 1;
            }
            trader.set_weights(&fit.coefficients);
            report.educated.push(n);
        }
        if report.ridge_fallbacks > 0 {
            log::debug!(
                "educate: singular normal equations for {} traders, used a fallback ridge",
                report.ridge_fallbacks
            );
        }
        Ok(report)
    }

    /// Replaces the Traders scoring below the bottom-quantile threshold with
    /// mixture samples fitted to the rest, `fit_times` times. Replacements
    /// take the slots of the pruned Traders.
    pub fn prune_and_generate<R: Rng + ?Sized>(
        &mut self,
        view: &PanelView<'_>,
        times: Range<usize>,
        rng: &mut R,
    ) -> Result<PruneReport> {
        let mut report = PruneReport::default();
        for _ in 0..self.config.fit_times {
            let scores = self.scores(view, times.clone())?;
            let threshold = percentile(&scores, self.config.quantile);
            let (survivors, replaced): (Vec<usize>, Vec<usize>) =
                (0..scores.len()).partition(|&n| scores[n] >= threshold);
            if !replaced.is_empty() {
                let pool: Vec<Trader> = survivors.iter().map(|&n| self.traders[n].clone()).collect();
                let fresh = generate_traders(
                    &pool,
                    replaced.len(),
                    &self.config.generation,
                    &self.config.ranges,
                    self.num_stocks,
                    rng,
                )?;
                for (&slot, trader) in replaced.iter().zip(fresh) {
                    self.traders[slot] = trader;
                }
            } else {
                log::debug!("prune: all {} traders tie at {threshold}, nothing replaced", scores.len());
            }
            report.rounds.push(PruneRound {
                threshold,
                survivors,
                replaced,
            });
        }
        Ok(report)
    }

    /// Least-squares fit of intercept and per-Trader weights (linear
    /// aggregation only). Returns the ridge used, or `None` for mean
    /// aggregation.
    pub fn fit_aggregator(&mut self, view: &PanelView<'_>, times: Range<usize>) -> Result<Option<f64>> {
        if self.config.aggregation == Aggregation::Mean {
            return Ok(None);
        }
        if times.is_empty() {
            return Err(Error::Empty("aggregator window has no rows"));
        }
        let actual = self.actuals(view, times.clone())?;
        let mut outputs = self.trader_outputs(view, times)?;
        let rows = actual.len() as f64;
        let y_mean = actual.iter().sum::<f64>() / rows;
        let y: Vec<f64> = actual.iter().map(|v| v - y_mean).collect();
        let mut x_means = Vec::with_capacity(outputs.len());
        for column in &mut outputs {
            let m = column.iter().sum::<f64>() / rows;
            column.iter_mut().for_each(|v| *v -= m);
            x_means.push(m);
        }
        let fit = ridge_least_squares(&outputs, &y, self.config.ridge, FALLBACK_RIDGE)?;
        if fit.ridge != self.config.ridge {
            log::debug!("aggregator: singular normal equations, used ridge {}", fit.ridge);
        }
        self.intercept = y_mean - fit.coefficients.iter().zip(&x_means).map(|(w, m)| w * m).sum::<f64>();
        self.weights = fit.coefficients;
        Ok(Some(fit.ridge))
    }

    /// Educate, then prune-and-generate, then refit the aggregator, each
    /// step only if enabled.
    pub fn train_step<R: Rng + ?Sized>(&mut self, view: &PanelView<'_>, times: Range<usize>, rng: &mut R) -> Result<StepReport> {
        let educate = if self.config.educate {
            Some(self.educate(view, times.clone())?)
        } else {
            None
        };
        let prune = if self.config.prune {
            Some(self.prune_and_generate(view, times.clone(), rng)?)
        } else {
            None
        };
        let aggregator_ridge = self.fit_aggregator(view, times)?;
        Ok(StepReport {
            educate,
            prune,
            aggregator_ridge,
        })
    }

    pub fn census(&self) -> UsageCensus {
        let mut census = UsageCensus {
            stocks: vec![0; self.num_stocks],
            operators: [0; 10],
            activations: [0; 5],
        };
        for term in self.traders.iter().flat_map(|t| &t.terms) {
            census.stocks[term.lhs_stock] += 1;
            census.stocks[term.rhs_stock] += 1;
            census.operators[term.op.index()] += 1;
            census.activations[term.activation.index()] += 1;
        }
        census
    }
}
