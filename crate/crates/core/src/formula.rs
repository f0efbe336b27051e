//! Trader formulae: `Σ_j w_j · A_j(O_j(r_P[t−D], r_Q[t−F]))`.

mod text;

pub use text::{format_trader, parse_trader, FormatStyle};

use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::returns::PanelView;

/// Upper bound applied to the argument of the `exp` activation.
pub const EXP_CLAMP: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Operator {
    Add,
    Sub,
    Mul,
    /// `(x, y) ↦ x`
    ProjectX,
    /// `(x, y) ↦ y`
    ProjectY,
    Max,
    Min,
    /// `sign(x − y)`
    Greater,
    /// `sign(y − x)`
    Less,
    /// Pearson correlation of the two trailing series.
    Corr,
}

impl Operator {
    pub const ALL: [Operator; 10] = [
        Operator::Add,
        Operator::Sub,
        Operator::Mul,
        Operator::ProjectX,
        Operator::ProjectY,
        Operator::Max,
        Operator::Min,
        Operator::Greater,
        Operator::Less,
        Operator::Corr,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Operator::Add => "add",
            Operator::Sub => "sub",
            Operator::Mul => "mul",
            Operator::ProjectX => "project-x",
            Operator::ProjectY => "project-y",
            Operator::Max => "max",
            Operator::Min => "min",
            Operator::Greater => "greater",
            Operator::Less => "less",
            Operator::Corr => "corr",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|op| op.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Identity,
    Tanh,
    Exp,
    Sign,
    Relu,
}

impl Activation {
    pub const ALL: [Activation; 5] = [
        Activation::Identity,
        Activation::Tanh,
        Activation::Exp,
        Activation::Sign,
        Activation::Relu,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Exp => "exp",
            Activation::Sign => "sign",
            Activation::Relu => "relu",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }
}

/// `sign(0) = 0`; NaN maps to 0 as well.
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn eval_activation(activation: Activation, x: f64) -> f64 {
    match activation {
        Activation::Identity => x,
        Activation::Tanh => libm::tanh(x),
        Activation::Exp => libm::exp(x.min(EXP_CLAMP)),
        Activation::Sign => sign(x),
        Activation::Relu => x.max(0.0),
    }
}

/// Pointwise operators. Returns `None` for [`Operator::Corr`], which needs
/// the trailing series rather than two scalars.
pub fn eval_binary_op(op: Operator, x: f64, y: f64) -> Option<f64> {
    Some(match op {
        Operator::Add => x + y,
        Operator::Sub => x - y,
        Operator::Mul => x * y,
        Operator::ProjectX => x,
        Operator::ProjectY => y,
        Operator::Max => x.max(y),
        Operator::Min => x.min(y),
        Operator::Greater => sign(x - y),
        Operator::Less => sign(y - x),
        Operator::Corr => return None,
    })
}

/// Pearson correlation; 0 when either series is constant.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    let constant = |s: &[f64]| s.iter().all(|&v| v == s[0]);
    if xs.is_empty() || constant(xs) || constant(ys) {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    (sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0)
}

fn check_time(view: &PanelView<'_>, t: usize, history: usize) -> Result<()> {
    if t >= view.end() {
        return Err(Error::OutOfRange {
            t,
            last: view.end().saturating_sub(1),
        });
    }
    let earliest = view.first() + history;
    if t < earliest {
        return Err(Error::InsufficientHistory { t, earliest });
    }
    Ok(())
}

/// One weighted formula term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub lhs_stock: usize,
    pub rhs_stock: usize,
    pub lhs_delay: usize,
    pub rhs_delay: usize,
    pub op: Operator,
    pub activation: Activation,
    pub weight: f64,
}

impl Term {
    /// Number of columns before `t` the term reads.
    pub fn history(&self, corr_window: usize) -> usize {
        let delay = self.lhs_delay.max(self.rhs_delay);
        if self.op == Operator::Corr {
            delay + corr_window.saturating_sub(1)
        } else {
            delay
        }
    }

    fn value_unchecked(&self, view: &PanelView<'_>, t: usize, corr_window: usize) -> f64 {
        let lhs = view.row(self.lhs_stock);
        let rhs = view.row(self.rhs_stock);
        let inner = match eval_binary_op(self.op, lhs[t - self.lhs_delay], rhs[t - self.rhs_delay]) {
            Some(v) => v,
            None => {
                let (a, b) = (t - self.lhs_delay, t - self.rhs_delay);
                pearson(
                    &lhs[a + 1 - corr_window..=a],
                    &rhs[b + 1 - corr_window..=b],
                )
            }
        };
        eval_activation(self.activation, inner)
    }

    /// Unweighted value `A(O(r_P[t−D], r_Q[t−F]))`.
    pub fn value(&self, view: &PanelView<'_>, t: usize, corr_window: usize) -> Result<f64> {
        check_time(view, t, self.history(corr_window))?;
        Ok(self.value_unchecked(view, t, corr_window))
    }

    /// Unweighted values over `times`.
    pub fn series(&self, view: &PanelView<'_>, times: Range<usize>, corr_window: usize) -> Result<Vec<f64>> {
        if times.is_empty() {
            return Ok(Vec::new());
        }
        check_time(view, times.start, self.history(corr_window))?;
        check_time(view, times.end - 1, 0)?;
        Ok(times.map(|t| self.value_unchecked(view, t, corr_window)).collect())
    }

    pub fn validate(&self, ranges: &HyperRanges, num_stocks: usize) -> Result<()> {
        if self.lhs_stock >= num_stocks || self.rhs_stock >= num_stocks {
            return Err(Error::InvalidConfig(format!(
                "term references stock {} but the panel has {num_stocks}",
                self.lhs_stock.max(self.rhs_stock)
            )));
        }
        if self.lhs_delay > ranges.max_delay || self.rhs_delay > ranges.max_delay {
            return Err(Error::InvalidConfig(format!(
                "term delay {} exceeds max_delay {}",
                self.lhs_delay.max(self.rhs_delay),
                ranges.max_delay
            )));
        }
        if !ranges.operators.contains(&self.op) {
            return Err(Error::InvalidConfig(format!("operator {} not allowed", self.op.name())));
        }
        if !ranges.activations.contains(&self.activation) {
            return Err(Error::InvalidConfig(format!(
                "activation {} not allowed",
                self.activation.name()
            )));
        }
        if !self.weight.is_finite() {
            return Err(Error::InvalidConfig(format!("non-finite weight {}", self.weight)));
        }
        Ok(())
    }
}

/// A predictor: the weighted sum of its terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trader {
    pub terms: Vec<Term>,
}

impl Trader {
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Empty("trader needs at least one term"));
        }
        Ok(Self { terms })
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn history(&self, corr_window: usize) -> usize {
        self.terms.iter().map(|t| t.history(corr_window)).max().unwrap_or(0)
    }

    pub fn weights(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.weight).collect()
    }

    pub fn set_weights(&mut self, weights: &[f64]) {
        assert_eq!(weights.len(), self.terms.len());
        for (term, &w) in self.terms.iter_mut().zip(weights) {
            term.weight = w;
        }
    }

    pub fn predict(&self, view: &PanelView<'_>, t: usize, corr_window: usize) -> Result<f64> {
        check_time(view, t, self.history(corr_window))?;
        Ok(self
            .terms
            .iter()
            .map(|term| term.weight * term.value_unchecked(view, t, corr_window))
            .sum())
    }

    pub fn predictions(&self, view: &PanelView<'_>, times: Range<usize>, corr_window: usize) -> Result<Vec<f64>> {
        let mut out = alloc::vec![0.0; times.len()];
        for term in &self.terms {
            let values = term.series(view, times.clone(), corr_window)?;
            for (o, v) in out.iter_mut().zip(values) {
                *o += term.weight * v;
            }
        }
        Ok(out)
    }

    pub fn validate(&self, ranges: &HyperRanges, num_stocks: usize) -> Result<()> {
        if self.terms.is_empty() || self.terms.len() > ranges.max_terms {
            return Err(Error::InvalidConfig(format!(
                "trader has {} terms, allowed 1..={}",
                self.terms.len(),
                ranges.max_terms
            )));
        }
        self.terms.iter().try_for_each(|t| t.validate(ranges, num_stocks))
    }
}

/// The return a prediction made at feature time `u` is scored against:
/// `r[stock][u + 1 + lag]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Target {
    pub stock: usize,
    #[serde(default)]
    pub lag: usize,
}

impl Target {
    pub fn new(stock: usize) -> Self {
        Self { stock, lag: 0 }
    }

    pub fn with_lag(self, lag: usize) -> Self {
        Self { lag, ..self }
    }

    /// Column predicted from feature time `u`.
    pub fn column(&self, u: usize) -> usize {
        u + 1 + self.lag
    }

    pub fn actuals(&self, view: &PanelView<'_>, times: Range<usize>) -> Result<Vec<f64>> {
        if times.is_empty() {
            return Ok(Vec::new());
        }
        let last = self.column(times.end - 1);
        check_time(view, last, 0)?;
        let row = view.row(self.stock);
        Ok(times.map(|u| row[self.column(u)]).collect())
    }
}

/// `Σ_u sign(f(u)) · r_target[u + 1 + lag]` over `times`.
pub fn trader_cumulative_return(
    trader: &Trader,
    view: &PanelView<'_>,
    target: Target,
    times: Range<usize>,
    corr_window: usize,
) -> Result<f64> {
    let predicted = trader.predictions(view, times.clone(), corr_window)?;
    let actual = target.actuals(view, times)?;
    Ok(predicted
        .iter()
        .zip(&actual)
        .map(|(&p, &r)| sign(p) * r)
        .sum())
}

/// Search space of Trader formulae.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperRanges {
    pub max_terms: usize,
    pub max_delay: usize,
    pub operators: Vec<Operator>,
    pub activations: Vec<Activation>,
    pub weight_init: (f64, f64),
    pub corr_window: usize,
}

impl Default for HyperRanges {
    fn default() -> Self {
        Self {
            max_terms: 10,
            max_delay: 10,
            operators: Operator::ALL.to_vec(),
            activations: Activation::ALL.to_vec(),
            weight_init: (-1.0, 1.0),
            corr_window: 10,
        }
    }
}

impl HyperRanges {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.max_terms == 0 {
            return fail("max_terms must be at least 1");
        }
        if self.operators.is_empty() {
            return fail("operator set is empty");
        }
        if self.activations.is_empty() {
            return fail("activation set is empty");
        }
        if self.corr_window == 0 {
            return fail("corr_window must be at least 1");
        }
        let (lo, hi) = self.weight_init;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return fail("weight_init must be a finite interval lo <= hi");
        }
        Ok(())
    }

    /// History any Trader inside these ranges may read before its
    /// evaluation time.
    pub fn warmup(&self) -> usize {
        if self.operators.contains(&Operator::Corr) {
            self.max_delay + self.corr_window - 1
        } else {
            self.max_delay
        }
    }
}

pub fn sample_uniform_trader<R: Rng + ?Sized>(ranges: &HyperRanges, num_stocks: usize, rng: &mut R) -> Trader {
    let num_terms = rng.random_range(1..=ranges.max_terms);
    let (lo, hi) = ranges.weight_init;
    let terms = (0..num_terms)
        .map(|_| Term {
            lhs_stock: rng.random_range(0..num_stocks),
            rhs_stock: rng.random_range(0..num_stocks),
            lhs_delay: rng.random_range(0..=ranges.max_delay),
            rhs_delay: rng.random_range(0..=ranges.max_delay),
            op: ranges.operators[rng.random_range(0..ranges.operators.len())],
            activation: ranges.activations[rng.random_range(0..ranges.activations.len())],
            weight: if hi > lo { rng.random_range(lo..hi) } else { lo },
        })
        .collect();
    Trader { terms }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::returns::ReturnsPanel;
    use crate::rng::seeded;
    use alloc::vec;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn term(p: usize, q: usize, d: usize, f: usize, op: Operator, act: Activation, w: f64) -> Term {
        Term {
            lhs_stock: p,
            rhs_stock: q,
            lhs_delay: d,
            rhs_delay: f,
            op,
            activation: act,
            weight: w,
        }
    }

    fn random_panel(stocks: usize, periods: usize, seed: u64) -> ReturnsPanel {
        let mut rng = seeded(seed);
        let rows = (0..stocks)
            .map(|_| (0..periods).map(|_| rng.random_range(-0.05..0.05)).collect())
            .collect();
        ReturnsPanel::from_rows(rows).unwrap()
    }

    #[test]
    fn activations() {
        assert_eq!(eval_activation(Activation::Relu, -0.5), 0.0);
        assert_eq!(eval_activation(Activation::Relu, 0.5), 0.5);
        assert_eq!(eval_activation(Activation::Tanh, 0.0), 0.0);
        assert_abs_diff_eq!(eval_activation(Activation::Exp, 1.0), core::f64::consts::E, epsilon = 1e-15);
        assert_eq!(eval_activation(Activation::Sign, 0.0), 0.0);
        assert_eq!(eval_activation(Activation::Exp, 1e6), libm::exp(EXP_CLAMP));
    }

    #[test]
    fn binary_ops() {
        assert_eq!(eval_binary_op(Operator::Max, 0.5, -0.3), Some(0.5));
        assert_eq!(eval_binary_op(Operator::Greater, 0.5, -0.3), Some(1.0));
        assert_eq!(eval_binary_op(Operator::Greater, 0.2, 0.2), Some(0.0));
        assert_eq!(eval_binary_op(Operator::Less, 0.5, -0.3), Some(-1.0));
        assert_eq!(eval_binary_op(Operator::ProjectY, 0.5, -0.3), Some(-0.3));
        assert_eq!(eval_binary_op(Operator::Corr, 0.5, -0.3), None);
    }

    #[test]
    fn projection_identity_reads_the_raw_return() {
        let panel = random_panel(3, 20, 1);
        let t = term(2, 0, 0, 5, Operator::ProjectX, Activation::Identity, 1.0);
        assert_eq!(t.value(&panel.view(), 12, 10).unwrap(), panel.get(2, 12));
    }

    #[test]
    fn greater_term_from_extracted_formula() {
        // −2.28 · (SHP_t > AHT_{t−3}) with SHP_t = 0.004, AHT_{t−3} = −0.002
        let mut rows = vec![vec![0.0; 8]; 2];
        rows[0][6] = 0.004;
        rows[1][3] = -0.002;
        let panel = ReturnsPanel::from_rows(rows).unwrap();
        let trader = Trader::new(vec![term(0, 1, 0, 3, Operator::Greater, Activation::Identity, -2.28)]).unwrap();
        assert_eq!(trader.predict(&panel.view(), 6, 10).unwrap(), -2.28);
    }

    #[test]
    fn self_correlation_is_one() {
        let panel = random_panel(2, 40, 2);
        let t = term(1, 1, 2, 2, Operator::Corr, Activation::Identity, 1.0);
        assert_abs_diff_eq!(t.value(&panel.view(), 30, 10).unwrap(), 1.0, epsilon = 1e-12);
        let t = Term { activation: Activation::Tanh, ..t };
        assert_abs_diff_eq!(t.value(&panel.view(), 30, 10).unwrap(), libm::tanh(1.0), epsilon = 1e-12);
    }

    #[test]
    fn correlation_with_constant_series_is_zero() {
        let mut rows = vec![vec![0.01; 30]; 2];
        rows[1] = (0..30).map(|i| i as f64 * 0.001).collect();
        let panel = ReturnsPanel::from_rows(rows).unwrap();
        let t = term(0, 1, 0, 0, Operator::Corr, Activation::Identity, 1.0);
        assert_eq!(t.value(&panel.view(), 20, 10).unwrap(), 0.0);
    }

    #[test]
    fn corr_matches_direct_pearson() {
        let panel = random_panel(2, 60, 3);
        let t = term(0, 1, 1, 4, Operator::Corr, Activation::Identity, 1.0);
        let (at, cw) = (40, 7);
        let xs: Vec<f64> = (0..cw).map(|k| panel.get(0, at - 1 - k)).collect();
        let ys: Vec<f64> = (0..cw).map(|k| panel.get(1, at - 4 - k)).collect();
        let n = cw as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let vx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let vy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
        let expected = cov / (vx * vy).sqrt();
        assert_abs_diff_eq!(t.value(&panel.view(), at, cw).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn insufficient_history_reports_earliest_time() {
        let panel = random_panel(2, 40, 4);
        let t = term(0, 1, 3, 1, Operator::Corr, Activation::Identity, 1.0);
        assert_eq!(
            t.value(&panel.view(), 5, 10).unwrap_err(),
            Error::InsufficientHistory { t: 5, earliest: 12 }
        );
        let view = panel.history(20).unwrap();
        assert!(matches!(t.value(&view, 21, 10), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn trader_linearity_examples() {
        let panel = random_panel(2, 20, 5);
        let mut trader = Trader::new(vec![
            term(0, 1, 0, 1, Operator::Add, Activation::Tanh, 0.0),
            term(1, 1, 2, 0, Operator::Max, Activation::Sign, 0.0),
        ])
        .unwrap();
        assert_eq!(trader.predict(&panel.view(), 10, 10).unwrap(), 0.0);

        trader.terms.truncate(1);
        trader.terms[0].weight = 2.0;
        let v = trader.terms[0].value(&panel.view(), 10, 10).unwrap();
        assert_abs_diff_eq!(trader.predict(&panel.view(), 10, 10).unwrap(), 2.0 * v, epsilon = 1e-15);
    }

    #[test]
    fn three_term_trader_is_hand_evaluated_sum() {
        // 4.919·ReLU(AHT_{t−3}) + 5.859·sign(max(WEIR_{t−2}, WTB_{t−5})) − 1.07·(PFC_{t−1} > DGE_{t−3})
        let (aht, weir, wtb, pfc, dge) = (0, 1, 2, 3, 4);
        let mut rows = vec![vec![0.0; 12]; 5];
        let t = 9;
        rows[aht][t - 3] = 0.012;
        rows[weir][t - 2] = -0.03;
        rows[wtb][t - 5] = -0.01;
        rows[pfc][t - 1] = -0.002;
        rows[dge][t - 3] = 0.001;
        let panel = ReturnsPanel::from_rows(rows).unwrap();
        let trader = Trader::new(vec![
            term(aht, aht, 3, 3, Operator::ProjectX, Activation::Relu, 4.919),
            term(weir, wtb, 2, 5, Operator::Max, Activation::Sign, 5.859),
            term(pfc, dge, 1, 3, Operator::Greater, Activation::Identity, -1.07),
        ])
        .unwrap();
        // ReLU(0.012) = 0.012; max(−0.03, −0.01) = −0.01 → sign −1; (−0.002 > 0.001) → −1
        let expected = 4.919 * 0.012 + 5.859 * -1.0 + -1.07 * -1.0;
        assert_abs_diff_eq!(trader.predict(&panel.view(), t, 10).unwrap(), expected, epsilon = 1e-15);
    }

    fn fixed_prediction_panel(preds: &[f64], actual: &[f64]) -> (ReturnsPanel, Trader) {
        // stock 0 carries predictions at t, stock 1 the target at t + 1
        let n = preds.len() + 1;
        let mut rows = vec![vec![0.0; n]; 2];
        rows[0][..preds.len()].copy_from_slice(preds);
        rows[1][1..].copy_from_slice(actual);
        let trader = Trader::new(vec![term(0, 0, 0, 0, Operator::ProjectX, Activation::Identity, 1.0)]).unwrap();
        (ReturnsPanel::from_rows(rows).unwrap(), trader)
    }

    #[test]
    fn cumulative_return_examples() {
        let (panel, trader) = fixed_prediction_panel(&[0.5, -1.0, 2.0], &[0.1, -0.2, 0.3]);
        let c = trader_cumulative_return(&trader, &panel.view(), Target::new(1), 0..3, 10).unwrap();
        assert_abs_diff_eq!(c, 0.6, epsilon = 1e-15);

        let (panel, trader) = fixed_prediction_panel(&[0.0, 0.0, 0.0], &[0.1, -0.2, 0.3]);
        assert_eq!(trader_cumulative_return(&trader, &panel.view(), Target::new(1), 0..3, 10).unwrap(), 0.0);

        let (panel, trader) = fixed_prediction_panel(&[0.2, -0.1, 0.3], &[0.1, -0.2, -0.4]);
        let c = trader_cumulative_return(&trader, &panel.view(), Target::new(1), 0..3, 10).unwrap();
        assert_abs_diff_eq!(c, 0.1 + 0.2 - 0.4, epsilon = 1e-15);
    }

    #[test]
    fn lagged_target_skips_columns() {
        let (panel, trader) = fixed_prediction_panel(&[1.0, 1.0, 1.0, 1.0], &[0.1, -0.2, 0.3, 0.4]);
        let target = Target::new(1).with_lag(1);
        let c = trader_cumulative_return(&trader, &panel.view(), target, 0..3, 10).unwrap();
        assert_abs_diff_eq!(c, -0.2 + 0.3 + 0.4, epsilon = 1e-15);
        assert!(trader_cumulative_return(&trader, &panel.view(), target, 0..4, 10).is_err());
    }

    #[test]
    fn degenerate_ranges_give_the_unique_trader() {
        let ranges = HyperRanges {
            max_terms: 1,
            max_delay: 0,
            operators: vec![Operator::Min],
            activations: vec![Activation::Sign],
            weight_init: (0.3, 0.3),
            corr_window: 10,
        };
        let trader = sample_uniform_trader(&ranges, 1, &mut seeded(9));
        assert_eq!(trader, Trader::new(vec![term(0, 0, 0, 0, Operator::Min, Activation::Sign, 0.3)]).unwrap());
    }

    #[test]
    fn sampling_is_deterministic_and_valid() {
        let ranges = HyperRanges::default();
        let a = sample_uniform_trader(&ranges, 7, &mut seeded(3));
        let b = sample_uniform_trader(&ranges, 7, &mut seeded(3));
        assert_eq!(a, b);
        let mut rng = seeded(4);
        for _ in 0..200 {
            sample_uniform_trader(&ranges, 7, &mut rng).validate(&ranges, 7).unwrap();
        }
    }

    #[test]
    fn operator_frequencies_are_uniform() {
        let ranges = HyperRanges::default();
        let mut rng = seeded(11);
        let mut counts = [0usize; 10];
        let mut total = 0usize;
        while total < 10_000 {
            for t in sample_uniform_trader(&ranges, 5, &mut rng).terms {
                counts[t.op.index()] += 1;
                total += 1;
            }
        }
        let p = 0.1;
        let sd = (total as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - total as f64 * p).abs() < 5.0 * sd, "{counts:?}");
        }
    }

    fn arb_term(stocks: usize) -> impl Strategy<Value = Term> {
        (
            0..stocks,
            0..stocks,
            0usize..=10,
            0usize..=10,
            0usize..10,
            0usize..5,
            -3.0f64..3.0,
        )
            .prop_map(|(p, q, d, f, o, a, w)| term(p, q, d, f, Operator::ALL[o], Activation::ALL[a], w))
    }

    proptest! {
        #[test]
        fn no_lookahead(terms in prop::collection::vec(arb_term(4), 1..6), seed in 0u64..1000, t in 19usize..40, junk in -1.0f64..1.0) {
            let trader = Trader::new(terms).unwrap();
            let panel = random_panel(4, 50, seed);
            let before = trader.predict(&panel.view(), t, 10).unwrap();
            let mut rows = panel.to_rows();
            for row in &mut rows {
                for v in &mut row[t + 1..] {
                    *v = junk;
                }
            }
            let altered = ReturnsPanel::from_rows(rows).unwrap();
            prop_assert_eq!(before.to_bits(), trader.predict(&altered.view(), t, 10).unwrap().to_bits());
            prop_assert_eq!(before.to_bits(), trader.predict(&altered.history(t).unwrap(), t, 10).unwrap().to_bits());
        }

        #[test]
        fn linear_in_weights(terms in prop::collection::vec(arb_term(3), 1..6), a in -5.0f64..5.0, seed in 0u64..100) {
            let panel = random_panel(3, 40, seed);
            let trader = Trader::new(terms).unwrap();
            let mut scaled = trader.clone();
            scaled.set_weights(&trader.weights().iter().map(|w| a * w).collect::<Vec<_>>());
            let base = trader.predict(&panel.view(), 30, 10).unwrap();
            let s = scaled.predict(&panel.view(), 30, 10).unwrap();
            prop_assert!((s - a * base).abs() <= 1e-9 * (1.0 + base.abs() * a.abs()));
        }

        #[test]
        fn positive_rescaling_preserves_objective(terms in prop::collection::vec(arb_term(3), 1..6), c in 0.01f64..100.0, seed in 0u64..100) {
            let panel = random_panel(3, 60, seed);
            let trader = Trader::new(terms).unwrap();
            let mut scaled = trader.clone();
            scaled.set_weights(&trader.weights().iter().map(|w| c * w).collect::<Vec<_>>());
            let series_a = trader.predictions(&panel.view(), 20..58, 10).unwrap();
            let series_b = scaled.predictions(&panel.view(), 20..58, 10).unwrap();
            // a sign flip can only come from rounding when the prediction is ~0
            let stable = series_a.iter().zip(&series_b).all(|(a, b)| sign(*a) == sign(*b));
            prop_assume!(stable);
            let ra = trader_cumulative_return(&trader, &panel.view(), Target::new(0), 20..58, 10).unwrap();
            let rb = trader_cumulative_return(&scaled, &panel.view(), Target::new(0), 20..58, 10).unwrap();
            prop_assert_eq!(ra, rb);
        }

        #[test]
        fn operators_are_closed(x in -1.0f64..1.0, y in -1.0f64..1.0, o in 0usize..9, a in 0usize..5) {
            let v = eval_activation(Activation::ALL[a], eval_binary_op(Operator::ALL[o], x, y).unwrap());
            prop_assert!(v.is_finite() && v.abs() <= libm::exp(EXP_CLAMP));
        }
    }
}
