//! Synthetic return panels with a planted ground-truth formula.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formula::{Target, Trader};
use crate::returns::ReturnsPanel;
use crate::rng::seeded;

/// First synthetic timestamp (2000-01-01T00:00:00Z), one day apart.
pub const SYNTHETIC_EPOCH: i64 = 946_684_800;
pub const SYNTHETIC_SPACING: i64 = 86_400;

/// Switch to a different ground truth from column `at` onwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeShift {
    pub at: usize,
    pub ground_truth: Trader,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedAlphaSpec {
    pub num_stocks: usize,
    pub num_periods: usize,
    pub target_stock: usize,
    pub ground_truth: Trader,
    pub signal_scale: f64,
    pub noise_scale: f64,
    /// Standard deviation of the i.i.d. returns the formula reads.
    #[serde(default = "default_background")]
    pub background_scale: f64,
    #[serde(default = "default_corr_window")]
    pub corr_window: usize,
    pub seed: u64,
    #[serde(default)]
    pub shift: Option<RegimeShift>,
}

fn default_background() -> f64 {
    0.01
}

fn default_corr_window() -> usize {
    10
}

/// A generated panel plus the planted formulas rescaled so that, without
/// noise, they reproduce the target column exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedPanel {
    pub panel: ReturnsPanel,
    pub planted: Trader,
    pub shifted: Option<Trader>,
}

impl PlantedAlphaSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_stocks == 0 || self.num_periods < 2 {
            return fail(format!(
                "synthetic panel needs at least one stock and two periods, got {}×{}",
                self.num_stocks, self.num_periods
            ));
        }
        if self.target_stock >= self.num_stocks {
            return fail(format!("target stock {} outside {} stocks", self.target_stock, self.num_stocks));
        }
        if !(self.signal_scale > 0.0 && self.signal_scale.is_finite()) {
            return fail(format!("signal_scale must be positive, got {}", self.signal_scale));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return fail(format!("noise_scale must be non-negative, got {}", self.noise_scale));
        }
        if !(self.background_scale > 0.0 && self.background_scale.is_finite()) {
            return fail(format!("background_scale must be positive, got {}", self.background_scale));
        }
        if self.corr_window == 0 {
            return fail("corr_window must be at least 1".into());
        }
        let mut truths = alloc::vec![&self.ground_truth];
        if let Some(shift) = &self.shift {
            if shift.at == 0 || shift.at >= self.num_periods {
                return fail(format!("regime shift at {} outside 1..{}", shift.at, self.num_periods));
            }
            truths.push(&shift.ground_truth);
        }
        for truth in truths {
            if truth.terms.is_empty() {
                return Err(Error::Empty("ground truth needs at least one term"));
            }
            for term in &truth.terms {
                if term.lhs_stock.max(term.rhs_stock) >= self.num_stocks {
                    return fail(format!(
                        "ground truth references stock {} but the panel has {}",
                        term.lhs_stock.max(term.rhs_stock),
                        self.num_stocks
                    ));
                }
                if !term.weight.is_finite() {
                    return fail("ground truth has a non-finite weight".into());
                }
            }
            let history = truth.history(self.corr_window);
            if history + 1 >= self.num_periods {
                return fail(format!(
                    "ground truth reads {history} periods back but the panel has {}",
                    self.num_periods
                ));
            }
        }
        Ok(())
    }
}

fn rms(values: &[f64]) -> f64 {
    libm::sqrt(values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64)
}

fn rescaled(truth: &Trader, factor: f64) -> Trader {
    let mut out = truth.clone();
    let weights: Vec<f64> = out.weights().iter().map(|w| w * factor).collect();
    out.set_weights(&weights);
    out
}

/// Draws background returns, then overwrites the target column `t + 1`
/// with the planted formula evaluated at `t` (rescaled to RMS
/// `signal_scale` over the background panel) plus Gaussian noise.
/// Columns the formula cannot reach keep their background value.
pub fn generate_synthetic_panel(spec: &PlantedAlphaSpec) -> Result<PlantedPanel> {
    spec.validate()?;
    let (s, n, cw) = (spec.num_stocks, spec.num_periods, spec.corr_window);
    let mut rng = seeded(spec.seed);
    let background = Normal::new(0.0, spec.background_scale).expect("validated scale");
    let rows: Vec<Vec<f64>> = (0..s)
        .map(|_| (0..n).map(|_| background.sample(&mut rng)).collect())
        .collect();
    let symbols = (0..s).map(|i| format!("S{i}")).collect();
    let timestamps = (0..n as i64).map(|t| SYNTHETIC_EPOCH + SYNTHETIC_SPACING * t).collect();
    let mut panel = ReturnsPanel::new(symbols, timestamps, rows)?;

    let scale_for = |truth: &Trader, panel: &ReturnsPanel| -> Result<Trader> {
        let start = truth.history(cw);
        let raw = truth.predictions(&panel.view(), start..n - 1, cw)?;
        let norm = rms(&raw);
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::InvalidConfig("ground truth is identically zero on the background panel".into()));
        }
        Ok(rescaled(truth, spec.signal_scale / norm))
    };
    let planted = scale_for(&spec.ground_truth, &panel)?;
    let shifted = spec
        .shift
        .as_ref()
        .map(|shift| scale_for(&shift.ground_truth, &panel))
        .transpose()?;

    let noise = Normal::new(0.0, spec.noise_scale).expect("validated scale");
    let target = Target::new(spec.target_stock);
    for t in 0..n - 1 {
        let column = target.column(t);
        let truth = match (&spec.shift, &shifted) {
            (Some(shift), Some(after)) if column >= shift.at => after,
            _ => &planted,
        };
        if t < truth.history(cw) {
            continue;
        }
        let signal = truth.predict(&panel.view(), t, cw)?;
        let eps = if spec.noise_scale > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        panel.row_mut(spec.target_stock)[column] = signal + eps;
    }
    Ok(PlantedPanel { panel, planted, shifted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{Activation, Operator, Term};
    use approx::assert_relative_eq;

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

    fn spec(truth: Trader, noise: f64, seed: u64) -> PlantedAlphaSpec {
        PlantedAlphaSpec {
            num_stocks: 10,
            num_periods: 500,
            target_stock: 0,
            ground_truth: truth,
            signal_scale: 0.01,
            noise_scale: noise,
            background_scale: 0.01,
            corr_window: 10,
            seed,
            shift: None,
        }
    }

    fn nonlinear() -> Trader {
        Trader::new(alloc::vec![term(3, 7, 0, 2, Operator::Sub, Activation::Tanh, 1.0)]).unwrap()
    }

    #[test]
    fn noiseless_target_is_scaled_lagged_column() {
        let truth = Trader::new(alloc::vec![term(3, 3, 0, 0, Operator::ProjectX, Activation::Identity, 2.0)]).unwrap();
        let out = generate_synthetic_panel(&spec(truth, 0.0, 1)).unwrap();
        let p = &out.panel;
        let scale = p.get(0, 1) / p.get(3, 0);
        assert!(scale > 0.0);
        for t in 0..p.num_periods() - 1 {
            assert_relative_eq!(p.get(0, t + 1), scale * p.get(3, t), max_relative = 1e-12);
        }
        let w = out.planted.terms[0].weight;
        assert_relative_eq!(w, scale, max_relative = 1e-12);
        // the rescaled signal has RMS signal_scale
        let rms_signal = rms(&(0..p.num_periods() - 1).map(|t| p.get(0, t + 1)).collect::<Vec<_>>());
        assert_relative_eq!(rms_signal, 0.01, max_relative = 1e-12);
    }

    #[test]
    fn same_seed_same_panel() {
        let a = generate_synthetic_panel(&spec(nonlinear(), 0.005, 7)).unwrap();
        let b = generate_synthetic_panel(&spec(nonlinear(), 0.005, 7)).unwrap();
        let bits = |p: &ReturnsPanel| p.to_rows().concat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.panel), bits(&b.panel));
        let c = generate_synthetic_panel(&spec(nonlinear(), 0.005, 8)).unwrap();
        assert_ne!(bits(&a.panel), bits(&c.panel));
    }

    #[test]
    fn noisy_sign_agreement() {
        let out = generate_synthetic_panel(&spec(nonlinear(), 0.001, 3)).unwrap();
        let p = &out.panel;
        let mut agree = 0;
        let times = 2..p.num_periods() - 1;
        let count = times.len();
        for t in times {
            let signal = out.planted.predict(&p.view(), t, 10).unwrap();
            if (signal > 0.0) == (p.get(0, t + 1) > 0.0) {
                agree += 1;
            }
        }
        assert!(agree * 2 > count, "{agree}/{count}");
    }

    #[test]
    fn regime_shift_switches_formula() {
        let mut s = spec(nonlinear(), 0.0, 4);
        let after = Trader::new(alloc::vec![term(5, 5, 1, 1, Operator::ProjectX, Activation::Identity, -1.0)]).unwrap();
        s.shift = Some(RegimeShift { at: 250, ground_truth: after });
        let out = generate_synthetic_panel(&s).unwrap();
        let p = &out.panel;
        let shifted = out.shifted.unwrap();
        for t in 2..p.num_periods() - 1 {
            let truth = if t + 1 >= 250 { &shifted } else { &out.planted };
            assert_relative_eq!(p.get(0, t + 1), truth.predict(&p.view(), t, 10).unwrap(), max_relative = 1e-12);
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = spec(nonlinear(), 0.0, 0);
        s.num_periods = 3;
        assert!(generate_synthetic_panel(&s).is_err());
        let mut s = spec(nonlinear(), 0.0, 0);
        s.num_stocks = 5;
        assert!(generate_synthetic_panel(&s).is_err());
        let mut s = spec(nonlinear(), 0.0, 0);
        s.signal_scale = 0.0;
        assert!(generate_synthetic_panel(&s).is_err());
        let mut s = spec(nonlinear(), 0.0, 0);
        s.noise_scale = -1.0;
        assert!(generate_synthetic_panel(&s).is_err());
    }

    #[test]
    fn timestamps_are_daily() {
        let out = generate_synthetic_panel(&spec(nonlinear(), 0.0, 0)).unwrap();
        let ts = out.panel.timestamps();
        assert_eq!(ts[0], SYNTHETIC_EPOCH);
        assert_eq!(ts[1] - ts[0], SYNTHETIC_SPACING);
    }
}
