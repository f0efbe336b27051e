//! Gaussian-mixture generation of new Traders from surviving ones.
//!
//! Every term of every survivor becomes one 7-dimensional point
//! `(P, Q, D, F, O-index, A-index, w)`. A full-covariance mixture is fitted
//! to the pooled points by EM; new Traders draw their term count from the
//! survivors' empirical distribution and their terms from the mixture,
//! rounding and clipping the discrete coordinates back into range.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formula::{HyperRanges, Term, Trader};
use crate::linalg::{cholesky, forward_solve, log_det_from_cholesky};

pub const DIM: usize = 7;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Real-valued encoding of one [`Term`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermVector(pub [f64; DIM]);

impl TermVector {
    /// Operator and activation are encoded as positions in the allowed
    /// lists of `ranges`.
    pub fn encode(term: &Term, ranges: &HyperRanges) -> Self {
        let op = ranges
            .operators
            .iter()
            .position(|&o| o == term.op)
            .unwrap_or(term.op.index());
        let act = ranges
            .activations
            .iter()
            .position(|&a| a == term.activation)
            .unwrap_or(term.activation.index());
        Self([
            term.lhs_stock as f64,
            term.rhs_stock as f64,
            term.lhs_delay as f64,
            term.rhs_delay as f64,
            op as f64,
            act as f64,
            term.weight,
        ])
    }
}

fn round_clip(x: f64, max: usize) -> usize {
    // NaN.max(0.0) is 0.0, so this is total
    libm::round(x).max(0.0).min(max as f64) as usize
}

/// Rounds the discrete coordinates to the nearest integer and clips them into
/// range. The weight passes through (non-finite weights become 0).
pub fn decode_term(v: &TermVector, ranges: &HyperRanges, num_stocks: usize) -> Term {
    let [p, q, d, f, o, a, w] = v.0;
    Term {
        lhs_stock: round_clip(p, num_stocks - 1),
        rhs_stock: round_clip(q, num_stocks - 1),
        lhs_delay: round_clip(d, ranges.max_delay),
        rhs_delay: round_clip(f, ranges.max_delay),
        op: ranges.operators[round_clip(o, ranges.operators.len() - 1)],
        activation: ranges.activations[round_clip(a, ranges.activations.len() - 1)],
        weight: if w.is_finite() { w } else { 0.0 },
    }
}

/// Empirical distribution of term counts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TermCounts {
    counts: BTreeMap<usize, usize>,
    total: usize,
}

impl TermCounts {
    pub fn add(&mut self, m: usize) {
        *self.counts.entry(m).or_default() += 1;
        self.total += 1;
    }

    pub fn probability(&self, m: usize) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.counts.get(&m).copied().unwrap_or(0) as f64 / self.total as f64
    }

    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.counts.keys().copied()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let mut pick = rng.random_range(0..self.total);
        for (&m, &c) in &self.counts {
            if pick < c {
                return m;
            }
            pick -= c;
        }
        unreachable!("pick is below total")
    }
}

/// Pools the terms of all `traders` and records their term counts.
pub fn encode_terms(traders: &[Trader], ranges: &HyperRanges) -> Result<(Vec<TermVector>, TermCounts)> {
    if traders.is_empty() {
        return Err(Error::Empty("no traders to encode"));
    }
    let mut counts = TermCounts::default();
    let mut points = Vec::new();
    for trader in traders {
        counts.add(trader.num_terms());
        points.extend(trader.terms.iter().map(|t| TermVector::encode(t, ranges)));
    }
    Ok((points, counts))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Requested mixture components; capped by the number of points.
    pub components: usize,
    /// Added to every covariance diagonal.
    pub reg_floor: f64,
    /// EM stops when the mean per-point log-likelihood gain drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            components: 5,
            reg_floor: 1e-6,
            tolerance: 1e-6,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    pub weights: Vec<f64>,
    pub means: Vec<[f64; DIM]>,
    /// Row-major `DIM × DIM`.
    pub covariances: Vec<[f64; DIM * DIM]>,
    factors: Vec<[f64; DIM * DIM]>,
    log_dets: Vec<f64>,
    /// Total log-likelihood of the training points under the final model.
    pub log_likelihood: f64,
    pub iterations: usize,
}

impl GaussianMixture {
    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    fn from_parts(weights: Vec<f64>, means: Vec<[f64; DIM]>, covariances: Vec<[f64; DIM * DIM]>) -> Self {
        let mut factors = Vec::with_capacity(covariances.len());
        let mut log_dets = Vec::with_capacity(covariances.len());
        for cov in &covariances {
            let (l, ld) = factor_with_jitter(cov);
            factors.push(l);
            log_dets.push(ld);
        }
        Self {
            weights,
            means,
            covariances,
            factors,
            log_dets,
            log_likelihood: f64::NEG_INFINITY,
            iterations: 0,
        }
    }

    pub fn component_log_density(&self, k: usize, x: &[f64; DIM]) -> f64 {
        let mut z = [0.0; DIM];
        for i in 0..DIM {
            z[i] = x[i] - self.means[k][i];
        }
        forward_solve(&self.factors[k], DIM, &mut z);
        let quad: f64 = z.iter().map(|v| v * v).sum();
        -0.5 * (DIM as f64 * LN_2PI + self.log_dets[k] + quad)
    }

    pub fn log_density(&self, x: &[f64; DIM]) -> f64 {
        let terms: Vec<f64> = (0..self.num_components())
            .map(|k| libm::log(self.weights[k]) + self.component_log_density(k, x))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn total_log_likelihood(&self, points: &[TermVector]) -> f64 {
        points.iter().map(|p| self.log_density(&p.0)).sum()
    }

    /// Index of the component with the highest responsibility for `x`.
    pub fn assign(&self, x: &[f64; DIM]) -> usize {
        (0..self.num_components())
            .map(|k| libm::log(self.weights[k]) + self.component_log_density(k, x))
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, v)| if v > best.1 { (k, v) } else { best })
            .0
    }

    pub fn sample_component<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return k;
            }
        }
        self.weights.len() - 1
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<TermVector> {
        (0..n)
            .map(|_| {
                let k = self.sample_component(rng);
                let z: [f64; DIM] = core::array::from_fn(|_| rng.sample(StandardNormal));
                let l = &self.factors[k];
                let mut x = self.means[k];
                for i in 0..DIM {
                    for j in 0..=i {
                        x[i] += l[i * DIM + j] * z[j];
                    }
                }
                TermVector(x)
            })
            .collect()
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + libm::log(values.iter().map(|v| libm::exp(v - max)).sum::<f64>())
}

/// Cholesky factor and log-determinant; adds diagonal jitter if the matrix
/// is numerically indefinite.
fn factor_with_jitter(cov: &[f64; DIM * DIM]) -> ([f64; DIM * DIM], f64) {
    let mut jitter = 0.0;
    loop {
        let mut l = *cov;
        for i in 0..DIM {
            l[i * DIM + i] += jitter;
        }
        if cholesky(&mut l, DIM).is_ok() {
            return (l, log_det_from_cholesky(&l, DIM));
        }
        let scale = (0..DIM).map(|i| cov[i * DIM + i].abs()).fold(1e-12, f64::max);
        jitter = if jitter == 0.0 { scale * 1e-12 } else { jitter * 10.0 };
    }
}

fn kmeans_pp_seeds<R: Rng + ?Sized>(points: &[TermVector], k: usize, rng: &mut R) -> Vec<[f64; DIM]> {
    let dist2 = |a: &[f64; DIM], b: &[f64; DIM]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut centers = vec![points[rng.random_range(0..points.len())].0];
    let mut nearest: Vec<f64> = points.iter().map(|p| dist2(&p.0, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, d) in nearest.iter().enumerate() {
                if u < *d {
                    chosen = i;
                    break;
                }
                u -= d;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[idx].0;
        for (n, p) in nearest.iter_mut().zip(points) {
            *n = n.min(dist2(&p.0, &c));
        }
        centers.push(c);
    }
    centers
}

fn weighted_moments(points: &[TermVector], resp: impl Fn(usize) -> f64, total: f64, reg_floor: f64) -> ([f64; DIM], [f64; DIM * DIM]) {
    let mut mean = [0.0; DIM];
    for (i, p) in points.iter().enumerate() {
        let r = resp(i);
        for d in 0..DIM {
            mean[d] += r * p.0[d];
        }
    }
    for m in &mut mean {
        *m /= total;
    }
    let mut cov = [0.0; DIM * DIM];
    for (i, p) in points.iter().enumerate() {
        let r = resp(i);
        let mut diff = [0.0; DIM];
        for d in 0..DIM {
            diff[d] = p.0[d] - mean[d];
        }
        for a in 0..DIM {
            for b in 0..=a {
                cov[a * DIM + b] += r * diff[a] * diff[b];
            }
        }
    }
    for a in 0..DIM {
        for b in 0..=a {
            let v = cov[a * DIM + b] / total;
            cov[a * DIM + b] = v;
            cov[b * DIM + a] = v;
        }
        cov[a * DIM + a] += reg_floor;
    }
    (mean, cov)
}

/// Expectation–maximisation with k-means++ seeding. The effective component
/// count is `min(config.components, points.len())`.
pub fn fit_gmm<R: Rng + ?Sized>(points: &[TermVector], config: &GenerationConfig, rng: &mut R) -> Result<GaussianMixture> {
    if points.is_empty() {
        return Err(Error::Empty("no points to fit"));
    }
    if config.components == 0 {
        return Err(Error::InvalidConfig("mixture needs at least one component".into()));
    }
    let n = points.len();
    let k = config.components.min(n);

    let (_, global_cov) = weighted_moments(points, |_| 1.0, n as f64, config.reg_floor);
    let means = kmeans_pp_seeds(points, k, rng);
    let mut model = GaussianMixture::from_parts(vec![1.0 / k as f64; k], means, vec![global_cov; k]);

    let mut resp = vec![0.0; n * k];
    let mut previous = f64::NEG_INFINITY;
    let mut iterations = 0;
    while iterations < config.max_iterations {
        // E-step
        let mut ll = 0.0;
        let mut row = vec![0.0; k];
        for (i, p) in points.iter().enumerate() {
            for (c, slot) in row.iter_mut().enumerate() {
                *slot = libm::log(model.weights[c]) + model.component_log_density(c, &p.0);
            }
            let norm = log_sum_exp(&row);
            ll += norm;
            for c in 0..k {
                resp[i * k + c] = libm::exp(row[c] - norm);
            }
        }
        if iterations > 0 && (ll - previous) / (n as f64) < config.tolerance {
            break;
        }
        previous = ll;

        // M-step
        let mut weights = Vec::with_capacity(k);
        let mut means = Vec::with_capacity(k);
        let mut covs = Vec::with_capacity(k);
        for c in 0..k {
            let nk: f64 = (0..n).map(|i| resp[i * k + c]).sum();
            if nk < 1e-10 {
                weights.push(nk.max(0.0));
                means.push(model.means[c]);
                covs.push(model.covariances[c]);
                continue;
            }
            let (mean, cov) = weighted_moments(points, |i| resp[i * k + c], nk, config.reg_floor);
            weights.push(nk);
            means.push(mean);
            covs.push(cov);
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        model = GaussianMixture::from_parts(weights, means, covs);
        iterations += 1;
    }
    model.iterations = iterations;
    model.log_likelihood = model.total_log_likelihood(points);
    Ok(model)
}

/// Fits a mixture to the survivors' terms and draws `n_new` Traders.
pub fn generate_traders<R: Rng + ?Sized>(
    survivors: &[Trader],
    n_new: usize,
    config: &GenerationConfig,
    ranges: &HyperRanges,
    num_stocks: usize,
    rng: &mut R,
) -> Result<Vec<Trader>> {
    if survivors.is_empty() {
        return Err(Error::Empty("no surviving traders"));
    }
    if n_new == 0 {
        return Ok(Vec::new());
    }
    let (points, counts) = encode_terms(survivors, ranges)?;
    let model = fit_gmm(&points, config, rng)?;
    Ok((0..n_new)
        .map(|_| {
            let m = counts.sample(rng).clamp(1, ranges.max_terms);
            let terms = model
                .sample(m, rng)
                .iter()
                .map(|v| decode_term(v, ranges, num_stocks))
                .collect();
            Trader { terms }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{sample_uniform_trader, Activation, Operator};
    use crate::rng::seeded;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

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

    fn trader_with(m: usize, seed: u64) -> Trader {
        let ranges = HyperRanges { max_terms: 1, ..HyperRanges::default() };
        let mut rng = seeded(seed);
        Trader {
            terms: (0..m).map(|_| sample_uniform_trader(&ranges, 10, &mut rng).terms[0]).collect(),
        }
    }

    #[test]
    fn encoding_counts() {
        let ranges = HyperRanges::default();
        let (v, m) = encode_terms(&[trader_with(3, 1)], &ranges).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(m.probability(3), 1.0);

        let (v, m) = encode_terms(&[trader_with(1, 2), trader_with(4, 3)], &ranges).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!((m.probability(1), m.probability(4)), (0.5, 0.5));
        assert!(encode_terms(&[], &ranges).is_err());
    }

    #[test]
    fn decode_inverts_encode() {
        let ranges = HyperRanges::default();
        let t = trader_with(10, 4);
        for term in &t.terms {
            assert_eq!(decode_term(&TermVector::encode(term, &ranges), &ranges, 10), *term);
        }
    }

    #[test]
    fn decode_rounds_and_clips() {
        let ranges = HyperRanges::default();
        let t = decode_term(&TermVector([3.4, -0.4, -2.7, 10.6, 99.0, -5.0, 0.123]), &ranges, 10);
        assert_eq!(t.lhs_stock, 3);
        assert_eq!(t.rhs_stock, 0);
        assert_eq!(t.lhs_delay, 0);
        assert_eq!(t.rhs_delay, 10);
        assert_eq!(t.op, Operator::Corr);
        assert_eq!(t.activation, Activation::Identity);
        assert_eq!(t.weight, 0.123);

        let restricted = HyperRanges { operators: vec![Operator::ProjectX], ..HyperRanges::default() };
        let t = decode_term(&TermVector([0.0, 0.0, 0.0, 0.0, 7.2, 0.0, 1.0]), &restricted, 10);
        assert_eq!(t.op, Operator::ProjectX);

        let t = decode_term(&TermVector([f64::NAN, f64::INFINITY, 0.0, 0.0, 0.0, 0.0, f64::NAN]), &ranges, 4);
        assert_eq!((t.lhs_stock, t.rhs_stock, t.weight), (0, 3, 0.0));
    }

    #[test]
    fn identical_points_give_point_mass_with_floor() {
        let cfg = GenerationConfig { components: 1, ..GenerationConfig::default() };
        let p = TermVector([1.0, 2.0, 3.0, 4.0, 5.0, 0.0, -0.7]);
        let model = fit_gmm(&[p; 12], &cfg, &mut seeded(0)).unwrap();
        for a in 0..DIM {
            assert_abs_diff_eq!(model.means[0][a], p.0[a], epsilon = 1e-12);
        }
        for a in 0..DIM {
            for b in 0..DIM {
                let expected = if a == b { cfg.reg_floor } else { 0.0 };
                assert_abs_diff_eq!(model.covariances[0][a * DIM + b], expected, epsilon = 1e-15);
            }
        }
        let samples = model.sample(1000, &mut seeded(1));
        let bound = 10.0 * cfg.reg_floor.sqrt();
        for s in samples {
            for d in 0..DIM {
                assert!((s.0[d] - p.0[d]).abs() < bound);
            }
        }
    }

    #[test]
    fn effective_components_capped_by_points() {
        let cfg = GenerationConfig::default();
        let pts = [TermVector([0.0; DIM]), TermVector([1.0; DIM])];
        let model = fit_gmm(&pts, &cfg, &mut seeded(0)).unwrap();
        assert_eq!(model.num_components(), 2);
        assert_abs_diff_eq!(model.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(fit_gmm(&[], &cfg, &mut seeded(0)).is_err());
    }

    #[test]
    fn zero_draws() {
        let cfg = GenerationConfig::default();
        let model = fit_gmm(&[TermVector([0.0; DIM])], &cfg, &mut seeded(0)).unwrap();
        assert!(model.sample(0, &mut seeded(0)).is_empty());
    }

    #[test]
    fn component_frequencies_follow_weights() {
        let mut model = fit_gmm(
            &[TermVector([0.0; DIM]), TermVector([50.0; DIM]), TermVector([100.0; DIM])],
            &GenerationConfig::default(),
            &mut seeded(0),
        )
        .unwrap();
        model.weights = vec![0.2, 0.3, 0.5];
        let mut rng = seeded(5);
        let draws = 10_000;
        let mut counts = [0usize; 3];
        for _ in 0..draws {
            counts[model.sample_component(&mut rng)] += 1;
        }
        for (c, w) in counts.iter().zip(&model.weights) {
            let sd = (draws as f64 * w * (1.0 - w)).sqrt();
            assert!((*c as f64 - draws as f64 * w).abs() < 5.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn fit_beats_single_gaussian() {
        let mut rng = seeded(7);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let pts: Vec<TermVector> = (0..300)
            .map(|i| {
                let c = [0.0, 8.0, -6.0][i % 3];
                TermVector(core::array::from_fn(|d| c * (1.0 + d as f64 * 0.1) + noise.sample(&mut rng)))
            })
            .collect();
        let single = fit_gmm(&pts, &GenerationConfig { components: 1, ..Default::default() }, &mut seeded(1)).unwrap();
        let mixed = fit_gmm(&pts, &GenerationConfig { components: 3, ..Default::default() }, &mut seeded(1)).unwrap();
        assert!(mixed.log_likelihood >= single.log_likelihood);
    }

    #[test]
    fn determinism() {
        let survivors: Vec<Trader> = (0..6).map(|i| trader_with(1 + i % 4, i as u64)).collect();
        let ranges = HyperRanges::default();
        let cfg = GenerationConfig::default();
        let a = generate_traders(&survivors, 20, &cfg, &ranges, 10, &mut seeded(3)).unwrap();
        let b = generate_traders(&survivors, 20, &cfg, &ranges, 10, &mut seeded(3)).unwrap();
        assert_eq!(a, b);
        assert!(generate_traders(&survivors, 0, &cfg, &ranges, 10, &mut seeded(3)).unwrap().is_empty());
        assert!(generate_traders(&[], 3, &cfg, &ranges, 10, &mut seeded(3)).is_err());
    }

    #[test]
    fn identical_survivors_reproduce_up_to_jitter() {
        let ranges = HyperRanges::default();
        let cfg = GenerationConfig::default();
        let survivor = Trader::new(vec![term(2, 5, 1, 3, Operator::Max, Activation::Tanh, 0.42)]).unwrap();
        let out = generate_traders(&vec![survivor.clone(); 8], 30, &cfg, &ranges, 10, &mut seeded(9)).unwrap();
        for t in out {
            assert_eq!(t.terms.len(), 1);
            let (g, s) = (t.terms[0], survivor.terms[0]);
            assert_eq!(Term { weight: 0.0, ..g }, Term { weight: 0.0, ..s });
            assert!((g.weight - s.weight).abs() < 10.0 * cfg.reg_floor.sqrt());
        }
    }

    #[test]
    fn generated_operator_marginal_tracks_survivors() {
        let ranges = HyperRanges::default();
        let mut rng = seeded(13);
        for case in 0..5 {
            let survivors: Vec<Trader> = (0..20)
                .map(|_| {
                    let op = Operator::ALL[[2, 3, 3, 4][rng.random_range(0..4)] + case % 3];
                    let mut t = sample_uniform_trader(&ranges, 10, &mut rng);
                    for term in &mut t.terms {
                        term.op = op;
                    }
                    t
                })
                .collect();
            let survivor_mean = {
                let (v, _) = encode_terms(&survivors, &ranges).unwrap();
                v.iter().map(|p| p.0[4]).sum::<f64>() / v.len() as f64
            };
            let generated = generate_traders(&survivors, 200, &GenerationConfig::default(), &ranges, 10, &mut rng).unwrap();
            let ops: Vec<f64> = generated.iter().flat_map(|t| t.terms.iter().map(|x| x.op.index() as f64)).collect();
            let mean = ops.iter().sum::<f64>() / ops.len() as f64;
            assert!((mean - survivor_mean).abs() < 1.0, "case {case}: {mean} vs {survivor_mean}");
        }
    }

    proptest! {
        #[test]
        fn generated_traders_are_valid(seed in 0u64..500, stocks in 1usize..12) {
            let ranges = HyperRanges::default();
            let mut rng = seeded(seed);
            let survivors: Vec<Trader> = (0..5).map(|_| sample_uniform_trader(&ranges, stocks, &mut rng)).collect();
            let out = generate_traders(&survivors, 10, &GenerationConfig::default(), &ranges, stocks, &mut rng).unwrap();
            prop_assert_eq!(out.len(), 10);
            for t in &out {
                prop_assert!(t.validate(&ranges, stocks).is_ok());
            }
        }
    }
}
