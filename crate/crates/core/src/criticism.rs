//! Classifier-based model criticism.
//!
//! Observed data are contrasted with fake data drawn from the model's
//! posterior predictive distribution. A logistic regression with a quadratic
//! predictor is fitted to tell them apart, and the statistic `Z` is its mean
//! output on a fresh fake set. Under an adequate model `Z` concentrates near
//! one half.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::models::ModelSpec;
use crate::nn::sigmoid;
use crate::rngdist::RngStream;

const CRITICISM_STREAM: u64 = 0x0063_7269_7400;
pub const MAX_STEPS: usize = 5000;
pub const GRAD_TOL: f64 = 1e-6;
pub const MIN_REPLICATES: usize = 100;

/// `d(y) = σ(a + b·y + c·y²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadLogit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl QuadLogit {
    pub fn logit(&self, y: f64) -> f64 {
        self.a + self.b * y + self.c * y * y
    }

    pub fn predict(&self, y: f64) -> f64 {
        sigmoid(self.logit(y))
    }
}

/// Distinct values with their multiplicity among observed and fake points.
fn compress(real: &[f64], fake: &[f64]) -> Vec<(f64, f64, f64)> {
    let mut all: Vec<(f64, bool)> = real.iter().map(|v| (*v, true)).chain(fake.iter().map(|v| (*v, false))).collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Vec<(f64, f64, f64)> = Vec::new();
    for (v, is_real) in all {
        match out.last_mut() {
            Some(last) if last.0 == v => {
                if is_real {
                    last.1 += 1.0
                } else {
                    last.2 += 1.0
                }
            }
            _ => out.push((v, if is_real { 1.0 } else { 0.0 }, if is_real { 0.0 } else { 1.0 })),
        }
    }
    out
}

struct Standardized {
    /// `(f1, f2, weight_real, weight_fake)` per distinct value.
    rows: Vec<(f64, f64, f64, f64)>,
    shift: [f64; 2],
    scale: [f64; 2],
    /// Correlation of the standardized `y` and `y²` removed from `f2`, and
    /// the residual scale `√(1 − ρ²)` (0 when `y²` is collinear with `y`).
    rho: f64,
    resid: f64,
}

/// Features `f1 = (y − m₁)/s₁` and the part of `(y² − m₂)/s₂` orthogonal to
/// `f1` under the pooled weights, rescaled to unit variance. This is a linear
/// reparametrization of the quadratic predictor that keeps plain gradient
/// ascent well conditioned.
fn standardize(real: &[f64], fake: &[f64]) -> Standardized {
    let groups = compress(real, fake);
    let total = (real.len() + fake.len()) as f64;
    let moments = |f: &dyn Fn(f64) -> f64| {
        let mean = groups.iter().map(|(v, r, k)| (r + k) * f(*v)).sum::<f64>() / total;
        let var = groups.iter().map(|(v, r, k)| (r + k) * (f(*v) - mean).powi(2)).sum::<f64>() / total;
        let sd = var.sqrt();
        (mean, if sd > 0.0 { sd } else { 1.0 })
    };
    let (m1, s1) = moments(&|v| v);
    let (m2, s2) = moments(&|v| v * v);
    let rho = groups.iter().map(|(v, r, k)| (r + k) * ((v - m1) / s1) * ((v * v - m2) / s2)).sum::<f64>() / total;
    let resid2 = 1.0 - rho * rho;
    let resid = if resid2 > 1e-10 { resid2.sqrt() } else { 0.0 };
    let wr = 1.0 / real.len() as f64;
    let wf = 1.0 / fake.len() as f64;
    let rows = groups
        .iter()
        .map(|(v, r, k)| {
            let f1 = (v - m1) / s1;
            let g = (v * v - m2) / s2;
            let f2 = if resid > 0.0 { (g - rho * f1) / resid } else { 0.0 };
            (f1, f2, r * wr, k * wf)
        })
        .collect();
    Standardized { rows, shift: [m1, m2], scale: [s1, s2], rho, resid }
}

/// Balanced log-likelihood `mean_real log d + mean_fake log(1 − d)` and its gradient.
fn objective(rows: &[(f64, f64, f64, f64)], w: &[f64; 3]) -> (f64, [f64; 3]) {
    let mut value = 0.0;
    let mut grad = [0.0; 3];
    for &(f1, f2, wr, wf) in rows {
        let z = w[0] + w[1] * f1 + w[2] * f2;
        // log σ(z) = −softplus(−z), log(1 − σ(z)) = −softplus(z), sharing e^{−|z|}
        let e = (-z.abs()).exp();
        let sp_pos = z.max(0.0) + e.ln_1p();
        let sp_neg = sp_pos - z;
        value -= wr * sp_neg + wf * sp_pos;
        let sig = if z >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
        let g = wr * (1.0 - sig) - wf * sig;
        grad[0] += g;
        grad[1] += g * f1;
        grad[2] += g * f2;
    }
    (value, grad)
}

/// Fits a quadratic logistic regression separating `real` (label 1) from
/// `fake` (label 0) by gradient ascent with backtracking line search on
/// standardized features. Each class carries total weight one.
pub fn fit_quadratic_logit(real: &[f64], fake: &[f64]) -> Result<QuadLogit> {
    if real.is_empty() || fake.is_empty() {
        return Err(invalid("both data sets must be non-empty"));
    }
    if real.iter().chain(fake).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite data value".into()));
    }
    let data = standardize(real, fake);
    let mut w = [0.0; 3];
    let (mut value, mut grad) = objective(&data.rows, &w);
    let mut step = 1.0;
    for _ in 0..MAX_STEPS {
        let norm2: f64 = grad.iter().map(|g| g * g).sum();
        if norm2.sqrt() < GRAD_TOL {
            break;
        }
        step *= 2.0;
        loop {
            let trial = [w[0] + step * grad[0], w[1] + step * grad[1], w[2] + step * grad[2]];
            let (v, g) = objective(&data.rows, &trial);
            if v >= value + 1e-4 * step * norm2 {
                w = trial;
                value = v;
                grad = g;
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                return Ok(map_back(&w, &data));
            }
        }
    }
    Ok(map_back(&w, &data))
}

fn map_back(w: &[f64; 3], data: &Standardized) -> QuadLogit {
    let (w1, w2) =
        if data.resid > 0.0 { (w[1] - w[2] * data.rho / data.resid, w[2] / data.resid) } else { (w[1], 0.0) };
    let b = w1 / data.scale[0];
    let c = w2 / data.scale[1];
    QuadLogit { a: w[0] - b * data.shift[0] - c * data.shift[1], b, c }
}

/// Mean classifier output over the fake set.
pub fn z_statistic(d: &QuadLogit, fake: &[f64]) -> Result<f64> {
    if fake.is_empty() {
        return Err(invalid("empty fake set"));
    }
    Ok(fake.iter().map(|y| d.predict(*y)).sum::<f64>() / fake.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZReport {
    pub z_samples: Vec<f64>,
    pub lower: f64,
    pub upper: f64,
    pub contains_half: bool,
}

/// Order statistic at nominal level `q`: the `⌈q·R⌉`-th smallest value.
pub fn order_quantile(sorted: &[f64], q: f64) -> f64 {
    let r = sorted.len();
    // the tolerance absorbs rounding in levels such as (1 - 0.95) / 2
    let k = ((q * r as f64 - 1e-9).ceil() as usize).clamp(1, r);
    sorted[k - 1]
}

impl ZReport {
    pub fn from_samples(z_samples: Vec<f64>) -> Result<Self> {
        if z_samples.is_empty() {
            return Err(invalid("no Z samples"));
        }
        let (lower, upper) = interval(&z_samples, 0.95);
        Ok(Self { contains_half: lower <= 0.5 && 0.5 <= upper, z_samples, lower, upper })
    }

    /// Central interval at the given coverage.
    pub fn interval(&self, coverage: f64) -> (f64, f64) {
        interval(&self.z_samples, coverage)
    }
}

fn interval(z: &[f64], coverage: f64) -> (f64, f64) {
    let mut sorted = z.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - coverage) / 2.0;
    (order_quantile(&sorted, tail), order_quantile(&sorted, 1.0 - tail))
}

/// Draws `replicates` values of `Z`: each replicate fits a fresh classifier
/// of `y_obs` against one posterior predictive fake set and evaluates it on
/// a second, independent fake set.
pub fn criticize(model: &ModelSpec, y_obs: &[f64], replicates: usize, seed: u64) -> Result<ZReport> {
    if replicates < MIN_REPLICATES {
        return Err(invalid(format!("at least {MIN_REPLICATES} replicates are required")));
    }
    if !model.has_posterior_predictive() {
        return Err(Error::Unsupported(model.id().to_string()));
    }
    if y_obs.is_empty() {
        return Err(invalid("empty observed data"));
    }
    let root = RngStream::new(seed, CRITICISM_STREAM);
    let n = y_obs.len();
    let z = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = root.substream(r as u64);
            let train_fake = model.posterior_predictive_sample(y_obs, n, &mut rng)?;
            let d = fit_quadratic_logit(y_obs, &train_fake)?;
            let eval_fake = model.posterior_predictive_sample(y_obs, n, &mut rng)?;
            z_statistic(&d, &eval_fake)
        })
        .collect::<Result<Vec<f64>>>()?;
    ZReport::from_samples(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_sets_give_half() {
        let y = [0.0, 1.0, 1.0, 3.0, 7.0];
        let d = fit_quadratic_logit(&y, &y).unwrap();
        for v in y {
            assert!((d.predict(v) - 0.5).abs() < 0.05);
        }
    }

    #[test]
    fn separated_constants() {
        let d = fit_quadratic_logit(&[10.0; 20], &[0.0; 20]).unwrap();
        assert!(d.predict(10.0) > 0.99, "{}", d.predict(10.0));
        assert!(d.predict(0.0) < 0.01, "{}", d.predict(0.0));
    }

    #[test]
    fn optimum_beats_zero_classifier() {
        let mut rng = RngStream::new(4, 0);
        let real: Vec<f64> = (0..10).map(|_| rng.normal(1.0, 1.0)).collect();
        let fake: Vec<f64> = (0..10).map(|_| rng.normal(0.0, 2.0)).collect();
        let d = fit_quadratic_logit(&real, &fake).unwrap();
        let loss = -(real.iter().map(|y| d.predict(*y).ln()).sum::<f64>() / 10.0
            + fake.iter().map(|y| (1.0 - d.predict(*y)).ln()).sum::<f64>() / 10.0);
        assert!(loss <= 4f64.ln());
    }

    #[test]
    fn label_swap_complements_prediction() {
        let mut rng = RngStream::new(8, 0);
        let a: Vec<f64> = (0..50).map(|_| rng.poisson(4.0)).collect();
        let b: Vec<f64> = (0..50).map(|_| rng.poisson(5.0)).collect();
        let d = fit_quadratic_logit(&a, &b).unwrap();
        let e = fit_quadratic_logit(&b, &a).unwrap();
        for y in 0..15 {
            let y = y as f64;
            assert!((d.predict(y) - (1.0 - e.predict(y))).abs() < 1e-3);
        }
    }

    #[test]
    fn z_statistic_cases() {
        let half = QuadLogit { a: 0.0, b: 0.0, c: 0.0 };
        assert_eq!(z_statistic(&half, &[1.0, 2.0]).unwrap(), 0.5);
        let one = QuadLogit { a: 800.0, b: 0.0, c: 0.0 };
        assert_eq!(z_statistic(&one, &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        let hand = (0.2f64 + 0.4 + 0.9) / 3.0;
        assert!((hand - 0.5).abs() < 1e-15);
        assert!(z_statistic(&half, &[]).is_err());
    }

    #[test]
    fn non_finite_input_rejected() {
        assert!(fit_quadratic_logit(&[f64::NAN], &[1.0]).is_err());
        assert!(fit_quadratic_logit(&[], &[1.0]).is_err());
    }

    #[test]
    fn quantiles_are_order_statistics() {
        let z: Vec<f64> = (1..=1000).map(|i| i as f64 / 1000.0).collect();
        let r = ZReport::from_samples(z).unwrap();
        assert_eq!((r.lower, r.upper), (0.025, 0.975));
        assert!(r.contains_half);
        let (l90, u90) = r.interval(0.9);
        assert!(l90 >= r.lower && u90 <= r.upper);
    }
}
