//! Evaluation metrics for Bayes factor estimators.
//!
//! Estimation metrics compare estimated against exact log Bayes factors on
//! datasets simulated from each model (MSE, Spearman's rho, KL divergence
//! between kernel density estimates, the implied prior model probability).
//! Inference metrics treat the Bayes factor as a test statistic (surprise
//! tail probabilities, ROC curves and AUC).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::deepbf::BfEstimator;
use crate::error::{invalid, Error, Result};
use crate::io::fmt_f64;
use crate::models::ModelPair;
use crate::nn::sigmoid;
use crate::rngdist::RngStream;

const EVAL_STREAM: u64 = 0x0065_7661_6c00;

/// Anything that maps a dataset to a log Bayes factor of M1 against M2.
pub trait BfEvaluator: Sync {
    fn log_bf(&self, y: &[f64]) -> Result<f64>;

    fn log_bf_many(&self, ys: &[Vec<f64>]) -> Result<Vec<f64>> {
        ys.iter().map(|y| self.log_bf(y)).collect()
    }
}

impl BfEvaluator for BfEstimator {
    fn log_bf(&self, y: &[f64]) -> Result<f64> {
        BfEstimator::log_bf(self, y)
    }

    fn log_bf_many(&self, ys: &[Vec<f64>]) -> Result<Vec<f64>> {
        if ys.is_empty() {
            return Ok(Vec::new());
        }
        let n = ys[0].len();
        if ys.iter().any(|y| y.len() != n) {
            return Err(Error::Shape("datasets differ in length".into()));
        }
        let flat: Vec<f64> = ys.iter().flatten().copied().collect();
        let x = Array2::from_shape_vec((ys.len(), n), flat).expect("shape");
        self.log_bf_rows(x.view())
    }
}

/// Closed-form log Bayes factor of a pair.
#[derive(Debug, Clone)]
pub struct ExactOracle<'a>(pub &'a ModelPair);

impl BfEvaluator for ExactOracle<'_> {
    fn log_bf(&self, y: &[f64]) -> Result<f64> {
        self.0.exact_log_bf(y)
    }
}

/// The same log Bayes factor for every dataset.
#[derive(Debug, Clone, Copy)]
pub struct ConstantBf(pub f64);

impl BfEvaluator for ConstantBf {
    fn log_bf(&self, _: &[f64]) -> Result<f64> {
        Ok(self.0)
    }
}

/// Wraps a closure as an evaluator.
pub struct FnEvaluator<F>(pub F);

impl<F: Fn(&[f64]) -> Result<f64> + Sync> BfEvaluator for FnEvaluator<F> {
    fn log_bf(&self, y: &[f64]) -> Result<f64> {
        (self.0)(y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BfSample {
    /// Exact log BF, when a closed form exists.
    pub exact: Option<f64>,
    pub estimate: f64,
}

/// Log Bayes factors of datasets simulated from each model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BfSampleSet {
    pub m1: Vec<BfSample>,
    pub m2: Vec<BfSample>,
    pub prior_m1: f64,
    pub prior_m2: f64,
}

impl BfSampleSet {
    fn models(&self) -> [(&[BfSample], f64); 2] {
        [(&self.m1, self.prior_m1), (&self.m2, self.prior_m2)]
    }

    fn exact_pairs(samples: &[BfSample]) -> Result<Vec<(f64, f64)>> {
        samples
            .iter()
            .map(|s| s.exact.map(|e| (e, s.estimate)).ok_or_else(|| Error::NoOracle("sample set".into())))
            .collect()
    }
}

/// Simulates `t0` datasets of length `n` from each model and evaluates
/// `est` (and the closed form, when available) on them.
pub fn simulate_sample_set(
    est: &dyn BfEvaluator,
    pair: &ModelPair,
    n: usize,
    t0: usize,
    seed: u64,
) -> Result<BfSampleSet> {
    if t0 == 0 {
        return Err(invalid("T0 must be at least 1"));
    }
    let root = RngStream::new(seed, EVAL_STREAM);
    let exact = pair.has_exact_log_bf(n);
    let mut sets = Vec::with_capacity(2);
    for model in 0..2 {
        let ys = simulate_many(pair, model, n, t0, &root.substream(model as u64))?;
        let estimates = est.log_bf_many(&ys)?;
        let samples = ys
            .iter()
            .zip(estimates)
            .map(|(y, e)| Ok(BfSample { exact: if exact { Some(pair.exact_log_bf(y)?) } else { None }, estimate: e }))
            .collect::<Result<Vec<_>>>()?;
        sets.push(samples);
    }
    let m2 = sets.pop().expect("two models");
    let m1 = sets.pop().expect("two models");
    Ok(BfSampleSet { m1, m2, prior_m1: pair.prior_m1, prior_m2: pair.prior_m2 })
}

fn simulate_many(pair: &ModelPair, model: usize, n: usize, count: usize, rng: &RngStream) -> Result<Vec<Vec<f64>>> {
    use rayon::prelude::*;
    let spec = pair.model(model);
    (0..count).into_par_iter().map(|i| spec.simulate_dataset(n, &mut rng.substream(i as u64))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseResult {
    pub value: f64,
    /// Pairs skipped because either log BF was infinite.
    pub excluded: usize,
}

/// Prior-weighted mean squared error between exact and estimated log BFs.
pub fn mse_log_bf(s: &BfSampleSet) -> Result<MseResult> {
    let mut value = 0.0;
    let mut excluded = 0;
    for (samples, prior) in s.models() {
        let pairs = BfSampleSet::exact_pairs(samples)?;
        let finite: Vec<f64> =
            pairs.iter().filter(|(e, t)| e.is_finite() && t.is_finite()).map(|(e, t)| (e - t) * (e - t)).collect();
        excluded += pairs.len() - finite.len();
        if finite.is_empty() {
            return Err(Error::Numeric("no finite log BF pairs for a model".into()));
        }
        value += prior * finite.iter().sum::<f64>() / finite.len() as f64;
    }
    Ok(MseResult { value, excluded })
}

/// Ranks starting at 1, tied values sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|a, b| x[*a].total_cmp(&x[*b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's rho with average ranks. Returns `None` when either vector is
/// constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        None
    } else {
        Some(sab / (saa * sbb).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpearmanResult {
    pub rho: f64,
    pub per_model: [f64; 2],
    /// Set when a constant vector forced a model's rho to 0.
    pub degenerate: bool,
}

/// Per-model Spearman's rho between exact and estimated log BFs, weighted by
/// the prior model probabilities.
pub fn spearman_weighted(s: &BfSampleSet) -> Result<SpearmanResult> {
    let mut per_model = [0.0; 2];
    let mut degenerate = false;
    let mut rho = 0.0;
    for (j, (samples, prior)) in s.models().into_iter().enumerate() {
        if samples.len() < 2 {
            return Err(invalid("Spearman's rho needs at least 2 points per model"));
        }
        let pairs = BfSampleSet::exact_pairs(samples)?;
        if pairs.iter().any(|(e, t)| e.is_nan() || t.is_nan()) {
            return Err(Error::Numeric("NaN log BF".into()));
        }
        let (exact, est): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        per_model[j] = spearman(&exact, &est).unwrap_or_else(|| {
            degenerate = true;
            0.0
        });
        rho += prior * per_model[j];
    }
    Ok(SpearmanResult { rho, per_model, degenerate })
}

/// Gaussian kernel density estimate with Silverman's bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde {
    pub points: Vec<f64>,
    pub bandwidth: f64,
}

impl Kde {
    /// Non-finite points are dropped. A sample with zero spread gets a
    /// bandwidth of `1e-3 · max(1, |x|)` so the density stays proper.
    pub fn new(points: &[f64]) -> Result<Self> {
        let points: Vec<f64> = points.iter().copied().filter(|x| x.is_finite()).collect();
        if points.is_empty() {
            return Err(invalid("KDE needs at least one finite point"));
        }
        let n = points.len() as f64;
        let mean = points.iter().sum::<f64>() / n;
        let sd = if points.len() > 1 {
            (points.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let bandwidth = if sd > 0.0 { 1.06 * sd * n.powf(-0.2) } else { 1e-3 * mean.abs().max(1.0) };
        Ok(Self { points, bandwidth })
    }

    pub fn density(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * h * self.points.len() as f64);
        norm * self.points.iter().map(|p| (-0.5 * ((x - p) / h).powi(2)).exp()).sum::<f64>()
    }

    fn range(&self) -> (f64, f64) {
        let lo = self.points.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.points.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// Uniform evaluation grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

pub const DEFAULT_GRID_POINTS: usize = 512;
pub const DENSITY_FLOOR: f64 = 1e-12;

impl Grid {
    /// The pooled sample range widened by 4 of the larger bandwidth.
    pub fn spanning(kdes: &[&Kde]) -> Self {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut h: f64 = 0.0;
        for k in kdes {
            let (l, u) = k.range();
            lo = lo.min(l);
            hi = hi.max(u);
            h = h.max(k.bandwidth);
        }
        Self { lo: lo - 4.0 * h, hi: hi + 4.0 * h, count: DEFAULT_GRID_POINTS }
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.count - 1) as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count).map(move |i| self.lo + i as f64 * self.step())
    }
}

/// Trapezoid integral of the density over the grid.
pub fn kde_integral(kde: &Kde, grid: &Grid) -> f64 {
    let values: Vec<f64> = grid.points().map(|x| kde.density(x)).collect();
    let inner: f64 = values.iter().sum::<f64>() - 0.5 * (values[0] + values[values.len() - 1]);
    inner * grid.step()
}

/// `Σ a · ln(a / b) · Δ` over the grid for the KDEs of `a` and `b`, both
/// floored at `1e-12`. Non-finite samples are ignored.
pub fn kl_between_samples(a: &[f64], b: &[f64], grid: Option<Grid>) -> Result<f64> {
    let ka = Kde::new(a)?;
    let kb = Kde::new(b)?;
    let grid = grid.unwrap_or_else(|| Grid::spanning(&[&ka, &kb]));
    if grid.count < 2 || grid.hi.partial_cmp(&grid.lo) != Some(std::cmp::Ordering::Greater) {
        return Err(invalid("KL grid needs at least 2 points over a positive range"));
    }
    let dx = grid.step();
    Ok(grid
        .points()
        .map(|x| {
            let pa = ka.density(x).max(DENSITY_FLOOR);
            let pb = kb.density(x).max(DENSITY_FLOOR);
            pa * (pa / pb).ln() * dx
        })
        .sum())
}

/// `π(M1 | y) = bf·π₁ / (bf·π₁ + π₂)`, equal to 1 at `bf = ∞`.
pub fn posterior_model_prob(bf: f64, prior_m1: f64, prior_m2: f64) -> f64 {
    if bf == f64::INFINITY {
        return 1.0;
    }
    bf * prior_m1 / (bf * prior_m1 + prior_m2)
}

/// [`posterior_model_prob`] from a log Bayes factor.
pub fn posterior_model_prob_log(log_bf: f64, prior_m1: f64, prior_m2: f64) -> f64 {
    if log_bf == 0.0 {
        return prior_m1;
    }
    sigmoid(log_bf + (prior_m1 / prior_m2).ln())
}

/// Average posterior probability of M1 over `t0` datasets drawn from the
/// prior-weighted mixture of the two models. Unbiased for `π(M1)` when the
/// Bayes factor is exact.
pub fn estimated_prior(est: &dyn BfEvaluator, pair: &ModelPair, n: usize, t0: usize, seed: u64) -> Result<f64> {
    use rayon::prelude::*;
    if t0 == 0 {
        return Err(invalid("T0 must be at least 1"));
    }
    let root = RngStream::new(seed, EVAL_STREAM ^ 0xff);
    let ys: Vec<Vec<f64>> = (0..t0)
        .into_par_iter()
        .map(|i| {
            let mut rng = root.substream(i as u64);
            let model = if rng.uniform() < pair.prior_m1 { 0 } else { 1 };
            pair.model(model).simulate_dataset(n, &mut rng)
        })
        .collect::<Result<_>>()?;
    let logs = est.log_bf_many(&ys)?;
    let total: f64 = logs.iter().map(|l| posterior_model_prob_log(*l, pair.prior_m1, pair.prior_m2)).sum();
    Ok(total / t0 as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurprisePair {
    pub p1: f64,
    pub p2: f64,
}

/// Tail probabilities of the observed Bayes factor: `p1` is the fraction of
/// M1 simulations strictly above it, `p2` the fraction of M2 simulations at or
/// below it. Any strictly increasing scale (BF or log BF) gives the same result.
pub fn surprise(bf_obs: f64, sims_m1: &[f64], sims_m2: &[f64]) -> Result<SurprisePair> {
    if sims_m1.is_empty() || sims_m2.is_empty() {
        return Err(invalid("surprise needs simulations under both models"));
    }
    let p1 = sims_m1.iter().filter(|s| **s > bf_obs).count() as f64 / sims_m1.len() as f64;
    let p2 = sims_m2.iter().filter(|s| **s <= bf_obs).count() as f64 / sims_m2.len() as f64;
    Ok(SurprisePair { p1, p2 })
}

fn tail_mse(exact: &[f64], est: &[f64], upper: bool) -> f64 {
    let tail = |values: &[f64], v: f64| {
        let count =
            if upper { values.iter().filter(|s| **s > v).count() } else { values.iter().filter(|s| **s <= v).count() };
        count as f64 / values.len() as f64
    };
    let total: f64 = exact.iter().zip(est).map(|(e, t)| (tail(exact, *e) - tail(est, *t)).powi(2)).sum();
    total / exact.len() as f64
}

/// `Σ_j π_j · mean over model-j draws of (p_j^exact − p_j^est)²`. Each
/// model's draws serve both as the evaluation points and as the reference
/// sample of the tail probability.
pub fn mse_surprise_from_samples(s: &BfSampleSet) -> Result<f64> {
    let mut total = 0.0;
    for (j, (samples, prior)) in s.models().into_iter().enumerate() {
        if samples.is_empty() {
            return Err(invalid("empty model sample"));
        }
        let (exact, est): (Vec<f64>, Vec<f64>) = BfSampleSet::exact_pairs(samples)?.into_iter().unzip();
        total += prior * tail_mse(&exact, &est, j == 0);
    }
    Ok(total)
}

/// Simulates `t0` datasets per model and computes [`mse_surprise_from_samples`].
pub fn mse_surprise(est: &dyn BfEvaluator, pair: &ModelPair, n: usize, t0: usize, seed: u64) -> Result<f64> {
    if !pair.has_exact_log_bf(n) {
        return Err(Error::NoOracle(pair.name.clone()));
    }
    mse_surprise_from_samples(&simulate_sample_set(est, pair, n, t0, seed)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    /// `(FPR, TPR)` points from the strictest threshold to the loosest.
    pub curve: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC curve of "score > c" as a detector of M1, and the Mann–Whitney AUC
/// with ties counted one half.
pub fn roc_auc(scores_m1: &[f64], scores_m2: &[f64]) -> Result<RocResult> {
    if scores_m1.is_empty() || scores_m2.is_empty() {
        return Err(invalid("ROC needs scores under both models"));
    }
    if scores_m1.iter().chain(scores_m2).any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let mut thresholds: Vec<f64> = scores_m1.iter().chain(scores_m2).copied().collect();
    thresholds.push(f64::INFINITY);
    thresholds.push(f64::NEG_INFINITY);
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let frac_above = |scores: &[f64], c: f64| scores.iter().filter(|s| **s > c).count() as f64 / scores.len() as f64;
    let curve = thresholds.iter().map(|&c| (frac_above(scores_m2, c), frac_above(scores_m1, c))).collect();

    let pooled: Vec<f64> = scores_m1.iter().chain(scores_m2).copied().collect();
    let ranks = average_ranks(&pooled);
    let n1 = scores_m1.len() as f64;
    let n2 = scores_m2.len() as f64;
    let r1: f64 = ranks[..scores_m1.len()].iter().sum();
    let auc = (r1 - n1 * (n1 + 1.0) / 2.0) / (n1 * n2);
    Ok(RocResult { curve, auc })
}

/// Exact log BFs this close to zero have no sign; data1 at `y = 0` is one.
pub const SIGN_TIE: f64 = 1e-9;

/// Estimation and inference metrics of one estimator on one pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pair: String,
    pub n: usize,
    pub t0: usize,
    pub seed: u64,
    pub mse_log_bf: f64,
    pub mse_excluded: usize,
    pub spearman_rho: f64,
    pub spearman_per_model: [f64; 2],
    pub spearman_degenerate: bool,
    pub kl_per_model: [f64; 2],
    pub kl_weighted: f64,
    pub estimated_prior: f64,
    pub estimated_prior_exact: f64,
    pub mse_surprise: f64,
    pub auc_estimated: f64,
    pub auc_exact: f64,
    /// Fraction of datasets where the estimated and exact log BF agree in
    /// sign, over datasets whose exact log BF is not a tie at zero.
    pub sign_agreement: f64,
    /// Datasets with `|exact log BF| <= SIGN_TIE` left out of the sign check.
    pub sign_ties: usize,
    #[serde(skip)]
    pub samples: Option<BfSampleSet>,
}

/// Runs every metric on `t0` datasets per model (and `2·t0` for the prior check).
pub fn evaluate(est: &dyn BfEvaluator, pair: &ModelPair, n: usize, t0: usize, seed: u64) -> Result<EvalReport> {
    if !pair.has_exact_log_bf(n) {
        return Err(Error::NoOracle(pair.name.clone()));
    }
    let set = simulate_sample_set(est, pair, n, t0, seed)?;
    let mse = mse_log_bf(&set)?;
    let rho = spearman_weighted(&set)?;
    let mut kl = [0.0; 2];
    for (j, (samples, _)) in set.models().into_iter().enumerate() {
        let exact: Vec<f64> = samples.iter().filter_map(|s| s.exact).collect();
        let estimate: Vec<f64> = samples.iter().map(|s| s.estimate).collect();
        kl[j] = kl_between_samples(&exact, &estimate, None)?;
    }
    let kl_weighted = set.prior_m1 * kl[0] + set.prior_m2 * kl[1];
    let prior_t0 = 2 * t0;
    let estimated_prior_value = estimated_prior(est, pair, n, prior_t0, seed)?;
    let estimated_prior_exact = estimated_prior(&ExactOracle(pair), pair, n, prior_t0, seed)?;
    let mse_surprise_value = mse_surprise_from_samples(&set)?;
    let est_scores = |v: &[BfSample]| v.iter().map(|s| s.estimate).collect::<Vec<_>>();
    let exact_scores = |v: &[BfSample]| v.iter().filter_map(|s| s.exact).collect::<Vec<_>>();
    let auc_estimated = roc_auc(&est_scores(&set.m1), &est_scores(&set.m2))?.auc;
    let auc_exact = roc_auc(&exact_scores(&set.m1), &exact_scores(&set.m2))?.auc;
    let all: Vec<&BfSample> = set.m1.iter().chain(&set.m2).collect();
    let signed: Vec<(f64, f64)> =
        all.iter().filter_map(|s| s.exact.map(|e| (e, s.estimate))).filter(|(e, _)| e.abs() > SIGN_TIE).collect();
    let agree = signed.iter().filter(|(e, est)| (*e > 0.0) == (*est > 0.0)).count();
    let sign_ties = all.len() - signed.len();
    Ok(EvalReport {
        pair: pair.name.clone(),
        n,
        t0,
        seed,
        mse_log_bf: mse.value,
        mse_excluded: mse.excluded,
        spearman_rho: rho.rho,
        spearman_per_model: rho.per_model,
        spearman_degenerate: rho.degenerate,
        kl_per_model: kl,
        kl_weighted,
        estimated_prior: estimated_prior_value,
        estimated_prior_exact,
        mse_surprise: mse_surprise_value,
        auc_estimated,
        auc_exact,
        sign_agreement: if signed.is_empty() { 1.0 } else { agree as f64 / signed.len() as f64 },
        sign_ties,
        samples: Some(set),
    })
}

impl EvalReport {
    /// `name,value,model,n,seed` rows; `model` is `m1`, `m2` or `all`.
    pub fn to_csv_rows(&self) -> Vec<[String; 5]> {
        let mut rows = Vec::new();
        let mut push = |name: &str, value: f64, model: &str| {
            rows.push([name.to_string(), fmt_f64(value), model.to_string(), self.n.to_string(), self.seed.to_string()]);
        };
        push("mse_log_bf", self.mse_log_bf, "all");
        push("mse_excluded", self.mse_excluded as f64, "all");
        push("spearman_rho", self.spearman_rho, "all");
        push("spearman_rho", self.spearman_per_model[0], "m1");
        push("spearman_rho", self.spearman_per_model[1], "m2");
        push("spearman_degenerate", if self.spearman_degenerate { 1.0 } else { 0.0 }, "all");
        push("kl", self.kl_weighted, "all");
        push("kl", self.kl_per_model[0], "m1");
        push("kl", self.kl_per_model[1], "m2");
        push("estimated_prior", self.estimated_prior, "m1");
        push("estimated_prior_exact", self.estimated_prior_exact, "m1");
        push("mse_surprise", self.mse_surprise, "all");
        push("auc_estimated", self.auc_estimated, "all");
        push("auc_exact", self.auc_exact, "all");
        push("sign_agreement", self.sign_agreement, "all");
        push("sign_ties", self.sign_ties as f64, "all");
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(m1: &[(f64, f64)], m2: &[(f64, f64)], p1: f64) -> BfSampleSet {
        let conv = |v: &[(f64, f64)]| v.iter().map(|(e, t)| BfSample { exact: Some(*e), estimate: *t }).collect();
        BfSampleSet { m1: conv(m1), m2: conv(m2), prior_m1: p1, prior_m2: 1.0 - p1 }
    }

    #[test]
    fn mse_cases() {
        let s = set(&[(1.0, 1.0), (2.0, 2.0)], &[(-1.0, -1.0), (0.5, 0.5)], 0.5);
        assert_eq!(mse_log_bf(&s).unwrap().value, 0.0);
        let s = set(&[(1.0, 1.3), (2.0, 2.3)], &[(-1.0, -0.7), (0.5, 0.8)], 0.5);
        assert!((mse_log_bf(&s).unwrap().value - 0.09).abs() < 1e-12);
        let s = set(&[(1.0, f64::INFINITY), (2.0, 2.0)], &[(0.0, 0.0)], 0.5);
        assert_eq!(mse_log_bf(&s).unwrap(), MseResult { value: 0.0, excluded: 1 });
    }

    #[test]
    fn mse_weighted_by_hand() {
        let m1 = [(0.1, 0.4), (1.0, 0.0), (-2.0, -2.5), (3.0, 3.0), (0.0, 1.0)];
        let m2 = [(1.0, 2.0), (-1.0, -1.5), (0.2, 0.2), (4.0, 3.0), (2.0, 2.1)];
        let s = set(&m1, &m2, 0.3);
        let a = (0.09 + 1.0 + 0.25 + 0.0 + 1.0) / 5.0;
        let b = (1.0 + 0.25 + 0.0 + 1.0 + 0.01) / 5.0;
        assert!((mse_log_bf(&s).unwrap().value - (0.3 * a + 0.7 * b)).abs() < 1e-12);
    }

    #[test]
    fn spearman_cases() {
        let inc: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, (i as f64).exp())).collect();
        let dec: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, -(i as f64))).collect();
        let r = spearman_weighted(&set(&inc, &inc, 0.5)).unwrap();
        assert!((r.rho - 1.0).abs() < 1e-12);
        let r = spearman_weighted(&set(&dec, &dec, 0.5)).unwrap();
        assert!((r.rho + 1.0).abs() < 1e-12);
        let constant: Vec<(f64, f64)> = (0..4).map(|i| (i as f64, 2.0)).collect();
        let r = spearman_weighted(&set(&constant, &inc, 0.5)).unwrap();
        assert!(r.degenerate);
        assert!((r.rho - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spearman_with_tie_by_hand() {
        // x ranks 1..5; y = [1, 2, 2, 4, 3] has ranks [1, 2.5, 2.5, 5, 4]
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [1.0, 2.0, 2.0, 4.0, 3.0];
        assert_eq!(average_ranks(&y), vec![1.0, 2.5, 2.5, 5.0, 4.0]);
        // centered ranks: x (-2,-1,0,1,2), y (-2,-0.5,-0.5,2,1)
        let sxy = 4.0 + 0.5 + 0.0 + 2.0 + 2.0;
        let sxx: f64 = 10.0;
        let syy = 4.0 + 0.25 + 0.25 + 4.0 + 1.0;
        let expected = sxy / (sxx * syy).sqrt();
        assert!((spearman(&x, &y).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn kl_identical_and_separated() {
        let mut rng = RngStream::new(1, 0);
        let a: Vec<f64> = (0..500).map(|_| rng.std_normal()).collect();
        assert_eq!(kl_between_samples(&a, &a, None).unwrap(), 0.0);
        let b: Vec<f64> = a.iter().map(|x| x + 20.0).collect();
        assert!(kl_between_samples(&a, &b, None).unwrap() > 1.0);
    }

    #[test]
    fn posterior_probability_cases() {
        assert_eq!(posterior_model_prob(1.0, 0.5, 0.5), 0.5);
        assert_eq!(posterior_model_prob(f64::INFINITY, 0.5, 0.5), 1.0);
        assert_eq!(posterior_model_prob(3.0, 0.5, 0.5), 0.75);
        assert_eq!(posterior_model_prob_log(f64::INFINITY, 0.5, 0.5), 1.0);
        assert!((posterior_model_prob_log(3f64.ln(), 0.5, 0.5) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn surprise_cases() {
        let m1 = [1.0, 2.0, 3.0, 4.0, 5.0];
        let m2 = [0.0, 1.0];
        assert_eq!(surprise(10.0, &m1, &m2).unwrap().p1, 0.0);
        assert_eq!(surprise(f64::NEG_INFINITY, &m1, &m2).unwrap().p2, 0.0);
        assert_eq!(surprise(3.0, &m1, &m2).unwrap().p1, 4.0 / 10.0);
        assert!(surprise(1.0, &[], &m2).is_err());
    }

    #[test]
    fn mse_surprise_hand_case() {
        // model 1 exact [1, 2] est [2, 1]: p1 exact = [1/2, 0], est = [0, 1/2]
        // model 2 exact [0, 3] est [0, 3]: identical tails
        let s = set(&[(1.0, 2.0), (2.0, 1.0)], &[(0.0, 0.0), (3.0, 3.0)], 0.5);
        assert!((mse_surprise_from_samples(&s).unwrap() - 0.5 * 0.25).abs() < 1e-15);
    }

    #[test]
    fn auc_cases() {
        assert_eq!(roc_auc(&[3.0, 4.0], &[1.0, 2.0]).unwrap().auc, 1.0);
        assert_eq!(roc_auc(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap().auc, 0.5);
        let r = roc_auc(&[1.0, 2.0, 3.0], &[0.0, 1.5, 2.5]).unwrap();
        assert!((r.auc - 6.0 / 9.0).abs() < 1e-15);
        assert_eq!(r.curve.first(), Some(&(0.0, 0.0)));
        assert_eq!(r.curve.last(), Some(&(1.0, 1.0)));
        assert_eq!(r.curve.len(), 8);
    }
}
