//! Simulator-defined Bayesian models, model pairs and their closed-form
//! oracles.
//!
//! A model is anything implementing [`Model`]: a prior sampler, a
//! conditional data sampler and, when the family is conjugate, an exact
//! log marginal likelihood and a posterior predictive sampler. Data
//! vectors are always `f64`, count data included.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::rngdist::RngStream;

/// Largest dataset length for which the Gaussian-mixture marginal is
/// evaluated by enumerating all component assignments.
pub const MIXTURE_EXHAUSTIVE_LIMIT: usize = 20;

/// Observation support declared by a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    NonnegIntegers,
    Reals,
    NonnegReals,
    CountsBounded { trials: u64 },
}

impl Support {
    pub fn contains(&self, x: f64) -> bool {
        match self {
            Support::Reals => x.is_finite(),
            Support::NonnegReals => x.is_finite() && x >= 0.0,
            Support::NonnegIntegers => x.is_finite() && x >= 0.0 && x.fract() == 0.0,
            Support::CountsBounded { trials } => x.is_finite() && x >= 0.0 && x.fract() == 0.0 && x <= *trials as f64,
        }
    }
}

/// A Bayesian model defined through its samplers.
pub trait Model: Send + Sync + fmt::Debug {
    fn id(&self) -> &str;
    fn param_dim(&self) -> usize;
    fn support(&self) -> Support;

    /// Number of consecutive entries forming one exchangeable unit
    /// (a participant's six cells in the full MPT layout, otherwise 1).
    fn unit_width(&self) -> usize {
        1
    }

    fn sample_prior(&self, rng: &mut RngStream) -> Vec<f64>;

    /// Fills `out` with conditionally independent observations given `theta`.
    fn sample_data_into(&self, theta: &[f64], out: &mut [f64], rng: &mut RngStream) -> Result<()>;

    fn has_exact_log_marginal(&self, _n: usize) -> bool {
        false
    }

    fn exact_log_marginal(&self, _y: &[f64]) -> Result<f64> {
        Err(Error::NoOracle(self.id().to_string()))
    }

    fn has_posterior_predictive(&self) -> bool {
        false
    }

    /// `m` draws, each from a fresh posterior parameter draw given `y_obs`.
    fn posterior_predictive(&self, _y_obs: &[f64], _m: usize, _rng: &mut RngStream) -> Result<Vec<f64>> {
        Err(Error::Unsupported(self.id().to_string()))
    }
}

/// Shared handle to a model.
#[derive(Clone)]
pub struct ModelSpec(Arc<dyn Model>);

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl ModelSpec {
    pub fn new(model: impl Model + 'static) -> Self {
        Self(Arc::new(model))
    }

    pub fn from_arc(model: Arc<dyn Model>) -> Self {
        Self(model)
    }

    pub fn model(&self) -> &dyn Model {
        self.0.as_ref()
    }

    pub fn id(&self) -> &str {
        self.0.id()
    }

    pub fn param_dim(&self) -> usize {
        self.0.param_dim()
    }

    pub fn support(&self) -> Support {
        self.0.support()
    }

    pub fn unit_width(&self) -> usize {
        self.0.unit_width()
    }

    pub fn same_as(&self, other: &ModelSpec) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    /// One parameter draw from the prior, then `n` observations.
    pub fn simulate_dataset(&self, n: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
        self.simulate_with_params(n, rng).map(|(_, y)| y)
    }

    /// Like [`simulate_dataset`](Self::simulate_dataset) but also returns the parameter draw.
    pub fn simulate_with_params(&self, n: usize, rng: &mut RngStream) -> Result<(Vec<f64>, Vec<f64>)> {
        if n == 0 {
            return Err(invalid("dataset length must be at least 1"));
        }
        let theta = self.0.sample_prior(rng);
        let mut y = vec![0.0; n];
        self.0.sample_data_into(&theta, &mut y, rng)?;
        Ok((theta, y))
    }

    pub fn simulate_into(&self, out: &mut [f64], rng: &mut RngStream) -> Result<()> {
        let theta = self.0.sample_prior(rng);
        self.0.sample_data_into(&theta, out, rng)
    }

    pub fn sample_conditional(&self, theta: &[f64], n: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
        if theta.len() != self.param_dim() {
            return Err(Error::Shape(format!(
                "parameter vector has length {}, model `{}` expects {}",
                theta.len(),
                self.id(),
                self.param_dim()
            )));
        }
        let mut y = vec![0.0; n];
        self.0.sample_data_into(theta, &mut y, rng)?;
        Ok(y)
    }

    pub fn exact_log_marginal(&self, y: &[f64]) -> Result<f64> {
        self.0.exact_log_marginal(y)
    }

    pub fn has_exact_log_marginal(&self, n: usize) -> bool {
        self.0.has_exact_log_marginal(n)
    }

    pub fn has_posterior_predictive(&self) -> bool {
        self.0.has_posterior_predictive()
    }

    pub fn posterior_predictive_sample(&self, y_obs: &[f64], m: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
        if !self.0.has_posterior_predictive() {
            return Err(Error::Unsupported(self.id().to_string()));
        }
        if m == 0 {
            return Err(invalid("posterior predictive sample size must be at least 1"));
        }
        self.0.posterior_predictive(y_obs, m, rng)
    }
}

/// Two competing models with prior model probabilities.
#[derive(Debug, Clone)]
pub struct ModelPair {
    pub name: String,
    pub m1: ModelSpec,
    pub m2: ModelSpec,
    pub prior_m1: f64,
    pub prior_m2: f64,
    swapped: bool,
}

impl ModelPair {
    pub fn new(name: impl Into<String>, m1: ModelSpec, m2: ModelSpec, prior_m1: f64) -> Result<Self> {
        if !(prior_m1 > 0.0 && prior_m1 < 1.0) {
            return Err(invalid(format!("prior_m1 must lie in (0, 1), got {prior_m1}")));
        }
        if m1.support() != m2.support() {
            return Err(invalid(format!("models `{}` and `{}` declare different supports", m1.id(), m2.id())));
        }
        if m1.unit_width() != m2.unit_width() {
            return Err(invalid("models disagree on the observation unit width"));
        }
        Ok(Self { name: name.into(), m1, m2, prior_m1, prior_m2: 1.0 - prior_m1, swapped: false })
    }

    /// The same pair with the roles of the two models exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            name: self.name.clone(),
            m1: self.m2.clone(),
            m2: self.m1.clone(),
            prior_m1: self.prior_m2,
            prior_m2: self.prior_m1,
            swapped: !self.swapped,
        }
    }

    pub fn is_swapped(&self) -> bool {
        self.swapped
    }

    pub fn support(&self) -> Support {
        self.m1.support()
    }

    pub fn unit_width(&self) -> usize {
        self.m1.unit_width()
    }

    pub fn priors(&self) -> (f64, f64) {
        (self.prior_m1, self.prior_m2)
    }

    pub fn model(&self, index: usize) -> &ModelSpec {
        if index == 0 {
            &self.m1
        } else {
            &self.m2
        }
    }

    pub fn has_exact_log_bf(&self, n: usize) -> bool {
        self.m1.has_exact_log_marginal(n) && self.m2.has_exact_log_marginal(n)
    }

    /// `log π(y | M1) − log π(y | M2)` from the closed-form marginals.
    pub fn exact_log_bf(&self, y: &[f64]) -> Result<f64> {
        Ok(self.m1.exact_log_marginal(y)? - self.m2.exact_log_marginal(y)?)
    }
}

/// Log Bayes factor of `pair.m1` against `pair.m2` at `y`.
pub fn exact_log_bf(pair: &ModelPair, y: &[f64]) -> Result<f64> {
    pair.exact_log_bf(y)
}

fn check_support(support: Support, y: &[f64], id: &str) -> Result<()> {
    if y.is_empty() {
        return Err(invalid("empty data vector"));
    }
    match y.iter().find(|x| !support.contains(**x)) {
        Some(x) => Err(invalid(format!("value {x} lies outside the support of `{id}`"))),
        None => Ok(()),
    }
}

fn require_positive(name: &str, x: f64) -> Result<f64> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(invalid(format!("{name} must be finite and > 0, got {x}")))
    }
}

/// `Y_i | p ~ NB(1, p)` (`P(y) = p (1-p)^y`) with `p ~ Beta(alpha, beta)`.
#[derive(Debug, Clone)]
pub struct GeometricBeta {
    pub alpha: f64,
    pub beta: f64,
}

impl Model for GeometricBeta {
    fn id(&self) -> &str {
        "nb1-beta"
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn support(&self) -> Support {
        Support::NonnegIntegers
    }
    fn sample_prior(&self, rng: &mut RngStream) -> Vec<f64> {
        vec![rng.beta(self.alpha, self.beta)]
    }
    fn sample_data_into(&self, theta: &[f64], out: &mut [f64], rng: &mut RngStream) -> Result<()> {
        let p = theta[0];
        if !(p > 0.0 && p <= 1.0) {
            // p = 0 only arises from underflow in the beta draw; the
            // geometric law degenerates, so clamp to the smallest positive p.
            let p = f64::MIN_POSITIVE;
            out.iter_mut().for_each(|y| *y = rng.neg_binomial(1.0, p));
            return Ok(());
        }
        out.iter_mut().for_each(|y| *y = rng.neg_binomial(1.0, p));
        Ok(())
    }
    fn has_exact_log_marginal(&self, _n: usize) -> bool {
        true
    }
    fn exact_log_marginal(&self, y: &[f64]) -> Result<f64> {
        check_support(self.support(), y, self.id())?;
        let n = y.len() as f64;
        let s: f64 = y.iter().sum();
        Ok(ln_beta(self.alpha + n, self.beta + s) - ln_beta(self.alpha, self.beta))
    }
    fn has_posterior_predictive(&self) -> bool {
        true
    }
    fn posterior_predictive(&self, y_obs: &[f64], m: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
        check_support(self.support(), y_obs, self.id())?;
        let a = self.alpha + y_obs.len() as f64;
        let b = self.beta + y_obs.iter().sum::<f64>();
        Ok((0..m)
            .map(|_| {
                let p = rng.beta(a, b).max(f64::MIN_POSITIVE);
                rng.neg_binomial(1.0, p)
            })
            .collect())
    }
}

/// `Y_i | λ ~ Poisson(λ)` with `λ ~ Gamma(shape, rate)`.
#[derive(Debug, Clone)]
pub struct PoissonGamma {
    pub shape: f64,
    pub rate: f64,
}

impl Model for PoissonGamma {
    fn id(&self) -> &str {
        "poisson-gamma"
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn support(&self) -> Support {
        Support::NonnegIntegers
    }
    fn sample_prior(&self, rng: &mut RngStream) -> Vec<f64> {
        vec![rng.gamma(self.shape, self.rate)]
    }
    fn sample_data_into(&self, theta: &[f64], out: &mut [f64], rng: &mut RngStream) -> Result<()> {
        let lambda = theta[0];
        out.iter_mut().for_each(|y| *y = rng.poisson(lambda));
        Ok(())
    }
    fn has_exact_log_marginal(&self, _n: usize) -> bool {
        true
    }
    fn exact_log_marginal(&self, y: &[f64]) -> Result<f64> {
        check_support(self.support(), y, self.id())?;
        let n = y.len() as f64;
        let s: f64 = y.iter().sum();
        let log_fact: f64 = y.iter().map(|v| ln_gamma(v + 1.0)).sum();
        Ok(self.shape * self.rate.ln() + ln_gamma(s + self.shape)
            - ln_gamma(self.shape)
            - (s + self.shape) * (n + self.rate).ln()
            - log_fact)
    }
    fn has_posterior_predictive(&self) -> bool {
        true
    }
    fn posterior_predictive(&self, y_obs: &[f64], m: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
        check_support(self.support(), y_obs, self.id())?;
        let shape = self.shape + y_obs.iter().sum::<f64>();
        let rate = self.rate + y_obs.len() as f64;
        Ok((0..m)
            .map(|_| {
                let lambda = rng.gamma(shape, rate);
                rng.poisson(lambda)
            })
            .collect())
    }
}

/// `Y_i | λ ~ Exp(λ)` with `λ ~ Gamma(shape, rate)`.
#[derive(Debug, Clone)]
pub struct ExponentialGamma {
    pub shape: f64,
    pub rate: f64,
}

impl Model for ExponentialGamma {
    fn id(&self) -> &str {
        "exp-gamma"
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn support(&self) -> Support {
        Support::NonnegReals
    }
    fn sample_prior(&self, rng: &mut RngStream) -> Vec<f64> {
        vec![rng.gamma(self.shape, self.rate)]
    }
    fn sample_data_into(&self, theta: &[f64], out: &mut [f64], rng: &mut RngStream) -> Result<()> {
        let lambda = theta[0];
        out.iter_mut().for_each(|y| *y = rng.exponential(lambda));
        Ok(())
    }
    fn has_exact_log_marginal(&self, _n: usize) -> bool {
        true
    }
    fn exact_log_marginal(&self, y: &[f64]) -> Result<f64> {
        check_support(self.support(), y, self.id())?;
        let n = y.len() as f64;
        let s: f64 = y.iter().sum();
        Ok(self.shape * self.rate.ln() + ln_gamma(n + self.shape)
            - ln_gamma(self.shape)
            - (n + self.shape) * (self.rate + s).ln())
    }
    fn has_posterior_predictive(&self) -> bool {
        true
    }
    fn posterior_predictive(&self, y_obs: &[f64], m: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
        check_support(self.support(), y_obs, self.id())?;
        let shape = self.shape + y_obs.len() as f64;
        let rate = self.rate + y_obs.iter().sum::<f64>();
        Ok((0..m)
            .map(|_| {
                let lambda = rng.gamma(shape, rate);
                rng.exponential(lambda)
            })
            .collect())
    }
}

/// `Y_i ~ Exp(rate)` with the rate fixed (a point-mass prior).
#[derive(Debug, Clone)]
pub struct ExponentialFixed {
    pub rate: f64,
}

impl Model for ExponentialFixed {
    fn id(&self) -> &str {
        "exp-fixed"
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn support(&self) -> Support {
        Support::NonnegReals
    }
    fn sample_prior(&self, _rng: &mut RngStream) -> Vec<f64> {
        vec![self.rate]
    }
    fn sample_data_into(&self, theta: &[f64], out: &mut [f64], rng: &mut RngStream) -> Result<()> {
        let lambda = theta[0];
        out.iter_mut().for_each(|y| *y = rng.exponential(lambda));
        Ok(())
    }
    fn has_exact_log_marginal(&self, _n: usize) -> bool {
        true
    }
    fn exact_log_marginal(&self, y: &[f64]) -> Result<f64> {
        check_support(self.support(), y, self.id())?;
        let n = y.len() as f64;
        let s: f64 = y.iter().sum();
        Ok(n * self.rate.ln() - self.rate * s)
    }
    fn has_posterior_predictive(&self) -> bool {
        true
    }
    fn posterior_predictive(&self, _y_obs: &[f64], m: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
        Ok((0..m).map(|_| rng.exponential(self.rate)).collect())
    }
}

/// Log density of `x ~ N(mean·1, sd² I + prior_sd² 11ᵀ)`, i.e. `k` normal
/// observations sharing one normally distributed mean.
fn shared_mean_log_density(k: usize, sum_dev: f64, sum_sq_dev: f64, sd: f64, prior_sd: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let kf = k as f64;
    let s2 = sd * sd;
    let t2 = prior_sd * prior_sd;
    let denom = s2 + kf * t2;
    let log_det = (kf - 1.0) * s2.ln() + denom.ln();
    let quad = sum_sq_dev / s2 - t2 * sum_dev * sum_dev / (s2 * denom);
    -0.5 * (kf * (2.0 * std::f64::consts::PI).ln() + log_det + quad)
}

/// `Y_i | μ ~ N(μ, sd²)` with `μ ~ N(prior_mean, prior_sd²)`.
#[derive(Debug, Clone)]
pub struct NormalNormal {
    pub prior_mean: f64,
    pub prior_sd: f64,
    pub sd: f64,
}

impl Model for NormalNormal {
    fn id(&self) -> &str {
        "normal-normal"
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn support(&self) -> Support {
        Support::Reals
    }
    fn sample_prior(&self, rng: &mut RngStream) -> Vec<f64> {
        vec![rng.normal(self.prior_mean, self.prior_sd)]
    }
    fn sample_data_into(&self, theta: &[f64], out: &mut [f64], rng: &mut RngStream) -> Result<()> {
        out.iter_mut().for_each(|y| *y = rng.normal(theta[0], self.sd));
        Ok(())
    }
    fn has_exact_log_marginal(&self, _n: usize) -> bool {
        true
    }
    fn exact_log_marginal(&self, y: &[f64]) -> Result<f64> {
        check_support(self.support(), y, self.id())?;
        let (s, q) = y.iter().fold((0.0, 0.0), |(s, q), v| {
            let d = v - self.prior_mean;
            (s + d, q + d * d)
        });
        Ok(shared_mean_log_density(y.len(), s, q, self.sd, self.prior_sd))
    }
    fn has_posterior_predictive(&self) -> bool {
        true
    }
    fn posterior_predictive(&self, y_obs: &[f64], m: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
        check_support(self.support(), y_obs, self.id())?;
        let precision = 1.0 / (self.prior_sd * self.prior_sd) + y_obs.len() as f64 / (self.sd * self.sd);
        let var = 1.0 / precision;
        let mean =
            var * (self.prior_mean / (self.prior_sd * self.prior_sd) + y_obs.iter().sum::<f64>() / (self.sd * self.sd));
        Ok((0..m)
            .map(|_| {
                let mu = rng.normal(mean, var.sqrt());
                rng.normal(mu, self.sd)
            })
            .collect())
    }
}

/// Equal-weight two-component normal mixture whose component means have
/// independent normal priors.
#[derive(Debug, Clone)]
pub struct NormalMixture {
    pub prior_means: [f64; 2],
    pub prior_sd: f64,
    pub sd: f64,
}

impl Model for NormalMixture {
    fn id(&self) -> &str {
        "normal-mixture"
    }
    fn param_dim(&self) -> usize {
        2
    }
    fn support(&self) -> Support {
        Support::Reals
    }
    fn sample_prior(&self, rng: &mut RngStream) -> Vec<f64> {
        vec![rng.normal(self.prior_means[0], self.prior_sd), rng.normal(self.prior_means[1], self.prior_sd)]
    }
    fn sample_data_into(&self, theta: &[f64], out: &mut [f64], rng: &mut RngStream) -> Result<()> {
        for y in out.iter_mut() {
            let mu = if rng.uniform() < 0.5 { theta[0] } else { theta[1] };
            *y = rng.normal(mu, self.sd);
        }
        Ok(())
    }
    fn has_exact_log_marginal(&self, n: usize) -> bool {
        n <= MIXTURE_EXHAUSTIVE_LIMIT
    }
    /// Sum over all `2^n` component assignments; groups are independent
    /// given the assignment.
    fn exact_log_marginal(&self, y: &[f64]) -> Result<f64> {
        check_support(self.support(), y, self.id())?;
        let n = y.len();
        if n > MIXTURE_EXHAUSTIVE_LIMIT {
            return Err(Error::NoOracle(format!(
                "{} (n = {n} exceeds the exhaustive limit {MIXTURE_EXHAUSTIVE_LIMIT})",
                self.id()
            )));
        }
        let log_half = -(n as f64) * std::f64::consts::LN_2;
        let mut terms = Vec::with_capacity(1 << n);
        for mask in 0u32..(1u32 << n) {
            let mut k = [0usize; 2];
            let mut s = [0.0; 2];
            let mut q = [0.0; 2];
            for (i, v) in y.iter().enumerate() {
                let g = ((mask >> i) & 1) as usize;
                let d = v - self.prior_means[g];
                k[g] += 1;
                s[g] += d;
                q[g] += d * d;
            }
            terms.push(
                log_half
                    + shared_mean_log_density(k[0], s[0], q[0], self.sd, self.prior_sd)
                    + shared_mean_log_density(k[1], s[1], q[1], self.sd, self.prior_sd),
            );
        }
        Ok(log_sum_exp(&terms))
    }
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Which multinomial processing tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MptTree {
    /// Process dissociation with guessing: control first, then automatic, then guess.
    PD,
    /// Stroop with guessing: automatic first, then control, then guess.
    Stroop,
}

/// How MPT counts are laid out in a data vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MptLayout {
    /// Six success counts per participant, participant-major.
    Full,
    /// Six pooled success counts followed by the six matching failure counts.
    Summed,
}

/// Beta prior on one of the MPT process probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub a: f64,
    pub b: f64,
}

impl Default for BetaPrior {
    fn default() -> Self {
        Self { a: 1.0, b: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MptSpec {
    pub tree: MptTree,
    pub trials_per_cell: u64,
    pub n_participants: usize,
    pub layout: MptLayout,
    /// Priors on (A, B, C).
    pub priors: [BetaPrior; 3],
}

impl MptSpec {
    pub fn new(tree: MptTree, layout: MptLayout) -> Self {
        Self { tree, trials_per_cell: 36, n_participants: 42, layout, priors: [BetaPrior::default(); 3] }
    }

    /// Length of one dataset in this layout.
    pub fn data_len(&self) -> usize {
        match self.layout {
            MptLayout::Full => 6 * self.n_participants,
            MptLayout::Summed => 12,
        }
    }
}

/// Correct-response probabilities of the six prime/target cells in the
/// order White Tool, White Gun, Black Tool, Black Gun, Neutral Tool,
/// Neutral Gun. `a` = automatic stereotype, `b` = guess "tool", `c` = control.
pub fn mpt_cell_probabilities(tree: MptTree, a: f64, b: f64, c: f64) -> [f64; 6] {
    let neutral_tool = c + (1.0 - c) * b;
    let neutral_gun = c + (1.0 - c) * (1.0 - b);
    match tree {
        MptTree::PD => [
            c + (1.0 - c) * (a + (1.0 - a) * b),
            c + (1.0 - c) * (1.0 - a) * (1.0 - b),
            c + (1.0 - c) * (1.0 - a) * b,
            c + (1.0 - c) * (a + (1.0 - a) * (1.0 - b)),
            neutral_tool,
            neutral_gun,
        ],
        MptTree::Stroop => [
            a + (1.0 - a) * (c + (1.0 - c) * b),
            (1.0 - a) * (c + (1.0 - c) * (1.0 - b)),
            (1.0 - a) * (c + (1.0 - c) * b),
            a + (1.0 - a) * (c + (1.0 - c) * (1.0 - b)),
            neutral_tool,
            neutral_gun,
        ],
    }
}

/// Multinomial processing tree for the weapon identification task, with
/// (A, B, C) shared by all participants.
#[derive(Debug, Clone)]
pub struct MptModel {
    spec: MptSpec,
    id: String,
}

impl MptModel {
    pub fn new(spec: MptSpec) -> Result<Self> {
        if spec.trials_per_cell == 0 || spec.n_participants == 0 {
            return Err(invalid("MPT trials_per_cell and n_participants must be positive"));
        }
        for p in &spec.priors {
            require_positive("MPT prior a", p.a)?;
            require_positive("MPT prior b", p.b)?;
        }
        let id = match spec.tree {
            MptTree::PD => "mpt-pd",
            MptTree::Stroop => "mpt-stroop",
        }
        .to_string();
        Ok(Self { spec, id })
    }

    pub fn spec(&self) -> &MptSpec {
        &self.spec
    }
}

impl Model for MptModel {
    fn id(&self) -> &str {
        &self.id
    }
    fn param_dim(&self) -> usize {
        3
    }
    fn support(&self) -> Support {
        let trials = match self.spec.layout {
            MptLayout::Full => self.spec.trials_per_cell,
            MptLayout::Summed => self.spec.trials_per_cell * self.spec.n_participants as u64,
        };
        Support::CountsBounded { trials }
    }
    fn unit_width(&self) -> usize {
        match self.spec.layout {
            MptLayout::Full => 6,
            MptLayout::Summed => 12,
        }
    }
    fn sample_prior(&self, rng: &mut RngStream) -> Vec<f64> {
        self.spec.priors.iter().map(|p| rng.beta(p.a, p.b)).collect()
    }
    fn sample_data_into(&self, theta: &[f64], out: &mut [f64], rng: &mut RngStream) -> Result<()> {
        let probs = mpt_cell_probabilities(self.spec.tree, theta[0], theta[1], theta[2]);
        match self.spec.layout {
            MptLayout::Full => {
                if !out.len().is_multiple_of(6) {
                    return Err(Error::Shape(format!(
                        "full MPT layout needs a multiple of 6 entries, got {}",
                        out.len()
                    )));
                }
                for row in out.chunks_mut(6) {
                    for (y, p) in row.iter_mut().zip(probs) {
                        *y = rng.binomial(self.spec.trials_per_cell, p);
                    }
                }
            }
            MptLayout::Summed => {
                if out.len() != 12 {
                    return Err(Error::Shape(format!("summed MPT layout needs exactly 12 entries, got {}", out.len())));
                }
                let total = self.spec.trials_per_cell * self.spec.n_participants as u64;
                for (j, p) in probs.iter().enumerate() {
                    let successes = rng.binomial(total, *p);
                    out[j] = successes;
                    out[j + 6] = total as f64 - successes;
                }
            }
        }
        Ok(())
    }
}

const MPT_PRIOR_KEYS: [(&str, &str); 3] =
    [("prior_a_alpha", "prior_a_beta"), ("prior_b_alpha", "prior_b_beta"), ("prior_c_alpha", "prior_c_beta")];

/// Keyed real-valued hyperparameters of a builtin pair.
pub type Hyperparams = BTreeMap<String, f64>;

fn take(h: &Hyperparams, used: &mut Vec<&'static str>, key: &'static str, default: f64) -> f64 {
    used.push(key);
    h.get(key).copied().unwrap_or(default)
}

/// Builds one of the builtin model pairs.
///
/// * `data1`: NB(1, p), p ~ Beta(alpha1, beta1) against Poisson(λ), λ ~ Gamma(alpha2, beta2).
/// * `data2`: two-component normal mixture against a single normal, normal priors on means.
/// * `data3`: Exp(λ), λ ~ Gamma(m1_shape, m1_rate) against Exp(m2_rate).
/// * `mpt`: process-dissociation tree against the Stroop tree.
///
/// Missing keys take the defaults of the reference experiments; unknown
/// keys are rejected. `prior_m1` sets the prior model probability.
pub fn make_builtin_pair(name: &str, hyper: &Hyperparams) -> Result<ModelPair> {
    let mut used = Vec::new();
    let prior_m1 = take(hyper, &mut used, "prior_m1", 0.5);
    let pair = match name {
        "data1" => {
            let alpha1 = require_positive("alpha1", take(hyper, &mut used, "alpha1", 1.0))?;
            let beta1 = require_positive("beta1", take(hyper, &mut used, "beta1", 1.0))?;
            let alpha2 = require_positive("alpha2", take(hyper, &mut used, "alpha2", 1.0))?;
            let beta2 = require_positive("beta2", take(hyper, &mut used, "beta2", 1.0))?;
            ModelPair::new(
                "data1",
                ModelSpec::new(GeometricBeta { alpha: alpha1, beta: beta1 }),
                ModelSpec::new(PoissonGamma { shape: alpha2, rate: beta2 }),
                prior_m1,
            )?
        }
        "data2" => {
            let mean1 = take(hyper, &mut used, "m1_prior_mean1", 2.0);
            let mean2 = take(hyper, &mut used, "m1_prior_mean2", -2.0);
            let m1_prior_sd = require_positive("m1_prior_sd", take(hyper, &mut used, "m1_prior_sd", 1.5))?;
            let m1_sd = require_positive("m1_sd", take(hyper, &mut used, "m1_sd", 2.0))?;
            let m2_prior_mean = take(hyper, &mut used, "m2_prior_mean", 0.0);
            let m2_prior_sd = require_positive("m2_prior_sd", take(hyper, &mut used, "m2_prior_sd", 1.0))?;
            let m2_sd = require_positive("m2_sd", take(hyper, &mut used, "m2_sd", 2.5))?;
            if !(mean1.is_finite() && mean2.is_finite() && m2_prior_mean.is_finite()) {
                return Err(invalid("data2 prior means must be finite"));
            }
            ModelPair::new(
                "data2",
                ModelSpec::new(NormalMixture { prior_means: [mean1, mean2], prior_sd: m1_prior_sd, sd: m1_sd }),
                ModelSpec::new(NormalNormal { prior_mean: m2_prior_mean, prior_sd: m2_prior_sd, sd: m2_sd }),
                prior_m1,
            )?
        }
        "data3" => {
            let shape = require_positive("m1_shape", take(hyper, &mut used, "m1_shape", 2.0))?;
            let rate = require_positive("m1_rate", take(hyper, &mut used, "m1_rate", 2.0))?;
            let fixed = require_positive("m2_rate", take(hyper, &mut used, "m2_rate", 3.0))?;
            ModelPair::new(
                "data3",
                ModelSpec::new(ExponentialGamma { shape, rate }),
                ModelSpec::new(ExponentialFixed { rate: fixed }),
                prior_m1,
            )?
        }
        "mpt" => {
            let trials = take(hyper, &mut used, "trials_per_cell", 36.0);
            let participants = take(hyper, &mut used, "n_participants", 42.0);
            let summed = take(hyper, &mut used, "summed", 0.0);
            if trials < 1.0 || trials.fract() != 0.0 || participants < 1.0 || participants.fract() != 0.0 {
                return Err(invalid("trials_per_cell and n_participants must be positive integers"));
            }
            let layout = if summed == 0.0 {
                MptLayout::Full
            } else if summed == 1.0 {
                MptLayout::Summed
            } else {
                return Err(invalid("summed must be 0 or 1"));
            };
            let mut priors = [BetaPrior::default(); 3];
            for (prior, (ka, kb)) in priors.iter_mut().zip(MPT_PRIOR_KEYS) {
                *prior = BetaPrior { a: take(hyper, &mut used, ka, 1.0), b: take(hyper, &mut used, kb, 1.0) };
            }
            let base = MptSpec {
                tree: MptTree::PD,
                trials_per_cell: trials as u64,
                n_participants: participants as usize,
                layout,
                priors,
            };
            let stroop = MptSpec { tree: MptTree::Stroop, ..base.clone() };
            ModelPair::new(
                "mpt",
                ModelSpec::new(MptModel::new(base)?),
                ModelSpec::new(MptModel::new(stroop)?),
                prior_m1,
            )?
        }
        other => return Err(Error::UnknownPair(other.to_string())),
    };
    if let Some(unknown) = hyper.keys().find(|k| !used.contains(&k.as_str())) {
        return Err(invalid(format!("unknown hyperparameter `{unknown}` for pair `{name}`")));
    }
    Ok(pair)
}
