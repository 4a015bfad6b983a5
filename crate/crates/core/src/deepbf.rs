//! Deep Bayes factor estimation.
//!
//! A classifier is trained to separate datasets simulated from the first
//! model (label 1) from datasets simulated from the second (label 0), with
//! fresh simulations for every mini-batch. Its output `D̂(y)` is mapped to a
//! Bayes factor through `(D̂ + eps) / (1 + eps − D̂)`.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::models::ModelPair;
use crate::nn::{hex_f64s, sigmoid, AdamState, Arch, Batch, Network};
use crate::rngdist::RngStream;

const TRAIN_STREAM: u64 = 0x7472_6169_6e00;
const REFERENCE_STREAM: u64 = 0x7265_6665_7200;
const CHECKPOINT_FORMAT: &str = "deepbf-estimator";
const CHECKPOINT_VERSION: u32 = 1;

/// Which model of the training pair carried label 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Label 1 = M1: the estimator targets BF₁₂.
    Forward,
    /// Label 1 = M2: the estimator targets BF₂₁.
    Reversed,
}

impl Direction {
    pub fn flipped(self) -> Self {
        match self {
            Direction::Forward => Direction::Reversed,
            Direction::Reversed => Direction::Forward,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Number of Adam steps `M`.
    pub iterations: usize,
    /// Fresh datasets simulated per model and step (`s`).
    pub batch_per_model: usize,
    pub arch: Arch,
    pub seed: u64,
    /// Size of the simulated batch a single query is evaluated in when the
    /// network normalizes with batch statistics.
    pub eval_reference_batch: usize,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 40_000,
            batch_per_model: 200,
            arch: Arch::fnn(),
            seed: 0,
            eval_reference_batch: 200,
            eps: 0.0,
        }
    }
}

impl TrainConfig {
    /// The full-budget configuration (`M = 400000`).
    pub fn full_budget() -> Self {
        Self { iterations: 400_000, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(invalid("iterations must be at least 1"));
        }
        if self.batch_per_model < 2 {
            return Err(invalid("batch_per_model must be at least 2"));
        }
        if self.arch.uses_batch_norm() && self.eval_reference_batch < 2 {
            return Err(invalid("eval_reference_batch must be at least 2"));
        }
        if !(self.eps.is_finite() && self.eps >= 0.0) {
            return Err(invalid("eps must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// Hex SHA-256 digest of a serializable value's JSON encoding.
pub fn sha256_hex<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceBatch {
    pub rows: usize,
    pub cols: usize,
    #[serde(with = "hex_f64s")]
    pub data: Vec<f64>,
}

/// A trained classifier together with the ratio transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BfEstimator {
    pub format: String,
    pub version: u32,
    pub pair: String,
    pub n: usize,
    pub unit_width: usize,
    pub direction: Direction,
    pub eps: f64,
    pub seed: u64,
    pub config_hash: String,
    pub config: TrainConfig,
    pub net: Network,
    pub adam: AdamState,
    pub reference: Option<ReferenceBatch>,
}

fn fill_rows(pair: &ModelPair, x: &mut Array2<f64>, per_model: usize, rng: &RngStream) -> Result<()> {
    let n = x.ncols();
    let data = x.as_slice_mut().expect("standard layout");
    data.par_chunks_mut(n).enumerate().try_for_each(|(row, out)| {
        let model = if row < per_model { &pair.m1 } else { &pair.m2 };
        model.simulate_into(out, &mut rng.substream(row as u64))
    })
}

fn simulated_batch(pair: &ModelPair, n: usize, per_model: usize, rng: &RngStream) -> Result<Batch> {
    let mut x = Array2::zeros((2 * per_model, n));
    fill_rows(pair, &mut x, per_model, rng)?;
    let labels = (0..2 * per_model).map(|r| if r < per_model { 1.0 } else { 0.0 }).collect();
    Batch::new(x, labels)
}

/// Train a classifier of `pair.m1` (label 1) against `pair.m2` on datasets of
/// length `n`. Passing `pair.swapped()` yields the reversed estimator.
pub fn train(pair: &ModelPair, n: usize, cfg: &TrainConfig) -> Result<BfEstimator> {
    train_with_progress(pair, n, cfg, |_, _| {})
}

/// [`train`] with a callback receiving `(step, loss)` after every update.
pub fn train_with_progress(
    pair: &ModelPair,
    n: usize,
    cfg: &TrainConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<BfEstimator> {
    cfg.validate()?;
    if n == 0 {
        return Err(invalid("dataset length n must be at least 1"));
    }
    if !n.is_multiple_of(pair.unit_width()) {
        return Err(invalid(format!("n = {n} is not a multiple of the unit width {}", pair.unit_width())));
    }
    let direction = if pair.is_swapped() { Direction::Reversed } else { Direction::Forward };
    let root = RngStream::new(cfg.seed, TRAIN_STREAM);
    let mut net = Network::build(&cfg.arch, n, &mut root.substream(0))?;
    let mut adam = AdamState::new(&net);
    for t in 0..cfg.iterations {
        let batch = simulated_batch(pair, n, cfg.batch_per_model, &root.substream(t as u64 + 1))?;
        let (loss, grads) = net.backward(&batch)?;
        if !loss.is_finite() || grads.0.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::Numeric(format!("non-finite loss or gradient at step {}: loss {loss}", t + 1)));
        }
        adam.step(&mut net, &grads)?;
        progress(t + 1, loss);
    }
    let reference = if net.has_batch_norm() {
        let per_model = cfg.eval_reference_batch / 2;
        let rows = per_model * 2;
        let mut x = Array2::zeros((rows, n));
        fill_rows(pair, &mut x, per_model, &RngStream::new(cfg.seed, REFERENCE_STREAM))?;
        Some(ReferenceBatch { rows, cols: n, data: x.into_raw_vec_and_offset().0 })
    } else {
        None
    };
    let config_hash = sha256_hex(&(&pair.name, pair.m1.id(), pair.m2.id(), pair.priors(), n, direction, cfg))?;
    Ok(BfEstimator {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        pair: pair.name.clone(),
        n,
        unit_width: pair.unit_width(),
        direction,
        eps: cfg.eps,
        seed: cfg.seed,
        config_hash,
        config: cfg.clone(),
        net,
        adam,
        reference,
    })
}

/// `(d + eps) / (1 + eps − d)`; `+∞` when `eps = 0` and `d = 1`. The
/// denominator is grouped as `(1 − d) + eps` so `d = 0.5` gives exactly 1.
pub fn bf_from_probability(d: f64, eps: f64) -> f64 {
    (d + eps) / ((1.0 - d) + eps)
}

/// Log Bayes factor from a classifier logit. With `eps = 0` this is the
/// logit itself, which keeps full precision where `1 − D̂` would cancel.
pub fn log_bf_from_logit(z: f64, eps: f64) -> f64 {
    if eps == 0.0 {
        z
    } else {
        (sigmoid(z) + eps).ln() - (sigmoid(-z) + eps).ln()
    }
}

impl BfEstimator {
    /// An estimator around an existing network, e.g. for hand-built checks.
    pub fn from_network(net: Network, n: usize, direction: Direction, eps: f64) -> Result<Self> {
        if net.has_batch_norm() {
            return Err(invalid("batch-normalized networks need a reference batch; use train"));
        }
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(invalid("eps must be finite and nonnegative"));
        }
        let adam = AdamState::new(&net);
        let config = TrainConfig { arch: net.arch.clone(), eps, ..TrainConfig::default() };
        Ok(Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            pair: String::new(),
            n,
            unit_width: 1,
            direction,
            eps,
            seed: 0,
            config_hash: String::new(),
            config,
            net,
            adam,
            reference: None,
        })
    }

    /// Number of Adam steps taken during training.
    pub fn steps(&self) -> u64 {
        self.adam.t
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::Shape(format!("dataset has length {len}, estimator was trained for n = {}", self.n)));
        }
        Ok(())
    }

    /// Classifier logits for each row of `ys`.
    pub fn logits(&self, ys: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        self.check_len(ys.ncols())?;
        match &self.reference {
            None => Ok(self.net.logits(ys)?.to_vec()),
            Some(reference) => {
                let rows = reference.rows;
                let mut x = Array2::zeros((rows + 1, reference.cols));
                x.as_slice_mut().expect("standard layout")[..reference.data.len()].copy_from_slice(&reference.data);
                ys.rows()
                    .into_iter()
                    .map(|y| {
                        let mut x = x.clone();
                        x.row_mut(rows).assign(&y);
                        Ok(self.net.logits(x.view())?[rows])
                    })
                    .collect()
            }
        }
    }

    /// Estimated log Bayes factor for each row of `ys`.
    pub fn log_bf_rows(&self, ys: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(self.logits(ys)?.into_iter().map(|z| log_bf_from_logit(z, self.eps)).collect())
    }

    pub fn classifier_output(&self, y: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.single_logit(y)?))
    }

    fn single_logit(&self, y: &[f64]) -> Result<f64> {
        self.check_len(y.len())?;
        let view = ArrayView2::from_shape((1, y.len()), y).expect("row shape");
        Ok(self.logits(view)?[0])
    }

    pub fn log_bf(&self, y: &[f64]) -> Result<f64> {
        Ok(log_bf_from_logit(self.single_logit(y)?, self.eps))
    }

    /// Bayes factor of the label-1 model against the other; `+∞` on overflow.
    pub fn bf(&self, y: &[f64]) -> Result<f64> {
        let z = self.single_logit(y)?;
        Ok(if self.eps == 0.0 { z.exp() } else { bf_from_probability(sigmoid(z), self.eps) })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let est: Self = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if est.format != CHECKPOINT_FORMAT || est.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint {} v{}", est.format, est.version)));
        }
        if est.net.has_batch_norm() && est.reference.is_none() {
            return Err(Error::Checkpoint("batch-normalized network without reference batch".into()));
        }
        Ok(est)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Free-function form of [`BfEstimator::bf`].
pub fn estimate_bf(est: &BfEstimator, y: &[f64]) -> Result<f64> {
    est.bf(y)
}

/// Free-function form of [`BfEstimator::log_bf`].
pub fn estimate_log_bf(est: &BfEstimator, y: &[f64]) -> Result<f64> {
    est.log_bf(y)
}

fn check_reversed(full: &BfEstimator, rev: &BfEstimator) -> Result<()> {
    if full.direction == rev.direction {
        return Err(invalid("the second estimator must be trained in the reverse direction"));
    }
    Ok(())
}

/// `BF₁₂(y) · BF₂₁(y[split])`: the Bayes factor of the held-out part given
/// the training part `y[split]`.
pub fn partial_bf(full: &BfEstimator, rev_sub: &BfEstimator, y: &[f64], split: &[usize]) -> Result<f64> {
    check_reversed(full, rev_sub)?;
    full.check_len(y.len())?;
    rev_sub.check_len(split.len())?;
    let mut seen = BTreeSet::new();
    for &i in split {
        if i >= y.len() || !seen.insert(i) {
            return Err(invalid(format!("split index {i} is out of range or repeated")));
        }
    }
    let x: Vec<f64> = split.iter().map(|&i| y[i]).collect();
    Ok(full.bf(y)? * rev_sub.bf(&x)?)
}

/// `BF(concat(y, y)) · BF_rev(y)`: training and held-out portions both equal `y`.
pub fn posterior_bf(double: &BfEstimator, rev: &BfEstimator, y: &[f64]) -> Result<f64> {
    check_reversed(double, rev)?;
    if double.n != 2 * y.len() {
        return Err(Error::Shape(format!("double-length estimator has n = {}, data has length {}", double.n, y.len())));
    }
    let yy: Vec<f64> = y.iter().chain(y.iter()).copied().collect();
    Ok(double.bf(&yy)? * rev.bf(y)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntrinsicMode {
    Arithmetic,
    Geometric,
}

/// `C(n, k)`, saturating at `u64::MAX`.
pub fn binomial_coefficient(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
        if c > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    c as u64
}

/// Next `k`-subset of `0..n` in lexicographic order, in place.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Subsets of `units` indices of size `k`: all of them in lexicographic order
/// when there are at most `limit`, else `limit` distinct random ones.
pub fn training_subsets(units: usize, k: usize, limit: usize, rng: &mut RngStream) -> Vec<Vec<usize>> {
    let total = binomial_coefficient(units, k);
    if total <= limit as u64 {
        let mut c: Vec<usize> = (0..k).collect();
        let mut out = vec![c.clone()];
        while next_combination(&mut c, units) {
            out.push(c.clone());
        }
        return out;
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(limit);
    let mut pool: Vec<usize> = (0..units).collect();
    while out.len() < limit {
        for i in 0..k {
            let j = i + rng.below((units - i) as u64) as usize;
            pool.swap(i, j);
        }
        let mut subset = pool[..k].to_vec();
        subset.sort_unstable();
        if seen.insert(subset.clone()) {
            out.push(subset);
        }
    }
    out
}

/// Intrinsic Bayes factor: `BF₁₂(y)` times the arithmetic or geometric mean of
/// `BF₂₁` over training subsets of `n_x` observation units.
pub fn intrinsic_bf(
    full: &BfEstimator,
    rev_sub: &BfEstimator,
    y: &[f64],
    n_x: usize,
    mode: IntrinsicMode,
    subset_limit: usize,
    rng: &mut RngStream,
) -> Result<f64> {
    check_reversed(full, rev_sub)?;
    full.check_len(y.len())?;
    let w = full.unit_width.max(1);
    let units = y.len() / w;
    if n_x < 1 || n_x >= units {
        return Err(invalid(format!("n_x must satisfy 1 <= n_x < {units}, got {n_x}")));
    }
    if subset_limit == 0 {
        return Err(invalid("subset_limit must be at least 1"));
    }
    rev_sub.check_len(n_x * w)?;
    let bf12 = full.bf(y)?;
    let subsets = training_subsets(units, n_x, subset_limit, rng);
    let mut acc = 0.0;
    for subset in &subsets {
        let x: Vec<f64> = subset.iter().flat_map(|&u| y[u * w..(u + 1) * w].iter().copied()).collect();
        acc += match mode {
            IntrinsicMode::Arithmetic => rev_sub.bf(&x)?,
            IntrinsicMode::Geometric => rev_sub.log_bf(&x)?,
        };
    }
    let mean = acc / subsets.len() as f64;
    Ok(match mode {
        IntrinsicMode::Arithmetic => bf12 * mean,
        IntrinsicMode::Geometric => bf12 * mean.exp(),
    })
}
