//! Stratified rank-based ABC estimate of the Bayes factor.
//!
//! A reference pool of `M` datasets is simulated with model labels drawn by
//! the prior model probabilities and processed in `m` strata. Each stratum
//! keeps the `k̃` nearest datasets per query; the survivors of all strata are
//! merged into the global `k` nearest, whose label counts give the estimate
//! `π₂(n₁ + 1) / (π₁(n₂ + 1))`.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::models::ModelPair;
use crate::rngdist::RngStream;

const ABC_STREAM: u64 = 0x6162_6300;

/// User-supplied summary statistic.
pub type SummaryFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Map from a dataset to the vector the distance is computed on.
#[derive(Clone, Default)]
pub enum Summary {
    #[default]
    Identity,
    Custom(SummaryFn),
}

impl fmt::Debug for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Summary::Identity => f.write_str("Identity"),
            Summary::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    #[default]
    Euclidean,
    /// Euclidean distance between the sorted summaries (exchangeable data).
    EuclideanOnSorted,
}

#[derive(Debug, Clone)]
pub struct AbcConfig {
    pub total_samples: usize,
    pub strata: usize,
    pub per_stratum_keep: usize,
    pub final_keep: usize,
    pub summary: Summary,
    pub distance: Distance,
}

impl AbcConfig {
    pub fn new(total_samples: usize, strata: usize, per_stratum_keep: usize, final_keep: usize) -> Result<Self> {
        let cfg = Self {
            total_samples,
            strata,
            per_stratum_keep,
            final_keep,
            summary: Summary::Identity,
            distance: Distance::Euclidean,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `M = 1 200 000`, `m = 1200`, `k̃ = 5`, `k = 120`.
    pub fn full_budget() -> Self {
        Self::new(1_200_000, 1200, 5, 120).expect("valid")
    }

    /// `M = 100 000`, `m = 100`, `k̃ = 10`, `k = 100`.
    pub fn scaled() -> Self {
        Self::new(100_000, 100, 10, 100).expect("valid")
    }

    pub fn with_distance(mut self, distance: Distance) -> Self {
        self.distance = distance;
        self
    }

    pub fn with_summary(mut self, summary: Summary) -> Self {
        self.summary = summary;
        self
    }

    pub fn stratum_size(&self) -> usize {
        self.total_samples / self.strata
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_samples == 0 || self.strata == 0 || self.per_stratum_keep == 0 {
            return Err(invalid("total_samples, strata and per_stratum_keep must be positive"));
        }
        if !self.total_samples.is_multiple_of(self.strata) {
            return Err(invalid(format!(
                "strata = {} does not divide total_samples = {}",
                self.strata, self.total_samples
            )));
        }
        if self.final_keep < 2 {
            return Err(invalid("final_keep must be at least 2"));
        }
        if self.per_stratum_keep > self.stratum_size() {
            return Err(invalid("per_stratum_keep exceeds the stratum size"));
        }
        if self.strata.saturating_mul(self.per_stratum_keep) < self.final_keep {
            return Err(invalid("strata * per_stratum_keep must be at least final_keep"));
        }
        Ok(())
    }
}

/// One reference dataset retained for a query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Survivor {
    pub distance: f64,
    pub stratum: usize,
    pub index: usize,
    /// `true` when the dataset came from the pair's first model.
    pub from_m1: bool,
}

impl Survivor {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.stratum.cmp(&other.stratum))
            .then(self.index.cmp(&other.index))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbcResult {
    pub estimate: f64,
    pub n1: usize,
    pub n2: usize,
    /// Whether the stratified selection provably equals the global top-k.
    pub exact: bool,
}

/// `π₂(n₁ + 1) / (π₁(n₂ + 1))`.
pub fn smoothed_estimate(n1: usize, n2: usize, prior_m1: f64, prior_m2: f64) -> f64 {
    (prior_m2 * (n1 as f64 + 1.0)) / (prior_m1 * (n2 as f64 + 1.0))
}

/// Indices of the `keep` smallest distances, ordered by (distance, index).
pub fn stratum_topk(distances: &[f64], keep: usize) -> Vec<usize> {
    let keep = keep.min(distances.len());
    if keep == 0 {
        return Vec::new();
    }
    let cmp = |a: &usize, b: &usize| distances[*a].total_cmp(&distances[*b]).then(a.cmp(b));
    let mut idx: Vec<usize> = (0..distances.len()).collect();
    if keep < idx.len() {
        idx.select_nth_unstable_by(keep - 1, cmp);
        idx.truncate(keep);
    }
    idx.sort_unstable_by(cmp);
    idx
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

struct QueryState {
    top: Vec<Survivor>,
    /// Smallest key any stratum discarded.
    min_dropped: Option<Survivor>,
}

fn summarize(cfg: &AbcConfig, y: &[f64]) -> Vec<f64> {
    let mut s = match &cfg.summary {
        Summary::Identity => y.to_vec(),
        Summary::Custom(f) => f(y),
    };
    if cfg.distance == Distance::EuclideanOnSorted {
        s.sort_by(f64::total_cmp);
    }
    s
}

fn check_queries(queries: &[Vec<f64>], cfg: &AbcConfig) -> Result<(usize, Vec<Vec<f64>>)> {
    let n = match queries.first() {
        Some(q) => q.len(),
        None => return Err(invalid("no query datasets")),
    };
    if n == 0 || queries.iter().any(|q| q.len() != n) {
        return Err(Error::Shape("queries must be non-empty and share one length".into()));
    }
    let qsum: Vec<Vec<f64>> = queries.iter().map(|q| summarize(cfg, q)).collect();
    if qsum.iter().any(|s| s.len() != qsum[0].len()) {
        return Err(Error::Shape("summary statistic length varies across queries".into()));
    }
    Ok((n, qsum))
}

/// Simulates reference datasets `range` of the pool as `(from_m1, data)`.
///
/// The pool is drawn in the pair's canonical orientation so that a swapped
/// pair sees the same datasets with exchanged labels.
pub fn reference_datasets(
    pair: &ModelPair,
    n: usize,
    range: std::ops::Range<usize>,
    seed: u64,
) -> Result<Vec<(bool, Vec<f64>)>> {
    let (canon_first, canon_second, canon_prior) =
        if pair.is_swapped() { (&pair.m2, &pair.m1, pair.prior_m2) } else { (&pair.m1, &pair.m2, pair.prior_m1) };
    let root = RngStream::new(seed, ABC_STREAM);
    range
        .into_par_iter()
        .map(|g| {
            let mut rng = root.substream(g as u64);
            let canon_is_first = rng.uniform() < canon_prior;
            let model = if canon_is_first { canon_first } else { canon_second };
            Ok((canon_is_first != pair.is_swapped(), model.simulate_dataset(n, &mut rng)?))
        })
        .collect()
}

fn run(pair: &ModelPair, queries: &[Vec<f64>], cfg: &AbcConfig, seed: u64) -> Result<Vec<QueryState>> {
    cfg.validate()?;
    let (n, qsum) = check_queries(queries, cfg)?;
    let dim = qsum[0].len();
    let size = cfg.stratum_size();
    let mut states: Vec<QueryState> =
        queries.iter().map(|_| QueryState { top: Vec::with_capacity(cfg.final_keep), min_dropped: None }).collect();

    for stratum in 0..cfg.strata {
        let pool: Vec<(bool, Vec<f64>)> = reference_datasets(pair, n, stratum * size..(stratum + 1) * size, seed)?
            .into_iter()
            .map(|(label, y)| (label, summarize(cfg, &y)))
            .collect();
        if pool.iter().any(|(_, s)| s.len() != dim) {
            return Err(Error::Shape("summary statistic length differs between queries and simulations".into()));
        }
        states.par_iter_mut().zip(qsum.par_iter()).for_each(|(state, q)| {
            let distances: Vec<f64> = pool.iter().map(|(_, s)| squared_distance(q, s)).collect();
            let order = stratum_topk(&distances, cfg.per_stratum_keep + 1);
            let to_survivor = |i: usize| Survivor { distance: distances[i], stratum, index: i, from_m1: pool[i].0 };
            if let Some(&dropped) = order.get(cfg.per_stratum_keep) {
                let d = to_survivor(dropped);
                if state.min_dropped.is_none_or(|m| d.key_cmp(&m) == Ordering::Less) {
                    state.min_dropped = Some(d);
                }
            }
            let mut merged = Vec::with_capacity(state.top.len() + cfg.per_stratum_keep);
            merged.extend(state.top.iter().copied());
            merged.extend(order.iter().take(cfg.per_stratum_keep).map(|&i| to_survivor(i)));
            merged.sort_by(Survivor::key_cmp);
            merged.truncate(cfg.final_keep);
            state.top = merged;
        });
    }
    Ok(states)
}

/// Estimate the Bayes factor of `pair.m1` against `pair.m2` for every query.
/// Distances are squared Euclidean, which ranks identically to Euclidean.
pub fn abc_estimate_batch(
    pair: &ModelPair,
    queries: &[Vec<f64>],
    cfg: &AbcConfig,
    seed: u64,
) -> Result<Vec<AbcResult>> {
    let (pi1, pi2) = pair.priors();
    Ok(run(pair, queries, cfg, seed)?
        .into_iter()
        .map(|state| {
            let n1 = state.top.iter().filter(|s| s.from_m1).count();
            let n2 = state.top.len() - n1;
            let kth = state.top.last().expect("final_keep >= 2");
            // A dropped dataset belongs in the global top-k exactly when the
            // smallest dropped key precedes the k-th selected key.
            let exact = state.min_dropped.is_none_or(|d| d.key_cmp(kth) == Ordering::Greater);
            AbcResult { estimate: smoothed_estimate(n1, n2, pi1, pi2), n1, n2, exact }
        })
        .collect())
}

/// The `k` retained reference datasets of each query, in selection order.
pub fn abc_survivors(pair: &ModelPair, queries: &[Vec<f64>], cfg: &AbcConfig, seed: u64) -> Result<Vec<Vec<Survivor>>> {
    Ok(run(pair, queries, cfg, seed)?.into_iter().map(|s| s.top).collect())
}
