//! Seeded random streams and exact samplers for the simulator families.
//!
//! Every stream is a xoshiro256++ generator keyed by `(seed, stream_id)`.
//! Substreams are derived from the key alone, so handing stream `i` to
//! worker `i` gives the same draws no matter how work is scheduled.

use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Result};

const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix_key(seed: u64, stream_id: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(stream_id ^ 0xD6E8_FEB8_6659_FD93).rotate_left(17))
}

/// A deterministic random stream identified by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: Xoshiro256PlusPlus,
    spare_normal: Option<f64>,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id, inner: Xoshiro256PlusPlus::seed_from_u64(mix_key(seed, stream_id)), spare_normal: None }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream keyed on this stream's identity and `index`. Independent
    /// of how many draws have been taken from `self`.
    pub fn substream(&self, index: u64) -> RngStream {
        RngStream::new(self.seed, mix_key(self.stream_id, index.wrapping_add(1)))
    }

    /// A fresh child stream that depends on the current position, advancing `self`.
    pub fn fork(&mut self) -> RngStream {
        let id = self.next_u64();
        RngStream::new(self.seed, id)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * INV_2_53
    }

    /// Uniform on the open interval `(0, 1)`.
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
    }

    /// Uniform integer in `0..bound`.
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        // Lemire's multiply-shift with rejection.
        loop {
            let x = self.next_u64();
            let m = (x as u128) * (bound as u128);
            let low = m as u64;
            if low >= bound.wrapping_neg() % bound {
                return (m >> 64) as u64;
            }
        }
    }

    /// Standard normal via the polar Box–Muller method.
    pub fn std_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare_normal = Some(v * f);
                return u * f;
            }
        }
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.std_normal()
    }

    pub fn exponential(&mut self, rate: f64) -> f64 {
        -self.uniform_open().ln() / rate
    }

    /// Gamma(shape, rate) by Marsaglia–Tsang, boosted for shape < 1.
    pub fn gamma(&mut self, shape: f64, rate: f64) -> f64 {
        if shape < 1.0 {
            let g = self.gamma_unit(shape + 1.0);
            let u = self.uniform_open();
            return g * u.powf(1.0 / shape) / rate;
        }
        self.gamma_unit(shape) / rate
    }

    fn gamma_unit(&mut self, shape: f64) -> f64 {
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let (x, v) = loop {
                let x = self.std_normal();
                let v = 1.0 + c * x;
                if v > 0.0 {
                    break (x, v * v * v);
                }
            };
            let u = self.uniform_open();
            let x2 = x * x;
            if u < 1.0 - 0.0331 * x2 * x2 {
                return d * v;
            }
            if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
                return d * v;
            }
        }
    }

    pub fn beta(&mut self, a: f64, b: f64) -> f64 {
        let x = self.gamma(a, 1.0);
        let y = self.gamma(b, 1.0);
        let s = x + y;
        if s > 0.0 {
            x / s
        } else if a >= b {
            // both gammas underflowed; fall back on the larger shape
            1.0
        } else {
            0.0
        }
    }

    /// Poisson by sequential-search inversion for small means and the PTRS
    /// transformed-rejection sampler otherwise.
    pub fn poisson(&mut self, mean: f64) -> f64 {
        if mean <= 0.0 {
            return 0.0;
        }
        if mean <= 30.0 {
            let mut k = 0.0;
            let mut p = (-mean).exp();
            let mut cdf = p;
            let u = self.uniform();
            while u > cdf {
                k += 1.0;
                p *= mean / k;
                let next = cdf + p;
                if next == cdf {
                    break;
                }
                cdf = next;
            }
            return k;
        }
        let slam = mean.sqrt();
        let loglam = mean.ln();
        let b = 0.931 + 2.53 * slam;
        let a = -0.059 + 0.02483 * b;
        let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        let vr = 0.9277 - 3.6224 / (b - 2.0);
        loop {
            let u = self.uniform() - 0.5;
            let v = self.uniform_open();
            let us = 0.5 - u.abs();
            let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
            if us >= 0.07 && v <= vr {
                return k;
            }
            if k < 0.0 || (us < 0.013 && v > us) {
                continue;
            }
            if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln() <= -mean + k * loglam - ln_gamma(k + 1.0) {
                return k;
            }
        }
    }

    /// Negative binomial with `P(Y = y) ∝ p^r (1 - p)^y`, `y = 0, 1, ...`.
    pub fn neg_binomial(&mut self, r: f64, p: f64) -> f64 {
        if p >= 1.0 {
            return 0.0;
        }
        if r == 1.0 {
            // geometric by inversion
            let u = self.uniform_open();
            return (u.ln() / (-p).ln_1p()).floor();
        }
        let lambda = self.gamma(r, p / (1.0 - p));
        self.poisson(lambda)
    }

    /// Binomial by inversion for small `trials·p` and BTRS otherwise.
    pub fn binomial(&mut self, trials: u64, p: f64) -> f64 {
        if trials == 0 || p <= 0.0 {
            return 0.0;
        }
        if p >= 1.0 {
            return trials as f64;
        }
        if p > 0.5 {
            return trials as f64 - self.binomial(trials, 1.0 - p);
        }
        let n = trials as f64;
        let q = 1.0 - p;
        if n * p < 10.0 {
            let s = p / q;
            let a = (n + 1.0) * s;
            loop {
                let mut r = q.powf(n);
                let mut u = self.uniform();
                let mut k = 0.0;
                let mut ok = true;
                while u > r {
                    u -= r;
                    k += 1.0;
                    if k > n {
                        ok = false;
                        break;
                    }
                    r *= a / k - s;
                }
                if ok {
                    return k;
                }
            }
        }
        let spq = (n * p * q).sqrt();
        let b = 1.15 + 2.53 * spq;
        let a = -0.0873 + 0.0248 * b + 0.01 * p;
        let c = n * p + 0.5;
        let vr = 0.92 - 4.2 / b;
        let alpha = (2.83 + 5.1 / b) * spq;
        let lpq = (p / q).ln();
        let m = ((n + 1.0) * p).floor();
        let h = ln_gamma(m + 1.0) + ln_gamma(n - m + 1.0);
        loop {
            let u = self.uniform() - 0.5;
            let v = self.uniform_open();
            let us = 0.5 - u.abs();
            let k = ((2.0 * a / us + b) * u + c).floor();
            if k < 0.0 || k > n {
                continue;
            }
            if us >= 0.07 && v <= vr {
                return k;
            }
            let lhs = (v * alpha / (a / (us * us) + b)).ln();
            if lhs <= h - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0) + (k - m) * lpq {
                return k;
            }
        }
    }

    /// Index drawn with probability proportional to `weights`.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let target = self.uniform() * total;
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if target < acc {
                return i;
            }
        }
        // rounding left target at the top edge; take the last positive weight
        weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    }
}

/// A named distribution with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistSpec {
    Uniform01,
    Normal { mean: f64, sd: f64 },
    Gamma { shape: f64, rate: f64 },
    Beta { a: f64, b: f64 },
    Exponential { rate: f64 },
    Poisson { mean: f64 },
    NegBinomial { r: f64, p: f64 },
    Binomial { trials: u64, p: f64 },
    Categorical { weights: Vec<f64> },
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite and > 0, got {x}")))
    }
}

fn probability(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(invalid(format!("{name} must lie in [0, 1], got {x}")))
    }
}

impl DistSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DistSpec::Uniform01 => Ok(()),
            DistSpec::Normal { mean, sd } => {
                if !mean.is_finite() {
                    return Err(invalid("normal mean must be finite"));
                }
                positive("normal sd", *sd)
            }
            DistSpec::Gamma { shape, rate } => {
                positive("gamma shape", *shape)?;
                positive("gamma rate", *rate)
            }
            DistSpec::Beta { a, b } => {
                positive("beta a", *a)?;
                positive("beta b", *b)
            }
            DistSpec::Exponential { rate } => positive("exponential rate", *rate),
            DistSpec::Poisson { mean } => positive("poisson mean", *mean),
            DistSpec::NegBinomial { r, p } => {
                positive("negative binomial r", *r)?;
                probability("negative binomial p", *p)?;
                if *p == 0.0 {
                    return Err(invalid("negative binomial p must be > 0"));
                }
                Ok(())
            }
            DistSpec::Binomial { p, .. } => probability("binomial p", *p),
            DistSpec::Categorical { weights } => {
                if weights.is_empty() {
                    return Err(invalid("categorical weights are empty"));
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(invalid("categorical weights must be finite and nonnegative"));
                }
                if weights.iter().sum::<f64>() <= 0.0 {
                    return Err(invalid("categorical weights must have a positive sum"));
                }
                Ok(())
            }
        }
    }

    /// One draw. Discrete families return integral values (categorical
    /// returns the category index).
    pub fn sample(&self, rng: &mut RngStream) -> Result<f64> {
        self.validate()?;
        Ok(match self {
            DistSpec::Uniform01 => rng.uniform(),
            DistSpec::Normal { mean, sd } => rng.normal(*mean, *sd),
            DistSpec::Gamma { shape, rate } => rng.gamma(*shape, *rate),
            DistSpec::Beta { a, b } => rng.beta(*a, *b),
            DistSpec::Exponential { rate } => rng.exponential(*rate),
            DistSpec::Poisson { mean } => rng.poisson(*mean),
            DistSpec::NegBinomial { r, p } => rng.neg_binomial(*r, *p),
            DistSpec::Binomial { trials, p } => rng.binomial(*trials, *p),
            DistSpec::Categorical { weights } => rng.categorical(weights) as f64,
        })
    }

    /// Analytic mean and variance, where both exist.
    pub fn moments(&self) -> Option<(f64, f64)> {
        Some(match self {
            DistSpec::Uniform01 => (0.5, 1.0 / 12.0),
            DistSpec::Normal { mean, sd } => (*mean, sd * sd),
            DistSpec::Gamma { shape, rate } => (shape / rate, shape / (rate * rate)),
            DistSpec::Beta { a, b } => {
                let s = a + b;
                (a / s, a * b / (s * s * (s + 1.0)))
            }
            DistSpec::Exponential { rate } => (1.0 / rate, 1.0 / (rate * rate)),
            DistSpec::Poisson { mean } => (*mean, *mean),
            DistSpec::NegBinomial { r, p } => (r * (1.0 - p) / p, r * (1.0 - p) / (p * p)),
            DistSpec::Binomial { trials, p } => {
                let n = *trials as f64;
                (n * p, n * p * (1.0 - p))
            }
            DistSpec::Categorical { weights } => {
                let total: f64 = weights.iter().sum();
                let mean: f64 = weights.iter().enumerate().map(|(i, w)| i as f64 * w).sum::<f64>() / total;
                let second: f64 = weights.iter().enumerate().map(|(i, w)| (i * i) as f64 * w).sum::<f64>() / total;
                (mean, second - mean * mean)
            }
        })
    }
}
