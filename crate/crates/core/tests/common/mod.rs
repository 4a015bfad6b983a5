//! Oracles shared by the integration tests, coded independently of the
//! library: marginal likelihoods by numerical quadrature over the parameter,
//! MPT cell probabilities as expanded polynomials, and a finite-difference
//! gradient check.

#![allow(dead_code)]

use deepbf_core::nn::{Arch, Batch, Network};
use deepbf_core::rngdist::RngStream;
use ndarray::Array2;
use statrs::distribution::{Beta, Continuous, Discrete, Exp, Gamma, Poisson};
use statrs::function::gamma::ln_gamma;

/// `log ∫ f` over `(lo, hi)` for a unimodal (log-concave) integrand given
/// on the log scale. The mode is located by ternary search, the range is
/// cut where the integrand falls 60 nats below the mode, and each side of
/// the mode is integrated separately after rescaling by the peak value.
fn log_integral(log_f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let grid = 4000;
    let mut best = (f64::NEG_INFINITY, lo);
    for i in 1..grid {
        let x = lo + (hi - lo) * i as f64 / grid as f64;
        let v = log_f(x);
        if v > best.0 {
            best = (v, x);
        }
    }
    let step = (hi - lo) / grid as f64;
    let (mut a, mut b) = ((best.1 - step).max(lo), (best.1 + step).min(hi));
    for _ in 0..200 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if log_f(m1) < log_f(m2) {
            a = m1;
        } else {
            b = m2;
        }
    }
    let mode = 0.5 * (a + b);
    let peak = log_f(mode).max(best.0);
    let cut = |mut inside: f64, mut outside: f64| {
        if log_f(outside) >= peak - 60.0 {
            return outside;
        }
        for _ in 0..200 {
            let mid = 0.5 * (inside + outside);
            if log_f(mid) >= peak - 60.0 {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        outside
    };
    let (left, right) = (cut(mode, lo), cut(mode, hi));
    let scaled = |x: f64| {
        let v = log_f(x) - peak;
        if v.is_finite() {
            v.exp()
        } else {
            0.0
        }
    };
    let total = quadrature::double_exponential::integrate(scaled, left, mode, 1e-15).integral
        + quadrature::double_exponential::integrate(scaled, mode, right, 1e-15).integral;
    peak + total.ln()
}

/// Upper end of a λ range holding essentially all of the mass of
/// `λ^(a−1) e^(−bλ)`.
fn lambda_upper(a: f64, b: f64) -> f64 {
    (a + 40.0 * a.sqrt() + 60.0) / b
}

/// NB(1, p) with p ~ Beta(alpha, beta): `∫ ∏ p (1 − p)^y_i · Beta(p) dp`.
pub fn nb1_beta_log_marginal(y: &[f64], alpha: f64, beta: f64) -> f64 {
    let prior = Beta::new(alpha, beta).unwrap();
    let log_f = |p: f64| {
        if !(p > 0.0 && p < 1.0) {
            return f64::NEG_INFINITY;
        }
        let lik: f64 = y.iter().map(|&yi| p.ln() + if yi > 0.0 { yi * (-p).ln_1p() } else { 0.0 }).sum();
        lik + prior.ln_pdf(p)
    };
    log_integral(log_f, 0.0, 1.0)
}

/// Poisson(λ) with λ ~ Gamma(shape, rate).
pub fn poisson_gamma_log_marginal(y: &[f64], shape: f64, rate: f64) -> f64 {
    let prior = Gamma::new(shape, rate).unwrap();
    let total: f64 = y.iter().sum();
    let hi = lambda_upper(total + shape, y.len() as f64 + rate);
    let log_f = |lambda: f64| {
        if lambda <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let pois = Poisson::new(lambda).unwrap();
        let lik: f64 = y.iter().map(|&yi| pois.ln_pmf(yi as u64)).sum();
        lik + prior.ln_pdf(lambda)
    };
    log_integral(log_f, 0.0, hi)
}

/// Exp(λ) with λ ~ Gamma(shape, rate).
pub fn exp_gamma_log_marginal(y: &[f64], shape: f64, rate: f64) -> f64 {
    let prior = Gamma::new(shape, rate).unwrap();
    let total: f64 = y.iter().sum();
    let hi = lambda_upper(y.len() as f64 + shape, total + rate);
    let log_f = |lambda: f64| {
        if lambda <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let e = Exp::new(lambda).unwrap();
        let lik: f64 = y.iter().map(|&yi| e.ln_pdf(yi)).sum();
        lik + prior.ln_pdf(lambda)
    };
    log_integral(log_f, 0.0, hi)
}

/// Exp(rate) with no free parameter.
pub fn exp_fixed_log_likelihood(y: &[f64], rate: f64) -> f64 {
    let e = Exp::new(rate).unwrap();
    y.iter().map(|&yi| e.ln_pdf(yi)).sum()
}

pub fn data1_log_bf_quad(y: &[f64], h: [f64; 4]) -> f64 {
    nb1_beta_log_marginal(y, h[0], h[1]) - poisson_gamma_log_marginal(y, h[2], h[3])
}

pub fn data3_log_bf_quad(y: &[f64]) -> f64 {
    exp_gamma_log_marginal(y, 2.0, 2.0) - exp_fixed_log_likelihood(y, 3.0)
}

/// The published two-observation closed form for data1, with
/// `Γ(n+β₂)^(Y·+α₂)` read as `(n+β₂)^(Y·+α₂)` and `Γ(2+Y·+α₁+β₁)` as
/// `Γ(n+Y·+α₁+β₁)`.
pub fn data1_published_log_bf(y: &[f64], h: [f64; 4]) -> f64 {
    let [a1, b1, a2, b2] = h;
    let n = y.len() as f64;
    let s: f64 = y.iter().sum();
    let log_fact: f64 = y.iter().map(|&v| ln_gamma(v + 1.0)).sum();
    ln_gamma(a1 + b1) + ln_gamma(n + a1) + ln_gamma(s + b1) + ln_gamma(a2) + (s + a2) * (n + b2).ln() + log_fact
        - ln_gamma(a1)
        - ln_gamma(b1)
        - ln_gamma(n + s + a1 + b1)
        - ln_gamma(s + a2)
        - a2 * b2.ln()
}

/// PD tree cells, expanded into monomials in (A, B, C).
pub fn pd_cells(a: f64, b: f64, c: f64) -> [f64; 6] {
    [
        a + b + c - a * b - a * c - b * c + a * b * c,
        1.0 - a - b + a * b + a * c + b * c - a * b * c,
        b + c - a * b - b * c + a * b * c,
        1.0 - b + a * b + b * c - a * b * c,
        b + c - b * c,
        1.0 - b + b * c,
    ]
}

/// Stroop tree cells, expanded into monomials in (A, B, C).
pub fn stroop_cells(a: f64, b: f64, c: f64) -> [f64; 6] {
    [
        a + b + c - a * b - a * c - b * c + a * b * c,
        1.0 - a - b + a * b + b * c - a * b * c,
        b + c - a * b - a * c - b * c + a * b * c,
        1.0 - b + a * b + b * c - a * b * c,
        b + c - b * c,
        1.0 - b + b * c,
    ]
}

/// `|exp(a − b) − 1|`: relative error of a Bayes factor given on the log scale.
pub fn bf_relative_error(log_a: f64, log_b: f64) -> f64 {
    (log_a - log_b).exp_m1().abs()
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;
/// Denominator floor. Central differences resolve the loss only to about
/// `ulp(loss) / 2h ≈ 1e-11`, so exactly-zero gradients (biases feeding a
/// batch norm) need an absolute scale well above that.
pub const FD_FLOOR: f64 = 1e-6;

fn fd_random_batch(rows: usize, cols: usize, rng: &mut RngStream) -> Batch {
    let x = Array2::from_shape_fn((rows, cols), |_| rng.normal(0.0, 1.5));
    let labels = (0..rows).map(|i| (i % 2) as f64).collect();
    Batch::new(x, labels).unwrap()
}

/// Compares backprop against central differences on one random network.
/// Returns `(checked, skipped)` coordinate counts.
pub fn fd_gradient_check(arch: Arch, cols: usize, seed: u64) -> Result<(usize, usize), String> {
    let mut rng = RngStream::new(seed, 0);
    let mut net = Network::build(&arch, cols, &mut rng).map_err(|e| e.to_string())?;
    let batch = fd_random_batch(8, cols, &mut rng);
    let (_, grads) = net.backward(&batch).unwrap();
    let blocks: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
    let (mut checked, mut skipped) = (0, 0);
    for (b, len) in blocks.iter().enumerate() {
        for i in 0..*len {
            let orig = net.params()[b][i];
            let pattern = net.activation_pattern(batch.x.view()).unwrap();
            let mut probe = |delta: f64| {
                net.params_mut()[b][i] = orig + delta;
                let out = (net.loss(&batch).unwrap(), net.activation_pattern(batch.x.view()).unwrap());
                net.params_mut()[b][i] = orig;
                out
            };
            let (plus, pattern_plus) = probe(FD_STEP);
            let (minus, pattern_minus) = probe(-FD_STEP);
            // the step crosses a ReLU kink, where the loss is not differentiable
            if pattern_plus != pattern || pattern_minus != pattern {
                skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let analytic = grads.0[b][i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR);
            if rel >= FD_TOL {
                return Err(format!("{arch:?} block {b} index {i}: analytic {analytic} numeric {numeric} rel {rel}"));
            }
            checked += 1;
        }
    }
    // a row that silences a whole layer leaves the next pre-activations at
    // exactly their zero bias, a true nondifferentiable point
    if skipped >= checked {
        return Err(format!("{arch:?}: too many kink skips: {skipped} of {}", checked + skipped));
    }
    Ok((checked, skipped))
}
