mod common;

use common::*;
use deepbf_core::models::{make_builtin_pair, mpt_cell_probabilities, Hyperparams, ModelPair, MptTree};
use deepbf_core::rngdist::RngStream;
use statrs::distribution::{Continuous, Normal};

fn pair(name: &str, h: &[(&str, f64)]) -> ModelPair {
    let hyper: Hyperparams = h.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    make_builtin_pair(name, &hyper).unwrap()
}

fn data1(h: [f64; 4]) -> ModelPair {
    pair("data1", &[("alpha1", h[0]), ("beta1", h[1]), ("alpha2", h[2]), ("beta2", h[3])])
}

/// 100 datasets of length `n`, alternating between the two models.
fn datasets(p: &ModelPair, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let root = RngStream::new(seed, n as u64);
    (0..100).map(|i| p.model(i % 2).simulate_dataset(n, &mut root.substream(i as u64)).unwrap()).collect()
}

#[test]
fn data1_matches_quadrature() {
    for h in [[1.0, 1.0, 1.0, 1.0], [2.0, 2.0, 4.0, 4.0], [0.7, 3.0, 2.5, 0.5]] {
        let p = data1(h);
        for n in [1, 2, 8, 32] {
            for y in datasets(&p, n, 11) {
                let exact = p.exact_log_bf(&y).unwrap();
                let quad = data1_log_bf_quad(&y, h);
                assert!(bf_relative_error(exact, quad) < 1e-6, "h={h:?} y={y:?}: {exact} vs {quad}");
            }
        }
    }
}

#[test]
fn data3_matches_quadrature() {
    let p = pair("data3", &[]);
    for n in [1, 2, 8, 32] {
        for y in datasets(&p, n, 12) {
            let exact = p.exact_log_bf(&y).unwrap();
            let quad = data3_log_bf_quad(&y);
            assert!(bf_relative_error(exact, quad) < 1e-6, "y={y:?}: {exact} vs {quad}");
        }
    }
}

#[test]
fn data1_agrees_with_published_two_point_formula() {
    for h in [[1.0, 1.0, 1.0, 1.0], [2.0, 2.0, 4.0, 4.0]] {
        let p = data1(h);
        for y0 in 0..15 {
            for y1 in 0..15 {
                let y = [y0 as f64, y1 as f64];
                let exact = p.exact_log_bf(&y).unwrap();
                let published = data1_published_log_bf(&y, h);
                assert!((exact - published).abs() < 1e-9, "{y:?}: {exact} vs {published}");
            }
        }
    }
}

#[test]
fn exact_values_at_reference_points() {
    assert!(data1([1.0; 4]).exact_log_bf(&[0.0, 0.0]).unwrap().abs() < 1e-12);
    let bf = pair("data3", &[]).exact_log_bf(&[0.0]).unwrap().exp();
    assert!((bf - 1.0 / 3.0).abs() < 1e-14, "{bf}");
}

#[test]
fn antisymmetry_is_exact() {
    for p in [data1([1.0; 4]), data1([2.0, 2.0, 4.0, 4.0]), pair("data3", &[]), pair("data2", &[])] {
        let s = p.swapped();
        for n in [1, 2, 8] {
            for y in datasets(&p, n, 13) {
                assert_eq!(p.exact_log_bf(&y).unwrap(), -s.exact_log_bf(&y).unwrap());
            }
        }
    }
}

#[test]
fn data2_mixture_marginal_matches_monte_carlo() {
    let p = pair("data2", &[]);
    let (means, prior_sd, sd) = ([2.0, -2.0], 1.5, 2.0);
    let draws = 200_000;
    for n in [1, 3, 10] {
        let y = p.m1.simulate_dataset(n, &mut RngStream::new(21, n as u64)).unwrap();
        let exact = p.m1.exact_log_marginal(&y).unwrap().exp();
        let mut rng = RngStream::new(22, n as u64);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..draws {
            let c1 = Normal::new(rng.normal(means[0], prior_sd), sd).unwrap();
            let c2 = Normal::new(rng.normal(means[1], prior_sd), sd).unwrap();
            let lik: f64 = y.iter().map(|&v| 0.5 * c1.pdf(v) + 0.5 * c2.pdf(v)).product();
            sum += lik;
            sum_sq += lik * lik;
        }
        let mean = sum / draws as f64;
        let se = ((sum_sq / draws as f64 - mean * mean) / draws as f64).sqrt();
        assert!((exact - mean).abs() < 3.0 * se, "n={n}: exact {exact}, MC {mean} ± {se}");
    }
}

#[test]
fn simulated_data_lies_in_support() {
    for p in [data1([1.0; 4]), pair("data2", &[]), pair("data3", &[]), pair("mpt", &[])] {
        let n = 6 * p.unit_width();
        for model in 0..2 {
            let mut rng = RngStream::new(5, model as u64);
            for _ in 0..200 {
                let y = p.model(model).simulate_dataset(n, &mut rng).unwrap();
                assert!(y.iter().all(|v| p.support().contains(*v)), "{} {model}: {y:?}", p.name);
            }
        }
    }
    let y = pair("data3", &[]).m2.simulate_dataset(1000, &mut RngStream::new(6, 0)).unwrap();
    assert!(y.iter().all(|v| *v >= 0.0));
}

#[test]
fn poisson_draws_center_on_their_rate() {
    let p = data1([1.0; 4]);
    let n = 10_000;
    for seed in 0..5 {
        let (theta, y) = p.m2.simulate_with_params(n, &mut RngStream::new(seed, 7)).unwrap();
        let lambda = theta[0];
        let mean = y.iter().sum::<f64>() / n as f64;
        let se = (lambda / n as f64).sqrt();
        assert!((mean - lambda).abs() < 4.0 * se, "λ={lambda}, mean={mean}");
    }
}

#[test]
fn poisson_gamma_predictive_mean() {
    let p = data1([1.0, 1.0, 2.0, 3.0]);
    let y_obs = [4.0, 0.0, 2.0, 7.0, 1.0];
    let draws = p.m2.posterior_predictive_sample(&y_obs, 200_000, &mut RngStream::new(8, 0)).unwrap();
    // θ ~ Gamma(α₂ + s, β₂ + n), Ỹ | θ ~ Poisson(θ)
    let (shape, rate) = (2.0 + 14.0, 3.0 + 5.0);
    let mean = shape / rate;
    let var = mean + shape / (rate * rate);
    let m = draws.iter().sum::<f64>() / draws.len() as f64;
    assert!((m - mean).abs() < 4.0 * (var / draws.len() as f64).sqrt(), "{m} vs {mean}");
}

#[test]
fn geometric_predictive_concentrates_on_zero() {
    let p = data1([1.0; 4]);
    let mut last = 0.0;
    for n in [10, 100, 10_000] {
        let y_obs = vec![0.0; n];
        let draws = p.m1.posterior_predictive_sample(&y_obs, 20_000, &mut RngStream::new(9, n as u64)).unwrap();
        let zeros = draws.iter().filter(|v| **v == 0.0).count() as f64 / draws.len() as f64;
        assert!(zeros >= last - 0.01, "n={n}: {zeros} after {last}");
        last = zeros;
    }
    assert!(last > 0.99, "{last}");
}

#[test]
fn mpt_cells_match_table() {
    let mut rng = RngStream::new(10, 0);
    for _ in 0..10_000 {
        let (a, b, c) = (rng.uniform(), rng.uniform(), rng.uniform());
        let pd = mpt_cell_probabilities(MptTree::PD, a, b, c);
        let st = mpt_cell_probabilities(MptTree::Stroop, a, b, c);
        let (pd_ref, st_ref) = (pd_cells(a, b, c), stroop_cells(a, b, c));
        for j in 0..6 {
            assert!((pd[j] - pd_ref[j]).abs() < 1e-12, "PD cell {}", j + 1);
            assert!((st[j] - st_ref[j]).abs() < 1e-12, "Stroop cell {}", j + 1);
            assert!((0.0..=1.0).contains(&pd[j]) && (0.0..=1.0).contains(&st[j]));
        }
        assert_eq!(pd[4].to_bits(), st[4].to_bits());
        assert_eq!(pd[5].to_bits(), st[5].to_bits());
    }
}
