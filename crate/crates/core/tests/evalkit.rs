use deepbf_core::evalkit::{
    estimated_prior, evaluate, kde_integral, kl_between_samples, mse_surprise, roc_auc, surprise, ConstantBf,
    ExactOracle, FnEvaluator, Grid, Kde,
};
use deepbf_core::models::{make_builtin_pair, Hyperparams, ModelPair};
use deepbf_core::rngdist::RngStream;
use proptest::prelude::*;

fn pair(name: &str) -> ModelPair {
    make_builtin_pair(name, &Hyperparams::new()).unwrap()
}

#[test]
fn surprise_of_monotone_transforms_is_exact() {
    for name in ["data1", "data3"] {
        let p = pair(name);
        let scaled = FnEvaluator(|y: &[f64]| Ok(3.0 * p.exact_log_bf(y)? + 10f64.ln()));
        let cubed = FnEvaluator(|y: &[f64]| Ok(p.exact_log_bf(y)?.powi(3)));
        for est in [&scaled as &dyn deepbf_core::evalkit::BfEvaluator, &cubed, &ExactOracle(&p)] {
            assert_eq!(mse_surprise(est, &p, 2, 500, 3).unwrap(), 0.0, "{name}");
        }
    }
}

#[test]
fn exact_oracle_estimated_prior_is_near_one_half() {
    for (name, n) in [("data1", 2), ("data3", 2), ("data3", 8)] {
        let p = pair(name);
        let v = estimated_prior(&ExactOracle(&p), &p, n, 3000, 11).unwrap();
        assert!((0.45..=0.55).contains(&v), "{name} n={n}: {v}");
        if name == "data1" {
            assert!((v - 0.5).abs() < 0.03, "{v}");
        }
    }
}

#[test]
fn constant_estimators_give_limit_priors() {
    let p = pair("data1");
    assert_eq!(estimated_prior(&ConstantBf(0.0), &p, 2, 100, 1).unwrap(), 0.5);
    assert_eq!(estimated_prior(&ConstantBf(f64::INFINITY), &p, 2, 100, 1).unwrap(), 1.0);
}

#[test]
fn exact_oracle_report_is_perfect() {
    let p = pair("data3");
    let r = evaluate(&ExactOracle(&p), &p, 4, 400, 5).unwrap();
    assert_eq!(r.mse_log_bf, 0.0);
    assert_eq!(r.spearman_rho, 1.0);
    assert_eq!(r.kl_weighted, 0.0);
    assert_eq!(r.mse_surprise, 0.0);
    assert_eq!(r.auc_estimated, r.auc_exact);
    assert_eq!(r.sign_agreement, 1.0);
    assert_eq!(r.estimated_prior, r.estimated_prior_exact);
}

#[test]
fn gaussian_kl_matches_closed_form() {
    let mut rng = RngStream::new(17, 0);
    let a: Vec<f64> = (0..10_000).map(|_| rng.normal(0.0, 1.0)).collect();
    let b: Vec<f64> = (0..10_000).map(|_| rng.normal(1.0, 1.0)).collect();
    let kl = kl_between_samples(&a, &b, None).unwrap();
    assert!((kl - 0.5).abs() < 0.1, "{kl}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn auc_is_invariant_under_monotone_maps(
        a in prop::collection::vec(-5.0f64..5.0, 1..60),
        b in prop::collection::vec(-5.0f64..5.0, 1..60),
    ) {
        let base = roc_auc(&a, &b).unwrap().auc;
        for f in [|x: f64| x.exp(), |x: f64| 10.0 * x, |x: f64| x.powi(3) - 7.0] {
            let fa: Vec<f64> = a.iter().map(|x| f(*x)).collect();
            let fb: Vec<f64> = b.iter().map(|x| f(*x)).collect();
            prop_assert_eq!(roc_auc(&fa, &fb).unwrap().auc, base);
        }
    }

    #[test]
    fn surprise_tails_are_monotone(
        m1 in prop::collection::vec(-10.0f64..10.0, 1..50),
        m2 in prop::collection::vec(-10.0f64..10.0, 1..50),
        mut probes in prop::collection::vec(-12.0f64..12.0, 2..30),
    ) {
        probes.sort_by(f64::total_cmp);
        let tails: Vec<_> = probes.iter().map(|x| surprise(*x, &m1, &m2).unwrap()).collect();
        for w in tails.windows(2) {
            prop_assert!(w[1].p1 <= w[0].p1);
            prop_assert!(w[1].p2 >= w[0].p2);
        }
        for t in &tails {
            prop_assert!((0.0..=1.0).contains(&t.p1) && (0.0..=1.0).contains(&t.p2));
        }
    }

    #[test]
    fn kde_integrates_to_one(points in prop::collection::vec(-50.0f64..50.0, 2..300)) {
        let kde = Kde::new(&points).unwrap();
        let grid = Grid::spanning(&[&kde]);
        prop_assert!((kde_integral(&kde, &grid) - 1.0).abs() < 1e-2);
    }
}
