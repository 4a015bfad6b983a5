use deepbf_core::criticism::{criticize, MIN_REPLICATES};
use deepbf_core::models::{make_builtin_pair, Hyperparams, Model, ModelSpec, Support};
use deepbf_core::rngdist::RngStream;
use deepbf_core::Result;

/// Predictive mass sits entirely on one value.
#[derive(Debug)]
struct PointMass(f64);

impl Model for PointMass {
    fn id(&self) -> &str {
        "point_mass"
    }

    fn param_dim(&self) -> usize {
        0
    }

    fn support(&self) -> Support {
        Support::Reals
    }

    fn sample_prior(&self, _rng: &mut RngStream) -> Vec<f64> {
        Vec::new()
    }

    fn sample_data_into(&self, _theta: &[f64], out: &mut [f64], _rng: &mut RngStream) -> Result<()> {
        out.fill(self.0);
        Ok(())
    }

    fn has_posterior_predictive(&self) -> bool {
        true
    }

    fn posterior_predictive(&self, _y_obs: &[f64], m: usize, _rng: &mut RngStream) -> Result<Vec<f64>> {
        Ok(vec![self.0; m])
    }
}

fn data1_m2() -> ModelSpec {
    make_builtin_pair("data1", &Hyperparams::new()).unwrap().m2
}

#[test]
fn matching_point_mass_gives_one_half() {
    let model = ModelSpec::new(PointMass(3.0));
    let report = criticize(&model, &[3.0; 40], 100, 1).unwrap();
    assert_eq!(report.z_samples.len(), 100);
    for z in &report.z_samples {
        assert!((z - 0.5).abs() < 0.05, "{z}");
    }
    assert!(report.contains_half);
}

#[test]
fn z_values_lie_in_unit_interval() {
    let model = data1_m2();
    for y_obs in [vec![18.0; 32], (0..32).map(|i| (i % 5) as f64).collect()] {
        let report = criticize(&model, &y_obs, 200, 2).unwrap();
        assert!(report.z_samples.iter().all(|z| (0.0..=1.0).contains(z)));
        assert!(report.lower <= report.upper);
    }
}

#[test]
fn wider_levels_give_wider_intervals() {
    let report = criticize(&data1_m2(), &[0.0, 2.0, 1.0, 4.0, 0.0, 3.0, 1.0, 1.0], 300, 3).unwrap();
    let levels = [0.1, 0.5, 0.8, 0.9, 0.95, 0.99];
    let intervals: Vec<(f64, f64)> = levels.iter().map(|c| report.interval(*c)).collect();
    for w in intervals.windows(2) {
        assert!(w[1].0 <= w[0].0 && w[0].1 <= w[1].1, "{w:?}");
    }
    assert_eq!(report.interval(0.95), (report.lower, report.upper));
}

#[test]
fn reruns_are_identical() {
    let y = [1.0, 0.0, 5.0, 2.0, 2.0, 0.0];
    let a = criticize(&data1_m2(), &y, 150, 9).unwrap();
    let b = criticize(&data1_m2(), &y, 150, 9).unwrap();
    assert_eq!(a, b);
}

#[test]
fn rejects_models_without_predictive() {
    let mpt = make_builtin_pair("mpt", &Hyperparams::new()).unwrap();
    let y = vec![10.0; 6];
    assert!(matches!(criticize(&mpt.m1, &y, 100, 1), Err(deepbf_core::Error::Unsupported(_))));
    assert!(criticize(&data1_m2(), &[1.0; 4], MIN_REPLICATES - 1, 1).is_err());
    assert!(criticize(&data1_m2(), &[], 100, 1).is_err());
}
