use tdoa_core::evaluation::{builtin_scenario, rmse_static, run_batch, builtin_scenarios, Scenario};
use tdoa_core::Point;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn singleton_rmse_is_the_euclidean_error() {
    let e = rmse_static(&[Point::new(1.5, -2.0)], Point::new(-0.5, 1.0)).unwrap();
    assert_eq!(e, 2f64.hypot(3.0));
}

#[test]
fn median_rmse_grows_with_noise() {
    for name in ["static-triangular-linear", "static-rectangular-nonlinear", "track-triangular-nonlinear"] {
        let base = builtin_scenario(name).unwrap();
        let medians: Vec<f64> = [0.1, 0.3, 0.6]
            .iter()
            .map(|&sigma| {
                let s = match base.clone().with_sigma(sigma) {
                    Scenario::Static(mut s) => {
                        s.samples = 100;
                        Scenario::Static(s)
                    }
                    other => other,
                };
                median((0..21).map(|seed| s.run(seed).unwrap().rmse).collect())
            })
            .collect();
        assert!(medians.windows(2).all(|w| w[0] <= w[1]), "{name}: {medians:?}");
    }
}

#[test]
fn batches_are_order_stable_and_reproducible() {
    let scenarios: Vec<Scenario> = builtin_scenarios()
        .into_iter()
        .map(|s| match s {
            Scenario::Static(mut s) => {
                s.samples = 20;
                Scenario::Static(s)
            }
            other => other,
        })
        .collect();
    let a = run_batch(&scenarios, 42);
    let b = run_batch(&scenarios, 42);
    assert_eq!(a, b);
    for (r, s) in a.iter().zip(&scenarios) {
        assert_eq!(r.as_ref().unwrap().scenario.name(), s.name());
    }
}
