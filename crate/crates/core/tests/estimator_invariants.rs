use sde_horizon::ensemble::RunSetup;
use sde_horizon::estimators::{attractivity_series, strong_error_series, Oracle};
use sde_horizon::integrators::Scheme;
use sde_horizon::model::{builtin_model, Params};

fn gbm(a: f64, b: f64) -> sde_horizon::model::SdeModel {
    let params: Params = [("a".to_string(), a), ("b".to_string(), b)].into_iter().collect();
    builtin_model("gbm", &params).unwrap().model
}

fn window_sup(times: &[f64], values: &[f64], from: f64) -> f64 {
    times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= from)
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn normalized_error_is_consistent_across_step_sizes() {
    let model = builtin_model("ginzburg_landau", &Params::new()).unwrap().model;
    let oracle = Oracle::for_model("exact_gl", &model).unwrap();
    let mut sups = Vec::new();
    for (h, every) in [(0.004, 25), (0.001, 100)] {
        let setup = RunSetup::new(vec![1.0], h, 50.0, 200).with_record_every(every);
        let s = strong_error_series(&model, &setup, 0.001, Scheme::Bem, oracle, 16).unwrap();
        assert!(!s.unreliable);
        sups.push(window_sup(&s.times, &s.normalized, 1.0));
    }
    let ratio = sups[0] / sups[1];
    assert!((0.25..=4.0).contains(&ratio), "sup normalized errors {sups:?}");
}

#[test]
fn gbm_em_error_bounded_iff_mean_square_stable() {
    let stable = gbm(-1.0, 1.0);
    let setup = RunSetup::new(vec![1.0], 0.01, 50.0, 400).with_record_every(10);
    let oracle = Oracle::for_model("exact_gbm", &stable).unwrap();
    let s = strong_error_series(&stable, &setup, 2.0, Scheme::Em, oracle, 1).unwrap();
    let early = window_sup(&s.times, &s.raw, 0.0);
    let late = window_sup(&s.times, &s.raw, 25.0);
    assert!(early.is_finite() && early < 1.0, "stable sup {early}");
    assert!(late <= early);

    let unstable = gbm(1.0, 1.0);
    let oracle = Oracle::for_model("exact_gbm", &unstable).unwrap();
    let s = strong_error_series(&unstable, &setup, 2.0, Scheme::Em, oracle, 1).unwrap();
    let crossing = s.times.iter().zip(&s.raw).find(|(_, v)| **v > 1e6).map(|(t, _)| *t);
    assert!(matches!(crossing, Some(t) if t < 50.0), "crossing {crossing:?}");
}

#[test]
fn identical_starts_give_identically_zero_difference() {
    for name in ["ginzburg_landau", "quintic_2d"] {
        let model = builtin_model(name, &Params::new()).unwrap().model;
        let x0 = vec![1.0; model.dim()];
        let setup = RunSetup::new(x0.clone(), 0.01, 2.0, 20).with_record_every(5);
        let s = attractivity_series(&model, &setup, &x0, 0.5, Scheme::Bem).unwrap();
        assert!(s.series.values.iter().all(|v| v.to_bits() == 0));
    }
}

#[test]
fn series_do_not_depend_on_worker_count() {
    let model = builtin_model("ginzburg_landau", &Params::new()).unwrap().model;
    let oracle = Oracle::for_model("auto", &model).unwrap();
    let run = |w| {
        let setup = RunSetup::new(vec![1.0], 0.01, 2.0, 37).with_workers(Some(w)).with_record_every(10);
        strong_error_series(&model, &setup, 0.5, Scheme::Bem, oracle, 16).unwrap()
    };
    assert_eq!(run(1), run(8));
}
