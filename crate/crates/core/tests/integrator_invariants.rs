use sde_horizon::brownian::make_brownian_grid;
use sde_horizon::ensemble::RunSetup;
use sde_horizon::estimators::{ks_two_sample, strong_error_series, Oracle};
use sde_horizon::integrators::{integrate_path, BemConfig, Scheme};
use sde_horizon::model::{builtin_model, Params};

/// Two-sample K-S critical value at level 1% for sizes n and m.
fn ks_critical_1pct(n: usize, m: usize) -> f64 {
    let c = (-(0.005f64).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n * m) as f64).sqrt()
}

#[test]
fn rms_error_shrinks_as_step_halves() {
    // x - h f(x) is strictly increasing for h < 4, so the implicit step stays
    // well posed at h = 1/16 even though it exceeds the certified step bound.
    let model = builtin_model("ginzburg_landau", &Params::new()).unwrap().model.with_step_limit(0.5);
    let oracle = Oracle::for_model("exact_gl", &model).unwrap();
    let mut prev: Option<(f64, f64, f64)> = None;
    for k in 4..=9 {
        let h = 2f64.powi(-k);
        let n = 1usize << k;
        let setup = RunSetup::new(vec![1.0], h, 1.0, 500).with_record_every(n);
        let s = strong_error_series(&model, &setup, 2.0, Scheme::Bem, oracle, 16).unwrap();
        let ms = s.raw[1];
        let rms = ms.sqrt();
        let rms_se = s.stderrs[1] / (2.0 * rms);
        if let Some((h_prev, r_prev, se_prev)) = prev {
            assert!(
                rms <= r_prev + 2.0 * (rms_se + se_prev),
                "rms error {rms:.4e} at h = {h} exceeds {r_prev:.4e} at h = {h_prev}"
            );
        }
        prev = Some((h, rms, rms_se));
    }
}

#[test]
fn restarted_chain_matches_continued_chain() {
    let model = builtin_model("ginzburg_landau", &Params::new()).unwrap().model;
    let cfg = BemConfig::default();
    let (h, n1, n2, paths) = (0.01, 100, 100, 1000);
    let mut continued = Vec::with_capacity(paths);
    let mut restarted = Vec::with_capacity(paths);
    for i in 0..paths as u64 {
        let grid = make_brownian_grid(7, i, h, n1 + n2).unwrap();
        let rec = integrate_path(&model, Scheme::Bem, &[1.0], &grid, &cfg, n1).unwrap();
        assert!(!rec.diverged());
        continued.push(rec.state(2)[0]);
        let fresh = make_brownian_grid(8, i, h, n2).unwrap();
        let rest = integrate_path(&model, Scheme::Bem, rec.state(1), &fresh, &cfg, n2).unwrap();
        restarted.push(rest.state(1)[0]);
    }
    let d = ks_two_sample(&continued, &restarted).unwrap();
    assert!(d < ks_critical_1pct(paths, paths), "K-S {d}");
}

#[test]
fn restart_from_recorded_state_is_exact_given_same_noise() {
    let model = builtin_model("quintic_2d", &Params::new()).unwrap().model;
    let cfg = BemConfig::default();
    let grid = make_brownian_grid(3, 0, 0.001, 400).unwrap();
    let whole = integrate_path(&model, Scheme::Bem, &[1.0, 1.0], &grid, &cfg, 200).unwrap();
    let tail = sde_horizon::brownian::BrownianGrid::from_increments(0.001, grid.increments()[200..].to_vec()).unwrap();
    let resumed = integrate_path(&model, Scheme::Bem, whole.state(1), &tail, &cfg, 200).unwrap();
    assert_eq!(resumed.state(1), whole.state(2));
}
