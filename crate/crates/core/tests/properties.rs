use proptest::prelude::*;

use sde_horizon::brownian::{coarsen, make_brownian_grid, standard_normal_at};
use sde_horizon::estimators::{ks_two_sample, pth_moment};
use sde_horizon::integrators::{bem_step, BemConfig};
use sde_horizon::model::{builtin_model, Params};

fn gl_params(alpha: f64, sigma: f64) -> Params {
    [("alpha".to_string(), alpha), ("sigma".to_string(), sigma)].into_iter().collect()
}

#[test]
fn gl_coefficients_match_hand_polynomial() {
    let mut state = 0x9e37_79b9_7f4a_7c15u64;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..10 {
        let alpha = -1.0 + 2.0 * next();
        let sigma = 0.1 + 2.0 * next();
        let model = builtin_model("ginzburg_landau", &gl_params(alpha, sigma)).unwrap().model;
        for _ in 0..10 {
            let x = -20.0 + 40.0 * next();
            let drift = (alpha + 0.5 * sigma * sigma) * x - x * x * x;
            let diffusion = sigma * x;
            assert!((model.drift(&[x])[0] - drift).abs() <= 1e-12 * drift.abs().max(1.0));
            assert!((model.diffusion(&[x])[0] - diffusion).abs() <= 1e-15 * diffusion.abs().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn coarsening_preserves_sums_exactly(seed in any::<u64>(), path in 0u64..1000, blocks in 1usize..40, factor in 1usize..17) {
        let fine = make_brownian_grid(seed, path, 1e-3, blocks * factor).unwrap();
        let coarse = coarsen(&fine, factor).unwrap();
        prop_assert_eq!(coarse.n_steps(), blocks);
        for (i, c) in coarse.increments().iter().enumerate() {
            let s: f64 = fine.increments()[i * factor..(i + 1) * factor].iter().sum();
            prop_assert_eq!(c.to_bits(), s.to_bits());
        }
        let total_fine: f64 = fine.increments().iter().sum();
        let total_coarse: f64 = coarse.increments().iter().sum();
        prop_assert_eq!(total_fine.to_bits(), total_coarse.to_bits());
        // two-stage coarsening agrees with one stage
        if blocks % 2 == 0 {
            let twice = coarsen(&coarsen(&fine, factor).unwrap(), 2).unwrap();
            let once = coarsen(&fine, 2 * factor).unwrap();
            prop_assert_eq!(twice.increments(), once.increments());
        }
    }

    #[test]
    fn streams_do_not_depend_on_generation_order(seed in any::<u64>(), ids in proptest::collection::vec(0u64..10_000, 2..8)) {
        let forward: Vec<Vec<f64>> = ids.iter().map(|&p| make_brownian_grid(seed, p, 0.01, 16).unwrap().increments().to_vec()).collect();
        let mut reversed: Vec<Vec<f64>> = ids.iter().rev().map(|&p| make_brownian_grid(seed, p, 0.01, 16).unwrap().increments().to_vec()).collect();
        reversed.reverse();
        prop_assert_eq!(&forward, &reversed);
        let a = make_brownian_grid(seed, ids[0], 0.01, 16).unwrap();
        let b = make_brownian_grid(seed, ids[0] + 10_000, 0.01, 16).unwrap();
        prop_assert_ne!(a.increments(), b.increments());
        prop_assert_eq!(standard_normal_at(seed, ids[1], 7), standard_normal_at(seed, ids[1], 7));
    }

    #[test]
    fn pth_moment_is_homogeneous(values in proptest::collection::vec(-50.0f64..50.0, 2..40), lambda in -8.0f64..8.0, p in 0.001f64..2.0) {
        prop_assume!(lambda.abs() > 1e-3);
        let scaled: Vec<f64> = values.iter().map(|v| lambda * v).collect();
        let base = pth_moment(&values, 1, p).unwrap();
        let m = pth_moment(&scaled, 1, p).unwrap();
        let factor = lambda.abs().powf(p);
        prop_assert!((m.value - factor * base.value).abs() <= 1e-12 * m.value.abs());
        prop_assert!((m.stderr - factor * base.stderr).abs() <= 1e-9 * m.stderr.abs().max(1e-300));
    }

    #[test]
    fn ks_symmetric_bounded_and_rank_invariant(
        a in proptest::collection::vec(-10.0f64..10.0, 1..60),
        b in proptest::collection::vec(-10.0f64..10.0, 1..60),
    ) {
        let d = ks_two_sample(&a, &b).unwrap();
        prop_assert_eq!(d, ks_two_sample(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&d));
        let t = |v: &[f64]| v.iter().map(|x| x.exp() + x * x * x).collect::<Vec<_>>();
        prop_assert_eq!(d, ks_two_sample(&t(&a), &t(&b)).unwrap());
    }

    #[test]
    fn converged_bem_steps_meet_residual_contract(x in -5.0f64..5.0, dw in -0.5f64..0.5, h in 1e-4f64..0.04) {
        let model = builtin_model("ginzburg_landau", &Params::new()).unwrap().model;
        let cfg = BemConfig::default();
        let r = bem_step(&model, &[x], h, dw, &cfg).unwrap();
        prop_assert!(r.converged);
        let y = r.state[0];
        let residual = (y - x - model.drift(&[y])[0] * h - model.diffusion(&[x])[0] * dw).abs();
        prop_assert!(residual <= cfg.newton_tol, "residual {}", residual);
    }

    #[test]
    fn quintic_bem_steps_meet_residual_contract(a in -3.0f64..3.0, b in -3.0f64..3.0, dw in -0.3f64..0.3) {
        let model = builtin_model("quintic_2d", &Params::new()).unwrap().model;
        let cfg = BemConfig::default();
        let h = 0.01;
        let r = bem_step(&model, &[a, b], h, dw, &cfg).unwrap();
        prop_assert!(r.converged);
        let f = model.drift(&r.state);
        let g = model.diffusion(&[a, b]);
        let res = (0..2).map(|i| (r.state[i] - [a, b][i] - f[i] * h - g[i] * dw).abs()).fold(0.0, f64::max);
        prop_assert!(res <= cfg.newton_tol);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn refining_the_sampler_never_rescues_a_failure(
        c1 in 8.0f64..12.0,
        c3 in 2.5f64..4.0,
        k2 in -4.5f64..-3.0,
        lipschitz in 0.5f64..2.0,
        n in 50usize..400,
        seed in 0u64..4,
    ) {
        use sde_horizon::assumptions::{check_model, DomainSampler};
        let b = builtin_model("ginzburg_landau", &Params::new()).unwrap();
        let mut c = b.constants.unwrap();
        c.c1 = c1;
        c.c3 = c3;
        c.k2 = k2;
        c.lipschitz = lipschitz;
        let coarse = check_model(&b.model, &c, b.residual.as_ref(), &DomainSampler::new(1, 10.0).with_random(n).with_seed(seed)).unwrap();
        let fine = check_model(&b.model, &c, b.residual.as_ref(), &DomainSampler::new(1, 10.0).with_random(2 * n).with_seed(seed)).unwrap();
        for (a, f) in coarse.entries.iter().zip(&fine.entries) {
            prop_assert!(a.pass || !f.pass, "{} passed after refinement", a.name);
        }
    }
}
