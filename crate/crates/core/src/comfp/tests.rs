use super::*;
use crate::latent::conditional;
use crate::mmsb::{self, MmsbConfig};
use crate::network::{Dyad, LayerSplit};
use crate::numerics::softplus;
use rand::Rng;

fn random_state(n: usize, k: usize, dyads: usize, rng: &mut SeededRng) -> LayerState {
    let mut list = Vec::new();
    while list.len() < dyads {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if let Some(d) = Dyad::new(a, b) {
            list.push((d, rng.gen_bool(0.5)));
        }
    }
    let z = list.iter().map(|_| (rng.gen_range(0..k) as u16, rng.gen_range(0..k) as u16)).collect();
    LayerState::from_assignments(n, k, list, z).unwrap()
}

fn random_hyper(n: usize, ks: &[usize], t: usize, rng: &mut SeededRng) -> HyperState {
    HyperState {
        x: Matrix::from_fn(n, t, |_, _| standard_normal(rng)),
        lambda: ks.iter().map(|&k| Matrix::from_fn(k, t, |_, _| standard_normal(rng))).collect(),
        sigma_u: 1.3,
        sigma_d: vec![0.8; ks.len()],
        sigma_mh: 0.1,
    }
}

fn toy_split() -> TrainTestSplit {
    let d = |a, b| Dyad::new(a, b).unwrap();
    let layer = |pos: Vec<Dyad>, neg: Vec<Dyad>| LayerSplit { train_pos: pos, train_neg: neg, ..Default::default() };
    TrainTestSplit {
        layers: vec![
            layer(vec![d(0, 1), d(1, 2), d(2, 3), d(3, 4)], vec![d(0, 4), d(1, 3), d(0, 2)]),
            layer(vec![d(0, 2), d(2, 4), d(1, 4)], vec![d(0, 3), d(3, 4)]),
        ],
    }
}

#[test]
fn hybrid_prior_examples() {
    let lambda = Matrix::from_vec(3, 2, vec![0.3, -1.0, 2.0, 0.0, -5.0, 4.0]);
    assert!(hybrid_prior(&[0.0, 0.0], &lambda).unwrap().iter().all(|&a| a == std::f64::consts::LN_2));

    let x = [2.0, 0.0];
    let lambda = Matrix::from_vec(1, 2, x.to_vec());
    let a = hybrid_prior(&x, &lambda).unwrap()[0];
    assert!((a - (1.0 + 4f64.exp()).ln()).abs() < 1e-14);
    assert!((a - 4.0181499279178094).abs() < 1e-12);

    let far = hybrid_prior(&[-400.0, 0.0], &Matrix::from_vec(1, 2, vec![1.0, 0.0])).unwrap()[0];
    assert!(far > 0.0);
    assert!(matches!(hybrid_prior(&[1.0], &lambda), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn compat_prior_examples() {
    let zero = compat_prior(&Matrix::zeros(3, 4));
    assert!(zero.as_slice().iter().all(|&v| v == std::f64::consts::LN_2));

    let mut rng = SeededRng::new(5);
    let lambda = Matrix::from_fn(4, 3, |_, _| standard_normal(&mut rng));
    let rho = compat_prior(&lambda);
    for a in 0..4 {
        for b in 0..4 {
            assert_eq!(rho[(a, b)], rho[(b, a)]);
        }
    }

    let eye = Matrix::from_fn(3, 3, |r, c| if r == c { 1.0 } else { 0.0 });
    let rho = compat_prior(&eye);
    for a in 0..3 {
        for b in 0..3 {
            let want = if a == b { softplus(1.0) } else { softplus(0.0) };
            assert_eq!(rho[(a, b)], want);
        }
    }
}

#[test]
fn constant_priors_reduce_to_baseline() {
    let mut rng = SeededRng::new(11);
    for _ in 0..100 {
        let k = rng.gen_range(1..=4);
        let n = rng.gen_range(2..=6);
        let mut state = random_state(n, k, rng.gen_range(1..=8), &mut rng);
        let c: f64 = rng.gen_range(-2.0..2.0);
        let hyper = HyperState {
            x: Matrix::filled(n, 1, 1.0),
            lambda: vec![Matrix::filled(k, 1, c)],
            sigma_u: 1.0,
            sigma_d: vec![1.0],
            sigma_mh: 0.05,
        };
        let priors = &hyper.priors()[0];
        let gamma = softplus(c * c) + 1.0;
        let cfg = MmsbConfig { alpha0: softplus(c), gamma0: gamma, gamma1: gamma, ..MmsbConfig::new(k) };
        for e in 0..state.num_dyads() {
            let ours = conditional(&mut state, e, |s, d, p, w| conditional_weights(s, priors, d, p, w));
            let base = conditional(&mut state, e, |s, d, p, w| mmsb::conditional_weights(s, d, p, &cfg, w));
            for (a, b) in ours.iter().zip(&base) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
            assert!((ours.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_counts_leave_only_gaussian_priors() {
    let mut rng = SeededRng::new(2);
    let hyper = random_hyper(4, &[3, 2], 2, &mut rng);
    let layers = vec![
        LayerState::from_assignments(4, 3, Vec::new(), Vec::new()).unwrap(),
        LayerState::from_assignments(4, 2, Vec::new(), Vec::new()).unwrap(),
    ];
    let terms = density_terms(&layers, &hyper).unwrap();
    assert_eq!(terms.memberships, 0.0);
    assert_eq!(terms.compatibilities, 0.0);
    let mut expect = 0.0;
    for (l, s) in hyper.lambda.iter().zip(&hyper.sigma_d) {
        expect += l.as_slice().iter().map(|v| crate::numerics::ln_normal_pdf(*v, 0.0, *s)).sum::<f64>();
    }
    expect += hyper.x.as_slice().iter().map(|v| crate::numerics::ln_normal_pdf(*v, 0.0, hyper.sigma_u)).sum::<f64>();
    assert!((joint_log_density(&layers, &hyper).unwrap() - expect).abs() < 1e-12);
}

#[test]
fn joint_is_invariant_under_relabeling() {
    let mut rng = SeededRng::new(8);
    for _ in 0..20 {
        let layers = vec![random_state(6, 3, 9, &mut rng), random_state(6, 4, 7, &mut rng)];
        let hyper = random_hyper(6, &[3, 4], 3, &mut rng);
        let before = joint_log_density(&layers, &hyper).unwrap();
        let perm = [2, 0, 3, 1];
        let mut moved = hyper.clone();
        let old = &hyper.lambda[1];
        let mut lambda = Matrix::zeros(4, 3);
        for c in 0..4 {
            lambda.row_mut(perm[c]).copy_from_slice(old.row(c));
        }
        moved.lambda[1] = lambda;
        let relabeled = vec![layers[0].clone(), layers[1].permuted(&perm)];
        let after = joint_log_density(&relabeled, &moved).unwrap();
        assert!((before - after).abs() < 1e-9, "{before} vs {after}");
    }
}

#[test]
fn non_finite_term_is_named() {
    let mut rng = SeededRng::new(1);
    let layers = vec![random_state(3, 2, 3, &mut rng)];
    let mut hyper = random_hyper(3, &[2], 2, &mut rng);
    hyper.x[(0, 0)] = f64::NAN;
    let err = joint_log_density(&layers, &hyper).unwrap_err();
    assert!(matches!(err, Error::NonFinite(ref m) if m.contains("membership")), "{err}");
}

#[test]
fn degenerate_gradients() {
    let layers = vec![LayerState::from_assignments(3, 2, Vec::new(), Vec::new()).unwrap()];
    let hyper = HyperState {
        x: Matrix::zeros(3, 2),
        lambda: vec![Matrix::zeros(2, 2)],
        sigma_u: 1.0,
        sigma_d: vec![1.0],
        sigma_mh: 0.05,
    };
    assert!(grad_lambda(&layers, &hyper, 0).unwrap().as_slice().iter().all(|&g| g == 0.0));

    // A user with no train dyads only feels its prior.
    let mut rng = SeededRng::new(4);
    let d = Dyad::new(0, 1).unwrap();
    let layers = vec![LayerState::from_assignments(3, 2, vec![(d, true)], vec![(0, 1)]).unwrap()];
    let mut hyper = random_hyper(3, &[2], 2, &mut rng);
    let g = grad_x(&layers, &hyper, 2).unwrap();
    for (gv, xv) in g.iter().zip(hyper.x.row(2)) {
        assert_eq!(*gv, -xv / (hyper.sigma_u * hyper.sigma_u));
    }
    hyper.lambda[0] = Matrix::zeros(2, 2);
    let g = grad_x(&layers, &hyper, 0).unwrap();
    for (gv, xv) in g.iter().zip(hyper.x.row(0)) {
        assert_eq!(*gv, -xv / (hyper.sigma_u * hyper.sigma_u));
    }
}

#[test]
fn lambda_prior_gradient_scales_with_inverse_variance() {
    let mut rng = SeededRng::new(9);
    let layers = vec![random_state(5, 3, 6, &mut rng)];
    let mut hyper = random_hyper(5, &[3], 2, &mut rng);
    hyper.sigma_d[0] = 1.0;
    let g1 = grad_lambda(&layers, &hyper, 0).unwrap();
    hyper.sigma_d[0] = 2.0;
    let g2 = grad_lambda(&layers, &hyper, 0).unwrap();
    for ((a, b), l) in g1.as_slice().iter().zip(g2.as_slice()).zip(hyper.lambda[0].as_slice()) {
        let prior1 = -l;
        let prior2 = -l / 4.0;
        assert!(((a - prior1) - (b - prior2)).abs() < 1e-12);
    }
}

#[test]
fn lambda_update_never_decreases_the_joint() {
    let mut rng = SeededRng::new(21);
    let cfg = LbfgsConfig { max_iters: 10, memory: 7, ..LbfgsConfig::default() };
    for _ in 0..50 {
        let layers = vec![random_state(6, 3, 10, &mut rng), random_state(6, 2, 6, &mut rng)];
        let mut hyper = random_hyper(6, &[3, 2], 3, &mut rng);
        for d in 0..2 {
            let before = joint_log_density(&layers, &hyper).unwrap();
            let up = update_lambda(&layers, &mut hyper, d, &cfg);
            let after = joint_log_density(&layers, &hyper).unwrap();
            assert!(after >= before - 1e-12, "{before} -> {after}");
            assert!(up.iterations <= 10);
        }
    }
}

#[test]
fn lambda_update_without_counts_moves_towards_zero() {
    let mut rng = SeededRng::new(3);
    let layers = vec![LayerState::from_assignments(4, 3, Vec::new(), Vec::new()).unwrap()];
    let mut hyper = random_hyper(4, &[3], 2, &mut rng);
    let start: f64 = hyper.lambda[0].as_slice().iter().map(|v| v * v).sum();
    update_lambda(&layers, &mut hyper, 0, &LbfgsConfig::default());
    let end: f64 = hyper.lambda[0].as_slice().iter().map(|v| v * v).sum();
    assert!(end < 1e-6 * start.max(1.0), "{start} -> {end}");
}

#[test]
fn symmetric_langevin_move_is_always_accepted() {
    let x = [0.4, -1.0];
    assert_eq!(mala_log_ratio(&x, -2.0, &[0.0, 0.0], &x, -2.0, &[0.0, 0.0], 0.3), 0.0);
    let mut rng = SeededRng::new(0);
    for _ in 0..100 {
        let step = mala_step(&x, 1.0, &[0.0, 0.0], |_| (1.0, vec![0.0, 0.0]), 0.3, &mut rng);
        assert!(step.accepted);
    }
}

#[test]
fn langevin_targets_a_standard_gaussian() {
    let target = |x: &[f64]| (-0.5 * x[0] * x[0], vec![-x[0]]);
    let mut rng = SeededRng::new(77);
    let (mut x, mut v, mut g) = (vec![0.0], 0.0, vec![0.0]);
    let (mut sum, mut sq, mut acc) = (0.0, 0.0, 0usize);
    let steps = 50_000;
    for _ in 0..steps {
        let s = mala_step(&x, v, &g, target, 1.2, &mut rng);
        acc += s.accepted as usize;
        x = s.x;
        v = s.value;
        g = s.grad;
        sum += x[0];
        sq += x[0] * x[0];
    }
    let mean = sum / steps as f64;
    let var = sq / steps as f64 - mean * mean;
    assert!(mean.abs() < 0.03, "mean {mean}");
    assert!((var - 1.0).abs() < 0.05, "var {var}");
    assert!(acc > steps / 2);
}

#[test]
fn non_finite_proposal_is_rejected() {
    let mut rng = SeededRng::new(0);
    let step = mala_step(&[1.0], -0.5, &[-1.0], |_| (f64::NAN, vec![0.0]), 0.5, &mut rng);
    assert!(!step.accepted);
    assert_eq!(step.x, vec![1.0]);
}

#[test]
fn fit_traces_and_determinism() {
    let split = toy_split();
    let mut cfg = ComfpConfig::new(2, 2, 2);
    cfg.iterations = 40;
    cfg.seed = 17;
    let a = fit(5, &split, &cfg).unwrap();
    let b = fit(5, &split, &cfg).unwrap();
    assert_eq!(a.estimates, b.estimates);
    assert_eq!(a.hyper, b.hyper);
    assert_eq!(a.log_density, b.log_density);
    assert_eq!(a.mh_accept_rate, b.mh_accept_rate);
    assert_eq!(a.log_density.len(), a.iterations());
    assert_eq!(a.mh_accept_rate.len(), a.iterations());
    assert_eq!(a.seconds.len(), a.iterations());
    assert!(a.state.is_consistent());
    for (it, r) in a.mh_accept_rate.iter().enumerate() {
        assert_eq!(r.is_some(), (it + 1) % cfg.hyper_period == 0);
        if let Some(r) = r {
            assert!((0.0..=1.0).contains(r));
        }
    }
    for est in &a.estimates {
        for row in est.pi.iter_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(est.b.as_slice().iter().all(|&v| v > 0.0 && v < 1.0));
    }
    let s = a.score(0, 3, 1);
    assert!(s > 0.0 && s < 1.0);
}

#[test]
fn zero_iterations_give_initial_estimates() {
    let split = toy_split();
    let mut cfg = ComfpConfig::new(2, 3, 2);
    cfg.iterations = 0;
    let out = fit(5, &split, &cfg).unwrap();
    assert!(out.log_density.is_empty() && out.mh_accept_rate.is_empty() && out.seconds.is_empty());
    let priors = out.hyper.priors();
    for (d, est) in out.estimates.iter().enumerate() {
        assert_eq!(*est, estimate_point(&out.state.layers[d], &priors[d]));
    }
}

#[test]
fn estimates_without_counts_are_prior_means() {
    let mut rng = SeededRng::new(6);
    let hyper = random_hyper(3, &[3], 2, &mut rng);
    let priors = &hyper.priors()[0];
    let state = LayerState::from_assignments(3, 3, Vec::new(), Vec::new()).unwrap();
    let est = estimate_point(&state, priors);
    let rho = compat_prior(&hyper.lambda[0]);
    // With no counts B is exactly one half everywhere.
    assert!(est.b.as_slice().iter().all(|&v| v == 0.5));
    let mut want = 0.0;
    let (ai, aj) = (priors.alpha.row(0), priors.alpha.row(2));
    for a in 0..3 {
        for b in 0..3 {
            let r = rho[(a, b)] + 1.0;
            want += ai[a] / priors.alpha_sum[0] * (r / (2.0 * r)) * aj[b] / priors.alpha_sum[2];
        }
    }
    assert!((est.score(0, 2) - want).abs() < 1e-15);
}

#[test]
fn config_validation() {
    let mut cfg = ComfpConfig::new(2, 3, 2);
    assert!(cfg.validate(2).is_ok());
    assert!(matches!(cfg.validate(3), Err(Error::DimensionMismatch { .. })));
    cfg.hyper_period = 0;
    assert!(cfg.validate(2).is_err());
    cfg.hyper_period = 10;
    cfg.sigma_mh = 0.0;
    assert!(cfg.validate(2).is_err());
}
