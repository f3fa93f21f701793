//! The collapsed joint against direct numerical integration over the
//! memberships and compatibilities of a two-community layer.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;

use comfp::comfp::{density_terms, HyperState};
use comfp::latent::LayerState;
use comfp::matrix::Matrix;
use comfp::network::Dyad;
use comfp::numerics::{standard_normal, SeededRng};

/// Tanh-sinh rule on (0, 1). `f` receives both `u` and `1 − u` so that
/// endpoint singularities of Beta-type integrands keep full precision.
fn tanh_sinh(f: impl Fn(f64, f64) -> f64) -> f64 {
    let h = 1.0 / 64.0;
    let mut sum = 0.0;
    for step in -448..=448 {
        let t = step as f64 * h;
        let s = FRAC_PI_2 * t.sinh();
        let lo = 1.0 / (1.0 + (2.0 * s).exp());
        let hi = 1.0 / (1.0 + (-2.0 * s).exp());
        if lo == 0.0 || hi == 0.0 {
            continue;
        }
        let w = FRAC_PI_2 * t.cosh() / (2.0 * s.cosh().powi(2));
        sum += w * f(hi, lo);
    }
    sum * h
}

/// `E[p^a (1−p)^b]` under `Beta(s, r)`, both integrals by quadrature.
fn beta_moment(s: f64, r: f64, a: u32, b: u32) -> f64 {
    let kernel = |p: f64, q: f64| p.powf(s - 1.0) * q.powf(r - 1.0);
    let norm = tanh_sinh(kernel);
    tanh_sinh(|p, q| kernel(p, q) * p.powi(a as i32) * q.powi(b as i32)) / norm
}

fn softplus(v: f64) -> f64 {
    v.exp().ln_1p()
}

#[test]
fn collapsed_terms_match_quadrature() {
    let mut rng = SeededRng::new(4242);
    for _ in 0..5 {
        let n = rng.gen_range(2..=4);
        let t = rng.gen_range(1..=3);
        let k = 2;
        let m = rng.gen_range(1..=5);
        let mut dyads = Vec::new();
        while dyads.len() < m {
            if let Some(d) = Dyad::new(rng.gen_range(0..n), rng.gen_range(0..n)) {
                dyads.push((d, rng.gen_bool(0.5)));
            }
        }
        let z: Vec<(u16, u16)> = dyads.iter().map(|_| (rng.gen_range(0..2), rng.gen_range(0..2))).collect();
        let layer = LayerState::from_assignments(n, k, dyads.clone(), z.clone()).unwrap();
        let hyper = HyperState {
            x: Matrix::from_fn(n, t, |_, _| 0.7 * standard_normal(&mut rng)),
            lambda: vec![Matrix::from_fn(k, t, |_, _| 0.7 * standard_normal(&mut rng))],
            sigma_u: 1.0,
            sigma_d: vec![1.0],
            sigma_mh: 0.1,
        };
        let terms = density_terms(std::slice::from_ref(&layer), &hyper).unwrap();

        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        let mut user = vec![[0u32; 2]; n];
        let mut block = [[0u32; 2]; 4];
        for (&(d, pos), &(a, b)) in dyads.iter().zip(&z) {
            user[d.lo()][a as usize] += 1;
            user[d.hi()][b as usize] += 1;
            block[a as usize * 2 + b as usize][usize::from(!pos)] += 1;
        }
        let lambda = &hyper.lambda[0];
        let mut memberships = 0.0;
        for (i, c) in user.iter().enumerate() {
            let a0 = softplus(dot(hyper.x.row(i), lambda.row(0)));
            let a1 = softplus(dot(hyper.x.row(i), lambda.row(1)));
            // π_i = (p, 1 − p) with p ~ Beta(a0, a1).
            memberships += beta_moment(a0, a1, c[0], c[1]).ln();
        }
        let mut compatibilities = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                let r = softplus(dot(lambda.row(a), lambda.row(b))) + 1.0;
                let [links, non] = block[a * 2 + b];
                compatibilities += beta_moment(r, r, links, non).ln();
            }
        }
        assert!((terms.memberships - memberships).abs() < 1e-4, "{} vs {memberships}", terms.memberships);
        assert!(
            (terms.compatibilities - compatibilities).abs() < 1e-4,
            "{} vs {compatibilities}",
            terms.compatibilities
        );
    }
}

#[test]
fn quadrature_rule_integrates_a_beta_kernel() {
    // ∫ p^{-1/2} (1-p)^{-1/2} dp = π
    let v = tanh_sinh(|p, q| 1.0 / (p * q).sqrt());
    assert!((v - std::f64::consts::PI).abs() < 1e-9, "{v}");
}
