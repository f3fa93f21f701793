//! Hyper-parameter moves: L-BFGS ascent on each layer's mapping matrix and
//! Metropolis-adjusted Langevin steps on each user's feature vector.

use rand::Rng;

use crate::latent::LayerState;
use crate::matrix::Matrix;
use crate::network::UserIndex;
use crate::numerics::{standard_normal, SeededRng};
use crate::optim::{lbfgs_maximize, FnObjective, LbfgsConfig, LbfgsStatus};

use super::density::{layer_log_density, user_log_target};
use super::HyperState;

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaUpdate {
    pub before: f64,
    pub after: f64,
    pub iterations: usize,
    pub status: Option<LbfgsStatus>,
}

/// Maximises the layer-`d` terms of the joint over `λ_d`, everything else
/// held fixed. On optimiser failure `λ_d` is left unchanged.
pub fn update_lambda(layers: &[LayerState], hyper: &mut HyperState, d: usize, cfg: &LbfgsConfig) -> LambdaUpdate {
    let layer = &layers[d];
    let (k, t) = (hyper.lambda[d].rows(), hyper.lambda[d].cols());
    let sigma_d = hyper.sigma_d[d];
    let x = &hyper.x;
    let objective = FnObjective::new(k * t, |flat: &[f64]| {
        let lambda = Matrix::from_vec(k, t, flat.to_vec());
        let mut grad = Matrix::zeros(k, t);
        let value = layer_log_density(layer, x, &lambda, sigma_d, Some(&mut grad)).total();
        (value, grad.into_vec())
    });
    let start = hyper.lambda[d].as_slice().to_vec();
    let before = layer_log_density(layer, x, &hyper.lambda[d], sigma_d, None).total();
    match lbfgs_maximize(&objective, &start, cfg) {
        Ok(out) if out.value >= before && out.x.iter().all(|v| v.is_finite()) => {
            hyper.lambda[d] = Matrix::from_vec(k, t, out.x);
            LambdaUpdate { before, after: out.value, iterations: out.iterations, status: Some(out.status) }
        }
        Ok(out) => {
            log::warn!("layer {d}: L-BFGS ended below its start ({} < {before}); keeping previous mapping", out.value);
            LambdaUpdate { before, after: before, iterations: out.iterations, status: Some(out.status) }
        }
        Err(e) => {
            log::warn!("layer {d}: L-BFGS aborted ({e}); keeping previous mapping");
            LambdaUpdate { before, after: before, iterations: 0, status: None }
        }
    }
}

/// Log acceptance ratio of a Langevin move `from → to`:
/// target ratio times the reverse/forward Gaussian proposal kernels, each
/// centred on a half-`σ²` gradient step.
pub fn mala_log_ratio(
    from: &[f64],
    from_value: f64,
    from_grad: &[f64],
    to: &[f64],
    to_value: f64,
    to_grad: &[f64],
    sigma: f64,
) -> f64 {
    let half = 0.5 * sigma * sigma;
    let kernel = |dst: &[f64], src: &[f64], src_grad: &[f64]| -> f64 {
        let sq: f64 = dst
            .iter()
            .zip(src)
            .zip(src_grad)
            .map(|((d, s), g)| {
                let r = d - s - half * g;
                r * r
            })
            .sum();
        -sq / (2.0 * sigma * sigma)
    };
    (to_value - from_value) + kernel(from, to, to_grad) - kernel(to, from, from_grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MalaStep {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub accepted: bool,
}

/// One Metropolis-adjusted Langevin step on `target` (log-density and
/// gradient). Non-finite proposals are rejected.
pub fn mala_step<F>(x: &[f64], value: f64, grad: &[f64], target: F, sigma: f64, rng: &mut SeededRng) -> MalaStep
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let half = 0.5 * sigma * sigma;
    let proposal: Vec<f64> = x
        .iter()
        .zip(grad)
        .map(|(xi, gi)| xi + half * gi + sigma * standard_normal(rng))
        .collect();
    let (p_value, p_grad) = target(&proposal);
    let reject = MalaStep { x: x.to_vec(), value, grad: grad.to_vec(), accepted: false };
    if !p_value.is_finite() || p_grad.iter().any(|g| !g.is_finite()) {
        log::warn!("non-finite Langevin proposal rejected");
        // Keep the stream aligned with the accept/reject branch.
        let _: f64 = rng.gen();
        return reject;
    }
    let log_r = mala_log_ratio(x, value, grad, &proposal, p_value, &p_grad, sigma);
    let u: f64 = rng.gen();
    if u.ln() < log_r {
        MalaStep { x: proposal, value: p_value, grad: p_grad, accepted: true }
    } else {
        reject
    }
}

/// Langevin-MH update of one user's feature vector; returns whether the
/// move was accepted.
pub fn update_x_mh(layers: &[LayerState], hyper: &mut HyperState, user: UserIndex, rng: &mut SeededRng) -> bool {
    let lambdas = &hyper.lambda;
    let sigma_u = hyper.sigma_u;
    let target = |xi: &[f64]| user_log_target(layers, lambdas, sigma_u, user, xi);
    let current = hyper.x.row(user).to_vec();
    let (value, grad) = target(&current);
    let step = mala_step(&current, value, &grad, target, hyper.sigma_mh, rng);
    if step.accepted {
        hyper.x.row_mut(user).copy_from_slice(&step.x);
    }
    step.accepted
}
