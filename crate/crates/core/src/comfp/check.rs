//! Finite-difference verification of the analytic gradients on random
//! small instances.

use rand::Rng;

use super::{grad_lambda, grad_x, joint_log_density, HyperState};
use crate::error::Result;
use crate::latent::LayerState;
use crate::matrix::Matrix;
use crate::network::Dyad;
use crate::numerics::{standard_normal, SeededRng};
use crate::optim::finite_diff_gradient;

pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckRow {
    pub instance: usize,
    pub n: usize,
    pub k: Vec<usize>,
    pub t: usize,
    /// Worst relative error over the layers' `λ_d`.
    pub lambda_error: f64,
    /// Worst relative error over the users' `x_i`.
    pub x_error: f64,
}

impl GradCheckRow {
    pub fn max_error(&self) -> f64 {
        self.lambda_error.max(self.x_error)
    }
}

/// `‖a − b‖ / max(‖b‖, 1)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let scale: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / scale.max(1.0)
}

/// Random composite with `n` users, one layer per entry of `ks`, and up to
/// `dyads` observed dyads per layer with random community assignments.
pub fn random_instance(n: usize, ks: &[usize], t: usize, dyads: usize, rng: &mut SeededRng) -> Result<(Vec<LayerState>, HyperState)> {
    let mut layers = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut list = Vec::with_capacity(dyads);
        while list.len() < dyads {
            if let Some(d) = Dyad::new(rng.gen_range(0..n), rng.gen_range(0..n)) {
                list.push((d, rng.gen_bool(0.5)));
            }
        }
        let z = list.iter().map(|_| (rng.gen_range(0..k) as u16, rng.gen_range(0..k) as u16)).collect();
        layers.push(LayerState::from_assignments(n, k, list, z)?);
    }
    let hyper = HyperState {
        x: Matrix::from_fn(n, t, |_, _| standard_normal(rng)),
        lambda: ks.iter().map(|&k| Matrix::from_fn(k, t, |_, _| standard_normal(rng))).collect(),
        sigma_u: rng.gen_range(0.5..2.0),
        sigma_d: ks.iter().map(|_| rng.gen_range(0.5..2.0)).collect(),
        sigma_mh: 0.1,
    };
    Ok((layers, hyper))
}

/// Compares `grad_lambda` and `grad_x` with central differences of the
/// joint on one instance.
pub fn check_instance(layers: &[LayerState], hyper: &HyperState) -> Result<(f64, f64)> {
    let mut lambda_error = 0.0f64;
    for d in 0..hyper.lambda.len() {
        let analytic = grad_lambda(layers, hyper, d)?;
        let numeric = finite_diff_gradient(
            |v| {
                let mut h = hyper.clone();
                h.lambda[d].as_mut_slice().copy_from_slice(v);
                joint_log_density(layers, &h).unwrap_or(f64::NAN)
            },
            hyper.lambda[d].as_slice(),
            FD_STEP,
        )?;
        lambda_error = lambda_error.max(relative_error(analytic.as_slice(), &numeric));
    }
    let mut x_error = 0.0f64;
    for i in 0..hyper.x.rows() {
        let analytic = grad_x(layers, hyper, i)?;
        let numeric = finite_diff_gradient(
            |v| {
                let mut h = hyper.clone();
                h.x.row_mut(i).copy_from_slice(v);
                joint_log_density(layers, &h).unwrap_or(f64::NAN)
            },
            hyper.x.row(i),
            FD_STEP,
        )?;
        x_error = x_error.max(relative_error(&analytic, &numeric));
    }
    Ok((lambda_error, x_error))
}

/// Runs [`check_instance`] on `instances` random composites with
/// `n ≤ 10`, `K ≤ 4`, `T ≤ 4` and one or two layers.
pub fn gradient_check(instances: usize, seed: u64) -> Result<Vec<GradCheckRow>> {
    let mut rng = SeededRng::new(seed);
    let mut rows = Vec::with_capacity(instances);
    for instance in 0..instances {
        let n = rng.gen_range(2..=10);
        let t = rng.gen_range(1..=4);
        let k: Vec<usize> = (0..rng.gen_range(1..=2)).map(|_| rng.gen_range(1..=4)).collect();
        let dyads = rng.gen_range(1..=3 * n);
        let (layers, hyper) = random_instance(n, &k, t, dyads, &mut rng)?;
        let (lambda_error, x_error) = check_instance(&layers, &hyper)?;
        rows.push(GradCheckRow { instance, n, k, t, lambda_error, x_error });
    }
    Ok(rows)
}
