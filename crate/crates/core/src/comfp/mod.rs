//! Composite friendship prediction.
//!
//! Each user `i` has latent features `x_i ∈ R^T` shared by every layer, and
//! each layer `d` a mapping `λ_d ∈ R^{K_d×T}`. Memberships in layer `d` are
//! drawn from `Dir(t(x_i λ_dᵀ))` and the layer's compatibility matrix from a
//! Beta prior with pseudo-counts `t(λ_d λ_dᵀ) + 1`. Inference alternates
//! collapsed Gibbs sweeps over the community indicators with, every few
//! sweeps, L-BFGS ascent on each `λ_d` and one Langevin-MH move per `x_i`.

pub mod check;
pub mod density;
pub mod hyper;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{sweep_layer, EstimateAverager, LatentState, LayerState, PointEstimates, NEG, POS};
use crate::matrix::Matrix;
use crate::network::{TrainTestSplit, UserIndex};
use crate::numerics::{standard_normal, SeededRng};
use crate::optim::LbfgsConfig;

pub use density::{
    compat_prior, conditional_weights, density_terms, grad_lambda, grad_x, hybrid_prior, joint_log_density,
    layer_log_density, user_log_target, DensityTerms, LayerPriors,
};
pub use hyper::{mala_log_ratio, mala_step, update_lambda, update_x_mh, LambdaUpdate, MalaStep};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComfpConfig {
    /// Latent feature dimension.
    pub t: usize,
    /// Communities per layer.
    pub k: Vec<usize>,
    pub iterations: usize,
    /// Hyper-parameters are refreshed every this many sweeps.
    pub hyper_period: usize,
    pub lbfgs_iters: usize,
    pub lbfgs_memory: usize,
    pub sigma_u: f64,
    pub sigma_d: f64,
    /// Langevin proposal scale.
    pub sigma_mh: f64,
    /// Relative change of the averaged log-density that counts as converged.
    pub convergence_tol: f64,
    pub seed: u64,
}

impl ComfpConfig {
    pub fn new(layers: usize, k: usize, t: usize) -> Self {
        Self {
            t,
            k: vec![k; layers],
            iterations: 500,
            hyper_period: 10,
            lbfgs_iters: 10,
            lbfgs_memory: 7,
            sigma_u: 1.0,
            sigma_d: 1.0,
            sigma_mh: 0.05,
            convergence_tol: 1e-4,
            seed: 0,
        }
    }

    pub fn validate(&self, layers: usize) -> Result<()> {
        if self.k.len() != layers {
            return Err(Error::DimensionMismatch { expected: layers, actual: self.k.len() });
        }
        if self.t == 0 || self.k.iter().any(|&k| k == 0 || k > u16::MAX as usize) {
            return Err(Error::InvalidArgument("T and every K_d must be positive".into()));
        }
        if self.hyper_period == 0 || self.lbfgs_memory == 0 {
            return Err(Error::InvalidArgument("hyper-update period and L-BFGS memory must be ≥ 1".into()));
        }
        for (name, v) in [("sigma_u", self.sigma_u), ("sigma_d", self.sigma_d), ("sigma_mh", self.sigma_mh)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    fn lbfgs(&self) -> LbfgsConfig {
        LbfgsConfig { max_iters: self.lbfgs_iters, memory: self.lbfgs_memory, ..LbfgsConfig::default() }
    }
}

/// User features `x` (n×T), per-layer mappings `λ_d` (K_d×T) and the
/// Gaussian / proposal scales.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperState {
    pub x: Matrix,
    pub lambda: Vec<Matrix>,
    pub sigma_u: f64,
    pub sigma_d: Vec<f64>,
    pub sigma_mh: f64,
}

impl HyperState {
    /// Draws `x` and every `λ_d` from their Gaussian priors.
    pub fn sample_prior(n: usize, cfg: &ComfpConfig, rng: &mut SeededRng) -> Self {
        let lambda = cfg
            .k
            .iter()
            .map(|&k| Matrix::from_fn(k, cfg.t, |_, _| cfg.sigma_d * standard_normal(rng)))
            .collect();
        let x = Matrix::from_fn(n, cfg.t, |_, _| cfg.sigma_u * standard_normal(rng));
        Self { x, lambda, sigma_u: cfg.sigma_u, sigma_d: vec![cfg.sigma_d; cfg.k.len()], sigma_mh: cfg.sigma_mh }
    }

    pub fn priors(&self) -> Vec<LayerPriors> {
        self.lambda.iter().map(|l| LayerPriors::compute(&self.x, l)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.lambda.iter().all(Matrix::is_finite)
    }
}

pub fn gibbs_sweep_comfp(state: &mut LayerState, priors: &LayerPriors, rng: &mut SeededRng) {
    sweep_layer(state, rng, |s, d, pos, w| conditional_weights(s, priors, d, pos, w));
}

/// Posterior means of `π_id` and `B_d` given counts and priors.
pub fn estimate_point(state: &LayerState, priors: &LayerPriors) -> PointEstimates {
    let k = state.k();
    let n = state.num_users();
    let mut pi = Matrix::zeros(n, k);
    for i in 0..n {
        let denom = state.user_total(i) as f64 + priors.alpha_sum[i];
        let alpha = priors.alpha.row(i);
        for (c, v) in pi.row_mut(i).iter_mut().enumerate() {
            *v = (state.user_count(i, c) as f64 + alpha[c]) / denom;
        }
    }
    let b = Matrix::from_fn(k, k, |a, c| {
        let cnt = state.pair_counts(a, c);
        let r = priors.pseudo[(a, c)];
        (cnt[POS] as f64 + r) / ((cnt[POS] + cnt[NEG]) as f64 + 2.0 * r)
    });
    PointEstimates { pi, b }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub estimates: Vec<PointEstimates>,
    pub hyper: HyperState,
    pub state: LatentState,
    /// Joint log-density after each completed iteration.
    pub log_density: Vec<f64>,
    /// MH acceptance rate of the iteration's hyper round, if one ran.
    pub mh_accept_rate: Vec<Option<f64>>,
    pub seconds: Vec<f64>,
    pub lambda_updates: Vec<LambdaUpdate>,
    pub converged: bool,
}

impl FitResult {
    pub fn iterations(&self) -> usize {
        self.log_density.len()
    }

    /// `π_idᵀ B_d π_jd`. Users outside the fitted roster use the prior
    /// membership at `x = 0`, which is uniform.
    pub fn score(&self, i: UserIndex, j: UserIndex, d: usize) -> f64 {
        crate::mmsb::score_dyad(&self.estimates[d], i, j)
    }
}

/// Relative change between the means of the last two windows of `window`
/// log-density values.
fn windowed_change(trace: &[f64], window: usize) -> Option<f64> {
    if trace.len() < 2 * window {
        return None;
    }
    let tail = &trace[trace.len() - 2 * window..];
    let prev = tail[..window].iter().sum::<f64>() / window as f64;
    let last = tail[window..].iter().sum::<f64>() / window as f64;
    Some((last - prev).abs() / prev.abs().max(f64::MIN_POSITIVE))
}

const CONVERGENCE_WINDOW: usize = 10;

/// Runs the full alternating inference on the train part of `split`.
pub fn fit(n: usize, split: &TrainTestSplit, cfg: &ComfpConfig) -> Result<FitResult> {
    cfg.validate(split.layers.len())?;
    let mut rng = SeededRng::new(cfg.seed);
    let mut hyper = HyperState::sample_prior(n, cfg, &mut rng);
    let mut layers = Vec::with_capacity(split.layers.len());
    for (ls, &k) in split.layers.iter().zip(&cfg.k) {
        layers.push(LayerState::init(n, k, ls, &mut rng)?);
    }
    let mut priors = hyper.priors();
    let lbfgs = cfg.lbfgs();
    let burn_in = cfg.iterations / 2;
    let mut averagers: Vec<EstimateAverager> = layers.iter().map(|_| EstimateAverager::new()).collect();
    let mut log_density = Vec::with_capacity(cfg.iterations);
    let mut mh_accept_rate = Vec::with_capacity(cfg.iterations);
    let mut seconds = Vec::with_capacity(cfg.iterations);
    let mut lambda_updates = Vec::new();
    let mut converged = false;

    for it in 1..=cfg.iterations {
        let started = Instant::now();
        for (layer, pr) in layers.iter_mut().zip(&priors) {
            gibbs_sweep_comfp(layer, pr, &mut rng);
        }
        let mut rate = None;
        let hyper_round = it % cfg.hyper_period == 0;
        if hyper_round {
            for d in 0..layers.len() {
                lambda_updates.push(update_lambda(&layers, &mut hyper, d, &lbfgs));
            }
            let accepted = (0..n).filter(|&i| update_x_mh(&layers, &mut hyper, i, &mut rng)).count();
            rate = Some(if n == 0 { 0.0 } else { accepted as f64 / n as f64 });
            if !hyper.is_finite() {
                return Err(Error::NonFinite(format!("hyper-parameters after iteration {it}")));
            }
            priors = hyper.priors();
        }
        log_density.push(joint_log_density(&layers, &hyper)?);
        mh_accept_rate.push(rate);
        if it > burn_in {
            for ((avg, layer), pr) in averagers.iter_mut().zip(&layers).zip(&priors) {
                avg.add(&estimate_point(layer, pr));
            }
        }
        seconds.push(started.elapsed().as_secs_f64());
        if hyper_round && it > burn_in {
            if let Some(change) = windowed_change(&log_density, CONVERGENCE_WINDOW) {
                if change < cfg.convergence_tol {
                    converged = true;
                    break;
                }
            }
        }
    }

    let estimates = averagers
        .iter()
        .zip(&layers)
        .zip(&priors)
        .map(|((avg, layer), pr)| avg.mean().unwrap_or_else(|| estimate_point(layer, pr)))
        .collect();
    Ok(FitResult {
        estimates,
        hyper,
        state: LatentState { layers },
        log_density,
        mh_accept_rate,
        seconds,
        lambda_updates,
        converged,
    })
}

#[cfg(test)]
mod tests;
