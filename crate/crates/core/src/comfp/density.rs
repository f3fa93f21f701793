//! Hybrid priors, the collapsed joint log-density and its gradients.
//!
//! With memberships and compatibilities integrated out, the log-density of
//! the indicators and hyper-parameters of one layer `d` is
//!
//! ```text
//!   Σ_i [ lnΓ(A_i) − lnΓ(A_i + n_i·) + Σ_k lnΓ(α_ik + n_ik) − lnΓ(α_ik) ]
//! + Σ_{k,k'} [ Σ_y lnΓ(r_kk' + n_kk'y) − lnΓ(r_kk') + lnΓ(2r_kk') − lnΓ(2r_kk' + n_kk'·) ]
//! + Σ ln N(λ_d | 0, σ_d²)
//! ```
//!
//! with `α_ik = t(x_i·λ_k)`, `A_i = Σ_k α_ik`, `r_kk' = t(λ_k·λ_k') + 1` and
//! `t` the softplus. The user features add `Σ ln N(x_i | 0, σ_u²)` once.

use crate::error::{Error, Result};
use crate::latent::{LayerState, NEG, POS};
use crate::matrix::{dot, Matrix};
use crate::network::{Dyad, UserIndex};
use crate::numerics::{digamma, ln_gamma, ln_normal_pdf, softplus, softplus_grad};

use super::HyperState;

/// `α_id = t(x_i λ_dᵀ)`, one entry per community.
pub fn hybrid_prior(x_i: &[f64], lambda: &Matrix) -> Result<Vec<f64>> {
    if x_i.len() != lambda.cols() {
        return Err(Error::DimensionMismatch { expected: lambda.cols(), actual: x_i.len() });
    }
    Ok(lambda.iter_rows().map(|row| softplus(dot(x_i, row))).collect())
}

/// `ρ_d = t(λ_d λ_dᵀ)`; symmetric by construction.
pub fn compat_prior(lambda: &Matrix) -> Matrix {
    let k = lambda.rows();
    let mut rho = Matrix::zeros(k, k);
    for a in 0..k {
        for b in a..k {
            let v = softplus(dot(lambda.row(a), lambda.row(b)));
            rho[(a, b)] = v;
            rho[(b, a)] = v;
        }
    }
    rho
}

/// Per-layer prior values derived from the current hyper-parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerPriors {
    /// `α_id` for every user (rows) and community (columns).
    pub alpha: Matrix,
    pub alpha_sum: Vec<f64>,
    /// `ρ_d + 1`, the Beta pseudo-count used for both link signs.
    pub pseudo: Matrix,
}

impl LayerPriors {
    pub fn compute(x: &Matrix, lambda: &Matrix) -> Self {
        let n = x.rows();
        let k = lambda.rows();
        let mut alpha = Matrix::zeros(n, k);
        let mut alpha_sum = vec![0.0; n];
        for i in 0..n {
            let xi = x.row(i);
            let row = alpha.row_mut(i);
            for (c, v) in row.iter_mut().enumerate() {
                *v = softplus(dot(xi, lambda.row(c)));
            }
            alpha_sum[i] = row.iter().sum();
        }
        let mut pseudo = compat_prior(lambda);
        pseudo.as_mut_slice().iter_mut().for_each(|v| *v += 1.0);
        Self { alpha, alpha_sum, pseudo }
    }

    pub fn k(&self) -> usize {
        self.pseudo.rows()
    }
}

/// Unnormalised conditional over the K×K indicator pairs of dyad `(i, j)`,
/// with that dyad already removed from the tables.
pub fn conditional_weights(state: &LayerState, priors: &LayerPriors, dyad: Dyad, positive: bool, out: &mut [f64]) {
    let k = state.k();
    let y = if positive { POS } else { NEG };
    let (i, j) = (dyad.lo(), dyad.hi());
    let alpha_i = priors.alpha.row(i);
    let alpha_j = priors.alpha.row(j);
    for a in 0..k {
        let left = state.user_count(i, a) as f64 + alpha_i[a];
        let pseudo_row = priors.pseudo.row(a);
        for b in 0..k {
            let right = state.user_count(j, b) as f64 + alpha_j[b];
            let n = state.pair_counts(a, b);
            let r = pseudo_row[b];
            let link = (n[y] as f64 + r) / ((n[POS] + n[NEG]) as f64 + 2.0 * r);
            out[a * k + b] = left * right * link;
        }
    }
}

/// The joint log-density split by term, for diagnostics and tests.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DensityTerms {
    pub memberships: f64,
    pub compatibilities: f64,
    pub lambda_prior: f64,
    pub feature_prior: f64,
}

impl DensityTerms {
    pub fn total(&self) -> f64 {
        self.memberships + self.compatibilities + self.lambda_prior + self.feature_prior
    }

    fn check(self) -> Result<Self> {
        for (name, v) in [
            ("membership (Dirichlet-multinomial) term", self.memberships),
            ("compatibility (Beta) term", self.compatibilities),
            ("mapping-matrix Gaussian prior", self.lambda_prior),
            ("user-feature Gaussian prior", self.feature_prior),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("joint log-density: {name} = {v}")));
            }
        }
        Ok(self)
    }
}

/// Dirichlet-multinomial term of one user in one layer, and its partial
/// derivatives with respect to each `α_ik`.
#[inline]
fn membership_term(counts: &[u32], total: u32, alpha: &[f64], alpha_sum: f64, dalpha: Option<&mut [f64]>) -> f64 {
    let nt = total as f64;
    let mut v = ln_gamma(alpha_sum) - ln_gamma(alpha_sum + nt);
    for (&c, &a) in counts.iter().zip(alpha) {
        if c > 0 {
            v += ln_gamma(a + c as f64) - ln_gamma(a);
        }
    }
    if let Some(out) = dalpha {
        let common = digamma(alpha_sum) - digamma(alpha_sum + nt);
        for ((o, &c), &a) in out.iter_mut().zip(counts).zip(alpha) {
            *o = common + if c > 0 { digamma(a + c as f64) - digamma(a) } else { 0.0 };
        }
    }
    v
}

/// Beta-binomial term of one community pair and its derivative in `r`.
#[inline]
fn compat_term(n: [u32; 2], r: f64) -> (f64, f64) {
    let total = n[POS] + n[NEG];
    if total == 0 {
        return (0.0, 0.0);
    }
    let mut v = ln_gamma(2.0 * r) - ln_gamma(2.0 * r + total as f64);
    let mut g = 2.0 * (digamma(2.0 * r) - digamma(2.0 * r + total as f64));
    for c in n {
        if c > 0 {
            v += ln_gamma(r + c as f64) - ln_gamma(r);
            g += digamma(r + c as f64) - digamma(r);
        }
    }
    (v, g)
}

fn gaussian_prior(values: &[f64], sd: f64) -> f64 {
    values.iter().map(|&v| ln_normal_pdf(v, 0.0, sd)).sum()
}

/// Contribution of layer `d` (membership + compatibility + λ_d prior).
/// When `grad` is given it receives `∂/∂λ_d`.
pub fn layer_log_density(
    layer: &LayerState,
    x: &Matrix,
    lambda: &Matrix,
    sigma_d: f64,
    mut grad: Option<&mut Matrix>,
) -> DensityTerms {
    let k = lambda.rows();
    let t = lambda.cols();
    if let Some(g) = grad.as_deref_mut() {
        g.as_mut_slice().iter_mut().zip(lambda.as_slice()).for_each(|(gv, l)| *gv = -l / (sigma_d * sigma_d));
    }
    let mut terms = DensityTerms { lambda_prior: gaussian_prior(lambda.as_slice(), sigma_d), ..Default::default() };

    let mut dots = vec![0.0; k];
    let mut alpha = vec![0.0; k];
    let mut dalpha = vec![0.0; k];
    for i in 0..layer.num_users() {
        let total = layer.user_total(i);
        if total == 0 {
            continue;
        }
        let xi = x.row(i);
        for c in 0..k {
            dots[c] = dot(xi, lambda.row(c));
            alpha[c] = softplus(dots[c]);
        }
        let a_sum: f64 = alpha.iter().sum();
        let want_grad = grad.is_some();
        terms.memberships += membership_term(
            layer.user_counts(i),
            total,
            &alpha,
            a_sum,
            want_grad.then_some(&mut dalpha[..]),
        );
        if let Some(g) = grad.as_deref_mut() {
            for c in 0..k {
                let coef = dalpha[c] * softplus_grad(dots[c]);
                let row = g.row_mut(c);
                for f in 0..t {
                    row[f] += coef * xi[f];
                }
            }
        }
    }

    for a in 0..k {
        for b in 0..k {
            let n = layer.pair_counts(a, b);
            if n[POS] + n[NEG] == 0 {
                continue;
            }
            let q = dot(lambda.row(a), lambda.row(b));
            let (v, dr) = compat_term(n, softplus(q) + 1.0);
            terms.compatibilities += v;
            if let Some(g) = grad.as_deref_mut() {
                let coef = dr * softplus_grad(q);
                for f in 0..t {
                    let (la, lb) = (lambda[(a, f)], lambda[(b, f)]);
                    g[(a, f)] += coef * lb;
                    g[(b, f)] += coef * la;
                }
            }
        }
    }
    terms
}

/// Full joint log-density over all layers and user features.
pub fn joint_log_density(layers: &[LayerState], hyper: &HyperState) -> Result<f64> {
    Ok(density_terms(layers, hyper)?.total())
}

pub fn density_terms(layers: &[LayerState], hyper: &HyperState) -> Result<DensityTerms> {
    check_shapes(layers, hyper)?;
    let mut terms = DensityTerms::default();
    for (d, layer) in layers.iter().enumerate() {
        let lt = layer_log_density(layer, &hyper.x, &hyper.lambda[d], hyper.sigma_d[d], None);
        terms.memberships += lt.memberships;
        terms.compatibilities += lt.compatibilities;
        terms.lambda_prior += lt.lambda_prior;
    }
    terms.feature_prior = gaussian_prior(hyper.x.as_slice(), hyper.sigma_u);
    terms.check()
}

/// `∂ log p / ∂λ_d`.
pub fn grad_lambda(layers: &[LayerState], hyper: &HyperState, d: usize) -> Result<Matrix> {
    check_shapes(layers, hyper)?;
    let lambda = &hyper.lambda[d];
    let mut g = Matrix::zeros(lambda.rows(), lambda.cols());
    layer_log_density(&layers[d], &hyper.x, lambda, hyper.sigma_d[d], Some(&mut g));
    Ok(g)
}

/// Terms of the joint that depend on `x_i`, evaluated at `xi`, with the
/// gradient in `xi`.
pub fn user_log_target(layers: &[LayerState], lambdas: &[Matrix], sigma_u: f64, user: UserIndex, xi: &[f64]) -> (f64, Vec<f64>) {
    let t = xi.len();
    let mut value = gaussian_prior(xi, sigma_u);
    let mut grad: Vec<f64> = xi.iter().map(|v| -v / (sigma_u * sigma_u)).collect();
    for (layer, lambda) in layers.iter().zip(lambdas) {
        let total = layer.user_total(user);
        if total == 0 {
            continue;
        }
        let k = lambda.rows();
        let dots: Vec<f64> = lambda.iter_rows().map(|row| dot(xi, row)).collect();
        let alpha: Vec<f64> = dots.iter().map(|&s| softplus(s)).collect();
        let a_sum: f64 = alpha.iter().sum();
        let mut dalpha = vec![0.0; k];
        value += membership_term(layer.user_counts(user), total, &alpha, a_sum, Some(&mut dalpha));
        for c in 0..k {
            let coef = dalpha[c] * softplus_grad(dots[c]);
            let row = lambda.row(c);
            for f in 0..t {
                grad[f] += coef * row[f];
            }
        }
    }
    (value, grad)
}

/// `∂ log p / ∂x_i`.
pub fn grad_x(layers: &[LayerState], hyper: &HyperState, user: UserIndex) -> Result<Vec<f64>> {
    check_shapes(layers, hyper)?;
    Ok(user_log_target(layers, &hyper.lambda, hyper.sigma_u, user, hyper.x.row(user)).1)
}

fn check_shapes(layers: &[LayerState], hyper: &HyperState) -> Result<()> {
    if layers.len() != hyper.lambda.len() || hyper.sigma_d.len() != hyper.lambda.len() {
        return Err(Error::DimensionMismatch { expected: hyper.lambda.len(), actual: layers.len() });
    }
    for (layer, lambda) in layers.iter().zip(&hyper.lambda) {
        if layer.k() != lambda.rows() {
            return Err(Error::DimensionMismatch { expected: lambda.rows(), actual: layer.k() });
        }
        if layer.num_users() != hyper.x.rows() {
            return Err(Error::DimensionMismatch { expected: hyper.x.rows(), actual: layer.num_users() });
        }
        if lambda.cols() != hyper.x.cols() {
            return Err(Error::DimensionMismatch { expected: hyper.x.cols(), actual: lambda.cols() });
        }
    }
    Ok(())
}
