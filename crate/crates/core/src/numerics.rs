//! Special functions, the softplus transform pair and seeded samplers.
//!
//! The samplers all take a [`SeededRng`] so that every stochastic routine in
//! the crate is a pure function of its inputs and a seed.

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::{Beta, Distribution, Gamma, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `t(x) = ln(1 + e^x)`, evaluated without overflow for large `|x|`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn softplus_checked(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite(format!("softplus input {x}")));
    }
    Ok(softplus(x))
}

/// Derivative of [`softplus`], the logistic sigmoid.
#[inline]
pub fn softplus_grad(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Natural log of the gamma function for `x > 0`.
///
/// Shifts the argument above 10 with the recurrence `Γ(x+1) = xΓ(x)` and
/// finishes with the Stirling series.
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(!(x <= 0.0), "ln_gamma domain: {x}");
    let mut shift = 0.0;
    let mut z = x;
    if z < 10.0 {
        let mut prod = 1.0;
        while z < 10.0 {
            prod *= z;
            z += 1.0;
        }
        shift = prod.ln();
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            + inv2
                * (-1.0 / 360.0
                    + inv2
                        * (1.0 / 1260.0
                            + inv2 * (-1.0 / 1680.0 + inv2 * (1.0 / 1188.0 - inv2 * 691.0 / 360_360.0)))));
    (z - 0.5) * z.ln() - z + LN_SQRT_2PI + series - shift
}

pub fn ln_gamma_checked(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidArgument(format!("ln_gamma requires x > 0, got {x}")));
    }
    Ok(ln_gamma(x))
}

/// Digamma `ψ(x) = d/dx ln Γ(x)` for `x > 0`.
pub fn digamma(x: f64) -> f64 {
    debug_assert!(!(x <= 0.0), "digamma domain: {x}");
    let mut acc = 0.0;
    let mut z = x;
    while z < 10.0 {
        acc -= 1.0 / z;
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0)))));
    acc + z.ln() - 0.5 * inv - series
}

pub fn digamma_checked(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidArgument(format!("digamma requires x > 0, got {x}")));
    }
    Ok(digamma(x))
}

/// Log-density of `N(mean, sd²)` at `x`.
#[inline]
pub fn ln_normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

/// Xoshiro256++ stream tagged with the seed it was built from.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: Xoshiro256PlusPlus,
}

impl SeededRng {
    pub const ALGORITHM: &'static str = "xoshiro256++";

    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream, keyed by `stream`.
    pub fn fork(&self, stream: u64) -> Self {
        Self::new(derive_seed(self.seed, stream))
    }
}

/// Mix a base seed with a stream tag (splitmix64 finaliser).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

pub fn sample_gaussian(mean: f64, sd: f64, rng: &mut SeededRng) -> Result<f64> {
    let dist = Normal::new(mean, sd)
        .map_err(|e| Error::InvalidArgument(format!("gaussian({mean}, {sd}): {e}")))?;
    if !(sd > 0.0) {
        return Err(Error::InvalidArgument(format!("gaussian sd must be > 0, got {sd}")));
    }
    Ok(dist.sample(rng))
}

/// Standard normal draw; the hot-path variant of [`sample_gaussian`].
#[inline]
pub fn standard_normal(rng: &mut SeededRng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

pub fn sample_bernoulli(p: f64, rng: &mut SeededRng) -> Result<bool> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("bernoulli p must lie in [0,1], got {p}")));
    }
    Ok(rng.gen::<f64>() < p)
}

pub fn sample_beta(a: f64, b: f64, rng: &mut SeededRng) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidArgument(format!("beta({a}, {b}) needs positive finite shapes")));
    }
    let dist = Beta::new(a, b).map_err(|e| Error::InvalidArgument(format!("beta({a}, {b}): {e}")))?;
    // Keep the draw strictly inside (0, 1).
    let v: f64 = dist.sample(rng);
    Ok(v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

/// Dirichlet draw as normalised Gamma(α_k, 1) variates.
pub fn sample_dirichlet(alpha: &[f64], rng: &mut SeededRng) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return Err(Error::InvalidArgument("dirichlet needs at least one component".into()));
    }
    let mut draws = Vec::with_capacity(alpha.len());
    for &a in alpha {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::InvalidArgument(format!("dirichlet concentration must be > 0, got {a}")));
        }
        let g = Gamma::new(a, 1.0).map_err(|e| Error::InvalidArgument(format!("gamma({a}): {e}")))?;
        draws.push(g.sample(rng));
    }
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        draws.iter_mut().for_each(|v| *v /= total);
    } else {
        // Every gamma variate underflowed; all mass goes to one component.
        let k = sample_categorical(alpha, rng);
        draws.iter_mut().for_each(|v| *v = 0.0);
        draws[k] = 1.0;
    }
    Ok(draws)
}

pub fn sample_multinomial(probs: &[f64], rng: &mut SeededRng) -> Result<usize> {
    if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidArgument("multinomial needs non-negative finite weights".into()));
    }
    let total: f64 = probs.iter().sum();
    if !((total - 1.0).abs() < 1e-8) {
        return Err(Error::InvalidArgument(format!("multinomial weights sum to {total}, not 1")));
    }
    Ok(sample_categorical(probs, rng))
}

/// Inverse-CDF draw from unnormalised non-negative weights.
#[inline]
pub fn sample_categorical(weights: &[f64], rng: &mut SeededRng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (idx, &w) in weights.iter().enumerate() {
        if u < w {
            return idx;
        }
        u -= w;
    }
    // Rounding left u just above the last cumulative value.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}
