//! Synthetic composite networks sampled from the generative processes of
//! the two models, with the planted parameters kept as ground truth.

use std::collections::HashSet;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::latent::PointEstimates;
use crate::matrix::{dot, Matrix};
use crate::network::{CompositeNetwork, Dyad, LayerGraph, Roster, UserIndex};
use crate::numerics::{
    sample_bernoulli, sample_beta, sample_dirichlet, sample_multinomial, softplus, standard_normal, SeededRng,
};

/// Redraws of a layer's parameters allowed when it yields no links.
pub const MAX_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub k: usize,
    /// Number of distinct member pairs whose link is sampled.
    pub candidates: usize,
}

/// One sampled candidate dyad with its drawn indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DyadSlot {
    pub dyad: Dyad,
    pub positive: bool,
    pub z: (u16, u16),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedLayer {
    /// K×T mapping; zero columns for the single-network process.
    pub lambda: Matrix,
    pub alpha: Matrix,
    pub pi: Matrix,
    pub b: Matrix,
    pub slots: Vec<DyadSlot>,
}

impl PlantedLayer {
    /// Candidates whose drawn link was absent.
    pub fn non_links(&self) -> Vec<Dyad> {
        self.slots.iter().filter(|s| !s.positive).map(|s| s.dyad).collect()
    }

    pub fn estimates(&self) -> PointEstimates {
        PointEstimates { pi: self.pi.clone(), b: self.b.clone() }
    }

    /// Argmax community per user (first maximum).
    pub fn hard_labels(&self) -> Vec<usize> {
        self.estimates().hard_labels()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedTruth {
    pub x: Matrix,
    pub layers: Vec<PlantedLayer>,
}

impl PlantedTruth {
    /// Versioned text dump of x and every layer's λ, α, π and B.
    pub fn write<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "comfp-truth 1")?;
        writeln!(out, "layers {}", self.layers.len())?;
        crate::checkpoint::write_matrix(out, "x", &self.x)?;
        for (d, l) in self.layers.iter().enumerate() {
            crate::checkpoint::write_matrix(out, &format!("lambda.{d}"), &l.lambda)?;
            crate::checkpoint::write_matrix(out, &format!("alpha.{d}"), &l.alpha)?;
            crate::checkpoint::write_matrix(out, &format!("pi.{d}"), &l.pi)?;
            crate::checkpoint::write_matrix(out, &format!("b.{d}"), &l.b)?;
        }
        Ok(())
    }
}

/// `count` distinct unordered pairs of `members`, uniformly without
/// replacement, in draw order.
pub fn sample_pairs(members: &[UserIndex], count: usize, rng: &mut SeededRng) -> Result<Vec<Dyad>> {
    let m = members.len();
    let total = m * m.saturating_sub(1) / 2;
    if count > total {
        return Err(Error::Infeasible(format!("{count} candidate dyads requested among {m} users ({total} pairs)")));
    }
    if count * 2 <= total {
        let mut seen = HashSet::with_capacity(count);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let a = members[rng.gen_range(0..m)];
            let b = members[rng.gen_range(0..m)];
            if let Some(d) = Dyad::new(a, b) {
                if seen.insert(d) {
                    out.push(d);
                }
            }
        }
        return Ok(out);
    }
    let mut all = Vec::with_capacity(total);
    for (p, &a) in members.iter().enumerate() {
        for &b in &members[p + 1..] {
            all.extend(Dyad::new(a, b));
        }
    }
    let (picked, _) = all.partial_shuffle(rng, count);
    Ok(picked.to_vec())
}

/// `count` distinct pairs of `members` drawn without replacement with
/// probability proportional to the product of the endpoints' activity.
pub fn sample_weighted_pairs(
    members: &[UserIndex],
    activity: &[f64],
    count: usize,
    rng: &mut SeededRng,
) -> Result<Vec<Dyad>> {
    let mut all = Vec::new();
    for (p, &a) in members.iter().enumerate() {
        for &b in &members[p + 1..] {
            all.extend(Dyad::new(a, b));
        }
    }
    if count > all.len() {
        return Err(Error::Infeasible(format!("{count} candidate dyads requested among {} pairs", all.len())));
    }
    let picked = all
        .choose_multiple_weighted(rng, count, |d| activity[d.lo()] * activity[d.hi()])
        .map_err(|e| Error::InvalidArgument(format!("activity weights: {e}")))?;
    Ok(picked.copied().collect())
}

fn alpha_of(x: &Matrix, lambda: &Matrix) -> Matrix {
    Matrix::from_fn(x.rows(), lambda.rows(), |i, k| softplus(dot(x.row(i), lambda.row(k))))
}

fn sample_pi(alpha: &Matrix, rng: &mut SeededRng) -> Result<Matrix> {
    let mut pi = Matrix::zeros(alpha.rows(), alpha.cols());
    for i in 0..alpha.rows() {
        let row = sample_dirichlet(alpha.row(i), rng)?;
        pi.row_mut(i).copy_from_slice(&row);
    }
    Ok(pi)
}

/// Draws indicators and links for each candidate; timestamps are the draw
/// order.
fn sample_links(
    name: &str,
    members: &[UserIndex],
    candidates: &[Dyad],
    pi: &Matrix,
    b: &Matrix,
    rng: &mut SeededRng,
) -> Result<(LayerGraph, Vec<DyadSlot>)> {
    let mut layer = LayerGraph::new(name, true);
    for &u in members {
        layer.add_member(u);
    }
    let mut slots = Vec::with_capacity(candidates.len());
    for (step, &dyad) in candidates.iter().enumerate() {
        let za = sample_multinomial(pi.row(dyad.lo()), rng)?;
        let zb = sample_multinomial(pi.row(dyad.hi()), rng)?;
        let positive = sample_bernoulli(b[(za, zb)], rng)?;
        if positive {
            layer.insert(dyad, Some(step as i64));
        }
        slots.push(DyadSlot { dyad, positive, z: (za as u16, zb as u16) });
    }
    Ok((layer, slots))
}

fn check_budget(n: usize, spec: &LayerSpec, members: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 users, got {n}")));
    }
    if spec.k == 0 {
        return Err(Error::InvalidArgument("K must be positive".into()));
    }
    let pairs = members * members.saturating_sub(1) / 2;
    if spec.candidates > pairs {
        return Err(Error::InvalidArgument(format!(
            "{} candidate dyads exceed the {pairs} pairs among {members} members",
            spec.candidates
        )));
    }
    Ok(())
}

/// Samples one layer given its membership and compatibility parameters,
/// retrying with fresh draws from `redraw` while no link appears.
fn sample_layer_with_retry<F>(
    name: &str,
    members: &[UserIndex],
    candidates: usize,
    activity: Option<&[f64]>,
    rng: &mut SeededRng,
    mut redraw: F,
) -> Result<(LayerGraph, PlantedLayer)>
where
    F: FnMut(&mut SeededRng) -> Result<(Matrix, Matrix, Matrix, Matrix)>,
{
    for attempt in 0..MAX_ATTEMPTS {
        let (lambda, alpha, pi, b) = redraw(rng)?;
        let dyads = match activity {
            Some(w) => sample_weighted_pairs(members, w, candidates, rng)?,
            None => sample_pairs(members, candidates, rng)?,
        };
        let (layer, slots) = sample_links(name, members, &dyads, &pi, &b, rng)?;
        if layer.num_dyads() > 0 {
            return Ok((layer, PlantedLayer { lambda, alpha, pi, b, slots }));
        }
        log::warn!("layer '{name}': attempt {} produced no links; redrawing", attempt + 1);
    }
    Err(Error::Infeasible(format!("layer '{name}' produced no links in {MAX_ATTEMPTS} attempts")))
}

fn gaussian_matrix(rows: usize, cols: usize, sd: f64, rng: &mut SeededRng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| sd * standard_normal(rng))
}

/// Composite process: `x_i ~ N(0, σ_u²)`, `λ_d ~ N(0, σ_d²)`,
/// `B_d,kk' ~ Beta(t(λ_d λ_dᵀ)_kk', 1)`, `π_id ~ Dir(t(x_i λ_dᵀ))`, then
/// indicators and links for each candidate dyad. Every user is a member of
/// every layer.
pub fn generate_comfp(
    n: usize,
    specs: &[LayerSpec],
    t: usize,
    sigma_u: f64,
    sigma_d: f64,
    seed: u64,
) -> Result<(CompositeNetwork, PlantedTruth)> {
    if specs.is_empty() || t == 0 {
        return Err(Error::InvalidArgument("need at least one layer and T ≥ 1".into()));
    }
    if !(sigma_u > 0.0 && sigma_d > 0.0) {
        return Err(Error::InvalidArgument("Gaussian scales must be positive".into()));
    }
    let members: Vec<UserIndex> = (0..n).collect();
    for spec in specs {
        check_budget(n, spec, n)?;
    }
    let mut rng = SeededRng::new(seed);
    let x = gaussian_matrix(n, t, sigma_u, &mut rng);
    let mut graphs = Vec::new();
    let mut planted = Vec::new();
    for (d, spec) in specs.iter().enumerate() {
        let mut layer_rng = rng.fork(d as u64);
        let (g, p) = sample_layer_with_retry(&format!("layer{d}"), &members, spec.candidates, None, &mut layer_rng, |r| {
            let lambda = gaussian_matrix(spec.k, t, sigma_d, r);
            let rho = crate::comfp::compat_prior(&lambda);
            let mut b = Matrix::zeros(spec.k, spec.k);
            for (v, &shape) in b.as_mut_slice().iter_mut().zip(rho.as_slice()) {
                *v = sample_beta(shape, 1.0, r)?;
            }
            let alpha = alpha_of(&x, &lambda);
            let pi = sample_pi(&alpha, r)?;
            Ok((lambda, alpha, pi, b))
        })?;
        graphs.push(g);
        planted.push(p);
    }
    let net = CompositeNetwork::assemble(Roster::numbered(n), graphs)?;
    Ok((net, PlantedTruth { x, layers: planted }))
}

/// Single-network process: `π_i ~ Dir(α0)`, `B_kk' ~ Beta(γ1, γ0)` (γ1 on
/// links), then indicators and links.
pub fn generate_mmsb(
    n: usize,
    k: usize,
    candidates: usize,
    alpha0: f64,
    gamma0: f64,
    gamma1: f64,
    seed: u64,
) -> Result<(LayerGraph, PlantedTruth)> {
    check_budget(n, &LayerSpec { k, candidates }, n)?;
    if !(alpha0 > 0.0 && gamma0 > 0.0 && gamma1 > 0.0) {
        return Err(Error::InvalidArgument("α0, γ0 and γ1 must be positive".into()));
    }
    let members: Vec<UserIndex> = (0..n).collect();
    let mut rng = SeededRng::new(seed);
    let (g, p) = sample_layer_with_retry("layer0", &members, candidates, None, &mut rng, |r| {
        let alpha = Matrix::filled(n, k, alpha0);
        let pi = sample_pi(&alpha, r)?;
        let mut b = Matrix::zeros(k, k);
        for v in b.as_mut_slice() {
            *v = sample_beta(gamma1, gamma0, r)?;
        }
        Ok((Matrix::zeros(k, 0), alpha, pi, b))
    })?;
    Ok((g, PlantedTruth { x: Matrix::zeros(n, 0), layers: vec![p] }))
}

/// Feature scale of the planted community centres.
const CENTRE: f64 = 3.0;
const FEATURE_NOISE: f64 = 0.3;
const B_WITHIN: f64 = 0.8;
const B_ACROSS: f64 = 0.01;
/// Log-scale standard deviation of the per-user activity weights.
const ACTIVITY_SPREAD: f64 = 1.0;
/// Candidate dyads per user in the dense layer.
const DENSE_BUDGET_PER_USER: usize = 80;

/// Dense/sparse two-layer fixture with shared community structure.
///
/// User `i` belongs to community `c_i = i mod K`; its features are
/// `3·e_{c_i}` plus N(0, 0.3²) noise. Each layer maps community `c` to its
/// own label `p_d(c)` through `λ_d` rows `e_c − Σ_{c'≠c} e_c'`, so the
/// hybrid prior favours the planted community in both layers. `B_d` is
/// planted with 0.8 within and 0.01 across communities. The dense layer
/// samples `80·n` candidate dyads uniformly (capped by its pair count). The
/// sparse layer samples that budget divided by `density_ratio`, weighting
/// each pair by the product of log-normal user activities so its degrees
/// are heavy-tailed. `⌈overlap·n⌉` users are in both layers and the rest
/// alternate between them. Requires `T ≥ K`.
pub fn plant_sparse_dense_pair(
    n: usize,
    k: usize,
    t: usize,
    density_ratio: f64,
    overlap_fraction: f64,
    seed: u64,
) -> Result<(CompositeNetwork, PlantedTruth)> {
    if !(density_ratio > 1.0) || !density_ratio.is_finite() {
        return Err(Error::InvalidArgument(format!("density ratio must exceed 1, got {density_ratio}")));
    }
    if !(overlap_fraction > 0.0 && overlap_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("overlap fraction must lie in (0, 1], got {overlap_fraction}")));
    }
    if k == 0 || t < k {
        return Err(Error::InvalidArgument(format!("planted fixture needs 1 ≤ K ≤ T, got K={k}, T={t}")));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 users, got {n}")));
    }
    let mut rng = SeededRng::new(seed);
    let shared = ((overlap_fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut order: Vec<UserIndex> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut members = [Vec::new(), Vec::new()];
    for (pos, &u) in order.iter().enumerate() {
        if pos < shared {
            members[0].push(u);
            members[1].push(u);
        } else {
            members[(pos - shared) % 2].push(u);
        }
    }
    members.iter_mut().for_each(|m| m.sort_unstable());

    let x = Matrix::from_fn(n, t, |i, f| {
        let centre = if f == i % k { CENTRE } else { 0.0 };
        centre + FEATURE_NOISE * standard_normal(&mut rng)
    });

    let activity: Vec<f64> = (0..n).map(|_| (ACTIVITY_SPREAD * standard_normal(&mut rng)).exp()).collect();

    let dense_pairs = members[0].len() * members[0].len().saturating_sub(1) / 2;
    let dense_budget = (DENSE_BUDGET_PER_USER * n).min(dense_pairs);
    let sparse_budget = (dense_budget as f64 / density_ratio).floor() as usize;
    let budgets = [dense_budget, sparse_budget];
    let names = ["dense", "sparse"];

    let mut graphs = Vec::new();
    let mut planted = Vec::new();
    for d in 0..2 {
        check_budget(n, &LayerSpec { k, candidates: budgets[d] }, members[d].len())?;
        let mut layer_rng = rng.fork(d as u64);
        let x_ref = &x;
        let (g, p) = sample_layer_with_retry(names[d], &members[d], budgets[d], (d == 1).then_some(&activity[..]), &mut layer_rng, |r| {
            let mut perm: Vec<usize> = (0..k).collect();
            perm.shuffle(r);
            // Row p(c) points at community c.
            let mut lambda = Matrix::zeros(k, t);
            for (c, &label) in perm.iter().enumerate() {
                for f in 0..k {
                    lambda[(label, f)] = if f == c { 1.0 } else { -1.0 };
                }
            }
            let b = Matrix::from_fn(k, k, |a, c| if a == c { B_WITHIN } else { B_ACROSS });
            let alpha = alpha_of(x_ref, &lambda);
            let pi = sample_pi(&alpha, r)?;
            Ok((lambda, alpha, pi, b))
        })?;
        graphs.push(g);
        planted.push(p);
    }
    let net = CompositeNetwork::assemble(Roster::numbered(n), graphs)?;
    Ok((net, PlantedTruth { x, layers: planted }))
}
