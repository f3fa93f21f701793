//! Single-network mixed-membership blockmodel with collapsed Gibbs sampling,
//! and the merged-network variant that trains one model on the union of all
//! layers.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{sweep_layer, EstimateAverager, LayerState, PointEstimates, NEG, POS};
use crate::matrix::Matrix;
use crate::network::{CompositeNetwork, Dyad, LayerSplit, TrainTestSplit, UserIndex};
use crate::numerics::{ln_gamma, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmsbConfig {
    pub k: usize,
    /// Symmetric Dirichlet concentration on memberships.
    pub alpha0: f64,
    /// Beta pseudo-count for non-links.
    pub gamma0: f64,
    /// Beta pseudo-count for links.
    pub gamma1: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl MmsbConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            alpha0: 1.0 / k.max(1) as f64,
            gamma0: 1.0,
            gamma1: 1.0,
            iterations: 500,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("K must be positive".into()));
        }
        for (name, v) in [("alpha0", self.alpha0), ("gamma0", self.gamma0), ("gamma1", self.gamma1)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    fn pseudo(&self, sign: usize) -> f64 {
        if sign == POS {
            self.gamma1
        } else {
            self.gamma0
        }
    }
}

pub fn init_state(n: usize, split: &LayerSplit, cfg: &MmsbConfig, rng: &mut SeededRng) -> Result<LayerState> {
    cfg.validate()?;
    LayerState::init(n, cfg.k, split, rng)
}

/// Unnormalised conditional over the K×K indicator pairs of dyad `(i, j)`,
/// with that dyad already removed from the tables.
pub fn conditional_weights(state: &LayerState, dyad: Dyad, positive: bool, cfg: &MmsbConfig, out: &mut [f64]) {
    let k = state.k();
    let y = if positive { POS } else { NEG };
    let (i, j) = (dyad.lo(), dyad.hi());
    let (g_y, g_sum) = (cfg.pseudo(y), cfg.gamma0 + cfg.gamma1);
    for a in 0..k {
        let left = state.user_count(i, a) as f64 + cfg.alpha0;
        for b in 0..k {
            let right = state.user_count(j, b) as f64 + cfg.alpha0;
            let n = state.pair_counts(a, b);
            let link = (n[y] as f64 + g_y) / ((n[POS] + n[NEG]) as f64 + g_sum);
            out[a * k + b] = left * right * link;
        }
    }
}

pub fn gibbs_sweep_mmsb(state: &mut LayerState, cfg: &MmsbConfig, rng: &mut SeededRng) {
    sweep_layer(state, rng, |s, d, pos, w| conditional_weights(s, d, pos, cfg, w));
}

/// Posterior-mean memberships and compatibilities given the current counts.
pub fn estimate_point(state: &LayerState, cfg: &MmsbConfig) -> PointEstimates {
    let k = cfg.k;
    let n = state.num_users();
    let mut pi = Matrix::zeros(n, k);
    for i in 0..n {
        let denom = state.user_total(i) as f64 + k as f64 * cfg.alpha0;
        for (c, v) in pi.row_mut(i).iter_mut().enumerate() {
            *v = (state.user_count(i, c) as f64 + cfg.alpha0) / denom;
        }
    }
    let b = Matrix::from_fn(k, k, |a, c| {
        let cnt = state.pair_counts(a, c);
        (cnt[POS] as f64 + cfg.gamma1) / ((cnt[POS] + cnt[NEG]) as f64 + cfg.gamma0 + cfg.gamma1)
    });
    PointEstimates { pi, b }
}

/// Log of the collapsed joint `p(z, y)` with π and B integrated out.
pub fn collapsed_log_joint(state: &LayerState, cfg: &MmsbConfig) -> f64 {
    let k = cfg.k;
    let mut total = 0.0;
    let a_sum = k as f64 * cfg.alpha0;
    for i in 0..state.num_users() {
        let n_i = state.user_total(i);
        if n_i == 0 {
            continue;
        }
        total += ln_gamma(a_sum) - ln_gamma(a_sum + n_i as f64);
        for &c in state.user_counts(i) {
            if c > 0 {
                total += ln_gamma(cfg.alpha0 + c as f64) - ln_gamma(cfg.alpha0);
            }
        }
    }
    let g_sum = cfg.gamma0 + cfg.gamma1;
    for a in 0..k {
        for b in 0..k {
            let cnt = state.pair_counts(a, b);
            let m = cnt[POS] + cnt[NEG];
            if m == 0 {
                continue;
            }
            total += ln_gamma(cfg.gamma1 + cnt[POS] as f64) - ln_gamma(cfg.gamma1)
                + ln_gamma(cfg.gamma0 + cnt[NEG] as f64)
                - ln_gamma(cfg.gamma0)
                + ln_gamma(g_sum)
                - ln_gamma(g_sum + m as f64);
        }
    }
    total
}

#[derive(Debug, Clone)]
pub struct MmsbFit {
    pub estimates: PointEstimates,
    pub state: LayerState,
    pub log_joint_trace: Vec<f64>,
}

/// Runs `cfg.iterations` sweeps on one layer; estimates average the sweeps
/// after the first half.
pub fn fit_layer(n: usize, split: &LayerSplit, cfg: &MmsbConfig, rng: &mut SeededRng) -> Result<MmsbFit> {
    let mut state = init_state(n, split, cfg, rng)?;
    let burn_in = cfg.iterations / 2;
    let mut avg = EstimateAverager::new();
    let mut trace = Vec::with_capacity(cfg.iterations);
    for sweep in 1..=cfg.iterations {
        gibbs_sweep_mmsb(&mut state, cfg, rng);
        trace.push(collapsed_log_joint(&state, cfg));
        if sweep > burn_in {
            avg.add(&estimate_point(&state, cfg));
        }
    }
    let estimates = avg.mean().unwrap_or_else(|| estimate_point(&state, cfg));
    Ok(MmsbFit { estimates, state, log_joint_trace: trace })
}

/// One independent model per layer, each on its own seeded stream.
pub fn fit_per_layer(n: usize, split: &TrainTestSplit, cfg: &MmsbConfig) -> Result<Vec<PointEstimates>> {
    let root = SeededRng::new(cfg.seed);
    split
        .layers
        .iter()
        .enumerate()
        .map(|(d, ls)| fit_layer(n, ls, cfg, &mut root.fork(d as u64)).map(|f| f.estimates))
        .collect()
}

/// Train sets of all layers pooled into one: positives are the union of
/// train positives, negatives the union of train negatives minus any dyad
/// that is a positive somewhere.
pub fn merge_split(split: &TrainTestSplit) -> LayerSplit {
    let mut seen = HashSet::new();
    let mut train_pos = Vec::new();
    for ls in &split.layers {
        for d in &ls.train_pos {
            if seen.insert(*d) {
                train_pos.push(*d);
            }
        }
    }
    let positives: HashSet<Dyad> = split.layers.iter().flat_map(|l| l.train_pos.iter().chain(&l.heldout_pos)).copied().collect();
    let mut train_neg = Vec::new();
    for ls in &split.layers {
        for d in &ls.train_neg {
            if !positives.contains(d) && seen.insert(*d) {
                train_neg.push(*d);
            }
        }
    }
    LayerSplit { train_pos, train_neg, ..Default::default() }
}

/// Single-layer composite whose dyads are the union over layers.
pub fn merge_layers(net: &CompositeNetwork) -> CompositeNetwork {
    net.merged()
}

/// Fits the merged-network baseline; the single estimate serves every layer.
pub fn fit_merged(n: usize, split: &TrainTestSplit, cfg: &MmsbConfig) -> Result<PointEstimates> {
    let merged = merge_split(split);
    let mut rng = SeededRng::new(cfg.seed).fork(u64::MAX);
    Ok(fit_layer(n, &merged, cfg, &mut rng)?.estimates)
}

/// `π_iᵀ B π_j`; users outside the fitted roster get the prior mean membership.
pub fn score_dyad(est: &PointEstimates, i: UserIndex, j: UserIndex) -> f64 {
    let n = est.pi.rows();
    let k = est.k();
    let uniform = vec![1.0 / k as f64; k];
    let left = if i < n { est.pi.row(i) } else { &uniform };
    let right = if j < n { est.pi.row(j) } else { &uniform };
    crate::latent::bilinear(left, &est.b, right)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::conditional;
    use crate::network::{LayerGraph, Roster};

    fn toy_state(k: usize, seed: u64) -> LayerState {
        let dyads = vec![
            (Dyad::new(0, 1).unwrap(), true),
            (Dyad::new(1, 2).unwrap(), true),
            (Dyad::new(0, 2).unwrap(), false),
        ];
        let mut rng = SeededRng::new(seed);
        let z = dyads
            .iter()
            .map(|_| {
                use rand::Rng;
                (rng.gen_range(0..k) as u16, rng.gen_range(0..k) as u16)
            })
            .collect();
        LayerState::from_assignments(3, k, dyads, z).unwrap()
    }

    #[test]
    fn conditional_matches_collapsed_joint_ratio() {
        // Each K×K outcome's weight is proportional to the collapsed joint
        // with that outcome plugged in.
        let cfg = MmsbConfig { alpha0: 0.4, gamma0: 1.3, gamma1: 0.7, ..MmsbConfig::new(2) };
        for seed in 0..5 {
            let mut s = toy_state(2, seed);
            for e in 0..s.num_dyads() {
                let cond = conditional(&mut s, e, |st, d, p, w| conditional_weights(st, d, p, &cfg, w));
                let saved = s.assignment(e);
                let mut joint = Vec::new();
                for a in 0..2 {
                    for b in 0..2 {
                        s.remove(e);
                        s.insert(e, a, b);
                        joint.push(collapsed_log_joint(&s, &cfg));
                    }
                }
                s.remove(e);
                s.insert(e, saved.0, saved.1);
                let max = joint.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = joint.iter().map(|l| (l - max).exp()).sum();
                for (c, l) in cond.iter().zip(&joint) {
                    assert!((c - (l - max).exp() / z).abs() < 1e-12);
                }
                assert!((cond.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn prior_mean_estimates_when_counts_are_zero() {
        let cfg = MmsbConfig { gamma0: 2.0, gamma1: 1.0, ..MmsbConfig::new(3) };
        let s = LayerState::from_assignments(4, 3, vec![], vec![]).unwrap();
        let est = estimate_point(&s, &cfg);
        assert!(est.pi.as_slice().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert!(est.b.as_slice().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn membership_formula() {
        // Ten slots of user 0 in community 0, α0 = 1, K = 2 → (11/12, 1/12).
        let dyads: Vec<(Dyad, bool)> = (1..=10).map(|j| (Dyad::new(0, j).unwrap(), true)).collect();
        let z = vec![(0u16, 1u16); 10];
        let s = LayerState::from_assignments(11, 2, dyads, z).unwrap();
        let cfg = MmsbConfig { alpha0: 1.0, ..MmsbConfig::new(2) };
        let est = estimate_point(&s, &cfg);
        assert!((est.pi[(0, 0)] - 11.0 / 12.0).abs() < 1e-15);
        assert!((est.pi[(0, 1)] - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn scores() {
        let est = PointEstimates {
            pi: Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]),
            b: Matrix::from_vec(2, 2, vec![0.9, 0.1, 0.2, 0.3]),
        };
        assert!((score_dyad(&est, 0, 1) - 0.1).abs() < 1e-15);
        let flat = PointEstimates { pi: Matrix::filled(3, 2, 0.5), b: Matrix::filled(2, 2, 0.37) };
        assert!((score_dyad(&flat, 0, 2) - 0.37).abs() < 1e-15);
        assert!((score_dyad(&flat, 0, 99) - 0.37).abs() < 1e-15);
    }

    #[test]
    fn relabeling_leaves_joint_invariant() {
        let cfg = MmsbConfig::new(3);
        for seed in 0..10 {
            let s = toy_state(3, seed);
            let p = s.permuted(&[2, 0, 1]);
            assert!((collapsed_log_joint(&s, &cfg) - collapsed_log_joint(&p, &cfg)).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_is_deterministic_and_consistent() {
        let split = LayerSplit {
            train_pos: vec![Dyad::new(0, 1).unwrap(), Dyad::new(1, 2).unwrap(), Dyad::new(2, 3).unwrap()],
            train_neg: vec![Dyad::new(0, 3).unwrap(), Dyad::new(0, 2).unwrap(), Dyad::new(1, 3).unwrap()],
            ..Default::default()
        };
        let cfg = MmsbConfig { iterations: 20, ..MmsbConfig::new(2) };
        let a = fit_layer(4, &split, &cfg, &mut SeededRng::new(3)).unwrap();
        let b = fit_layer(4, &split, &cfg, &mut SeededRng::new(3)).unwrap();
        assert_eq!(a.state, b.state);
        assert_eq!(a.estimates, b.estimates);
        assert!(a.state.is_consistent());
        assert_eq!(a.log_joint_trace.len(), 20);
    }

    #[test]
    fn merging() {
        let l1 = LayerGraph::from_pairs("a", [(1, 2)]);
        let l2 = LayerGraph::from_pairs("b", [(2, 3), (1, 2)]);
        let net = CompositeNetwork::assemble(Roster::numbered(4), vec![l1, l2]).unwrap();
        let merged = merge_layers(&net);
        assert_eq!(merged.layer(0).num_dyads(), 2);
        let single = CompositeNetwork::assemble(Roster::numbered(3), vec![LayerGraph::from_pairs("a", [(0, 1), (1, 2)])]).unwrap();
        assert_eq!(merge_layers(&single).layer(0).dyad_set(), single.layer(0).dyad_set());

        let d = |a, b| Dyad::new(a, b).unwrap();
        let split = TrainTestSplit {
            layers: vec![
                LayerSplit { train_pos: vec![d(0, 1)], train_neg: vec![d(1, 3)], ..Default::default() },
                LayerSplit { train_pos: vec![d(1, 3), d(0, 1)], train_neg: vec![d(0, 2)], ..Default::default() },
            ],
        };
        let m = merge_split(&split);
        assert_eq!(m.train_pos, vec![d(0, 1), d(1, 3)]);
        assert_eq!(m.train_neg, vec![d(0, 2)]);
    }
}
