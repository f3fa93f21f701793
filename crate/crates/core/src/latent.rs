//! Community-indicator state shared by the baseline and composite samplers.
//!
//! Every train dyad `(i, j)` with `i < j` carries a sender indicator for `i`
//! and a receiver indicator for `j`. The count tables are kept in lock-step
//! with the indicators so that collapsed conditionals are O(K²) per dyad.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::network::{Dyad, LayerSplit, UserIndex};
use crate::numerics::{sample_categorical, SeededRng};

/// Index of a link sign in the pair tables.
pub const NEG: usize = 0;
pub const POS: usize = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerState {
    k: usize,
    n: usize,
    dyads: Vec<Dyad>,
    positive: Vec<bool>,
    z: Vec<(u16, u16)>,
    user_comm: Vec<u32>,
    user_total: Vec<u32>,
    pair: Vec<[u32; 2]>,
}

impl LayerState {
    /// Train positives followed by train negatives, each indicator drawn
    /// uniformly from `0..k`.
    pub fn init(n: usize, k: usize, split: &LayerSplit, rng: &mut SeededRng) -> Result<Self> {
        let dyads: Vec<(Dyad, bool)> = split
            .train_pos
            .iter()
            .map(|d| (*d, true))
            .chain(split.train_neg.iter().map(|d| (*d, false)))
            .collect();
        if dyads.is_empty() {
            return Err(Error::InvalidArgument("cannot initialise a sampler on an empty train set".into()));
        }
        let uniform = vec![1.0; k];
        let z = dyads
            .iter()
            .map(|_| (sample_categorical(&uniform, rng) as u16, sample_categorical(&uniform, rng) as u16))
            .collect();
        Self::from_assignments(n, k, dyads, z)
    }

    /// State with explicit indicators; counts are tallied from them.
    pub fn from_assignments(n: usize, k: usize, dyads: Vec<(Dyad, bool)>, z: Vec<(u16, u16)>) -> Result<Self> {
        if k == 0 || k > u16::MAX as usize {
            return Err(Error::InvalidArgument(format!("community count {k} out of range")));
        }
        if z.len() != dyads.len() {
            return Err(Error::DimensionMismatch { expected: dyads.len(), actual: z.len() });
        }
        if let Some((d, _)) = dyads.iter().find(|(d, _)| d.hi() >= n) {
            return Err(Error::InvalidArgument(format!("dyad {:?} outside {n} users", d)));
        }
        if z.iter().any(|&(a, b)| a as usize >= k || b as usize >= k) {
            return Err(Error::InvalidArgument("indicator outside 0..k".into()));
        }
        let (dyads, positive) = dyads.into_iter().unzip();
        let mut state = Self {
            k,
            n,
            dyads,
            positive,
            z,
            user_comm: Vec::new(),
            user_total: Vec::new(),
            pair: Vec::new(),
        };
        state.retally();
        Ok(state)
    }

    fn retally(&mut self) {
        let (uc, ut, pc) = self.tally();
        self.user_comm = uc;
        self.user_total = ut;
        self.pair = pc;
    }

    /// Fresh count tables from the indicators.
    #[allow(clippy::type_complexity)]
    pub fn tally(&self) -> (Vec<u32>, Vec<u32>, Vec<[u32; 2]>) {
        let mut uc = vec![0u32; self.n * self.k];
        let mut ut = vec![0u32; self.n];
        let mut pc = vec![[0u32; 2]; self.k * self.k];
        for (e, d) in self.dyads.iter().enumerate() {
            let (a, b) = (self.z[e].0 as usize, self.z[e].1 as usize);
            uc[d.lo() * self.k + a] += 1;
            uc[d.hi() * self.k + b] += 1;
            ut[d.lo()] += 1;
            ut[d.hi()] += 1;
            pc[a * self.k + b][sign(self.positive[e])] += 1;
        }
        (uc, ut, pc)
    }

    pub fn is_consistent(&self) -> bool {
        let (uc, ut, pc) = self.tally();
        uc == self.user_comm && ut == self.user_total && pc == self.pair
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_users(&self) -> usize {
        self.n
    }

    pub fn num_dyads(&self) -> usize {
        self.dyads.len()
    }

    pub fn dyad(&self, e: usize) -> Dyad {
        self.dyads[e]
    }

    pub fn is_positive(&self, e: usize) -> bool {
        self.positive[e]
    }

    pub fn assignment(&self, e: usize) -> (usize, usize) {
        (self.z[e].0 as usize, self.z[e].1 as usize)
    }

    pub fn assignments(&self) -> &[(u16, u16)] {
        &self.z
    }

    #[inline]
    pub fn user_count(&self, i: UserIndex, k: usize) -> u32 {
        self.user_comm[i * self.k + k]
    }

    #[inline]
    pub fn user_counts(&self, i: UserIndex) -> &[u32] {
        &self.user_comm[i * self.k..(i + 1) * self.k]
    }

    #[inline]
    pub fn user_total(&self, i: UserIndex) -> u32 {
        self.user_total[i]
    }

    #[inline]
    pub fn pair_counts(&self, k: usize, kp: usize) -> [u32; 2] {
        self.pair[k * self.k + kp]
    }

    /// Takes dyad `e`'s indicators out of the tables.
    pub fn remove(&mut self, e: usize) {
        let d = self.dyads[e];
        let (a, b) = (self.z[e].0 as usize, self.z[e].1 as usize);
        self.user_comm[d.lo() * self.k + a] -= 1;
        self.user_comm[d.hi() * self.k + b] -= 1;
        self.user_total[d.lo()] -= 1;
        self.user_total[d.hi()] -= 1;
        self.pair[a * self.k + b][sign(self.positive[e])] -= 1;
    }

    /// Sets dyad `e`'s indicators and adds them to the tables.
    pub fn insert(&mut self, e: usize, a: usize, b: usize) {
        let d = self.dyads[e];
        self.z[e] = (a as u16, b as u16);
        self.user_comm[d.lo() * self.k + a] += 1;
        self.user_comm[d.hi() * self.k + b] += 1;
        self.user_total[d.lo()] += 1;
        self.user_total[d.hi()] += 1;
        self.pair[a * self.k + b][sign(self.positive[e])] += 1;
    }

    /// Relabels communities: old label `c` becomes `perm[c]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let z = self.z.iter().map(|&(a, b)| (perm[a as usize] as u16, perm[b as usize] as u16)).collect();
        let dyads = self.dyads.iter().copied().zip(self.positive.iter().copied()).collect();
        Self::from_assignments(self.n, self.k, dyads, z).expect("permutation keeps indicators in range")
    }
}

#[inline]
pub fn sign(positive: bool) -> usize {
    if positive {
        POS
    } else {
        NEG
    }
}

/// One collapsed Gibbs sweep over a layer in insertion order. For each dyad
/// the indicators are removed, `weights` is filled with unnormalised
/// probabilities of the K×K pairs (row = sender community), a pair is drawn
/// and re-inserted.
pub fn sweep_layer<F>(state: &mut LayerState, rng: &mut SeededRng, mut weights: F)
where
    F: FnMut(&LayerState, Dyad, bool, &mut [f64]),
{
    let k = state.k;
    let mut buf = vec![0.0; k * k];
    for e in 0..state.num_dyads() {
        state.remove(e);
        weights(state, state.dyads[e], state.positive[e], &mut buf);
        let pick = sample_categorical(&buf, rng);
        state.insert(e, pick / k, pick % k);
    }
    debug_assert!(state.is_consistent(), "count tables drifted from indicators");
}

/// Normalised conditional of dyad `e` given all other indicators.
pub fn conditional<F>(state: &mut LayerState, e: usize, mut weights: F) -> Vec<f64>
where
    F: FnMut(&LayerState, Dyad, bool, &mut [f64]),
{
    let k = state.k;
    let (a, b) = state.assignment(e);
    state.remove(e);
    let mut buf = vec![0.0; k * k];
    weights(state, state.dyads[e], state.positive[e], &mut buf);
    state.insert(e, a, b);
    let total: f64 = buf.iter().sum();
    buf.iter_mut().for_each(|w| *w /= total);
    buf
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LatentState {
    pub layers: Vec<LayerState>,
}

impl LatentState {
    pub fn is_consistent(&self) -> bool {
        self.layers.iter().all(LayerState::is_consistent)
    }

    pub fn num_dyads(&self) -> usize {
        self.layers.iter().map(LayerState::num_dyads).sum()
    }
}

/// Membership vectors (one row per user) and the compatibility matrix of a
/// single layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PointEstimates {
    pub pi: Matrix,
    pub b: Matrix,
}

impl PointEstimates {
    pub fn k(&self) -> usize {
        self.b.rows()
    }

    /// `π_iᵀ B π_j`.
    pub fn score(&self, i: UserIndex, j: UserIndex) -> f64 {
        bilinear(self.pi.row(i), &self.b, self.pi.row(j))
    }

    /// Hard community label per user (first maximum).
    pub fn hard_labels(&self) -> Vec<usize> {
        self.pi
            .iter_rows()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (k, &p)| if p > best.1 { (k, p) } else { best })
                    .0
            })
            .collect()
    }
}

pub fn bilinear(left: &[f64], b: &Matrix, right: &[f64]) -> f64 {
    let mut total = 0.0;
    for (k, &l) in left.iter().enumerate() {
        if l == 0.0 {
            continue;
        }
        let row = b.row(k);
        total += l * row.iter().zip(right).map(|(bk, r)| bk * r).sum::<f64>();
    }
    total
}

/// Running mean of point estimates over retained sweeps.
#[derive(Debug, Clone)]
pub struct EstimateAverager {
    sum: Option<PointEstimates>,
    count: usize,
}

impl Default for EstimateAverager {
    fn default() -> Self {
        Self::new()
    }
}

impl EstimateAverager {
    pub fn new() -> Self {
        Self { sum: None, count: 0 }
    }

    pub fn add(&mut self, est: &PointEstimates) {
        match self.sum.as_mut() {
            None => self.sum = Some(est.clone()),
            Some(sum) => {
                add_into(&mut sum.pi, &est.pi);
                add_into(&mut sum.b, &est.b);
            }
        }
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> Option<PointEstimates> {
        let sum = self.sum.as_ref()?;
        let scale = 1.0 / self.count as f64;
        let mut out = sum.clone();
        out.pi.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
        out.b.as_mut_slice().iter_mut().for_each(|v| *v *= scale);
        Some(out)
    }
}

fn add_into(acc: &mut Matrix, other: &Matrix) {
    acc.as_mut_slice().iter_mut().zip(other.as_slice()).for_each(|(a, b)| *a += b);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split_of(pos: &[(usize, usize)], neg: &[(usize, usize)]) -> LayerSplit {
        LayerSplit {
            train_pos: pos.iter().map(|&(a, b)| Dyad::new(a, b).unwrap()).collect(),
            train_neg: neg.iter().map(|&(a, b)| Dyad::new(a, b).unwrap()).collect(),
            ..Default::default()
        }
    }

    #[test]
    fn single_dyad_tally() {
        let mut rng = SeededRng::new(1);
        let s = LayerState::init(2, 2, &split_of(&[(0, 1)], &[]), &mut rng).unwrap();
        assert_eq!(s.user_counts(0).iter().sum::<u32>(), 1);
        assert_eq!(s.user_counts(1).iter().sum::<u32>(), 1);
        let total: u32 = (0..2).flat_map(|a| (0..2).map(move |b| (a, b))).map(|(a, b)| s.pair_counts(a, b)[POS]).sum();
        assert_eq!(total, 1);
        assert!(s.is_consistent());
    }

    #[test]
    fn init_is_deterministic_and_rejects_empty() {
        let sp = split_of(&[(0, 1), (1, 2), (0, 3)], &[(2, 3)]);
        let a = LayerState::init(4, 3, &sp, &mut SeededRng::new(5)).unwrap();
        let b = LayerState::init(4, 3, &sp, &mut SeededRng::new(5)).unwrap();
        assert_eq!(a, b);
        assert!(LayerState::init(4, 3, &LayerSplit::default(), &mut SeededRng::new(5)).is_err());
    }

    #[test]
    fn remove_insert_same_pair_is_identity() {
        let sp = split_of(&[(0, 1), (1, 2)], &[(0, 2)]);
        let mut s = LayerState::init(3, 2, &sp, &mut SeededRng::new(2)).unwrap();
        let before = s.clone();
        for e in 0..s.num_dyads() {
            let (a, b) = s.assignment(e);
            s.remove(e);
            s.insert(e, a, b);
        }
        assert_eq!(s, before);
    }

    #[test]
    fn sums_match_slot_counts() {
        let sp = split_of(&[(0, 1), (1, 2), (2, 3)], &[(0, 3), (0, 2)]);
        let mut rng = SeededRng::new(3);
        let mut s = LayerState::init(4, 3, &sp, &mut rng).unwrap();
        sweep_layer(&mut s, &mut rng, |_, _, _, w| w.iter_mut().for_each(|v| *v = 1.0));
        assert!(s.is_consistent());
        let slots: u32 = (0..4).map(|i| s.user_total(i)).sum();
        assert_eq!(slots, 10);
        let pairs: u32 = (0..3).flat_map(|a| (0..3).map(move |b| (a, b))).map(|(a, b)| s.pair_counts(a, b).iter().sum::<u32>()).sum();
        assert_eq!(pairs, 5);
    }

    #[test]
    fn averaging_identical_estimates_is_identity() {
        let est = PointEstimates {
            pi: Matrix::from_vec(2, 2, vec![0.25, 0.75, 0.5, 0.5]),
            b: Matrix::from_vec(2, 2, vec![0.9, 0.1, 0.2, 0.3]),
        };
        let mut avg = EstimateAverager::new();
        for _ in 0..4 {
            avg.add(&est);
        }
        let mean = avg.mean().unwrap();
        for (a, b) in mean.pi.as_slice().iter().zip(est.pi.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
        for (a, b) in mean.b.as_slice().iter().zip(est.b.as_slice()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
