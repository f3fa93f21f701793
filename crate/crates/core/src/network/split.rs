use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;

use super::{CompositeNetwork, Dyad, LayerGraph, UserIndex};
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

pub const DEFAULT_EVAL_POOL: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    /// Hold out the most recent dyads.
    Temporal,
    Uniform,
}

impl std::str::FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "temporal" => Ok(SplitMode::Temporal),
            "uniform" => Ok(SplitMode::Uniform),
            other => Err(Error::InvalidArgument(format!("unknown split mode '{other}'"))),
        }
    }
}

/// Train/hold-out partition of one layer plus its sampled negatives.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LayerSplit {
    pub train_pos: Vec<Dyad>,
    pub heldout_pos: Vec<Dyad>,
    pub train_neg: Vec<Dyad>,
    /// Candidate negatives for each user that owns a held-out positive.
    pub eval_neg: BTreeMap<UserIndex, Vec<Dyad>>,
}

impl LayerSplit {
    /// Users with at least one held-out positive, ascending.
    pub fn eval_users(&self) -> Vec<UserIndex> {
        let mut users: Vec<UserIndex> = self.heldout_pos.iter().flat_map(|d| [d.lo(), d.hi()]).collect();
        users.sort_unstable();
        users.dedup();
        users
    }

    pub fn heldout_of(&self, user: UserIndex) -> impl Iterator<Item = &Dyad> {
        self.heldout_pos.iter().filter(move |d| d.contains(user))
    }

    /// Train degree (positives only) per user index below `n`.
    pub fn train_degrees(&self, n: usize) -> Vec<usize> {
        let mut deg = vec![0usize; n];
        for d in &self.train_pos {
            deg[d.lo()] += 1;
            deg[d.hi()] += 1;
        }
        deg
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrainTestSplit {
    pub layers: Vec<LayerSplit>,
}

/// Holds out `⌈fraction · m_d⌉` dyads per layer.
pub fn holdout_split(net: &CompositeNetwork, fraction: f64, mode: SplitMode, seed: u64) -> Result<TrainTestSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("hold-out fraction must lie in (0,1), got {fraction}")));
    }
    let root = SeededRng::new(seed);
    let mut layers = Vec::with_capacity(net.num_layers());
    for (d, layer) in net.layers().iter().enumerate() {
        let m = layer.num_dyads();
        let k = ((fraction * m as f64).ceil() as usize).min(m);
        let mut held = vec![false; m];
        match mode {
            SplitMode::Temporal => {
                let ts = layer.timestamps().ok_or_else(|| {
                    Error::InvalidArgument(format!("temporal split needs timestamps on layer '{}'", layer.name()))
                })?;
                let mut order: Vec<usize> = (0..m).collect();
                order.sort_by_key(|&p| (ts[p], layer.dyads()[p]));
                for &p in &order[m - k..] {
                    held[p] = true;
                }
            }
            SplitMode::Uniform => {
                let mut rng = root.fork(d as u64);
                let mut order: Vec<usize> = (0..m).collect();
                order.shuffle(&mut rng);
                for &p in &order[..k] {
                    held[p] = true;
                }
            }
        }
        let mut split = LayerSplit::default();
        for (p, dyad) in layer.dyads().iter().enumerate() {
            if held[p] {
                split.heldout_pos.push(*dyad);
            } else {
                split.train_pos.push(*dyad);
            }
        }
        layers.push(split);
    }
    Ok(TrainTestSplit { layers })
}

/// Fills in train negatives (as many as train positives, uniform over
/// unobserved member pairs) and `eval_pool` eval negatives per user with a
/// held-out positive.
pub fn sample_negatives(
    net: &CompositeNetwork,
    split: &TrainTestSplit,
    eval_pool: usize,
    seed: u64,
) -> Result<TrainTestSplit> {
    if split.layers.len() != net.num_layers() {
        return Err(Error::DimensionMismatch { expected: net.num_layers(), actual: split.layers.len() });
    }
    let root = SeededRng::new(seed);
    let mut out = split.clone();
    for (d, (layer, ls)) in net.layers().iter().zip(out.layers.iter_mut()).enumerate() {
        if ls.train_pos.is_empty() {
            return Err(Error::Infeasible(format!("layer '{}' has no train positives", layer.name())));
        }
        let mut rng = root.fork(d as u64);
        let members: Vec<UserIndex> = layer.members().iter().copied().collect();
        ls.train_neg = sample_train_negatives(layer, &members, ls.train_pos.len(), &mut rng)?;
        let excluded: HashSet<Dyad> = ls.train_neg.iter().copied().collect();
        ls.eval_neg.clear();
        for user in ls.eval_users() {
            let negs = sample_user_negatives(layer, &members, user, eval_pool, &excluded, &mut rng)?;
            ls.eval_neg.insert(user, negs);
        }
    }
    Ok(out)
}

fn sample_train_negatives(
    layer: &LayerGraph,
    members: &[UserIndex],
    count: usize,
    rng: &mut SeededRng,
) -> Result<Vec<Dyad>> {
    let mm = members.len();
    let pairs = mm * mm.saturating_sub(1) / 2;
    let available = pairs - layer.num_dyads();
    if available < count {
        return Err(Error::Infeasible(format!(
            "layer '{}' has {available} unobserved pairs, {count} train negatives requested",
            layer.name()
        )));
    }
    if count * 2 <= available {
        let mut chosen = HashSet::with_capacity(count);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let a = members[rng.gen_range(0..mm)];
            let b = members[rng.gen_range(0..mm)];
            if let Some(d) = Dyad::new(a, b) {
                if !layer.contains(&d) && chosen.insert(d) {
                    out.push(d);
                }
            }
        }
        Ok(out)
    } else {
        let mut pool = Vec::with_capacity(available);
        for (i, &a) in members.iter().enumerate() {
            for &b in &members[i + 1..] {
                let d = Dyad::new(a, b).expect("members are distinct");
                if !layer.contains(&d) {
                    pool.push(d);
                }
            }
        }
        let (picked, _) = pool.partial_shuffle(rng, count);
        Ok(picked.to_vec())
    }
}

fn sample_user_negatives(
    layer: &LayerGraph,
    members: &[UserIndex],
    user: UserIndex,
    count: usize,
    excluded: &HashSet<Dyad>,
    rng: &mut SeededRng,
) -> Result<Vec<Dyad>> {
    let usable = |v: UserIndex| {
        Dyad::new(user, v).filter(|d| !layer.contains(d) && !excluded.contains(d))
    };
    let candidates: Vec<Dyad> = members.iter().filter_map(|&v| usable(v)).collect();
    if candidates.len() < count {
        return Err(Error::Infeasible(format!(
            "layer '{}': user {user} has {} negative candidates, eval pool needs {count}",
            layer.name(),
            candidates.len()
        )));
    }
    let mut candidates = candidates;
    let (picked, _) = candidates.partial_shuffle(rng, count);
    Ok(picked.to_vec())
}
