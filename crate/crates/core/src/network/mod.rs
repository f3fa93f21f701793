//! Composite network data model.
//!
//! A [`CompositeNetwork`] is a shared user roster plus one [`LayerGraph`] per
//! individual network. Dyads are unordered, binary and never self-loops.

mod io;
mod split;
mod stats;

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::error::{Error, Result};

pub use io::{load_edge_list, load_manifest, read_edge_list, write_edge_list, LayerSource, LoadStats, Manifest};
pub use split::{holdout_split, sample_negatives, LayerSplit, SplitMode, TrainTestSplit, DEFAULT_EVAL_POOL};
pub use stats::{degree_histogram, filter_popular_users, histogram_csv, popularity_threshold};

pub type UserIndex = usize;

/// Unordered user pair, stored with the smaller index first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Dyad {
    lo: u32,
    hi: u32,
}

impl Dyad {
    /// `None` for a self-loop.
    pub fn new(a: UserIndex, b: UserIndex) -> Option<Self> {
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Some(Self { lo: a as u32, hi: b as u32 }),
            std::cmp::Ordering::Greater => Some(Self { lo: b as u32, hi: a as u32 }),
            std::cmp::Ordering::Equal => None,
        }
    }

    #[inline]
    pub fn lo(&self) -> UserIndex {
        self.lo as usize
    }

    #[inline]
    pub fn hi(&self) -> UserIndex {
        self.hi as usize
    }

    pub fn contains(&self, u: UserIndex) -> bool {
        self.lo() == u || self.hi() == u
    }

    /// The endpoint that is not `u`.
    pub fn other(&self, u: UserIndex) -> UserIndex {
        if self.lo() == u {
            self.hi()
        } else {
            self.lo()
        }
    }
}

/// A user as seen from outside: dense index plus the external label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserId {
    pub index: UserIndex,
    pub label: String,
}

/// Bijection between external labels and dense indices `0..n`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Roster {
    labels: Vec<String>,
    index: HashMap<String, UserIndex>,
}

impl Roster {
    pub fn new() -> Self {
        Self::default()
    }

    /// Roster with labels `"0".."n-1"`; used by generators.
    pub fn numbered(n: usize) -> Self {
        let mut roster = Self::new();
        for i in 0..n {
            roster.intern(&i.to_string());
        }
        roster
    }

    pub fn intern(&mut self, label: &str) -> UserIndex {
        if let Some(&i) = self.index.get(label) {
            return i;
        }
        let i = self.labels.len();
        self.labels.push(label.to_owned());
        self.index.insert(label.to_owned(), i);
        i
    }

    pub fn get(&self, label: &str) -> Option<UserIndex> {
        self.index.get(label).copied()
    }

    pub fn label(&self, i: UserIndex) -> &str {
        &self.labels[i]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn users(&self) -> impl Iterator<Item = UserId> + '_ {
        self.labels
            .iter()
            .enumerate()
            .map(|(index, label)| UserId { index, label: label.clone() })
    }
}

/// One individual network: its dyads (insertion ordered), optional
/// per-dyad timestamps and its member set.
#[derive(Debug, Clone)]
pub struct LayerGraph {
    name: String,
    dyads: Vec<Dyad>,
    lookup: HashMap<Dyad, usize>,
    timestamps: Option<Vec<i64>>,
    members: BTreeSet<UserIndex>,
}

impl LayerGraph {
    pub fn new(name: impl Into<String>, timestamped: bool) -> Self {
        Self {
            name: name.into(),
            dyads: Vec::new(),
            lookup: HashMap::new(),
            timestamps: timestamped.then(Vec::new),
            members: BTreeSet::new(),
        }
    }

    /// Builds an untimed layer from index pairs, skipping self-loops.
    pub fn from_pairs(name: impl Into<String>, pairs: impl IntoIterator<Item = (UserIndex, UserIndex)>) -> Self {
        let mut layer = Self::new(name, false);
        for (a, b) in pairs {
            if let Some(d) = Dyad::new(a, b) {
                layer.insert(d, None);
            }
        }
        layer
    }

    /// Adds a dyad, registering both endpoints as members. A repeated dyad
    /// keeps its first position and the earliest timestamp. Returns whether
    /// the dyad was new.
    pub fn insert(&mut self, dyad: Dyad, timestamp: Option<i64>) -> bool {
        self.members.insert(dyad.lo());
        self.members.insert(dyad.hi());
        if let Some(&pos) = self.lookup.get(&dyad) {
            if let (Some(ts), Some(t)) = (self.timestamps.as_mut(), timestamp) {
                ts[pos] = ts[pos].min(t);
            }
            return false;
        }
        self.lookup.insert(dyad, self.dyads.len());
        self.dyads.push(dyad);
        if let Some(ts) = self.timestamps.as_mut() {
            match timestamp {
                Some(t) => ts.push(t),
                // One untimed dyad makes the whole layer untimed.
                None => self.timestamps = None,
            }
        }
        true
    }

    pub fn add_member(&mut self, user: UserIndex) {
        self.members.insert(user);
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    pub fn dyads(&self) -> &[Dyad] {
        &self.dyads
    }

    pub fn num_dyads(&self) -> usize {
        self.dyads.len()
    }

    pub fn contains(&self, dyad: &Dyad) -> bool {
        self.lookup.contains_key(dyad)
    }

    pub fn timestamps(&self) -> Option<&[i64]> {
        self.timestamps.as_deref()
    }

    pub fn timestamp_of(&self, dyad: &Dyad) -> Option<i64> {
        let pos = *self.lookup.get(dyad)?;
        self.timestamps.as_ref().map(|ts| ts[pos])
    }

    pub fn members(&self) -> &BTreeSet<UserIndex> {
        &self.members
    }

    /// Degree of every user index below `n`.
    pub fn degrees(&self, n: usize) -> Vec<usize> {
        let mut deg = vec![0usize; n];
        for d in &self.dyads {
            deg[d.lo()] += 1;
            deg[d.hi()] += 1;
        }
        deg
    }

    pub fn dyad_set(&self) -> HashSet<Dyad> {
        self.dyads.iter().copied().collect()
    }
}

/// Global roster plus layers whose member sets pairwise intersect.
#[derive(Debug, Clone)]
pub struct CompositeNetwork {
    roster: Roster,
    layers: Vec<LayerGraph>,
}

impl CompositeNetwork {
    /// Validates membership and the pairwise-overlap property.
    pub fn assemble(roster: Roster, layers: Vec<LayerGraph>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("a composite network needs at least one layer".into()));
        }
        let net = Self::from_parts_unchecked(roster, layers);
        net.validate()?;
        Ok(net)
    }

    /// Skips validation. Used for derived networks (filtering) whose
    /// caller decides whether an overlap violation matters.
    pub fn from_parts_unchecked(roster: Roster, layers: Vec<LayerGraph>) -> Self {
        Self { roster, layers }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.roster.len();
        for layer in &self.layers {
            if let Some(&bad) = layer.members().iter().find(|&&u| u >= n) {
                return Err(Error::InvalidArgument(format!(
                    "layer '{}' references user index {bad} outside a roster of {n}",
                    layer.name()
                )));
            }
        }
        for (a, la) in self.layers.iter().enumerate() {
            for lb in &self.layers[a + 1..] {
                if la.members().is_disjoint(lb.members()) {
                    return Err(Error::OverlapViolation {
                        first: la.name().to_owned(),
                        second: lb.name().to_owned(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn decompose(self) -> (Roster, Vec<LayerGraph>) {
        (self.roster, self.layers)
    }

    pub fn roster(&self) -> &Roster {
        &self.roster
    }

    pub fn layers(&self) -> &[LayerGraph] {
        &self.layers
    }

    pub fn layer(&self, d: usize) -> &LayerGraph {
        &self.layers[d]
    }

    pub fn num_users(&self) -> usize {
        self.roster.len()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// `|U_a ∩ U_b|` for every layer pair `a < b`.
    pub fn overlap_sizes(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.layers.len() {
            for b in a + 1..self.layers.len() {
                let size = self.layers[a].members().intersection(self.layers[b].members()).count();
                out.push((a, b, size));
            }
        }
        out
    }

    /// Single-layer composite over the union of all dyad sets.
    pub fn merged(&self) -> CompositeNetwork {
        let timed = self.layers.iter().all(|l| l.timestamps().is_some());
        let mut merged = LayerGraph::new("merged", timed);
        for layer in &self.layers {
            for (pos, d) in layer.dyads().iter().enumerate() {
                merged.insert(*d, layer.timestamps().map(|ts| ts[pos]));
            }
            for &u in layer.members() {
                merged.add_member(u);
            }
        }
        CompositeNetwork::from_parts_unchecked(self.roster.clone(), vec![merged])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(roster: &mut Roster, name: &str, pairs: &[(&str, &str)]) -> LayerGraph {
        let mut l = LayerGraph::new(name, false);
        for (a, b) in pairs {
            let (a, b) = (roster.intern(a), roster.intern(b));
            l.insert(Dyad::new(a, b).unwrap(), None);
        }
        l
    }

    #[test]
    fn dyads_are_unordered() {
        assert_eq!(Dyad::new(3, 1), Dyad::new(1, 3));
        assert!(Dyad::new(2, 2).is_none());
        let d = Dyad::new(5, 2).unwrap();
        assert_eq!((d.lo(), d.hi()), (2, 5));
        assert_eq!(d.other(5), 2);
    }

    #[test]
    fn assemble_overlapping_layers() {
        let mut roster = Roster::new();
        let l1 = layer(&mut roster, "one", &[("a", "b")]);
        let l2 = layer(&mut roster, "two", &[("b", "c")]);
        let net = CompositeNetwork::assemble(roster, vec![l1, l2]).unwrap();
        assert_eq!(net.num_users(), 3);
        assert_eq!(net.overlap_sizes(), vec![(0, 1, 1)]);
    }

    #[test]
    fn assemble_rejects_disjoint_layers() {
        let mut roster = Roster::new();
        let l1 = layer(&mut roster, "one", &[("a", "b")]);
        let l2 = layer(&mut roster, "two", &[("c", "d")]);
        match CompositeNetwork::assemble(roster, vec![l1, l2]) {
            Err(Error::OverlapViolation { first, second }) => {
                assert_eq!((first.as_str(), second.as_str()), ("one", "two"));
            }
            other => panic!("expected overlap violation, got {other:?}"),
        }
    }

    #[test]
    fn single_layer_is_valid() {
        let mut roster = Roster::new();
        let l1 = layer(&mut roster, "one", &[("a", "b")]);
        let net = CompositeNetwork::assemble(roster, vec![l1]).unwrap();
        assert_eq!(net.num_layers(), 1);
        assert!(CompositeNetwork::assemble(Roster::new(), vec![]).is_err());
    }

    #[test]
    fn decompose_then_assemble_is_identity() {
        let mut roster = Roster::new();
        let l1 = layer(&mut roster, "one", &[("a", "b"), ("b", "c")]);
        let l2 = layer(&mut roster, "two", &[("b", "c"), ("c", "d")]);
        let net = CompositeNetwork::assemble(roster, vec![l1, l2]).unwrap();
        let before: Vec<HashSet<Dyad>> = net.layers().iter().map(|l| l.dyad_set()).collect();
        let (roster, layers) = net.decompose();
        let again = CompositeNetwork::assemble(roster, layers).unwrap();
        let after: Vec<HashSet<Dyad>> = again.layers().iter().map(|l| l.dyad_set()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn merged_takes_union() {
        let l1 = LayerGraph::from_pairs("a", [(1, 2)]);
        let l2 = LayerGraph::from_pairs("b", [(2, 3), (2, 1)]);
        let net = CompositeNetwork::assemble(Roster::numbered(4), vec![l1, l2]).unwrap();
        let merged = net.merged();
        assert_eq!(merged.num_layers(), 1);
        assert_eq!(merged.layer(0).dyads(), &[Dyad::new(1, 2).unwrap(), Dyad::new(2, 3).unwrap()]);
    }

    #[test]
    fn duplicate_keeps_earliest_timestamp() {
        let mut l = LayerGraph::new("t", true);
        let d = Dyad::new(0, 1).unwrap();
        assert!(l.insert(d, Some(9)));
        assert!(!l.insert(d, Some(4)));
        assert_eq!(l.timestamp_of(&d), Some(4));
        assert_eq!(l.num_dyads(), 1);
    }
}
