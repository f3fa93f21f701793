//! Ranking metrics, partition agreement and the end-to-end experiment
//! runner.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::Checkpoint;
use crate::comfp::{self, ComfpConfig};
use crate::error::{Error, Result};
use crate::mmsb::{self, MmsbConfig};
use crate::network::{
    degree_histogram, filter_popular_users, histogram_csv, holdout_split, load_manifest, sample_negatives,
    CompositeNetwork, Dyad, LayerSplit, SplitMode, TrainTestSplit, UserIndex, DEFAULT_EVAL_POOL,
};
use crate::numerics::derive_seed;
use crate::synth::plant_sparse_dense_pair;

/// Train degree below which a user counts as long-tail.
pub const LONG_TAIL_CAP: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub dyad: Dyad,
    pub score: f64,
    pub positive: bool,
}

/// One user's scored candidate list in one layer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RankedCandidates {
    pub items: Vec<Candidate>,
}

impl RankedCandidates {
    pub fn new(items: Vec<Candidate>) -> Result<Self> {
        if let Some(c) = items.iter().find(|c| !c.score.is_finite()) {
            return Err(Error::NonFinite(format!("score {} for dyad ({}, {})", c.score, c.dyad.lo(), c.dyad.hi())));
        }
        Ok(Self { items })
    }

    pub fn num_positives(&self) -> usize {
        self.items.iter().filter(|c| c.positive).count()
    }
}

/// Descending score, ties broken by ascending dyad.
fn rank_order(items: &mut [Candidate]) {
    items.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.dyad.cmp(&b.dyad)));
}

/// Mean over positives of precision at the positive's rank, or `None`
/// when the list has no positive.
pub fn average_precision(ranked: &RankedCandidates) -> Option<f64> {
    let mut items = ranked.items.clone();
    rank_order(&mut items);
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (pos, c) in items.iter().enumerate() {
        if c.positive {
            hits += 1;
            sum += hits as f64 / (pos + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

/// Anything that scores a dyad in a layer.
pub trait Scorer {
    fn score(&self, i: UserIndex, j: UserIndex, d: usize) -> f64;
}

impl Scorer for Checkpoint {
    fn score(&self, i: UserIndex, j: UserIndex, d: usize) -> f64 {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        mmsb::score_dyad(self.estimate(d), lo, hi)
    }
}

impl<F: Fn(UserIndex, UserIndex, usize) -> f64> Scorer for F {
    fn score(&self, i: UserIndex, j: UserIndex, d: usize) -> f64 {
        self(i, j, d)
    }
}

/// Held-out positives and eval negatives of `user`, scored.
pub fn user_candidates(ls: &LayerSplit, d: usize, user: UserIndex, scorer: &dyn Scorer) -> Result<RankedCandidates> {
    let mut items: Vec<Candidate> = ls
        .heldout_of(user)
        .map(|&dyad| Candidate { dyad, score: scorer.score(dyad.lo(), dyad.hi(), d), positive: true })
        .collect();
    if let Some(neg) = ls.eval_neg.get(&user) {
        items.extend(neg.iter().map(|&dyad| Candidate { dyad, score: scorer.score(dyad.lo(), dyad.hi(), d), positive: false }));
    }
    RankedCandidates::new(items)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerMetrics {
    pub layer: String,
    pub map: Option<f64>,
    pub long_tail_map: Option<f64>,
    pub users_evaluated: usize,
    pub long_tail_users: usize,
    pub per_user_ap: Vec<(UserIndex, f64)>,
}

/// Per-user AP in one layer, over users with a held-out positive, in
/// ascending user order.
pub fn layer_average_precisions(ls: &LayerSplit, d: usize, scorer: &dyn Scorer) -> Result<Vec<(UserIndex, f64)>> {
    let mut out = Vec::new();
    for user in ls.eval_users() {
        let ranked = user_candidates(ls, d, user, scorer)?;
        if let Some(ap) = average_precision(&ranked) {
            out.push((user, ap));
        }
    }
    Ok(out)
}

fn mean_of(aps: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = aps.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// MAP per layer; `None` for layers without held-out positives.
pub fn map_score(scorer: &dyn Scorer, split: &TrainTestSplit) -> Result<Vec<Option<f64>>> {
    split
        .layers
        .iter()
        .enumerate()
        .map(|(d, ls)| {
            let aps = layer_average_precisions(ls, d, scorer)?;
            if aps.is_empty() {
                log::info!("layer {d}: no held-out positives, omitted from MAP");
            }
            Ok(mean_of(aps.into_iter().map(|(_, ap)| ap)))
        })
        .collect()
}

/// MAP restricted to users whose train degree in the layer is below
/// `degree_cap`.
pub fn long_tail_map(scorer: &dyn Scorer, split: &TrainTestSplit, degree_cap: usize) -> Result<Vec<Option<f64>>> {
    split
        .layers
        .iter()
        .enumerate()
        .map(|(d, ls)| {
            let aps = layer_average_precisions(ls, d, scorer)?;
            let degrees = train_degree_map(ls);
            let value = mean_of(aps.into_iter().filter(|(u, _)| degrees.get(u).copied().unwrap_or(0) < degree_cap).map(|(_, ap)| ap));
            if value.is_none() {
                log::info!("layer {d}: no users below train degree {degree_cap}, omitted from long-tail MAP");
            }
            Ok(value)
        })
        .collect()
}

fn train_degree_map(ls: &LayerSplit) -> BTreeMap<UserIndex, usize> {
    let mut deg = BTreeMap::new();
    for d in &ls.train_pos {
        *deg.entry(d.lo()).or_insert(0) += 1;
        *deg.entry(d.hi()).or_insert(0) += 1;
    }
    deg
}

/// MAP, long-tail MAP and per-user AP for every layer.
pub fn evaluate(scorer: &dyn Scorer, split: &TrainTestSplit, layer_names: &[String], degree_cap: usize) -> Result<Vec<LayerMetrics>> {
    let mut out = Vec::with_capacity(split.layers.len());
    for (d, ls) in split.layers.iter().enumerate() {
        let aps = layer_average_precisions(ls, d, scorer)?;
        let degrees = train_degree_map(ls);
        let tail: Vec<f64> =
            aps.iter().filter(|(u, _)| degrees.get(u).copied().unwrap_or(0) < degree_cap).map(|&(_, ap)| ap).collect();
        out.push(LayerMetrics {
            layer: layer_names.get(d).cloned().unwrap_or_else(|| format!("layer{d}")),
            map: mean_of(aps.iter().map(|&(_, ap)| ap)),
            long_tail_map: mean_of(tail.iter().copied()),
            users_evaluated: aps.len(),
            long_tail_users: tail.len(),
            per_user_ap: aps,
        });
    }
    Ok(out)
}

/// Normalised mutual information with arithmetic-mean normalisation,
/// `2·I(a;b) / (H(a) + H(b))`. Two constant labelings agree perfectly
/// (1.0); a constant labeling against a non-constant one scores 0.0.
pub fn partition_agreement(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), actual: b.len() });
    }
    let n = a.len() as f64;
    if a.is_empty() {
        return Ok(1.0);
    }
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut ca: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cb: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_insert(0) += 1;
        *ca.entry(x).or_insert(0) += 1;
        *cb.entry(y).or_insert(0) += 1;
    }
    let entropy = |c: &BTreeMap<usize, usize>| -> f64 {
        c.values().map(|&v| {
            let p = v as f64 / n;
            -p * p.ln()
        }).sum()
    };
    let (ha, hb) = (entropy(&ca), entropy(&cb));
    if ha + hb == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for (&(x, y), &v) in &joint {
        let pxy = v as f64 / n;
        let px = ca[&x] as f64 / n;
        let py = cb[&y] as f64 / n;
        mi += pxy * (pxy / (px * py)).ln();
    }
    Ok((2.0 * mi / (ha + hb)).clamp(0.0, 1.0))
}

/// SHA-256 over every layer's evaluated candidate lists, so reports of
/// different models can be checked to rank the same sets.
pub fn candidate_set_hash(split: &TrainTestSplit) -> String {
    let mut h = Sha256::new();
    for (d, ls) in split.layers.iter().enumerate() {
        h.update(format!("layer {d}\n").as_bytes());
        for user in ls.eval_users() {
            let mut dyads: Vec<Dyad> = ls.heldout_of(user).copied().collect();
            dyads.extend(ls.eval_neg.get(&user).into_iter().flatten().copied());
            dyads.sort_unstable();
            h.update(format!("user {user}:").as_bytes());
            for dy in dyads {
                h.update(format!(" {}-{}", dy.lo(), dy.hi()).as_bytes());
            }
            h.update(b"\n");
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "mmsb")]
    Mmsb,
    #[serde(rename = "mmsb-c")]
    MmsbC,
    #[serde(rename = "comfp")]
    Comfp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Mmsb, ModelKind::MmsbC, ModelKind::Comfp];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mmsb => "mmsb",
            ModelKind::MmsbC => "mmsb-c",
            ModelKind::Comfp => "comfp",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model '{s}' (expected mmsb, mmsb-c or comfp)")))
    }
}

/// Model hyper-parameters shared by the CLI and the experiment runner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub k: usize,
    pub t: usize,
    pub iterations: usize,
    pub sigma_u: f64,
    pub sigma_d: f64,
    pub sigma_mh: f64,
    pub hyper_period: usize,
    pub seed: u64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { k: 25, t: 25, iterations: 500, sigma_u: 1.0, sigma_d: 1.0, sigma_mh: 0.05, hyper_period: 10, seed: 0 }
    }
}

impl ModelParams {
    pub fn mmsb_config(&self) -> MmsbConfig {
        MmsbConfig { iterations: self.iterations, seed: derive_seed(self.seed, 1), ..MmsbConfig::new(self.k) }
    }

    pub fn comfp_config(&self, layers: usize) -> ComfpConfig {
        ComfpConfig {
            iterations: self.iterations,
            sigma_u: self.sigma_u,
            sigma_d: self.sigma_d,
            sigma_mh: self.sigma_mh,
            hyper_period: self.hyper_period,
            seed: derive_seed(self.seed, 2),
            ..ComfpConfig::new(layers, self.k, self.t)
        }
    }
}

/// Trains one model on the train part of `split`.
pub fn train_model(
    kind: ModelKind,
    n: usize,
    split: &TrainTestSplit,
    params: &ModelParams,
    layer_names: &[String],
    config_echo: &str,
) -> Result<(Checkpoint, Option<comfp::FitResult>)> {
    let plain = |estimates| Checkpoint {
        model: kind.name().into(),
        config: config_echo.into(),
        layer_names: layer_names.to_vec(),
        estimates,
        features: None,
    };
    match kind {
        ModelKind::Mmsb => Ok((plain(mmsb::fit_per_layer(n, split, &params.mmsb_config())?), None)),
        ModelKind::MmsbC => Ok((plain(vec![mmsb::fit_merged(n, split, &params.mmsb_config())?]), None)),
        ModelKind::Comfp => {
            let fit = comfp::fit(n, split, &params.comfp_config(split.layers.len()))?;
            Ok((Checkpoint::from_comfp(config_echo.into(), layer_names.to_vec(), &fit), Some(fit)))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model: ModelKind,
    pub layers: Vec<LayerMetrics>,
    /// Training wall time, present only when timing is requested.
    pub seconds: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_owned(), |x| format!("{x:.6}"))
}

/// `model,layer,map,long_tail_map,n_users_evaluated,seconds`, preceded by
/// comment lines echoing the config and the candidate-set hash.
pub fn write_report_csv<W: Write>(out: &mut W, config: &str, candidates: &str, reports: &[EvalReport]) -> std::io::Result<()> {
    writeln!(out, "# config {config}")?;
    writeln!(out, "# candidates sha256:{candidates}")?;
    writeln!(out, "model,layer,map,long_tail_map,n_users_evaluated,seconds")?;
    for r in reports {
        for l in &r.layers {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.model,
                l.layer,
                fmt_opt(l.map),
                fmt_opt(l.long_tail_map),
                l.users_evaluated,
                r.seconds.map_or_else(|| "NA".to_owned(), |s| format!("{s:.3}"))
            )?;
        }
    }
    Ok(())
}

pub fn write_summary<W: Write>(out: &mut W, config: &str, candidates: &str, reports: &[EvalReport]) -> std::io::Result<()> {
    writeln!(out, "config: {config}")?;
    writeln!(out, "candidate set sha256: {candidates}")?;
    for r in reports {
        writeln!(out, "model {}", r.model)?;
        for l in &r.layers {
            writeln!(
                out,
                "  layer {}: MAP {} over {} users; long-tail MAP {} over {} users",
                l.layer,
                fmt_opt(l.map),
                l.users_evaluated,
                fmt_opt(l.long_tail_map),
                l.long_tail_users
            )?;
        }
    }
    Ok(())
}

/// Where an experiment's composite network comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Manifest { path: PathBuf },
    Synth { n: usize, k: usize, t: usize, density_ratio: f64, overlap: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub models: Vec<ModelKind>,
    pub params: ModelParams,
    pub holdout_fraction: f64,
    pub split_mode: String,
    pub filter_popular: bool,
    pub eval_pool: usize,
    pub degree_cap: usize,
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synth { n: 200, k: 4, t: 4, density_ratio: 5.0, overlap: 1.0, seed: 0 },
            models: ModelKind::ALL.to_vec(),
            params: ModelParams::default(),
            holdout_fraction: 0.1,
            split_mode: "temporal".into(),
            filter_popular: false,
            eval_pool: DEFAULT_EVAL_POOL,
            degree_cap: LONG_TAIL_CAP,
            timing: false,
        }
    }
}

/// Held-out split plus negatives for a loaded network, optionally after
/// removing popular users.
pub fn prepare_split(
    net: CompositeNetwork,
    filter_popular: bool,
    fraction: f64,
    mode: SplitMode,
    eval_pool: usize,
    seed: u64,
) -> Result<(CompositeNetwork, TrainTestSplit)> {
    let net = if filter_popular {
        let filtered = filter_popular_users(&net);
        filtered.validate()?;
        filtered
    } else {
        net
    };
    let split = holdout_split(&net, fraction, mode, derive_seed(seed, 10))?;
    let split = sample_negatives(&net, &split, eval_pool, derive_seed(seed, 11))?;
    Ok((net, split))
}

pub fn load_source(source: &DataSource) -> Result<CompositeNetwork> {
    match source {
        DataSource::Manifest { path } => Ok(load_manifest(path)?.0),
        DataSource::Synth { n, k, t, density_ratio, overlap, seed } => {
            Ok(plant_sparse_dense_pair(*n, *k, *t, *density_ratio, *overlap, *seed)?.0)
        }
    }
}

fn write_file(path: &Path, body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    body(&mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Outputs of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub reports: Vec<EvalReport>,
    pub candidate_hash: String,
}

/// load/generate → filter → split → negatives → train each model → score
/// → metrics, writing `report.csv`, `summary.txt` and one degree histogram
/// per layer into `out_dir`. A failing model leaves a marker line in the
/// report written so far.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutcome> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let echo = serde_json::to_string(cfg).map_err(|e| Error::Format(e.to_string()))?;
    let mode: SplitMode = cfg.split_mode.parse()?;
    let net = load_source(&cfg.source)?;
    let (net, split) = prepare_split(net, cfg.filter_popular, cfg.holdout_fraction, mode, cfg.eval_pool, cfg.params.seed)?;
    let names: Vec<String> = net.layers().iter().map(|l| l.name().to_owned()).collect();
    for layer in net.layers() {
        let path = out_dir.join(format!("degree_histogram_{}.csv", layer.name()));
        write_file(&path, |b| {
            writeln!(b, "# config {echo}")?;
            b.write_all(histogram_csv(&degree_histogram(layer)).as_bytes())
        })?;
    }
    let hash = candidate_set_hash(&split);
    let report_path = out_dir.join("report.csv");
    let mut reports = Vec::new();
    for &model in &cfg.models {
        let started = Instant::now();
        let trained = train_model(model, net.num_users(), &split, &cfg.params, &names, &echo);
        let (ck, _) = match trained {
            Ok(t) => t,
            Err(e) => {
                write_file(&report_path, |b| {
                    write_report_csv(b, &echo, &hash, &reports)?;
                    writeln!(b, "# FAILED {model}: {e}")
                })?;
                return Err(e);
            }
        };
        let seconds = started.elapsed().as_secs_f64();
        let layers = evaluate(&ck, &split, &names, cfg.degree_cap)?;
        reports.push(EvalReport { model, layers, seconds: cfg.timing.then_some(seconds) });
    }
    write_file(&report_path, |b| write_report_csv(b, &echo, &hash, &reports))?;
    write_file(&out_dir.join("summary.txt"), |b| write_summary(b, &echo, &hash, &reports))?;
    Ok(ExperimentOutcome { reports, candidate_hash: hash })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn cand(a: usize, b: usize, score: f64, positive: bool) -> Candidate {
        Candidate { dyad: Dyad::new(a, b).unwrap(), score, positive }
    }

    #[test]
    fn hand_computed_average_precision() {
        let one_of_five = RankedCandidates::new(vec![
            cand(0, 1, 0.9, true),
            cand(0, 2, 0.5, false),
            cand(0, 3, 0.4, false),
            cand(0, 4, 0.3, false),
            cand(0, 5, 0.1, false),
        ])
        .unwrap();
        assert_eq!(average_precision(&one_of_five), Some(1.0));
        let last = RankedCandidates::new(vec![cand(0, 1, 0.1, true), cand(0, 2, 0.2, false)]).unwrap();
        assert_eq!(average_precision(&last), Some(0.5));
        let two = RankedCandidates::new(vec![
            cand(0, 4, 0.2, false),
            cand(0, 3, 0.5, true),
            cand(0, 1, 0.9, true),
            cand(0, 2, 0.7, false),
        ])
        .unwrap();
        assert_eq!(average_precision(&two), Some((1.0 + 2.0 / 3.0) / 2.0));
        assert_eq!(average_precision(&RankedCandidates::new(vec![cand(0, 1, 0.3, false)]).unwrap()), None);
        assert!(RankedCandidates::new(vec![cand(0, 1, f64::NAN, true)]).is_err());
    }

    #[test]
    fn ties_follow_dyad_order() {
        let r = RankedCandidates::new(vec![cand(0, 2, 0.5, true), cand(0, 1, 0.5, false)]).unwrap();
        assert_eq!(average_precision(&r), Some(0.5));
        let r = RankedCandidates::new(vec![cand(0, 2, 0.5, false), cand(0, 1, 0.5, true)]).unwrap();
        assert_eq!(average_precision(&r), Some(1.0));
    }

    #[test]
    fn ap_depends_only_on_ranks() {
        let base = vec![cand(0, 1, 0.3, true), cand(0, 2, 0.8, false), cand(0, 3, 0.5, true), cand(0, 4, 0.1, false)];
        let ap = average_precision(&RankedCandidates::new(base.clone()).unwrap());
        let moved = base.iter().map(|c| Candidate { score: (5.0 * c.score).exp() - 3.0, ..*c }).collect();
        assert_eq!(ap, average_precision(&RankedCandidates::new(moved).unwrap()));
    }

    fn fixture() -> TrainTestSplit {
        let d = |a, b| Dyad::new(a, b).unwrap();
        let mut ls = LayerSplit {
            train_pos: vec![d(0, 1), d(0, 3)],
            heldout_pos: vec![d(0, 2), d(1, 4)],
            train_neg: vec![],
            eval_neg: BTreeMap::new(),
        };
        ls.eval_neg.insert(0, vec![d(0, 4), d(0, 5)]);
        ls.eval_neg.insert(1, vec![d(1, 2)]);
        ls.eval_neg.insert(2, vec![d(2, 3)]);
        ls.eval_neg.insert(4, vec![d(3, 4)]);
        for u in 6..17 {
            ls.train_pos.push(d(1, u));
        }
        TrainTestSplit { layers: vec![ls, LayerSplit::default()] }
    }

    #[test]
    fn perfect_scores_give_unit_map() {
        let split = fixture();
        let held: HashSet<Dyad> = split.layers[0].heldout_pos.iter().copied().collect();
        let oracle = |i: usize, j: usize, _d: usize| if held.contains(&Dyad::new(i, j).unwrap()) { 1.0 } else { 0.0 };
        let map = map_score(&oracle, &split).unwrap();
        assert_eq!(map, vec![Some(1.0), None]);
    }

    #[test]
    fn long_tail_filter() {
        let split = fixture();
        // User 0 has degree 2, user 1 degree 12, users 2 and 4 degree 0.
        let score = |i: usize, j: usize, _d: usize| (i * 7 + j) as f64;
        let all = map_score(&score, &split).unwrap()[0].unwrap();
        let aps = layer_average_precisions(&split.layers[0], 0, &score).unwrap();
        let uncapped = long_tail_map(&score, &split, usize::MAX).unwrap()[0].unwrap();
        assert_eq!(all, uncapped);
        assert_eq!(long_tail_map(&score, &split, 0).unwrap()[0], None);
        let tail = long_tail_map(&score, &split, 10).unwrap()[0].unwrap();
        let want = mean_of(aps.iter().filter(|(u, _)| *u != 1).map(|(_, a)| *a)).unwrap();
        assert_eq!(tail, want);
    }

    #[test]
    fn nmi_examples() {
        let a = [0, 0, 1, 1, 2, 2];
        assert!((partition_agreement(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((partition_agreement(&a, &[5, 5, 3, 3, 9, 9]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(partition_agreement(&a, &[1; 6]).unwrap(), 0.0);
        let b = [0, 1, 0, 1, 0, 1];
        assert!(partition_agreement(&a, &b).unwrap() < 1e-12);
        let c = [0, 0, 1, 1, 1, 2];
        let (x, y) = (partition_agreement(&a, &c).unwrap(), partition_agreement(&c, &a).unwrap());
        assert!((x - y).abs() < 1e-15 && x > 0.0 && x < 1.0);
        assert!(partition_agreement(&a, &b[..3]).is_err());
    }

    #[test]
    fn model_names_round_trip() {
        for m in ModelKind::ALL {
            assert_eq!(m.name().parse::<ModelKind>().unwrap(), m);
        }
        assert!("tf".parse::<ModelKind>().is_err());
    }

    #[test]
    fn hash_tracks_candidates() {
        let split = fixture();
        let h = candidate_set_hash(&split);
        assert_eq!(h.len(), 64);
        let mut other = split.clone();
        other.layers[0].eval_neg.get_mut(&0).unwrap().pop();
        assert_ne!(h, candidate_set_hash(&other));
    }
}
