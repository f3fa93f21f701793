use std::collections::BTreeMap;

use super::{CompositeNetwork, Dyad, LayerGraph, Roster, UserIndex};

/// Degree summed over layers, with the `mean + population sd` cut-off.
pub fn popularity_threshold(net: &CompositeNetwork) -> (Vec<usize>, f64) {
    let n = net.num_users();
    let mut total = vec![0usize; n];
    for layer in net.layers() {
        for (t, d) in total.iter_mut().zip(layer.degrees(n)) {
            *t += d;
        }
    }
    if n == 0 {
        return (total, 0.0);
    }
    let mean = total.iter().sum::<usize>() as f64 / n as f64;
    let var = total.iter().map(|&d| (d as f64 - mean).powi(2)).sum::<f64>() / n as f64;
    (total, mean + var.sqrt())
}

/// Drops users whose total degree strictly exceeds `mean + sd`, with their
/// dyads, and re-indexes the roster. Overlap is not re-validated.
pub fn filter_popular_users(net: &CompositeNetwork) -> CompositeNetwork {
    let (degrees, threshold) = popularity_threshold(net);
    let keep: Vec<bool> = degrees.iter().map(|&d| (d as f64) <= threshold).collect();
    let mut remap: Vec<Option<UserIndex>> = vec![None; net.num_users()];
    let mut roster = Roster::new();
    for (old, label) in net.roster().users().map(|u| (u.index, u.label)) {
        if keep[old] {
            remap[old] = Some(roster.intern(&label));
        }
    }
    let layers = net
        .layers()
        .iter()
        .map(|layer| {
            let mut out = LayerGraph::new(layer.name(), layer.timestamps().is_some());
            for &u in layer.members() {
                if let Some(nu) = remap[u] {
                    out.add_member(nu);
                }
            }
            for (pos, d) in layer.dyads().iter().enumerate() {
                if let (Some(a), Some(b)) = (remap[d.lo()], remap[d.hi()]) {
                    let ts = layer.timestamps().map(|ts| ts[pos]);
                    out.insert(Dyad::new(a, b).expect("remap keeps distinct users distinct"), ts);
                }
            }
            out
        })
        .collect();
    CompositeNetwork::from_parts_unchecked(roster, layers)
}

/// Degree → number of members with that degree.
pub fn degree_histogram(layer: &LayerGraph) -> BTreeMap<usize, usize> {
    let mut deg: BTreeMap<UserIndex, usize> = layer.members().iter().map(|&u| (u, 0)).collect();
    for d in layer.dyads() {
        *deg.entry(d.lo()).or_default() += 1;
        *deg.entry(d.hi()).or_default() += 1;
    }
    let mut hist = BTreeMap::new();
    for (_, k) in deg {
        *hist.entry(k).or_default() += 1;
    }
    hist
}

pub fn histogram_csv(hist: &BTreeMap<usize, usize>) -> String {
    let mut out = String::from("degree,users\n");
    for (k, v) in hist {
        out.push_str(&format!("{k},{v}\n"));
    }
    out
}
