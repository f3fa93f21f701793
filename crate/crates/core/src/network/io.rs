use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CompositeNetwork, Dyad, LayerGraph, Roster};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub lines: usize,
    pub self_loops_skipped: usize,
    pub duplicates: usize,
}

/// Parses `src<TAB>dst[<TAB>timestamp]` lines. `#` lines and blank lines are
/// ignored. `origin` only labels error messages.
pub fn read_edge_list<R: BufRead>(
    reader: R,
    origin: &Path,
    name: &str,
    has_timestamps: bool,
    roster: &mut Roster,
) -> Result<(LayerGraph, LoadStats)> {
    let mut layer = LayerGraph::new(name, has_timestamps);
    let mut stats = LoadStats::default();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        stats.lines += 1;
        let parse_err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let mut fields = line.split('\t');
        let src = fields.next().filter(|s| !s.is_empty());
        let dst = fields.next().filter(|s| !s.is_empty());
        let (src, dst) = match (src, dst) {
            (Some(s), Some(d)) => (s, d),
            _ => return Err(parse_err(format!("expected src<TAB>dst, got {line:?}"))),
        };
        let timestamp = if has_timestamps {
            let raw = fields
                .next()
                .ok_or_else(|| parse_err("missing timestamp column".into()))?;
            Some(
                raw.trim()
                    .parse::<i64>()
                    .map_err(|e| parse_err(format!("bad timestamp {raw:?}: {e}")))?,
            )
        } else {
            None
        };
        if src == dst {
            stats.self_loops_skipped += 1;
            continue;
        }
        let a = roster.intern(src);
        let b = roster.intern(dst);
        let dyad = Dyad::new(a, b).expect("distinct labels map to distinct indices");
        if !layer.insert(dyad, timestamp) {
            stats.duplicates += 1;
        }
    }
    if stats.self_loops_skipped > 0 {
        log::warn!(
            "{}: skipped {} self-loop line(s)",
            origin.display(),
            stats.self_loops_skipped
        );
    }
    Ok((layer, stats))
}

pub fn load_edge_list(
    path: &Path,
    name: &str,
    has_timestamps: bool,
    roster: &mut Roster,
) -> Result<(LayerGraph, LoadStats)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_edge_list(BufReader::new(file), path, name, has_timestamps, roster)
}

/// Writes a layer in the edge-list format, labels taken from `roster`.
pub fn write_edge_list<W: Write>(out: &mut W, layer: &LayerGraph, roster: &Roster) -> std::io::Result<()> {
    let ts = layer.timestamps();
    for (pos, d) in layer.dyads().iter().enumerate() {
        match ts {
            Some(ts) => writeln!(out, "{}\t{}\t{}", roster.label(d.lo()), roster.label(d.hi()), ts[pos])?,
            None => writeln!(out, "{}\t{}", roster.label(d.lo()), roster.label(d.hi()))?,
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSource {
    pub name: String,
    pub path: PathBuf,
    #[serde(default)]
    pub timestamps: bool,
}

/// TOML manifest: one `[[layer]]` table per individual network. Relative
/// paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(rename = "layer")]
    pub layers: Vec<LayerSource>,
}

impl Manifest {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: e.span().map(|s| text[..s.start].matches('\n').count() + 1).unwrap_or(0),
            message: e.message().to_owned(),
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serialises")
    }
}

/// Loads every layer named in the manifest into one validated composite.
pub fn load_manifest(path: &Path) -> Result<(CompositeNetwork, Vec<LoadStats>)> {
    let manifest = Manifest::read(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut roster = Roster::new();
    let mut layers = Vec::new();
    let mut stats = Vec::new();
    for src in &manifest.layers {
        let file = if src.path.is_absolute() { src.path.clone() } else { base.join(&src.path) };
        let (layer, st) = load_edge_list(&file, &src.name, src.timestamps, &mut roster)?;
        layers.push(layer);
        stats.push(st);
    }
    Ok((CompositeNetwork::assemble(roster, layers)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str, ts: bool) -> Result<(LayerGraph, LoadStats, Roster)> {
        let mut roster = Roster::new();
        let (l, s) = read_edge_list(text.as_bytes(), Path::new("mem"), "x", ts, &mut roster)?;
        Ok((l, s, roster))
    }

    #[test]
    fn undirected_duplicates_collapse() {
        let (l, s, r) = read("a\tb\nb\ta\n", false).unwrap();
        assert_eq!(l.num_dyads(), 1);
        assert_eq!(s.duplicates, 1);
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn timestamps_are_kept() {
        let (l, _, r) = read("# header\na\tb\t5\na\tc\t9\n", true).unwrap();
        assert_eq!(l.num_dyads(), 2);
        assert_eq!(l.timestamps(), Some(&[5, 9][..]));
        assert_eq!(r.get("c"), Some(2));
    }

    #[test]
    fn self_loops_are_counted_and_skipped() {
        let (l, s, r) = read("a\ta\n", false).unwrap();
        assert_eq!(l.num_dyads(), 0);
        assert_eq!(s.self_loops_skipped, 1);
        assert!(r.is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        match read("a\tb\n\nonly-one-field\n", false) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        match read("a\tb\tnot-a-number\n", true) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn manifest_round_trip_and_load() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("one.tsv"), "a\tb\t1\nb\tc\t2\n").unwrap();
        std::fs::write(dir.path().join("two.tsv"), "c\td\n").unwrap();
        let manifest = Manifest {
            layers: vec![
                LayerSource { name: "one".into(), path: "one.tsv".into(), timestamps: true },
                LayerSource { name: "two".into(), path: "two.tsv".into(), timestamps: false },
            ],
        };
        let mpath = dir.path().join("m.toml");
        std::fs::write(&mpath, manifest.to_toml()).unwrap();
        assert_eq!(Manifest::read(&mpath).unwrap(), manifest);
        let (net, stats) = load_manifest(&mpath).unwrap();
        assert_eq!(net.num_users(), 4);
        assert_eq!(stats[0].lines, 2);
        assert_eq!(net.layer(0).timestamps(), Some(&[1, 2][..]));
    }

    #[test]
    fn missing_file_is_io_error() {
        let mut roster = Roster::new();
        let err = load_edge_list(Path::new("/nonexistent/x.tsv"), "x", false, &mut roster).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
