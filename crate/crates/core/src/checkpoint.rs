//! Versioned text artifacts: fitted-model checkpoints, train/test splits and
//! the per-iteration trace.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! read-back reproduces every value bit for bit.

use std::io::Write;
use std::path::Path;

use crate::comfp::FitResult;
use crate::error::{Error, Result};
use crate::latent::PointEstimates;
use crate::matrix::Matrix;
use crate::network::{Dyad, LayerSplit, TrainTestSplit};

const CHECKPOINT_MAGIC: &str = "comfp-checkpoint 1";
const SPLIT_MAGIC: &str = "comfp-split 1";

fn format_err(what: &str, detail: impl std::fmt::Display) -> Error {
    Error::Format(format!("{what}: {detail}"))
}

pub fn write_matrix<W: Write>(out: &mut W, name: &str, m: &Matrix) -> std::io::Result<()> {
    writeln!(out, "matrix {name} {} {}", m.rows(), m.cols())?;
    for row in m.iter_rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.write_all(b"\t")?;
            }
            write!(out, "{v:e}")?;
            first = false;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn next_line<I: Iterator<Item = String>>(lines: &mut I, what: &str) -> Result<String> {
    lines.next().ok_or_else(|| format_err(what, "unexpected end of file"))
}

/// Reads a block written by [`write_matrix`], checking its name.
pub fn read_matrix<I: Iterator<Item = String>>(lines: &mut I, name: &str) -> Result<Matrix> {
    let header = next_line(lines, name)?;
    let parts: Vec<&str> = header.split(' ').collect();
    if parts.len() != 4 || parts[0] != "matrix" || parts[1] != name {
        return Err(format_err(name, format!("expected 'matrix {name} <rows> <cols>', found '{header}'")));
    }
    let rows: usize = parts[2].parse().map_err(|e| format_err(name, e))?;
    let cols: usize = parts[3].parse().map_err(|e| format_err(name, e))?;
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let line = next_line(lines, name)?;
        let before = data.len();
        if cols > 0 {
            for field in line.split('\t') {
                data.push(field.parse::<f64>().map_err(|e| format_err(name, format!("row {r}: {e}")))?);
            }
        }
        if data.len() - before != cols {
            return Err(format_err(name, format!("row {r} has {} values, expected {cols}", data.len() - before)));
        }
    }
    Ok(Matrix::from_vec(rows, cols, data))
}

fn expect_keyed<I: Iterator<Item = String>>(lines: &mut I, key: &str) -> Result<String> {
    let line = next_line(lines, key)?;
    match line.strip_prefix(key).and_then(|rest| rest.strip_prefix(' ')) {
        Some(rest) => Ok(rest.to_owned()),
        None => Err(format_err(key, format!("expected '{key} …', found '{line}'"))),
    }
}

fn expect_count<I: Iterator<Item = String>>(lines: &mut I, key: &str) -> Result<usize> {
    expect_keyed(lines, key)?.parse().map_err(|e| format_err(key, e))
}

/// User features and per-layer mappings of a composite fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureState {
    pub x: Matrix,
    pub lambda: Vec<Matrix>,
}

/// Everything needed to score dyads after training.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: String,
    /// Resolved run configuration, one line.
    pub config: String,
    pub layer_names: Vec<String>,
    /// One entry per layer, or a single entry shared by all layers.
    pub estimates: Vec<PointEstimates>,
    pub features: Option<FeatureState>,
}

impl Checkpoint {
    pub fn from_comfp(config: String, layer_names: Vec<String>, fit: &FitResult) -> Self {
        Self {
            model: "comfp".into(),
            config,
            layer_names,
            estimates: fit.estimates.clone(),
            features: Some(FeatureState { x: fit.hyper.x.clone(), lambda: fit.hyper.lambda.clone() }),
        }
    }

    pub fn estimate(&self, d: usize) -> &PointEstimates {
        if self.estimates.len() == 1 {
            &self.estimates[0]
        } else {
            &self.estimates[d]
        }
    }

    pub fn write<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "{CHECKPOINT_MAGIC}")?;
        writeln!(out, "model {}", self.model)?;
        writeln!(out, "config {}", self.config)?;
        writeln!(out, "layers {}", self.layer_names.len())?;
        for name in &self.layer_names {
            writeln!(out, "name {name}")?;
        }
        writeln!(out, "estimates {}", self.estimates.len())?;
        for (e, est) in self.estimates.iter().enumerate() {
            write_matrix(out, &format!("pi.{e}"), &est.pi)?;
            write_matrix(out, &format!("b.{e}"), &est.b)?;
        }
        match &self.features {
            None => writeln!(out, "features 0")?,
            Some(f) => {
                writeln!(out, "features 1")?;
                write_matrix(out, "x", &f.x)?;
                for (d, l) in f.lambda.iter().enumerate() {
                    write_matrix(out, &format!("lambda.{d}"), l)?;
                }
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::to_owned);
        let magic = next_line(&mut lines, "checkpoint")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(format_err("checkpoint", format!("unsupported header '{magic}'")));
        }
        let model = expect_keyed(&mut lines, "model")?;
        let config = expect_keyed(&mut lines, "config")?;
        let layers = expect_count(&mut lines, "layers")?;
        let layer_names = (0..layers).map(|_| expect_keyed(&mut lines, "name")).collect::<Result<Vec<_>>>()?;
        let count = expect_count(&mut lines, "estimates")?;
        if count != 1 && count != layers {
            return Err(format_err("estimates", format!("{count} estimates for {layers} layers")));
        }
        let mut estimates = Vec::with_capacity(count);
        for e in 0..count {
            let pi = read_matrix(&mut lines, &format!("pi.{e}"))?;
            let b = read_matrix(&mut lines, &format!("b.{e}"))?;
            if b.rows() != pi.cols() || b.cols() != pi.cols() {
                return Err(format_err("checkpoint", format!("estimate {e}: π has {} columns, B is {}×{}", pi.cols(), b.rows(), b.cols())));
            }
            estimates.push(PointEstimates { pi, b });
        }
        let features = match expect_count(&mut lines, "features")? {
            0 => None,
            1 => {
                let x = read_matrix(&mut lines, "x")?;
                let lambda = (0..layers)
                    .map(|d| read_matrix(&mut lines, &format!("lambda.{d}")))
                    .collect::<Result<Vec<_>>>()?;
                Some(FeatureState { x, lambda })
            }
            other => return Err(format_err("features", format!("unexpected flag {other}"))),
        };
        Ok(Self { model, config, layer_names, estimates, features })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

/// Train/held-out/negative dyads of every layer, as index pairs.
pub fn write_split<W: Write>(out: &mut W, config: &str, layer_names: &[String], split: &TrainTestSplit) -> std::io::Result<()> {
    writeln!(out, "{SPLIT_MAGIC}")?;
    writeln!(out, "config {config}")?;
    writeln!(out, "layers {}", split.layers.len())?;
    for (d, ls) in split.layers.iter().enumerate() {
        writeln!(out, "layer {d} {}", layer_names.get(d).map(String::as_str).unwrap_or(""))?;
        let groups = [("train_pos", &ls.train_pos), ("heldout_pos", &ls.heldout_pos), ("train_neg", &ls.train_neg)];
        for (kind, dyads) in groups {
            for dy in dyads {
                writeln!(out, "{kind}\t{}\t{}", dy.lo(), dy.hi())?;
            }
        }
        for (owner, dyads) in &ls.eval_neg {
            for dy in dyads {
                writeln!(out, "eval_neg:{owner}\t{}\t{}", dy.lo(), dy.hi())?;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SplitFile {
    pub config: String,
    pub layer_names: Vec<String>,
    pub split: TrainTestSplit,
}

pub fn parse_split(text: &str) -> Result<SplitFile> {
    let mut lines = text.lines().map(str::to_owned);
    let magic = next_line(&mut lines, "split")?;
    if magic != SPLIT_MAGIC {
        return Err(format_err("split", format!("unsupported header '{magic}'")));
    }
    let config = expect_keyed(&mut lines, "config")?;
    let count = expect_count(&mut lines, "layers")?;
    let mut layer_names = Vec::with_capacity(count);
    let mut layers: Vec<LayerSplit> = Vec::with_capacity(count);
    for (lineno, line) in lines.enumerate() {
        let lineno = lineno + 4;
        if let Some(rest) = line.strip_prefix("layer ") {
            let (idx, name) = rest.split_once(' ').unwrap_or((rest, ""));
            if idx.parse::<usize>().ok() != Some(layers.len()) {
                return Err(format_err("split", format!("line {lineno}: layer index out of order")));
            }
            layer_names.push(name.to_owned());
            layers.push(LayerSplit::default());
            continue;
        }
        let ls = layers.last_mut().ok_or_else(|| format_err("split", format!("line {lineno}: dyad before any layer")))?;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(format_err("split", format!("line {lineno}: expected 3 fields")));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|e| format_err("split", format!("line {lineno}: {e}")));
        let dyad = Dyad::new(parse(fields[1])?, parse(fields[2])?)
            .ok_or_else(|| format_err("split", format!("line {lineno}: self-pair")))?;
        match fields[0] {
            "train_pos" => ls.train_pos.push(dyad),
            "heldout_pos" => ls.heldout_pos.push(dyad),
            "train_neg" => ls.train_neg.push(dyad),
            other => match other.strip_prefix("eval_neg:") {
                Some(owner) => ls.eval_neg.entry(parse(owner)?).or_default().push(dyad),
                None => return Err(format_err("split", format!("line {lineno}: unknown kind '{other}'"))),
            },
        }
    }
    if layers.len() != count {
        return Err(format_err("split", format!("header announces {count} layers, found {}", layers.len())));
    }
    Ok(SplitFile { config, layer_names, split: TrainTestSplit { layers } })
}

pub fn load_split(path: &Path) -> Result<SplitFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_split(&text)
}

/// `iteration,joint_log_density,mh_accept_rate,seconds`. Wall times are
/// written only when `timing` is set so that reruns stay byte-identical;
/// otherwise the column holds `NA`, as does the acceptance rate of
/// iterations without a hyper-parameter round.
pub fn write_trace<W: Write>(out: &mut W, config: &str, fit: &FitResult, timing: bool) -> std::io::Result<()> {
    writeln!(out, "# config {config}")?;
    writeln!(out, "iteration,joint_log_density,mh_accept_rate,seconds")?;
    for it in 0..fit.iterations() {
        let rate = fit.mh_accept_rate[it].map_or_else(|| "NA".to_owned(), |r| format!("{r}"));
        let secs = if timing { format!("{:.6}", fit.seconds[it]) } else { "NA".to_owned() };
        writeln!(out, "{},{:e},{rate},{secs}", it + 1, fit.log_density[it])?;
    }
    Ok(())
}
