//! Command-line front end.
//!
//! Every subcommand resolves one [`RunConfig`]: defaults, then an optional
//! TOML file given with `--config`, then any flags. The resolved config is
//! echoed as a single JSON line into every file the command writes.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_split, write_split, write_trace, Checkpoint};
use crate::comfp::check::gradient_check;
use crate::error::{Error, Result};
use crate::eval::{
    candidate_set_hash, evaluate, prepare_split, run_experiment, train_model, write_report_csv, write_summary, DataSource,
    EvalReport, ExperimentConfig, ModelKind, ModelParams,
};
use crate::network::{load_manifest, write_edge_list, LayerSource, Manifest};
use crate::network::{SplitMode, DEFAULT_EVAL_POOL};
use crate::synth::plant_sparse_dense_pair;

/// Relative error at or above which `gradcheck` fails.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "comfp", version, about = "Collective friendship prediction across composite social networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Load a manifest and print a summary of the composite network.
    Ingest,
    /// Generate the planted dense/sparse fixture with its ground truth.
    Synth,
    /// Split a composite, train one model and write checkpoint and trace.
    Train,
    /// Score a checkpoint against a saved split and write the report.
    Eval,
    /// Compare analytic gradients with finite differences.
    Gradcheck,
    /// Train and evaluate several models on one shared split.
    Experiment,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML file with any of the run settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[arg(long, global = true)]
    pub model: Option<ModelKind>,
    /// Comma-separated model list for `experiment`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub models: Option<Vec<ModelKind>>,
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub t: Option<usize>,
    #[arg(long, global = true)]
    pub iters: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub holdout_fraction: Option<f64>,
    /// `temporal` or `uniform`.
    #[arg(long, global = true)]
    pub split_mode: Option<String>,
    #[arg(long, global = true)]
    pub filter_popular: bool,
    #[arg(long, global = true)]
    pub sigma_u: Option<f64>,
    #[arg(long, global = true)]
    pub sigma_d: Option<f64>,
    #[arg(long, global = true)]
    pub sigma_mh: Option<f64>,
    #[arg(long, global = true)]
    pub hyper_period: Option<usize>,
    #[arg(long, global = true)]
    pub eval_pool: Option<usize>,
    #[arg(long, global = true)]
    pub degree_cap: Option<usize>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Record wall-clock seconds (makes outputs run-dependent).
    #[arg(long, global = true)]
    pub timing: bool,
    /// Users in the synthetic fixture.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub density_ratio: Option<f64>,
    #[arg(long, global = true)]
    pub overlap: Option<f64>,
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    pub split: Option<PathBuf>,
    /// Random instances for `gradcheck`.
    #[arg(long, global = true)]
    pub instances: Option<usize>,
}

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub model: ModelKind,
    pub models: Vec<ModelKind>,
    pub k: usize,
    pub t: usize,
    pub iters: usize,
    pub seed: u64,
    pub holdout_fraction: f64,
    pub split_mode: String,
    pub filter_popular: bool,
    pub sigma_u: f64,
    pub sigma_d: f64,
    pub sigma_mh: f64,
    pub hyper_period: usize,
    pub eval_pool: usize,
    pub degree_cap: usize,
    pub out_dir: PathBuf,
    pub timing: bool,
    pub n: usize,
    pub density_ratio: f64,
    pub overlap: f64,
    pub checkpoint: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub instances: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = ModelParams::default();
        Self {
            manifest: None,
            model: ModelKind::Comfp,
            models: ModelKind::ALL.to_vec(),
            k: p.k,
            t: p.t,
            iters: p.iterations,
            seed: p.seed,
            holdout_fraction: 0.1,
            split_mode: "temporal".into(),
            filter_popular: false,
            sigma_u: p.sigma_u,
            sigma_d: p.sigma_d,
            sigma_mh: p.sigma_mh,
            hyper_period: p.hyper_period,
            eval_pool: DEFAULT_EVAL_POOL,
            degree_cap: crate::eval::LONG_TAIL_CAP,
            out_dir: PathBuf::from("out"),
            timing: false,
            n: 200,
            density_ratio: 5.0,
            overlap: 1.0,
            checkpoint: None,
            split: None,
            instances: 20,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: e.span().map(|s| text[..s.start].matches('\n').count() + 1).unwrap_or(0),
            message: e.message().to_owned(),
        })
    }

    /// Defaults, then the `--config` file, then the flags.
    pub fn resolve(flags: &Flags) -> Result<Self> {
        let mut cfg = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                Self::from_toml(&text, path)?
            }
            None => Self::default(),
        };
        macro_rules! take {
            ($($field:ident),*) => {$(
                if let Some(v) = &flags.$field {
                    cfg.$field = v.clone();
                }
            )*};
        }
        take!(model, models, k, t, iters, seed, holdout_fraction, split_mode, sigma_u, sigma_d, sigma_mh);
        take!(hyper_period, eval_pool, degree_cap, out_dir, n, density_ratio, overlap, instances);
        if flags.manifest.is_some() {
            cfg.manifest = flags.manifest.clone();
        }
        if flags.checkpoint.is_some() {
            cfg.checkpoint = flags.checkpoint.clone();
        }
        if flags.split.is_some() {
            cfg.split = flags.split.clone();
        }
        cfg.filter_popular |= flags.filter_popular;
        cfg.timing |= flags.timing;
        Ok(cfg)
    }

    /// One-line JSON written into every artifact.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("run config serialises")
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            k: self.k,
            t: self.t,
            iterations: self.iters,
            sigma_u: self.sigma_u,
            sigma_d: self.sigma_d,
            sigma_mh: self.sigma_mh,
            hyper_period: self.hyper_period,
            seed: self.seed,
        }
    }

    pub fn split_mode(&self) -> Result<SplitMode> {
        self.split_mode.parse()
    }

    fn manifest(&self) -> Result<&Path> {
        self.manifest.as_deref().ok_or_else(|| Error::InvalidArgument("--manifest is required".into()))
    }

    fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out_dir.join("checkpoint.txt"))
    }

    fn split_path(&self) -> PathBuf {
        self.split.clone().unwrap_or_else(|| self.out_dir.join("split.tsv"))
    }

    pub fn experiment(&self) -> ExperimentConfig {
        let source = match &self.manifest {
            Some(path) => DataSource::Manifest { path: path.clone() },
            None => DataSource::Synth {
                n: self.n,
                k: self.k,
                t: self.t,
                density_ratio: self.density_ratio,
                overlap: self.overlap,
                seed: self.seed,
            },
        };
        ExperimentConfig {
            source,
            models: self.models.clone(),
            params: self.params(),
            holdout_fraction: self.holdout_fraction,
            split_mode: self.split_mode.clone(),
            filter_popular: self.filter_popular,
            eval_pool: self.eval_pool,
            degree_cap: self.degree_cap,
            timing: self.timing,
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    body(&mut buf).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn cmd_ingest(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let path = cfg.manifest()?;
    let (net, stats) = load_manifest(path)?;
    let io = |e| Error::io("<stdout>", e);
    writeln!(out, "users (n): {}", net.num_users()).map_err(io)?;
    writeln!(out, "layers (N): {}", net.num_layers()).map_err(io)?;
    for (layer, st) in net.layers().iter().zip(&stats) {
        writeln!(
            out,
            "layer {}: {} members, {} dyads ({} duplicate, {} self-loop lines skipped)",
            layer.name(),
            layer.members().len(),
            layer.num_dyads(),
            st.duplicates,
            st.self_loops_skipped
        )
        .map_err(io)?;
    }
    for (a, b, shared) in net.overlap_sizes() {
        writeln!(out, "overlap {} / {}: {} users", net.layer(a).name(), net.layer(b).name(), shared).map_err(io)?;
    }
    Ok(())
}

/// Writes one edge list per layer, `manifest.toml` and `truth.txt`.
pub fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let (net, truth) = plant_sparse_dense_pair(cfg.n, cfg.k, cfg.t, cfg.density_ratio, cfg.overlap, cfg.seed)?;
    create_dir(&cfg.out_dir)?;
    let echo = cfg.echo();
    let mut sources = Vec::new();
    for layer in net.layers() {
        let file = format!("{}.tsv", layer.name());
        write_file(&cfg.out_dir.join(&file), |b| {
            writeln!(b, "# config {echo}")?;
            write_edge_list(b, layer, net.roster())
        })?;
        sources.push(LayerSource {
            name: layer.name().to_owned(),
            path: PathBuf::from(file),
            timestamps: layer.timestamps().is_some(),
        });
    }
    let manifest = Manifest { layers: sources };
    write_file(&cfg.out_dir.join("manifest.toml"), |b| {
        writeln!(b, "# config {echo}")?;
        b.write_all(manifest.to_toml().as_bytes())
    })?;
    write_file(&cfg.out_dir.join("truth.txt"), |b| {
        writeln!(b, "# config {echo}")?;
        truth.write(b)
    })
}

/// Splits the manifest's composite, trains `cfg.model` and writes
/// `split.tsv`, `checkpoint.txt` and, for ComFP, `trace.csv`.
pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let (net, _) = load_manifest(cfg.manifest()?)?;
    let (net, split) = prepare_split(net, cfg.filter_popular, cfg.holdout_fraction, cfg.split_mode()?, cfg.eval_pool, cfg.seed)?;
    let names: Vec<String> = net.layers().iter().map(|l| l.name().to_owned()).collect();
    let echo = cfg.echo();
    create_dir(&cfg.out_dir)?;
    write_file(&cfg.split_path(), |b| write_split(b, &echo, &names, &split))?;
    let (ck, fit) = train_model(cfg.model, net.num_users(), &split, &cfg.params(), &names, &echo)?;
    write_file(&cfg.checkpoint_path(), |b| ck.write(b))?;
    if let Some(fit) = fit {
        write_file(&cfg.out_dir.join("trace.csv"), |b| write_trace(b, &echo, &fit, cfg.timing))?;
    }
    Ok(())
}

/// Scores a checkpoint on a saved split; writes `report.csv` and
/// `summary.txt`.
pub fn cmd_eval(cfg: &RunConfig) -> Result<Vec<EvalReport>> {
    let ck = Checkpoint::load(&cfg.checkpoint_path())?;
    let split = load_split(&cfg.split_path())?;
    if ck.layer_names != split.layer_names {
        return Err(Error::InvalidArgument(format!(
            "checkpoint layers {:?} do not match split layers {:?}",
            ck.layer_names, split.layer_names
        )));
    }
    let model: ModelKind = ck.model.parse()?;
    let started = Instant::now();
    let layers = evaluate(&ck, &split.split, &split.layer_names, cfg.degree_cap)?;
    let reports = vec![EvalReport { model, layers, seconds: cfg.timing.then(|| started.elapsed().as_secs_f64()) }];
    let echo = cfg.echo();
    let hash = candidate_set_hash(&split.split);
    create_dir(&cfg.out_dir)?;
    write_file(&cfg.out_dir.join("report.csv"), |b| write_report_csv(b, &echo, &hash, &reports))?;
    write_file(&cfg.out_dir.join("summary.txt"), |b| write_summary(b, &echo, &hash, &reports))?;
    Ok(reports)
}

/// Prints one row per instance; returns whether every error is below
/// [`GRADCHECK_TOLERANCE`].
pub fn cmd_gradcheck(cfg: &RunConfig, out: &mut dyn Write) -> Result<bool> {
    let rows = gradient_check(cfg.instances, cfg.seed)?;
    let io = |e| Error::io("<stdout>", e);
    writeln!(out, "instance\tn\tK\tT\tlambda_rel_err\tx_rel_err\tstatus").map_err(io)?;
    let mut ok = true;
    for r in &rows {
        let pass = r.max_error() < GRADCHECK_TOLERANCE;
        ok &= pass;
        let ks: Vec<String> = r.k.iter().map(usize::to_string).collect();
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.3e}\t{:.3e}\t{}",
            r.instance,
            r.n,
            ks.join(","),
            r.t,
            r.lambda_error,
            r.x_error,
            if pass { "pass" } else { "FAIL" }
        )
        .map_err(io)?;
    }
    let worst = rows.iter().map(|r| r.max_error()).fold(0.0, f64::max);
    writeln!(out, "max relative error {worst:.3e} over {} instances", rows.len()).map_err(io)?;
    Ok(ok)
}

pub fn cmd_experiment(cfg: &RunConfig) -> Result<Vec<EvalReport>> {
    Ok(run_experiment(&cfg.experiment(), &cfg.out_dir)?.reports)
}

/// Runs one parsed command; returns the process exit code.
pub fn run(cli: &Cli) -> Result<i32> {
    let cfg = RunConfig::resolve(&cli.flags)?;
    let mut stdout = std::io::stdout().lock();
    let result = match cli.command {
        Command::Ingest => cmd_ingest(&cfg, &mut stdout).map(|_| 0),
        Command::Synth => cmd_synth(&cfg).map(|_| 0),
        Command::Train => cmd_train(&cfg).map(|_| 0),
        Command::Eval => cmd_eval(&cfg).map(|_| 0),
        Command::Gradcheck => cmd_gradcheck(&cfg, &mut stdout).map(|ok| if ok { 0 } else { 3 }),
        Command::Experiment => cmd_experiment(&cfg).map(|_| 0),
    };
    if let Err(e) = &result {
        if matches!(cli.command, Command::Synth | Command::Train | Command::Eval) && cfg.out_dir.is_dir() {
            let marker = cfg.out_dir.join("FAILED");
            let _ = std::fs::write(&marker, format!("{e}\n# config {}\n", cfg.echo()));
        }
    }
    result
}

/// Parses `args`, runs the command and maps errors to exit codes.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
