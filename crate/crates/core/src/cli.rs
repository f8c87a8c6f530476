//! Command-line front end: `solve`, `gen`, `train`, `infer` and `eval`.
//!
//! Logs go to standard error; data goes to files or standard output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::dataset::{generate_dataset, write_atomic, write_pgm, Image, VfSweep};
use crate::error::{Error, Result};
use crate::metrics::{eval_report, read_manifest_records};
use crate::nn::{
    infer, load_checkpoint, load_training_set, save_checkpoint, train_with, AdamParams, Exec, NetworkProfile,
    TrainConfig,
};
use crate::problems::{ProblemConfig, ProblemKind};

#[derive(Debug, Parser)]
#[command(name = "topocnn", version, about = "Topology-optimization datasets and a CNN surrogate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize one design and write it as a PGM plus JSON metadata.
    Solve(SolveArgs),
    /// Generate a dataset over a volume-fraction sweep.
    Gen(GenArgs),
    /// Train a network on a generated dataset.
    Train(TrainArgs),
    /// Predict a design for one volume fraction.
    Infer(InferArgs),
    /// Report volume and objective errors of trained networks.
    Eval(EvalArgs),
}

/// Problem selection and solver parameters shared by `solve` and `gen`.
#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    /// Problem: cantilever, arch or micro.
    #[arg(long, value_parser = parse_problem)]
    pub problem: ProblemKind,

    /// Elements along x.
    #[arg(long, default_value_t = 100)]
    pub nelx: usize,

    /// Elements along y.
    #[arg(long, default_value_t = 100)]
    pub nely: usize,

    /// SIMP penalization exponent [default: 3]
    #[arg(long)]
    pub penal: Option<f64>,

    /// Sensitivity filter radius in elements [default: 2.4]
    #[arg(long)]
    pub rmin: Option<f64>,

    /// Heaviside threshold of the pressure coefficients (arch) [default: 0.2]
    #[arg(long)]
    pub etaf: Option<f64>,

    /// Heaviside steepness of the pressure coefficients (arch) [default: 8]
    #[arg(long)]
    pub betaf: Option<f64>,

    /// Include the design-dependent load term in the sensitivities (arch) [default: true]
    #[arg(long)]
    pub lst: Option<bool>,

    /// Iteration cap [default: 100 for arch, 200 otherwise]
    #[arg(long)]
    pub maxit: Option<usize>,
}

impl ProblemArgs {
    /// Problem configuration at volume fraction `vf`.
    pub fn config(&self, vf: f64) -> Result<ProblemConfig> {
        let mut cfg = ProblemConfig::new(self.problem, self.nelx, self.nely, vf);
        let arch_only = |name: &str, set: bool| {
            if set && self.problem != ProblemKind::Arch {
                Err(Error::InvalidInput(format!("--{name} only applies to --problem arch")))
            } else {
                Ok(())
            }
        };
        arch_only("etaf", self.etaf.is_some())?;
        arch_only("betaf", self.betaf.is_some())?;
        arch_only("lst", self.lst.is_some())?;
        match &mut cfg {
            ProblemConfig::Cantilever(c) => {
                c.penal = self.penal.unwrap_or(c.penal);
                c.rmin = self.rmin.unwrap_or(c.rmin);
                c.max_iters = self.maxit.unwrap_or(c.max_iters);
            }
            ProblemConfig::Micro(c) => {
                c.penal = self.penal.unwrap_or(c.penal);
                c.rmin = self.rmin.unwrap_or(c.rmin);
                c.max_iters = self.maxit.unwrap_or(c.max_iters);
            }
            ProblemConfig::Arch(c) => {
                c.penal = self.penal.unwrap_or(c.penal);
                c.rmin = self.rmin.unwrap_or(c.rmin);
                c.etaf = self.etaf.unwrap_or(c.etaf);
                c.betaf = self.betaf.unwrap_or(c.betaf);
                c.lst = self.lst.unwrap_or(c.lst);
                c.maxit = self.maxit.unwrap_or(c.maxit);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,

    /// Target volume fraction in (0, 1).
    #[arg(long)]
    pub vf: f64,

    /// Output PGM.
    #[arg(long, short)]
    pub out: PathBuf,

    /// Metadata JSON [default: the output path with extension .json]
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,

    /// First volume fraction of the sweep.
    #[arg(long, default_value_t = 0.01)]
    pub vf_min: f64,

    /// Last volume fraction of the sweep.
    #[arg(long, default_value_t = 0.95)]
    pub vf_max: f64,

    /// Sweep step.
    #[arg(long, default_value_t = 0.01)]
    pub vf_step: f64,

    /// Dataset root; samples go to `<out>/<problem>/`.
    #[arg(long, short)]
    pub out: PathBuf,

    /// Worker threads; 1 is strictly deterministic.
    #[arg(long, env = "TOACNN_THREADS", default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Problem directory holding manifest.jsonl.
    #[arg(long)]
    pub data: PathBuf,

    /// Network profile: paper, small or a JSON file.
    #[arg(long, default_value = "paper")]
    pub profile: String,

    /// Width of the adaptive dense layer; 0 uses a single dense layer.
    #[arg(long, default_value_t = 0)]
    pub n: usize,

    #[arg(long, default_value_t = 2000)]
    pub epochs: usize,

    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,

    #[arg(long, env = "TOACNN_SEED", default_value_t = 42)]
    pub seed: u64,

    /// Worker threads; 1 is strictly deterministic.
    #[arg(long, env = "TOACNN_THREADS", default_value_t = 1)]
    pub threads: usize,

    /// Output checkpoint.
    #[arg(long, short)]
    pub out: PathBuf,

    /// Per-epoch loss log [default: the checkpoint path with extension .loss.tsv]
    #[arg(long)]
    pub loss_log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,

    /// Volume fraction of the conditioning image.
    #[arg(long)]
    pub vf: f64,

    /// Output PGM.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Problem directory holding manifest.jsonl and config.json.
    #[arg(long)]
    pub data: PathBuf,

    /// Checkpoint for one adaptive width, as `N=PATH`; repeatable.
    #[arg(long = "checkpoint", value_parser = parse_checkpoint, required = true)]
    pub checkpoints: Vec<(usize, PathBuf)>,

    /// Comma-separated volume fractions [default: every manifest entry]
    #[arg(long, value_delimiter = ',')]
    pub vf: Vec<f64>,

    /// Also write the rows as JSON lines.
    #[arg(long)]
    pub jsonl: Option<PathBuf>,

    /// Worker threads; 1 is strictly deterministic.
    #[arg(long, env = "TOACNN_THREADS", default_value_t = 1)]
    pub threads: usize,
}

fn parse_problem(s: &str) -> std::result::Result<ProblemKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_checkpoint(s: &str) -> std::result::Result<(usize, PathBuf), String> {
    let (n, path) = s.split_once('=').ok_or_else(|| format!("expected N=PATH, got `{s}`"))?;
    let n = n.trim().parse().map_err(|_| format!("bad adaptive width `{n}`"))?;
    Ok((n, PathBuf::from(path)))
}

fn resolve_profile(spec: &str, n: usize) -> Result<NetworkProfile> {
    let p = match spec {
        "paper" => NetworkProfile::paper(n),
        "small" => NetworkProfile::small(n),
        path => NetworkProfile::from_file(Path::new(path))?.with_adaptive(n),
    };
    p.validate()?;
    Ok(p)
}

fn check_vf(vf: f64) -> Result<()> {
    if vf > 0.0 && vf < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("--vf must lie in (0, 1), got {vf}")))
    }
}

fn check_threads(threads: usize) -> Result<()> {
    if threads == 0 {
        return Err(Error::InvalidInput("--threads must be at least 1".into()));
    }
    Ok(())
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    check_threads(threads)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
        .install(f)
}

fn to_json_bytes(v: &serde_json::Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s.into_bytes()
}

fn cmd_solve(a: &SolveArgs) -> Result<()> {
    check_vf(a.vf)?;
    let cfg = a.problem.config(a.vf)?;
    eprintln!("solving {} at vf={} on {}x{}", cfg.kind(), a.vf, a.problem.nelx, a.problem.nely);
    let sol = cfg.solve()?;
    write_atomic(&a.out, &write_pgm(&Image::from_density(&sol.density))?)?;
    let mut meta = json!({
        "problem": cfg.kind(),
        "vf": a.vf,
        "volume": sol.density.mean(),
        "objective_name": cfg.objective_name(),
        "objective": sol.objective,
        "iterations": sol.iterations,
        "boundary_conditions": cfg.boundary_conditions(),
        "config": cfg,
    });
    if cfg.kind() == ProblemKind::Micro {
        meta["k_h"] = json!(sol.objective);
    }
    let meta_path = a.meta.clone().unwrap_or_else(|| a.out.with_extension("json"));
    write_atomic(&meta_path, &to_json_bytes(&meta))?;
    println!("{} {}", cfg.objective_name(), sol.objective);
    Ok(())
}

fn cmd_gen(a: &GenArgs) -> Result<()> {
    check_threads(a.threads)?;
    let sweep = VfSweep {
        min: a.vf_min,
        max: a.vf_max,
        step: a.vf_step,
    };
    let n = sweep.values()?.len();
    let base = a.problem.config(a.vf_min)?;
    eprintln!("generating {n} {} samples with {} thread(s)", base.kind(), a.threads);
    let ds = generate_dataset(&base, &sweep, &a.out, a.threads)?;
    for f in &ds.failures {
        eprintln!("failed: {f:?}");
    }
    println!("{}", ds.manifest_path().display());
    if ds.manifest.records.is_empty() {
        return Err(Error::NonFinite("every solve in the sweep failed".into()));
    }
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let profile = resolve_profile(&a.profile, a.n)?;
    if !(a.lr > 0.0 && a.lr.is_finite()) {
        return Err(Error::InvalidInput(format!("--lr must be positive, got {}", a.lr)));
    }
    if a.epochs == 0 {
        return Err(Error::InvalidInput("--epochs must be at least 1".into()));
    }
    check_threads(a.threads)?;
    let samples = load_training_set(&a.data.join(crate::dataset::MANIFEST_FILE), &profile)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        seed: a.seed,
        optimizer: AdamParams {
            lr: a.lr as f32,
            ..AdamParams::default()
        },
    };
    let exec = if a.threads > 1 { Exec::Parallel } else { Exec::Serial };
    eprintln!(
        "training n={} ({} parameters) on {} samples for {} epochs",
        a.n,
        profile.param_count(),
        samples.len(),
        a.epochs
    );
    let every = (a.epochs / 20).max(1);
    let (ckpt, losses) = with_pool(a.threads, || {
        train_with(&profile, &samples, &cfg, exec, |epoch, loss| {
            if (epoch + 1) % every == 0 || epoch + 1 == a.epochs {
                eprintln!("epoch {:>5}  loss {loss:.6e}", epoch + 1);
            }
        })
    })?;
    save_checkpoint(&a.out, &ckpt)?;
    let mut log = String::from("epoch\tloss\n");
    for (i, l) in losses.iter().enumerate() {
        writeln!(log, "{}\t{l:e}", i + 1).expect("string write");
    }
    let log_path = a.loss_log.clone().unwrap_or_else(|| a.out.with_extension("loss.tsv"));
    write_atomic(&log_path, log.as_bytes())?;
    println!("final_loss {:e}", losses.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

fn cmd_infer(a: &InferArgs) -> Result<()> {
    check_vf(a.vf)?;
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let pred = infer(&ckpt.model, a.vf)?;
    write_atomic(&a.out, &write_pgm(&Image::from_density(&pred))?)?;
    println!("volume {}", pred.mean());
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    for &vf in &a.vf {
        check_vf(vf)?;
    }
    let vfs = if a.vf.is_empty() {
        read_manifest_records(&a.data)?.records.iter().map(|r| r.vf).collect()
    } else {
        a.vf.clone()
    };
    let report = with_pool(a.threads, || eval_report(&a.data, &a.checkpoints, &vfs))?;
    print!("{}", report.to_table());
    if let Some(path) = &a.jsonl {
        write_atomic(path, report.to_jsonl().as_bytes())?;
    }
    if !report.rows.is_empty() && report.n_ok() == 0 {
        return Err(Error::Format(format!("all {} rows failed", report.rows.len())));
    }
    Ok(())
}

/// Runs one parsed command.
pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Eval(a) => cmd_eval(a),
    }
}

/// Parses the process arguments, runs, and returns the exit code.
pub fn main_exit_code() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
