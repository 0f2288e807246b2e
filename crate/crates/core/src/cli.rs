//! The `geognn` command-line front end.
//!
//! Every command reads a TOML config (the bundled default when `--config`
//! is absent), runs the matching experiment, writes CSV, JSON and SVG
//! files under `--out` and finishes with `manifest.json`. Exit codes:
//! 0 success, 1 config or IO error, 2 failed hard assertion.

use std::path::{Component, Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::experiments::config::{hash_snapshot, parse_config, snapshot, KernelSpec, DEFAULT_CONVERGE};
use crate::experiments::oracle::{
    all_hard_pass, Check, ClassifyOracle, ConvergeOracle, Oracle, TradeoffOracle, TransferOracle,
};
use crate::experiments::plot::{line_plot, Series};
use crate::experiments::report::{dense_le_sparse, ComparisonTable};
use crate::experiments::sweep::metric;
use crate::experiments::transfer::metric as tmetric;
use crate::experiments::{
    classify_experiment, convergence_sweep, lipschitz_tradeoff, train_regression, transferability_eval,
    ClassifyConfig, ErrorCurve, ModelKind, RegressionConfig, SweepConfig,
};
use crate::geograph::{build_graph, KernelKind};
use crate::gnn::GnnArch;
use crate::manifold::{lb_spectrum, sample_uniform, ManifoldKind, ManifoldModel};
use crate::spectral::{align_spectra, eig_sym, DENSE_LIMIT};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_ASSERTION: i32 = 2;

pub const DEFAULT_SPECTRUM: &str = include_str!("../configs/spectrum.toml");
pub const DEFAULT_TRAIN: &str = include_str!("../configs/train.toml");
pub const DEFAULT_TRANSFER: &str = include_str!("../configs/transfer.toml");
pub const DEFAULT_CLASSIFY: &str = include_str!("../configs/classify.toml");

/// Eigenvalues computed by `spectrum` above the dense limit when `k` is
/// not given.
pub const SPARSE_DEFAULT_K: usize = 64;

#[derive(Parser, Debug, Clone)]
#[command(name = "geognn", version, about = "Geometric graphs, manifold filters and GNN convergence experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML config; the bundled default for the command when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory [default: out/<command>].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the command's scalar seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads [default: available cores].
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Validate the config and exit without writing anything.
    #[arg(long, global = true)]
    pub dry_run: bool,
    /// Write `oracle.json` with this run's section replaced.
    #[arg(long, global = true)]
    pub regen_oracle: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Graph spectrum and its alignment with the manifold's.
    Spectrum,
    /// Convergence sweep over graph sizes, seeds and kernels.
    Converge,
    /// Regression models trained at each penalty weight.
    Train,
    /// Transfer of a trained regression model to larger graphs.
    Transfer,
    /// Sphere against torus point-cloud classification.
    Classify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Converge => "converge",
            Command::Train => "train",
            Command::Transfer => "transfer",
            Command::Classify => "classify",
        }
    }

    pub fn default_config(self) -> &'static str {
        match self {
            Command::Spectrum => DEFAULT_SPECTRUM,
            Command::Converge => DEFAULT_CONVERGE,
            Command::Train => DEFAULT_TRAIN,
            Command::Transfer => DEFAULT_TRANSFER,
            Command::Classify => DEFAULT_CLASSIFY,
        }
    }
}

/// Config of the `spectrum` command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub manifold: ManifoldKind,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    /// Eigenpairs to compute; all of them up to the dense limit by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Leading eigenpairs compared with the manifold's.
    #[serde(default = "default_align_k")]
    pub align_k: usize,
    #[serde(default = "KernelSpec::dense")]
    pub kernel: KernelSpec,
}

fn default_align_k() -> usize {
    5
}

impl SpectrumConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::config("n", "a graph needs at least 2 nodes"));
        }
        if self.k == Some(0) {
            return Err(Error::config("k", "must be positive"));
        }
        self.kernel.validate("kernel")
    }

    /// Eigenpair count after clamping to `n`, with a warning when clamped.
    pub fn resolved_k(&self) -> (usize, Option<String>) {
        match self.k {
            Some(k) if k > self.n => (self.n, Some(format!("k = {k} exceeds n = {}; clamped to {}", self.n, self.n))),
            Some(k) => (k, None),
            None if self.n <= DENSE_LIMIT => (self.n, None),
            None => (SPARSE_DEFAULT_K, None),
        }
    }
}

/// Wall-clock time of one stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

/// Record of one run, written last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    /// Exactly the JSON the hash is taken over.
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub outputs: Vec<String>,
    pub stages: Vec<Stage>,
    pub warnings: Vec<String>,
    pub checks: Vec<Check>,
}

/// Writes files inside one directory, each through a temporary file and a
/// rename.
struct OutDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    fn create(root: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&root)?;
        Ok(OutDir { root, files: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let rel = Path::new(name);
        if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
            return Err(Error::invalid(format!("output name `{name}` leaves the output directory")));
        }
        let path = self.root.join(rel);
        let tmp = self.root.join(format!(".{name}.tmp"));
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, &path)?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    fn csv(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }
}

struct Run {
    cli: Cli,
    stages: Vec<Stage>,
    warnings: Vec<String>,
    checks: Vec<Check>,
    seeds: Vec<u64>,
    clock: Instant,
}

impl Run {
    fn stage(&mut self, name: &str) {
        let now = Instant::now();
        self.stages.push(Stage { name: name.to_string(), seconds: (now - self.clock).as_secs_f64() });
        self.clock = now;
    }

    fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }
}

/// Parses the process arguments and runs; returns the exit code.
pub fn main() -> i32 {
    run(Cli::parse())
}

/// Runs one command; returns the exit code.
pub fn run(cli: Cli) -> i32 {
    match execute(cli) {
        Ok(passed) if passed => EXIT_OK,
        Ok(_) => EXIT_ASSERTION,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

fn read_config<T: serde::de::DeserializeOwned>(cli: &Cli) -> Result<T> {
    match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display()))))?;
            parse_config(&text)
        }
        None => parse_config(cli.command.default_config()),
    }
}

/// Executes the command; `Ok(false)` means a hard assertion failed.
pub fn execute(cli: Cli) -> Result<bool> {
    if cli.jobs == Some(0) {
        return Err(Error::config("jobs", "must be positive"));
    }
    let mut run =
        Run { cli, stages: Vec::new(), warnings: Vec::new(), checks: Vec::new(), seeds: Vec::new(), clock: Instant::now() };
    let command = run.cli.command;
    match command {
        Command::Spectrum => {
            let mut cfg: SpectrumConfig = read_config(&run.cli)?;
            if let Some(s) = run.cli.seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            finish(run, &cfg, |run, out| cmd_spectrum(run, &cfg, out))
        }
        Command::Converge => {
            let mut cfg: SweepConfig = read_config(&run.cli)?;
            if let Some(s) = run.cli.seed {
                match cfg.arch.as_mut() {
                    Some(a) => a.seed = s,
                    None => run.warn("--seed overrides arch.seed, but the config has no arch".into()),
                }
            }
            cfg.validate()?;
            finish(run, &cfg, |run, out| cmd_converge(run, &cfg, out))
        }
        Command::Train | Command::Transfer => {
            let mut cfg: RegressionConfig = read_config(&run.cli)?;
            if let Some(s) = run.cli.seed {
                cfg.train_seed = s;
            }
            cfg.validate()?;
            if command == Command::Train {
                finish(run, &cfg, |run, out| cmd_train(run, &cfg, out))
            } else {
                finish(run, &cfg, |run, out| cmd_transfer(run, &cfg, out))
            }
        }
        Command::Classify => {
            let mut cfg: ClassifyConfig = read_config(&run.cli)?;
            if let Some(s) = run.cli.seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            finish(run, &cfg, |run, out| cmd_classify(run, &cfg, out))
        }
    }
}

fn finish<T: Serialize>(
    mut run: Run,
    cfg: &T,
    body: impl FnOnce(&mut Run, &mut OutDir) -> Result<()>,
) -> Result<bool> {
    let name = run.cli.command.name();
    if run.cli.dry_run {
        println!("{name}: config valid (hash {})", hash_snapshot(&snapshot(cfg)));
        return Ok(true);
    }
    let root = run.cli.out.clone().unwrap_or_else(|| Path::new("out").join(name));
    let mut out = OutDir::create(root)?;
    let snap = snapshot(cfg);
    out.write("config.json", format!("{snap}\n").as_bytes())?;
    run.stage("setup");
    body(&mut run, &mut out)?;
    let passed = all_hard_pass(&run.checks);
    for c in &run.checks {
        let tag = match (c.passed, c.hard) {
            (true, _) => "pass",
            (false, true) => "FAIL",
            (false, false) => "warn",
        };
        println!("[{tag}] {}: {}", c.name, c.detail);
    }
    let mut outputs = out.files.clone();
    outputs.push("manifest.json".into());
    let manifest = RunManifest {
        command: name.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: hash_snapshot(&snap),
        config: serde_json::from_str(&snap)?,
        seeds: std::mem::take(&mut run.seeds),
        outputs,
        stages: std::mem::take(&mut run.stages),
        warnings: std::mem::take(&mut run.warnings),
        checks: std::mem::take(&mut run.checks),
    };
    out.json("manifest.json", &manifest)?;
    println!("{name}: wrote {} files to {}", out.files.len(), out.root.display());
    Ok(passed)
}

fn regen(out: &mut OutDir, edit: impl FnOnce(&mut Oracle)) -> Result<()> {
    let mut o = Oracle::bundled();
    edit(&mut o);
    out.write("oracle.json", o.to_json().as_bytes())
}

fn no_fixture(run: &mut Run, hash: &str) {
    run.warn(format!("no fixture for config hash {hash}; nothing to assert"));
}

fn cmd_spectrum(run: &mut Run, cfg: &SpectrumConfig, out: &mut OutDir) -> Result<()> {
    run.seeds = vec![cfg.seed];
    let (k, clamp) = cfg.resolved_k();
    if let Some(w) = clamp {
        run.warn(w);
    }
    let m = ManifoldModel::new(cfg.manifold);
    let cloud = sample_uniform(&m, cfg.n, cfg.seed)?;
    let kernel = cfg.kernel.kernel(&m).resolve(cfg.n)?;
    let g = build_graph(&cloud, &kernel)?;
    run.stage("graph");
    let spec = eig_sym(&g, k)?;
    run.stage("eigensolve");
    let mut align_k = cfg.align_k.min(k);
    if align_k < cfg.align_k {
        run.warn(format!("align_k = {} exceeds k = {k}; clamped", cfg.align_k));
    }
    let alignment = if align_k > 0 {
        // The last cluster may need pairs beyond `k`; shrink until it fits.
        loop {
            match align_spectra(&spec, &g, &m, align_k) {
                Ok(r) => break Some(r),
                Err(e) if align_k > 1 => {
                    run.warn(format!("alignment of {align_k} pairs failed ({e}); retrying with fewer"));
                    align_k -= 1;
                }
                Err(e) => return Err(e),
            }
        }
    } else {
        None
    };
    run.stage("alignment");

    out.csv("spectrum.csv", |w| spec.write_csv(w))?;
    if let Some(r) = &alignment {
        out.csv("alignment.csv", |w| r.write_csv(w))?;
    }
    let reference = lb_spectrum(&m, k.min(cfg.n))?;
    let shown = k.min(64);
    let graph: Vec<(f64, f64)> = spec.values()[..shown].iter().enumerate().map(|(i, &l)| ((i + 1) as f64, l)).collect();
    let manifold: Vec<(f64, f64)> =
        reference[..shown].iter().enumerate().map(|(i, p)| ((i + 1) as f64, p.eigenvalue)).collect();
    let svg = line_plot(
        &format!("{} spectrum, n = {}", cfg.manifold, cfg.n),
        "index",
        "eigenvalue",
        &[Series { name: "graph".into(), points: graph }, Series { name: "manifold".into(), points: manifold }],
    );
    out.write("spectrum.svg", svg.as_bytes())?;
    let summary = serde_json::json!({
        "n": cfg.n,
        "k": k,
        "eps": kernel.eps,
        "avg_degree": g.avg_degree(),
        "components": g.components(),
        "lambda_min": spec.values()[0],
        "lambda_max": spec.values()[k - 1],
        "max_residual": spec.residuals().iter().copied().fold(0.0, f64::max),
        "aligned": alignment.as_ref().map_or(0, |r| r.len()),
    });
    out.json("summary.json", &summary)?;
    run.stage("write");
    Ok(())
}

fn write_curve(out: &mut OutDir, curve: &ErrorCurve) -> Result<()> {
    out.csv("curve.csv", |w| curve.write_csv(w))?;
    out.csv("medians.csv", |w| curve.write_medians_csv(w))
}

fn curve_plot(curve: &ErrorCurve, metric: &str) -> Option<String> {
    let series: Vec<Series> = curve
        .kernels()
        .into_iter()
        .map(|k| Series {
            points: curve.median_series(&k, metric).into_iter().map(|(n, v)| (n as f64, v)).collect(),
            name: k,
        })
        .filter(|s| !s.points.is_empty())
        .collect();
    (!series.is_empty()).then(|| line_plot(&format!("median {metric}"), "n", metric, &series))
}

fn cmd_converge(run: &mut Run, cfg: &SweepConfig, out: &mut OutDir) -> Result<()> {
    run.seeds = cfg.seeds.clone();
    if !cfg.supports_medians() {
        run.warn(format!("{} seeds are too few for median assertions", cfg.seeds.len()));
    }
    let curve = convergence_sweep(cfg, run.cli.jobs)?;
    run.stage("sweep");
    for f in &curve.failures {
        run.warn(format!("cell n={} seed={} kernel={} failed: {}", f.n, f.seed, f.kernel, f.message));
    }
    write_curve(out, &curve)?;
    let table = ComparisonTable::from_curve(&curve);
    out.csv("comparison.csv", |w| table.write_csv(w))?;
    for m in [metric::EVAL_ERR, metric::EFUN_ERR, metric::FILTER_ERR, metric::GNN_ERR] {
        if let Some(svg) = curve_plot(&curve, m) {
            out.write(&format!("{m}.svg"), svg.as_bytes())?;
        }
    }

    let labels = cfg.kernel_labels();
    let label_of = |kind| cfg.kernels.iter().zip(&labels).find(|(k, _)| k.kind == kind).map(|(_, l)| l.clone());
    let mut soft = serde_json::Value::Null;
    if let (Some(d), Some(s)) = (label_of(KernelKind::DenseGaussian), label_of(KernelKind::SparseCompact)) {
        let check = dense_le_sparse(&table, &d, &s);
        for n in check.warnings() {
            run.warn(format!("{d} filter_err median exceeds {s} at n={n}"));
        }
        if cfg.supports_medians() {
            run.checks.push(Check {
                name: format!("{d} filter_err <= {s} at some n"),
                passed: check.passed(),
                hard: true,
                detail: format!("{:?}", check.per_n),
            });
        }
        soft = serde_json::json!(check.per_n);
    }

    if run.cli.regen_oracle {
        let section = ConvergeOracle::from_curve(&curve);
        run.checks.extend(section.check(&curve));
        regen(out, |o| o.converge = Some(section))?;
    } else {
        match Oracle::bundled().converge.filter(|o| o.config_hash == curve.config_hash) {
            Some(o) => run.checks.extend(o.check(&curve)),
            None => no_fixture(run, &curve.config_hash),
        }
    }
    let summary = serde_json::json!({
        "config_hash": curve.config_hash,
        "rows": curve.rows.len(),
        "failures": curve.failures,
        "medians": curve.medians(),
        "dense_le_sparse": soft,
    });
    out.json("summary.json", &summary)?;
    run.stage("write");
    Ok(())
}

fn penalty_tag(c: f64) -> String {
    format!("c{c}")
}

fn write_model(out: &mut OutDir, name: &str, arch: &GnnArch) -> Result<()> {
    out.csv(name, |w| arch.write_checkpoint(w))
}

fn cmd_train(run: &mut Run, cfg: &RegressionConfig, out: &mut OutDir) -> Result<()> {
    run.seeds = std::iter::once(cfg.train_seed).chain(cfg.eval_seeds.iter().copied()).collect();
    let rep = lipschitz_tradeoff(cfg, run.cli.jobs)?;
    run.stage("train and evaluate");
    for f in &rep.curve.failures {
        run.warn(format!("cell n={} seed={} failed: {}", f.n, f.seed, f.message));
    }
    write_curve(out, &rep.curve)?;
    let mut losses = Vec::new();
    for (c, arch, tr) in &rep.models {
        let tag = penalty_tag(*c);
        out.csv(&format!("loss_{tag}.csv"), |w| tr.write_csv(w))?;
        write_model(out, &format!("model_{tag}.txt"), arch)?;
        losses.push(Series {
            name: format!("C_L = {c}"),
            points: tr.losses.iter().enumerate().map(|(e, &l)| ((e + 1) as f64, l)).collect(),
        });
    }
    out.write("loss.svg", line_plot("training loss", "epoch", "loss", &losses).as_bytes())?;

    let kernel = cfg.kernel.label();
    let n = *cfg.eval_n.last().expect("validated");
    let hash = rep.curve.config_hash.clone();
    if run.cli.regen_oracle {
        let section = TradeoffOracle::from_report(&hash, &kernel, n, &rep);
        run.checks.extend(section.check(&rep));
        regen(out, |o| o.tradeoff = Some(section))?;
    } else {
        match Oracle::bundled().tradeoff.filter(|o| o.config_hash == hash) {
            Some(o) => run.checks.extend(o.check(&rep)),
            None => no_fixture(run, &hash),
        }
    }
    let summary = serde_json::json!({
        "config_hash": hash,
        "kernel": kernel,
        "n": n,
        "penalty": rep.models.iter().map(|m| m.0).collect::<Vec<_>>(),
        "median_gnn_err": rep.medians_at(&kernel, n),
        "final_loss": rep.models.iter().map(|m| m.2.losses.last().copied()).collect::<Vec<_>>(),
        "medians": rep.curve.medians(),
    });
    out.json("summary.json", &summary)?;
    run.stage("write");
    Ok(())
}

fn cmd_transfer(run: &mut Run, cfg: &RegressionConfig, out: &mut OutDir) -> Result<()> {
    run.seeds = std::iter::once(cfg.train_seed).chain(cfg.eval_seeds.iter().copied()).collect();
    let arch = match &cfg.checkpoint {
        Some(p) => {
            let f = std::fs::File::open(p)
                .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{p}: {e}"))))?;
            GnnArch::read_checkpoint(std::io::BufReader::new(f))?
        }
        None => {
            let (arch, tr) = train_regression(cfg, cfg.transfer_penalty)?;
            out.csv("loss.csv", |w| tr.write_csv(w))?;
            arch
        }
    };
    run.stage("model");
    write_model(out, "model.txt", &arch)?;
    let curve = transferability_eval(&arch, cfg, cfg.mode, run.cli.jobs)?;
    run.stage("transfer");
    for f in &curve.failures {
        run.warn(format!("cell n={} seed={} failed: {}", f.n, f.seed, f.message));
    }
    write_curve(out, &curve)?;
    if let Some(svg) = curve_plot(&curve, tmetric::TRANSFER_DIFF) {
        out.write("transfer_diff.svg", svg.as_bytes())?;
    }
    let kernel = cfg.kernel.label();
    if run.cli.regen_oracle {
        let section = TransferOracle::from_curve(&kernel, &cfg.transfer_n, &curve);
        run.checks.extend(section.check(&curve));
        regen(out, |o| o.transfer = Some(section))?;
    } else {
        match Oracle::bundled().transfer.filter(|o| o.config_hash == curve.config_hash) {
            Some(o) => run.checks.extend(o.check(&curve)),
            None => no_fixture(run, &curve.config_hash),
        }
    }
    let summary = serde_json::json!({
        "config_hash": curve.config_hash,
        "mode": cfg.mode.name(),
        "medians": curve.medians(),
    });
    out.json("summary.json", &summary)?;
    run.stage("write");
    Ok(())
}

fn cmd_classify(run: &mut Run, cfg: &ClassifyConfig, out: &mut OutDir) -> Result<()> {
    run.seeds = std::iter::once(cfg.seed).chain(cfg.init_seeds.iter().copied()).collect();
    let (rep, models) = classify_experiment(cfg, run.cli.jobs)?;
    run.stage("train and test");
    out.csv("accuracy.csv", |w| rep.write_csv(w))?;
    for (kind, init, arch) in &models {
        write_model(out, &format!("model_{}_{init}.txt", kind.name()), arch)?;
    }
    let hash = hash_snapshot(&snapshot(cfg));
    if run.cli.regen_oracle {
        let section = ClassifyOracle::from_report(&hash, cfg.n, &cfg.transfer_n, &rep);
        run.checks.extend(section.check(&rep));
        regen(out, |o| o.classify = Some(section))?;
    } else {
        match Oracle::bundled().classify.filter(|o| o.config_hash == hash) {
            Some(o) => run.checks.extend(o.check(&rep)),
            None => no_fixture(run, &hash),
        }
    }
    let sizes: Vec<usize> = std::iter::once(cfg.n).chain(cfg.transfer_n.iter().copied()).collect();
    let rep_ref = &rep;
    let medians: Vec<serde_json::Value> = ModelKind::ALL
        .iter()
        .flat_map(|&m| {
            sizes
                .iter()
                .map(move |&n| serde_json::json!({"model": m.name(), "n": n, "accuracy": rep_ref.median_accuracy(m, n)}))
        })
        .collect();
    let summary = serde_json::json!({
        "config_hash": hash,
        "median_accuracy": medians,
        "final_losses": rep.final_losses,
    });
    out.json("summary.json", &summary)?;
    run.stage("write");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_configs_match_defaults() {
        let s: SweepConfig = parse_config(DEFAULT_CONVERGE).unwrap();
        assert_eq!(s, SweepConfig::default_circle());
        let t: RegressionConfig = parse_config(DEFAULT_TRAIN).unwrap();
        assert_eq!(t, RegressionConfig::default());
        let t: RegressionConfig = parse_config(DEFAULT_TRANSFER).unwrap();
        assert_eq!(t, RegressionConfig::default());
        let c: ClassifyConfig = parse_config(DEFAULT_CLASSIFY).unwrap();
        assert_eq!(c, ClassifyConfig::default());
        let p: SpectrumConfig = parse_config(DEFAULT_SPECTRUM).unwrap();
        p.validate().unwrap();
    }

    #[test]
    fn k_is_clamped_to_n() {
        let mut c: SpectrumConfig = parse_config(DEFAULT_SPECTRUM).unwrap();
        c.k = Some(500);
        let (k, w) = c.resolved_k();
        assert_eq!(k, c.n);
        assert!(w.unwrap().contains("clamped"));
        c.k = None;
        assert_eq!(c.resolved_k(), (100, None));
    }

    #[test]
    fn missing_field_is_named() {
        let e = parse_config::<SpectrumConfig>("manifold = \"circle\"").unwrap_err();
        assert!(e.to_string().contains("`n`"), "{e}");
    }

    #[test]
    fn out_dir_rejects_escapes() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutDir::create(dir.path().to_path_buf()).unwrap();
        assert!(out.write("../x", b"").is_err());
        assert!(out.write("/tmp/x", b"").is_err());
        out.write("a.csv", b"1\n").unwrap();
        out.write("a.csv", b"2\n").unwrap();
        assert_eq!(out.files, vec!["a.csv"]);
        assert_eq!(std::fs::read_to_string(dir.path().join("a.csv")).unwrap(), "2\n");
    }
}
