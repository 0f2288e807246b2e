//! Trained regression models: the smoothness trade-off and transfer
//! between graphs sampled from one manifold.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{config_hash, ArchSpec, KernelSpec, TrainSettings};
use super::curve::ErrorCurve;
use super::sweep::with_jobs;
use super::task::RegressionTask;
use crate::diffusion::{Diffusion, SeriesDiffusion, SpectralDiffusion};
use crate::filterbank::{lipschitz_estimate, LipschitzMethod};
use crate::geograph::{build_graph, PointCloud};
use crate::gnn::{
    gnn_convergence_error_with, gnn_forward_with, readout_retrain, train, GnnArch, Loss, Nonlinearity, Pooling,
    TrainReport,
};
use crate::manifold::{lb_spectrum, sample_signal, sample_uniform, ManifoldModel, MnnOptions, Quadrature, DEFAULT_TRUNCATION};
use crate::spectral::DENSE_LIMIT;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMode {
    /// Every parameter as trained.
    Frozen,
    /// Filters as trained, readout refit on the target graph.
    ReadoutRetrain,
}

impl TransferMode {
    pub fn name(self) -> &'static str {
        match self {
            TransferMode::Frozen => "frozen",
            TransferMode::ReadoutRetrain => "readout_retrain",
        }
    }
}

/// Regression training, trade-off and transfer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionConfig {
    #[serde(default)]
    pub task: RegressionTask,
    #[serde(default = "default_kernel")]
    pub kernel: KernelSpec,
    /// Size and seed of the training graph.
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default)]
    pub train_seed: u64,
    #[serde(default = "default_arch")]
    pub arch: ArchSpec,
    #[serde(default = "default_train")]
    pub train: TrainSettings,
    /// Penalty weights `C_L`; one model is trained per weight.
    #[serde(default = "default_penalty")]
    pub penalty: Vec<f64>,
    /// Graph sizes and seeds for the convergence error of trained models.
    #[serde(default = "default_eval_n")]
    pub eval_n: Vec<usize>,
    #[serde(default = "default_eval_seeds")]
    pub eval_seeds: Vec<u64>,
    /// Graph sizes for transfer from the training graph.
    #[serde(default = "default_transfer_n")]
    pub transfer_n: Vec<usize>,
    #[serde(default = "default_mode")]
    pub mode: TransferMode,
    /// Penalty weight of the model the `transfer` command trains.
    #[serde(default)]
    pub transfer_penalty: f64,
    /// Model checkpoint the `transfer` command loads instead of training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    #[serde(default = "default_truncation")]
    pub truncation: usize,
    #[serde(default = "default_quadrature")]
    pub quadrature: usize,
}

fn default_kernel() -> KernelSpec {
    KernelSpec::dense()
}
fn default_n_train() -> usize {
    250
}
fn default_arch() -> ArchSpec {
    ArchSpec { widths: vec![1, 4, 2], taps: 5, nonlinearity: Nonlinearity::Relu, step: 0.5, seed: 0 }
}
fn default_train() -> TrainSettings {
    TrainSettings { learning_rate: 0.01, epochs: 60, batch_size: 8, ..TrainSettings::default() }
}
fn default_penalty() -> Vec<f64> {
    vec![0.0, 0.3, 1.0, 3.0]
}
fn default_eval_n() -> Vec<usize> {
    vec![1000]
}
fn default_eval_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}
fn default_transfer_n() -> Vec<usize> {
    vec![500, 1000, 2000]
}
fn default_mode() -> TransferMode {
    TransferMode::Frozen
}
fn default_truncation() -> usize {
    DEFAULT_TRUNCATION
}
fn default_quadrature() -> usize {
    2048
}

impl Default for RegressionConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

/// Seeds of the graphs the trained model is evaluated on are offset from
/// the training seed so they are fresh samples.
pub const EVAL_SEED_OFFSET: u64 = 1000;

impl RegressionConfig {
    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.kernel.validate("kernel")?;
        self.arch.build()?;
        if self.arch.widths.first() != Some(&1) {
            return Err(Error::config("arch.widths", "regression inputs have one feature"));
        }
        if self.n_train < 2 {
            return Err(Error::config("n_train", "must be at least 2"));
        }
        if self.penalty.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(Error::config("penalty", "weights must be nonnegative"));
        }
        if !(self.transfer_penalty >= 0.0 && self.transfer_penalty.is_finite()) {
            return Err(Error::config("transfer_penalty", "must be nonnegative"));
        }
        if self.eval_n.iter().chain(&self.transfer_n).any(|&n| n < 2) {
            return Err(Error::config("eval_n", "graphs need at least 2 nodes"));
        }
        if self.truncation < self.task.modes {
            return Err(Error::config("truncation", "must cover the task's input modes"));
        }
        if self.quadrature < 64 {
            return Err(Error::config("quadrature", "must be at least 64"));
        }
        Ok(())
    }

    pub fn model(&self) -> ManifoldModel {
        self.task.model()
    }

    fn cloud(&self, n: usize, seed: u64) -> Result<PointCloud> {
        sample_uniform(&self.model(), n, seed)
    }

    fn diffusion(&self, cloud: &PointCloud, step: f64, spectral: bool) -> Result<Arc<dyn Diffusion>> {
        let g = build_graph(cloud, &self.kernel.kernel(&self.model()).resolve(cloud.len())?)?;
        Ok(if spectral && cloud.len() <= DENSE_LIMIT {
            Arc::new(SpectralDiffusion::new(&g, step)?)
        } else {
            Arc::new(SeriesDiffusion::new(&g, step))
        })
    }

    /// Initial model: the configured filters and a node-level readout.
    pub fn initial_arch(&self) -> Result<GnnArch> {
        self.arch.build()?.with_readout(1, Pooling::None, self.arch.seed.wrapping_add(1))
    }

    fn mnn_options(&self) -> MnnOptions {
        MnnOptions::new(self.truncation, self.quadrature)
    }
}

/// Trains the regression model with penalty weight `c_l` on the training
/// graph.
pub fn train_regression(cfg: &RegressionConfig, c_l: f64) -> Result<(GnnArch, TrainReport)> {
    cfg.validate()?;
    let cloud = cfg.cloud(cfg.n_train, cfg.train_seed)?;
    let diff = cfg.diffusion(&cloud, cfg.arch.step, true)?;
    let data = cfg.task.dataset(&cloud, diff)?;
    let tc = cfg.train.to_config(Loss::Mse, c_l);
    train(&cfg.initial_arch()?, &data, &tc)
}

pub mod metric {
    pub const GNN_ERR: &str = "gnn_err";
    pub const LIPSCHITZ: &str = "lipschitz_max";
    pub const TRAIN_LOSS: &str = "train_loss";
    pub const TRANSFER_DIFF: &str = "transfer_diff";
    pub const TRANSFER_LOSS: &str = "transfer_loss";

    pub fn with_penalty(name: &str, c_l: f64) -> String {
        format!("{name}@C_L={c_l}")
    }
}

/// One trained model per penalty weight.
#[derive(Clone, Debug)]
pub struct TradeoffReport {
    pub curve: ErrorCurve,
    pub models: Vec<(f64, GnnArch, TrainReport)>,
}

impl TradeoffReport {
    /// Median convergence error at `n`, in penalty order.
    pub fn medians_at(&self, kernel: &str, n: usize) -> Vec<f64> {
        self.models
            .iter()
            .map(|(c, _, _)| self.curve.median(kernel, &metric::with_penalty(metric::GNN_ERR, *c), n).unwrap_or(f64::NAN))
            .collect()
    }
}

/// Trains one model per penalty weight and measures the convergence error
/// of its filters and nonlinearities (readout excluded) on fresh graphs.
pub fn lipschitz_tradeoff(cfg: &RegressionConfig, jobs: Option<usize>) -> Result<TradeoffReport> {
    cfg.validate()?;
    let m = cfg.model();
    let probe = cfg.task.probe()?;
    let label = cfg.kernel.label();
    let lambda_top = lb_spectrum(&m, cfg.truncation)?.last().expect("truncation >= 1").eigenvalue;
    let models: Vec<Result<(f64, GnnArch, TrainReport)>> = with_jobs(jobs, || {
        cfg.penalty
            .par_iter()
            .map(|&c| train_regression(cfg, c).map(|(a, r)| (c, a, r)))
            .collect()
    })?;
    let models: Vec<(f64, GnnArch, TrainReport)> = models.into_iter().collect::<Result<_>>()?;

    let cells: Vec<(usize, u64)> =
        cfg.eval_n.iter().flat_map(|&n| cfg.eval_seeds.iter().map(move |&s| (n, s))).collect();
    let errs: Vec<Result<(usize, u64, f64, Vec<f64>)>> = with_jobs(jobs, || {
        cells
            .par_iter()
            .map(|&(n, s)| {
                let seed = s + EVAL_SEED_OFFSET;
                let cloud = cfg.cloud(n, seed)?;
                let kernel = cfg.kernel.kernel(&m).resolve(n)?;
                let diff = cfg.diffusion(&cloud, cfg.arch.step, false)?;
                let mut out = Vec::with_capacity(models.len());
                for (_, arch, _) in &models {
                    let r = gnn_convergence_error_with(arch, diff.as_ref(), &cloud, &[probe.clone()], &m, cfg.mnn_options())?;
                    out.push(r.error);
                }
                Ok((n, seed, kernel.eps, out))
            })
            .collect()
    })?;

    let mut curve = ErrorCurve::new(config_hash(cfg));
    for r in errs {
        let (n, seed, eps, vals) = r?;
        for ((c, arch, _), v) in models.iter().zip(vals) {
            curve.push(n, seed, eps, &label, &metric::with_penalty(metric::GNN_ERR, *c), v);
            if n == cfg.eval_n[0] && seed == cfg.eval_seeds[0] + EVAL_SEED_OFFSET {
                let a_h = lipschitz_max(arch, lambda_top)?;
                curve.push(n, seed, eps, &label, &metric::with_penalty(metric::LIPSCHITZ, *c), a_h);
            }
        }
    }
    for (c, _, rep) in &models {
        let last = *rep.losses.last().expect("epochs >= 1");
        let eps = cfg.kernel.kernel(&m).resolve(cfg.n_train)?.eps;
        curve.push(cfg.n_train, cfg.train_seed, eps, &label, &metric::with_penalty(metric::TRAIN_LOSS, *c), last);
    }
    curve.sort();
    Ok(TradeoffReport { curve, models })
}

/// Largest Lipschitz constant over the filters of `arch` on
/// `[0, lambda_max]`.
fn lipschitz_max(arch: &GnnArch, lambda_max: f64) -> Result<f64> {
    let mut best = 0.0f64;
    for l in 0..arch.num_layers() {
        for p in 0..arch.widths()[l + 1] {
            for q in 0..arch.widths()[l] {
                let est = lipschitz_estimate(&arch.filter(l, p, q), lambda_max, LipschitzMethod::GridSup)?;
                best = best.max(est.a_h);
            }
        }
    }
    Ok(best)
}

/// Model output on one graph, with the interpolation lookup onto the
/// quadrature grid.
struct Evaluated {
    output: DMatrix<f64>,
    nearest: Vec<usize>,
}

fn evaluate(arch: &GnnArch, diff: &dyn Diffusion, cloud: &PointCloud, x: &DMatrix<f64>, quad: &Quadrature) -> Result<Evaluated> {
    let out = gnn_forward_with(arch, diff, x)?;
    let nearest = quad.nodes().map(|node| cloud.nearest(node)).collect();
    Ok(Evaluated { output: out.output().clone(), nearest })
}

/// `||I_a y_a - I_b y_b||_M` on the quadrature grid.
fn interpolated_distance(a: &Evaluated, b: &Evaluated, quad: &Quadrature) -> f64 {
    let vals: Vec<f64> = (0..quad.len())
        .map(|j| {
            let (ia, ib) = (a.nearest[j], b.nearest[j]);
            (0..a.output.ncols()).map(|c| (a.output[(ia, c)] - b.output[(ib, c)]).powi(2)).sum()
        })
        .collect();
    quad.integrate(&vals).max(0.0).sqrt()
}

/// Transfers `arch`, trained on the `(cfg.n_train, cfg.train_seed)` graph,
/// to graphs of every size in `cfg.transfer_n` and seed in
/// `cfg.eval_seeds`.
///
/// Rows hold `||I_{n1} Phi_1 - I_{n2} Phi_2||_M` for the task's probe input
/// and the task loss on the new graph. In readout-retrain mode the readout
/// is refit on the task's data sampled on the new graph; the training
/// graph itself keeps the trained readout.
pub fn transferability_eval(arch: &GnnArch, cfg: &RegressionConfig, mode: TransferMode, jobs: Option<usize>) -> Result<ErrorCurve> {
    cfg.validate()?;
    let m = cfg.model();
    let quad = Quadrature::new(&m, cfg.quadrature);
    let probe = cfg.task.probe()?;
    let base_cloud = cfg.cloud(cfg.n_train, cfg.train_seed)?;
    let base_diff = cfg.diffusion(&base_cloud, arch.step(), true)?;
    let px = |cloud: &PointCloud| DMatrix::from_column_slice(cloud.len(), 1, sample_signal(&probe, cloud).as_slice());
    let base = evaluate(arch, base_diff.as_ref(), &base_cloud, &px(&base_cloud), &quad)?;
    let label = cfg.kernel.label();

    let mut seeds = vec![cfg.train_seed];
    seeds.extend(cfg.eval_seeds.iter().map(|s| s + EVAL_SEED_OFFSET));
    let cells: Vec<(usize, u64)> =
        cfg.transfer_n.iter().flat_map(|&n| seeds.iter().map(move |&s| (n, s))).collect();
    let rows: Vec<Result<(usize, u64, f64, f64, f64)>> = with_jobs(jobs, || {
        cells
            .par_iter()
            .map(|&(n, seed)| {
                let cloud = cfg.cloud(n, seed)?;
                let eps = cfg.kernel.kernel(&m).resolve(n)?.eps;
                let diff = cfg.diffusion(&cloud, arch.step(), true)?;
                let data = cfg.task.dataset(&cloud, diff.clone())?;
                let same = n == cfg.n_train && seed == cfg.train_seed;
                let model = match mode {
                    TransferMode::ReadoutRetrain if !same => {
                        readout_retrain(arch, &data, &cfg.train.to_config(Loss::Mse, 0.0))?.0
                    }
                    _ => arch.clone(),
                };
                let ev = evaluate(&model, diff.as_ref(), &cloud, &px(&cloud), &quad)?;
                let loss = crate::gnn::dataset_loss(&model, &data, Loss::Mse)?;
                Ok((n, seed, eps, interpolated_distance(&base, &ev, &quad), loss))
            })
            .collect()
    })?;
    let mut curve = ErrorCurve::new(config_hash(&(cfg, mode)));
    for r in rows {
        let (n, seed, eps, d, loss) = r?;
        curve.push(n, seed, eps, &label, metric::TRANSFER_DIFF, d);
        curve.push(n, seed, eps, &label, metric::TRANSFER_LOSS, loss);
    }
    curve.sort();
    Ok(curve)
}
