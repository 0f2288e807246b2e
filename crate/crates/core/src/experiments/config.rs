//! Experiment configuration files.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::filterbank::FilterCoeffs;
use crate::geograph::{EpsRule, KernelConfig, KernelKind};
use crate::gnn::{GnnArch, Nonlinearity, Optimizer, TrainConfig};
use crate::manifold::{ManifoldKind, ManifoldModel, ManifoldSignal, DEFAULT_TRUNCATION};
use crate::{Error, Result};

/// Kernel entry of a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Defaults to the rate matching `kind`, or `manual` when `eps` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<EpsRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    /// Weight scale; defaults to the calibration of
    /// [`KernelConfig::for_manifold`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    /// Name used in curves and reports; defaults to `dense` / `sparse`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl KernelSpec {
    pub fn dense() -> Self {
        KernelSpec { kind: KernelKind::DenseGaussian, rule: None, eps: None, scale: None, label: None }
    }

    pub fn sparse() -> Self {
        KernelSpec { kind: KernelKind::SparseCompact, ..Self::dense() }
    }

    pub fn rule(&self) -> EpsRule {
        match (self.rule, self.eps, self.kind) {
            (Some(r), _, _) => r,
            (None, Some(_), _) => EpsRule::Manual,
            (None, None, KernelKind::DenseGaussian) => EpsRule::DenseRate,
            (None, None, KernelKind::SparseCompact) => EpsRule::SparseRate,
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.to_string())
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if self.rule() == EpsRule::Manual && !self.eps.is_some_and(|e| e > 0.0 && e.is_finite()) {
            return Err(Error::config(format!("{field}.eps"), "a manual rule needs a positive eps"));
        }
        if let Some(s) = self.scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config(format!("{field}.scale"), "must be positive"));
            }
        }
        Ok(())
    }

    /// Unresolved kernel config for graphs sampled from `m`.
    pub fn kernel(&self, m: &ManifoldModel) -> KernelConfig {
        let mut cfg = KernelConfig::for_manifold(self.kind, self.rule(), m);
        if let Some(e) = self.eps {
            cfg.eps = e;
        }
        if let Some(s) = self.scale {
            cfg.scale = s;
        }
        cfg
    }
}

/// Filter taps `h_k` with diffusion step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub taps: Vec<f64>,
    #[serde(default = "one")]
    pub step: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec { taps: vec![0.0, 1.0], step: 1.0 }
    }
}

impl FilterSpec {
    pub fn coeffs(&self) -> Result<FilterCoeffs> {
        FilterCoeffs::with_step(self.taps.clone(), self.step).map_err(|e| Error::config("filter", e.to_string()))
    }
}

/// Manifold input signal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    /// Coefficients over the canonical eigenbasis, constant first.
    pub coeffs: Vec<f64>,
}

impl Default for SignalSpec {
    fn default() -> Self {
        // cos(theta) / sqrt(pi) on the circle
        SignalSpec { coeffs: vec![0.0, 1.0] }
    }
}

impl SignalSpec {
    /// The signal with its coefficients zero-padded to `len` modes.
    pub fn signal(&self, m: &ManifoldModel, len: usize) -> Result<ManifoldSignal> {
        let mut c = self.coeffs.clone();
        if c.len() < len {
            c.resize(len, 0.0);
        }
        ManifoldSignal::spectral(m, c).map_err(|e| Error::config("signal.coeffs", e.to_string()))
    }
}

/// Layer widths, taps and initialisation of a GNN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub widths: Vec<usize>,
    pub taps: usize,
    #[serde(default = "relu")]
    pub nonlinearity: Nonlinearity,
    #[serde(default = "one")]
    pub step: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

fn relu() -> Nonlinearity {
    Nonlinearity::Relu
}

impl ArchSpec {
    pub fn build(&self) -> Result<GnnArch> {
        GnnArch::random(self.widths.clone(), self.taps, self.nonlinearity, self.seed)
            .and_then(|a| a.with_step(self.step))
            .map_err(|e| Error::config("arch", e.to_string()))
    }
}

/// Optimiser settings shared by the training commands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_penalty_points")]
    pub penalty_points: usize,
    #[serde(default = "default_adam")]
    pub adam: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_lr() -> f64 {
    0.005
}
fn default_epochs() -> usize {
    40
}
fn default_batch() -> usize {
    10
}
fn default_penalty_points() -> usize {
    64
}
fn default_adam() -> bool {
    true
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            learning_rate: default_lr(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            penalty_points: default_penalty_points(),
            adam: true,
            seed: 0,
        }
    }
}

impl TrainSettings {
    pub fn to_config(&self, loss: crate::gnn::Loss, penalty_weight: f64) -> TrainConfig {
        TrainConfig {
            loss,
            optimizer: if self.adam { Optimizer::adam() } else { Optimizer::Sgd },
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            penalty_weight,
            penalty_points: self.penalty_points,
            lambda_max: None,
            seed: self.seed,
        }
    }
}

/// Parameters of a convergence sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub manifold: ManifoldKind,
    pub n: Vec<usize>,
    pub seeds: Vec<u64>,
    pub kernels: Vec<KernelSpec>,
    #[serde(default)]
    pub filter: FilterSpec,
    #[serde(default)]
    pub signal: SignalSpec,
    /// Random frozen GNN whose convergence error is measured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch: Option<ArchSpec>,
    #[serde(default = "default_truncation")]
    pub truncation: usize,
    /// Quadrature nodes for manifold-side evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<usize>,
    /// Number of leading eigenpairs compared; `0` skips the spectral metrics.
    #[serde(default = "default_eig_k")]
    pub eig_k: usize,
    /// Separations for the FDT metrics of `filter`.
    #[serde(default)]
    pub alpha: Vec<f64>,
    /// Penalty weights, used by the Lipschitz trade-off experiment.
    #[serde(default)]
    pub penalty: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

fn default_truncation() -> usize {
    DEFAULT_TRUNCATION
}
fn default_eig_k() -> usize {
    5
}

/// Fewest seeds for which median statistics are asserted.
pub const MIN_MEDIAN_SEEDS: usize = 3;

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n.is_empty() {
            return Err(Error::config("n", "grid is empty"));
        }
        if self.n[0] < 2 {
            return Err(Error::config("n", "every graph needs at least 2 nodes"));
        }
        if self.n.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("n", "grid must be strictly ascending"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("seeds", "seeds must be distinct"));
        }
        if self.kernels.is_empty() {
            return Err(Error::config("kernels", "need at least one kernel"));
        }
        for (i, k) in self.kernels.iter().enumerate() {
            k.validate(&format!("kernels[{i}]"))?;
        }
        self.filter.coeffs()?;
        self.signal.signal(&ManifoldModel::new(self.manifold), self.truncation)?;
        if self.truncation == 0 {
            return Err(Error::config("truncation", "must be at least 1"));
        }
        if self.signal.coeffs.len() > self.truncation {
            return Err(Error::config("signal.coeffs", "longer than the truncation"));
        }
        if let Some(a) = &self.arch {
            a.build()?;
            if a.widths.first() != Some(&1) {
                return Err(Error::config("arch.widths", "the sweep feeds a single input signal"));
            }
        }
        if self.quadrature == Some(0) {
            return Err(Error::config("quadrature", "must be positive"));
        }
        if self.alpha.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::config("alpha", "separations must be positive"));
        }
        if self.penalty.iter().any(|c| !(*c >= 0.0 && c.is_finite())) {
            return Err(Error::config("penalty", "weights must be nonnegative"));
        }
        Ok(())
    }

    pub fn model(&self) -> ManifoldModel {
        ManifoldModel::new(self.manifold)
    }

    /// Whether per-n medians are meaningful enough to assert on.
    pub fn supports_medians(&self) -> bool {
        self.seeds.len() >= MIN_MEDIAN_SEEDS
    }

    /// Distinct curve labels, one per kernel; repeated labels get a
    /// `#index` suffix.
    pub fn kernel_labels(&self) -> Vec<String> {
        let base: Vec<String> = self.kernels.iter().map(KernelSpec::label).collect();
        base.iter()
            .enumerate()
            .map(|(i, l)| {
                if base.iter().filter(|b| *b == l).count() > 1 {
                    format!("{l}#{}", i + 1)
                } else {
                    l.clone()
                }
            })
            .collect()
    }

    /// The bundled default: circle, dense and sparse kernels.
    pub fn default_circle() -> Self {
        toml::from_str(DEFAULT_CONVERGE).expect("bundled config parses")
    }
}

/// Bundled `converge` configuration.
pub const DEFAULT_CONVERGE: &str = include_str!("../../configs/converge.toml");

/// Parses a TOML config. Missing and unknown fields are reported by name.
pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Parse(e.message().to_string()))
}

pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

/// Canonical JSON snapshot of a config; hashing this string reproduces
/// [`config_hash`].
pub fn snapshot<T: Serialize>(cfg: &T) -> String {
    serde_json::to_string_pretty(cfg).expect("configs serialise")
}

/// First 16 hex digits of the SHA-256 of the snapshot.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    hash_snapshot(&snapshot(cfg))
}

pub fn hash_snapshot(snapshot: &str) -> String {
    let digest = Sha256::digest(snapshot.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
