//! Reference expectations recorded from pilot runs of the bundled configs.
//!
//! Each command checks its output against the section whose config hash
//! matches its own; other configs have nothing to check. A pilot run
//! with `--regen-oracle` writes a fresh section.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::classify::{ClassifyReport, ModelKind};
use super::curve::{non_increasing, strictly_decreasing, ErrorCurve};
use super::transfer::{metric as tmetric, TradeoffReport};
use crate::Result;

/// Relative tolerance on committed medians.
pub const MEDIAN_TOLERANCE: f64 = 0.2;
/// Largest allowed accuracy loss when moving to larger test clouds.
pub const MAX_TRANSFER_DROP: f64 = 0.10;
/// Margin between the pilot accuracy and the committed threshold.
pub const ACCURACY_MARGIN: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesKey {
    pub kernel: String,
    pub metric: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MedianEntry {
    pub kernel: String,
    pub metric: String,
    pub n: usize,
    pub median: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergeOracle {
    pub config_hash: String,
    pub medians: Vec<MedianEntry>,
    /// Series whose medians must strictly decrease in `n`.
    pub decreasing: Vec<SeriesKey>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOracle {
    pub config_hash: String,
    pub n: usize,
    /// Pilot median accuracies per model at `n`.
    pub pilot: Vec<(ModelKind, f64)>,
    /// Minimum median GNN accuracy at `n`.
    pub threshold: f64,
    /// Sizes of the transfer test clouds.
    pub transfer_n: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffOracle {
    pub config_hash: String,
    pub kernel: String,
    pub n: usize,
    pub penalty: Vec<f64>,
    pub medians: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferOracle {
    pub config_hash: String,
    pub kernel: String,
    pub n: Vec<usize>,
    pub medians: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Oracle {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converge: Option<ConvergeOracle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classify: Option<ClassifyOracle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tradeoff: Option<TradeoffOracle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer: Option<TransferOracle>,
}

pub const BUNDLED: &str = include_str!("../../fixtures/oracle.json");

impl Oracle {
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED).expect("bundled oracle parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("oracle serialises");
        s.push('\n');
        s
    }
}

/// Result of checking one assertion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Soft checks only warn.
    pub hard: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, hard: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, hard, detail: detail.into() }
    }
}

/// True when no hard check failed.
pub fn all_hard_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed || !c.hard)
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(f64::MIN_POSITIVE)
}

/// Series whose decrease the bundled convergence fixture asserts.
pub fn required_decreasing() -> Vec<SeriesKey> {
    ["eval_err", "efun_err", "filter_err", "gnn_err"]
        .iter()
        .map(|m| SeriesKey { kernel: "dense".into(), metric: m.to_string() })
        .collect()
}

impl ConvergeOracle {
    pub fn from_curve(curve: &ErrorCurve) -> Self {
        ConvergeOracle {
            config_hash: curve.config_hash.clone(),
            medians: curve
                .medians()
                .into_iter()
                .map(|m| MedianEntry { kernel: m.kernel, metric: m.metric, n: m.n, median: m.median })
                .collect(),
            decreasing: required_decreasing(),
        }
    }

    pub fn check(&self, curve: &ErrorCurve) -> Vec<Check> {
        let mut out = Vec::new();
        for key in &self.decreasing {
            let s = curve.median_series(&key.kernel, &key.metric);
            out.push(Check::new(
                format!("{}/{} decreasing", key.kernel, key.metric),
                s.len() >= 2 && strictly_decreasing(&s),
                true,
                format!("{s:?}"),
            ));
        }
        let mut off = Vec::new();
        for e in &self.medians {
            match curve.median(&e.kernel, &e.metric, e.n) {
                Some(v) if rel_close(v, e.median, MEDIAN_TOLERANCE) => {}
                Some(v) => off.push(format!("{}/{}@{}: {v:e} vs {:e}", e.kernel, e.metric, e.n, e.median)),
                None => off.push(format!("{}/{}@{}: missing", e.kernel, e.metric, e.n)),
            }
        }
        out.push(Check::new("medians match fixture", off.is_empty(), true, off.join("; ")));
        out
    }
}

impl ClassifyOracle {
    pub fn from_report(hash: &str, n: usize, transfer_n: &[usize], rep: &ClassifyReport) -> Self {
        let pilot: Vec<(ModelKind, f64)> =
            ModelKind::ALL.iter().filter_map(|&m| Some((m, rep.median_accuracy(m, n)?))).collect();
        let gnn = rep.median_accuracy(ModelKind::Gnn, n).unwrap_or(0.0);
        let threshold = ((gnn - ACCURACY_MARGIN) * 100.0).floor() / 100.0;
        ClassifyOracle { config_hash: hash.to_string(), n, pilot, threshold, transfer_n: transfer_n.to_vec() }
    }

    fn pilot_of(&self, m: ModelKind) -> Option<f64> {
        self.pilot.iter().find(|(k, _)| *k == m).map(|(_, v)| *v)
    }

    pub fn check(&self, rep: &ClassifyReport) -> Vec<Check> {
        let mut out = Vec::new();
        let acc = rep.median_accuracy(ModelKind::Gnn, self.n).unwrap_or(0.0);
        out.push(Check::new(
            "gnn accuracy above threshold",
            acc >= self.threshold,
            true,
            format!("{acc} >= {}", self.threshold),
        ));
        let pilot = self.pilot_of(ModelKind::Gnn).unwrap_or(acc);
        for &n in &self.transfer_n {
            let t = rep.median_accuracy(ModelKind::Gnn, n).unwrap_or(0.0);
            out.push(Check::new(
                format!("gnn transfer to n={n}"),
                pilot - t <= MAX_TRANSFER_DROP + 1e-12,
                true,
                format!("pilot {pilot} -> {t}"),
            ));
        }
        let med = |m| rep.median_accuracy(m, self.n).unwrap_or(0.0);
        let (gf, gnn, lip) = (med(ModelKind::GraphFilter), med(ModelKind::Gnn), med(ModelKind::LipschitzGnn));
        out.push(Check::new(
            "lipschitz_gnn >= gnn >= graph_filter",
            lip >= gnn && gnn >= gf,
            false,
            format!("{lip} / {gnn} / {gf}"),
        ));
        out
    }
}

impl TradeoffOracle {
    pub fn from_report(hash: &str, kernel: &str, n: usize, rep: &TradeoffReport) -> Self {
        TradeoffOracle {
            config_hash: hash.to_string(),
            kernel: kernel.to_string(),
            n,
            penalty: rep.models.iter().map(|m| m.0).collect(),
            medians: rep.medians_at(kernel, n),
        }
    }

    pub fn check(&self, rep: &TradeoffReport) -> Vec<Check> {
        let med = rep.medians_at(&self.kernel, self.n);
        let mut off = Vec::new();
        for (a, b) in med.iter().zip(&self.medians) {
            if !rel_close(*a, *b, MEDIAN_TOLERANCE) {
                off.push(format!("{a:e} vs {b:e}"));
            }
        }
        vec![
            Check::new("error non-increasing in C_L", non_increasing(&med), true, format!("{med:?}")),
            Check::new("medians match fixture", off.is_empty() && med.len() == self.medians.len(), true, off.join("; ")),
        ]
    }
}

impl TransferOracle {
    pub fn from_curve(kernel: &str, n: &[usize], curve: &ErrorCurve) -> Self {
        TransferOracle {
            config_hash: curve.config_hash.clone(),
            kernel: kernel.to_string(),
            n: n.to_vec(),
            medians: transfer_medians(curve, kernel, n),
        }
    }

    pub fn check(&self, curve: &ErrorCurve) -> Vec<Check> {
        let med = transfer_medians(curve, &self.kernel, &self.n);
        vec![Check::new("transfer difference non-increasing in n", non_increasing(&med), true, format!("{med:?}"))]
    }
}

fn transfer_medians(curve: &ErrorCurve, kernel: &str, ns: &[usize]) -> Vec<f64> {
    ns.iter().map(|&n| curve.median(kernel, tmetric::TRANSFER_DIFF, n).unwrap_or(f64::NAN)).collect()
}
