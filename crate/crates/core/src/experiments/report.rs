//! Side-by-side medians of the dense and sparse regimes.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::config::SweepConfig;
use super::curve::ErrorCurve;
use super::sweep::{convergence_sweep, metric};
use crate::geograph::KernelKind;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub n: usize,
    pub kernel: String,
    /// Median of every metric over seeds, average degree included.
    pub medians: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub metrics: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    /// One row per `(n, kernel)`.
    pub fn from_curve(curve: &ErrorCurve) -> Self {
        let metrics = curve.metrics();
        let mut rows: BTreeMap<(usize, String), BTreeMap<String, f64>> = BTreeMap::new();
        for m in curve.medians() {
            rows.entry((m.n, m.kernel)).or_default().insert(m.metric, m.median);
        }
        ComparisonTable {
            metrics,
            rows: rows.into_iter().map(|((n, kernel), medians)| ComparisonRow { n, kernel, medians }).collect(),
        }
    }

    pub fn get(&self, n: usize, kernel: &str, metric: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.n == n && r.kernel == kernel).and_then(|r| r.medians.get(metric).copied())
    }

    /// For each `n`, whether the `a` median of `metric` is at most the `b`
    /// median.
    pub fn compare(&self, metric: &str, a: &str, b: &str) -> Vec<(usize, bool)> {
        let mut ns: Vec<usize> = self.rows.iter().map(|r| r.n).collect();
        ns.dedup();
        ns.into_iter()
            .filter_map(|n| Some((n, self.get(n, a, metric)? <= self.get(n, b, metric)?)))
            .collect()
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "n,kernel,{}", self.metrics.join(","))?;
        for r in &self.rows {
            let cells: Vec<String> =
                self.metrics.iter().map(|m| r.medians.get(m).map_or(String::new(), |v| format!("{v:e}"))).collect();
            writeln!(w, "{},{},{}", r.n, r.kernel, cells.join(","))?;
        }
        Ok(())
    }
}

/// Runs the sweep and tabulates dense against sparse medians.
pub fn densevs_sparse_report(cfg: &SweepConfig, jobs: Option<usize>) -> Result<(ErrorCurve, ComparisonTable)> {
    for kind in [KernelKind::DenseGaussian, KernelKind::SparseCompact] {
        if !cfg.kernels.iter().any(|k| k.kind == kind) {
            return Err(Error::config("kernels", format!("the comparison needs a {kind} kernel")));
        }
    }
    let curve = convergence_sweep(cfg, jobs)?;
    let table = ComparisonTable::from_curve(&curve);
    Ok((curve, table))
}

/// Outcome of the soft dense-versus-sparse filter-error check: a miss at
/// some `n` is a warning, a miss at every `n` a failure.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftCheck {
    pub per_n: Vec<(usize, bool)>,
}

impl SoftCheck {
    pub fn passed(&self) -> bool {
        self.per_n.iter().any(|(_, ok)| *ok)
    }

    pub fn warnings(&self) -> Vec<usize> {
        self.per_n.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect()
    }
}

pub fn dense_le_sparse(table: &ComparisonTable, dense: &str, sparse: &str) -> SoftCheck {
    SoftCheck { per_n: table.compare(metric::FILTER_ERR, dense, sparse) }
}
