//! Long-format error tables and their per-n medians.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub n: usize,
    pub seed: u64,
    pub eps: f64,
    pub kernel: String,
    pub metric: String,
    pub value: f64,
}

/// A sweep cell that failed; the sweep carries on without it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub n: usize,
    pub seed: u64,
    pub kernel: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MedianRow {
    pub kernel: String,
    pub metric: String,
    pub n: usize,
    pub median: f64,
    pub count: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorCurve {
    pub config_hash: String,
    pub rows: Vec<CurveRow>,
    pub failures: Vec<CellFailure>,
}

/// Median of a nonempty slice; the mean of the middle pair for even sizes.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty set");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

impl ErrorCurve {
    pub fn new(config_hash: impl Into<String>) -> Self {
        ErrorCurve { config_hash: config_hash.into(), rows: Vec::new(), failures: Vec::new() }
    }

    pub fn push(&mut self, n: usize, seed: u64, eps: f64, kernel: &str, metric: &str, value: f64) {
        self.rows.push(CurveRow { n, seed, eps, kernel: kernel.to_string(), metric: metric.to_string(), value });
    }

    /// Canonical order: kernel, metric, n, seed.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            (&a.kernel, &a.metric, a.n, a.seed).cmp(&(&b.kernel, &b.metric, b.n, b.seed))
        });
        self.failures.sort_by(|a, b| (&a.kernel, a.n, a.seed).cmp(&(&b.kernel, b.n, b.seed)));
    }

    pub fn kernels(&self) -> Vec<String> {
        let mut k: Vec<String> = self.rows.iter().map(|r| r.kernel.clone()).collect();
        k.sort();
        k.dedup();
        k
    }

    pub fn metrics(&self) -> Vec<String> {
        let mut m: Vec<String> = self.rows.iter().map(|r| r.metric.clone()).collect();
        m.sort();
        m.dedup();
        m
    }

    /// Values of one series at one `n`, in seed order.
    pub fn values(&self, kernel: &str, metric: &str, n: usize) -> Vec<f64> {
        let mut rows: Vec<&CurveRow> =
            self.rows.iter().filter(|r| r.kernel == kernel && r.metric == metric && r.n == n).collect();
        rows.sort_by_key(|r| r.seed);
        rows.iter().map(|r| r.value).collect()
    }

    pub fn medians(&self) -> Vec<MedianRow> {
        let mut groups: BTreeMap<(String, String, usize), Vec<f64>> = BTreeMap::new();
        for r in &self.rows {
            groups.entry((r.kernel.clone(), r.metric.clone(), r.n)).or_default().push(r.value);
        }
        groups
            .into_iter()
            .map(|((kernel, metric, n), v)| MedianRow { kernel, metric, n, median: median(&v), count: v.len() })
            .collect()
    }

    pub fn median(&self, kernel: &str, metric: &str, n: usize) -> Option<f64> {
        let v = self.values(kernel, metric, n);
        (!v.is_empty()).then(|| median(&v))
    }

    /// `(n, median)` in ascending `n`.
    pub fn median_series(&self, kernel: &str, metric: &str) -> Vec<(usize, f64)> {
        self.medians().into_iter().filter(|m| m.kernel == kernel && m.metric == metric).map(|m| (m.n, m.median)).collect()
    }

    /// Rows as `n,seed,eps,kernel,metric,value,config_hash`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "n,seed,eps,kernel,metric,value,config_hash")?;
        for r in &self.rows {
            writeln!(w, "{},{},{:e},{},{},{:e},{}", r.n, r.seed, r.eps, r.kernel, r.metric, r.value, self.config_hash)?;
        }
        Ok(())
    }

    pub fn write_medians_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "kernel,metric,n,median,count")?;
        for m in self.medians() {
            writeln!(w, "{},{},{},{:e},{}", m.kernel, m.metric, m.n, m.median, m.count)?;
        }
        Ok(())
    }
}

/// True when `series` strictly decreases.
pub fn strictly_decreasing(series: &[(usize, f64)]) -> bool {
    series.windows(2).all(|w| w[1].1 < w[0].1)
}

/// True when `series` never increases.
pub fn non_increasing(series: &[f64]) -> bool {
    series.windows(2).all(|w| w[1] <= w[0])
}
