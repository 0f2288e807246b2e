//! Convergence sweeps over `n x seed x kernel`.

use rayon::prelude::*;

use super::config::{config_hash, KernelSpec, SweepConfig};
use super::curve::{CellFailure, ErrorCurve};
use crate::diffusion::SeriesDiffusion;
use crate::filterbank::{fdt_check, filter_convergence_error_with};
use crate::geograph::build_graph;
use crate::gnn::gnn_convergence_error_with;
use crate::manifold::{sample_uniform, MnnOptions};
use crate::spectral::{align_spectra, alpha_partition, eig_sym};
use crate::{Error, Result};

/// Metric names written by [`convergence_sweep`].
pub mod metric {
    pub const AVG_DEGREE: &str = "avg_degree";
    pub const EVAL_ERR: &str = "eval_err";
    pub const EFUN_ERR: &str = "efun_err";
    pub const OP_ERR: &str = "op_err";
    pub const FILTER_ERR: &str = "filter_err";
    pub const GNN_ERR: &str = "gnn_err";
    pub const GNN_BOUND: &str = "gnn_bound_shape";

    pub fn fdt_gamma(alpha: f64) -> String {
        format!("fdt_gamma@{alpha}")
    }

    pub fn fdt_groups(alpha: f64) -> String {
        format!("fdt_groups@{alpha}")
    }
}

/// Extra eigenpairs computed beyond `eig_k` so a cluster cut at `eig_k`
/// can be completed.
const CLUSTER_MARGIN: usize = 4;

pub(crate) struct Cell {
    pub n: usize,
    pub seed: u64,
    pub kernel: usize,
}

pub(crate) fn cells(cfg: &SweepConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &n in &cfg.n {
        for &seed in &cfg.seeds {
            for kernel in 0..cfg.kernels.len() {
                out.push(Cell { n, seed, kernel });
            }
        }
    }
    out
}

/// Runs `f` on a pool of `jobs` threads, or the global pool when `None`.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Error::config("jobs", "must be at least 1")),
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j)
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

type CellRows = Vec<(String, f64)>;

fn run_cell(cfg: &SweepConfig, spec: &KernelSpec, n: usize, seed: u64) -> Result<(f64, CellRows)> {
    let m = cfg.model();
    let cloud = sample_uniform(&m, n, seed)?;
    let kernel = spec.kernel(&m).resolve(n)?;
    let g = build_graph(&cloud, &kernel)?;
    let mut rows: CellRows = vec![(metric::AVG_DEGREE.into(), g.avg_degree())];

    if cfg.eig_k > 0 {
        let k = cfg.eig_k.min(n);
        let spectrum = eig_sym(&g, (k + CLUSTER_MARGIN).min(n))?;
        let rep = align_spectra(&spectrum, &g, &m, k)?;
        let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        rows.push((metric::EVAL_ERR.into(), max(&rep.eval_err)));
        rows.push((metric::EFUN_ERR.into(), max(&rep.efun_err)));
        rows.push((metric::OP_ERR.into(), max(&rep.op_err)));
        let h = cfg.filter.coeffs()?;
        for &alpha in &cfg.alpha {
            let part = alpha_partition(&spectrum.values()[..k], alpha)?;
            let fdt = fdt_check(&h, &spectrum.values()[..k], &part, 1.0)?;
            rows.push((metric::fdt_gamma(alpha), fdt.gamma_k.iter().copied().fold(0.0, f64::max)));
            rows.push((metric::fdt_groups(alpha), part.count() as f64));
        }
    }

    let f = cfg.signal.signal(&m, cfg.truncation)?;
    let h = cfg.filter.coeffs()?;
    let diff = SeriesDiffusion::new(&g, h.step());
    rows.push((metric::FILTER_ERR.into(), filter_convergence_error_with(&h, &diff, &cloud, &f, &m, cfg.truncation)?));

    if let Some(spec) = &cfg.arch {
        let arch = spec.build()?;
        let opts = MnnOptions {
            truncation: cfg.truncation,
            quadrature: cfg.quadrature.unwrap_or_else(|| MnnOptions::for_manifold(&m).quadrature),
        };
        let gd = SeriesDiffusion::new(&g, arch.step());
        let res = gnn_convergence_error_with(&arch, &gd, &cloud, &[f], &m, opts)?;
        rows.push((metric::GNN_ERR.into(), res.error));
        rows.push((metric::GNN_BOUND.into(), res.bound_shape));
    }
    Ok((kernel.eps, rows))
}

/// Measures every configured error metric on every sweep cell.
///
/// A failing cell is recorded in [`ErrorCurve::failures`] and the sweep
/// continues. Rows are sorted, so the result does not depend on
/// scheduling.
pub fn convergence_sweep(cfg: &SweepConfig, jobs: Option<usize>) -> Result<ErrorCurve> {
    cfg.validate()?;
    let labels = cfg.kernel_labels();
    let cells = cells(cfg);
    let results: Vec<(usize, Result<(f64, CellRows)>)> = with_jobs(jobs, || {
        cells
            .par_iter()
            .enumerate()
            .map(|(i, c)| (i, run_cell(cfg, &cfg.kernels[c.kernel], c.n, c.seed)))
            .collect()
    })?;
    let mut curve = ErrorCurve::new(config_hash(cfg));
    for (i, res) in results {
        let c = &cells[i];
        let label = &labels[c.kernel];
        match res {
            Ok((eps, rows)) => {
                for (name, value) in rows {
                    curve.push(c.n, c.seed, eps, label, &name, value);
                }
            }
            Err(e) => {
                log::warn!("cell n={} seed={} kernel={label} failed: {e}", c.n, c.seed);
                curve.failures.push(CellFailure { n: c.n, seed: c.seed, kernel: label.clone(), message: e.to_string() });
            }
        }
    }
    curve.sort();
    Ok(curve)
}
