use nalgebra::{DMatrix, DVector};

use super::model::{gnn_forward_with, GnnArch};
use crate::diffusion::{Diffusion, SeriesDiffusion};
use crate::geograph::{graph_norm, GeoGraph, PointCloud};
use crate::manifold::{mnn_forward, sample_signal, ManifoldModel, ManifoldSignal, MnnOptions};
use crate::{Error, Result};

/// Graph GNN versus sampled manifold network.
#[derive(Clone, Debug, PartialEq)]
pub struct GnnConvergence {
    /// `||Phi(H, L_n, P_n f) - P_n Phi(H, L, f)||_{G_n}`, summed in
    /// quadrature over output features.
    pub error: f64,
    pub per_output: Vec<f64>,
    /// `||h(L_n) P_n x - P_n h(L) x||_{G_n}` for every filter, evaluated on
    /// the manifold network's own intermediate signals; `[l][p * F_{l-1} + q]`.
    pub filter_errors: Vec<Vec<f64>>,
    /// `L F^{L-1} max Delta` with `F` the widest layer.
    pub bound_shape: f64,
    /// Largest projection residual of the manifold network.
    pub projection_residual: f64,
    pub truncation: usize,
}

/// Compares the pre-readout GNN on `g` with the manifold network.
///
/// Requires `F_0 = F_L = 1` unless `general_widths` is set.
pub fn gnn_convergence_error(
    arch: &GnnArch,
    g: &GeoGraph,
    inputs: &[ManifoldSignal],
    m: &ManifoldModel,
    opts: MnnOptions,
    general_widths: bool,
) -> Result<GnnConvergence> {
    check_widths(arch, general_widths)?;
    gnn_convergence_error_with(arch, &SeriesDiffusion::new(g, arch.step()), g.cloud(), inputs, m, opts)
}

fn check_widths(arch: &GnnArch, general: bool) -> Result<()> {
    let w = arch.widths();
    if !general && (w[0] != 1 || w[w.len() - 1] != 1) {
        return Err(Error::invalid("convergence metric expects single input and output features"));
    }
    Ok(())
}

pub fn gnn_convergence_error_with(
    arch: &GnnArch,
    diff: &dyn Diffusion,
    cloud: &PointCloud,
    inputs: &[ManifoldSignal],
    m: &ManifoldModel,
    opts: MnnOptions,
) -> Result<GnnConvergence> {
    let n = cloud.len();
    if diff.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: diff.len() });
    }
    let mut bare = arch.clone();
    bare.set_readout(None)?;
    let widths = bare.widths().to_vec();
    if inputs.len() != widths[0] {
        return Err(Error::DimensionMismatch { expected: widths[0], got: inputs.len() });
    }
    let mut x0 = DMatrix::zeros(n, widths[0]);
    for (q, f) in inputs.iter().enumerate() {
        x0.set_column(q, &sample_signal(f, cloud));
    }
    let graph_out = gnn_forward_with(&bare, diff, &x0)?;
    let mnn = mnn_forward(&bare, inputs, m, opts)?;

    let layers = bare.num_layers();
    // Sampled manifold intermediates and filter outputs.
    let mut feats: Vec<DMatrix<f64>> = widths.iter().map(|&w| DMatrix::zeros(n, w)).collect();
    let mut filtered: Vec<Vec<DVector<f64>>> =
        (0..layers).map(|l| vec![DVector::zeros(n); widths[l] * widths[l + 1]]).collect();
    for (j, x) in cloud.points().enumerate() {
        let vals = mnn.eval_layers(x);
        for (l, v) in vals.iter().enumerate() {
            for (p, val) in v.iter().enumerate() {
                feats[l][(j, p)] = *val;
            }
        }
        let fo = mnn.filter_outputs_at(x);
        for l in 0..layers {
            for p in 0..widths[l + 1] {
                for q in 0..widths[l] {
                    filtered[l][p * widths[l] + q][j] = fo[l][p][q];
                }
            }
        }
    }
    let mut filter_errors = Vec::with_capacity(layers);
    for l in 0..layers {
        let mut errs = Vec::with_capacity(widths[l] * widths[l + 1]);
        for p in 0..widths[l + 1] {
            for q in 0..widths[l] {
                let xq = feats[l].columns(q, 1).into_owned();
                let gy = diff.apply_taps(bare.taps_of(l, p, q), &xq);
                errs.push(graph_norm(&(gy.column(0) - &filtered[l][p * widths[l] + q])));
            }
        }
        filter_errors.push(errs);
    }
    let diff_out = graph_out.features() - &feats[layers];
    let per_output: Vec<f64> = (0..diff_out.ncols()).map(|p| graph_norm(&diff_out.column(p).into_owned())).collect();
    let error = per_output.iter().map(|e| e * e).sum::<f64>().sqrt();
    let max_delta = filter_errors.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    let fmax = *widths.iter().max().expect("nonempty") as f64;
    let bound_shape = layers as f64 * fmax.powi(layers as i32 - 1) * max_delta;
    Ok(GnnConvergence {
        error,
        per_output,
        filter_errors,
        bound_shape,
        projection_residual: mnn.max_projection_residual(),
        truncation: opts.truncation,
    })
}
