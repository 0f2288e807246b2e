//! Manifold neural networks evaluated in function space.
//!
//! Each filter `h(L) = h_0 I + sum_{k>=1} h_k e^{-kTL}` is split into its
//! identity tap and a smoothing part. The identity tap acts pointwise on
//! the previous layer exactly; the smoothing part only sees the first `M`
//! projected modes, where the heat factors have already decayed. The
//! resulting layer functions can be evaluated at arbitrary points without
//! the Gibbs oscillation a plain truncation would put on ReLU kinks.

use super::{eval_eigenpairs, ManifoldModel, ManifoldSignal, SpectralBasis, SpectralSignal};
use crate::gnn::GnnArch;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MnnOptions {
    /// Spectral truncation `M`.
    pub truncation: usize,
    /// Quadrature nodes per intrinsic dimension.
    pub quadrature: usize,
}

impl MnnOptions {
    pub fn new(truncation: usize, quadrature: usize) -> Self {
        MnnOptions { truncation, quadrature }
    }

    /// `M = 25`; 512 nodes on the circle, 128 per dimension otherwise.
    pub fn for_manifold(m: &ManifoldModel) -> Self {
        let q = if m.intrinsic_dim() == 1 { super::DEFAULT_QUADRATURE } else { 128 };
        MnnOptions { truncation: super::DEFAULT_TRUNCATION, quadrature: q }
    }
}

#[derive(Clone, Debug)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    /// `h_0^{pq}`, row-major `fan_out x fan_in`.
    identity: Vec<f64>,
    /// Smoothing part per output feature, in mode coefficients.
    smooth: Vec<Vec<f64>>,
}

/// Output of [`mnn_forward`]: exact pointwise layer functions plus their
/// projections onto the first `M` modes.
#[derive(Clone, Debug)]
pub struct MnnOutput {
    basis: SpectralBasis,
    arch: GnnArch,
    inputs: Vec<ManifoldSignal>,
    layers: Vec<Layer>,
    projections: Vec<Vec<SpectralSignal>>,
    residuals: Vec<Vec<f64>>,
}

impl MnnOutput {
    pub fn manifold(&self) -> &ManifoldModel {
        self.basis.manifold()
    }

    pub fn truncation(&self) -> usize {
        self.basis.modes()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Projected final-layer features.
    pub fn outputs(&self) -> &[SpectralSignal] {
        self.projections.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Projected features of layer `l` (1-based; 0 is the input).
    pub fn layer(&self, l: usize) -> &[SpectralSignal] {
        &self.projections[l]
    }

    /// `||x - P_M x||_M` for every feature of every layer, input included.
    pub fn projection_residuals(&self) -> &[Vec<f64>] {
        &self.residuals
    }

    pub fn max_projection_residual(&self) -> f64 {
        self.residuals.iter().flatten().fold(0.0, |a, &b| a.max(b))
    }

    /// All layer features at `x`, input layer first.
    pub fn eval_layers(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let phi = eval_eigenpairs(self.manifold(), self.basis.pairs(), x);
        let mut out = Vec::with_capacity(self.layers.len() + 1);
        out.push(self.inputs.iter().map(|f| f.eval(x)).collect::<Vec<_>>());
        let sigma = self.arch.nonlinearity();
        for layer in &self.layers {
            let prev = out.last().expect("input layer present");
            let next = (0..layer.fan_out)
                .map(|p| {
                    let direct: f64 = (0..layer.fan_in).map(|q| layer.identity[p * layer.fan_in + q] * prev[q]).sum();
                    let smooth: f64 = layer.smooth[p].iter().zip(&phi).map(|(c, v)| c * v).sum();
                    sigma.apply(direct + smooth)
                })
                .collect();
            out.push(next);
        }
        out
    }

    /// `h_l^{pq}(L) x_{l-1}^q` at `x` for every filter, indexed `[l][p][q]`
    /// with `l` the 0-based layer.
    pub fn filter_outputs_at(&self, x: &[f64]) -> Vec<Vec<Vec<f64>>> {
        let phi = eval_eigenpairs(self.manifold(), self.basis.pairs(), x);
        let feats = self.eval_layers(x);
        let eig: Vec<f64> = self.basis.pairs().iter().map(|p| p.eigenvalue).collect();
        (0..self.layers.len())
            .map(|l| {
                let layer = &self.layers[l];
                (0..layer.fan_out)
                    .map(|p| {
                        (0..layer.fan_in)
                            .map(|q| {
                                let h = self.arch.filter(l, p, q);
                                let h0 = h.coeffs()[0];
                                let c = self.projections[l][q].coeffs();
                                let smooth: f64 =
                                    eig.iter().zip(c).zip(&phi).map(|((lam, ci), v)| (h.response(*lam) - h0) * ci * v).sum();
                                h0 * feats[l][q] + smooth
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    /// Final-layer features at `x`.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.eval_layers(x).pop().unwrap_or_default()
    }

    /// Final-layer feature `p` as a standalone signal.
    pub fn output_signal(&self, p: usize) -> ManifoldSignal {
        let me = self.clone();
        ManifoldSignal::from_fn(move |x| me.eval(x)[p])
    }

    /// Feature `p` of layer `l` as a standalone signal.
    pub fn layer_signal(&self, l: usize, p: usize) -> ManifoldSignal {
        let me = self.clone();
        ManifoldSignal::from_fn(move |x| me.eval_layers(x)[l][p])
    }
}

/// Layerwise `x_l^p = sigma(sum_q h_l^{pq}(L) x_{l-1}^q)` on the manifold.
///
/// The readout, if any, is ignored.
pub fn mnn_forward(
    arch: &GnnArch,
    inputs: &[ManifoldSignal],
    m: &ManifoldModel,
    opts: MnnOptions,
) -> Result<MnnOutput> {
    let widths = arch.widths();
    if inputs.len() != widths[0] {
        return Err(Error::DimensionMismatch { expected: widths[0], got: inputs.len() });
    }
    if opts.truncation == 0 {
        return Err(Error::invalid("truncation must be at least 1"));
    }
    if opts.quadrature < 64 {
        return Err(Error::invalid(format!("quadrature size must be at least 64, got {}", opts.quadrature)));
    }
    let basis = SpectralBasis::new(m, opts.truncation, opts.quadrature)?;
    let eig: Vec<f64> = basis.pairs().iter().map(|p| p.eigenvalue).collect();
    let sigma = arch.nonlinearity();
    let n_nodes = basis.quadrature().len();

    // Exact values of the current layer on the quadrature grid.
    let mut grid: Vec<Vec<f64>> = inputs.iter().map(|f| basis.tabulate(f)).collect();
    let mut coeffs: Vec<Vec<f64>> = Vec::with_capacity(inputs.len());
    let mut residuals = Vec::with_capacity(widths.len());
    let mut projections = Vec::with_capacity(widths.len());
    let mut res0 = Vec::with_capacity(inputs.len());
    for (f, vals) in inputs.iter().zip(&grid) {
        let c = match f {
            ManifoldSignal::Spectral(s) if s.manifold() == m => {
                (0..opts.truncation).map(|i| s.coeffs().get(i).copied().unwrap_or(0.0)).collect()
            }
            _ => basis.project_values(vals),
        };
        res0.push(basis.projection_residual(vals, &c));
        coeffs.push(c);
    }
    residuals.push(res0);
    projections.push(to_signals(&basis, &coeffs));

    let mut layers = Vec::with_capacity(arch.num_layers());
    for l in 0..arch.num_layers() {
        let (fan_in, fan_out) = (widths[l], widths[l + 1]);
        let mut identity = vec![0.0; fan_out * fan_in];
        let mut smooth = vec![vec![0.0; opts.truncation]; fan_out];
        for p in 0..fan_out {
            for q in 0..fan_in {
                let h = arch.filter(l, p, q);
                let h0 = h.coeffs()[0];
                identity[p * fan_in + q] = h0;
                for (i, lam) in eig.iter().enumerate() {
                    smooth[p][i] += (h.response(*lam) - h0) * coeffs[q][i];
                }
            }
        }
        let mut next_grid = vec![vec![0.0; n_nodes]; fan_out];
        for (p, out) in next_grid.iter_mut().enumerate() {
            for (j, v) in out.iter_mut().enumerate() {
                let direct: f64 = (0..fan_in).map(|q| identity[p * fan_in + q] * grid[q][j]).sum();
                let sm: f64 = (0..opts.truncation).map(|i| smooth[p][i] * basis.value(j, i)).sum();
                *v = sigma.apply(direct + sm);
            }
        }
        coeffs = next_grid.iter().map(|v| basis.project_values(v)).collect();
        residuals.push(next_grid.iter().zip(&coeffs).map(|(v, c)| basis.projection_residual(v, c)).collect());
        projections.push(to_signals(&basis, &coeffs));
        layers.push(Layer { fan_in, fan_out, identity, smooth });
        grid = next_grid;
    }

    Ok(MnnOutput { basis, arch: arch.clone(), inputs: inputs.to_vec(), layers, projections, residuals })
}

fn to_signals(basis: &SpectralBasis, coeffs: &[Vec<f64>]) -> Vec<SpectralSignal> {
    coeffs
        .iter()
        .map(|c| SpectralSignal::with_pairs(basis.manifold(), basis.shared_pairs(), c.clone()))
        .collect()
}
