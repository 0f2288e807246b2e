//! Diffusion operators `E = e^{-T L}` on a fixed graph.
//!
//! Filters and GNN layers only ever need products `E^k X`, so the graph
//! enters through this trait. The spectral implementation caches the full
//! eigendecomposition; the series implementation uses scaled Taylor steps
//! and never diagonalises, which keeps the two routes independent.

use nalgebra::DMatrix;

use crate::geograph::GeoGraph;
use crate::linalg;
use crate::spectral::{eig_sym, Spectrum};
use crate::Result;

pub trait Diffusion: Send + Sync {
    /// Number of nodes.
    fn len(&self) -> usize;

    /// Diffusion time of one step.
    fn step(&self) -> f64;

    /// Upper bound on the largest Laplacian eigenvalue.
    fn spectral_bound(&self) -> f64;

    /// `E X`
    fn shift(&self, x: &DMatrix<f64>) -> DMatrix<f64>;

    /// `[X, E X, ..., E^{count-1} X]`
    fn powers(&self, x: &DMatrix<f64>, count: usize) -> Vec<DMatrix<f64>> {
        let mut out = Vec::with_capacity(count);
        if count == 0 {
            return out;
        }
        out.push(x.clone());
        for k in 1..count {
            let next = self.shift(&out[k - 1]);
            out.push(next);
        }
        out
    }

    /// `sum_k E^k W_k`, by Horner's rule.
    fn combine(&self, ws: &[DMatrix<f64>]) -> DMatrix<f64> {
        let mut it = ws.iter().rev();
        let mut acc = it.next().expect("at least one term").clone();
        for w in it {
            acc = self.shift(&acc) + w;
        }
        acc
    }

    /// `sum_k h_k E^k X`.
    fn apply_taps(&self, taps: &[f64], x: &DMatrix<f64>) -> DMatrix<f64> {
        let ws: Vec<DMatrix<f64>> = taps.iter().map(|h| x * *h).collect();
        self.combine(&ws)
    }
}

/// Diffusion through the full eigendecomposition.
#[derive(Clone, Debug)]
pub struct SpectralDiffusion {
    /// Unit Euclidean eigenvectors.
    vectors: DMatrix<f64>,
    values: Vec<f64>,
    step: f64,
    bound: f64,
}

impl SpectralDiffusion {
    pub fn new(g: &GeoGraph, step: f64) -> Result<Self> {
        let spec = eig_sym(g, g.len())?;
        Ok(Self::from_spectrum(&spec, step, g.norm_bound()))
    }

    /// `spec` must hold the complete spectrum.
    pub fn from_spectrum(spec: &Spectrum, step: f64, bound: f64) -> Self {
        let s = 1.0 / (spec.n() as f64).sqrt();
        SpectralDiffusion { vectors: spec.vectors() * s, values: spec.values().to_vec(), step, bound }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    fn scaled(&self, c: &DMatrix<f64>, k: f64) -> DMatrix<f64> {
        let mut c = c.clone();
        for (i, l) in self.values.iter().enumerate() {
            let f = (-k * self.step * l).exp();
            c.row_mut(i).scale_mut(f);
        }
        &self.vectors * c
    }
}

impl Diffusion for SpectralDiffusion {
    fn len(&self) -> usize {
        self.vectors.nrows()
    }

    fn step(&self) -> f64 {
        self.step
    }

    fn spectral_bound(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0).min(self.bound)
    }

    fn shift(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.scaled(&self.vectors.tr_mul(x), 1.0)
    }

    fn powers(&self, x: &DMatrix<f64>, count: usize) -> Vec<DMatrix<f64>> {
        let c = self.vectors.tr_mul(x);
        (0..count)
            .map(|k| if k == 0 { x.clone() } else { self.scaled(&c, k as f64) })
            .collect()
    }

    fn combine(&self, ws: &[DMatrix<f64>]) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.values.len(), ws[0].ncols());
        for (k, w) in ws.iter().enumerate() {
            let mut c = self.vectors.tr_mul(w);
            for (i, l) in self.values.iter().enumerate() {
                c.row_mut(i).scale_mut((-(k as f64) * self.step * l).exp());
            }
            acc += c;
        }
        &self.vectors * acc
    }
}

/// Diffusion by scaled Taylor steps on the Laplacian.
#[derive(Clone, Debug)]
pub struct SeriesDiffusion {
    graph: GeoGraph,
    step: f64,
}

impl SeriesDiffusion {
    pub fn new(g: &GeoGraph, step: f64) -> Self {
        SeriesDiffusion { graph: g.clone(), step }
    }

    pub fn graph(&self) -> &GeoGraph {
        &self.graph
    }
}

impl Diffusion for SeriesDiffusion {
    fn len(&self) -> usize {
        self.graph.len()
    }

    fn step(&self) -> f64 {
        self.step
    }

    fn spectral_bound(&self) -> f64 {
        self.graph.norm_bound()
    }

    fn shift(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        linalg::expm_neg_action(|v| self.graph.laplacian_matmul(v), x, self.step, self.graph.norm_bound())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geograph::{build_graph, KernelConfig, KernelKind};
    use crate::manifold::{sample_uniform, ManifoldModel};

    #[test]
    fn routes_agree() {
        let cloud = sample_uniform(&ManifoldModel::circle(), 25, 7).unwrap();
        let g = build_graph(&cloud, &KernelConfig::new(KernelKind::DenseGaussian, 0.2, 1)).unwrap();
        let a = SpectralDiffusion::new(&g, 1.0).unwrap();
        let b = SeriesDiffusion::new(&g, 1.0);
        let x = DMatrix::from_fn(25, 2, |i, j| ((i * (j + 1)) as f64).sin());
        let pa = a.powers(&x, 4);
        let pb = b.powers(&x, 4);
        for (u, v) in pa.iter().zip(&pb) {
            assert!((u - v).amax() < 1e-10);
        }
        let ws: Vec<DMatrix<f64>> = (0..3).map(|k| &x * (k as f64 - 0.5)).collect();
        assert!((a.combine(&ws) - b.combine(&ws)).amax() < 1e-10);
    }
}
