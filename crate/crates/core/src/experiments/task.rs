//! Synthetic node-level regression on a manifold: learn an ideal low-pass
//! filter from band-limited random inputs.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffusion::Diffusion;
use crate::geograph::PointCloud;
use crate::gnn::{Dataset, Sample, Target};
use crate::manifold::{lb_spectrum, sample_signal, ManifoldKind, ManifoldModel, ManifoldSignal};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionTask {
    #[serde(default = "default_manifold")]
    pub manifold: ManifoldKind,
    /// Inputs are supported on the first `modes` eigenfunctions.
    #[serde(default = "default_modes")]
    pub modes: usize,
    /// The target keeps the input's components with eigenvalue `<= cutoff`.
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    /// Training signals per graph.
    #[serde(default = "default_signals")]
    pub signals: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_manifold() -> ManifoldKind {
    ManifoldKind::Circle
}
fn default_modes() -> usize {
    9
}
fn default_cutoff() -> f64 {
    2.5
}
fn default_signals() -> usize {
    32
}

impl Default for RegressionTask {
    fn default() -> Self {
        RegressionTask {
            manifold: default_manifold(),
            modes: default_modes(),
            cutoff: default_cutoff(),
            signals: default_signals(),
            seed: 0,
        }
    }
}

impl RegressionTask {
    pub fn validate(&self) -> Result<()> {
        if self.modes == 0 {
            return Err(Error::config("task.modes", "must be at least 1"));
        }
        if self.signals == 0 {
            return Err(Error::config("task.signals", "must be at least 1"));
        }
        if !self.cutoff.is_finite() {
            return Err(Error::config("task.cutoff", "must be finite"));
        }
        Ok(())
    }

    pub fn model(&self) -> ManifoldModel {
        ManifoldModel::new(self.manifold)
    }

    /// Coefficients of training input `i`, drawn as `N(0,1) / (1 + lambda)`.
    pub fn input_coeffs(&self, i: usize) -> Vec<f64> {
        let pairs = lb_spectrum(&self.model(), self.modes).expect("modes >= 1");
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ i as u64);
        pairs
            .iter()
            .map(|p| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z / (1.0 + p.eigenvalue)
            })
            .collect()
    }

    fn target_coeffs(&self, coeffs: &[f64]) -> Vec<f64> {
        let pairs = lb_spectrum(&self.model(), coeffs.len()).expect("nonempty");
        coeffs.iter().zip(&pairs).map(|(c, p)| if p.eigenvalue <= self.cutoff { *c } else { 0.0 }).collect()
    }

    pub fn input(&self, i: usize) -> Result<ManifoldSignal> {
        ManifoldSignal::spectral(&self.model(), self.input_coeffs(i))
    }

    pub fn target(&self, i: usize) -> Result<ManifoldSignal> {
        ManifoldSignal::spectral(&self.model(), self.target_coeffs(&self.input_coeffs(i)))
    }

    /// Fixed evaluation input: equal weights on every input mode, scaled to
    /// unit `L^2` norm.
    pub fn probe(&self) -> Result<ManifoldSignal> {
        let c = 1.0 / (self.modes as f64).sqrt();
        ManifoldSignal::spectral(&self.model(), vec![c; self.modes])
    }

    /// Training pairs sampled on `cloud`, all sharing one graph.
    pub fn dataset(&self, cloud: &PointCloud, diffusion: Arc<dyn Diffusion>) -> Result<Dataset> {
        if diffusion.len() != cloud.len() {
            return Err(Error::DimensionMismatch { expected: cloud.len(), got: diffusion.len() });
        }
        let n = cloud.len();
        let mut samples = Vec::with_capacity(self.signals);
        for i in 0..self.signals {
            let x = sample_signal(&self.input(i)?, cloud);
            let y = sample_signal(&self.target(i)?, cloud);
            samples.push(Sample {
                graph: 0,
                input: DMatrix::from_column_slice(n, 1, x.as_slice()),
                target: Target::Signal(DMatrix::from_column_slice(n, 1, y.as_slice())),
            });
        }
        Ok(Dataset { graphs: vec![diffusion], samples })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::SeriesDiffusion;
    use crate::geograph::{build_graph, EpsRule, KernelConfig, KernelKind};
    use crate::manifold::sample_uniform;

    #[test]
    fn target_is_low_pass_of_input() {
        let t = RegressionTask::default();
        let c = t.input_coeffs(3);
        let y = t.target_coeffs(&c);
        // circle eigenvalues 0, 1, 1, 4, ...
        assert_eq!(&y[..3], &c[..3]);
        assert!(y[3..].iter().all(|v| *v == 0.0));
        assert_eq!(t.input_coeffs(3), c);
        assert_ne!(t.input_coeffs(4), c);
    }

    #[test]
    fn dataset_shapes() {
        let t = RegressionTask { signals: 3, ..Default::default() };
        let m = t.model();
        let cloud = sample_uniform(&m, 40, 1).unwrap();
        let g = build_graph(&cloud, &KernelConfig::for_manifold(KernelKind::DenseGaussian, EpsRule::DenseRate, &m))
            .unwrap();
        let d = t.dataset(&cloud, Arc::new(SeriesDiffusion::new(&g, 1.0))).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.samples[0].input.shape(), (40, 1));
    }
}
