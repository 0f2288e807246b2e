//! Analytic manifolds with closed-form Laplace-Beltrami spectra.
//!
//! Signals live either in spectral form (coefficients over the first `M`
//! orthonormal eigenfunctions) or as pointwise callables. Inner products
//! are integrals against the volume measure, so the constant function has
//! squared norm `Vol(M)`.

mod basis;
mod mnn;
mod quadrature;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use basis::{Fourier, Mode};
pub use mnn::{mnn_forward, MnnOptions, MnnOutput};
pub use quadrature::{gauss_legendre, Quadrature};

use crate::filterbank::FilterCoeffs;
use crate::geograph::{CloudSource, PointCloud};
use crate::{Error, Result};

/// Default number of quadrature nodes per intrinsic dimension.
pub const DEFAULT_QUADRATURE: usize = 512;
/// Default spectral truncation for manifold filters and MNNs.
pub const DEFAULT_TRUNCATION: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifoldKind {
    Circle,
    Sphere,
    #[serde(rename = "torus", alias = "flat_torus")]
    FlatTorus,
}

impl FromStr for ManifoldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "circle" => Ok(ManifoldKind::Circle),
            "sphere" => Ok(ManifoldKind::Sphere),
            "torus" | "flat_torus" | "flattorus" => Ok(ManifoldKind::FlatTorus),
            other => Err(Error::invalid(format!(
                "unknown manifold `{other}` (expected circle | sphere | torus)"
            ))),
        }
    }
}

impl fmt::Display for ManifoldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ManifoldKind::Circle => "circle",
            ManifoldKind::Sphere => "sphere",
            ManifoldKind::FlatTorus => "torus",
        })
    }
}

/// Unit circle in R^2, unit sphere in R^3, or the flat torus
/// `S^1 x S^1` embedded isometrically in R^4.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ManifoldModel {
    kind: ManifoldKind,
}

impl ManifoldModel {
    pub fn new(kind: ManifoldKind) -> Self {
        ManifoldModel { kind }
    }

    pub fn circle() -> Self {
        Self::new(ManifoldKind::Circle)
    }

    pub fn sphere() -> Self {
        Self::new(ManifoldKind::Sphere)
    }

    pub fn flat_torus() -> Self {
        Self::new(ManifoldKind::FlatTorus)
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Circle => 1,
            ManifoldKind::Sphere | ManifoldKind::FlatTorus => 2,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Circle => 2,
            ManifoldKind::Sphere => 3,
            ManifoldKind::FlatTorus => 4,
        }
    }

    pub fn volume(&self) -> f64 {
        match self.kind {
            ManifoldKind::Circle => 2.0 * PI,
            ManifoldKind::Sphere => 4.0 * PI,
            ManifoldKind::FlatTorus => 4.0 * PI * PI,
        }
    }
}

/// One Laplace-Beltrami eigenpair; `index` is 1-based.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenPair {
    pub index: usize,
    pub eigenvalue: f64,
    pub mode: Mode,
    manifold: ManifoldModel,
}

impl EigenPair {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut out = [0.0];
        basis::eval_modes(&self.manifold, &[self.mode], x, &mut out);
        out[0]
    }
}

/// First `count` eigenpairs in ascending order, multiplicities included.
pub fn lb_spectrum(m: &ManifoldModel, count: usize) -> Result<Vec<EigenPair>> {
    if count == 0 {
        return Err(Error::invalid("spectrum size must be at least 1"));
    }
    Ok(basis::canonical_modes(m.kind(), count)
        .into_iter()
        .enumerate()
        .map(|(i, mode)| EigenPair { index: i + 1, eigenvalue: mode.eigenvalue(), mode, manifold: *m })
        .collect())
}

/// Evaluates all `modes` at `x`.
pub fn eval_eigenpairs(m: &ManifoldModel, pairs: &[EigenPair], x: &[f64]) -> Vec<f64> {
    let modes: Vec<Mode> = pairs.iter().map(|p| p.mode).collect();
    let mut out = vec![0.0; modes.len()];
    basis::eval_modes(m, &modes, x, &mut out);
    out
}

/// `n` i.i.d. points, uniform with respect to the volume measure.
///
/// Each point consumes a fixed number of draws from a ChaCha8 stream
/// seeded by `seed`, so the first `k` points of a larger sample coincide
/// with the `k`-point sample for the same seed.
pub fn sample_uniform(m: &ManifoldModel, n: usize, seed: u64) -> Result<PointCloud> {
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 sample points, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = m.ambient_dim();
    let mut coords = Vec::with_capacity(n * dim);
    for _ in 0..n {
        match m.kind() {
            ManifoldKind::Circle => {
                let t = 2.0 * PI * rng.random::<f64>();
                coords.extend_from_slice(&[t.cos(), t.sin()]);
            }
            ManifoldKind::Sphere => loop {
                let g: [f64; 3] = [
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ];
                let r = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
                if r > 1e-12 {
                    coords.extend(g.iter().map(|v| v / r));
                    break;
                }
            },
            ManifoldKind::FlatTorus => {
                let u = 2.0 * PI * rng.random::<f64>();
                let v = 2.0 * PI * rng.random::<f64>();
                coords.extend_from_slice(&[u.cos(), u.sin(), v.cos(), v.sin()]);
            }
        }
    }
    PointCloud::new(coords, dim, CloudSource::Manifold(m.kind()))
}

/// Coefficients over a prefix of the canonical eigenbasis.
#[derive(Clone, Debug)]
pub struct SpectralSignal {
    manifold: ManifoldModel,
    pairs: Arc<[EigenPair]>,
    coeffs: Vec<f64>,
}

impl SpectralSignal {
    pub fn new(m: &ManifoldModel, coeffs: Vec<f64>) -> Result<Self> {
        let pairs: Arc<[EigenPair]> = lb_spectrum(m, coeffs.len().max(1))?.into();
        Ok(SpectralSignal { manifold: *m, pairs, coeffs })
    }

    pub(crate) fn with_pairs(m: &ManifoldModel, pairs: Arc<[EigenPair]>, coeffs: Vec<f64>) -> Self {
        debug_assert_eq!(pairs.len(), coeffs.len());
        SpectralSignal { manifold: *m, pairs, coeffs }
    }

    pub fn manifold(&self) -> &ManifoldModel {
        &self.manifold
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Number of modes carried, i.e. the truncation level.
    pub fn truncation(&self) -> usize {
        self.coeffs.len()
    }

    pub fn pairs(&self) -> &[EigenPair] {
        &self.pairs
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let vals = eval_eigenpairs(&self.manifold, &self.pairs, x);
        vals.iter().zip(&self.coeffs).map(|(a, b)| a * b).sum()
    }

    /// `||f||_M` from Parseval.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

pub type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A scalar function on a manifold.
#[derive(Clone)]
pub enum ManifoldSignal {
    Spectral(SpectralSignal),
    Function(PointFn),
}

impl fmt::Debug for ManifoldSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifoldSignal::Spectral(s) => f.debug_tuple("Spectral").field(&s.coeffs).finish(),
            ManifoldSignal::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl ManifoldSignal {
    pub fn constant(c: f64) -> Self {
        ManifoldSignal::Function(Arc::new(move |_| c))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn from_fn(f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        ManifoldSignal::Function(Arc::new(f))
    }

    pub fn spectral(m: &ManifoldModel, coeffs: Vec<f64>) -> Result<Self> {
        Ok(ManifoldSignal::Spectral(SpectralSignal::new(m, coeffs)?))
    }

    /// The `index`-th eigenfunction (1-based) as a spectral signal.
    pub fn eigenfunction(m: &ManifoldModel, index: usize) -> Result<Self> {
        if index == 0 {
            return Err(Error::invalid("eigenfunction index is 1-based"));
        }
        let mut coeffs = vec![0.0; index];
        coeffs[index - 1] = 1.0;
        Self::spectral(m, coeffs)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            ManifoldSignal::Spectral(s) => s.eval(x),
            ManifoldSignal::Function(f) => f(x),
        }
    }

    pub fn as_spectral(&self) -> Option<&SpectralSignal> {
        match self {
            ManifoldSignal::Spectral(s) => Some(s),
            ManifoldSignal::Function(_) => None,
        }
    }

    /// Linear combination `a f + b g` of two spectral signals on the same
    /// manifold; the shorter coefficient vector is zero-padded.
    pub fn combine(a: f64, f: &SpectralSignal, b: f64, g: &SpectralSignal) -> Result<SpectralSignal> {
        if f.manifold != g.manifold {
            return Err(Error::invalid("signals live on different manifolds"));
        }
        let len = f.coeffs.len().max(g.coeffs.len());
        let coeffs = (0..len)
            .map(|i| a * f.coeffs.get(i).copied().unwrap_or(0.0) + b * g.coeffs.get(i).copied().unwrap_or(0.0))
            .collect();
        SpectralSignal::new(&f.manifold, coeffs)
    }
}

impl From<SpectralSignal> for ManifoldSignal {
    fn from(s: SpectralSignal) -> Self {
        ManifoldSignal::Spectral(s)
    }
}

/// Eigenfunctions tabulated on a quadrature grid.
#[derive(Clone, Debug)]
pub struct SpectralBasis {
    manifold: ManifoldModel,
    pairs: Arc<[EigenPair]>,
    quad: Quadrature,
    /// nodes x modes
    values: DMatrix<f64>,
}

impl SpectralBasis {
    pub fn new(m: &ManifoldModel, modes: usize, q: usize) -> Result<Self> {
        let pairs: Arc<[EigenPair]> = lb_spectrum(m, modes)?.into();
        let quad = Quadrature::new(m, q);
        let mut values = DMatrix::zeros(quad.len(), modes);
        let mode_list: Vec<Mode> = pairs.iter().map(|p| p.mode).collect();
        let mut row = vec![0.0; modes];
        for (j, x) in quad.nodes().enumerate() {
            basis::eval_modes(m, &mode_list, x, &mut row);
            for (i, v) in row.iter().enumerate() {
                values[(j, i)] = *v;
            }
        }
        Ok(SpectralBasis { manifold: *m, pairs, quad, values })
    }

    pub fn manifold(&self) -> &ManifoldModel {
        &self.manifold
    }

    pub fn pairs(&self) -> &[EigenPair] {
        &self.pairs
    }

    pub(crate) fn shared_pairs(&self) -> Arc<[EigenPair]> {
        self.pairs.clone()
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quad
    }

    pub fn modes(&self) -> usize {
        self.pairs.len()
    }

    /// Value of mode `i` at quadrature node `j`.
    pub fn value(&self, j: usize, i: usize) -> f64 {
        self.values[(j, i)]
    }

    /// Signal evaluated at every quadrature node.
    pub fn tabulate(&self, f: &ManifoldSignal) -> Vec<f64> {
        match f {
            ManifoldSignal::Spectral(s) if s.pairs.len() <= self.modes() && s.manifold == self.manifold => {
                let c = DVector::from_fn(self.modes(), |i, _| s.coeffs.get(i).copied().unwrap_or(0.0));
                (&self.values * c).as_slice().to_vec()
            }
            _ => self.quad.nodes().map(|x| f.eval(x)).collect(),
        }
    }

    /// Projection coefficients `<v, phi_i>_M` of tabulated values.
    pub fn project_values(&self, values: &[f64]) -> Vec<f64> {
        let w = self.quad.weights();
        let weighted = DVector::from_iterator(values.len(), values.iter().zip(w).map(|(v, w)| v * w));
        (self.values.transpose() * weighted).as_slice().to_vec()
    }

    pub fn project(&self, f: &ManifoldSignal) -> SpectralSignal {
        let coeffs = self.project_values(&self.tabulate(f));
        SpectralSignal::with_pairs(&self.manifold, self.pairs.clone(), coeffs)
    }

    /// `||v - P_M v||_M` for tabulated values `v` with projection `coeffs`.
    pub fn projection_residual(&self, values: &[f64], coeffs: &[f64]) -> f64 {
        let c = DVector::from_column_slice(coeffs);
        let recon = &self.values * c;
        let r: Vec<f64> = values.iter().zip(recon.iter()).map(|(v, p)| (v - p).powi(2)).collect();
        self.quad.integrate(&r).max(0.0).sqrt()
    }
}

/// `<f, g>_M` by tensor-grid quadrature with `q >= 64` nodes per dimension.
pub fn manifold_inner(f: &ManifoldSignal, g: &ManifoldSignal, m: &ManifoldModel, q: usize) -> Result<f64> {
    if q < 64 {
        return Err(Error::invalid(format!("quadrature size must be at least 64, got {q}")));
    }
    let quad = Quadrature::new(m, q);
    let vals: Vec<f64> = quad.nodes().map(|x| f.eval(x) * g.eval(x)).collect();
    Ok(quad.integrate(&vals))
}

pub fn manifold_norm(f: &ManifoldSignal, m: &ManifoldModel, q: usize) -> Result<f64> {
    Ok(manifold_inner(f, f, m, q)?.max(0.0).sqrt())
}

/// `sum_{i <= M} h(lambda_i) f_i phi_i`.
pub fn manifold_filter_apply(
    h: &FilterCoeffs,
    f: &ManifoldSignal,
    m: &ManifoldModel,
    truncation: usize,
) -> Result<SpectralSignal> {
    let s = f
        .as_spectral()
        .ok_or_else(|| Error::invalid("manifold filtering needs a spectral signal"))?;
    if s.manifold != *m {
        return Err(Error::invalid("signal lives on a different manifold"));
    }
    if truncation > s.truncation() {
        return Err(Error::SpectrumExhausted { requested: truncation, available: s.truncation() });
    }
    let pairs: Arc<[EigenPair]> = s.pairs[..truncation].into();
    let coeffs = pairs
        .iter()
        .zip(&s.coeffs)
        .map(|(p, c)| h.response(p.eigenvalue) * c)
        .collect();
    Ok(SpectralSignal::with_pairs(m, pairs, coeffs))
}

/// Uniform sampling operator: `[P_n f]_i = f(x_i)`.
pub fn sample_signal(f: &ManifoldSignal, cloud: &PointCloud) -> DVector<f64> {
    match f {
        ManifoldSignal::Spectral(s) => {
            let modes: Vec<Mode> = s.pairs.iter().map(|p| p.mode).collect();
            let mut row = vec![0.0; modes.len()];
            DVector::from_iterator(
                cloud.len(),
                cloud.points().map(|x| {
                    basis::eval_modes(&s.manifold, &modes, x, &mut row);
                    row.iter().zip(&s.coeffs).map(|(a, b)| a * b).sum::<f64>()
                }),
            )
        }
        ManifoldSignal::Function(g) => DVector::from_iterator(cloud.len(), cloud.points().map(|x| g(x))),
    }
}

/// Sampled eigenfunctions as columns, `n x pairs.len()`.
pub fn sample_eigenfunctions(m: &ManifoldModel, pairs: &[EigenPair], cloud: &PointCloud) -> DMatrix<f64> {
    let modes: Vec<Mode> = pairs.iter().map(|p| p.mode).collect();
    let mut out = DMatrix::zeros(cloud.len(), modes.len());
    let mut row = vec![0.0; modes.len()];
    for (j, x) in cloud.points().enumerate() {
        basis::eval_modes(m, &modes, x, &mut row);
        for (i, v) in row.iter().enumerate() {
            out[(j, i)] = *v;
        }
    }
    out
}
