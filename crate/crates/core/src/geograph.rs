//! Geometric graphs on point clouds.
//!
//! Two kernels are supported. The Gaussian kernel gives a complete graph
//! (average degree `n - 1`); the compactly supported indicator kernel keeps
//! only pairs with `||x_i - x_j||^2 <= eps`, which at the `(log n / n)^{1/d}`
//! bandwidth gives `Theta(log n)` neighbours.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::manifold::{ManifoldKind, ManifoldModel, ManifoldSignal};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CloudSource {
    Manifold(ManifoldKind),
    External,
}

/// `n` points in `R^N`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    coords: Vec<f64>,
    dim: usize,
    source: CloudSource,
}

impl PointCloud {
    pub fn new(coords: Vec<f64>, dim: usize, source: CloudSource) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("ambient dimension must be positive"));
        }
        if coords.is_empty() || coords.len() % dim != 0 {
            return Err(Error::invalid(format!(
                "{} coordinates do not form a nonempty set of {dim}-dimensional points",
                coords.len()
            )));
        }
        if let Some(bad) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::invalid(format!("non-finite coordinate in point {}", bad / dim)));
        }
        Ok(PointCloud { coords, dim, source })
    }

    pub fn from_points(points: &[Vec<f64>], source: CloudSource) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::invalid("points have inconsistent dimensions"));
        }
        Self::new(points.concat(), dim, source)
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn source(&self) -> CloudSource {
        self.source
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn dist_sq(&self, i: usize, j: usize) -> f64 {
        dist_sq(self.point(i), self.point(j))
    }

    /// Point `i` of the result is point `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.len())?;
        let mut coords = Vec::with_capacity(self.coords.len());
        for &p in perm {
            coords.extend_from_slice(self.point(p));
        }
        Ok(PointCloud { coords, dim: self.dim, source: self.source })
    }

    /// Points as an `n x N` matrix, e.g. as GNN input features.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.coords)
    }

    /// Index of the nearest point, ties to the lowest index.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, p) in self.points().enumerate() {
            let d = dist_sq(p, x);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: perm.len() });
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::invalid("not a permutation"));
        }
    }
    Ok(())
}

#[inline]
fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    DenseGaussian,
    SparseCompact,
}

impl std::fmt::Display for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KernelKind::DenseGaussian => "dense",
            KernelKind::SparseCompact => "sparse",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsRule {
    Manual,
    /// `eps = n^{-1/(d+4)}`
    DenseRate,
    /// `eps = (log n / n)^{1/d}`
    SparseRate,
}

impl EpsRule {
    pub fn eps(self, n: usize, d: usize, manual: f64) -> f64 {
        let nf = n as f64;
        match self {
            EpsRule::Manual => manual,
            EpsRule::DenseRate => nf.powf(-1.0 / (d as f64 + 4.0)),
            EpsRule::SparseRate => (nf.ln() / nf).powf(1.0 / d as f64),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub kind: KernelKind,
    pub eps: f64,
    /// Intrinsic dimension used by the normalisation.
    pub dim: usize,
    pub rule: EpsRule,
    /// Multiplies every weight. `1` is the bare kernel; see
    /// [`KernelConfig::for_manifold`] for the calibrated choice.
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

impl KernelConfig {
    pub fn new(kind: KernelKind, eps: f64, dim: usize) -> Self {
        KernelConfig { kind, eps, dim, rule: EpsRule::Manual, scale: 1.0 }
    }

    pub fn with_rule(kind: KernelKind, rule: EpsRule, dim: usize) -> Self {
        KernelConfig { kind, eps: f64::NAN, dim, rule, scale: 1.0 }
    }

    pub fn dense(rule: EpsRule, dim: usize) -> Self {
        Self::with_rule(KernelKind::DenseGaussian, rule, dim)
    }

    pub fn sparse(rule: EpsRule, dim: usize) -> Self {
        Self::with_rule(KernelKind::SparseCompact, rule, dim)
    }

    /// Kernel whose Laplacian approximates the Laplace-Beltrami operator
    /// itself rather than a multiple of it.
    ///
    /// With uniform sampling the Gaussian kernel converges to `L / Vol`
    /// and the indicator kernel to `L / (2 Vol)`, so the weights are
    /// rescaled by `Vol` and `2 Vol` respectively.
    pub fn for_manifold(kind: KernelKind, rule: EpsRule, m: &ManifoldModel) -> Self {
        let scale = match kind {
            KernelKind::DenseGaussian => m.volume(),
            KernelKind::SparseCompact => 2.0 * m.volume(),
        };
        KernelConfig { scale, ..Self::with_rule(kind, rule, m.intrinsic_dim()) }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self.rule = EpsRule::Manual;
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    /// Fixes `eps` for a graph on `n` points.
    pub fn resolve(&self, n: usize) -> Result<Self> {
        if self.dim == 0 {
            return Err(Error::invalid("kernel dimension must be positive"));
        }
        let eps = self.rule.eps(n, self.dim, self.eps);
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::invalid(format!("kernel bandwidth must be positive, got {eps}")));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::invalid(format!("kernel scale must be positive, got {}", self.scale)));
        }
        Ok(KernelConfig { eps, ..*self })
    }
}

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * PI / d as f64,
    }
}

/// Edge weight between two points at squared distance `dist_sq` in a
/// graph on `n` points.
pub fn kernel_weight(cfg: &KernelConfig, n: usize, dist_sq: f64) -> f64 {
    let d = cfg.dim as f64;
    let eps = cfg.eps;
    let w = match cfg.kind {
        KernelKind::DenseGaussian => {
            eps.powf(-(d / 2.0 + 1.0)) * (4.0 * PI).powf(-d / 2.0) * (-dist_sq / (4.0 * eps)).exp()
        }
        KernelKind::SparseCompact => {
            if dist_sq / eps <= 1.0 {
                (d + 2.0) / (eps.powf(d / 2.0 + 1.0) * unit_ball_volume(cfg.dim))
            } else {
                0.0
            }
        }
    };
    cfg.scale * w / n as f64
}

/// Symmetric CSR storage with sorted column indices and no diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (c, v) = self.row(i);
        c.binary_search(&j).map_or(0.0, |k| v[k])
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (c, v) = self.row(i);
            for (j, w) in c.iter().zip(v) {
                a[(i, *j)] = *w;
            }
        }
        a
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Adjacency {
    Dense(DMatrix<f64>),
    Sparse(Csr),
}

#[derive(Clone, Debug)]
pub struct GeoGraph {
    cloud: PointCloud,
    config: KernelConfig,
    adjacency: Adjacency,
    degrees: Vec<f64>,
    avg_degree: f64,
    components: usize,
}

/// Builds `A_ij = K(||x_i - x_j||^2)` for `i != j` and `L = D - A`.
///
/// Distances are computed symmetrically and each weighted degree is summed
/// over the row's weights in sorted order, so relabelling the points
/// permutes the Laplacian exactly.
pub fn build_graph(cloud: &PointCloud, cfg: &KernelConfig) -> Result<GeoGraph> {
    let n = cloud.len();
    if n < 2 {
        return Err(Error::invalid(format!("a graph needs at least 2 points, got {n}")));
    }
    let cfg = cfg.resolve(n)?;
    let weight = |i: usize, j: usize| {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        kernel_weight(&cfg, n, cloud.dist_sq(a, b))
    };
    let adjacency = match cfg.kind {
        KernelKind::DenseGaussian => {
            let cols: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|j| (0..n).map(|i| if i == j { 0.0 } else { weight(i, j) }).collect())
                .collect();
            Adjacency::Dense(DMatrix::from_fn(n, n, |i, j| cols[j][i]))
        }
        KernelKind::SparseCompact => {
            let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut c = Vec::new();
                    let mut v = Vec::new();
                    for j in 0..n {
                        if j != i {
                            let w = weight(i, j);
                            if w > 0.0 {
                                c.push(j);
                                v.push(w);
                            }
                        }
                    }
                    (c, v)
                })
                .collect();
            let mut row_ptr = Vec::with_capacity(n + 1);
            row_ptr.push(0);
            let mut cols = Vec::new();
            let mut vals = Vec::new();
            for (c, v) in rows {
                cols.extend(c);
                vals.extend(v);
                row_ptr.push(cols.len());
            }
            Adjacency::Sparse(Csr { n, row_ptr, cols, vals })
        }
    };

    let row_weights = |i: usize| -> Vec<f64> {
        match &adjacency {
            Adjacency::Dense(a) => (0..n).filter(|&j| j != i).map(|j| a[(i, j)]).collect(),
            Adjacency::Sparse(s) => s.row(i).1.to_vec(),
        }
    };
    let mut nnz = 0usize;
    let degrees: Vec<f64> = (0..n)
        .map(|i| {
            let mut w = row_weights(i);
            nnz += w.iter().filter(|&&x| x > 0.0).count();
            w.sort_by(f64::total_cmp);
            w.iter().sum()
        })
        .collect();
    let avg_degree = nnz as f64 / n as f64;
    let components = count_components(n, |i| match &adjacency {
        Adjacency::Dense(a) => (0..n).filter(|&j| j != i && a[(i, j)] > 0.0).collect(),
        Adjacency::Sparse(s) => s.row(i).0.to_vec(),
    });
    if cfg.kind == KernelKind::SparseCompact && components > 1 {
        log::warn!("sparse graph on {n} points has {components} connected components (eps = {:.4})", cfg.eps);
    }
    Ok(GeoGraph { cloud: cloud.clone(), config: cfg, adjacency, degrees, avg_degree, components })
}

fn count_components(n: usize, neighbours: impl Fn(usize) -> Vec<usize>) -> usize {
    let mut seen = vec![false; n];
    let mut count = 0;
    let mut stack = Vec::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        stack.push(s);
        while let Some(i) = stack.pop() {
            for j in neighbours(i) {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    count
}

impl GeoGraph {
    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    /// Kernel configuration with `eps` resolved for this `n`.
    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match &self.adjacency {
            Adjacency::Dense(a) => a[(i, j)],
            Adjacency::Sparse(s) => s.get(i, j),
        }
    }

    /// Weighted degrees `A 1`.
    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    /// Mean number of neighbours per node.
    pub fn avg_degree(&self) -> f64 {
        self.avg_degree
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn laplacian_dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut l = match &self.adjacency {
            Adjacency::Dense(a) => -a.clone(),
            Adjacency::Sparse(s) => -s.to_dense(),
        };
        for i in 0..n {
            l[(i, i)] = self.degrees[i];
        }
        l
    }

    /// `y = L x`.
    pub fn laplacian_matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.len();
        let ax = match &self.adjacency {
            Adjacency::Dense(a) => a * x,
            Adjacency::Sparse(s) => DVector::from_iterator(
                n,
                (0..n).map(|i| {
                    let (c, v) = s.row(i);
                    c.iter().zip(v).map(|(j, w)| w * x[*j]).sum::<f64>()
                }),
            ),
        };
        DVector::from_iterator(n, (0..n).map(|i| self.degrees[i] * x[i] - ax[i]))
    }

    /// `L X` applied column by column.
    pub fn laplacian_matmul(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.adjacency {
            Adjacency::Dense(a) => {
                let mut y = -(a * x);
                for (i, d) in self.degrees.iter().enumerate() {
                    for c in 0..x.ncols() {
                        y[(i, c)] += d * x[(i, c)];
                    }
                }
                y
            }
            Adjacency::Sparse(_) => {
                let mut y = DMatrix::zeros(x.nrows(), x.ncols());
                for c in 0..x.ncols() {
                    y.set_column(c, &self.laplacian_matvec(&x.column(c).into_owned()));
                }
                y
            }
        }
    }

    /// Upper bound on the spectral radius of `L` (twice the max degree);
    /// equals `||L||_1`.
    pub fn norm_bound(&self) -> f64 {
        2.0 * self.degrees.iter().fold(0.0f64, |a, &b| a.max(b))
    }

    /// Writes `i,j,weight` rows for `i < j`.
    pub fn write_edges(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "i,j,weight")?;
        let n = self.len();
        for i in 0..n {
            match &self.adjacency {
                Adjacency::Dense(a) => {
                    for j in i + 1..n {
                        writeln!(w, "{i},{j},{:e}", a[(i, j)])?;
                    }
                }
                Adjacency::Sparse(s) => {
                    let (c, v) = s.row(i);
                    for (j, x) in c.iter().zip(v).filter(|(j, _)| **j > i) {
                        writeln!(w, "{i},{j},{x:e}")?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn export_edges(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_edges(f)
    }
}

/// `(1/n) sum_i u_i v_i`.
pub fn graph_inner(u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), got: v.len() });
    }
    if u.is_empty() {
        return Err(Error::invalid("empty graph signal"));
    }
    Ok(u.dot(v) / u.len() as f64)
}

pub fn graph_norm(u: &DVector<f64>) -> f64 {
    if u.is_empty() {
        return 0.0;
    }
    (u.norm_squared() / u.len() as f64).sqrt()
}

/// Nearest-sample piecewise-constant extension `I_n u`.
pub fn interpolate(u: &DVector<f64>, cloud: &PointCloud) -> Result<ManifoldSignal> {
    if cloud.is_empty() {
        return Err(Error::invalid("cannot interpolate from an empty cloud"));
    }
    if u.len() != cloud.len() {
        return Err(Error::DimensionMismatch { expected: cloud.len(), got: u.len() });
    }
    let cloud = cloud.clone();
    let u = u.clone();
    Ok(ManifoldSignal::from_fn(move |x| u[cloud.nearest(x)]))
}
