//! Graph Laplacian spectra, the heat semigroup, and comparisons against
//! the analytic Laplace-Beltrami eigenpairs.

use std::io::Write;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::geograph::{graph_inner, GeoGraph};
use crate::linalg;
use crate::manifold::{lb_spectrum, sample_eigenfunctions, ManifoldModel};
use crate::{Error, Result};

/// Graphs up to this size may be diagonalised densely.
pub const DENSE_LIMIT: usize = 2000;
/// Lanczos is used when at most `n / LANCZOS_RATIO` pairs are wanted.
pub const LANCZOS_RATIO: usize = 10;
/// Krylov dimension of the check for eigenvalues Lanczos missed.
const COMPLETENESS_STEPS: usize = 80;
/// Modes kept by the truncated heat route on large graphs.
pub const HEAT_MODES: usize = 64;
/// Relative residual tolerance of the eigensolvers.
pub const EIG_TOL: f64 = 1e-8;
/// Manifold eigenvalues closer than this (relatively) share a cluster.
pub const CLUSTER_TOL: f64 = 1e-6;

/// Smallest eigenpairs of a graph Laplacian.
///
/// Eigenvectors have unit norm in `L^2(G_n)`, i.e. Euclidean norm `sqrt(n)`.
#[derive(Clone, Debug)]
pub struct Spectrum {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
    residuals: Vec<f64>,
}

impl Spectrum {
    /// Wraps unit-Euclidean-norm eigenvectors, rescaling them to the graph
    /// normalisation.
    pub fn from_unit(values: Vec<f64>, vectors: DMatrix<f64>, residuals: Vec<f64>) -> Self {
        let s = (vectors.nrows() as f64).sqrt();
        Spectrum { values, vectors: vectors * s, residuals }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn vector(&self, i: usize) -> DVector<f64> {
        self.vectors.column(i).into_owned()
    }

    /// `||L v - lambda v|| / ||v||` per pair.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    /// Keeps the first `k` pairs.
    pub fn truncated(&self, k: usize) -> Spectrum {
        let k = k.min(self.len());
        Spectrum {
            values: self.values[..k].to_vec(),
            vectors: self.vectors.columns(0, k).into_owned(),
            residuals: self.residuals[..k].to_vec(),
        }
    }

    /// Flips the sign of eigenvector `i`.
    pub fn flip(&mut self, i: usize) {
        self.vectors.column_mut(i).neg_mut();
    }

    /// Graph-domain coefficients `<x, phi_i>_{G_n}`.
    pub fn analysis(&self, x: &DVector<f64>) -> DVector<f64> {
        self.vectors.tr_mul(x) / self.n() as f64
    }

    /// `sum_i g(lambda_i) <x, phi_i> phi_i` over the stored pairs.
    pub fn apply_response(&self, x: &DVector<f64>, g: impl Fn(f64) -> f64) -> DVector<f64> {
        let mut c = self.analysis(x);
        for (ci, l) in c.iter_mut().zip(&self.values) {
            *ci *= g(*l);
        }
        &self.vectors * c
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "index,eigenvalue")?;
        for (i, l) in self.values.iter().enumerate() {
            writeln!(w, "{},{l:e}", i + 1)?;
        }
        Ok(())
    }
}

/// `k` smallest eigenpairs of `L_n`.
///
/// Dense when the graph has at most [`DENSE_LIMIT`] nodes and more than
/// `n / LANCZOS_RATIO` pairs are wanted, Lanczos otherwise. A Lanczos
/// result is accepted only if the deflated operator has nothing below
/// `lambda_k`; a missed multiple eigenvalue falls back to the dense solver
/// when the graph is small enough. Fails if any residual exceeds
/// `1e-8 max(1, ||L||)`.
pub fn eig_sym(g: &GeoGraph, k: usize) -> Result<Spectrum> {
    let n = g.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("need 1 <= k <= n = {n}, got k = {k}")));
    }
    let tol = EIG_TOL * g.norm_bound().max(1.0);
    let dense = || {
        let full = linalg::sym_eigen(&g.laplacian_dense());
        linalg::SymEig { values: full.values[..k].to_vec(), vectors: full.vectors.columns(0, k).into_owned() }
    };
    let eig = if n <= DENSE_LIMIT && k * LANCZOS_RATIO > n {
        dense()
    } else {
        let eig = linalg::lanczos_smallest(|v| g.laplacian_matvec(v), n, k, tol, 0x5eed)?;
        if k == n || lanczos_is_complete(g, &eig, tol) {
            eig
        } else if n <= DENSE_LIMIT {
            dense()
        } else {
            return Err(Error::invalid(format!("Lanczos missed an eigenvalue below lambda_{k}")));
        }
    };
    let res = linalg::residuals(|v| g.laplacian_matmul(v), &eig.values, &eig.vectors);
    let worst = res.iter().fold(0.0f64, |a, &b| a.max(b));
    if worst > tol {
        return Err(Error::NoConvergence { max_residual: worst, tolerance: tol, residuals: res });
    }
    Ok(Spectrum::from_unit(eig.values, eig.vectors, res))
}

/// Whether a short Lanczos run on the orthogonal complement of the found
/// vectors sees anything below the largest eigenvalue found. The found
/// span is lifted above the spectrum so that it cannot be picked up again.
fn lanczos_is_complete(g: &GeoGraph, eig: &linalg::SymEig, tol: f64) -> bool {
    let q = &eig.vectors;
    let lift = g.norm_bound() + 1.0;
    let apply = |v: &DVector<f64>| {
        let c = q.tr_mul(v);
        let p = v - q * &c;
        let lp = g.laplacian_matvec(&p);
        &lp - q * q.tr_mul(&lp) + q * c * lift
    };
    let lowest = linalg::lanczos_min_ritz(apply, g.len(), COMPLETENESS_STEPS, 0x5eed ^ 1);
    lowest >= eig.values.last().expect("k >= 1") - tol
}

/// Output of the spectral heat route.
#[derive(Clone, Debug)]
pub struct HeatOutput {
    pub value: DVector<f64>,
    /// Bound on the error committed by the truncation; 0 when the full
    /// spectrum is used.
    pub tail_bound: f64,
}

/// Reusable spectral heat operator `e^{-tL}`.
///
/// Small graphs keep the whole spectrum. Larger ones keep
/// `min(n, 64)` modes and damp the orthogonal remainder by `e^{-t lambda_k}`,
/// the decay of the last kept mode.
#[derive(Clone, Debug)]
pub struct SpectralHeat {
    spectrum: Spectrum,
    full: bool,
    lambda_max: f64,
}

impl SpectralHeat {
    pub fn new(g: &GeoGraph) -> Result<Self> {
        let n = g.len();
        let full = n <= DENSE_LIMIT;
        let k = if full { n } else { n.min(HEAT_MODES) };
        Ok(SpectralHeat { spectrum: eig_sym(g, k)?, full, lambda_max: g.norm_bound() })
    }

    pub fn from_spectrum(spectrum: Spectrum, lambda_max: f64) -> Self {
        let full = spectrum.len() == spectrum.n();
        SpectralHeat { spectrum, full, lambda_max }
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn is_full(&self) -> bool {
        self.full
    }

    pub fn apply(&self, t: f64, x: &DVector<f64>) -> HeatOutput {
        if t == 0.0 {
            return HeatOutput { value: x.clone(), tail_bound: 0.0 };
        }
        let s = &self.spectrum;
        let mut value = s.apply_response(x, |l| (-t * l).exp());
        if self.full {
            return HeatOutput { value, tail_bound: 0.0 };
        }
        let coeffs = s.analysis(x);
        let resid = x - s.vectors() * coeffs;
        let lk = *s.values().last().expect("nonempty spectrum");
        let damp = (-t * lk).exp();
        value += &resid * damp;
        let tail_bound = (damp - (-t * self.lambda_max).exp()).max(0.0) * resid.norm();
        HeatOutput { value, tail_bound }
    }
}

/// `e^{-tL} x` by the spectral route.
pub fn heat_apply(g: &GeoGraph, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(g, x)?;
    check_time(t)?;
    Ok(SpectralHeat::new(g)?.apply(t, x).value)
}

/// `e^{-tL} x` by a scaled Taylor series; never touches the spectrum.
pub fn heat_apply_series(g: &GeoGraph, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(g, x)?;
    check_time(t)?;
    let xm = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
    let y = linalg::expm_neg_action(|v| g.laplacian_matmul(v), &xm, t, g.norm_bound());
    Ok(y.column(0).into_owned())
}

/// `e^{-tL} x` through a dense Pade matrix exponential (`n <= 200`).
pub fn heat_apply_expm(g: &GeoGraph, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(g, x)?;
    check_time(t)?;
    if g.len() > 200 {
        return Err(Error::invalid("dense matrix exponential limited to n <= 200"));
    }
    Ok(linalg::expm(&(g.laplacian_dense() * -t))? * x)
}

fn check_len(g: &GeoGraph, x: &DVector<f64>) -> Result<()> {
    if x.len() != g.len() {
        return Err(Error::DimensionMismatch { expected: g.len(), got: x.len() });
    }
    Ok(())
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("diffusion time must be nonnegative, got {t}")));
    }
    Ok(())
}

/// Graph eigenpairs compared against the manifold's.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentReport {
    pub signs: Vec<i8>,
    /// `|lambda_{i,n} - lambda_i|`
    pub eval_err: Vec<f64>,
    /// `||a_i phi_{i,n} - sqrt(Vol) P_n phi_i||_{G_n}`
    pub efun_err: Vec<f64>,
    /// `max_j |(L_n P_n phi_i)_j - lambda_i phi_i(x_j)|`
    pub op_err: Vec<f64>,
}

impl AlignmentReport {
    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "i,a_i,eval_err,efun_err,op_err")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{:e},{:e},{:e}",
                i + 1,
                self.signs[i],
                self.eval_err[i],
                self.efun_err[i],
                self.op_err[i]
            )?;
        }
        Ok(())
    }
}

fn clusters(values: &[f64]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        let split = i == values.len() || {
            let (a, b) = (values[i - 1], values[i]);
            (b - a).abs() > CLUSTER_TOL * a.abs().max(b.abs()).max(1.0)
        };
        if split {
            out.push(start..i);
            start = i;
        }
    }
    out
}

/// Compares the first `k` graph eigenpairs of `g` with the manifold's.
///
/// Manifold eigenfunctions are scaled by `sqrt(Vol)` so both sides are unit
/// vectors under an averaging measure. Inside each eigenvalue cluster the
/// sampled manifold eigenfunctions are first rotated onto the graph
/// eigenvectors by orthogonal Procrustes; a cluster cut by `k` is completed
/// when the spectrum holds enough pairs. The sign `a_i` is then the sign
/// of `<phi_{i,n}, P_n phi_i>`, ties to `+1`.
pub fn align_spectra(spec: &Spectrum, g: &GeoGraph, m: &ManifoldModel, k: usize) -> Result<AlignmentReport> {
    let n = g.len();
    if spec.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: spec.n() });
    }
    if k == 0 || k > spec.len() {
        return Err(Error::SpectrumExhausted { requested: k, available: spec.len() });
    }
    if g.cloud().dim() != m.ambient_dim() {
        return Err(Error::DimensionMismatch { expected: m.ambient_dim(), got: g.cloud().dim() });
    }
    let pairs = lb_spectrum(m, k + 64)?;
    let lam: Vec<f64> = pairs.iter().map(|p| p.eigenvalue).collect();
    let groups = clusters(&lam);
    let kext = groups.iter().find(|r| r.contains(&(k - 1))).map_or(k, |r| r.end).min(spec.len());
    let sampled = sample_eigenfunctions(m, &pairs[..kext], g.cloud());
    let mut b = &sampled * m.volume().sqrt();
    let a = spec.vectors().columns(0, kext).into_owned();
    for r in groups.iter().take_while(|r| r.start < kext) {
        let r = r.start..r.end.min(kext);
        if r.len() < 2 {
            continue;
        }
        let ac = a.columns(r.start, r.len()).into_owned();
        let bc = b.columns(r.start, r.len()).into_owned();
        let rot = linalg::procrustes(&ac, &bc);
        b.columns_mut(r.start, r.len()).copy_from(&(bc * rot));
    }
    let mut report = AlignmentReport { signs: vec![], eval_err: vec![], efun_err: vec![], op_err: vec![] };
    let scale = m.volume().sqrt();
    let lb = g.laplacian_matmul(&(b.columns(0, k) / scale));
    for i in 0..k {
        let ai = a.column(i).into_owned();
        let bi = b.column(i).into_owned();
        let sign: i8 = if graph_inner(&ai, &bi)? < 0.0 { -1 } else { 1 };
        report.signs.push(sign);
        report.eval_err.push((spec.values()[i] - lam[i]).abs());
        report.efun_err.push(crate::geograph::graph_norm(&(ai * sign as f64 - &bi)));
        let op = (0..n)
            .map(|j| (lb[(j, i)] - lam[i] * b[(j, i)] / scale).abs())
            .fold(0.0, f64::max);
        report.op_err.push(op);
    }
    Ok(report)
}

/// Groups of an alpha-separated spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct FreqPartition {
    pub alpha: f64,
    /// 0-based index ranges into the eigenvalue list.
    pub groups: Vec<Range<usize>>,
}

impl FreqPartition {
    /// `N`
    pub fn count(&self) -> usize {
        self.groups.len()
    }

    /// `N_s`
    pub fn singletons(&self) -> usize {
        self.groups.iter().filter(|r| r.len() == 1).count()
    }

    /// `N_m`
    pub fn multi(&self) -> usize {
        self.count() - self.singletons()
    }

    pub fn group_of(&self, i: usize) -> Option<usize> {
        self.groups.iter().position(|r| r.contains(&i))
    }
}

/// Starts a new group whenever consecutive eigenvalues differ by more
/// than `alpha`.
pub fn alpha_partition(values: &[f64], alpha: f64) -> Result<FreqPartition> {
    if !(alpha > 0.0) {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    if values.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("eigenvalues must be ascending"));
    }
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] - values[i - 1] > alpha {
            groups.push(start..i);
            start = i;
        }
    }
    Ok(FreqPartition { alpha, groups })
}

/// `min_{1<=i<=K} {lambda_i - lambda_{i-1}, lambda_{i+1} - lambda_i}` over a
/// list starting at `lambda_0`; needs `K + 2` values.
pub fn eigengap(values: &[f64], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    if values.len() < k + 2 {
        return Err(Error::InsufficientEigenvalues { needed: k + 2, got: values.len() });
    }
    Ok((1..=k)
        .flat_map(|i| [values[i] - values[i - 1], values[i + 1] - values[i]])
        .fold(f64::INFINITY, f64::min))
}

/// `ceil((alpha d / C_1)^{d/(2-d)} (C_d Vol)^{2/(2-d)})`, defined for `d > 2`.
pub fn weyl_n1(alpha: f64, d: usize, c1: f64, c_d: f64, vol: f64) -> Result<u64> {
    if d <= 2 {
        return Err(Error::invalid(format!("the index bound needs d > 2, got d = {d}")));
    }
    if [alpha, c1, c_d, vol].iter().any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("all inputs must be positive"));
    }
    let df = d as f64;
    let v = (alpha * df / c1).powf(df / (2.0 - df)) * (c_d * vol).powf(2.0 / (2.0 - df));
    Ok(v.ceil() as u64)
}

/// Split of a filter response into a part supported on singleton groups
/// and one part per multi-eigenvalue group.
#[derive(Clone, Debug, PartialEq)]
pub struct FdtDecomposition {
    /// `h^(0)` at every eigenvalue.
    pub h0: Vec<f64>,
    /// `(group index, h^(l) at every eigenvalue)` per multi group.
    pub components: Vec<(usize, Vec<f64>)>,
    /// `max_i |h(lambda_i) - h^(0)(lambda_i) - sum_l h^(l)(lambda_i)|`
    pub reconstruction_error: f64,
}

/// Evaluates the decomposition at every eigenvalue of the partition.
/// `anchors` holds one `C_l` per multi group, in group order.
pub fn fdt_decompose(
    h: impl Fn(f64) -> f64,
    values: &[f64],
    part: &FreqPartition,
    anchors: &[f64],
) -> Result<FdtDecomposition> {
    let multi: Vec<usize> = (0..part.count()).filter(|&l| part.groups[l].len() > 1).collect();
    if anchors.len() != multi.len() {
        return Err(Error::DimensionMismatch { expected: multi.len(), got: anchors.len() });
    }
    if part.groups.last().map_or(0, |r| r.end) != values.len() {
        return Err(Error::invalid("partition does not cover the eigenvalue list"));
    }
    for (&l, &c) in multi.iter().zip(anchors) {
        let r = &part.groups[l];
        let (lo, hi) = (values[r.start], values[r.end - 1]);
        if !(lo..=hi).contains(&c) {
            return Err(Error::invalid(format!("anchor {c} lies outside group {l} = [{lo}, {hi}]")));
        }
    }
    let h_anchor: Vec<f64> = anchors.iter().map(|&c| h(c)).collect();
    let anchor_sum: f64 = h_anchor.iter().sum();
    let in_singleton = |i: usize| part.group_of(i).is_some_and(|l| part.groups[l].len() == 1);
    let h0: Vec<f64> = (0..values.len())
        .map(|i| if in_singleton(i) { h(values[i]) - anchor_sum } else { 0.0 })
        .collect();
    let components: Vec<(usize, Vec<f64>)> = multi
        .iter()
        .zip(&h_anchor)
        .map(|(&l, &hc)| {
            let vals = (0..values.len())
                .map(|i| {
                    if in_singleton(i) {
                        hc
                    } else if part.groups[l].contains(&i) {
                        h(values[i])
                    } else {
                        0.0
                    }
                })
                .collect();
            (l, vals)
        })
        .collect();
    let reconstruction_error = (0..values.len())
        .map(|i| {
            let sum: f64 = h0[i] + components.iter().map(|(_, v)| v[i]).sum::<f64>();
            (h(values[i]) - sum).abs()
        })
        .fold(0.0, f64::max);
    Ok(FdtDecomposition { h0, components, reconstruction_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geograph::{build_graph, CloudSource, KernelConfig, KernelKind, PointCloud};
    use crate::manifold::sample_uniform;

    fn random_graph(n: usize, seed: u64) -> GeoGraph {
        let cloud = sample_uniform(&ManifoldModel::sphere(), n, seed).unwrap();
        build_graph(&cloud, &KernelConfig::new(KernelKind::DenseGaussian, 0.3, 2)).unwrap()
    }

    #[test]
    fn lanczos_route_keeps_multiplicities() {
        // Equispaced ring: every nonzero eigenvalue is exactly double.
        let n = 200;
        let coords: Vec<f64> = (0..n)
            .flat_map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                [t.cos(), t.sin()]
            })
            .collect();
        let cloud = PointCloud::new(coords, 2, CloudSource::External).unwrap();
        let g = build_graph(&cloud, &KernelConfig::new(KernelKind::SparseCompact, 0.01, 1)).unwrap();
        let full = linalg::sym_eigen(&g.laplacian_dense());
        let spec = eig_sym(&g, 7).unwrap();
        for i in 0..7 {
            assert!((spec.values()[i] - full.values[i]).abs() < 1e-8 * g.norm_bound(), "{i}");
        }
        let tol = EIG_TOL * g.norm_bound();
        let found = |cols: &[usize]| linalg::SymEig {
            values: cols.iter().map(|&c| full.values[c]).collect(),
            vectors: full.vectors.select_columns(cols),
        };
        assert!(lanczos_is_complete(&g, &found(&[0, 1, 2, 3, 4]), tol));
        // one copy of the first double eigenvalue left out
        assert!(!lanczos_is_complete(&g, &found(&[0, 1, 3, 4, 5]), tol));
        let r = random_graph(300, 4);
        let full = linalg::sym_eigen(&r.laplacian_dense());
        let spec = eig_sym(&r, 9).unwrap();
        for i in 0..9 {
            assert!((spec.values()[i] - full.values[i]).abs() < 1e-8 * r.norm_bound().max(1.0));
        }
    }

    #[test]
    fn two_node_spectrum() {
        let cloud = PointCloud::new(vec![0.0, 0.0, 0.5, 0.0], 2, CloudSource::External).unwrap();
        let g = build_graph(&cloud, &KernelConfig::new(KernelKind::DenseGaussian, 0.5, 1)).unwrap();
        let w = g.weight(0, 1);
        let s = eig_sym(&g, 2).unwrap();
        assert!(s.values()[0].abs() < 1e-15);
        assert!((s.values()[1] - 2.0 * w).abs() < 1e-14);
        let v0 = s.vector(0);
        assert!((v0[0] - v0[1]).abs() < 1e-14);
        assert!((crate::geograph::graph_norm(&v0) - 1.0).abs() < 1e-14);
        assert!(eig_sym(&g, 3).is_err());
    }

    #[test]
    fn connected_graph_kernel() {
        let g = random_graph(40, 1);
        let s = eig_sym(&g, 5).unwrap();
        assert!(s.values()[0].abs() < 1e-8);
        let v = s.vector(0);
        assert!((v.amax() - v.amin()).abs() < 1e-6);
        for i in 0..5 {
            for j in 0..5 {
                let ip = graph_inner(&s.vector(i), &s.vector(j)).unwrap();
                assert!((ip - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn heat_routes_agree() {
        let g = random_graph(30, 2);
        let x = DVector::from_fn(30, |i, _| (i as f64 * 0.7).cos());
        for t in [0.1, 1.0, 3.0] {
            let a = heat_apply(&g, t, &x).unwrap();
            let b = heat_apply_series(&g, t, &x).unwrap();
            let c = heat_apply_expm(&g, t, &x).unwrap();
            assert!((&a - &b).norm() / b.norm() < 1e-10);
            assert!((&c - &b).norm() / b.norm() < 1e-10);
        }
        assert_eq!(heat_apply(&g, 0.0, &x).unwrap(), x);
        let ones = DVector::from_element(30, 1.0);
        assert!((heat_apply(&g, 2.0, &ones).unwrap() - &ones).amax() < 1e-12);
        assert!(heat_apply(&g, -1.0, &x).is_err());
    }

    #[test]
    fn truncated_heat_has_tail_bound() {
        let g = random_graph(80, 3);
        let full = SpectralHeat::new(&g).unwrap();
        let trunc = SpectralHeat::from_spectrum(full.spectrum().truncated(20), g.norm_bound());
        let x = DVector::from_fn(80, |i, _| (i as f64).sin());
        let exact = full.apply(0.5, &x).value;
        let approx = trunc.apply(0.5, &x);
        assert!((exact - &approx.value).norm() <= approx.tail_bound + 1e-12);
    }

    #[test]
    fn partition_examples() {
        let p = alpha_partition(&[0.0, 1.0, 1.0, 4.0, 4.0, 9.0], 2.0).unwrap();
        assert_eq!(p.groups, vec![0..3, 3..5, 5..6]);
        assert_eq!((p.count(), p.singletons(), p.multi()), (3, 1, 2));
        assert_eq!(alpha_partition(&[0.0, 1.0, 1.0, 4.0], 10.0).unwrap().count(), 1);
        assert_eq!(alpha_partition(&[0.0, 1.0, 3.0, 6.0], 0.5).unwrap().count(), 4);
        assert!(alpha_partition(&[1.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn eigengap_examples() {
        assert_eq!(eigengap(&[0.0, 1.0, 4.0, 9.0], 2).unwrap(), 1.0);
        assert_eq!(eigengap(&[0.0, 2.0, 4.0, 6.0], 2).unwrap(), 2.0);
        assert_eq!(eigengap(&[0.0, 1.0, 1.0, 4.0], 1).unwrap(), 0.0);
        assert!(eigengap(&[0.0, 1.0, 4.0], 2).is_err());
    }

    #[test]
    fn weyl_examples() {
        // alpha d / C1 = 2, C_d Vol = 3, d = 4
        assert_eq!(weyl_n1(0.5, 4, 1.0, 3.0, 1.0).unwrap(), 1);
        assert_eq!(weyl_n1(1.0, 3, 3.0, 1.0, 1.0).unwrap(), 1);
        assert!(weyl_n1(1.0, 2, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn fdt_examples() {
        let vals = [0.0, 1.0, 1.0, 4.0, 4.0, 9.0];
        let p = alpha_partition(&vals, 2.0).unwrap();
        let h = |l: f64| (-l).exp();
        let d = fdt_decompose(h, &vals, &p, &[0.0, 4.0]).unwrap();
        assert!((d.h0[5] - ((-9f64).exp() - 1.0 - (-4f64).exp())).abs() < 1e-15);
        assert!(d.reconstruction_error < 1e-15);
        assert!(fdt_decompose(h, &vals, &p, &[2.0, 4.0]).is_err());
        let single = alpha_partition(&[3.0], 1.0).unwrap();
        let d = fdt_decompose(h, &[3.0], &single, &[]).unwrap();
        assert_eq!(d.h0, vec![h(3.0)]);
        assert!(d.components.is_empty());
    }

    #[test]
    fn sign_flip_alignment() {
        let m = ManifoldModel::circle();
        let cloud = sample_uniform(&m, 60, 4).unwrap();
        let g = build_graph(&cloud, &KernelConfig::for_manifold(KernelKind::DenseGaussian, crate::geograph::EpsRule::DenseRate, &m)).unwrap();
        // graph "eigenvector" equal to -sqrt(Vol) P_n phi for the constant mode
        let v = DVector::from_element(60, -1.0);
        let spec = Spectrum { values: vec![0.0], vectors: DMatrix::from_column_slice(60, 1, v.as_slice()), residuals: vec![0.0] };
        let r = align_spectra(&spec, &g, &m, 1).unwrap();
        assert_eq!(r.signs, vec![-1]);
        assert!(r.efun_err[0] < 1e-14);
        assert_eq!(r.eval_err, vec![0.0]);
    }

    #[test]
    fn csv_headers() {
        let g = random_graph(10, 5);
        let s = eig_sym(&g, 3).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("index,eigenvalue\n1,"));
    }
}
