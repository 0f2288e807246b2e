//! Discrete-time diffusion filters `h(L) = sum_k h_k e^{-k T L}`.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diffusion::{Diffusion, SeriesDiffusion};
use crate::geograph::{graph_norm, GeoGraph, PointCloud};
use crate::manifold::{manifold_filter_apply, sample_signal, ManifoldModel, ManifoldSignal};
use crate::spectral::{FreqPartition, Spectrum};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Designed,
    Learned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterCoeffs {
    coeffs: Vec<f64>,
    step: f64,
    provenance: Provenance,
}

impl FilterCoeffs {
    /// Designed filter with `T_s = 1`.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        Self::with_step(coeffs, 1.0)
    }

    pub fn with_step(coeffs: Vec<f64>, step: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::invalid("a filter needs at least one tap"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("filter taps must be finite"));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::invalid(format!("sample interval must be positive, got {step}")));
        }
        Ok(FilterCoeffs { coeffs, step, provenance: Provenance::Designed })
    }

    pub fn learned(mut self) -> Self {
        self.provenance = Provenance::Learned;
        self
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn taps(&self) -> usize {
        self.coeffs.len()
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// `sum_k h_k e^{-k T lambda}`
    pub fn response(&self, lambda: f64) -> f64 {
        freq_response_raw(&self.coeffs, self.step, lambda)
    }

    /// `-sum_k k T h_k e^{-k T lambda}`
    pub fn derivative(&self, lambda: f64) -> f64 {
        derivative_raw(&self.coeffs, self.step, lambda)
    }

    /// Reads `k,h_k` rows. Blank lines, `#` comments and a `k,h_k` header
    /// are skipped; indices must run `0, 1, ...`.
    pub fn read(r: impl BufRead, step: f64) -> Result<Self> {
        let mut coeffs = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') || t.starts_with("k,") {
                continue;
            }
            let (k, v) = t
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `k,h_k`", lineno + 1)))?;
            let k: usize = k.trim().parse().map_err(|_| Error::Parse(format!("line {}: bad index `{k}`", lineno + 1)))?;
            let v: f64 = v.trim().parse().map_err(|_| Error::Parse(format!("line {}: bad value `{v}`", lineno + 1)))?;
            if k != coeffs.len() {
                return Err(Error::Parse(format!("line {}: expected index {}, got {k}", lineno + 1, coeffs.len())));
            }
            coeffs.push(v);
        }
        Self::with_step(coeffs, step)
    }

    pub fn write(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "k,h_k")?;
        for (k, h) in self.coeffs.iter().enumerate() {
            writeln!(w, "{k},{h:e}")?;
        }
        Ok(())
    }
}

pub(crate) fn freq_response_raw(h: &[f64], step: f64, lambda: f64) -> f64 {
    let e = (-step * lambda).exp();
    // Horner in e
    h.iter().rev().fold(0.0, |acc, c| acc * e + c)
}

pub(crate) fn derivative_raw(h: &[f64], step: f64, lambda: f64) -> f64 {
    let e = (-step * lambda).exp();
    let mut acc = 0.0;
    let mut pow = 1.0;
    for (k, c) in h.iter().enumerate() {
        acc -= k as f64 * step * c * pow;
        pow *= e;
    }
    acc
}

pub fn freq_response(h: &FilterCoeffs, lambda: f64) -> f64 {
    h.response(lambda)
}

pub fn filter_derivative_response(h: &FilterCoeffs, lambda: f64) -> f64 {
    h.derivative(lambda)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LipschitzMethod {
    /// `sum_k k T |h_k|`
    AnalyticBound,
    /// `max |h'|` on a uniform grid of `10^4` points in `(0, lambda_max]`.
    GridSup,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub a_h: f64,
    pub method: LipschitzMethod,
}

pub const LIPSCHITZ_GRID: usize = 10_000;

pub fn lipschitz_estimate(h: &FilterCoeffs, lambda_max: f64, method: LipschitzMethod) -> Result<LipschitzEstimate> {
    if !(lambda_max > 0.0) {
        return Err(Error::invalid(format!("lambda_max must be positive, got {lambda_max}")));
    }
    let a_h = match method {
        LipschitzMethod::AnalyticBound => {
            h.coeffs.iter().enumerate().map(|(k, c)| k as f64 * h.step * c.abs()).sum()
        }
        LipschitzMethod::GridSup => (1..=LIPSCHITZ_GRID)
            .map(|j| h.derivative(lambda_max * j as f64 / LIPSCHITZ_GRID as f64).abs())
            .fold(0.0, f64::max),
    };
    Ok(LipschitzEstimate { a_h, method })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FdtReport {
    pub pass: bool,
    /// `max |h(lambda_i) - h(lambda_j)|` within each group.
    pub gamma_k: Vec<f64>,
}

/// Checks the response varies by at most `gamma` inside every group.
pub fn fdt_check(h: &FilterCoeffs, values: &[f64], part: &FreqPartition, gamma: f64) -> Result<FdtReport> {
    if !(gamma > 0.0) {
        return Err(Error::invalid(format!("gamma must be positive, got {gamma}")));
    }
    let mut gamma_k = Vec::with_capacity(part.count());
    for r in &part.groups {
        let vals = values
            .get(r.clone())
            .ok_or_else(|| Error::invalid("partition exceeds the eigenvalue list"))?;
        let resp: Vec<f64> = vals.iter().map(|&l| h.response(l)).collect();
        let hi = resp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = resp.iter().copied().fold(f64::INFINITY, f64::min);
        gamma_k.push(hi - lo);
    }
    Ok(FdtReport { pass: gamma_k.iter().all(|&g| g <= gamma), gamma_k })
}

/// `sum_k h_k e^{-k T L} x` by repeated Taylor-series diffusion.
pub fn graph_filter_apply(h: &FilterCoeffs, g: &GeoGraph, x: &DVector<f64>) -> Result<DVector<f64>> {
    graph_filter_apply_with(h, &SeriesDiffusion::new(g, h.step), x)
}

pub fn graph_filter_apply_with(h: &FilterCoeffs, diff: &dyn Diffusion, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != diff.len() {
        return Err(Error::DimensionMismatch { expected: diff.len(), got: x.len() });
    }
    if (diff.step() - h.step).abs() > 1e-15 * h.step {
        return Err(Error::invalid("diffusion step differs from the filter's sample interval"));
    }
    let xm = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
    Ok(diff.apply_taps(&h.coeffs, &xm).column(0).into_owned())
}

/// `sum_i h(lambda_i) <x, phi_i> phi_i` over the pairs in `spec`.
pub fn graph_filter_apply_spectral(h: &FilterCoeffs, spec: &Spectrum, x: &DVector<f64>) -> Result<DVector<f64>> {
    if x.len() != spec.n() {
        return Err(Error::DimensionMismatch { expected: spec.n(), got: x.len() });
    }
    Ok(spec.apply_response(x, |l| h.response(l)))
}

/// `||h(L_n) P_n f - P_n h(L) f||_{G_n}` with `M` manifold modes.
pub fn filter_convergence_error(
    h: &FilterCoeffs,
    g: &GeoGraph,
    f: &ManifoldSignal,
    m: &ManifoldModel,
    truncation: usize,
) -> Result<f64> {
    filter_convergence_error_with(h, &SeriesDiffusion::new(g, h.step), g.cloud(), f, m, truncation)
}

pub fn filter_convergence_error_with(
    h: &FilterCoeffs,
    diff: &dyn Diffusion,
    cloud: &PointCloud,
    f: &ManifoldSignal,
    m: &ManifoldModel,
    truncation: usize,
) -> Result<f64> {
    let hf = manifold_filter_apply(h, f, m, truncation)?;
    let graph_side = graph_filter_apply_with(h, diff, &sample_signal(f, cloud))?;
    let manifold_side = sample_signal(&hf.into(), cloud);
    Ok(graph_norm(&(graph_side - manifold_side)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geograph::{build_graph, KernelConfig, KernelKind};
    use crate::manifold::sample_uniform;
    use crate::spectral::{alpha_partition, eig_sym};

    fn h(c: &[f64]) -> FilterCoeffs {
        FilterCoeffs::new(c.to_vec()).unwrap()
    }

    #[test]
    fn response_examples() {
        assert_eq!(h(&[1.0]).response(3.7), 1.0);
        assert_eq!(h(&[0.0, 1.0]).response(0.0), 1.0);
        assert!((h(&[0.5, 0.5]).response(1.0) - 0.683_939_720_585_721_2).abs() < 1e-15);
        assert_eq!(h(&[1.0]).derivative(2.0), 0.0);
        assert_eq!(h(&[0.0, 1.0]).derivative(0.0), -1.0);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let f = FilterCoeffs::with_step(vec![0.3, -1.2, 0.8, 0.25], 0.7).unwrap();
        for l in [0.1, 1.0, 5.0] {
            let d = 1e-5;
            let fd = (f.response(l + d) - f.response(l - d)) / (2.0 * d);
            assert!((fd - f.derivative(l)).abs() < 1e-6);
        }
    }

    #[test]
    fn lipschitz_examples() {
        let a = lipschitz_estimate(&h(&[0.0, 1.0]), 10.0, LipschitzMethod::AnalyticBound).unwrap();
        assert_eq!(a.a_h, 1.0);
        let g = lipschitz_estimate(&h(&[0.0, 1.0]), 10.0, LipschitzMethod::GridSup).unwrap();
        assert!(g.a_h < 1.0 && g.a_h > 0.998);
        for m in [LipschitzMethod::AnalyticBound, LipschitzMethod::GridSup] {
            assert_eq!(lipschitz_estimate(&h(&[1.0]), 4.0, m).unwrap().a_h, 0.0);
        }
        let f = h(&[0.0, 1.0, -1.0]);
        let an = lipschitz_estimate(&f, 20.0, LipschitzMethod::AnalyticBound).unwrap().a_h;
        assert_eq!(an, 3.0);
        assert!(lipschitz_estimate(&f, 20.0, LipschitzMethod::GridSup).unwrap().a_h <= an);
        assert!(lipschitz_estimate(&f, 0.0, LipschitzMethod::GridSup).is_err());
    }

    #[test]
    fn fdt_examples() {
        let vals = [4.0, 4.0];
        let p = alpha_partition(&vals, 1.0).unwrap();
        let r = fdt_check(&h(&[0.0, 1.0]), &vals, &p, 0.1).unwrap();
        assert!(r.pass && r.gamma_k == vec![0.0]);

        let vals = [0.0, 1.0];
        let p = alpha_partition(&vals, 2.0).unwrap();
        let r = fdt_check(&h(&[0.0, 1.0]), &vals, &p, 0.5).unwrap();
        assert!(!r.pass);
        assert!((r.gamma_k[0] - (1.0 - (-1f64).exp())).abs() < 1e-15);

        let vals = [0.0, 1.0, 1.0, 4.0, 4.0, 9.0];
        let p = alpha_partition(&vals, 2.0).unwrap();
        let r = fdt_check(&h(&[2.5]), &vals, &p, 1e-9).unwrap();
        assert!(r.pass && r.gamma_k.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn routes_and_trivial_cases() {
        let cloud = sample_uniform(&ManifoldModel::sphere(), 20, 11).unwrap();
        let g = build_graph(&cloud, &KernelConfig::new(KernelKind::DenseGaussian, 0.25, 2)).unwrap();
        let x = DVector::from_fn(20, |i, _| (i as f64 * 1.3).sin());
        assert!((graph_filter_apply(&h(&[1.0]), &g, &x).unwrap() - &x).amax() == 0.0);
        let f = h(&[0.4, -0.3, 0.9]);
        let ones = DVector::from_element(20, 1.0);
        let y = graph_filter_apply(&f, &g, &ones).unwrap();
        assert!((y - &ones * f.response(0.0)).amax() < 1e-12);
        let spec = eig_sym(&g, 20).unwrap();
        let a = graph_filter_apply(&f, &g, &x).unwrap();
        let b = graph_filter_apply_spectral(&f, &spec, &x).unwrap();
        assert!((&a - &b).norm() / b.norm() < 1e-8);
        assert!(graph_filter_apply(&f, &g, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn coefficient_file_round_trip() {
        let f = h(&[0.5, -0.25, 1e-3]);
        let mut buf = Vec::new();
        f.write(&mut buf).unwrap();
        let back = FilterCoeffs::read(std::io::Cursor::new(buf), 1.0).unwrap();
        assert_eq!(back, f);
        assert!(FilterCoeffs::read(std::io::Cursor::new("0,1\n2,3\n"), 1.0).is_err());
    }

    #[test]
    fn convergence_error_trivial() {
        let m = ManifoldModel::circle();
        let cloud = sample_uniform(&m, 50, 1).unwrap();
        let g = build_graph(&cloud, &KernelConfig::for_manifold(KernelKind::DenseGaussian, crate::geograph::EpsRule::DenseRate, &m)).unwrap();
        let f = ManifoldSignal::spectral(&m, vec![0.0; 5]).unwrap();
        assert_eq!(filter_convergence_error(&h(&[0.0, 1.0]), &g, &f, &m, 5).unwrap(), 0.0);
        let f = ManifoldSignal::eigenfunction(&m, 2).unwrap();
        assert_eq!(filter_convergence_error(&h(&[1.0]), &g, &f, &m, 2).unwrap(), 0.0);
    }
}
