use std::f64::consts::PI;

use super::{ManifoldKind, ManifoldModel};

/// Tensor-product quadrature in intrinsic coordinates, stored as ambient
/// nodes with weights summing to the manifold volume.
#[derive(Clone, Debug)]
pub struct Quadrature {
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Quadrature {
    /// `q` nodes per intrinsic dimension.
    ///
    /// Circle and torus use the uniform periodic grid, exact for
    /// trigonometric polynomials of degree below `q`. The sphere uses
    /// Gauss-Legendre nodes in the polar cosine times a uniform azimuthal
    /// grid, exact for spherical harmonic products of degree below `q`.
    pub fn new(m: &ManifoldModel, q: usize) -> Self {
        let h = 2.0 * PI / q as f64;
        match m.kind() {
            ManifoldKind::Circle => {
                let mut nodes = Vec::with_capacity(2 * q);
                for j in 0..q {
                    let t = h * j as f64;
                    nodes.extend_from_slice(&[t.cos(), t.sin()]);
                }
                Quadrature { dim: 2, nodes, weights: vec![h; q] }
            }
            ManifoldKind::FlatTorus => {
                let mut nodes = Vec::with_capacity(4 * q * q);
                for a in 0..q {
                    let u = h * a as f64;
                    for b in 0..q {
                        let v = h * b as f64;
                        nodes.extend_from_slice(&[u.cos(), u.sin(), v.cos(), v.sin()]);
                    }
                }
                Quadrature { dim: 4, nodes, weights: vec![h * h; q * q] }
            }
            ManifoldKind::Sphere => {
                let (zs, ws) = gauss_legendre(q);
                let mut nodes = Vec::with_capacity(3 * q * q);
                let mut weights = Vec::with_capacity(q * q);
                for (z, wz) in zs.iter().zip(&ws) {
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    for b in 0..q {
                        let phi = h * b as f64;
                        nodes.extend_from_slice(&[r * phi.cos(), r * phi.sin(), *z]);
                        weights.push(wz * h);
                    }
                }
                Quadrature { dim: 3, nodes, weights }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.nodes[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.nodes.chunks_exact(self.dim)
    }

    /// Weighted sum of `values` (one per node).
    pub fn integrate(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1], ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d.is_finite() {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}
