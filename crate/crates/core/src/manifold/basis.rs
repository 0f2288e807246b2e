//! Closed-form Laplace-Beltrami eigenfunctions.

use std::f64::consts::PI;

use super::{ManifoldKind, ManifoldModel};

/// Orthonormal Fourier function on `[0, 2pi)`: the constant for `k = 0`,
/// otherwise `cos(k t)/sqrt(pi)` or `sin(k t)/sqrt(pi)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fourier {
    pub k: u32,
    pub sine: bool,
}

impl Fourier {
    pub const CONSTANT: Fourier = Fourier { k: 0, sine: false };

    /// Canonical position: constant, cos 1, sin 1, cos 2, ...
    pub fn ordinal(&self) -> u32 {
        if self.k == 0 {
            0
        } else {
            2 * self.k - 1 + self.sine as u32
        }
    }

    pub fn eigenvalue(&self) -> f64 {
        (self.k as f64).powi(2)
    }

    pub fn eval(&self, t: f64) -> f64 {
        if self.k == 0 {
            1.0 / (2.0 * PI).sqrt()
        } else if self.sine {
            (self.k as f64 * t).sin() / PI.sqrt()
        } else {
            (self.k as f64 * t).cos() / PI.sqrt()
        }
    }
}

/// Identifies one eigenfunction of a specific manifold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Circle(Fourier),
    /// Real spherical harmonic of degree `l` and order `m` (`-l..=l`;
    /// negative orders carry the sine factor).
    Sphere { l: u32, m: i32 },
    Torus(Fourier, Fourier),
}

impl Mode {
    pub fn eigenvalue(&self) -> f64 {
        match *self {
            Mode::Circle(f) => f.eigenvalue(),
            Mode::Sphere { l, .. } => (l * (l + 1)) as f64,
            Mode::Torus(a, b) => a.eigenvalue() + b.eigenvalue(),
        }
    }
}

/// First `count` modes in canonical order: ascending eigenvalue, then
/// cos before sin (circle), lexicographic `(l, m)` (sphere) and
/// lexicographic `(k1, k2)` (torus).
pub(crate) fn canonical_modes(kind: ManifoldKind, count: usize) -> Vec<Mode> {
    match kind {
        ManifoldKind::Circle => {
            let mut out = Vec::with_capacity(count);
            out.push(Mode::Circle(Fourier::CONSTANT));
            let mut k = 1;
            while out.len() < count {
                out.push(Mode::Circle(Fourier { k, sine: false }));
                out.push(Mode::Circle(Fourier { k, sine: true }));
                k += 1;
            }
            out.truncate(count);
            out
        }
        ManifoldKind::Sphere => {
            let mut out = Vec::with_capacity(count);
            let mut l = 0u32;
            while out.len() < count {
                for m in -(l as i32)..=(l as i32) {
                    out.push(Mode::Sphere { l, m });
                }
                l += 1;
            }
            out.truncate(count);
            out
        }
        ManifoldKind::FlatTorus => {
            // All modes with k1^2 + k2^2 <= kmax^2 contain the first `count`
            // once the disc holds at least `count` lattice functions.
            let mut kmax = 1u32;
            loop {
                let fourier: Vec<Fourier> = (0..=kmax)
                    .flat_map(|k| {
                        if k == 0 {
                            vec![Fourier::CONSTANT]
                        } else {
                            vec![Fourier { k, sine: false }, Fourier { k, sine: true }]
                        }
                    })
                    .collect();
                let mut modes: Vec<Mode> = fourier
                    .iter()
                    .flat_map(|&a| fourier.iter().map(move |&b| Mode::Torus(a, b)))
                    .filter(|m| m.eigenvalue() <= (kmax * kmax) as f64)
                    .collect();
                if modes.len() >= count {
                    modes.sort_by(|x, y| {
                        let (Mode::Torus(a1, b1), Mode::Torus(a2, b2)) = (x, y) else {
                            unreachable!()
                        };
                        x.eigenvalue()
                            .total_cmp(&y.eigenvalue())
                            .then(a1.k.cmp(&a2.k))
                            .then(b1.k.cmp(&b2.k))
                            .then(a1.ordinal().cmp(&a2.ordinal()))
                            .then(b1.ordinal().cmp(&b2.ordinal()))
                    });
                    modes.truncate(count);
                    return modes;
                }
                kmax += 1;
            }
        }
    }
}

/// Evaluates a batch of eigenfunctions at one ambient point.
///
/// Points are mapped to intrinsic coordinates (angle for the circle,
/// polar cosine and azimuth for the sphere, two angles for the torus);
/// small off-manifold perturbations are projected away.
pub(crate) fn eval_modes(m: &ManifoldModel, modes: &[Mode], x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(modes.len(), out.len());
    match m.kind() {
        ManifoldKind::Circle => {
            let t = x[1].atan2(x[0]);
            for (o, mode) in out.iter_mut().zip(modes) {
                let Mode::Circle(f) = mode else { panic!("mode {mode:?} is not a circle mode") };
                *o = f.eval(t);
            }
        }
        ManifoldKind::FlatTorus => {
            let u = x[1].atan2(x[0]);
            let v = x[3].atan2(x[2]);
            for (o, mode) in out.iter_mut().zip(modes) {
                let Mode::Torus(a, b) = mode else { panic!("mode {mode:?} is not a torus mode") };
                *o = a.eval(u) * b.eval(v);
            }
        }
        ManifoldKind::Sphere => {
            let lmax = modes
                .iter()
                .map(|mode| match mode {
                    Mode::Sphere { l, .. } => *l,
                    other => panic!("mode {other:?} is not a sphere mode"),
                })
                .max()
                .unwrap_or(0) as usize;
            let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
            let z = if r > 0.0 { (x[2] / r).clamp(-1.0, 1.0) } else { 1.0 };
            let phi = x[1].atan2(x[0]);
            let table = NormalizedLegendre::new(lmax, z);
            for (o, mode) in out.iter_mut().zip(modes) {
                let Mode::Sphere { l, m } = *mode else { unreachable!() };
                let am = m.unsigned_abs();
                let p = table.get(l as usize, am as usize);
                let azimuth = if m == 0 {
                    1.0 / (2.0 * PI).sqrt()
                } else if m > 0 {
                    (am as f64 * phi).cos() / PI.sqrt()
                } else {
                    (am as f64 * phi).sin() / PI.sqrt()
                };
                *o = p * azimuth;
            }
        }
    }
}

/// Associated Legendre functions normalized so that
/// `int_{-1}^{1} P(l, m)(z)^2 dz = 1`.
struct NormalizedLegendre {
    lmax: usize,
    values: Vec<f64>,
}

impl NormalizedLegendre {
    fn new(lmax: usize, z: f64) -> Self {
        let stride = lmax + 1;
        let mut values = vec![0.0; stride * stride];
        let s = (1.0 - z * z).max(0.0).sqrt();
        let idx = |l: usize, m: usize| l * stride + m;
        values[idx(0, 0)] = 1.0 / 2f64.sqrt();
        for m in 1..=lmax {
            let mf = m as f64;
            values[idx(m, m)] = -((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s * values[idx(m - 1, m - 1)];
        }
        for m in 0..lmax {
            values[idx(m + 1, m)] = (2.0 * m as f64 + 3.0).sqrt() * z * values[idx(m, m)];
        }
        for m in 0..=lmax {
            let mf = m as f64;
            for l in (m + 2)..=lmax {
                let lf = l as f64;
                let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                let b = (((lf - 1.0).powi(2) - mf * mf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
                values[idx(l, m)] = a * (z * values[idx(l - 1, m)] - b * values[idx(l - 2, m)]);
            }
        }
        NormalizedLegendre { lmax, values }
    }

    fn get(&self, l: usize, m: usize) -> f64 {
        debug_assert!(l <= self.lmax && m <= l);
        self.values[l * (self.lmax + 1) + m]
    }
}
