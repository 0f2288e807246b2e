//! Dense and iterative symmetric eigensolvers, matrix exponentials and
//! orthogonal Procrustes.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

/// Eigenpairs sorted by ascending eigenvalue.
#[derive(Clone, Debug)]
pub struct SymEig {
    pub values: Vec<f64>,
    /// Unit Euclidean-norm eigenvectors as columns.
    pub vectors: DMatrix<f64>,
}

/// Full eigendecomposition of a symmetric matrix.
pub fn sym_eigen(a: &DMatrix<f64>) -> SymEig {
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(a.nrows(), a.nrows(), |r, c| eig.eigenvectors[(r, order[c])]);
    SymEig { values, vectors }
}

/// `||A v_i - lambda_i v_i||` for each column.
pub fn residuals(apply: impl Fn(&DMatrix<f64>) -> DMatrix<f64>, values: &[f64], vectors: &DMatrix<f64>) -> Vec<f64> {
    let av = apply(vectors);
    (0..values.len())
        .map(|i| (av.column(i) - vectors.column(i) * values[i]).norm())
        .collect()
}

/// Lanczos basis and tridiagonal projection of dimension `dim`, with full
/// reorthogonalisation. An invariant subspace is continued with a fresh
/// random direction.
fn krylov(
    apply: &impl Fn(&DVector<f64>) -> DVector<f64>,
    start: &DVector<f64>,
    dim: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> (Vec<DVector<f64>>, DMatrix<f64>) {
    use rand::Rng;
    let n = start.len();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(dim);
    let mut alpha = Vec::with_capacity(dim);
    let mut beta: Vec<f64> = Vec::with_capacity(dim);
    let mut q = start.normalize();
    for j in 0..dim {
        let mut w = apply(&q);
        let a = q.dot(&w);
        w -= &q * a;
        if j > 0 {
            w -= &basis[j - 1] * beta[j - 1];
        }
        basis.push(q.clone());
        alpha.push(a);
        // two passes of classical Gram-Schmidt
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w -= b * c;
            }
        }
        let bnorm = w.norm();
        if j + 1 == dim {
            break;
        }
        if bnorm < 1e-12 {
            let mut r = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
            for _ in 0..2 {
                for b in &basis {
                    let c = b.dot(&r);
                    r -= b * c;
                }
            }
            beta.push(0.0);
            q = r.normalize();
        } else {
            beta.push(bnorm);
            q = w / bnorm;
        }
    }
    let m = alpha.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    (basis, t)
}

fn random_start(n: usize, seed: u64) -> (DVector<f64>, rand_chacha::ChaCha8Rng) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let start = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
    (start, rng)
}

/// `k` smallest eigenpairs of a symmetric operator by Lanczos with full
/// reorthogonalisation. The Krylov dimension doubles until every wanted
/// residual is below `tol`, reaching `n` at worst.
pub fn lanczos_smallest(
    apply: impl Fn(&DVector<f64>) -> DVector<f64>,
    n: usize,
    k: usize,
    tol: f64,
    seed: u64,
) -> Result<SymEig> {
    if k == 0 || k > n {
        return Err(Error::invalid(format!("need 1 <= k <= n, got k = {k}, n = {n}")));
    }
    let (start, mut rng) = random_start(n, seed);
    let mut dim = n.min((2 * k + 40).max(120));
    loop {
        let (basis, t) = krylov(&apply, &start, dim, &mut rng);
        let ritz = sym_eigen(&t);
        let q_mat = DMatrix::from_columns(&basis);
        let values: Vec<f64> = ritz.values[..k].to_vec();
        let vectors = &q_mat * ritz.vectors.columns(0, k);
        let res: Vec<f64> = (0..k)
            .map(|i| {
                let v = vectors.column(i).into_owned();
                (apply(&v) - &v * values[i]).norm()
            })
            .collect();
        let worst = res.iter().fold(0.0f64, |a, &b| a.max(b));
        if worst <= tol {
            return Ok(SymEig { values, vectors });
        }
        if dim == n {
            return Err(Error::NoConvergence { max_residual: worst, tolerance: tol, residuals: res });
        }
        dim = n.min(2 * dim);
    }
}

/// Smallest Ritz value of a `dim`-step Lanczos run, an upper bound on the
/// smallest eigenvalue that is accurate when that eigenvalue is isolated.
pub fn lanczos_min_ritz(apply: impl Fn(&DVector<f64>) -> DVector<f64>, n: usize, dim: usize, seed: u64) -> f64 {
    let (start, mut rng) = random_start(n, seed);
    let (_, t) = krylov(&apply, &start, dim.clamp(1, n), &mut rng);
    sym_eigen(&t).values[0]
}

/// `exp(A)` by Pade-13 scaling and squaring. Intended as an oracle for
/// small matrices.
pub fn expm(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;
    let n = a.nrows();
    let norm = one_norm(a);
    let s = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a / 2f64.powi(s);
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * B[13] + &a4 * B[11] + &a2 * B[9]) + &a6 * B[7] + &a4 * B[5] + &a2 * B[3] + &id * B[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * B[12] + &a4 * B[10] + &a2 * B[8]) + &a6 * B[6] + &a4 * B[4] + &a2 * B[2] + &id * B[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::invalid("singular Pade denominator"))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

pub fn one_norm(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols()).map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `exp(-t A) X` for symmetric positive semidefinite `A` with `||A|| <= norm`.
/// Taylor series of the shifted `A - norm/2` over substeps with `h norm / 2 <= 4`.
pub fn expm_neg_action(
    apply: impl Fn(&DMatrix<f64>) -> DMatrix<f64>,
    x: &DMatrix<f64>,
    t: f64,
    norm: f64,
) -> DMatrix<f64> {
    if t == 0.0 || x.is_empty() {
        return x.clone();
    }
    let mu = 0.5 * norm;
    let steps = (t * mu / 4.0).ceil().max(1.0) as usize;
    let h = t / steps as f64;
    let scale = (-h * mu).exp();
    let mut f = x.clone();
    for _ in 0..steps {
        let mut term = f.clone();
        let mut acc = f.clone();
        for j in 1..=96 {
            term = (apply(&term) - &term * mu) * (-h / j as f64);
            acc += &term;
            if term.amax() <= 1e-17 * acc.amax().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        f = acc * scale;
    }
    f
}

/// Orthogonal `R` minimising `||A - B R||_F`.
pub fn procrustes(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let m = b.transpose() * a;
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    u * v_t
}
