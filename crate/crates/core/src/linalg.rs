//! Dense linear algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// `R G⁻¹` for symmetric positive definite `G` (Cholesky).
pub fn right_solve_spd(r: &DMatrix<f64>, g: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = g
        .cholesky()
        .ok_or_else(|| Error::Numerical("regularized Gram matrix is not positive definite".into()))?;
    // (G⁻¹ Rᵀ)ᵀ
    Ok(chol.solve(&r.transpose()).transpose())
}

/// `R A⁺` where the pseudo-inverse drops singular values below
/// `rel_cutoff · σ_max`.
pub fn right_pinv_solve(r: &DMatrix<f64>, a: &DMatrix<f64>, rel_cutoff: f64) -> Result<DMatrix<f64>> {
    let svd = a.clone().try_svd(true, true, f64::EPSILON, 0).ok_or_else(|| {
        Error::Numerical("singular value decomposition did not converge".into())
    })?;
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let pinv = svd
        .pseudo_inverse(rel_cutoff * smax)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(r * pinv)
}

/// Eigenvalues and unit right eigenvectors of a general real matrix,
/// via complex Schur form and triangular back substitution.
pub fn eig_general(a: &DMatrix<f64>) -> Result<(Vec<Complex64>, DMatrix<Complex64>)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Validation("eigen-decomposition of a non-square matrix".into()));
    }
    if n == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    let ac = a.map(|v| Complex64::new(v, 0.0));
    let schur = ac
        .try_schur(f64::EPSILON, 10_000 * n.max(10))
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let norm = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let small = f64::EPSILON * norm;
    let lambdas: Vec<Complex64> = (0..n).map(|k| t[(k, k)]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n {
        let lam = lambdas[k];
        y.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        y[k] = Complex64::new(1.0, 0.0);
        for j in (0..k).rev() {
            let mut s = Complex64::new(0.0, 0.0);
            for i in j + 1..=k {
                s += t[(j, i)] * y[i];
            }
            let mut den = t[(j, j)] - lam;
            if den.norm() < small {
                den = Complex64::new(small, 0.0);
            }
            y[j] = -s / den;
        }
        let v = &q.columns(0, k + 1) * DVector::from_column_slice(&y[..=k]);
        let nv = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        vecs.set_column(k, &(v / Complex64::new(nv, 0.0)));
    }
    Ok((lambdas, vecs))
}

/// Real-arithmetic `A v` for complex `v`.
pub fn apply_real(a: &DMatrix<f64>, v: &[Complex64]) -> Vec<Complex64> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| v[j] * a[(i, j)]).sum())
        .collect()
}

/// Affine parametrization of `{y : A y = b}` from reduced row echelon form.
#[derive(Debug, Clone)]
pub struct AffineSolution {
    /// Particular solution with all free variables set to zero.
    pub particular: DVector<f64>,
    /// Column `k` is the unit direction of free variable `free[k]`.
    pub basis: DMatrix<f64>,
    pub pivots: Vec<usize>,
    pub free: Vec<usize>,
    pub rank: usize,
}

/// Solves `A y = b` by Gauss-Jordan elimination with partial pivoting.
/// Rows that reduce to `0 = c` with `|c|` above tolerance signal
/// inconsistency.
pub fn rref_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<AffineSolution> {
    let (p, n) = a.shape();
    let mut m = DMatrix::zeros(p, n + 1);
    m.view_mut((0, 0), (p, n)).copy_from(a);
    m.set_column(n, b);
    let scale = a.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    let tol = 1e-11 * scale;
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..n {
        if row == p {
            break;
        }
        let (best, val) = (row..p)
            .map(|r| (r, m[(r, col)].abs()))
            .fold((row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= tol {
            for r in row..p {
                m[(r, col)] = 0.0;
            }
            continue;
        }
        m.swap_rows(row, best);
        let piv = m[(row, col)];
        for c in 0..=n {
            m[(row, c)] /= piv;
        }
        for r in 0..p {
            if r != row {
                let f = m[(r, col)];
                if f != 0.0 {
                    for c in 0..=n {
                        let v = m[(row, c)];
                        m[(r, c)] -= f * v;
                    }
                    m[(r, col)] = 0.0;
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    let rank = pivots.len();
    let bscale = b.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    for r in rank..p {
        if m[(r, n)].abs() > 1e-9 * bscale {
            return Err(Error::Infeasible(format!(
                "equality constraints are inconsistent (residual {:.3e} after elimination)",
                m[(r, n)].abs()
            )));
        }
    }
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    let mut particular = DVector::zeros(n);
    for (r, &c) in pivots.iter().enumerate() {
        particular[c] = m[(r, n)];
    }
    let mut basis = DMatrix::zeros(n, free.len());
    for (k, &fc) in free.iter().enumerate() {
        basis[(fc, k)] = 1.0;
        for (r, &pc) in pivots.iter().enumerate() {
            basis[(pc, k)] = -m[(r, fc)];
        }
    }
    Ok(AffineSolution { particular, basis, pivots, free, rank })
}
