//! Linearization of subsystems at fixed points: Jacobian intertwining,
//! eigenvector extension, resonance tests and Laplace averages.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::dynamics::{SparseSystem, SystemKind};
use crate::error::{validation, Error, Result};
use crate::linalg::{apply_real, eig_general};
use crate::poly::{binomial, exponents_of_degree};
use crate::sparsity_graph::IndexSet;

/// Upper bound on resonance candidates examined.
pub const RESONANCE_CAP: u64 = 10_000_000;
/// Tolerance on `‖f(x*)‖` (flows) or `‖f(x*) − x*‖` (maps).
pub const FIXED_POINT_TOL: f64 = 1e-9;
/// Eigenvalue matching tolerance between system and subsystem.
pub const MATCH_TOL: f64 = 1e-8;

/// `w̄` with `w̄_{I_k} = w_k` and zeros elsewhere.
pub fn extend_eigenvector<T: Copy + Default>(w: &[T], set: &IndexSet, n: usize) -> Result<Vec<T>> {
    set.check_range(n)?;
    if w.len() != set.len() {
        return validation(format!("vector of length {} for an index set of size {}", w.len(), set.len()));
    }
    let mut out = vec![T::default(); n];
    for (k, i) in set.iter().enumerate() {
        out[i - 1] = w[k];
    }
    Ok(out)
}

fn select(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// `‖DΠ_I Df(x) − Df_I(Π_I x) DΠ_I‖_max`.
///
/// For a set that is not a subsystem, `f_I` is taken as the restriction of
/// `f` with the remaining coordinates frozen at `x`, so the residual
/// measures exactly the neglected couplings.
pub fn check_jacobian_intertwining(sys: &SparseSystem, set: &IndexSet, x: &[f64]) -> Result<f64> {
    set.check_range(sys.n())?;
    if x.len() != sys.n() {
        return validation("state dimension mismatch");
    }
    let rows = set.zero_based();
    let all: Vec<usize> = (0..sys.n()).collect();
    let jac = sys.linearize(x);
    let left = select(&jac, &rows, &all);
    let sub = if sys.graph().is_subsystem(set)? {
        sys.project(set)?.linearize(&set.project(x))
    } else {
        select(&jac, &rows, &rows)
    };
    let mut right = DMatrix::zeros(rows.len(), sys.n());
    for (k, &c) in rows.iter().enumerate() {
        right.set_column(c, &sub.column(k));
    }
    Ok((left - right).amax())
}

/// `λ_i = Σ_{j≠i} m_j λ_j` with `2 ≤ |m| ≤ k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ResonanceWitness {
    /// 1-based.
    pub i: usize,
    pub m: Vec<u32>,
    pub order: u32,
}

fn resonance_candidates(n: usize, k: u32) -> u64 {
    if n < 2 {
        return 0;
    }
    let r = n as u64 - 1;
    let per_i: u64 = (2..=k as u64).map(|s| binomial(s + r - 1, r - 1)).sum();
    per_i.saturating_mul(n as u64)
}

/// Default tolerance `1e-9 · max|λ|`.
pub fn default_resonance_tol(eigs: &[Complex64]) -> f64 {
    1e-9 * eigs.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Exhaustive search, `i` ascending, then by order, then by descending
/// lexicographic `m`. Returns the first witness.
pub fn is_resonant(eigs: &[Complex64], k: u32, tol: Option<f64>) -> Result<Option<ResonanceWitness>> {
    if k < 2 {
        return validation("resonance order must be at least 2");
    }
    let n = eigs.len();
    let count = resonance_candidates(n, k);
    if count > RESONANCE_CAP {
        return Err(Error::Overflow { cap: RESONANCE_CAP as usize, found: count as usize });
    }
    if n < 2 {
        return Ok(None);
    }
    let tol = tol.unwrap_or_else(|| default_resonance_tol(eigs));
    let others: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| j != i).collect()).collect();
    for i in 0..n {
        for s in 2..=k {
            for mm in exponents_of_degree(n - 1, s) {
                let mut acc = Complex64::new(0.0, 0.0);
                for (&j, &e) in others[i].iter().zip(&mm) {
                    acc += eigs[j] * e as f64;
                }
                if (eigs[i] - acc).norm() <= tol {
                    let mut m = vec![0; n];
                    for (&j, &e) in others[i].iter().zip(&mm) {
                        m[j] = e;
                    }
                    return Ok(Some(ResonanceWitness { i: i + 1, m, order: s }));
                }
            }
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Serialize)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for Complex {
    fn from(z: Complex64) -> Self {
        Complex { re: z.re, im: z.im }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Pairing {
    /// 0-based index into the full spectrum.
    pub full: usize,
    /// 0-based index into the subsystem spectrum.
    pub sub: usize,
    pub eigenvalue_gap: f64,
    /// `‖Df_I Π_I v − λ Π_I v‖ / ‖Π_I v‖` for the full eigenvector `v`.
    pub projected_residual: f64,
    /// `‖Df^T w̄ − λ w̄‖` for the extended left eigenvector `w̄`.
    pub extended_left_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesesReport {
    pub diagonalizable: bool,
    pub simple_eigenvalues: bool,
    /// `k` with `k > max Re λ_i / Re λ_j`, when all real parts share a sign.
    pub nonresonance_order: Option<u32>,
    /// `"non-resonant"`, `"resonant"` or `"not evaluated"`.
    pub nonresonance: String,
    pub witness: Option<ResonanceWitness>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub fixed_point: Vec<f64>,
    pub full_spectrum: Vec<Complex>,
    pub subsystem_spectrum: Vec<Complex>,
    pub pairings: Vec<Pairing>,
    pub unmatched_subsystem: Vec<usize>,
    /// Full eigenvectors with `Π_I v ≠ 0` that found no partner.
    pub unmatched_full: Vec<usize>,
    pub nonresonance_order_checked: Option<u32>,
    pub hypotheses_report: HypothesesReport,
}

fn fixed_point_defect(sys: &SparseSystem, x: &[f64]) -> Vec<f64> {
    let fx = sys.eval(x);
    match sys.kind() {
        SystemKind::Continuous => fx,
        SystemKind::Discrete => fx.iter().zip(x).map(|(a, b)| a - b).collect(),
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn cnorm(v: &[Complex64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// Damped Newton iteration for `f(x) = 0` (flows) or `f(x) = x` (maps).
pub fn find_fixed_point(sys: &SparseSystem, seed: &[f64], max_iter: usize) -> Result<Vec<f64>> {
    if seed.len() != sys.n() {
        return validation("seed dimension mismatch");
    }
    let mut x = seed.to_vec();
    let mut r = fixed_point_defect(sys, &x);
    for _ in 0..max_iter {
        if norm(&r) <= 1e-13 * (1.0 + norm(&x)) {
            break;
        }
        let mut jac = sys.linearize(&x);
        if sys.kind() == SystemKind::Discrete {
            for i in 0..sys.n() {
                jac[(i, i)] -= 1.0;
            }
        }
        let rhs = nalgebra::DVector::from_iterator(sys.n(), r.iter().map(|v| -v));
        let step = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("singular Jacobian in Newton iteration".into()))?;
        let mut t = 1.0;
        let r0 = norm(&r);
        loop {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            let rt = fixed_point_defect(sys, &trial);
            if norm(&rt) < r0 || t < 1e-8 {
                x = trial;
                r = rt;
                break;
            }
            t *= 0.5;
        }
    }
    if norm(&r) > FIXED_POINT_TOL {
        return Err(Error::Numerical(format!("Newton iteration stalled at defect {:.3e}", norm(&r))));
    }
    Ok(x)
}

/// Compares `spec Df(x*)` with `spec Df_I(Π_I x*)` and pairs eigenvectors.
pub fn subsystem_spectrum_embedding(sys: &SparseSystem, set: &IndexSet, xstar: &[f64]) -> Result<SpectrumReport> {
    if xstar.len() != sys.n() {
        return validation("fixed point dimension mismatch");
    }
    let defect = norm(&fixed_point_defect(sys, xstar));
    if defect > FIXED_POINT_TOL {
        return validation(format!("not a fixed point: defect {defect:.3e} > {FIXED_POINT_TOL:e}"));
    }
    let sub_sys = sys.project(set)?;
    let jac = sys.linearize(xstar);
    let sub_jac = sub_sys.linearize(&set.project(xstar));
    let (full_l, full_v) = eig_general(&jac)?;
    let (sub_l, _) = eig_general(&sub_jac)?;
    let (left_l, left_v) = eig_general(&sub_jac.transpose())?;
    let rows = set.zero_based();

    let mut used = vec![false; full_l.len()];
    let mut unmatched_subsystem = Vec::new();
    let mut pairings = Vec::new();
    for (s, &lam) in sub_l.iter().enumerate() {
        let scale = 1.0f64.max(lam.norm());
        let candidate = (0..full_l.len())
            .filter(|&f| !used[f])
            .map(|f| (f, (full_l[f] - lam).norm()))
            .filter(|&(f, gap)| {
                let pv: Vec<Complex64> = rows.iter().map(|&r| full_v[(r, f)]).collect();
                gap <= MATCH_TOL * scale && cnorm(&pv) > MATCH_TOL
            })
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let Some((f, gap)) = candidate else {
            unmatched_subsystem.push(s);
            continue;
        };
        used[f] = true;
        let pv: Vec<Complex64> = rows.iter().map(|&r| full_v[(r, f)]).collect();
        let av = apply_real(&sub_jac, &pv);
        let res: Vec<Complex64> = av.iter().zip(&pv).map(|(a, p)| a - lam * p).collect();
        let projected_residual = cnorm(&res) / cnorm(&pv);
        // left eigenvector of the subsystem with the closest eigenvalue
        let li = (0..left_l.len())
            .min_by(|&a, &b| (left_l[a] - lam).norm().total_cmp(&(left_l[b] - lam).norm()))
            .unwrap();
        let w: Vec<Complex64> = left_v.column(li).iter().copied().collect();
        let wbar = extend_eigenvector(&w, set, sys.n())?;
        let aw = apply_real(&jac.transpose(), &wbar);
        let lres: Vec<Complex64> = aw.iter().zip(&wbar).map(|(a, p)| a - left_l[li] * p).collect();
        pairings.push(Pairing {
            full: f,
            sub: s,
            eigenvalue_gap: gap,
            projected_residual,
            extended_left_residual: cnorm(&lres),
        });
    }
    let unmatched_full = (0..full_l.len())
        .filter(|&f| {
            let pv: Vec<Complex64> = rows.iter().map(|&r| full_v[(r, f)]).collect();
            !used[f] && cnorm(&pv) > 1e-6
        })
        .collect();
    let hypotheses_report = hypotheses(&full_l, &full_v)?;
    Ok(SpectrumReport {
        fixed_point: xstar.to_vec(),
        full_spectrum: full_l.iter().map(|&z| z.into()).collect(),
        subsystem_spectrum: sub_l.iter().map(|&z| z.into()).collect(),
        pairings,
        unmatched_subsystem,
        unmatched_full,
        nonresonance_order_checked: hypotheses_report.nonresonance_order,
        hypotheses_report,
    })
}

/// Checkable preconditions for principal eigenfunctions at a fixed point.
pub fn hypotheses(eigs: &[Complex64], vecs: &DMatrix<Complex64>) -> Result<HypothesesReport> {
    let n = eigs.len();
    let scale = eigs.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let simple = (0..n).all(|i| (i + 1..n).all(|j| (eigs[i] - eigs[j]).norm() > MATCH_TOL * scale));
    let diagonalizable = if n == 0 {
        true
    } else {
        let sv = vecs.clone().svd(false, false).singular_values;
        let (lo, hi) = sv.iter().fold((f64::MAX, 0.0f64), |(a, b), &s| (a.min(s), b.max(s)));
        lo > 1e-8 * hi
    };
    let re: Vec<f64> = eigs.iter().map(|z| z.re).collect();
    let same_sign = !re.is_empty() && (re.iter().all(|&r| r > 0.0) || re.iter().all(|&r| r < 0.0));
    let order = if same_sign {
        let ratio = re
            .iter()
            .flat_map(|a| re.iter().map(move |b| a / b))
            .fold(0.0, f64::max);
        Some((ratio.floor() as u32 + 1).max(2))
    } else {
        None
    };
    let (nonresonance, witness) = match order {
        None => ("not evaluated".to_string(), None),
        Some(k) => match is_resonant(eigs, k, None) {
            Ok(None) => ("non-resonant".to_string(), None),
            Ok(Some(w)) => ("resonant".to_string(), Some(w)),
            Err(Error::Overflow { .. }) => ("not evaluated".to_string(), None),
            Err(e) => return Err(e),
        },
    };
    Ok(HypothesesReport { diagonalizable, simple_eigenvalues: simple, nonresonance_order: order, nonresonance, witness })
}

/// `(1/T) ∫₀ᵀ e^{−λt} h(φ_t(x0)) dt` by the trapezoid rule on the RK4 grid.
pub fn laplace_average<H>(sys: &SparseSystem, h: H, lambda: Complex64, x0: &[f64], t_end: f64, dt: f64) -> Result<Complex64>
where
    H: Fn(&[f64]) -> f64,
{
    if sys.kind() != SystemKind::Continuous {
        return validation("Laplace averages need a continuous-time system");
    }
    if !(t_end > 0.0) || !(dt > 0.0) {
        return validation("T and dt must be positive");
    }
    let steps = (t_end / dt).round().max(1.0) as usize;
    let dt = t_end / steps as f64;
    let traj = sys.integrate(x0, dt, steps)?;
    let vals: Vec<Complex64> = traj
        .states
        .iter()
        .zip(&traj.times)
        .map(|(x, &t)| (-lambda * t).exp() * h(x))
        .collect();
    let mut s = (vals[0] + vals[steps]) * 0.5;
    for v in &vals[1..steps] {
        s += v;
    }
    Ok(s * dt / t_end)
}
