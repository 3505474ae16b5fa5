//! First-order solver for the moment relaxations.
//!
//! Equalities are eliminated once (`y = y_p + Q s`, `Q` orthonormal), so
//! the iterates satisfy them to rounding. What remains is
//! `min cᵀy  s.t.  L y ∈ K` with `L` stacking the localizing blocks in
//! scaled-svec form and `K` a product of PSD cones, solved by ADMM on the
//! splitting `L y = Z`, `Z ∈ K`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::rref_solve;
use crate::rng::rng_from_seed;

use super::{eval_form, EqualityKind, MomentProblem, MomentVector};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub rho: f64,
    /// Initial full variable vector.
    #[serde(skip)]
    pub warm_start: Option<Vec<f64>>,
    /// Amplitude of uniform noise added to the warm start.
    pub warm_start_noise: f64,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { max_iter: 50_000, tol: 1e-9, rho: 1.0, warm_start: None, warm_start_noise: 0.0, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    InfeasibleDetected,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    /// Unit mass and invariance equalities.
    pub equality_max: f64,
    pub overlap_max: f64,
    pub psd_min_eig: f64,
    pub block_min_eigs: Vec<f64>,
    pub feasible: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SdpSolution {
    pub values: Vec<MomentVector>,
    #[serde(skip)]
    pub y: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub residuals: Option<FeasibilityReport>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone().symmetric_eigenvalues().min()
}

/// Residuals of a variable vector against every constraint family.
pub fn verify_feasibility(y: &[f64], prob: &MomentProblem, tol: f64) -> Result<FeasibilityReport> {
    if y.len() != prob.nvars {
        return Err(Error::Validation(format!("{} values for {} variables", y.len(), prob.nvars)));
    }
    let mut equality_max: f64 = 0.0;
    let mut overlap_max: f64 = 0.0;
    for e in &prob.equalities {
        let r = (eval_form(&e.form, y) - e.rhs).abs();
        match e.kind {
            EqualityKind::Overlap => overlap_max = overlap_max.max(r),
            _ => equality_max = equality_max.max(r),
        }
    }
    let block_min_eigs: Vec<f64> = prob.blocks.iter().map(|b| min_eig(&b.eval(y))).collect();
    let psd_min_eig = block_min_eigs.iter().copied().fold(f64::INFINITY, f64::min);
    let psd_min_eig = if psd_min_eig.is_finite() { psd_min_eig } else { 0.0 };
    Ok(FeasibilityReport {
        equality_max,
        overlap_max,
        psd_min_eig,
        feasible: equality_max <= tol && overlap_max <= tol && psd_min_eig >= -tol,
        block_min_eigs,
    })
}

/// Scaled svec layout of the stacked blocks.
struct Cones {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    dim: usize,
}

impl Cones {
    fn new(sizes: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut dim = 0;
        for &s in &sizes {
            offsets.push(dim);
            dim += s * (s + 1) / 2;
        }
        Cones { sizes, offsets, dim }
    }

    fn pairs(s: usize) -> impl Iterator<Item = (usize, usize)> {
        (0..s).flat_map(move |j| (0..=j).map(move |i| (i, j)))
    }

    fn unpack(&self, b: usize, v: &[f64]) -> DMatrix<f64> {
        let s = self.sizes[b];
        let mut m = DMatrix::zeros(s, s);
        for (k, (i, j)) in Self::pairs(s).enumerate() {
            let x = v[self.offsets[b] + k];
            if i == j {
                m[(i, i)] = x;
            } else {
                let x = x / std::f64::consts::SQRT_2;
                m[(i, j)] = x;
                m[(j, i)] = x;
            }
        }
        m
    }

    fn pack(&self, b: usize, m: &DMatrix<f64>, out: &mut [f64]) {
        for (k, (i, j)) in Self::pairs(self.sizes[b]).enumerate() {
            out[self.offsets[b] + k] = if i == j { m[(i, i)] } else { m[(i, j)] * std::f64::consts::SQRT_2 };
        }
    }

    fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        for b in 0..self.sizes.len() {
            let m = self.unpack(b, v.as_slice());
            let eig = SymmetricEigen::new(m);
            let clamped = eig.eigenvalues.map(|l| l.max(0.0));
            let p = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
            self.pack(b, &p, out.as_mut_slice());
        }
        out
    }
}

fn linear_map(prob: &MomentProblem, cones: &Cones) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(cones.dim, prob.nvars);
    for (b, blk) in prob.blocks.iter().enumerate() {
        for (k, (i, j)) in Cones::pairs(blk.size).enumerate() {
            let scale = if i == j { 1.0 } else { std::f64::consts::SQRT_2 };
            for &(v, c) in &blk.entries[i * blk.size + j] {
                l[(cones.offsets[b] + k, v)] += scale * c;
            }
        }
    }
    l
}

pub fn solve(prob: &MomentProblem, opts: &SolveOptions) -> Result<SdpSolution> {
    if !(opts.tol > 0.0) || !(opts.rho > 0.0) {
        return Err(Error::Validation("tol and rho must be positive".into()));
    }
    let (a, b) = prob.equality_system();
    let aff = match rref_solve(&a, &b) {
        Ok(s) => s,
        Err(Error::Infeasible(msg)) => {
            return Ok(SdpSolution {
                values: Vec::new(),
                y: Vec::new(),
                objective: f64::NAN,
                status: SolveStatus::InfeasibleDetected,
                residuals: None,
                iterations: 0,
                primal_residual: f64::INFINITY,
                dual_residual: f64::INFINITY,
                message: Some(msg),
            })
        }
        Err(e) => return Err(e),
    };
    let yp = aff.particular.clone();
    let r = aff.basis.ncols();
    let q = if r > 0 { aff.basis.clone().qr().q() } else { DMatrix::zeros(prob.nvars, 0) };

    let cones = Cones::new(prob.block_sizes());
    let l = linear_map(prob, &cones);
    let lp = &l * &yp;
    let lq = &l * &q;
    let mut c = DVector::zeros(prob.nvars);
    for &(v, w) in &prob.objective {
        c[v] += w;
    }
    let cq = q.transpose() * &c;
    let mut h = lq.transpose() * &lq;
    let ridge = 1e-12 * (0..r).map(|i| h[(i, i)]).fold(0.0, f64::max).max(1e-300);
    for i in 0..r {
        h[(i, i)] += ridge;
    }
    let chol = h.cholesky().ok_or_else(|| Error::Numerical("reduced normal matrix is singular".into()))?;

    let mut s = DVector::zeros(r);
    if let Some(w) = &opts.warm_start {
        if w.len() != prob.nvars {
            return Err(Error::Validation("warm start has the wrong length".into()));
        }
        let mut wv = DVector::from_column_slice(w);
        if opts.warm_start_noise > 0.0 {
            let mut rng = rng_from_seed(opts.seed);
            for x in wv.iter_mut() {
                *x += opts.warm_start_noise * rng.gen_range(-1.0..=1.0);
            }
        }
        s = q.transpose() * (wv - &yp);
    }
    let mut z = cones.project(&(&lp + &lq * &s));
    let mut u = DVector::zeros(cones.dim);
    let mut rho = opts.rho;
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;
    let (mut rp, mut rd) = (f64::INFINITY, f64::INFINITY);
    let mut best: Option<(f64, DVector<f64>, f64, f64)> = None;

    for it in 1..=opts.max_iter {
        iterations = it;
        let rhs = -(lq.transpose() * (&lp - &z + &u)) - &cq / rho;
        s = chol.solve(&rhs);
        let v = &lp + &lq * &s;
        let z_old = z;
        z = cones.project(&(&v + &u));
        let diff = &v - &z;
        u += &diff;
        rp = diff.norm();
        rd = rho * (lq.transpose() * (&z - &z_old)).norm();
        let eps_p = opts.tol * (1.0 + v.norm().max(z.norm()));
        let eps_d = opts.tol * (1.0 + rho * (lq.transpose() * &u).norm());
        let score = (rp / eps_p).max(rd / eps_d);
        if best.as_ref().map_or(true, |bst| score < bst.0) {
            best = Some((score, s.clone(), rp, rd));
        }
        if rp <= eps_p && rd <= eps_d {
            let y: Vec<f64> = (&yp + &q * &s).iter().copied().collect();
            let psd = prob.blocks.iter().map(|b| min_eig(&b.eval(&y))).fold(f64::INFINITY, f64::min);
            if psd >= -opts.tol || prob.blocks.is_empty() {
                status = SolveStatus::Optimal;
                break;
            }
        }
        // residual balancing
        if rp > 10.0 * rd {
            rho *= 2.0;
            u /= 2.0;
        } else if rd > 10.0 * rp {
            rho /= 2.0;
            u *= 2.0;
        }
    }
    if status == SolveStatus::MaxIter {
        if let Some((_, bs, brp, brd)) = best {
            s = bs;
            rp = brp;
            rd = brd;
        }
    }
    let y: Vec<f64> = (&yp + &q * &s).iter().copied().collect();
    let residuals = verify_feasibility(&y, prob, opts.tol)?;
    Ok(SdpSolution {
        values: prob.split(&y),
        objective: prob.objective_value(&y),
        y,
        status,
        residuals: Some(residuals),
        iterations,
        primal_residual: rp,
        dual_residual: rd,
        message: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::builtin;
    use crate::moment::{arcsine_moment, build_full_problem, SemialgebraicSet};
    use crate::poly::Polynomial;
    use crate::sparsity_graph::IndexSet;
    use serde_json::Value;

    fn cheb_problem(cost: Polynomial, d: u32) -> MomentProblem {
        let sys = builtin("logistic_cheb", &Value::Null).unwrap();
        let x = SemialgebraicSet::from_box(&[(-1.0, 1.0)]).unwrap();
        build_full_problem(&sys, &x, &cost, d).unwrap()
    }

    #[test]
    fn arcsine_is_feasible_and_warm_start_converges_at_once() {
        let p = cheb_problem(Polynomial::zero(1), 8);
        let mv = MomentVector::from_fn(IndexSet::new([1]).unwrap(), 8, arcsine_moment);
        let y = p.assemble(&[mv]).unwrap();
        let rep = verify_feasibility(&y, &p, 1e-12).unwrap();
        assert!(rep.equality_max <= 1e-12 && rep.psd_min_eig >= -1e-12, "{rep:?}");
        let sol = solve(&p, &SolveOptions { warm_start: Some(y), ..Default::default() }).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(sol.iterations, 1);
        let r = sol.residuals.unwrap();
        assert!(r.equality_max < 1e-10 && r.psd_min_eig > -1e-10);
    }

    #[test]
    fn fixed_points_pass_verification() {
        let p = cheb_problem(Polynomial::zero(1), 8);
        for x in [1.0, -0.5] {
            let mv = MomentVector::from_atoms(IndexSet::new([1]).unwrap(), 8, &[(1.0, vec![x])]);
            let rep = verify_feasibility(&p.assemble(&[mv]).unwrap(), &p, 1e-10).unwrap();
            assert!(rep.feasible, "{rep:?}");
        }
        let noise: Vec<f64> = (0..p.nvars).map(|i| (i as f64 * 0.37).sin()).collect();
        assert!(!verify_feasibility(&noise, &p, 1e-10).unwrap().feasible);
    }

    #[test]
    fn minimizes_mean() {
        let p = cheb_problem(Polynomial::var(1, 0), 8);
        let sol = solve(&p, &SolveOptions::default()).unwrap();
        assert!(sol.objective <= -0.5 + 1e-6, "{}", sol.objective);
        let r = sol.residuals.unwrap();
        assert!(r.equality_max <= 1e-6 && r.psd_min_eig >= -1e-6);
    }

    #[test]
    fn empty_set_stalls() {
        let sys = builtin("logistic_cheb", &Value::Null).unwrap();
        let x = SemialgebraicSet::new(1, vec![Polynomial::parse("-1 - x1^2", 1).unwrap()], None).unwrap();
        let p = build_full_problem(&sys, &x, &Polynomial::zero(1), 2).unwrap();
        let sol = solve(&p, &SolveOptions { max_iter: 2000, ..Default::default() }).unwrap();
        assert_eq!(sol.status, SolveStatus::MaxIter);
        assert!(sol.residuals.unwrap().psd_min_eig < -1e-3);
    }
}
