//! Extended dynamic mode decomposition, full and per subsystem.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dictionary::Dictionary;
use crate::dynamics::{SnapshotSet, SparseSystem, Trajectory};
use crate::error::{validation, Error, Result};
use crate::linalg::{eig_general, right_pinv_solve, right_solve_spd};
use crate::sparsity_graph::IndexSet;

/// Relative singular value cutoff of the unregularized solve.
pub const PINV_CUTOFF: f64 = 1e-10;

/// Fitted Koopman matrix with its dictionary and linear state decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanApprox {
    /// `l × l`, maps `Ψ(x)` to a prediction of `Ψ(f(x))`.
    pub k: DMatrix<f64>,
    pub dict: Dictionary,
    /// `n × l`, reads states back from lifted coordinates.
    pub decoder: DMatrix<f64>,
    pub reg: f64,
    /// `‖Ψ_Y − K Ψ_X‖_F`.
    pub training_residual: f64,
    /// `‖X − B Ψ_X‖_F`.
    pub decoder_residual: f64,
    /// Macro step of the training data (continuous systems).
    pub h: Option<f64>,
}

/// `1e-8 · trace(Ψ_X Ψ_Xᵀ) / l`.
pub fn default_reg(psi_x: &DMatrix<f64>) -> f64 {
    let tr: f64 = psi_x.iter().map(|v| v * v).sum();
    1e-8 * tr / psi_x.nrows() as f64
}

/// Least-squares fit of `K` and the decoder `B`.
///
/// `reg = None` selects [`default_reg`]; `Some(0.0)` solves through the
/// pseudo-inverse of `Ψ_X`.
pub fn edmd_fit(dict: &Dictionary, snaps: &SnapshotSet, reg: Option<f64>) -> Result<KoopmanApprox> {
    if snaps.is_empty() {
        return validation("EDMD needs at least one snapshot pair");
    }
    if snaps.dim() != dict.dim() {
        return validation(format!(
            "snapshots on R^{} for a dictionary on R^{}",
            snaps.dim(),
            dict.dim()
        ));
    }
    if snaps.x.iter().chain(snaps.y.iter()).all(|&v| v == 0.0) {
        return Err(Error::DegenerateData("all snapshot states are zero".into()));
    }
    let psi_x = dict.evaluate(&snaps.x)?;
    let psi_y = dict.evaluate(&snaps.y)?;
    if psi_x.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateData("dictionary vanishes on every snapshot".into()));
    }
    if psi_x.iter().chain(psi_y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("dictionary evaluation produced non-finite values".into()));
    }
    let reg = match reg {
        Some(r) if r < 0.0 || !r.is_finite() => return validation("regularization must be >= 0"),
        Some(r) => r,
        None => default_reg(&psi_x),
    };
    fit_from_lifted(dict.clone(), &psi_x, &psi_y, &snaps.x, reg, snaps.h)
}

fn fit_from_lifted(
    dict: Dictionary,
    psi_x: &DMatrix<f64>,
    psi_y: &DMatrix<f64>,
    x: &DMatrix<f64>,
    reg: f64,
    h: Option<f64>,
) -> Result<KoopmanApprox> {
    let l = psi_x.nrows();
    let n = x.nrows();
    // one solve for [Ψ_Y; X]
    let mut rhs = DMatrix::zeros(l + n, psi_x.ncols());
    rhs.view_mut((0, 0), (l, psi_x.ncols())).copy_from(psi_y);
    rhs.view_mut((l, 0), (n, psi_x.ncols())).copy_from(x);
    let sol = if reg > 0.0 {
        let mut g = psi_x * psi_x.transpose();
        for i in 0..l {
            g[(i, i)] += reg;
        }
        right_solve_spd(&(&rhs * psi_x.transpose()), g)?
    } else {
        right_pinv_solve(&rhs, psi_x, PINV_CUTOFF)?
    };
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("EDMD solve produced non-finite entries".into()));
    }
    let k = sol.rows(0, l).into_owned();
    let decoder = sol.rows(l, n).into_owned();
    let training_residual = (psi_y - &k * psi_x).norm();
    let decoder_residual = (x - &decoder * psi_x).norm();
    Ok(KoopmanApprox { k, dict, decoder, reg, training_residual, decoder_residual, h })
}

impl KoopmanApprox {
    /// `x̂_k = B K^k Ψ(x0)` for `k = 0..=steps`.
    pub fn predict(&self, x0: &[f64], steps: usize) -> Result<Trajectory> {
        if x0.len() != self.dict.dim() {
            return validation(format!(
                "initial state of length {} for a model on R^{}",
                x0.len(),
                self.dict.dim()
            ));
        }
        let mut z = DVector::from_vec(self.dict.eval_point(x0));
        let dt = self.h.unwrap_or(1.0);
        let mut states = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            if k > 0 {
                z = &self.k * &z;
            }
            let x = &self.decoder * &z;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { step: k });
            }
            states.push(x.iter().copied().collect());
        }
        Ok(Trajectory { times: (0..=steps).map(|k| k as f64 * dt).collect(), states })
    }

    /// Eigenpairs of `Kᵀ`, sorted by `|λ|` descending; each coefficient
    /// vector `c` defines `φ(x) = ⟨c, Ψ(x)⟩` with `φ∘f ≈ λ φ`.
    pub fn eigs(&self) -> Result<Vec<Eigenfunction>> {
        let (lams, vecs) = eig_general(&self.k.transpose())?;
        let mut out: Vec<Eigenfunction> = lams
            .into_iter()
            .enumerate()
            .map(|(i, lambda)| Eigenfunction {
                lambda,
                coeffs: vecs.column(i).iter().copied().collect(),
                dict: self.dict.clone(),
            })
            .collect();
        out.sort_by(|a, b| b.lambda.norm().total_cmp(&a.lambda.norm()));
        Ok(out)
    }
}

/// `φ(x) = Σ_i c_i ψ_i(x)` with its eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenfunction {
    pub lambda: Complex64,
    pub coeffs: Vec<Complex64>,
    pub dict: Dictionary,
}

impl Eigenfunction {
    pub fn eval(&self, x: &[f64]) -> Complex64 {
        self.dict
            .eval_point(x)
            .iter()
            .zip(&self.coeffs)
            .map(|(&p, &c)| c * p)
            .sum()
    }

    /// `g ∘ Π_I` on `R^n`, same eigenvalue.
    pub fn lift(&self, set: &IndexSet, n: usize) -> Result<Eigenfunction> {
        Ok(Eigenfunction { lambda: self.lambda, coeffs: self.coeffs.clone(), dict: self.dict.lift(set, n)? })
    }

    /// Largest `|φ(x_{k+1}) − μ φ(x_k)|` along the trajectory, with
    /// `μ = e^{λ Δt}` for continuous time and `μ = λ` for maps.
    pub fn residual(&self, traj: &Trajectory, continuous: bool) -> f64 {
        eigenfunction_residual(|x| self.eval(x), self.lambda, traj, continuous)
    }
}

pub fn lift_eigenfunction(g: &Eigenfunction, set: &IndexSet, n: usize) -> Result<Eigenfunction> {
    g.lift(set, n)
}

pub fn eigenfunction_residual<F>(phi: F, lambda: Complex64, traj: &Trajectory, continuous: bool) -> f64
where
    F: Fn(&[f64]) -> Complex64,
{
    let vals: Vec<Complex64> = traj.states.iter().map(|x| phi(x)).collect();
    (1..vals.len())
        .map(|k| {
            let mu = if continuous {
                (lambda * (traj.times[k] - traj.times[k - 1])).exp()
            } else {
                lambda
            };
            (vals[k] - mu * vals[k - 1]).norm()
        })
        .fold(0.0, f64::max)
}

/// One fitted model per subsystem.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseKoopman {
    pub n: usize,
    pub parts: Vec<(IndexSet, KoopmanApprox)>,
}

/// Projects the snapshots onto every part and fits each independently.
pub fn sparse_edmd(
    sys: &SparseSystem,
    parts: &[IndexSet],
    dicts: &[Dictionary],
    snaps: &SnapshotSet,
    reg: Option<f64>,
) -> Result<SparseKoopman> {
    if parts.is_empty() || parts.len() != dicts.len() {
        return validation("need one dictionary per part and at least one part");
    }
    if snaps.dim() != sys.n() {
        return validation("snapshot dimension differs from the system dimension");
    }
    let graph = sys.graph();
    let mut cover = IndexSet::empty();
    for (k, (p, d)) in parts.iter().zip(dicts).enumerate() {
        p.check_range(sys.n())?;
        if let Some((j, i)) = graph.first_violation(p) {
            return Err(Error::Structural(format!(
                "part {} = {p} is not a subsystem: component {j} depends on x{i}",
                k + 1
            )));
        }
        if d.dim() != p.len() {
            return validation(format!(
                "dictionary {} lives on R^{} but part {p} has {} coordinates",
                k + 1,
                d.dim(),
                p.len()
            ));
        }
        cover = cover.union(p);
    }
    if cover.len() != sys.n() {
        return validation(format!("parts cover {cover}, not all {} coordinates", sys.n()));
    }
    let fitted = parts
        .par_iter()
        .zip(dicts.par_iter())
        .map(|(p, d)| edmd_fit(d, &snaps.project(p), reg).map(|ka| (p.clone(), ka)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SparseKoopman { n: sys.n(), parts: fitted })
}

impl SparseKoopman {
    /// Index of the part that predicts coordinate `j` (1-based): the
    /// smallest containing part, earliest on ties.
    pub fn owner(&self, j: usize) -> Option<usize> {
        self.parts
            .iter()
            .enumerate()
            .filter(|(_, (p, _))| p.contains(j))
            .min_by_key(|(k, (p, _))| (p.len(), *k))
            .map(|(k, _)| k)
    }

    pub fn predict(&self, x0: &[f64], steps: usize) -> Result<Trajectory> {
        if x0.len() != self.n {
            return validation(format!("initial state of length {} on R^{}", x0.len(), self.n));
        }
        let owners: Vec<usize> = (1..=self.n)
            .map(|j| self.owner(j).ok_or_else(|| Error::Validation(format!("x{j} not covered"))))
            .collect::<Result<_>>()?;
        let mut preds: Vec<Option<Trajectory>> = vec![None; self.parts.len()];
        for &k in &owners {
            if preds[k].is_none() {
                let (p, ka) = &self.parts[k];
                preds[k] = Some(ka.predict(&p.project(x0), steps)?);
            }
        }
        let times = preds.iter().flatten().next().unwrap().times.clone();
        let states = (0..=steps)
            .map(|t| {
                (1..=self.n)
                    .map(|j| {
                        let k = owners[j - 1];
                        let pos = self.parts[k].0.position(j).unwrap();
                        preds[k].as_ref().unwrap().states[t][pos]
                    })
                    .collect()
            })
            .collect();
        Ok(Trajectory { times, states })
    }
}

/// Root-mean-square error per coordinate between two equally long runs.
pub fn rmse_per_coord(truth: &Trajectory, est: &Trajectory) -> Vec<f64> {
    let n = truth.states.first().map_or(0, Vec::len);
    let m = truth.len().min(est.len()).max(1) as f64;
    (0..n)
        .map(|j| {
            let s: f64 = truth
                .states
                .iter()
                .zip(&est.states)
                .map(|(a, b)| (a[j] - b[j]).powi(2))
                .sum();
            (s / m).sqrt()
        })
        .collect()
}

/// Pooled RMSE over the selected 0-based coordinates.
pub fn rmse(truth: &Trajectory, est: &Trajectory, coords: &[usize]) -> f64 {
    let mut s = 0.0;
    let mut cnt = 0usize;
    for (a, b) in truth.states.iter().zip(&est.states) {
        for &j in coords {
            s += (a[j] - b[j]).powi(2);
            cnt += 1;
        }
    }
    (s / cnt.max(1) as f64).sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenSummary {
    pub re: f64,
    pub im: f64,
    pub abs: f64,
}

impl From<&Eigenfunction> for EigenSummary {
    fn from(e: &Eigenfunction) -> Self {
        EigenSummary { re: e.lambda.re, im: e.lambda.im, abs: e.lambda.norm() }
    }
}
