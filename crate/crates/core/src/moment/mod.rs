//! Truncated moment relaxations for extremal invariant measures of
//! polynomial maps: full, relaxed (invariance only on subsystem test
//! functions) and clique-sparse variants.

mod build;
mod config;
mod sdpa;
mod solver;


use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{validation, Error, Result};
use crate::poly::{graded_lex, MultiIndex, Polynomial};
use crate::sparsity_graph::IndexSet;

pub use build::{build_full_problem, build_relaxed_full_problem, build_sparse_problem, compose_monomial_with_map, split_cost};
pub use config::{default_parts, Formulation, MomentConfig};
pub use sdpa::{export_sdpa, parse_sdpa, write_sdpa, SdpaEmbedding, SdpaProblem};
pub use solver::{solve, verify_feasibility, FeasibilityReport, SdpSolution, SolveOptions, SolveStatus};

/// `{x : g_i(x) ≥ 0}`; `g_0 = 1` is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct SemialgebraicSet {
    dim: usize,
    inequalities: Vec<Polynomial>,
    ball_index: Option<usize>,
}

impl SemialgebraicSet {
    pub fn new(dim: usize, inequalities: Vec<Polynomial>, ball_index: Option<usize>) -> Result<Self> {
        if inequalities.iter().any(|g| g.nvars() != dim) {
            return validation(format!("constraint polynomials must live on R^{dim}"));
        }
        if let Some(b) = ball_index {
            if b >= inequalities.len() {
                return validation("ball index out of range");
            }
        }
        Ok(SemialgebraicSet { dim, inequalities, ball_index })
    }

    /// `(x_i − a_i)(b_i − x_i) ≥ 0` per coordinate, plus the ball
    /// `Σ max(a_i², b_i²) − ‖x‖² ≥ 0` when `dim > 1` (in one dimension the
    /// interval constraint already is a ball).
    pub fn from_box(bounds: &[(f64, f64)]) -> Result<Self> {
        let n = bounds.len();
        if bounds.iter().any(|&(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
            return validation("box bounds must be finite with lo < hi");
        }
        let mut g = Vec::with_capacity(n + 1);
        for (i, &(a, b)) in bounds.iter().enumerate() {
            let x = Polynomial::var(n, i);
            g.push(x.sub(&Polynomial::constant(n, a)).mul(&Polynomial::constant(n, b).sub(&x)));
        }
        let ball = if n > 1 {
            let r: f64 = bounds.iter().map(|&(a, b)| a.abs().max(b.abs()).powi(2)).sum();
            let mut p = Polynomial::constant(n, r);
            for i in 0..n {
                p = p.sub(&Polynomial::var(n, i).pow(2));
            }
            g.push(p);
            Some(n)
        } else if n == 1 {
            Some(0)
        } else {
            None
        };
        Self::new(n, g, ball)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inequalities(&self) -> &[Polynomial] {
        &self.inequalities
    }

    pub fn ball_index(&self) -> Option<usize> {
        self.ball_index
    }

    /// Constraints that only involve the coordinates of `set`, restricted to
    /// them; used to describe `Π_I(X)` for product-shaped sets.
    pub fn restrict(&self, set: &IndexSet) -> Result<SemialgebraicSet> {
        set.check_range(self.dim)?;
        let pos = set.zero_based();
        let mut g = Vec::new();
        let mut ball = None;
        for (i, p) in self.inequalities.iter().enumerate() {
            if let Ok(r) = p.restrict(&pos) {
                if Some(i) == self.ball_index {
                    ball = Some(g.len());
                }
                g.push(r);
            }
        }
        Self::new(set.len(), g, ball)
    }
}

/// Moments `y_α`, `|α| ≤ d`, of a measure on the coordinates of `clique`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentVector {
    pub clique: IndexSet,
    pub degree: u32,
    pub basis: Vec<MultiIndex>,
    pub values: Vec<f64>,
}

impl MomentVector {
    pub fn from_fn<F: Fn(&[u32]) -> f64>(clique: IndexSet, degree: u32, f: F) -> Self {
        let basis = graded_lex(clique.len(), degree);
        let values = basis.iter().map(|a| f(a)).collect();
        MomentVector { clique, degree, basis, values }
    }

    /// Moments of `Σ w_i δ_{x_i}`; positions are local to the clique.
    pub fn from_atoms(clique: IndexSet, degree: u32, atoms: &[(f64, Vec<f64>)]) -> Self {
        Self::from_fn(clique, degree, |a| {
            atoms
                .iter()
                .map(|(w, x)| w * x.iter().zip(a).map(|(v, &e)| v.powi(e as i32)).product::<f64>())
                .sum()
        })
    }

    pub fn get(&self, alpha: &[u32]) -> Option<f64> {
        self.basis.iter().position(|b| b == alpha).map(|i| self.values[i])
    }
}

/// Moments of the arcsine law on `[−1, 1]`: `m_{2k} = C(2k, k)/4^k`, odd
/// moments vanish. Product form in several variables.
pub fn arcsine_moment(alpha: &[u32]) -> f64 {
    alpha
        .iter()
        .map(|&e| {
            if e % 2 == 1 {
                0.0
            } else {
                let k = e / 2;
                (0..k).fold(1.0, |acc, i| acc * (2 * k - i) as f64 / ((k - i) as f64 * 4.0))
            }
        })
        .product()
}

/// `ℓ_y(p) = Σ p_α y_α`.
pub fn riesz_apply(y: &MomentVector, p: &Polynomial) -> Result<f64> {
    if p.nvars() != y.clique.len() {
        return validation(format!(
            "polynomial on {} variables applied to moments on {} variables",
            p.nvars(),
            y.clique.len()
        ));
    }
    if p.degree() > y.degree {
        return validation(format!("degree {} exceeds the truncation degree {}", p.degree(), y.degree));
    }
    Ok(p.terms().map(|(a, c)| c * y.get(a).expect("complete basis")).sum())
}

/// `d_g = ⌊(d − deg g)/2⌋`, `None` when `deg g > d`.
pub fn localizing_order(g: &Polynomial, d: u32) -> Option<u32> {
    let dg = g.degree();
    (dg <= d).then(|| (d - dg) / 2)
}

/// `M_{d_g}(g y)` with entries `ℓ_y(g x^{α+β})` over the degree-`d_g` basis.
pub fn localizing_matrix(g: &Polynomial, y: &MomentVector, d: u32) -> Result<DMatrix<f64>> {
    if d > y.degree {
        return validation("localizing degree exceeds the moment degree");
    }
    let dg = localizing_order(g, d)
        .ok_or_else(|| Error::Validation(format!("deg g = {} exceeds d = {d}", g.degree())))?;
    let basis = graded_lex(y.clique.len(), dg);
    let n = y.clique.len();
    let mut m = DMatrix::zeros(basis.len(), basis.len());
    for i in 0..basis.len() {
        for j in i..basis.len() {
            let shift: MultiIndex = basis[i].iter().zip(&basis[j]).map(|(a, b)| a + b).collect();
            let shifted = g.mul(&Polynomial::monomial(shift, 1.0));
            debug_assert_eq!(shifted.nvars(), n);
            let v = riesz_apply(y, &shifted)?;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Sparse linear form `Σ c_k y_k` over problem variables.
pub type LinearForm = Vec<(usize, f64)>;

fn normalize(mut f: LinearForm) -> LinearForm {
    f.sort_by_key(|t| t.0);
    let mut out: LinearForm = Vec::with_capacity(f.len());
    for (v, c) in f {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 += c,
            _ => out.push((v, c)),
        }
    }
    out.retain(|t| t.1 != 0.0);
    out
}

fn eval_form(f: &LinearForm, y: &[f64]) -> f64 {
    f.iter().map(|&(v, c)| c * y[v]).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EqualityKind {
    Mass,
    Invariance,
    Overlap,
}

#[derive(Debug, Clone, Serialize)]
pub struct Equality {
    pub kind: EqualityKind,
    pub label: String,
    pub form: LinearForm,
    pub rhs: f64,
}

/// Localizing-matrix block: each entry is a linear form in the variables.
#[derive(Debug, Clone, Serialize)]
pub struct PsdBlock {
    pub label: String,
    /// 0-based clique index.
    pub clique: usize,
    pub size: usize,
    /// Row-major `size × size`, symmetric.
    pub entries: Vec<LinearForm>,
}

impl PsdBlock {
    pub fn eval(&self, y: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.size, self.size, |i, j| eval_form(&self.entries[i * self.size + j], y))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Clique {
    pub set: IndexSet,
    pub degree: u32,
    pub basis: Vec<MultiIndex>,
    /// Index of the first variable of this clique.
    pub offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Full,
    Relaxed,
    Sparse,
}

#[derive(Debug, Clone, Serialize)]
pub struct MomentProblem {
    pub kind: ProblemKind,
    pub n: usize,
    pub degree: u32,
    pub cliques: Vec<Clique>,
    pub nvars: usize,
    pub objective: LinearForm,
    pub equalities: Vec<Equality>,
    pub blocks: Vec<PsdBlock>,
}

/// Counts under both bookkeeping conventions.
#[derive(Debug, Clone, Serialize)]
pub struct CountReport {
    pub variables: usize,
    /// `Σ_k C(|I_k| + d, d)`.
    pub moment_basis_count: u64,
    /// `Σ_k C(|I_k| + d/2, |I_k|)`, the size of the moment matrix basis.
    pub half_degree_count: u64,
    pub equalities: usize,
    pub block_sizes: Vec<usize>,
}

impl MomentProblem {
    pub fn var_index(&self, clique: usize, alpha: &[u32]) -> Option<usize> {
        let c = &self.cliques[clique];
        c.basis.iter().position(|b| b == alpha).map(|p| c.offset + p)
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.size).collect()
    }

    pub fn counts(&self) -> CountReport {
        use crate::poly::binomial;
        CountReport {
            variables: self.nvars,
            moment_basis_count: self
                .cliques
                .iter()
                .map(|c| binomial((c.set.len() as u32 + c.degree) as u64, c.degree as u64))
                .sum(),
            half_degree_count: self
                .cliques
                .iter()
                .map(|c| binomial((c.set.len() as u32 + c.degree / 2) as u64, c.set.len() as u64))
                .sum(),
            equalities: self.equalities.len(),
            block_sizes: self.block_sizes(),
        }
    }

    /// Stacks per-clique moment vectors into the problem's variable vector.
    pub fn assemble(&self, values: &[MomentVector]) -> Result<Vec<f64>> {
        if values.len() != self.cliques.len() {
            return validation(format!("{} moment vectors for {} cliques", values.len(), self.cliques.len()));
        }
        let mut y = vec![0.0; self.nvars];
        for (c, mv) in self.cliques.iter().zip(values) {
            if mv.clique != c.set || mv.degree < c.degree {
                return validation(format!("moment vector on {} does not cover clique {}", mv.clique, c.set));
            }
            for (p, a) in c.basis.iter().enumerate() {
                y[c.offset + p] = mv.get(a).unwrap();
            }
        }
        Ok(y)
    }

    /// Splits a variable vector into per-clique moment vectors.
    pub fn split(&self, y: &[f64]) -> Vec<MomentVector> {
        self.cliques
            .iter()
            .map(|c| MomentVector {
                clique: c.set.clone(),
                degree: c.degree,
                basis: c.basis.clone(),
                values: y[c.offset..c.offset + c.basis.len()].to_vec(),
            })
            .collect()
    }

    pub fn objective_value(&self, y: &[f64]) -> f64 {
        eval_form(&self.objective, y)
    }

    /// Labels `"k:α"` of every variable (1-based clique number).
    pub fn variable_labels(&self) -> Vec<String> {
        let mut out = vec![String::new(); self.nvars];
        for (k, c) in self.cliques.iter().enumerate() {
            for (p, a) in c.basis.iter().enumerate() {
                out[c.offset + p] = format!("{}:{:?}", k + 1, a);
            }
        }
        out
    }

    /// Equality constraints as a dense system `A y = b`.
    pub fn equality_system(&self) -> (DMatrix<f64>, nalgebra::DVector<f64>) {
        let mut a = DMatrix::zeros(self.equalities.len(), self.nvars);
        let mut b = nalgebra::DVector::zeros(self.equalities.len());
        for (r, e) in self.equalities.iter().enumerate() {
            for &(v, c) in &e.form {
                a[(r, v)] += c;
            }
            b[r] = e.rhs;
        }
        (a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_var(d: u32, f: impl Fn(&[u32]) -> f64) -> MomentVector {
        MomentVector::from_fn(IndexSet::new([1]).unwrap(), d, f)
    }

    #[test]
    fn riesz() {
        let y = one_var(8, |_| 1.0);
        let p = Polynomial::parse("x1^2 - 1", 1).unwrap();
        assert_eq!(riesz_apply(&y, &p).unwrap(), 0.0);
        let arc = one_var(8, arcsine_moment);
        assert_eq!(riesz_apply(&arc, &Polynomial::parse("x1^4", 1).unwrap()).unwrap(), 0.375);
        assert_eq!(riesz_apply(&arc, &Polynomial::constant(1, 1.0)).unwrap(), 1.0);
        assert!(riesz_apply(&arc, &Polynomial::parse("x1^9", 1).unwrap()).is_err());
    }

    #[test]
    fn localizing() {
        let dirac0 = one_var(2, |a| if a[0] == 0 { 1.0 } else { 0.0 });
        let m = localizing_matrix(&Polynomial::constant(1, 1.0), &dirac0, 2).unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        let g = Polynomial::parse("1 - x1^2", 1).unwrap();
        let arc = one_var(8, arcsine_moment);
        let l = localizing_matrix(&g, &arc, 8).unwrap();
        assert_eq!(l.nrows(), 4);
        assert!(l.symmetric_eigenvalues().min() >= -1e-12);
        let two = one_var(8, |a| 2f64.powi(a[0] as i32));
        assert!(localizing_matrix(&g, &two, 8).unwrap().symmetric_eigenvalues().min() < 0.0);
    }

    #[test]
    fn box_set() {
        let s = SemialgebraicSet::from_box(&[(-1.0, 1.0)]).unwrap();
        assert_eq!(s.inequalities().len(), 1);
        assert_eq!(s.inequalities()[0], Polynomial::parse("1 - x1^2", 1).unwrap());
        let s2 = SemialgebraicSet::from_box(&[(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
        assert_eq!(s2.inequalities().len(), 3);
        assert_eq!(s2.ball_index(), Some(2));
        let r = s2.restrict(&IndexSet::new([2]).unwrap()).unwrap();
        assert_eq!(r.inequalities().len(), 1);
    }
}
