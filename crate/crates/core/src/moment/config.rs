//! Declarative description of a moment problem, shared by the command line
//! and the C interface.

use serde::{Deserialize, Serialize};

use crate::dynamics::SparseSystem;
use crate::error::{validation, Result};
use crate::poly::Polynomial;
use crate::sparsity_graph::IndexSet;

use super::{build_full_problem, build_relaxed_full_problem, build_sparse_problem, split_cost};
use super::{MomentProblem, SemialgebraicSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    Full,
    Relaxed,
    #[default]
    Sparse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentConfig {
    #[serde(default)]
    pub mode: Formulation,
    pub degree: u32,
    /// Polynomial in `x1..xn`.
    pub cost: String,
    /// One interval per coordinate, or a single one for all; `[-1, 1]` by
    /// default.
    #[serde(rename = "box", default)]
    pub bounds: Vec<(f64, f64)>,
    /// 1-based parts of the relaxed and sparse formulations; the maximal
    /// single-coordinate closures by default.
    #[serde(default)]
    pub parts: Option<Vec<Vec<usize>>>,
}

/// Maximal sets among the closures of single coordinates.
pub fn default_parts(sys: &SparseSystem) -> Result<Vec<IndexSet>> {
    let g = sys.graph();
    let mut cl: Vec<IndexSet> = Vec::new();
    for j in 1..=sys.n() {
        let c = g.closure(&IndexSet::new([j])?)?;
        if !cl.contains(&c) {
            cl.push(c);
        }
    }
    Ok(cl.iter().filter(|a| !cl.iter().any(|b| b != *a && a.is_subset(b))).cloned().collect())
}

impl MomentConfig {
    pub fn resolved_box(&self, n: usize) -> Result<Vec<(f64, f64)>> {
        match self.bounds.len() {
            0 => Ok(vec![(-1.0, 1.0); n]),
            1 => Ok(vec![self.bounds[0]; n]),
            k if k == n => Ok(self.bounds.clone()),
            k => validation(format!("box has {k} intervals for {n} coordinates")),
        }
    }

    pub fn resolved_parts(&self, sys: &SparseSystem) -> Result<Vec<IndexSet>> {
        match &self.parts {
            Some(p) => p.iter().map(|s| IndexSet::within(s.iter().copied(), sys.n())).collect(),
            None => default_parts(sys),
        }
    }

    pub fn build(&self, sys: &SparseSystem) -> Result<MomentProblem> {
        let n = sys.n();
        let bounds = self.resolved_box(n)?;
        let cost = Polynomial::parse(&self.cost, n)?;
        match self.mode {
            Formulation::Full => build_full_problem(sys, &SemialgebraicSet::from_box(&bounds)?, &cost, self.degree),
            Formulation::Relaxed => build_relaxed_full_problem(
                sys,
                &self.resolved_parts(sys)?,
                &SemialgebraicSet::from_box(&bounds)?,
                &cost,
                self.degree,
            ),
            Formulation::Sparse => {
                let parts = self.resolved_parts(sys)?;
                let sets = parts
                    .iter()
                    .map(|p| SemialgebraicSet::from_box(&p.iter().map(|i| bounds[i - 1]).collect::<Vec<_>>()))
                    .collect::<Result<Vec<_>>>()?;
                let costs = split_cost(&cost, &parts)?;
                build_sparse_problem(sys, &parts, &sets, &costs, self.degree)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::builtin;
    use serde_json::{json, Value};

    #[test]
    fn default_parts_are_maximal_closures() {
        let tent = builtin("coupled_tent", &Value::Null).unwrap();
        let p: Vec<Vec<usize>> = default_parts(&tent).unwrap().iter().map(|s| s.as_slice().to_vec()).collect();
        assert_eq!(p, vec![vec![1, 2], vec![1, 3]]);
        let prod = builtin("product_logistic", &Value::Null).unwrap();
        assert_eq!(default_parts(&prod).unwrap().len(), 2);
    }

    #[test]
    fn json_config_counts() {
        let prod = builtin("product_logistic", &Value::Null).unwrap();
        let cfg: MomentConfig = serde_json::from_value(json!({"degree": 8, "cost": "x1 + x2"})).unwrap();
        assert_eq!(cfg.build(&prod).unwrap().nvars, 18);
        let full: MomentConfig = serde_json::from_value(json!({"mode": "full", "degree": 8, "cost": "x1 + x2"})).unwrap();
        assert_eq!(full.build(&prod).unwrap().nvars, 45);
        assert!(serde_json::from_value::<MomentConfig>(json!({"degree": 2, "cost": "x1", "bogus": 1})).is_err());
    }
}
