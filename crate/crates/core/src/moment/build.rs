use std::collections::HashMap;

use crate::dynamics::{SparseSystem, SystemKind};
use crate::error::{validation, Error, Result};
use crate::poly::{graded_lex, MultiIndex, Polynomial};
use crate::sparsity_graph::IndexSet;

use super::{
    localizing_order, normalize, Clique, Equality, EqualityKind, LinearForm, MomentProblem, ProblemKind, PsdBlock,
    SemialgebraicSet,
};

/// `x^α ∘ f`, fully expanded.
pub fn compose_monomial_with_map(alpha: &[u32], f: &[Polynomial]) -> Result<Polynomial> {
    Polynomial::monomial(alpha.to_vec(), 1.0).compose(f)
}

fn polynomial_map(sys: &SparseSystem) -> Result<Vec<Polynomial>> {
    if sys.kind() != SystemKind::Discrete {
        return validation("moment relaxations are formulated for discrete-time maps");
    }
    sys.polynomial_map()
}

fn check_degree(d: u32) -> Result<()> {
    if d == 0 || d % 2 == 1 {
        return validation(format!("truncation degree must be even and positive, got {d}"));
    }
    Ok(())
}

/// What one clique contributes.
struct CliqueSpec<'a> {
    set: IndexSet,
    /// Map on the clique's own coordinates.
    map: Vec<Polynomial>,
    /// Test monomials for invariance (local exponents); `None` = all.
    tests: Option<Vec<MultiIndex>>,
    domain: &'a SemialgebraicSet,
    cost: Polynomial,
}

fn lookup(index: &HashMap<MultiIndex, usize>, a: &[u32]) -> usize {
    index[a]
}

fn riesz_form(p: &Polynomial, index: &HashMap<MultiIndex, usize>) -> LinearForm {
    normalize(p.terms().map(|(a, c)| (lookup(index, a), c)).collect())
}

fn assemble(kind: ProblemKind, n: usize, d: u32, specs: Vec<CliqueSpec>) -> Result<MomentProblem> {
    check_degree(d)?;
    let mut cliques = Vec::with_capacity(specs.len());
    let mut offset = 0;
    for s in &specs {
        let basis = graded_lex(s.set.len(), d);
        let len = basis.len();
        cliques.push(Clique { set: s.set.clone(), degree: d, basis, offset });
        offset += len;
    }
    let indices: Vec<HashMap<MultiIndex, usize>> = cliques
        .iter()
        .map(|c| c.basis.iter().enumerate().map(|(p, a)| (a.clone(), c.offset + p)).collect())
        .collect();

    let mut objective = LinearForm::new();
    let mut equalities = Vec::new();
    let mut blocks = Vec::new();
    for (k, (s, c)) in specs.iter().zip(&cliques).enumerate() {
        let idx = &indices[k];
        let tag = if specs.len() > 1 { format!("clique {} {}: ", k + 1, s.set) } else { String::new() };
        if s.cost.degree() > d {
            return validation(format!("cost of degree {} exceeds d = {d}", s.cost.degree()));
        }
        objective.extend(riesz_form(&s.cost, idx));

        let zero = vec![0u32; s.set.len()];
        equalities.push(Equality {
            kind: EqualityKind::Mass,
            label: format!("{tag}y_0 = 1"),
            form: vec![(lookup(idx, &zero), 1.0)],
            rhs: 1.0,
        });
        let tests: Vec<&MultiIndex> = match &s.tests {
            Some(t) => t.iter().collect(),
            None => c.basis.iter().collect(),
        };
        for a in tests {
            if a.iter().all(|&e| e == 0) {
                continue;
            }
            let comp = compose_monomial_with_map(a, &s.map)?;
            if comp.degree() > d {
                continue;
            }
            let mut form = riesz_form(&comp, idx);
            form.push((lookup(idx, a), -1.0));
            equalities.push(Equality {
                kind: EqualityKind::Invariance,
                label: format!("{tag}l(x^{a:?} o f) = y_{a:?}"),
                form: normalize(form),
                rhs: 0.0,
            });
        }

        let one = Polynomial::constant(s.set.len(), 1.0);
        let gs = std::iter::once(&one).chain(s.domain.inequalities());
        for (gi, g) in gs.enumerate() {
            let dg = localizing_order(g, d)
                .ok_or_else(|| Error::Validation(format!("constraint g_{gi} has degree above d = {d}")))?;
            let basis = graded_lex(s.set.len(), dg);
            let size = basis.len();
            let mut entries = vec![LinearForm::new(); size * size];
            for i in 0..size {
                for j in i..size {
                    let shift: MultiIndex = basis[i].iter().zip(&basis[j]).map(|(x, y)| x + y).collect();
                    let f = riesz_form(&g.mul(&Polynomial::monomial(shift, 1.0)), idx);
                    entries[j * size + i] = f.clone();
                    entries[i * size + j] = f;
                }
            }
            let label = if gi == 0 { format!("{tag}M_{dg}(y)") } else { format!("{tag}M_{dg}(g_{gi} y)") };
            blocks.push(PsdBlock { label, clique: k, size, entries });
        }
    }

    // overlap consistency, once per unordered pair
    for k in 0..cliques.len() {
        for l in k + 1..cliques.len() {
            let ov = cliques[k].set.intersection(&cliques[l].set);
            if ov.is_empty() {
                continue;
            }
            let pk: Vec<usize> = ov.iter().map(|i| cliques[k].set.position(i).unwrap()).collect();
            let pl: Vec<usize> = ov.iter().map(|i| cliques[l].set.position(i).unwrap()).collect();
            for a in graded_lex(ov.len(), d) {
                if a.iter().all(|&e| e == 0) {
                    continue;
                }
                let mut ak = vec![0; cliques[k].set.len()];
                let mut al = vec![0; cliques[l].set.len()];
                for (t, &e) in a.iter().enumerate() {
                    ak[pk[t]] = e;
                    al[pl[t]] = e;
                }
                equalities.push(Equality {
                    kind: EqualityKind::Overlap,
                    label: format!("y^({})_{ak:?} = y^({})_{al:?} on {ov}", k + 1, l + 1),
                    form: normalize(vec![(lookup(&indices[k], &ak), 1.0), (lookup(&indices[l], &al), -1.0)]),
                    rhs: 0.0,
                });
            }
        }
    }

    Ok(MomentProblem {
        kind,
        n,
        degree: d,
        cliques,
        nvars: offset,
        objective: normalize(objective),
        equalities,
        blocks,
    })
}

/// Single-clique relaxation: `min ℓ_y(G)` subject to unit mass, invariance
/// `ℓ_y(x^α ∘ f) = y_α` for all `α` with `deg(x^α ∘ f) ≤ d`, and
/// `M_d(g_i y) ⪰ 0`.
pub fn build_full_problem(sys: &SparseSystem, set: &SemialgebraicSet, cost: &Polynomial, d: u32) -> Result<MomentProblem> {
    let f = polynomial_map(sys)?;
    check_inputs(sys, set, cost)?;
    assemble(
        ProblemKind::Full,
        sys.n(),
        d,
        vec![CliqueSpec { set: IndexSet::full(sys.n()), map: f, tests: None, domain: set, cost: cost.clone() }],
    )
}

fn check_inputs(sys: &SparseSystem, set: &SemialgebraicSet, cost: &Polynomial) -> Result<()> {
    if set.dim() != sys.n() || cost.nvars() != sys.n() {
        return validation(format!("set and cost must live on R^{}", sys.n()));
    }
    Ok(())
}

fn check_parts(sys: &SparseSystem, parts: &[IndexSet]) -> Result<()> {
    if parts.is_empty() {
        return validation("need at least one part");
    }
    let g = sys.graph();
    let mut cover = IndexSet::empty();
    for (k, p) in parts.iter().enumerate() {
        p.check_range(sys.n())?;
        if p.is_empty() {
            return validation("empty part");
        }
        if let Some((j, i)) = g.first_violation(p) {
            return Err(Error::Structural(format!(
                "part {} = {p} is not a subsystem: component {j} depends on x{i}",
                k + 1
            )));
        }
        cover = cover.union(p);
    }
    if cover.len() != sys.n() {
        return validation(format!("parts cover {cover}, not all coordinates"));
    }
    Ok(())
}

/// Full clique, but invariance is imposed only for test monomials supported
/// on some part (`h ∈ C(Π_{I_k} X)` truncated to monomials).
pub fn build_relaxed_full_problem(
    sys: &SparseSystem,
    parts: &[IndexSet],
    set: &SemialgebraicSet,
    cost: &Polynomial,
    d: u32,
) -> Result<MomentProblem> {
    let f = polynomial_map(sys)?;
    check_inputs(sys, set, cost)?;
    check_parts(sys, parts)?;
    let tests: Vec<MultiIndex> = graded_lex(sys.n(), d)
        .into_iter()
        .filter(|a| {
            parts.iter().any(|p| a.iter().enumerate().all(|(i, &e)| e == 0 || p.contains(i + 1)))
        })
        .collect();
    assemble(
        ProblemKind::Relaxed,
        sys.n(),
        d,
        vec![CliqueSpec { set: IndexSet::full(sys.n()), map: f, tests: Some(tests), domain: set, cost: cost.clone() }],
    )
}

/// One clique per part with per-clique invariance under `f_{I_k}`, overlap
/// consistency on `I_k ∩ I_l`, and objective `Σ_k ℓ_{y^(k)}(G_k)`.
///
/// `costs` are polynomials on `R^n`; each must only involve the
/// coordinates of its part.
pub fn build_sparse_problem(
    sys: &SparseSystem,
    parts: &[IndexSet],
    partsets: &[SemialgebraicSet],
    costs: &[Polynomial],
    d: u32,
) -> Result<MomentProblem> {
    polynomial_map(sys)?;
    check_parts(sys, parts)?;
    if partsets.len() != parts.len() || costs.len() != parts.len() {
        return validation("need one set and one cost per part");
    }
    let mut specs = Vec::with_capacity(parts.len());
    for (k, p) in parts.iter().enumerate() {
        if partsets[k].dim() != p.len() {
            return validation(format!("set of part {} lives on R^{}, expected R^{}", k + 1, partsets[k].dim(), p.len()));
        }
        if costs[k].nvars() != sys.n() {
            return validation(format!("cost of part {} must be a polynomial on R^{}", k + 1, sys.n()));
        }
        let cost = costs[k].restrict(&p.zero_based()).map_err(|_| {
            Error::Validation(format!("cost of part {} involves coordinates outside {p}", k + 1))
        })?;
        let map = sys.project(p)?.polynomial_map()?;
        specs.push(CliqueSpec { set: p.clone(), map, tests: None, domain: &partsets[k], cost });
    }
    assemble(ProblemKind::Sparse, sys.n(), d, specs)
}

/// Splits an ambient cost into per-part costs: each term goes to the first
/// part containing its support.
pub fn split_cost(cost: &Polynomial, parts: &[IndexSet]) -> Result<Vec<Polynomial>> {
    let n = cost.nvars();
    let mut out = vec![Polynomial::zero(n); parts.len()];
    for (a, c) in cost.terms() {
        let k = parts
            .iter()
            .position(|p| a.iter().enumerate().all(|(i, &e)| e == 0 || p.contains(i + 1)))
            .ok_or_else(|| Error::Validation(format!("cost term with exponents {a:?} spans several parts")))?;
        out[k] = out[k].add(&Polynomial::monomial(a.clone(), c));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::builtin;
    use serde_json::Value;

    fn cheb() -> SparseSystem {
        builtin("logistic_cheb", &Value::Null).unwrap()
    }

    #[test]
    fn compose_examples() {
        let f = vec![Polynomial::parse("2x1^2 - 1", 1).unwrap()];
        assert_eq!(compose_monomial_with_map(&[1], &f).unwrap(), f[0]);
        assert_eq!(compose_monomial_with_map(&[2], &f).unwrap(), Polynomial::parse("4x1^4 - 4x1^2 + 1", 1).unwrap());
        assert_eq!(compose_monomial_with_map(&[0], &f).unwrap(), Polynomial::constant(1, 1.0));
    }

    #[test]
    fn logistic_counts() {
        let x = SemialgebraicSet::from_box(&[(-1.0, 1.0)]).unwrap();
        let p = build_full_problem(&cheb(), &x, &Polynomial::var(1, 0), 8).unwrap();
        assert_eq!(p.nvars, 9);
        assert_eq!(p.block_sizes(), vec![5, 4]);
        let inv = p.equalities.iter().filter(|e| e.kind == EqualityKind::Invariance).count();
        assert_eq!(inv, 4);
        assert!(build_full_problem(&cheb(), &x, &Polynomial::var(1, 0), 7).is_err());
    }

    #[test]
    fn product_counts_and_full_part() {
        let sys = builtin("product_logistic", &Value::Null).unwrap();
        let x = SemialgebraicSet::from_box(&[(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
        let cost = Polynomial::parse("x1 + x2", 2).unwrap();
        let full = build_full_problem(&sys, &x, &cost, 8).unwrap();
        assert_eq!(full.nvars, 45);
        let parts = [IndexSet::new([1]).unwrap(), IndexSet::new([2]).unwrap()];
        let sets: Vec<_> = parts.iter().map(|p| x.restrict(p).unwrap()).collect();
        let costs = split_cost(&cost, &parts).unwrap();
        let sparse = build_sparse_problem(&sys, &parts, &sets, &costs, 8).unwrap();
        assert_eq!(sparse.nvars, 18);
        assert!(sparse.equalities.iter().all(|e| e.kind != EqualityKind::Overlap));

        let whole = [IndexSet::full(2)];
        let same = build_sparse_problem(&sys, &whole, &[x.clone()], &[cost.clone()], 8).unwrap();
        assert_eq!(same.objective, full.objective);
        assert_eq!(
            same.equalities.iter().map(|e| (&e.form, e.rhs)).collect::<Vec<_>>(),
            full.equalities.iter().map(|e| (&e.form, e.rhs)).collect::<Vec<_>>()
        );
        assert_eq!(same.blocks.iter().map(|b| &b.entries).collect::<Vec<_>>(), full.blocks.iter().map(|b| &b.entries).collect::<Vec<_>>());

        let relaxed = build_relaxed_full_problem(&sys, &parts, &x, &cost, 4).unwrap();
        let full4 = build_full_problem(&sys, &x, &cost, 4).unwrap();
        assert!(relaxed.equalities.len() < full4.equalities.len());
        let rel_whole = build_relaxed_full_problem(&sys, &whole, &x, &cost, 4).unwrap();
        assert_eq!(rel_whole.equalities.len(), full4.equalities.len());
        assert!(split_cost(&Polynomial::parse("x1 x2", 2).unwrap(), &parts).is_err());
    }

    #[test]
    fn overlaps_on_shared_coordinate() {
        // 3-D polynomial analogue of the coupled tent structure
        let sys = SparseSystem::from_polynomials(
            SystemKind::Discrete,
            vec![
                Polynomial::parse("x1", 3).unwrap(),
                Polynomial::parse("0.5 x1 x2", 3).unwrap(),
                Polynomial::parse("0.5 x1 x3^2", 3).unwrap(),
            ],
        )
        .unwrap();
        let parts = [IndexSet::new([1, 2]).unwrap(), IndexSet::new([1, 3]).unwrap()];
        let x = SemialgebraicSet::from_box(&[(-1.0, 1.0); 3]).unwrap();
        let sets: Vec<_> = parts.iter().map(|p| x.restrict(p).unwrap()).collect();
        let zero = Polynomial::zero(3);
        let p = build_sparse_problem(&sys, &parts, &sets, &[zero.clone(), zero], 4).unwrap();
        let ov: Vec<_> = p.equalities.iter().filter(|e| e.kind == EqualityKind::Overlap).collect();
        assert_eq!(ov.len(), 4);
        for e in ov {
            let (a, b) = (e.form[0].0, e.form[1].0);
            assert!(a < p.cliques[1].offset && b >= p.cliques[1].offset);
        }
        let bad = build_sparse_problem(&sys, &[IndexSet::new([2]).unwrap(), IndexSet::new([1, 3]).unwrap()], &sets, &[Polynomial::zero(3), Polynomial::zero(3)], 4);
        assert!(matches!(bad, Err(Error::Structural(_))));
    }
}
