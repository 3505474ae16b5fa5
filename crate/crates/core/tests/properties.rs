use std::collections::BTreeSet;

use num_complex::Complex64;
use proptest::prelude::*;

use koopman_sparse::dictionary::Dictionary;
use koopman_sparse::dynamics::{SparseSystem, SystemKind};
use koopman_sparse::edmd::Eigenfunction;
use koopman_sparse::measures::{glue_atomic, AtomicMeasure};
use koopman_sparse::poly::Polynomial;
use koopman_sparse::spectral::is_resonant;
use koopman_sparse::sparsity_graph::{IndexSet, SparsityGraph};

fn graph(n: usize) -> impl Strategy<Value = (usize, Vec<Vec<usize>>)> {
    (1..=n).prop_flat_map(|n| {
        (Just(n), prop::collection::vec(prop::collection::btree_set(1..=n, 0..=n.min(3)), n))
            .prop_map(|(n, d)| (n, d.into_iter().map(|s| s.into_iter().collect()).collect()))
    })
}

fn closed(deps: &[Vec<usize>], s: &BTreeSet<usize>) -> bool {
    s.iter().all(|&j| deps[j - 1].iter().all(|i| s.contains(i)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enumeration_matches_brute_force((n, deps) in graph(12)) {
        let g = SparsityGraph::from_dependencies(&deps, n).unwrap();
        let got: BTreeSet<Vec<usize>> =
            g.enumerate_subsystems(1 << 13).unwrap().iter().map(|s| s.as_slice().to_vec()).collect();
        let brute: BTreeSet<Vec<usize>> = (1u32..1 << n)
            .map(|m| (1..=n).filter(|i| m & (1 << (i - 1)) != 0).collect::<BTreeSet<_>>())
            .filter(|s| closed(&deps, s))
            .map(|s| s.into_iter().collect())
            .collect();
        prop_assert_eq!(got, brute);
    }

    #[test]
    fn closure_is_the_least_closed_superset((n, deps) in graph(10), seed in prop::collection::btree_set(1usize..=10, 1..4)) {
        let g = SparsityGraph::from_dependencies(&deps, n).unwrap();
        let seed: Vec<usize> = seed.into_iter().filter(|&i| i <= n).collect();
        prop_assume!(!seed.is_empty());
        let s = IndexSet::new(seed.iter().copied()).unwrap();
        let c = g.closure(&s).unwrap();
        prop_assert!(s.is_subset(&c));
        prop_assert!(g.is_subsystem(&c).unwrap());
        prop_assert_eq!(g.closure(&c).unwrap(), c.clone());
        // every subsystem containing the seed contains the closure
        for t in g.enumerate_subsystems(1 << 11).unwrap() {
            if s.is_subset(&t) {
                prop_assert!(c.is_subset(&t));
            }
        }
    }

    #[test]
    fn subsystems_form_a_lattice((n, deps) in graph(8)) {
        let g = SparsityGraph::from_dependencies(&deps, n).unwrap();
        let subs = g.enumerate_subsystems(1 << 9).unwrap();
        for a in &subs {
            for b in &subs {
                prop_assert!(g.is_subsystem(&a.union(b)).unwrap());
                let i = a.intersection(b);
                if !i.is_empty() {
                    prop_assert!(g.is_subsystem(&i).unwrap());
                }
            }
        }
    }

    #[test]
    fn projected_map_commutes_with_iteration(
        coeffs in prop::collection::vec(-0.9f64..0.9, 4),
        x0 in prop::collection::vec(-1.0f64..1.0, 4),
    ) {
        // x1, x2 closed; x3, x4 driven by them
        let p = |s: &str| Polynomial::parse(s, 4).unwrap();
        let f = vec![
            p(&format!("{} * x1 * x2", coeffs[0])),
            p(&format!("{} * x2 + 0.1 * x1^2", coeffs[1])),
            p(&format!("{} * x3 * x1 + x2", coeffs[2])),
            p(&format!("{} * x4 + x3 * x2", coeffs[3])),
        ];
        let sys = SparseSystem::from_polynomials(SystemKind::Discrete, f).unwrap();
        let s = IndexSet::new([1, 2]).unwrap();
        let sub = sys.project(&s).unwrap();
        let full = sys.iterate_map(&x0, 20).unwrap();
        let part = sub.iterate_map(&s.project(&x0), 20).unwrap();
        for (a, b) in full.states.iter().zip(&part.states) {
            prop_assert_eq!(s.project(a), b.clone());
        }
    }

    #[test]
    fn lifted_functions_ignore_the_other_coordinates(
        coeffs in prop::collection::vec(-2.0f64..2.0, 6),
        x in prop::collection::vec(-1.0f64..1.0, 5),
    ) {
        let s = IndexSet::new([2, 4]).unwrap();
        let dict = Dictionary::monomials(2, 2);
        let g = Eigenfunction {
            lambda: Complex64::new(0.5, 0.0),
            coeffs: coeffs.iter().map(|&c| Complex64::new(c, -c / 3.0)).collect(),
            dict: dict.clone(),
        };
        let lifted = g.lift(&s, 5).unwrap();
        prop_assert_eq!(lifted.eval(&x), g.eval(&s.project(&x)));
        let ld = dict.lift(&s, 5).unwrap();
        prop_assert_eq!(ld.eval_point(&x), dict.eval_point(&s.project(&x)));
    }

    #[test]
    fn pushforward_conserves_mass(
        atoms in prop::collection::vec((0.0f64..1.0, prop::collection::vec(-1.0f64..1.0, 3)), 1..40),
    ) {
        let mu = AtomicMeasure::from_atoms(3, &atoms).unwrap();
        for idx in [vec![1], vec![2, 3], vec![1, 3]] {
            let p = mu.pushforward(&IndexSet::new(idx).unwrap()).unwrap();
            prop_assert!((p.mass() - mu.mass()).abs() <= 1e-14 * mu.mass().max(1.0));
            prop_assert!(p.len() <= mu.len());
        }
        let m = mu.map(1, |x| vec![x[0] * x[1]]).unwrap();
        prop_assert!((m.mass() - mu.mass()).abs() <= 1e-14 * mu.mass().max(1.0));
    }

    #[test]
    fn glue_recovers_its_parts(
        raw in prop::collection::vec((0.01f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 1..30),
    ) {
        // distinct overlap coordinates z_k = k
        let total: f64 = raw.iter().map(|r| r.0).sum();
        let zx: Vec<(f64, Vec<f64>)> = raw.iter().enumerate().map(|(k, r)| (r.0 / total, vec![k as f64, r.1])).collect();
        let zy: Vec<(f64, Vec<f64>)> = raw.iter().enumerate().map(|(k, r)| (r.0 / total, vec![k as f64, r.2])).collect();
        let a = AtomicMeasure::from_atoms(2, &zx).unwrap();
        let b = AtomicMeasure::from_atoms(2, &zy).unwrap();
        let s1 = IndexSet::new([1, 2]).unwrap();
        let s2 = IndexSet::new([1, 3]).unwrap();
        let g = glue_atomic(&[(a.clone(), s1.clone()), (b.clone(), s2.clone())], 0.0).unwrap();
        prop_assert_eq!(g.pushforward(&s1).unwrap(), a);
        prop_assert_eq!(g.pushforward(&s2).unwrap(), b);
    }

    #[test]
    fn resonance_witnesses_are_genuine(spec in prop::collection::vec(-5i32..=5, 1..=4), k in 2u32..=4) {
        let z: Vec<Complex64> = spec.iter().map(|&v| Complex64::new(v as f64, 0.0)).collect();
        let w = is_resonant(&z, k, Some(1e-9)).unwrap();
        let n = spec.len();
        let mut exists = false;
        for i in 0..n {
            // every m with |m| in 2..=k and m_i = 0, as base-(k+1) digits
            for code in 0..(k + 1).pow(n as u32) {
                let m: Vec<u32> = (0..n).map(|j| code / (k + 1).pow(j as u32) % (k + 1)).collect();
                let order: u32 = m.iter().sum();
                if m[i] == 0 && (2..=k).contains(&order) {
                    let s: i32 = m.iter().zip(&spec).map(|(&c, &v)| c as i32 * v).sum();
                    exists |= s == spec[i];
                }
            }
        }
        prop_assert_eq!(w.is_some(), exists);
        if let Some(w) = w {
            prop_assert_eq!(w.m[w.i - 1], 0);
            let s: i32 = w.m.iter().zip(&spec).map(|(&c, &v)| c as i32 * v).sum();
            prop_assert_eq!(s, spec[w.i - 1]);
        }
    }
}
