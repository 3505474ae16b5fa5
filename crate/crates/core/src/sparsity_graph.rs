//! Sparsity graphs of vector fields and subsystem detection.
//!
//! An edge `x_i -> x_j` exists when component `f_j` reads coordinate `x_i`
//! (with `i != j`). A coordinate set is a subsystem exactly when it is
//! closed under incoming edges. All indices on the public surface are
//! 1-based.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};

/// Sorted, duplicate-free set of 1-based coordinate indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    /// Builds a set from arbitrary indices, sorting and deduplicating.
    /// Index `0` is rejected since indices are 1-based.
    pub fn new<I: IntoIterator<Item = usize>>(indices: I) -> Result<Self> {
        let set: BTreeSet<usize> = indices.into_iter().collect();
        if set.contains(&0) {
            return validation("index sets are 1-based; found index 0");
        }
        Ok(IndexSet(set.into_iter().collect()))
    }

    /// Builds a set and checks every entry lies in `1..=n`.
    pub fn within<I: IntoIterator<Item = usize>>(indices: I, n: usize) -> Result<Self> {
        let set = Self::new(indices)?;
        set.check_range(n)?;
        Ok(set)
    }

    pub fn full(n: usize) -> Self {
        IndexSet((1..=n).collect())
    }

    pub fn empty() -> Self {
        IndexSet(Vec::new())
    }

    pub(crate) fn from_sorted_unchecked(v: Vec<usize>) -> Self {
        debug_assert!(v.windows(2).all(|w| w[0] < w[1]));
        IndexSet(v)
    }

    pub fn check_range(&self, n: usize) -> Result<()> {
        match self.0.last() {
            Some(&max) if max > n => validation(format!("index {max} out of range 1..={n}")),
            _ => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// 0-based positions, convenient for slicing state vectors.
    pub fn zero_based(&self) -> Vec<usize> {
        self.0.iter().map(|i| i - 1).collect()
    }

    /// Local (0-based) position of global index `i` inside the set.
    pub fn position(&self, i: usize) -> Option<usize> {
        self.0.binary_search(&i).ok()
    }

    pub fn is_subset(&self, other: &IndexSet) -> bool {
        self.0.iter().all(|&i| other.contains(i))
    }

    pub fn union(&self, other: &IndexSet) -> IndexSet {
        let s: BTreeSet<usize> = self.0.iter().chain(other.0.iter()).copied().collect();
        IndexSet(s.into_iter().collect())
    }

    pub fn intersection(&self, other: &IndexSet) -> IndexSet {
        IndexSet(self.0.iter().copied().filter(|&i| other.contains(i)).collect())
    }

    /// Applies the coordinate projection `Π_I` to a full state.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        self.0.iter().map(|&i| x[i - 1]).collect()
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

/// Dependency structure of a vector field on `R^n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SparsityGraph {
    n: usize,
    /// `deps[j]` holds the indices `i != j+1` that component `j+1` reads.
    deps: Vec<IndexSet>,
}

impl SparsityGraph {
    /// Builds the graph from per-component dependency lists. Self-dependencies
    /// are dropped.
    pub fn from_dependencies(deps: &[Vec<usize>], n: usize) -> Result<Self> {
        if deps.len() != n {
            return validation(format!(
                "expected {n} dependency sets, got {}",
                deps.len()
            ));
        }
        let mut out = Vec::with_capacity(n);
        for (j, d) in deps.iter().enumerate() {
            for &i in d {
                if i == 0 || i > n {
                    return validation(format!(
                        "component {} depends on out-of-range index {i}",
                        j + 1
                    ));
                }
            }
            out.push(IndexSet::new(d.iter().copied().filter(|&i| i != j + 1))?);
        }
        Ok(SparsityGraph { n, deps: out })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Incoming neighbours of component `j` (1-based).
    pub fn deps(&self, j: usize) -> &IndexSet {
        &self.deps[j - 1]
    }

    /// Edges `(i, j)` meaning `x_i -> x_j`, ordered by target then source.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e = Vec::new();
        for (j, d) in self.deps.iter().enumerate() {
            for i in d.iter() {
                e.push((i, j + 1));
            }
        }
        e
    }

    pub fn is_subsystem(&self, set: &IndexSet) -> Result<bool> {
        set.check_range(self.n)?;
        Ok(self.first_violation(set).is_none())
    }

    /// First `(j, i)` with `j ∈ set`, `i ∈ deps[j]`, `i ∉ set`.
    pub fn first_violation(&self, set: &IndexSet) -> Option<(usize, usize)> {
        set.iter().find_map(|j| {
            self.deps[j - 1]
                .iter()
                .find(|&i| !set.contains(i))
                .map(|i| (j, i))
        })
    }

    /// Smallest subsystem containing `seed`, by backward reachability.
    pub fn closure(&self, seed: &IndexSet) -> Result<IndexSet> {
        seed.check_range(self.n)?;
        let mut mark = vec![false; self.n];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for j in seed.iter() {
            mark[j - 1] = true;
            queue.push_back(j);
        }
        while let Some(j) = queue.pop_front() {
            for i in self.deps[j - 1].iter() {
                if !mark[i - 1] {
                    mark[i - 1] = true;
                    queue.push_back(i);
                }
            }
        }
        Ok(IndexSet::from_sorted_unchecked(
            (1..=self.n).filter(|&i| mark[i - 1]).collect(),
        ))
    }

    /// All nonempty subsystems, sorted by cardinality then lexicographically.
    ///
    /// Closed sets are exactly the unions of single-node closures, so the
    /// search grows unions from those generators. Returns
    /// [`Error::Overflow`] once more than `cap` sets have been found.
    pub fn enumerate_subsystems(&self, cap: usize) -> Result<Vec<IndexSet>> {
        if cap == 0 {
            return validation("enumeration cap must be at least 1");
        }
        let words = self.n.div_ceil(64).max(1);
        let to_bits = |s: &IndexSet| {
            let mut b = vec![0u64; words];
            for i in s.iter() {
                b[(i - 1) / 64] |= 1 << ((i - 1) % 64);
            }
            b
        };
        let mut generators: Vec<Vec<u64>> = Vec::new();
        for j in 1..=self.n {
            let g = to_bits(&self.closure(&IndexSet::from_sorted_unchecked(vec![j]))?);
            if !generators.contains(&g) {
                generators.push(g);
            }
        }
        let mut seen: HashSet<Vec<u64>> = HashSet::new();
        let mut queue: VecDeque<Vec<u64>> = VecDeque::new();
        for g in &generators {
            if seen.insert(g.clone()) {
                queue.push_back(g.clone());
            }
        }
        if seen.len() > cap {
            return Err(Error::Overflow { cap, found: seen.len() });
        }
        while let Some(s) = queue.pop_front() {
            for g in &generators {
                let u: Vec<u64> = s.iter().zip(g).map(|(a, b)| a | b).collect();
                if seen.insert(u.clone()) {
                    if seen.len() > cap {
                        return Err(Error::Overflow { cap, found: seen.len() });
                    }
                    queue.push_back(u);
                }
            }
        }
        let mut out: Vec<IndexSet> = seen
            .into_iter()
            .map(|b| {
                IndexSet::from_sorted_unchecked(
                    (1..=self.n)
                        .filter(|&i| b[(i - 1) / 64] >> ((i - 1) % 64) & 1 == 1)
                        .collect(),
                )
            })
            .collect();
        out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        Ok(out)
    }
}
