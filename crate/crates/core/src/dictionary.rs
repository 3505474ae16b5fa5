//! Observable dictionaries for EDMD.

use nalgebra::DMatrix;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};
use crate::poly::{binomial, graded_lex};
use crate::rng::rng_from_seed;
use crate::sparsity_graph::IndexSet;

/// A single observable. Coordinates are 0-based positions in the ambient
/// state; keeping them explicit makes lifting a pure relabelling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    /// `Π x_v^e` over the listed `(v, e)` pairs, `e > 0`, increasing `v`.
    Monomial { factors: Vec<(usize, u32)> },
    /// `exp(−Σ_k (x_{coords[k]} − center[k])² / (2σ²))`.
    Rbf { coords: Vec<usize>, center: Vec<f64>, sigma: f64 },
}

impl Observable {
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Observable::Monomial { factors } => {
                let mut t = 1.0;
                for &(v, e) in factors {
                    t *= x[v].powi(e as i32);
                }
                t
            }
            Observable::Rbf { coords, center, sigma } => {
                let mut r2 = 0.0;
                for (&c, &m) in coords.iter().zip(center) {
                    let d = x[c] - m;
                    r2 += d * d;
                }
                (-r2 / (2.0 * sigma * sigma)).exp()
            }
        }
    }

    fn relabel(&self, map: &[usize]) -> Observable {
        match self {
            Observable::Monomial { factors } => Observable::Monomial {
                factors: factors.iter().map(|&(v, e)| (map[v], e)).collect(),
            },
            Observable::Rbf { coords, center, sigma } => Observable::Rbf {
                coords: coords.iter().map(|&c| map[c]).collect(),
                center: center.clone(),
                sigma: *sigma,
            },
        }
    }

    pub fn monomial(exps: &[u32]) -> Observable {
        Observable::Monomial {
            factors: exps.iter().enumerate().filter(|(_, &e)| e > 0).map(|(v, &e)| (v, e)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    dim: usize,
    /// Coordinates whose identity functions precede `entries`.
    coords: Vec<usize>,
    entries: Vec<Observable>,
}

impl Dictionary {
    pub fn new(dim: usize, entries: Vec<Observable>, includes_coords: bool) -> Result<Self> {
        let coords = if includes_coords { (0..dim).collect() } else { Vec::new() };
        let d = Dictionary { dim, coords, entries };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<()> {
        if self.len() == 0 {
            return validation("a dictionary needs at least one observable");
        }
        for o in &self.entries {
            match o {
                Observable::Monomial { factors } => {
                    if factors.iter().any(|&(v, _)| v >= self.dim) {
                        return validation("monomial exponent outside the dictionary dimension");
                    }
                }
                Observable::Rbf { coords, center, sigma } => {
                    if coords.len() != center.len() || coords.iter().any(|&c| c >= self.dim) {
                        return validation("RBF center does not match its coordinates");
                    }
                    if !(*sigma > 0.0) || !sigma.is_finite() {
                        return validation("RBF width must be positive and finite");
                    }
                    if center.iter().any(|c| !c.is_finite()) {
                        return validation("RBF center must be finite");
                    }
                }
            }
        }
        Ok(())
    }

    /// Monomials of total degree `≤ d` in graded-lex order.
    pub fn monomials(n: usize, d: u32) -> Dictionary {
        let entries = graded_lex(n, d).iter().map(|e| Observable::monomial(e)).collect();
        Dictionary { dim: n, coords: Vec::new(), entries }
    }

    /// `l` Gaussian RBFs of width `sigma`, centers uniform in `bounds`.
    pub fn gaussian_rbf(l: usize, bounds: &[(f64, f64)], sigma: f64, seed: u64) -> Result<Dictionary> {
        if l == 0 {
            return validation("need at least one RBF");
        }
        if bounds.iter().any(|&(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite()) {
            return validation("RBF center box must be finite with lo <= hi");
        }
        let n = bounds.len();
        let mut rng = rng_from_seed(seed);
        let entries = (0..l)
            .map(|_| Observable::Rbf {
                coords: (0..n).collect(),
                center: bounds.iter().map(|&(a, b)| rng.gen_range(a..=b)).collect(),
                sigma,
            })
            .collect();
        let d = Dictionary { dim: n, coords: Vec::new(), entries };
        d.validate()?;
        Ok(d)
    }

    /// Prepends the coordinate functions `x_1..x_n`.
    pub fn with_coords(mut self) -> Dictionary {
        self.coords = (0..self.dim).collect();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of observables `l`, coordinate functions included.
    pub fn len(&self) -> usize {
        self.coords.len() + self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn includes_coords(&self) -> bool {
        !self.coords.is_empty()
    }

    pub fn entries(&self) -> &[Observable] {
        &self.entries
    }

    /// `Ψ(x)`.
    pub fn eval_point(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        self.eval_into(x, &mut out);
        out
    }

    fn eval_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.extend(self.coords.iter().map(|&c| x[c]));
        out.extend(self.entries.iter().map(|o| o.eval(x)));
    }

    /// `l × m` matrix whose column `k` is `Ψ(pts[:, k])`; `pts` is `dim × m`.
    pub fn evaluate(&self, pts: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if pts.nrows() != self.dim {
            return validation(format!(
                "points of dimension {} for a dictionary on R^{}",
                pts.nrows(),
                self.dim
            ));
        }
        let l = self.len();
        let m = pts.ncols();
        let mut out = DMatrix::zeros(l, m);
        out.as_mut_slice().par_chunks_mut(l.max(1)).enumerate().for_each(|(k, col)| {
            let x: Vec<f64> = pts.column(k).iter().copied().collect();
            let mut buf = Vec::with_capacity(l);
            self.eval_into(&x, &mut buf);
            col.copy_from_slice(&buf);
        });
        Ok(out)
    }

    /// `ψ ↦ ψ ∘ Π_I` for every observable: a dictionary on `R^n`.
    pub fn lift(&self, set: &IndexSet, n: usize) -> Result<Dictionary> {
        set.check_range(n)?;
        if set.len() != self.dim {
            return validation(format!(
                "dictionary on R^{} cannot be lifted through an index set of size {}",
                self.dim,
                set.len()
            ));
        }
        let map = set.zero_based();
        Ok(Dictionary {
            dim: n,
            coords: self.coords.iter().map(|&c| map[c]).collect(),
            entries: self.entries.iter().map(|o| o.relabel(&map)).collect(),
        })
    }

    /// Highest monomial degree, `None` if any RBF is present.
    pub fn polynomial_degree(&self) -> Option<u32> {
        let mut d = if self.coords.is_empty() { 0 } else { 1 };
        for o in &self.entries {
            match o {
                Observable::Monomial { factors } => d = d.max(factors.iter().map(|f| f.1).sum()),
                Observable::Rbf { .. } => return None,
            }
        }
        Some(d)
    }
}

/// Size of the degree-`d` monomial basis on `R^n`.
pub fn monomial_count(n: usize, d: u32) -> u64 {
    binomial(n as u64 + d as u64, n as u64)
}

/// JSON description of a dictionary.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DictionarySpec {
    Monomials {
        #[serde(default)]
        dim: Option<usize>,
        d: u32,
        #[serde(default)]
        include_coords: bool,
    },
    Rbf {
        #[serde(default)]
        dim: Option<usize>,
        l: usize,
        #[serde(rename = "box", default)]
        bounds: Option<Vec<(f64, f64)>>,
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default = "yes")]
        include_coords: bool,
    },
}

fn default_sigma() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl DictionarySpec {
    /// Builds the dictionary on `R^dim`. `default_box` and `default_seed` fill
    /// in unspecified center boxes and seeds.
    pub fn build(&self, dim: usize, default_box: &[(f64, f64)], default_seed: u64) -> Result<Dictionary> {
        let check = |declared: &Option<usize>| match declared {
            Some(k) if *k != dim => validation(format!("dictionary declares dim {k}, expected {dim}")),
            _ => Ok(()),
        };
        match self {
            DictionarySpec::Monomials { dim: dd, d, include_coords } => {
                check(dd)?;
                let mut dict = Dictionary::monomials(dim, *d);
                if *include_coords {
                    dict = dict.with_coords();
                }
                Ok(dict)
            }
            DictionarySpec::Rbf { dim: dd, l, bounds, sigma, seed, include_coords } => {
                check(dd)?;
                let b = bounds.as_deref().unwrap_or(default_box);
                if b.len() != dim {
                    return Err(Error::Validation(format!(
                        "RBF box has {} intervals, expected {dim}",
                        b.len()
                    )));
                }
                let mut dict = Dictionary::gaussian_rbf(*l, b, *sigma, seed.unwrap_or(default_seed))?;
                if *include_coords {
                    dict = dict.with_coords();
                }
                Ok(dict)
            }
        }
    }
}
