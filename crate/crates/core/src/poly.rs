//! Sparse multivariate polynomials with real coefficients.
//!
//! Terms live in a `BTreeMap` keyed by exponent vectors, so iteration order
//! (and therefore floating point evaluation order) is canonical.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};

/// Multi-index `α ∈ N^n`.
pub type MultiIndex = Vec<u32>;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<MultiIndex, f64>,
}

/// Serialized form: `{"terms":[{"coeff":1.0,"exps":[0,1]}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolynomialRepr {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nvars: Option<usize>,
    pub terms: Vec<TermRepr>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermRepr {
    pub coeff: f64,
    pub exps: Vec<u32>,
}

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        if c != 0.0 {
            p.terms.insert(vec![0; nvars], c);
        }
        p
    }

    /// The coordinate function `x_{i+1}` (0-based `i`).
    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        Self::monomial(e, 1.0)
    }

    pub fn monomial(exps: MultiIndex, coeff: f64) -> Self {
        let mut p = Self::zero(exps.len());
        if coeff != 0.0 {
            p.terms.insert(exps, coeff);
        }
        p
    }

    /// Builds a polynomial from `(coeff, exps)` pairs, summing duplicates and
    /// dropping zero coefficients.
    pub fn from_terms<I>(nvars: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, MultiIndex)>,
    {
        let mut acc: BTreeMap<MultiIndex, CompensatedSum> = BTreeMap::new();
        for (c, e) in terms {
            if e.len() != nvars {
                return validation(format!(
                    "exponent vector of length {} in a polynomial on {nvars} variables",
                    e.len()
                ));
            }
            if !c.is_finite() {
                return validation("non-finite polynomial coefficient");
            }
            acc.entry(e).or_default().add(c);
        }
        Ok(Self::from_acc(nvars, acc))
    }

    fn from_acc<K: IntoIterator<Item = (MultiIndex, CompensatedSum)>>(nvars: usize, acc: K) -> Self {
        let terms = acc
            .into_iter()
            .map(|(e, s)| (e, s.value()))
            .filter(|(_, c)| *c != 0.0)
            .collect();
        Polynomial { nvars, terms }
    }

    pub fn from_repr(repr: &PolynomialRepr, nvars: Option<usize>) -> Result<Self> {
        let n = match (repr.nvars, nvars, repr.terms.first()) {
            (Some(a), Some(b), _) if a != b => {
                return validation(format!("polynomial declares {a} variables, expected {b}"))
            }
            (Some(a), _, _) => a,
            (None, Some(b), _) => b,
            (None, None, Some(t)) => t.exps.len(),
            (None, None, None) => 0,
        };
        Self::from_terms(n, repr.terms.iter().map(|t| (t.coeff, t.exps.clone())))
    }

    pub fn to_repr(&self) -> PolynomialRepr {
        PolynomialRepr {
            nvars: Some(self.nvars),
            terms: self
                .terms
                .iter()
                .map(|(e, &c)| TermRepr { coeff: c, exps: e.clone() })
                .collect(),
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.terms.iter().map(|(e, &c)| (e, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, exps: &[u32]) -> f64 {
        self.terms.get(exps).copied().unwrap_or(0.0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.nvars);
        let mut s = 0.0;
        for (e, &c) in &self.terms {
            let mut t = c;
            for (xi, &ei) in x.iter().zip(e) {
                if ei > 0 {
                    t *= xi.powi(ei as i32);
                }
            }
            s += t;
        }
        s
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, other.nvars, "adding polynomials on different spaces");
        let mut acc: BTreeMap<MultiIndex, CompensatedSum> = BTreeMap::new();
        for (e, &c) in self.terms.iter().chain(other.terms.iter()) {
            acc.entry(e.clone()).or_default().add(c);
        }
        Self::from_acc(self.nvars, acc)
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        Self::from_acc(
            self.nvars,
            self.terms.iter().map(|(e, &c)| {
                (e.clone(), CompensatedSum { sum: c * s, comp: 0.0 })
            }),
        )
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars, other.nvars, "multiplying polynomials on different spaces");
        let mut acc: HashMap<MultiIndex, CompensatedSum> = HashMap::new();
        for (ea, &ca) in &self.terms {
            for (eb, &cb) in &other.terms {
                let e: MultiIndex = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                acc.entry(e).or_default().add(ca * cb);
            }
        }
        Self::from_acc(self.nvars, acc)
    }

    pub fn pow(&self, k: u32) -> Polynomial {
        let mut out = Polynomial::constant(self.nvars, 1.0);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                out = out.mul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.mul(&base);
            }
        }
        out
    }

    /// Substitutes `x_i := maps[i]`; result lives on the space of `maps`.
    pub fn compose(&self, maps: &[Polynomial]) -> Result<Polynomial> {
        if maps.len() != self.nvars {
            return validation(format!(
                "composition needs {} component maps, got {}",
                self.nvars,
                maps.len()
            ));
        }
        let target = maps.first().map_or(0, |m| m.nvars);
        if maps.iter().any(|m| m.nvars != target) {
            return validation("component maps live on different spaces");
        }
        let mut pows: Vec<Vec<Polynomial>> = maps
            .iter()
            .map(|m| vec![Polynomial::constant(target, 1.0), m.clone()])
            .collect();
        let mut acc: HashMap<MultiIndex, CompensatedSum> = HashMap::new();
        for (e, &c) in &self.terms {
            let mut t = Polynomial::constant(target, c);
            for (i, &ei) in e.iter().enumerate() {
                while pows[i].len() <= ei as usize {
                    let next = pows[i].last().unwrap().mul(&maps[i]);
                    pows[i].push(next);
                }
                if ei > 0 {
                    t = t.mul(&pows[i][ei as usize]);
                }
            }
            for (te, tc) in t.terms {
                acc.entry(te).or_default().add(tc);
            }
        }
        Ok(Self::from_acc(target, acc))
    }

    /// Partial derivative with respect to variable `i` (0-based).
    pub fn derivative(&self, i: usize) -> Polynomial {
        let mut out = Polynomial::zero(self.nvars);
        for (e, &c) in &self.terms {
            if e[i] > 0 {
                let mut ne = e.clone();
                ne[i] -= 1;
                let v = c * e[i] as f64;
                *out.terms.entry(ne).or_insert(0.0) += v;
            }
        }
        out.terms.retain(|_, c| *c != 0.0);
        out
    }

    /// 0-based variables with a nonzero exponent in some term.
    pub fn vars_used(&self) -> Vec<usize> {
        (0..self.nvars)
            .filter(|&i| self.terms.keys().any(|e| e[i] > 0))
            .collect()
    }

    /// Re-expresses the polynomial on the variables at `positions` (0-based,
    /// increasing). Fails if a term touches any other variable.
    pub fn restrict(&self, positions: &[usize]) -> Result<Polynomial> {
        let mut terms = BTreeMap::new();
        for (e, &c) in &self.terms {
            for (i, &ei) in e.iter().enumerate() {
                if ei > 0 && !positions.contains(&i) {
                    return Err(Error::Validation(format!(
                        "polynomial term touches undeclared coordinate x{}",
                        i + 1
                    )));
                }
            }
            terms.insert(positions.iter().map(|&p| e[p]).collect(), c);
        }
        Ok(Polynomial { nvars: positions.len(), terms })
    }

    /// Scatters local variable `k` to ambient position `positions[k]`.
    pub fn embed(&self, positions: &[usize], nvars: usize) -> Polynomial {
        assert_eq!(positions.len(), self.nvars);
        let terms = self
            .terms
            .iter()
            .map(|(e, &c)| {
                let mut ne = vec![0; nvars];
                for (k, &p) in positions.iter().enumerate() {
                    ne[p] = e[k];
                }
                (ne, c)
            })
            .collect();
        Polynomial { nvars, terms }
    }

    /// Parses expressions such as `2*x1^2 - 1`, `x1 + x2` or `-0.5 x3`.
    pub fn parse(s: &str, nvars: usize) -> Result<Polynomial> {
        let err = |m: &str| Error::Parse(format!("{m} in polynomial '{s}'"));
        let cleaned: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if cleaned.is_empty() {
            return Err(err("empty expression"));
        }
        let mut pieces: Vec<(f64, &str)> = Vec::new();
        let bytes = cleaned.as_bytes();
        let mut start = 0;
        let mut sign = 1.0;
        let mut i = 0;
        if bytes[0] == b'+' || bytes[0] == b'-' {
            sign = if bytes[0] == b'-' { -1.0 } else { 1.0 };
            start = 1;
            i = 1;
        }
        while i <= bytes.len() {
            // a sign directly after 'e' belongs to a float exponent
            let at_sep = i == bytes.len()
                || ((bytes[i] == b'+' || bytes[i] == b'-')
                    && i > start
                    && !(bytes[i - 1] == b'e' && i >= 2 && bytes[i - 2].is_ascii_digit()));
            if at_sep {
                pieces.push((sign, &cleaned[start..i]));
                if i < bytes.len() {
                    sign = if bytes[i] == b'-' { -1.0 } else { 1.0 };
                }
                start = i + 1;
            }
            i += 1;
        }
        let mut terms = Vec::new();
        for (sign, piece) in pieces {
            if piece.is_empty() {
                return Err(err("dangling operator"));
            }
            let mut coeff = sign;
            let mut exps = vec![0u32; nvars];
            for factor in piece.split('*') {
                if factor.is_empty() {
                    return Err(err("empty factor"));
                }
                // implicit product such as `4x1^2`
                let factor = match factor.find('x') {
                    Some(pos) if pos > 0 => {
                        coeff *= factor[..pos].parse::<f64>().map_err(|_| err("bad coefficient"))?;
                        &factor[pos..]
                    }
                    _ => factor,
                };
                if let Some(rest) = factor.strip_prefix('x') {
                    // juxtaposed variables such as `x1^3x2`
                    for var in rest.split('x') {
                        let (idx, pow) = match var.split_once('^') {
                            Some((a, b)) => (a, b.parse::<u32>().map_err(|_| err("bad exponent"))?),
                            None => (var, 1),
                        };
                        let idx: usize = idx.parse().map_err(|_| err("bad variable index"))?;
                        if idx == 0 || idx > nvars {
                            return Err(err(&format!("variable x{idx} out of range 1..={nvars}")));
                        }
                        exps[idx - 1] += pow;
                    }
                } else {
                    coeff *= factor.parse::<f64>().map_err(|_| err("bad coefficient"))?;
                }
            }
            terms.push((coeff, exps));
        }
        Polynomial::from_terms(nvars, terms)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (e, &c)) in self.terms.iter().rev().enumerate() {
            let (sign, mag) = if c < 0.0 { ("-", -c) } else { ("+", c) };
            if k == 0 {
                if sign == "-" {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            let vars: Vec<String> = e
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0)
                .map(|(i, &p)| if p == 1 { format!("x{}", i + 1) } else { format!("x{}^{p}", i + 1) })
                .collect();
            if vars.is_empty() {
                write!(f, "{mag}")?;
            } else if mag == 1.0 {
                write!(f, "{}", vars.join("*"))?;
            } else {
                write!(f, "{mag}*{}", vars.join("*"))?;
            }
        }
        Ok(())
    }
}

/// All multi-indices of total degree exactly `k` in `n` variables, in
/// descending lexicographic order (`x1` varies slowest).
pub fn exponents_of_degree(n: usize, k: u32) -> Vec<MultiIndex> {
    fn rec(n: usize, k: u32, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
        if prefix.len() + 1 == n {
            prefix.push(k);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=k).rev() {
            prefix.push(first);
            rec(n, k - first, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        if k == 0 {
            out.push(Vec::new());
        }
        return out;
    }
    rec(n, k, &mut Vec::with_capacity(n), &mut out);
    out
}

/// Graded-lex basis of all multi-indices with `|α| ≤ d`.
pub fn graded_lex(n: usize, d: u32) -> Vec<MultiIndex> {
    (0..=d).flat_map(|k| exponents_of_degree(n, k)).collect()
}

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u64 = 1;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graded_lex_order_two_vars() {
        assert_eq!(
            graded_lex(2, 2),
            vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]
        );
    }

    #[test]
    fn basis_sizes_match_binomials() {
        for n in 1..=5usize {
            for d in 0..=6u32 {
                assert_eq!(graded_lex(n, d).len() as u64, binomial((n as u64) + d as u64, n as u64));
            }
        }
    }

    #[test]
    fn cheb_composition() {
        let f = Polynomial::parse("2*x1^2 - 1", 1).unwrap();
        let sq = Polynomial::monomial(vec![2], 1.0).compose(&[f.clone()]).unwrap();
        assert_eq!(sq, Polynomial::parse("4x1^4 - 4 x1^2 + 1", 1).unwrap());
        let id = Polynomial::monomial(vec![1], 1.0).compose(&[f.clone()]).unwrap();
        assert_eq!(id, f);
        let one = Polynomial::monomial(vec![0], 1.0).compose(&[f]).unwrap();
        assert_eq!(one, Polynomial::constant(1, 1.0));
    }

    #[test]
    fn parse_forms() {
        let p = Polynomial::parse("-0.5x3 + x1*x2^2 - 1e-3", 3).unwrap();
        assert_eq!(p.coeff(&[0, 0, 1]), -0.5);
        assert_eq!(p.coeff(&[1, 2, 0]), 1.0);
        assert_eq!(p.coeff(&[0, 0, 0]), -1e-3);
        assert!(Polynomial::parse("x4", 3).is_err());
        assert!(Polynomial::parse("x1 +", 3).is_err());
    }

    #[test]
    fn restrict_and_embed() {
        let p = Polynomial::parse("x2^2 + 3 x4", 5).unwrap();
        let local = p.restrict(&[1, 3]).unwrap();
        assert_eq!(local, Polynomial::parse("x1^2 + 3x2", 2).unwrap());
        assert_eq!(local.embed(&[1, 3], 5), p);
        assert!(p.restrict(&[1]).is_err());
    }

    #[test]
    fn derivative_and_eval() {
        let p = Polynomial::parse("x1^3 x2 - 2 x2", 2).unwrap();
        let dx = p.derivative(0);
        assert_eq!(dx, Polynomial::parse("3x1^2*x2", 2).unwrap());
        assert_eq!(p.eval(&[2.0, 1.0]), 6.0);
    }

    #[test]
    fn display_roundtrips_through_parse() {
        let p = Polynomial::parse("4x1^4 - 4 x1^2 + 1", 1).unwrap();
        assert_eq!(Polynomial::parse(&p.to_string(), 1).unwrap(), p);
    }
}
