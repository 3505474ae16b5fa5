//! Atomic measures: pushforward, marginal compatibility, gluing along shared
//! coordinates, Cesàro averages and invariance residuals.

use std::cmp::Ordering;
use std::f64::consts::SQRT_2;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::dynamics::{coupled_tent, SparseSystem, SystemKind};
use crate::error::{validation, Error, Result};
use crate::poly::Polynomial;
use crate::rng::rng_from_seed;
use crate::sparsity_graph::IndexSet;

/// Atoms closer than this (max norm) are identified.
pub const MERGE_TOL: f64 = 1e-12;

/// Double-double accumulator. Merged weights keep their rounding error as a
/// tail, so sums do not depend on how atoms were grouped beforehand.
#[derive(Debug, Clone, Copy, Default)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn add(&mut self, v: f64) {
        let s = self.hi + v;
        let bp = s - self.hi;
        let err = (self.hi - (s - bp)) + (v - bp);
        self.hi = s;
        self.lo += err;
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }

    /// `(round(hi + lo), remainder)`.
    fn split(self) -> (f64, f64) {
        let v = self.hi + self.lo;
        (v, self.lo - (v - self.hi))
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `Σ a_i δ_{x_i}` with canonically sorted, pairwise separated atoms.
#[derive(Debug, Clone, Serialize)]
pub struct AtomicMeasure {
    dim: usize,
    weights: Vec<f64>,
    /// Rounding error of each merged weight (`weight + tail` is the exact
    /// sum); zero for atoms that were never merged.
    #[serde(skip)]
    tails: Vec<f64>,
    /// Row-major, `len · dim`.
    positions: Vec<f64>,
}

/// Compares dimension, weights and positions bitwise; tails are ignored.
impl PartialEq for AtomicMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.weights == other.weights && self.positions == other.positions
    }
}

impl AtomicMeasure {
    /// Sorts atoms lexicographically and merges those within [`MERGE_TOL`],
    /// summing their weights.
    pub fn new(dim: usize, weights: Vec<f64>, positions: Vec<f64>) -> Result<Self> {
        if positions.len() != weights.len() * dim {
            return validation(format!(
                "{} weights but {} coordinates for dimension {dim}",
                weights.len(),
                positions.len()
            ));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return validation("atom weights must be finite and nonnegative");
        }
        if positions.iter().any(|v| !v.is_finite()) {
            return validation("atom positions must be finite");
        }
        Ok(Self::merged(dim, &weights, None, &positions))
    }

    pub fn from_atoms(dim: usize, atoms: &[(f64, Vec<f64>)]) -> Result<Self> {
        let mut pos = Vec::with_capacity(atoms.len() * dim);
        for (_, p) in atoms {
            if p.len() != dim {
                return validation("atom of wrong dimension");
            }
            pos.extend_from_slice(p);
        }
        Self::new(dim, atoms.iter().map(|a| a.0).collect(), pos)
    }

    pub fn dirac(x: &[f64]) -> Self {
        Self::merged(x.len(), &[1.0], None, x)
    }

    fn merged(dim: usize, weights: &[f64], tails: Option<&[f64]>, positions: &[f64]) -> Self {
        let m = weights.len();
        let tail = |i: usize| tails.map_or(0.0, |t| t[i]);
        if m == 0 {
            return AtomicMeasure { dim, weights: Vec::new(), tails: Vec::new(), positions: Vec::new() };
        }
        if dim == 0 {
            let mut acc = Dd::default();
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| weights[a].total_cmp(&weights[b]));
            for i in order {
                acc.add(weights[i]);
                acc.add(tail(i));
            }
            let (w, t) = acc.split();
            return AtomicMeasure { dim, weights: vec![w], tails: vec![t], positions: Vec::new() };
        }
        let pos = |i: usize| &positions[i * dim..(i + 1) * dim];
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| lex_cmp(pos(a), pos(b)).then(weights[a].total_cmp(&weights[b])));
        let mut absorbed = vec![false; m];
        let mut out_w = Vec::with_capacity(m);
        let mut out_t = Vec::with_capacity(m);
        let mut out_p = Vec::with_capacity(m * dim);
        for (oi, &a) in order.iter().enumerate() {
            if absorbed[a] {
                continue;
            }
            let pa = pos(a);
            let mut acc = Dd::default();
            acc.add(weights[a]);
            acc.add(tail(a));
            for &b in &order[oi + 1..] {
                let pb = pos(b);
                if pb[0] - pa[0] > MERGE_TOL {
                    break;
                }
                if !absorbed[b] && max_diff(pa, pb) <= MERGE_TOL {
                    absorbed[b] = true;
                    acc.add(weights[b]);
                    acc.add(tail(b));
                }
            }
            let (w, t) = acc.split();
            out_w.push(w);
            out_t.push(t);
            out_p.extend_from_slice(pa);
        }
        AtomicMeasure { dim, weights: out_w, tails: out_t, positions: out_p }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn positions(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.len()).map(move |i| self.position(i))
    }

    pub fn mass(&self) -> f64 {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.weights[a].total_cmp(&self.weights[b]));
        let mut acc = Dd::default();
        for i in order {
            acc.add(self.weights[i]);
            acc.add(self.tails[i]);
        }
        acc.value()
    }

    pub fn is_probability(&self) -> bool {
        (self.mass() - 1.0).abs() <= 1e-12
    }

    /// `∫ g dμ`.
    pub fn integrate<G: Fn(&[f64]) -> f64>(&self, g: G) -> f64 {
        self.positions().zip(&self.weights).map(|(x, &w)| w * g(x)).sum()
    }

    /// Concatenates atom lists (same dimension) and re-merges.
    pub fn union(parts: &[AtomicMeasure]) -> Result<AtomicMeasure> {
        let dim = parts.first().map_or(0, |p| p.dim);
        if parts.iter().any(|p| p.dim != dim) {
            return validation("union of measures on different spaces");
        }
        let weights: Vec<f64> = parts.iter().flat_map(|p| p.weights.iter().copied()).collect();
        let tails: Vec<f64> = parts.iter().flat_map(|p| p.tails.iter().copied()).collect();
        let positions: Vec<f64> = parts.iter().flat_map(|p| p.positions.iter().copied()).collect();
        Ok(Self::merged(dim, &weights, Some(&tails), &positions))
    }

    /// `(Π_I)_# μ`, `I` in the measure's own 1-based coordinates.
    pub fn pushforward(&self, set: &IndexSet) -> Result<AtomicMeasure> {
        set.check_range(self.dim)?;
        let cols = set.zero_based();
        let mut pos = Vec::with_capacity(self.len() * cols.len());
        for x in self.positions() {
            pos.extend(cols.iter().map(|&c| x[c]));
        }
        Ok(Self::merged(cols.len(), &self.weights, Some(&self.tails), &pos))
    }

    /// Pushforward under a map `R^dim → R^k`.
    pub fn map<F: Fn(&[f64]) -> Vec<f64>>(&self, k: usize, f: F) -> Result<AtomicMeasure> {
        let mut pos = Vec::with_capacity(self.len() * k);
        for x in self.positions() {
            let y = f(x);
            if y.len() != k || y.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { step: 1 });
            }
            pos.extend(y);
        }
        Ok(Self::merged(k, &self.weights, Some(&self.tails), &pos))
    }
}

/// Outcome of [`compatibility_check`].
#[derive(Debug, Clone, Serialize)]
pub struct CompatibilityReport {
    pub compatible: bool,
    /// Largest weight or position mismatch among matched atoms; infinite when
    /// the supports cannot be matched.
    pub max_discrepancy: f64,
    pub overlap: IndexSet,
    pub atoms_first: usize,
    pub atoms_second: usize,
}

/// Positions of `overlap` inside `set`, 1-based.
fn local(set: &IndexSet, overlap: &IndexSet) -> IndexSet {
    IndexSet::from_sorted_unchecked(overlap.iter().map(|i| set.position(i).unwrap() + 1).collect())
}

/// Sorted lookup of atoms by position with tolerance.
struct AtomIndex<'a> {
    m: &'a AtomicMeasure,
}

impl<'a> AtomIndex<'a> {
    /// Indices of atoms within `tol` of `x`; atoms are lex-sorted already.
    fn near(&self, x: &[f64], tol: f64) -> Vec<usize> {
        let m = self.m;
        if m.dim == 0 {
            return (0..m.len()).collect();
        }
        let lo = x[0] - tol;
        let (mut a, mut b) = (0, m.len());
        while a < b {
            let mid = (a + b) / 2;
            if m.position(mid)[0] < lo {
                a = mid + 1;
            } else {
                b = mid;
            }
        }
        let start = a;
        let mut out = Vec::new();
        for i in start..m.len() {
            let p = m.position(i);
            if p[0] > x[0] + tol {
                break;
            }
            if max_diff(p, x) <= tol {
                out.push(i);
            }
        }
        out
    }
}

/// Compares `(Π_{Ik∩Il})_# μk` and `(Π_{Ik∩Il})_# μl`.
pub fn compatibility_check(
    mk: &AtomicMeasure,
    ml: &AtomicMeasure,
    ik: &IndexSet,
    il: &IndexSet,
    tol: f64,
) -> Result<CompatibilityReport> {
    if ik.len() != mk.dim || il.len() != ml.dim {
        return validation("index sets do not match the measure dimensions");
    }
    let overlap = ik.intersection(il);
    let pk = mk.pushforward(&local(ik, &overlap))?;
    let pl = ml.pushforward(&local(il, &overlap))?;
    let mut report = CompatibilityReport {
        compatible: false,
        max_discrepancy: f64::INFINITY,
        overlap,
        atoms_first: pk.len(),
        atoms_second: pl.len(),
    };
    if pk.len() != pl.len() {
        return Ok(report);
    }
    let index = AtomIndex { m: &pl };
    let mut used = vec![false; pl.len()];
    let mut disc: f64 = 0.0;
    for i in 0..pk.len() {
        let x = pk.position(i);
        let hits = index.near(x, tol);
        if hits.len() > 1 {
            return Err(Error::Ambiguous(format!(
                "{} atoms of the second marginal lie within {tol:e} of {x:?}",
                hits.len()
            )));
        }
        let Some(&j) = hits.first() else { return Ok(report) };
        if used[j] {
            return Ok(report);
        }
        used[j] = true;
        disc = disc.max(max_diff(x, pl.position(j))).max((pk.weights[i] - pl.weights[j]).abs());
    }
    report.compatible = disc <= tol;
    report.max_discrepancy = disc;
    Ok(report)
}

/// Glues atomic measures `μk` on `R^{|Ik|}` into one measure on `R^n`
/// whose `Ik`-marginals are the `μk`. Atoms are matched across parts by
/// their overlap coordinates; weights are taken from the first part.
pub fn glue_atomic(parts: &[(AtomicMeasure, IndexSet)], tol: f64) -> Result<AtomicMeasure> {
    if parts.is_empty() {
        return validation("nothing to glue");
    }
    let mut cover = IndexSet::empty();
    for (k, (m, set)) in parts.iter().enumerate() {
        if m.dim != set.len() {
            return validation(format!("part {} has dimension {} but index set {set}", k + 1, m.dim));
        }
        cover = cover.union(set);
    }
    let n = cover.len();
    if cover != IndexSet::full(n) {
        return validation(format!("parts cover {cover}, which is not 1..{n}"));
    }
    // pairwise hypotheses
    for k in 0..parts.len() {
        for l in k + 1..parts.len() {
            let (mk, ik) = &parts[k];
            let (ml, il) = &parts[l];
            let ov = ik.intersection(il);
            for (m, set, idx) in [(mk, ik, k), (ml, il, l)] {
                if m.pushforward(&local(set, &ov))?.len() != m.len() {
                    return Err(Error::Hypothesis(format!(
                        "atoms of part {} are not distinct on the overlap {ov} with part {}",
                        idx + 1,
                        if idx == k { l + 1 } else { k + 1 }
                    )));
                }
            }
            let rep = compatibility_check(mk, ml, ik, il, tol)?;
            if !rep.compatible {
                return Err(Error::Incompatible {
                    first: k + 1,
                    second: l + 1,
                    reason: format!("marginals on {ov} differ (discrepancy {:e})", rep.max_discrepancy),
                });
            }
        }
    }
    // incremental matching
    let (m0, i0) = &parts[0];
    let mut covered = i0.clone();
    let mut rows: Vec<Vec<f64>> = m0
        .positions()
        .map(|x| {
            let mut full = vec![f64::NAN; n];
            for (k, i) in i0.iter().enumerate() {
                full[i - 1] = x[k];
            }
            full
        })
        .collect();
    for (k, (mk, ik)) in parts.iter().enumerate().skip(1) {
        let ov = covered.intersection(ik);
        let ov_local = local(ik, &ov);
        let keyed = mk.pushforward(&ov_local)?;
        // keyed atoms correspond one-to-one to mk atoms (distinctness)
        let mut back = vec![0usize; mk.len()];
        let cols = ov_local.zero_based();
        for (a, x) in mk.positions().enumerate() {
            let key: Vec<f64> = cols.iter().map(|&c| x[c]).collect();
            let hits = AtomIndex { m: &keyed }.near(&key, MERGE_TOL);
            back[hits[0]] = a;
        }
        let index = AtomIndex { m: &keyed };
        for row in rows.iter_mut() {
            let key: Vec<f64> = ov.iter().map(|i| row[i - 1]).collect();
            let hits = index.near(&key, tol);
            match hits.len() {
                1 => {}
                0 => {
                    return Err(Error::Incompatible {
                        first: 1,
                        second: k + 1,
                        reason: format!("no atom of part {} matches overlap point {key:?}", k + 1),
                    })
                }
                _ => return Err(Error::Ambiguous(format!("overlap point {key:?} matches several atoms"))),
            }
            let x = mk.position(back[hits[0]]);
            for (c, i) in ik.iter().enumerate() {
                if !covered.contains(i) {
                    row[i - 1] = x[c];
                }
            }
        }
        covered = covered.union(ik);
    }
    let positions: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(AtomicMeasure::merged(n, &m0.weights, Some(&m0.tails), &positions))
}

/// `(1/T) Σ_{s<T} (f^s)_# μ0`.
pub fn cesaro_average(sys: &SparseSystem, mu0: &AtomicMeasure, t: usize) -> Result<AtomicMeasure> {
    if sys.kind() != SystemKind::Discrete {
        return validation("Cesàro averages are defined for maps");
    }
    if t == 0 {
        return validation("T must be at least 1");
    }
    if mu0.dim != sys.n() {
        return validation("measure and system dimensions differ");
    }
    let mut weights = Vec::with_capacity(mu0.len() * t);
    let mut pos = Vec::with_capacity(mu0.len() * t * mu0.dim);
    for (x, &w) in mu0.positions().zip(&mu0.weights) {
        let mut s = x.to_vec();
        for step in 0..t {
            if step > 0 {
                s = sys.eval(&s);
                if s.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Divergence { step });
                }
            }
            weights.push(w / t as f64);
            pos.extend_from_slice(&s);
        }
    }
    AtomicMeasure::new(mu0.dim, weights, pos)
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    /// `max_g |⟨g∘f, μ⟩ − ⟨g, μ⟩| / max(1, max_atoms |g|)`.
    pub residual: f64,
    /// Unnormalized `|⟨g∘f, μ⟩ − ⟨g, μ⟩|` per dictionary entry.
    pub per_entry: Vec<f64>,
    /// `max_atoms |g|` per entry.
    pub sup_on_atoms: Vec<f64>,
}

pub fn invariance_report(mu: &AtomicMeasure, sys: &SparseSystem, testdict: &Dictionary) -> Result<InvarianceReport> {
    if sys.kind() != SystemKind::Discrete {
        return validation("invariance residuals are defined for maps");
    }
    if mu.dim != sys.n() || testdict.dim() != sys.n() {
        return validation("dimension mismatch between measure, system and dictionary");
    }
    let l = testdict.len();
    let mut before = vec![0.0; l];
    let mut after = vec![0.0; l];
    let mut sup = vec![0.0f64; l];
    for (x, &w) in mu.positions().zip(&mu.weights) {
        let gx = testdict.eval_point(x);
        let gfx = testdict.eval_point(&sys.eval(x));
        for j in 0..l {
            before[j] += w * gx[j];
            after[j] += w * gfx[j];
            sup[j] = sup[j].max(gx[j].abs());
        }
    }
    let per_entry: Vec<f64> = (0..l).map(|j| (after[j] - before[j]).abs()).collect();
    let residual = (0..l).map(|j| per_entry[j] / sup[j].max(1.0)).fold(0.0, f64::max);
    Ok(InvarianceReport { residual, per_entry, sup_on_atoms: sup })
}

pub fn invariance_residual(mu: &AtomicMeasure, sys: &SparseSystem, testdict: &Dictionary) -> Result<f64> {
    Ok(invariance_report(mu, sys, testdict)?.residual)
}

/// Parameters of the coupled tent-map attractor experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttractorParams {
    pub samples: usize,
    pub burn_in: usize,
    pub keep: usize,
    pub x0: f64,
    pub y0: f64,
    /// Unnormalized sampling density of `z`, a polynomial in `x1`; the
    /// default is a biweight bump on `interval`.
    pub density: Option<String>,
    pub interval: (f64, f64),
    pub seed: u64,
}

impl Default for AttractorParams {
    fn default() -> Self {
        AttractorParams {
            samples: 550,
            burn_in: 200,
            keep: 300,
            x0: 0.48934,
            y0: 0.8979573,
            density: None,
            interval: (SQRT_2, 2.0),
            seed: 0,
        }
    }
}

/// `(1 − u²)²` with `u` the affine map of `[a, b]` onto `[−1, 1]`.
pub fn biweight_density(a: f64, b: f64) -> Polynomial {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let u = Polynomial::var(1, 0).sub(&Polynomial::constant(1, c)).scale(1.0 / r);
    let one = Polynomial::constant(1, 1.0);
    one.sub(&u.pow(2)).pow(2)
}

/// Rejection sampling of `count` points from the density `p ≥ 0` on `[a, b]`.
pub fn sample_density(p: &Polynomial, a: f64, b: f64, count: usize, seed: u64) -> Result<Vec<f64>> {
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return validation("sampling interval must satisfy a < b");
    }
    if p.nvars() != 1 {
        return validation("sampling density must be univariate");
    }
    let grid = 2048;
    let mut top: f64 = 0.0;
    for k in 0..=grid {
        let v = p.eval(&[a + (b - a) * k as f64 / grid as f64]);
        if v < -1e-12 {
            return validation("sampling density is negative on the interval");
        }
        top = top.max(v);
    }
    if !(top > 0.0) {
        return validation("sampling density vanishes on the interval");
    }
    let bound = 1.05 * top;
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(count);
    let mut tries = 0usize;
    while out.len() < count {
        tries += 1;
        if tries > 1000 * count.max(1) + 10_000 {
            return Err(Error::Numerical("rejection sampler acceptance rate too low".into()));
        }
        let z = rng.gen_range(a..=b);
        let u: f64 = rng.gen();
        if u * bound <= p.eval(&[z]) {
            out.push(z);
        }
    }
    Ok(out)
}

/// Clouds of the coupled tent-map experiment.
#[derive(Debug, Clone, Serialize)]
pub struct AttractorClouds {
    pub z: Vec<f64>,
    /// Particles per part before merging (`samples · keep`).
    pub particles: usize,
    /// `{z, x}` subsystem cloud.
    pub part_zx: AtomicMeasure,
    /// `{z, y}` subsystem cloud.
    pub part_zy: AtomicMeasure,
    /// Glue of the two subsystem clouds, one time slice at a time.
    pub glued: AtomicMeasure,
    /// Cloud of the simultaneous 3-D simulation.
    pub simultaneous: AtomicMeasure,
    pub compatibility: CompatibilityReport,
}

fn run_part(sys: &SparseSystem, start: &[f64], burn_in: usize, keep: usize) -> Result<Vec<Vec<f64>>> {
    let traj = sys.iterate_map(start, burn_in + keep - 1)?;
    Ok(traj.states[burn_in..].to_vec())
}

/// Simulates the `{z, x}` and `{z, y}` subsystems for every `z` sample,
/// glues them and, as an independent oracle, simulates the full system.
///
/// The clouds repeat every `z` `keep` times, so they violate the distinct
/// overlap hypothesis of gluing as a whole. Each time slice does satisfy
/// it, so the glue is taken slice by slice and the slices are united.
pub fn attractor_cloud(params: &AttractorParams) -> Result<AttractorClouds> {
    let AttractorParams { samples, burn_in, keep, x0, y0, ref density, interval, seed } = *params;
    if samples == 0 || keep == 0 {
        return validation("need at least one z sample and one kept step");
    }
    let dens = match density {
        Some(s) => Polynomial::parse(s, 1)?,
        None => biweight_density(interval.0, interval.1),
    };
    let z = sample_density(&dens, interval.0, interval.1, samples, seed)?;
    let sys = coupled_tent()?;
    let set_zx = IndexSet::new([1, 2])?;
    let set_zy = IndexSet::new([1, 3])?;
    let s_zx = sys.project(&set_zx)?;
    let s_zy = sys.project(&set_zy)?;

    let runs = z
        .par_iter()
        .map(|&zi| {
            Ok((
                run_part(&s_zx, &[zi, x0], burn_in, keep)?,
                run_part(&s_zy, &[zi, y0], burn_in, keep)?,
                run_part(&sys, &[zi, x0, y0], burn_in, keep)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let w = 1.0 / (samples * keep) as f64;
    let flat = |sel: &dyn Fn(&(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>)) -> &Vec<Vec<f64>>| {
        runs.iter().flat_map(|r| sel(r).iter().flatten().copied()).collect::<Vec<f64>>()
    };
    let total = samples * keep;
    let part_zx = AtomicMeasure::new(2, vec![w; total], flat(&|r| &r.0))?;
    let part_zy = AtomicMeasure::new(2, vec![w; total], flat(&|r| &r.1))?;
    let simultaneous = AtomicMeasure::new(3, vec![w; total], flat(&|r| &r.2))?;

    let slices = (0..keep)
        .into_par_iter()
        .map(|t| {
            let a: Vec<f64> = runs.iter().flat_map(|r| r.0[t].iter().copied()).collect();
            let b: Vec<f64> = runs.iter().flat_map(|r| r.1[t].iter().copied()).collect();
            let ma = AtomicMeasure::new(2, vec![w; samples], a)?;
            let mb = AtomicMeasure::new(2, vec![w; samples], b)?;
            glue_atomic(&[(ma, set_zx.clone()), (mb, set_zy.clone())], MERGE_TOL)
        })
        .collect::<Result<Vec<_>>>()?;
    let glued = AtomicMeasure::union(&slices)?;
    let compatibility = compatibility_check(&part_zx, &part_zy, &set_zx, &set_zy, MERGE_TOL)?;
    Ok(AttractorClouds { z, particles: total, part_zx, part_zy, glued, simultaneous, compatibility })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::builtin;
    use serde_json::Value;

    fn set(v: &[usize]) -> IndexSet {
        IndexSet::new(v.iter().copied()).unwrap()
    }

    #[test]
    fn constructor_merges() {
        let m = AtomicMeasure::from_atoms(2, &[(0.5, vec![0.0, 2.0]), (0.25, vec![0.0, 1.0]), (0.25, vec![0.0, 1.0 + 1e-13])])
            .unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.position(0), &[0.0, 1.0]);
        assert_eq!(m.weights(), &[0.5, 0.5]);
        assert!(m.is_probability());
        assert!(AtomicMeasure::new(1, vec![-1.0], vec![0.0]).is_err());
    }

    #[test]
    fn pushforward_examples() {
        let m = AtomicMeasure::from_atoms(2, &[(0.5, vec![0.0, 1.0]), (0.5, vec![0.0, 2.0])]).unwrap();
        let p = m.pushforward(&set(&[1])).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.weights(), &[1.0]);
        assert_eq!(m.pushforward(&IndexSet::full(2)).unwrap(), m);
        let e = m.pushforward(&IndexSet::empty()).unwrap();
        assert_eq!((e.dim(), e.len(), e.mass()), (0, 1, 1.0));
    }

    #[test]
    fn compatibility_examples() {
        let a = AtomicMeasure::from_atoms(2, &[(0.5, vec![1.0, 5.0]), (0.5, vec![2.0, 6.0])]).unwrap();
        let b = AtomicMeasure::from_atoms(2, &[(0.5, vec![1.0, -1.0]), (0.5, vec![2.0, -2.0])]).unwrap();
        let r = compatibility_check(&a, &b, &set(&[1, 2]), &set(&[1, 3]), 1e-12).unwrap();
        assert!(r.compatible && r.max_discrepancy == 0.0);
        let c = AtomicMeasure::from_atoms(2, &[(0.5, vec![3.0, -1.0]), (0.5, vec![4.0, -2.0])]).unwrap();
        assert!(!compatibility_check(&a, &c, &set(&[1, 2]), &set(&[1, 3]), 1e-12).unwrap().compatible);
        let d = AtomicMeasure::dirac(&[7.0]);
        let r = compatibility_check(&a, &d, &set(&[1, 2]), &set(&[3]), 1e-12).unwrap();
        assert!(r.compatible);
    }

    #[test]
    fn glue_examples() {
        let a = AtomicMeasure::from_atoms(2, &[(0.5, vec![1.0, 5.0]), (0.5, vec![2.0, 6.0])]).unwrap();
        let b = AtomicMeasure::from_atoms(2, &[(0.5, vec![2.0, -2.0]), (0.5, vec![1.0, -1.0])]).unwrap();
        let g = glue_atomic(&[(a.clone(), set(&[1, 2])), (b.clone(), set(&[1, 3]))], 1e-12).unwrap();
        assert_eq!(g.position(0), &[1.0, 5.0, -1.0]);
        assert_eq!(g.position(1), &[2.0, 6.0, -2.0]);
        assert_eq!(g.pushforward(&set(&[1, 2])).unwrap(), a);
        assert_eq!(g.pushforward(&set(&[1, 3])).unwrap(), b);
        assert_eq!(glue_atomic(&[(a.clone(), set(&[1, 2]))], 1e-12).unwrap(), a);

        let p = glue_atomic(
            &[(AtomicMeasure::dirac(&[1.0]), set(&[1])), (AtomicMeasure::dirac(&[2.0]), set(&[2]))],
            1e-12,
        )
        .unwrap();
        assert_eq!(p.position(0), &[1.0, 2.0]);

        let dup = AtomicMeasure::from_atoms(2, &[(0.5, vec![1.0, 5.0]), (0.5, vec![1.0, 6.0])]).unwrap();
        assert!(matches!(
            glue_atomic(&[(dup, set(&[1, 2])), (b, set(&[1, 3]))], 1e-12),
            Err(Error::Hypothesis(_))
        ));
    }

    #[test]
    fn cesaro_basics() {
        let sys = builtin("logistic_cheb", &Value::Null).unwrap();
        let fixed = AtomicMeasure::dirac(&[1.0]);
        assert_eq!(cesaro_average(&sys, &fixed, 17).unwrap(), fixed);
        let mu = AtomicMeasure::dirac(&[0.3]);
        assert_eq!(cesaro_average(&sys, &mu, 1).unwrap(), mu);
        let d = Dictionary::monomials(1, 4);
        assert_eq!(invariance_residual(&fixed, &sys, &d).unwrap(), 0.0);
        let avg = cesaro_average(&sys, &mu, 100).unwrap();
        assert!((avg.mass() - 1.0).abs() < 1e-12);
        let r = invariance_report(&avg, &sys, &d).unwrap();
        assert!(r.per_entry.iter().all(|&v| v <= 2.0 / 100.0));
    }

    #[test]
    fn biweight_vanishes_at_ends() {
        let p = biweight_density(SQRT_2, 2.0);
        assert!(p.eval(&[SQRT_2]).abs() < 1e-12 && p.eval(&[2.0]).abs() < 1e-12);
        assert!((p.eval(&[0.5 * (SQRT_2 + 2.0)]) - 1.0).abs() < 1e-12);
        let zs = sample_density(&p, SQRT_2, 2.0, 200, 3).unwrap();
        assert!(zs.iter().all(|&z| (SQRT_2..=2.0).contains(&z)));
    }

    #[test]
    fn small_attractor() {
        let c = attractor_cloud(&AttractorParams { samples: 20, burn_in: 10, keep: 5, ..Default::default() }).unwrap();
        assert_eq!(c.glued, c.simultaneous);
        assert_eq!(c.glued.pushforward(&set(&[1, 2])).unwrap(), c.part_zx);
        assert_eq!(c.glued.pushforward(&set(&[1, 3])).unwrap(), c.part_zy);
        assert!(c.compatibility.compatible);
        let one = attractor_cloud(&AttractorParams { samples: 20, keep: 1, ..Default::default() }).unwrap();
        assert_eq!(one.part_zy.len(), 20);
    }
}
