//! Sparse continuous and discrete dynamical systems.
//!
//! Every component `f_j` is evaluated on the slice of coordinates listed in
//! its dependency set, in sorted order. Projection onto a subsystem keeps the
//! component evaluators untouched and only relabels dependency indices, so a
//! projected system performs bit-for-bit the same arithmetic as the
//! corresponding components of the full system.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{validation, Error, Result};
use crate::poly::{Polynomial, PolynomialRepr};
use crate::rng::rng_from_seed;
use crate::sparsity_graph::{IndexSet, SparsityGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SystemKind {
    #[serde(rename = "ode", alias = "continuous")]
    Continuous,
    #[serde(rename = "map", alias = "discrete")]
    Discrete,
}

/// Slope law of a tent-map component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TentSlope {
    /// `sin(π z)`
    SinPi,
    /// `√2 + ((z − √2)/(2 − √2))(2 − √2)`, evaluated as written.
    Rescaled,
}

impl TentSlope {
    fn slope(self, z: f64) -> f64 {
        match self {
            TentSlope::SinPi => (PI * z).sin(),
            TentSlope::Rescaled => SQRT_2 + ((z - SQRT_2) / (2.0 - SQRT_2)) * (2.0 - SQRT_2),
        }
    }
}

/// Evaluator of one component, acting on its dependency coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum ComponentEval {
    /// Polynomial in the local dependency variables.
    Poly(Polynomial),
    /// Tent map `u ↦ s(z)·u` for `u ≤ 1/2`, `s(z)·(1 − u)` otherwise, where
    /// the local variables are `(z, u)`.
    Tent(TentSlope),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    deps: IndexSet,
    eval: ComponentEval,
}

impl Component {
    pub fn deps(&self) -> &IndexSet {
        &self.deps
    }

    pub fn evaluator(&self) -> &ComponentEval {
        &self.eval
    }

    #[inline]
    fn eval_local(&self, local: &[f64]) -> f64 {
        match &self.eval {
            ComponentEval::Poly(p) => p.eval(local),
            ComponentEval::Tent(s) => {
                let (z, u) = (local[0], local[1]);
                let slope = s.slope(z);
                if u <= 0.5 {
                    slope * u
                } else {
                    slope * (1.0 - u)
                }
            }
        }
    }
}

/// A vector field or map on `R^n` with declared per-component dependencies.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSystem {
    n: usize,
    kind: SystemKind,
    components: Vec<Component>,
    /// Global (1-based) index of each coordinate in the system this one was
    /// projected from; identity for a root system.
    index_map: Vec<usize>,
}

/// Time-indexed states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Coordinate projection of every state.
    pub fn project(&self, set: &IndexSet) -> Trajectory {
        Trajectory {
            times: self.times.clone(),
            states: self.states.iter().map(|s| set.project(s)).collect(),
        }
    }
}

/// Input/successor pairs stored column-wise (`n × M`).
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
    /// Macro step for continuous systems.
    pub h: Option<f64>,
    pub seed: u64,
}

impl SnapshotSet {
    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    /// Splits the snapshots onto the coordinates of `set`.
    pub fn project(&self, set: &IndexSet) -> SnapshotSet {
        let rows = set.zero_based();
        SnapshotSet {
            x: self.x.select_rows(rows.iter()),
            y: self.y.select_rows(rows.iter()),
            h: self.h,
            seed: self.seed,
        }
    }
}

/// Parameters of [`SparseSystem::sample_snapshots`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotSpec {
    /// Per-coordinate sampling interval for initial conditions.
    #[serde(rename = "box")]
    pub bounds: Vec<(f64, f64)>,
    /// Number of sampled initial conditions.
    pub trajectories: usize,
    /// Consecutive pairs collected along each trajectory.
    #[serde(default = "one")]
    pub steps: usize,
    /// Macro step (continuous systems).
    #[serde(default = "default_h")]
    pub h: f64,
    /// RK4 substeps per macro step.
    #[serde(default = "ten")]
    pub substeps: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}
fn ten() -> usize {
    10
}
fn default_h() -> f64 {
    0.25
}

impl SparseSystem {
    pub fn new(kind: SystemKind, components: Vec<Component>) -> Result<Self> {
        let n = components.len();
        if n == 0 {
            return validation("a system needs at least one component");
        }
        for (j, c) in components.iter().enumerate() {
            c.deps.check_range(n).map_err(|_| {
                Error::Validation(format!("component {} depends on an out-of-range index", j + 1))
            })?;
            match &c.eval {
                ComponentEval::Poly(p) if p.nvars() != c.deps.len() => {
                    return validation(format!(
                        "component {}: polynomial on {} variables but {} dependencies",
                        j + 1,
                        p.nvars(),
                        c.deps.len()
                    ))
                }
                ComponentEval::Tent(_) if c.deps.len() != 2 => {
                    return validation(format!(
                        "component {}: tent components take (parameter, state)",
                        j + 1
                    ))
                }
                _ => {}
            }
        }
        Ok(SparseSystem { n, kind, components, index_map: (1..=n).collect() })
    }

    /// Builds a polynomial system from ambient polynomials, inferring the
    /// dependency sets from the exponents.
    pub fn from_polynomials(kind: SystemKind, polys: Vec<Polynomial>) -> Result<Self> {
        let n = polys.len();
        let mut comps = Vec::with_capacity(n);
        for (j, p) in polys.into_iter().enumerate() {
            if p.nvars() != n {
                return validation(format!("component {} is not a polynomial on R^{n}", j + 1));
            }
            let used = p.vars_used();
            let deps = IndexSet::new(used.iter().map(|i| i + 1))?;
            comps.push(Component { deps, eval: ComponentEval::Poly(p.restrict(&used)?) });
        }
        Self::new(kind, comps)
    }

    /// Component with explicit dependencies and an ambient polynomial; fails
    /// if the polynomial touches a coordinate outside `deps`.
    pub fn poly_component(deps: IndexSet, ambient: &Polynomial) -> Result<Component> {
        let local = ambient.restrict(&deps.zero_based())?;
        Ok(Component { deps, eval: ComponentEval::Poly(local) })
    }

    pub fn tent_component(param: usize, state: usize, slope: TentSlope) -> Result<Component> {
        if param >= state {
            return validation("tent parameter coordinate must precede the state coordinate");
        }
        Ok(Component { deps: IndexSet::new([param, state])?, eval: ComponentEval::Tent(slope) })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn index_map(&self) -> &[usize] {
        &self.index_map
    }

    pub fn graph(&self) -> SparsityGraph {
        let deps: Vec<Vec<usize>> = self.components.iter().map(|c| c.deps.as_slice().to_vec()).collect();
        SparsityGraph::from_dependencies(&deps, self.n).expect("dependencies validated at construction")
    }

    #[inline]
    fn eval_component(&self, c: &Component, x: &[f64], buf: &mut Vec<f64>) -> f64 {
        buf.clear();
        buf.extend(c.deps.iter().map(|i| x[i - 1]));
        c.eval_local(buf)
    }

    /// `f(x)`.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut buf = Vec::with_capacity(self.n);
        self.components.iter().map(|c| self.eval_component(c, x, &mut buf)).collect()
    }

    /// The subsystem `(I, f_I)`, coordinates relabelled in the sorted order of `I`.
    pub fn project(&self, set: &IndexSet) -> Result<SparseSystem> {
        set.check_range(self.n)?;
        if set.is_empty() {
            return validation("cannot project onto the empty index set");
        }
        if let Some((j, i)) = self.graph().first_violation(set) {
            return Err(Error::Structural(format!(
                "{set} is not a subsystem: component {j} depends on x{i}"
            )));
        }
        let components = set
            .iter()
            .map(|j| {
                let c = &self.components[j - 1];
                let deps = c.deps.iter().map(|i| set.position(i).unwrap() + 1).collect::<Vec<_>>();
                Component { deps: IndexSet::from_sorted_unchecked(deps), eval: c.eval.clone() }
            })
            .collect();
        Ok(SparseSystem {
            n: set.len(),
            kind: self.kind,
            components,
            index_map: set.iter().map(|i| self.index_map[i - 1]).collect(),
        })
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return validation(format!("state of length {} for a system on R^{}", x.len(), self.n));
        }
        Ok(())
    }

    /// One classical RK4 step of size `h`.
    pub fn rk4_step(&self, x: &[f64], h: f64) -> Vec<f64> {
        let n = self.n;
        let half = 0.5 * h;
        let k1 = self.eval(x);
        let x2: Vec<f64> = (0..n).map(|i| x[i] + half * k1[i]).collect();
        let k2 = self.eval(&x2);
        let x3: Vec<f64> = (0..n).map(|i| x[i] + half * k2[i]).collect();
        let k3 = self.eval(&x3);
        let x4: Vec<f64> = (0..n).map(|i| x[i] + h * k3[i]).collect();
        let k4 = self.eval(&x4);
        (0..n)
            .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect()
    }

    /// Approximate flow `φ_h` using `substeps` RK4 steps.
    pub fn flow(&self, x: &[f64], h: f64, substeps: usize) -> Vec<f64> {
        let hs = h / substeps as f64;
        let mut s = x.to_vec();
        for _ in 0..substeps {
            s = self.rk4_step(&s, hs);
        }
        s
    }

    /// Fixed-step RK4 integration from `x0`.
    pub fn integrate(&self, x0: &[f64], h: f64, steps: usize) -> Result<Trajectory> {
        if self.kind != SystemKind::Continuous {
            return validation("integrate requires a continuous-time system");
        }
        if !(h > 0.0) {
            return validation("step size must be positive");
        }
        self.check_dim(x0)?;
        let mut states = Vec::with_capacity(steps + 1);
        states.push(x0.to_vec());
        for k in 1..=steps {
            let next = self.rk4_step(&states[k - 1], h);
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { step: k });
            }
            states.push(next);
        }
        Ok(Trajectory { times: (0..=steps).map(|k| k as f64 * h).collect(), states })
    }

    /// `x_{k+1} = f(x_k)`.
    pub fn iterate_map(&self, x0: &[f64], steps: usize) -> Result<Trajectory> {
        if self.kind != SystemKind::Discrete {
            return validation("iterate_map requires a discrete-time system");
        }
        self.check_dim(x0)?;
        let mut states = Vec::with_capacity(steps + 1);
        states.push(x0.to_vec());
        for k in 1..=steps {
            let next = self.eval(&states[k - 1]);
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { step: k });
            }
            states.push(next);
        }
        Ok(Trajectory { times: (0..=steps).map(|k| k as f64).collect(), states })
    }

    /// One application of the time-`h` map (continuous) or of `f` (discrete).
    pub fn advance(&self, x: &[f64], h: f64, substeps: usize) -> Vec<f64> {
        match self.kind {
            SystemKind::Continuous => self.flow(x, h, substeps),
            SystemKind::Discrete => self.eval(x),
        }
    }

    /// Uniform initial conditions in `spec.bounds`, each followed for
    /// `spec.steps` steps; every consecutive pair becomes a snapshot.
    pub fn sample_snapshots(&self, spec: &SnapshotSpec) -> Result<SnapshotSet> {
        if spec.bounds.len() != self.n {
            return validation(format!(
                "sampling box has {} intervals for a system on R^{}",
                spec.bounds.len(),
                self.n
            ));
        }
        if spec.trajectories == 0 || spec.steps == 0 {
            return validation("need at least one trajectory and one step");
        }
        if spec.bounds.iter().any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite()) {
            return validation("sampling box intervals must be finite with lo <= hi");
        }
        if self.kind == SystemKind::Continuous && (!(spec.h > 0.0) || spec.substeps == 0) {
            return validation("continuous sampling needs h > 0 and at least one substep");
        }
        let total = spec.trajectories * spec.steps;
        let mut xs = DMatrix::zeros(self.n, total);
        let mut ys = DMatrix::zeros(self.n, total);
        let mut rng = rng_from_seed(spec.seed);
        let mut col = 0;
        for _ in 0..spec.trajectories {
            let mut s: Vec<f64> = spec.bounds.iter().map(|&(a, b)| rng.gen_range(a..=b)).collect();
            for _ in 0..spec.steps {
                let next = self.advance(&s, spec.h, spec.substeps);
                if next.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Divergence { step: col + 1 });
                }
                xs.set_column(col, &nalgebra::DVector::from_column_slice(&s));
                ys.set_column(col, &nalgebra::DVector::from_column_slice(&next));
                s = next;
                col += 1;
            }
        }
        Ok(SnapshotSet {
            x: xs,
            y: ys,
            h: (self.kind == SystemKind::Continuous).then_some(spec.h),
            seed: spec.seed,
        })
    }

    /// Jacobian `Df(x)`: exact for polynomial components, central
    /// differences (step `1e-6`) otherwise.
    pub fn linearize(&self, x: &[f64]) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.n, self.n);
        let mut local = Vec::with_capacity(self.n);
        for (j, c) in self.components.iter().enumerate() {
            local.clear();
            local.extend(c.deps.iter().map(|i| x[i - 1]));
            for (k, i) in c.deps.iter().enumerate() {
                let v = match &c.eval {
                    ComponentEval::Poly(p) => p.derivative(k).eval(&local),
                    ComponentEval::Tent(_) => {
                        let step = 1e-6;
                        let mut up = local.clone();
                        let mut dn = local.clone();
                        up[k] += step;
                        dn[k] -= step;
                        (c.eval_local(&up) - c.eval_local(&dn)) / (2.0 * step)
                    }
                };
                jac[(j, i - 1)] = v;
            }
        }
        jac
    }

    /// Ambient polynomial of every component; fails on non-polynomial ones.
    pub fn polynomial_map(&self) -> Result<Vec<Polynomial>> {
        self.components
            .iter()
            .enumerate()
            .map(|(j, c)| match &c.eval {
                ComponentEval::Poly(p) => Ok(p.embed(&c.deps.zero_based(), self.n)),
                ComponentEval::Tent(_) => {
                    validation(format!("component {} is not polynomial", j + 1))
                }
            })
            .collect()
    }

    pub fn is_polynomial(&self) -> bool {
        self.components.iter().all(|c| matches!(c.eval, ComponentEval::Poly(_)))
    }

    /// Serializable description; builtin tent components are written back
    /// as a `tent` evaluator.
    pub fn to_spec(&self) -> SystemSpec {
        SystemSpec::Explicit {
            n: self.n,
            kind: self.kind,
            components: self
                .components
                .iter()
                .map(|c| match &c.eval {
                    ComponentEval::Poly(p) => ComponentSpec {
                        deps: Some(c.deps.as_slice().to_vec()),
                        poly: Some(p.embed(&c.deps.zero_based(), self.n).to_repr()),
                        tent: None,
                    },
                    ComponentEval::Tent(s) => ComponentSpec {
                        deps: Some(c.deps.as_slice().to_vec()),
                        poly: None,
                        tent: Some(*s),
                    },
                })
                .collect(),
        }
    }
}

/// JSON description of a system: an explicit component list or a builtin.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SystemSpec {
    Builtin {
        builtin: String,
        #[serde(default)]
        params: Value,
    },
    Explicit {
        n: usize,
        kind: SystemKind,
        components: Vec<ComponentSpec>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentSpec {
    /// 1-based dependency set; inferred from the exponents when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deps: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poly: Option<PolynomialRepr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tent: Option<TentSlope>,
}

impl SystemSpec {
    pub fn build(&self) -> Result<SparseSystem> {
        match self {
            SystemSpec::Builtin { builtin: name, params } => builtin(name, params),
            SystemSpec::Explicit { n, kind, components } => {
                if components.len() != *n {
                    return validation(format!("n = {n} but {} components given", components.len()));
                }
                let mut comps = Vec::with_capacity(*n);
                for (j, cs) in components.iter().enumerate() {
                    let comp = match (&cs.poly, cs.tent) {
                        (Some(repr), None) => {
                            let p = Polynomial::from_repr(repr, Some(*n)).map_err(|e| {
                                Error::Validation(format!("component {}: {e}", j + 1))
                            })?;
                            let deps = match &cs.deps {
                                Some(d) => IndexSet::within(d.iter().copied(), *n).map_err(|e| {
                                    Error::Validation(format!("component {}: {e}", j + 1))
                                })?,
                                None => IndexSet::new(p.vars_used().iter().map(|i| i + 1))?,
                            };
                            SparseSystem::poly_component(deps, &p).map_err(|e| {
                                Error::Validation(format!("component {}: {e}", j + 1))
                            })?
                        }
                        (None, Some(slope)) => match cs.deps.as_deref() {
                            Some([p, s]) => SparseSystem::tent_component(*p, *s, slope)?,
                            _ => {
                                return validation(format!(
                                    "component {}: tent needs deps [parameter, state]",
                                    j + 1
                                ))
                            }
                        },
                        _ => {
                            return validation(format!(
                                "component {}: exactly one of 'poly' or 'tent' required",
                                j + 1
                            ))
                        }
                    };
                    comps.push(comp);
                }
                SparseSystem::new(*kind, comps)
            }
        }
    }
}

fn param_f64(params: &Value, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None | Some(Value::Null) => Ok(default),
        Some(v) => v
            .as_f64()
            .ok_or_else(|| Error::Validation(format!("parameter '{key}' must be a number"))),
    }
}

/// Names accepted by [`builtin`].
pub const BUILTINS: &[&str] =
    &["coupled_duffing", "coupled_tent", "logistic_cheb", "product_logistic", "linear"];

/// Benchmark systems.
///
/// * `coupled_duffing` — 6-D continuous; a double-well Duffing oscillator on
///   `(x1, x2)` driving two further oscillators on `(x3, x4)` and `(x5, x6)`.
///   Parameters `delta`, `beta`, `alpha`, `gamma` (two couplings).
/// * `coupled_tent` — 3-D discrete: `z` fixed, tent maps in `x` and `y` with
///   `z`-dependent slopes.
/// * `logistic_cheb` — `x ↦ 2x² − 1`.
/// * `product_logistic` — two uncoupled copies of `logistic_cheb`.
/// * `linear` — `ẋ = Ax` or `x⁺ = Ax`; parameters `a` (row-major matrix) and
///   `kind` (`"ode"`, default, or `"map"`).
pub fn builtin(name: &str, params: &Value) -> Result<SparseSystem> {
    match name {
        "coupled_duffing" => {
            let delta = param_f64(params, "delta", 0.5)?;
            let beta = param_f64(params, "beta", -1.0)?;
            let alpha = param_f64(params, "alpha", 1.0)?;
            let gamma = match params.get("gamma") {
                None | Some(Value::Null) => vec![1.0, 2.0],
                Some(v) => serde_json::from_value::<Vec<f64>>(v.clone())
                    .map_err(|_| Error::Validation("'gamma' must be a list of numbers".into()))?,
            };
            if gamma.len() != 2 {
                return validation("'gamma' needs exactly two couplings");
            }
            coupled_duffing(delta, beta, alpha, [gamma[0], gamma[1]])
        }
        "coupled_tent" => coupled_tent(),
        "logistic_cheb" => SparseSystem::from_polynomials(
            SystemKind::Discrete,
            vec![Polynomial::parse("2x1^2 - 1", 1)?],
        ),
        "product_logistic" => SparseSystem::from_polynomials(
            SystemKind::Discrete,
            vec![Polynomial::parse("2x1^2 - 1", 2)?, Polynomial::parse("2x2^2 - 1", 2)?],
        ),
        "linear" => {
            let a: Vec<Vec<f64>> = params
                .get("a")
                .ok_or_else(|| Error::Validation("linear system needs parameter 'a'".into()))
                .and_then(|v| {
                    serde_json::from_value(v.clone())
                        .map_err(|_| Error::Validation("'a' must be a list of rows".into()))
                })?;
            let kind = match params.get("kind").and_then(Value::as_str) {
                None | Some("ode") | Some("continuous") => SystemKind::Continuous,
                Some("map") | Some("discrete") => SystemKind::Discrete,
                Some(other) => return validation(format!("unknown kind '{other}'")),
            };
            let n = a.len();
            if n == 0 || a.iter().any(|r| r.len() != n) {
                return validation("'a' must be a nonempty square matrix");
            }
            linear(&DMatrix::from_fn(n, n, |i, j| a[i][j]), kind)
        }
        other => validation(format!("unknown builtin '{other}'; expected one of {BUILTINS:?}")),
    }
}

/// Coupled Duffing system on `R^6`; see [`builtin`].
///
/// Each oscillator reads `ẋ = v`, `v̇ = −δ v − β x − 4α x³ (+ γ x1)`.
pub fn coupled_duffing(delta: f64, beta: f64, alpha: f64, gamma: [f64; 2]) -> Result<SparseSystem> {
    let n = 6;
    let mut polys = Vec::with_capacity(n);
    for block in 0..3 {
        let (p, v) = (2 * block, 2 * block + 1);
        polys.push(Polynomial::var(n, v));
        let mut acc = Polynomial::var(n, v)
            .scale(-delta)
            .add(&Polynomial::var(n, p).scale(-beta))
            .add(&Polynomial::var(n, p).pow(3).scale(-4.0 * alpha));
        if block > 0 {
            acc = acc.add(&Polynomial::var(n, 0).scale(gamma[block - 1]));
        }
        polys.push(acc);
    }
    SparseSystem::from_polynomials(SystemKind::Continuous, polys)
}

/// Coupled tent maps on `(z, x, y)`; see [`builtin`].
pub fn coupled_tent() -> Result<SparseSystem> {
    SparseSystem::new(
        SystemKind::Discrete,
        vec![
            SparseSystem::poly_component(IndexSet::new([1])?, &Polynomial::var(3, 0))?,
            SparseSystem::tent_component(1, 2, TentSlope::SinPi)?,
            SparseSystem::tent_component(1, 3, TentSlope::Rescaled)?,
        ],
    )
}

pub fn linear(a: &DMatrix<f64>, kind: SystemKind) -> Result<SparseSystem> {
    let n = a.nrows();
    let polys = (0..n)
        .map(|i| {
            Polynomial::from_terms(
                n,
                (0..n).map(|j| {
                    let mut e = vec![0; n];
                    e[j] = 1;
                    (a[(i, j)], e)
                }),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    SparseSystem::from_polynomials(kind, polys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn set(v: &[usize]) -> IndexSet {
        IndexSet::new(v.iter().copied()).unwrap()
    }

    #[test]
    fn duffing_dependencies() {
        let d = builtin("coupled_duffing", &Value::Null).unwrap();
        assert_eq!(d.components()[2].deps(), &set(&[4]));
        assert_eq!(d.components()[3].deps(), &set(&[1, 3, 4]));
        let g = d.graph();
        for s in [&[1, 2][..], &[1, 2, 3, 4], &[1, 2, 5, 6]] {
            assert!(g.is_subsystem(&set(s)).unwrap());
        }
        assert!(!g.is_subsystem(&set(&[3, 4])).unwrap());
    }

    #[test]
    fn duffing_projection_is_planar_duffing() {
        let d = builtin("coupled_duffing", &Value::Null).unwrap();
        let p = d.project(&set(&[1, 2])).unwrap();
        assert_eq!(p.n(), 2);
        // v̇ = −0.5 v + x − 4x³
        let f = p.eval(&[0.5, 0.2]);
        assert_eq!(f[0], 0.2);
        assert!((f[1] - (-0.1 + 0.5 - 4.0 * 0.125)).abs() < 1e-15);
        let j = p.linearize(&[0.0, 0.0]);
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, -0.5]));
    }

    #[test]
    fn tent_dependencies_and_step() {
        let t = builtin("coupled_tent", &Value::Null).unwrap();
        assert_eq!(t.components()[0].deps(), &set(&[1]));
        let g = t.graph();
        assert!(g.is_subsystem(&set(&[1, 2])).unwrap());
        assert!(g.is_subsystem(&set(&[1, 3])).unwrap());
        let x1 = t.eval(&[2.0, 0.4, 0.3]);
        assert_eq!(x1[0], 2.0);
        assert!(x1[1].abs() < 1e-15);
        // literal slope expression reduces to z up to rounding
        assert!((x1[2] - 2.0 * 0.3).abs() < 1e-15);
    }

    #[test]
    fn project_rejects_non_subsystem() {
        let d = builtin("coupled_duffing", &Value::Null).unwrap();
        let err = d.project(&set(&[3, 4])).unwrap_err();
        assert!(matches!(err, Error::Structural(_)));
        assert!(err.to_string().contains("x1"), "{err}");
    }

    #[test]
    fn project_full_is_identity() {
        let d = builtin("coupled_duffing", &Value::Null).unwrap();
        assert_eq!(d.project(&IndexSet::full(6)).unwrap(), d);
    }

    #[test]
    fn exponential_decay_rk4() {
        let s = linear(&DMatrix::from_element(1, 1, -1.0), SystemKind::Continuous).unwrap();
        let t = s.integrate(&[1.0], 0.1, 10).unwrap();
        assert!((t.states[10][0] - (-1.0f64).exp()).abs() < 1e-6);
        assert!((t.times[10] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_field_is_constant() {
        let s = linear(&DMatrix::zeros(2, 2), SystemKind::Continuous).unwrap();
        let t = s.integrate(&[0.3, -0.2], 0.5, 4).unwrap();
        assert!(t.states.iter().all(|x| x == &vec![0.3, -0.2]));
    }

    #[test]
    fn divergence_reports_step() {
        let s = SparseSystem::from_polynomials(
            SystemKind::Discrete,
            vec![Polynomial::parse("x1^2", 1).unwrap()],
        )
        .unwrap();
        match s.iterate_map(&[1e200], 5) {
            Err(Error::Divergence { step }) => assert_eq!(step, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn chebyshev_iteration() {
        let s = builtin("logistic_cheb", &Value::Null).unwrap();
        let t = s.iterate_map(&[0.0], 4).unwrap();
        let xs: Vec<f64> = t.states.iter().map(|x| x[0]).collect();
        assert_eq!(xs, vec![0.0, -1.0, 1.0, 1.0, 1.0]);
        assert_eq!(s.linearize(&[0.5])[(0, 0)], 2.0);
    }

    #[test]
    fn duffing_reference_initial_value_stays_bounded() {
        let d = builtin("coupled_duffing", &Value::Null).unwrap();
        let t = d.integrate(&[-0.3, -0.3, 0.7, 0.5, 0.3, 0.2], 0.25, 100).unwrap();
        assert!(t.states.iter().flatten().all(|v| v.abs() < 10.0));
    }

    #[test]
    fn snapshot_counts_and_determinism() {
        let d = builtin("coupled_duffing", &Value::Null).unwrap();
        let spec = SnapshotSpec {
            bounds: vec![(-1.0, 1.0); 6],
            trajectories: 4,
            steps: 3,
            h: 0.25,
            substeps: 10,
            seed: 11,
        };
        let a = d.sample_snapshots(&spec).unwrap();
        let b = d.sample_snapshots(&spec).unwrap();
        assert_eq!(a.len(), 12);
        assert_eq!(a, b);
        // consecutive pairs chain along a trajectory
        assert_eq!(a.y.column(0), a.x.column(1));
        let single = d
            .sample_snapshots(&SnapshotSpec { trajectories: 1, steps: 1, ..spec })
            .unwrap();
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn json_validation() {
        let ok = json!({"n":2,"kind":"ode","components":[
            {"deps":[2],"poly":{"terms":[{"coeff":1.0,"exps":[0,1]}]}},
            {"poly":{"terms":[{"coeff":-1.0,"exps":[1,0]}]}}
        ]});
        let s: SystemSpec = serde_json::from_value(ok).unwrap();
        let sys = s.build().unwrap();
        assert_eq!(sys.components()[1].deps(), &set(&[1]));

        let bad = json!({"n":2,"kind":"ode","components":[
            {"deps":[1],"poly":{"terms":[{"coeff":1.0,"exps":[0,1]}]}},
            {"poly":{"terms":[{"coeff":-1.0,"exps":[1,0]}]}}
        ]});
        let s: SystemSpec = serde_json::from_value(bad).unwrap();
        let err = s.build().unwrap_err().to_string();
        assert!(err.contains("component 1") && err.contains("x2"), "{err}");

        let spec = builtin("coupled_tent", &Value::Null).unwrap().to_spec();
        let again = serde_json::from_value::<SystemSpec>(serde_json::to_value(&spec).unwrap())
            .unwrap()
            .build()
            .unwrap();
        assert_eq!(again, builtin("coupled_tent", &Value::Null).unwrap());
        assert!(builtin("nope", &Value::Null).is_err());
    }
}
