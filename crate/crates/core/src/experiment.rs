//! Full vs sparse EDMD on shared data, as driven by the `edmd` command.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dictionary::DictionarySpec;
use crate::dynamics::{SnapshotSpec, SparseSystem, SystemKind, SystemSpec, Trajectory};
use crate::edmd::{edmd_fit, rmse, rmse_per_coord, sparse_edmd, KoopmanApprox, SparseKoopman};
use crate::error::{validation, Error, Result};
use crate::rng::{rng_from_seed, stream_seed};
use crate::sparsity_graph::IndexSet;

/// Snapshot sampling; the seed comes from the experiment's root seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingParams {
    #[serde(rename = "box")]
    pub bounds: Vec<(f64, f64)>,
    pub trajectories: usize,
    pub steps: usize,
    #[serde(default = "quarter")]
    pub h: f64,
    #[serde(default = "ten")]
    pub substeps: usize,
}

/// RBF width of the Duffing benchmark.
pub const DUFFING_SIGMA: f64 = 0.5;

fn quarter() -> f64 {
    0.25
}
fn ten() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdmdExperiment {
    pub system: SystemSpec,
    /// 1-based index sets, each a subsystem; together they cover all states.
    pub parts: Vec<Vec<usize>>,
    pub full_dictionary: DictionarySpec,
    /// One per part.
    pub dictionaries: Vec<DictionarySpec>,
    pub snapshots: SamplingParams,
    /// `null` selects the default ridge, `0` the pseudo-inverse.
    #[serde(default)]
    pub reg: Option<f64>,
    pub x0: Vec<f64>,
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    /// 1-based coordinates of the pooled RMSE; all when omitted.
    #[serde(default)]
    pub compare: Option<Vec<usize>>,
}

impl EdmdExperiment {
    /// Coupled Duffing with 1000 RBFs globally and 350 / 1000 / 1000 on the
    /// subsystems {1,2}, {1,2,3,4}, {1,2,5,6}: pure RBF dictionaries (states
    /// only through the fitted decoder) of width [`DUFFING_SIGMA`], centers in
    /// the sampling box `[-1, 1]^6`.
    pub fn duffing_default(seed: u64) -> Self {
        let rbf = |l| DictionarySpec::Rbf {
            dim: None,
            l,
            bounds: None,
            sigma: DUFFING_SIGMA,
            seed: None,
            include_coords: false,
        };
        EdmdExperiment {
            system: SystemSpec::Builtin { builtin: "coupled_duffing".into(), params: serde_json::Value::Null },
            parts: vec![vec![1, 2], vec![1, 2, 3, 4], vec![1, 2, 5, 6]],
            full_dictionary: rbf(1000),
            dictionaries: vec![rbf(350), rbf(1000), rbf(1000)],
            snapshots: SamplingParams { bounds: vec![(-1.0, 1.0); 6], trajectories: 500, steps: 25, h: 0.25, substeps: 10 },
            reg: None,
            x0: vec![-0.3, -0.3, 0.7, 0.5, 0.3, 0.2],
            steps: 25,
            seed,
            compare: Some(vec![1, 2]),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EdmdMetrics {
    pub seed: u64,
    pub snapshots: usize,
    pub full_dictionary_size: usize,
    pub part_dictionary_sizes: Vec<usize>,
    pub reg_full: f64,
    pub training_residual_full: f64,
    pub training_residual_parts: Vec<f64>,
    pub rmse_full: Vec<f64>,
    pub rmse_sparse: Vec<f64>,
    pub compare: Vec<usize>,
    pub rmse_full_compared: f64,
    pub rmse_sparse_compared: f64,
    /// Pooled RMSE on `compare` over [`HELDOUT_POINTS`] further initial
    /// values drawn uniformly from the sampling box.
    pub heldout_rmse_full: f64,
    pub heldout_rmse_sparse: f64,
}

pub const HELDOUT_POINTS: usize = 50;

pub struct EdmdOutcome {
    pub truth: Trajectory,
    pub full_prediction: Trajectory,
    pub sparse_prediction: Trajectory,
    pub full: KoopmanApprox,
    pub sparse: SparseKoopman,
    pub metrics: EdmdMetrics,
}

impl EdmdOutcome {
    /// Rows `(t, coord, truth, full, sparse)`, coordinates 1-based.
    pub fn comparison_rows(&self) -> Vec<(f64, usize, f64, f64, f64)> {
        let mut rows = Vec::new();
        for (k, t) in self.truth.times.iter().enumerate() {
            for j in 0..self.truth.states[k].len() {
                rows.push((
                    *t,
                    j + 1,
                    self.truth.states[k][j],
                    self.full_prediction.states[k][j],
                    self.sparse_prediction.states[k][j],
                ));
            }
        }
        rows
    }
}

/// Reference trajectory on the snapshot time grid.
pub fn reference_trajectory(sys: &SparseSystem, x0: &[f64], h: f64, substeps: usize, steps: usize) -> Result<Trajectory> {
    if x0.len() != sys.n() {
        return validation(format!("x0 has length {}, system has {} states", x0.len(), sys.n()));
    }
    let dt = if sys.kind() == SystemKind::Continuous { h } else { 1.0 };
    let mut states = vec![x0.to_vec()];
    for k in 1..=steps {
        let next = sys.advance(&states[k - 1], h, substeps);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: k });
        }
        states.push(next);
    }
    Ok(Trajectory { times: (0..=steps).map(|k| k as f64 * dt).collect(), states })
}

/// Samples once, fits the full and the per-part models, predicts from `x0`.
pub fn run_edmd_experiment(cfg: &EdmdExperiment) -> Result<EdmdOutcome> {
    let sys = cfg.system.build()?;
    let n = sys.n();
    if cfg.dictionaries.len() != cfg.parts.len() {
        return validation(format!("{} parts but {} dictionaries", cfg.parts.len(), cfg.dictionaries.len()));
    }
    let parts = cfg
        .parts
        .iter()
        .map(|p| IndexSet::within(p.iter().copied(), n))
        .collect::<Result<Vec<_>>>()?;
    let s = &cfg.snapshots;
    let spec = SnapshotSpec {
        bounds: s.bounds.clone(),
        trajectories: s.trajectories,
        steps: s.steps,
        h: s.h,
        substeps: s.substeps,
        seed: stream_seed(cfg.seed, "snapshots"),
    };
    let snaps = sys.sample_snapshots(&spec)?;

    let full_dict = cfg.full_dictionary.build(n, &s.bounds, stream_seed(cfg.seed, "dictionary/full"))?;
    let part_dicts = parts
        .iter()
        .zip(&cfg.dictionaries)
        .enumerate()
        .map(|(k, (p, d))| {
            let bounds: Vec<(f64, f64)> = p.iter().map(|i| s.bounds[i - 1]).collect();
            d.build(p.len(), &bounds, stream_seed(cfg.seed, &format!("dictionary/part{}", k + 1)))
        })
        .collect::<Result<Vec<_>>>()?;

    let (full, sparse) = rayon::join(
        || edmd_fit(&full_dict, &snaps, cfg.reg),
        || sparse_edmd(&sys, &parts, &part_dicts, &snaps, cfg.reg),
    );
    let (full, sparse) = (full?, sparse?);

    let truth = reference_trajectory(&sys, &cfg.x0, s.h, s.substeps, cfg.steps)?;
    let full_prediction = full.predict(&cfg.x0, cfg.steps)?;
    let sparse_prediction = sparse.predict(&cfg.x0, cfg.steps)?;

    let compare: Vec<usize> = match &cfg.compare {
        Some(c) => IndexSet::within(c.iter().copied(), n)?.iter().collect(),
        None => (1..=n).collect(),
    };
    let zero_based: Vec<usize> = compare.iter().map(|j| j - 1).collect();

    let mut rng = rng_from_seed(stream_seed(cfg.seed, "heldout"));
    let (mut sq_full, mut sq_sparse, mut count) = (0.0, 0.0, 0usize);
    for _ in 0..HELDOUT_POINTS {
        let x0: Vec<f64> = s.bounds.iter().map(|&(a, b)| rng.gen_range(a..=b)).collect();
        let t = reference_trajectory(&sys, &x0, s.h, s.substeps, cfg.steps)?;
        let f = full.predict(&x0, cfg.steps)?;
        let p = sparse.predict(&x0, cfg.steps)?;
        for k in 0..t.states.len() {
            for &j in &zero_based {
                sq_full += (f.states[k][j] - t.states[k][j]).powi(2);
                sq_sparse += (p.states[k][j] - t.states[k][j]).powi(2);
                count += 1;
            }
        }
    }
    let heldout = |sq: f64| if count == 0 { 0.0 } else { (sq / count as f64).sqrt() };
    let metrics = EdmdMetrics {
        seed: cfg.seed,
        snapshots: snaps.len(),
        full_dictionary_size: full.dict.len(),
        part_dictionary_sizes: sparse.parts.iter().map(|(_, ka)| ka.dict.len()).collect(),
        reg_full: full.reg,
        training_residual_full: full.training_residual,
        training_residual_parts: sparse.parts.iter().map(|(_, ka)| ka.training_residual).collect(),
        rmse_full: rmse_per_coord(&truth, &full_prediction),
        rmse_sparse: rmse_per_coord(&truth, &sparse_prediction),
        rmse_full_compared: rmse(&truth, &full_prediction, &zero_based),
        rmse_sparse_compared: rmse(&truth, &sparse_prediction, &zero_based),
        compare,
        heldout_rmse_full: heldout(sq_full),
        heldout_rmse_sparse: heldout(sq_sparse),
    };
    Ok(EdmdOutcome { truth, full_prediction, sparse_prediction, full, sparse, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dictionary::DictionarySpec;

    fn linear_cfg() -> EdmdExperiment {
        let mono = DictionarySpec::Monomials { dim: None, d: 1, include_coords: false };
        EdmdExperiment {
            system: serde_json::from_value(serde_json::json!({
                "builtin": "linear",
                "params": {"a": [[0.9, 0.0], [0.1, 0.8]], "kind": "map"}
            }))
            .unwrap(),
            parts: vec![vec![1], vec![1, 2]],
            full_dictionary: mono.clone(),
            dictionaries: vec![mono.clone(), mono],
            snapshots: SamplingParams { bounds: vec![(-1.0, 1.0); 2], trajectories: 10, steps: 3, h: 0.25, substeps: 10 },
            reg: Some(0.0),
            x0: vec![0.4, -0.2],
            steps: 25,
            seed: 3,
            compare: None,
        }
    }

    #[test]
    fn linear_map_is_recovered_by_both() {
        let out = run_edmd_experiment(&linear_cfg()).unwrap();
        assert!(out.metrics.rmse_full.iter().all(|&r| r < 1e-6));
        assert!(out.metrics.rmse_sparse.iter().all(|&r| r < 1e-6));
        assert_eq!(out.comparison_rows().len(), 26 * 2);
    }

    #[test]
    fn same_seed_same_numbers() {
        let a = run_edmd_experiment(&linear_cfg()).unwrap();
        let b = run_edmd_experiment(&linear_cfg()).unwrap();
        assert_eq!(a.full.k, b.full.k);
        assert_eq!(a.comparison_rows(), b.comparison_rows());
    }
}
