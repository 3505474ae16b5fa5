//! The `koopman-sparse` command line.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 enumeration
//! cap exceeded, 4 numerical failure, 1 anything else (I/O).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::dictionary::Dictionary;
use crate::dynamics::{SnapshotSpec, SparseSystem, SystemKind, SystemSpec, BUILTINS};
use crate::error::{validation, Error, Result};
use crate::experiment::{reference_trajectory, run_edmd_experiment, EdmdExperiment};
use crate::io;
use crate::measures::{
    attractor_cloud, cesaro_average, compatibility_check, glue_atomic, invariance_report, AtomicMeasure,
    AttractorParams, MERGE_TOL,
};
use crate::moment::{export_sdpa, parse_sdpa, solve, Formulation, MomentConfig, MomentProblem, SolveOptions};
use crate::sparsity_graph::IndexSet;
use crate::spectral::{find_fixed_point, subsystem_spectrum_embedding};

#[derive(Debug, Parser)]
#[command(name = "koopman-sparse", version, about = "Sparsity structures for Koopman operator analysis")]
pub struct Cli {
    /// Output directory for artifacts and run.json.
    #[arg(long, global = true, default_value = "koopman-out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sparsity graph edges and all subsystems.
    Graph {
        /// Inline JSON, a JSON file, or a builtin name.
        #[arg(long)]
        system: String,
        #[arg(long, default_value_t = 4096)]
        cap: usize,
    },
    /// One trajectory from --x0, or a snapshot set with --trajectories.
    Simulate {
        #[arg(long)]
        system: String,
        #[arg(long)]
        x0: Option<String>,
        #[arg(long, default_value_t = 25)]
        steps: usize,
        #[arg(long, default_value_t = 0.25)]
        h: f64,
        #[arg(long, default_value_t = 10)]
        substeps: usize,
        #[arg(long)]
        trajectories: Option<usize>,
        /// `lo:hi` per coordinate, comma separated; one interval is repeated.
        #[arg(long = "box", default_value = "-1:1")]
        bounds: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Full vs sparse EDMD on shared data (coupled Duffing without --config).
    Edmd {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Spectrum of the linearization at a fixed point vs that of a subsystem.
    Spectral {
        #[arg(long)]
        system: String,
        /// Starting point of the fixed point search.
        #[arg(long)]
        point: String,
        /// Subsystem, e.g. `1,2`.
        #[arg(long)]
        set: String,
    },
    /// Atomic measures: gluing, tent-map attractor clouds, Cesàro averages.
    #[command(subcommand)]
    Measure(MeasureCommand),
    /// Moment relaxations: build, solve, export to SDPA.
    #[command(subcommand)]
    Moments(MomentsCommand),
}

#[derive(Debug, Subcommand)]
pub enum MeasureCommand {
    /// Glue particle clouds along their common coordinates.
    Glue {
        /// `file.csv@1,2` — a particle CSV and its coordinate set.
        #[arg(required = true, num_args = 2..)]
        inputs: Vec<String>,
        #[arg(long, default_value_t = MERGE_TOL)]
        tol: f64,
    },
    /// Coupled tent-map attractor clouds, glued and simulated jointly.
    Attractor {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Cesàro average of the pushforwards of an atomic measure.
    Average {
        #[arg(long)]
        system: String,
        /// Particle CSV of the initial measure.
        #[arg(long, conflicts_with = "x0")]
        init: Option<PathBuf>,
        /// Dirac initial measure.
        #[arg(long)]
        x0: Option<String>,
        #[arg(long)]
        steps: usize,
        /// Degree of the monomial test dictionary.
        #[arg(long, default_value_t = 6)]
        test_degree: u32,
    },
}

#[derive(Debug, Subcommand)]
pub enum MomentsCommand {
    /// Assemble the moment problem and dump its structure.
    Build(MomentArgs),
    /// Assemble and solve.
    Solve(MomentArgs),
    /// Assemble and write SDPA sparse format plus the re-embedding sidecar.
    Export(MomentArgs),
}

#[derive(Debug, Args)]
pub struct MomentArgs {
    #[arg(long)]
    pub system: String,
    #[arg(long)]
    pub degree: u32,
    /// Polynomial cost in x1..xn.
    #[arg(long)]
    pub cost: String,
    /// `lo:hi` per coordinate; one interval is repeated.
    #[arg(long = "box", default_value = "-1:1")]
    pub bounds: String,
    /// Parts of the sparse formulations, e.g. `1,2;1,3`; by default the
    /// maximal single-coordinate closures.
    #[arg(long)]
    pub parts: Option<String>,
    #[arg(long, group = "mode")]
    pub sparse: bool,
    #[arg(long, group = "mode")]
    pub full: bool,
    #[arg(long, group = "mode")]
    pub relaxed: bool,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[arg(long, default_value_t = 50_000)]
    pub max_iter: usize,
    /// Seed of the warm start noise.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Validation(_)
        | Error::Structural(_)
        | Error::Parse(_)
        | Error::Json(_)
        | Error::Hypothesis(_)
        | Error::Incompatible { .. }
        | Error::Ambiguous(_) => 2,
        Error::Overflow { .. } => 3,
        Error::Numerical(_) | Error::Divergence { .. } | Error::DegenerateData(_) | Error::Infeasible(_) => 4,
        Error::Io(_) => 1,
    }
}

/// Runs the parsed command; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("koopman-sparse: {e}");
            exit_code(&e)
        }
    }
}

pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                2
            } else {
                0
            }
        }
    }
}

/// Prints to stdout; a closed pipe is not an error.
fn print(text: &str) -> Result<()> {
    use std::io::Write;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn emit<T: Serialize>(out: &Path, name: &str, v: &T) -> Result<()> {
    print(&serde_json::to_string_pretty(v)?)?;
    io::write_json(&out.join(name), v)
}

fn write_run(out: &Path, command: &str, config: Value) -> Result<()> {
    io::write_json(
        &out.join("run.json"),
        &json!({ "command": command, "version": env!("CARGO_PKG_VERSION"), "config": config }),
    )
}

/// Inline JSON, a JSON file, or a builtin name with default parameters.
pub fn load_system(arg: &str) -> Result<(SystemSpec, SparseSystem)> {
    let t = arg.trim();
    let spec: SystemSpec = if t.starts_with('{') {
        serde_json::from_str(t)?
    } else if Path::new(t).is_file() {
        serde_json::from_str(&std::fs::read_to_string(t)?)?
    } else if BUILTINS.contains(&t) {
        SystemSpec::Builtin { builtin: t.to_string(), params: Value::Null }
    } else {
        return validation(format!("'{t}' is neither JSON, a file, nor a builtin ({})", BUILTINS.join(", ")));
    };
    let sys = spec.build()?;
    Ok((spec, sys))
}

pub fn parse_vector(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| Error::Parse(format!("'{v}': {e}"))))
        .collect()
}

pub fn parse_set(s: &str, n: usize) -> Result<IndexSet> {
    let idx = s
        .split(',')
        .map(|v| v.trim().parse::<usize>().map_err(|e| Error::Parse(format!("'{v}': {e}"))))
        .collect::<Result<Vec<_>>>()?;
    IndexSet::within(idx, n)
}

pub fn parse_box(s: &str, n: usize) -> Result<Vec<(f64, f64)>> {
    let iv = s
        .split(',')
        .map(|p| {
            let (a, b) = p.split_once(':').ok_or_else(|| Error::Parse(format!("interval '{p}' is not lo:hi")))?;
            let a = a.trim().parse::<f64>().map_err(|e| Error::Parse(format!("'{a}': {e}")))?;
            let b = b.trim().parse::<f64>().map_err(|e| Error::Parse(format!("'{b}': {e}")))?;
            Ok((a, b))
        })
        .collect::<Result<Vec<_>>>()?;
    match iv.len() {
        1 => Ok(vec![iv[0]; n]),
        k if k == n => Ok(iv),
        k => validation(format!("box has {k} intervals for {n} coordinates")),
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let out = cli.out.as_path();
    match &cli.command {
        Command::Graph { system, cap } => cmd_graph(out, system, *cap),
        Command::Simulate { system, x0, steps, h, substeps, trajectories, bounds, seed } => {
            let (spec, sys) = load_system(system)?;
            write_run(
                out,
                "simulate",
                json!({"system": spec, "x0": x0, "steps": steps, "h": h, "substeps": substeps,
                       "trajectories": trajectories, "box": bounds, "seed": seed}),
            )?;
            if let Some(m) = trajectories {
                let spec = SnapshotSpec {
                    bounds: parse_box(bounds, sys.n())?,
                    trajectories: *m,
                    steps: *steps,
                    h: *h,
                    substeps: *substeps,
                    seed: crate::rng::stream_seed(*seed, "snapshots"),
                };
                let s = sys.sample_snapshots(&spec)?;
                io::write_snapshots(&out.join("snapshots.csv"), &s)?;
                print(&format!("{}", json!({"snapshots": s.len(), "file": out.join("snapshots.csv")})))?;
            } else {
                let x0 = parse_vector(x0.as_deref().ok_or_else(|| Error::Validation("need --x0 or --trajectories".into()))?)?;
                let t = reference_trajectory(&sys, &x0, *h, *substeps, *steps)?;
                io::write_trajectory(&out.join("trajectory.csv"), &t)?;
                print(&format!("{}", json!({"states": t.len(), "file": out.join("trajectory.csv")})))?;
            }
            Ok(())
        }
        Command::Edmd { config, seed } => cmd_edmd(out, config.as_deref(), *seed),
        Command::Spectral { system, point, set } => {
            let (spec, sys) = load_system(system)?;
            let set = parse_set(set, sys.n())?;
            write_run(out, "spectral", json!({"system": spec, "point": point, "set": set.as_slice()}))?;
            let xstar = find_fixed_point(&sys, &parse_vector(point)?, 100)?;
            let rep = subsystem_spectrum_embedding(&sys, &set, &xstar)?;
            emit(out, "spectrum.json", &rep)
        }
        Command::Measure(m) => cmd_measure(out, m),
        Command::Moments(m) => cmd_moments(out, m),
    }
}

fn cmd_graph(out: &Path, system: &str, cap: usize) -> Result<()> {
    let (spec, sys) = load_system(system)?;
    write_run(out, "graph", json!({"system": spec, "cap": cap}))?;
    let g = sys.graph();
    let edges: Vec<[usize; 2]> = g.edges().into_iter().map(|(i, j)| [i, j]).collect();
    match g.enumerate_subsystems(cap) {
        Ok(subs) => {
            let list: Vec<&[usize]> = subs.iter().map(|s| s.as_slice()).collect();
            emit(out, "graph.json", &json!({"n": sys.n(), "edges": edges, "count": list.len(), "subsystems": list}))
        }
        Err(Error::Overflow { cap, found }) => {
            emit(out, "graph.json", &json!({"n": sys.n(), "edges": edges, "overflow": true, "cap": cap, "found": found}))?;
            Err(Error::Overflow { cap, found })
        }
        Err(e) => Err(e),
    }
}

fn cmd_edmd(out: &Path, config: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let mut cfg = match config {
        Some(p) => serde_json::from_str::<EdmdExperiment>(&std::fs::read_to_string(p)?)?,
        None => EdmdExperiment::duffing_default(0),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    write_run(out, "edmd", serde_json::to_value(&cfg)?)?;
    let res = run_edmd_experiment(&cfg)?;
    io::write_matrix(&out.join("K_full.csv"), &res.full.k)?;
    io::write_matrix(&out.join("B_full.csv"), &res.full.decoder)?;
    for (k, (_, ka)) in res.sparse.parts.iter().enumerate() {
        io::write_matrix(&out.join(format!("K_part{}.csv", k + 1)), &ka.k)?;
        io::write_matrix(&out.join(format!("B_part{}.csv", k + 1)), &ka.decoder)?;
    }
    io::write_comparison(&out.join("comparison.csv"), &res.comparison_rows())?;
    emit(out, "metrics.json", &res.metrics)
}

fn cmd_measure(out: &Path, m: &MeasureCommand) -> Result<()> {
    match m {
        MeasureCommand::Glue { inputs, tol } => {
            write_run(out, "measure glue", json!({"inputs": inputs, "tol": tol}))?;
            let mut parts = Vec::new();
            for s in inputs {
                let (file, set) = s
                    .rsplit_once('@')
                    .ok_or_else(|| Error::Validation(format!("'{s}' should be file.csv@i,j,...")))?;
                let mu = io::read_particles(Path::new(file))?;
                let idx = parse_set(set, usize::MAX)?;
                if idx.len() != mu.dim() {
                    return validation(format!("{file} has {} coordinates but set {idx} has {}", mu.dim(), idx.len()));
                }
                parts.push((mu, idx));
            }
            let mut checks = Vec::new();
            for k in 0..parts.len() {
                for l in k + 1..parts.len() {
                    let r = compatibility_check(&parts[k].0, &parts[l].0, &parts[k].1, &parts[l].1, *tol)?;
                    checks.push(json!({"first": k + 1, "second": l + 1, "report": r}));
                }
            }
            let glued = glue_atomic(&parts, *tol)?;
            io::write_particles(&out.join("glued.csv"), &glued)?;
            emit(
                out,
                "glue.json",
                &json!({
                    "masses": parts.iter().map(|(m, _)| m.mass()).collect::<Vec<_>>(),
                    "glued_mass": glued.mass(),
                    "glued_atoms": glued.len(),
                    "compatibility": checks,
                }),
            )
        }
        MeasureCommand::Attractor { config, seed } => {
            let mut p: AttractorParams = match config {
                Some(c) => serde_json::from_str(&std::fs::read_to_string(c)?)?,
                None => AttractorParams::default(),
            };
            if let Some(s) = seed {
                p.seed = *s;
            }
            write_run(out, "measure attractor", serde_json::to_value(&p)?)?;
            let c = attractor_cloud(&p)?;
            io::write_particles(&out.join("part_zx.csv"), &c.part_zx)?;
            io::write_particles(&out.join("part_zy.csv"), &c.part_zy)?;
            io::write_particles(&out.join("glued.csv"), &c.glued)?;
            io::write_particles(&out.join("simultaneous.csv"), &c.simultaneous)?;
            let zs = AtomicMeasure::new(1, vec![1.0 / c.z.len() as f64; c.z.len()], c.z.clone())?;
            io::write_particles(&out.join("z_samples.csv"), &zs)?;
            emit(
                out,
                "attractor.json",
                &json!({
                    "z_samples": c.z.len(),
                    "particles_per_part": c.particles,
                    "atoms": {"part_zx": c.part_zx.len(), "part_zy": c.part_zy.len(),
                              "glued": c.glued.len(), "simultaneous": c.simultaneous.len()},
                    "masses": {"part_zx": c.part_zx.mass(), "part_zy": c.part_zy.mass(),
                               "glued": c.glued.mass(), "simultaneous": c.simultaneous.mass()},
                    "glued_equals_simultaneous": c.glued == c.simultaneous,
                    "compatibility": c.compatibility,
                }),
            )
        }
        MeasureCommand::Average { system, init, x0, steps, test_degree } => {
            let (spec, sys) = load_system(system)?;
            if sys.kind() != SystemKind::Discrete {
                return validation("Cesàro averages are defined here for maps");
            }
            write_run(
                out,
                "measure average",
                json!({"system": spec, "init": init, "x0": x0, "steps": steps, "test_degree": test_degree}),
            )?;
            let mu0 = match (init, x0) {
                (Some(p), _) => io::read_particles(p)?,
                (None, Some(x)) => AtomicMeasure::dirac(&parse_vector(x)?),
                (None, None) => return validation("need --init or --x0"),
            };
            let avg = cesaro_average(&sys, &mu0, *steps)?;
            let dict = Dictionary::monomials(sys.n(), *test_degree);
            let rep = invariance_report(&avg, &sys, &dict)?;
            io::write_particles(&out.join("average.csv"), &avg)?;
            emit(
                out,
                "average.json",
                &json!({
                    "mass": avg.mass(),
                    "atoms": avg.len(),
                    "steps": steps,
                    "invariance": rep,
                    "max_abs_residual": rep.per_entry.iter().copied().fold(0.0, f64::max),
                    "cesaro_bound": 2.0 * rep.sup_on_atoms.iter().copied().fold(0.0, f64::max) / *steps as f64,
                }),
            )
        }
    }
}

impl MomentArgs {
    pub fn config(&self, n: usize) -> Result<MomentConfig> {
        let mode = if self.full {
            Formulation::Full
        } else if self.relaxed {
            Formulation::Relaxed
        } else {
            Formulation::Sparse
        };
        let parts = match &self.parts {
            Some(s) => Some(
                s.split(';')
                    .map(|p| parse_set(p, n).map(|set| set.as_slice().to_vec()))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        Ok(MomentConfig { mode, degree: self.degree, cost: self.cost.clone(), bounds: parse_box(&self.bounds, n)?, parts })
    }
}

/// Builds the problem selected by `--full`, `--sparse` (default) or `--relaxed`.
pub fn build_moment_problem(a: &MomentArgs) -> Result<(Value, MomentProblem)> {
    let (spec, sys) = load_system(&a.system)?;
    let cfg = a.config(sys.n())?;
    let prob = cfg.build(&sys)?;
    let run = json!({"system": spec, "moments": cfg, "tol": a.tol, "max_iter": a.max_iter, "seed": a.seed, "noise": a.noise});
    Ok((run, prob))
}

fn cmd_moments(out: &Path, m: &MomentsCommand) -> Result<()> {
    match m {
        MomentsCommand::Build(a) => {
            let (run, prob) = build_moment_problem(a)?;
            write_run(out, "moments build", run)?;
            io::write_json(&out.join("moment_problem.json"), &prob)?;
            let summary = json!({
                "counts": prob.counts(),
                "cliques": prob.cliques.iter().map(|c| c.set.as_slice()).collect::<Vec<_>>(),
                "equalities": prob.equalities.iter().map(|e| &e.label).collect::<Vec<_>>(),
                "blocks": prob.blocks.iter().map(|b| json!({"label": b.label, "size": b.size})).collect::<Vec<_>>(),
            });
            print(&serde_json::to_string_pretty(&summary)?)?;
            Ok(())
        }
        MomentsCommand::Solve(a) => {
            let (run, prob) = build_moment_problem(a)?;
            write_run(out, "moments solve", run)?;
            let opts = SolveOptions {
                max_iter: a.max_iter,
                tol: a.tol,
                warm_start_noise: a.noise,
                seed: a.seed,
                ..SolveOptions::default()
            };
            let sol = solve(&prob, &opts)?;
            emit(out, "solution.json", &json!({"counts": prob.counts(), "solution": sol}))?;
            if sol.status == crate::moment::SolveStatus::InfeasibleDetected {
                return Err(Error::Infeasible(sol.message.unwrap_or_else(|| "infeasible".into())));
            }
            Ok(())
        }
        MomentsCommand::Export(a) => {
            let (run, prob) = build_moment_problem(a)?;
            write_run(out, "moments export", run)?;
            std::fs::create_dir_all(out)?;
            let path = out.join("relaxation.dat-s");
            let side = export_sdpa(&prob, &path)?;
            let back = parse_sdpa(&std::fs::read_to_string(&path)?)?;
            let zero = vec![0.0; back.m];
            let mut err: f64 = 0.0;
            for (blk, mat) in prob.blocks.iter().zip(back.slack(&zero)) {
                err = err.max((blk.eval(&side.particular) - mat).amax());
            }
            let ok = back.m == side.basis.len() && back.block_sizes == prob.block_sizes() && err <= 1e-9;
            emit(
                out,
                "export.json",
                &json!({"file": path, "sidecar": path.with_extension("json"), "free_variables": back.m,
                        "block_sizes": back.block_sizes, "round_trip_max_error": err, "round_trip_ok": ok}),
            )?;
            if !ok {
                return Err(Error::Numerical(format!("SDPA round trip mismatch {err:e}")));
            }
            Ok(())
        }
    }
}
