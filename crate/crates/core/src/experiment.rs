//! Experiment runner: builds a problem from an [`ExperimentConfig`], runs the
//! selected solvers and writes one CSV trace per solver plus a JSON sidecar.
//!
//! Trace files are named `{solver}.csv` and share the header
//! `iter,f_value,grad_norm,kappa,branch,elapsed_ns,aux`. The sidecar
//! `run.json` holds the resolved configuration, a summary per solver, and any
//! error. Every number in a trace except `elapsed_ns` is a deterministic
//! function of the configuration.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalyst::{a2_run_observed, Branch, CatalystConfig};
use crate::completion::{CompletionObjective, CompletionProblem, Rating};
use crate::data::{generate_ball_data, generate_lowrank_data, generate_sphere_data, ingest_ratings};
use crate::diagnostics::{
    estimate_bilipschitz, estimate_grad_dr_bound, estimate_strong_retraction_convexity, verify_sphere_inequality_grids,
};
use crate::error::{Error, Result};
use crate::frechet::{closed_form_extrinsic_mean, ExtrinsicFrechet, IntrinsicFrechet};
use crate::grassmann::Grassmann;
use crate::manifold::Manifold;
use crate::objective::Objective;
use crate::solver::{rgd_run_observed, LineSearchConfig, StopReason};
use crate::sphere::{Sphere, SpherePoint};

pub const TRACE_HEADER: &str = "iter,f_value,grad_norm,kappa,branch,elapsed_ns,aux";
pub const SIDECAR_NAME: &str = "run.json";

/// Grid step of the sphere inequality check in the `diag` task.
const DIAG_GRID_STEP: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    FrechetIntrinsic,
    FrechetExtrinsic,
    Completion,
    Diag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Rgd,
    Catalyst,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Rgd => "rgd",
            Solver::Catalyst => "catalyst",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverSelection {
    Rgd,
    Catalyst,
    Both,
}

impl SolverSelection {
    pub fn solvers(self) -> Vec<Solver> {
        match self {
            SolverSelection::Rgd => vec![Solver::Rgd],
            SolverSelection::Catalyst => vec![Solver::Catalyst],
            SolverSelection::Both => vec![Solver::Rgd, Solver::Catalyst],
        }
    }
}

/// Fréchet-mean data: `n` points on `S^dim`, Gaussian directions by default
/// or spread over a geodesic ball when `ball_radius` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SphereSetup {
    pub n: usize,
    pub dim: usize,
    pub ball_radius: Option<f64>,
}

impl Default for SphereSetup {
    fn default() -> Self {
        Self {
            n: 1000,
            dim: 19,
            ball_radius: None,
        }
    }
}

/// Completion data: synthetic low-rank ratings unless `input` names a
/// rating file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompletionSetup {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub density: f64,
    pub noise: f64,
    pub lambda: f64,
    pub input: Option<PathBuf>,
}

impl Default for CompletionSetup {
    fn default() -> Self {
        Self {
            rows: 200,
            cols: 300,
            rank: 5,
            density: 0.15,
            noise: 0.1,
            lambda: 0.01,
            input: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagManifold {
    Sphere,
    Grassmann,
}

/// Region sampled by the `diag` task: a ball of `radius` around a random
/// point of `S^dim` or `Gr(dim, rank)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagSetup {
    pub manifold: DiagManifold,
    pub dim: usize,
    pub rank: usize,
    pub radius: f64,
    pub samples: usize,
}

impl Default for DiagSetup {
    fn default() -> Self {
        Self {
            manifold: DiagManifold::Sphere,
            dim: 9,
            rank: 2,
            radius: 0.5,
            samples: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub solver: SolverSelection,
    /// RGD iterations and catalyst outer iterations.
    pub iters: usize,
    pub seed: u64,
    /// Directory receiving the traces and the sidecar.
    pub output: PathBuf,
    /// Requires a sequential, fixed-order evaluation. Every reduction in
    /// this crate already runs in a fixed order, so this only pins solvers
    /// to one worker.
    pub bit_reproducible: bool,
    pub sphere: SphereSetup,
    pub completion: CompletionSetup,
    pub diag: DiagSetup,
    /// Line search shared by RGD and catalyst.
    pub line_search: LineSearchConfig,
    /// Catalyst settings; its `line_search` and `max_outer` are overridden
    /// by the top-level `line_search` and `iters`.
    pub catalyst: CatalystConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::FrechetExtrinsic,
            solver: SolverSelection::Both,
            iters: 100,
            seed: 0,
            output: PathBuf::from("mcat-out"),
            bit_reproducible: false,
            sphere: SphereSetup::default(),
            completion: CompletionSetup::default(),
            diag: DiagSetup::default(),
            line_search: LineSearchConfig::default(),
            catalyst: CatalystConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Copies the shared settings into the catalyst section and validates.
    pub fn resolve(mut self) -> Result<Self> {
        self.catalyst.line_search = self.line_search;
        self.catalyst.max_outer = self.iters;
        if self.iters == 0 {
            return Err(Error::Config("iters must be positive".into()));
        }
        self.line_search.validate()?;
        self.catalyst.validate()?;
        match self.task {
            Task::FrechetIntrinsic | Task::FrechetExtrinsic => {
                let s = &self.sphere;
                if s.n == 0 || s.dim == 0 {
                    return Err(Error::Config(format!(
                        "need n ≥ 1 and dim ≥ 1, got n = {}, dim = {}",
                        s.n, s.dim
                    )));
                }
            }
            Task::Completion => {
                let c = &self.completion;
                if c.input.is_none() && !(c.density > 0.0 && c.density <= 1.0) {
                    return Err(Error::Config(format!("density must lie in (0, 1], got {}", c.density)));
                }
            }
            Task::Diag => {
                let d = &self.diag;
                if d.dim == 0 || d.samples < 2 {
                    return Err(Error::Config("diag needs dim ≥ 1 and samples ≥ 2".into()));
                }
                if d.manifold == DiagManifold::Grassmann && !(1..=d.dim).contains(&d.rank) {
                    return Err(Error::Config(format!(
                        "Grassmann rank must lie in 1..={}, got {}",
                        d.dim, d.rank
                    )));
                }
            }
        }
        Ok(self)
    }

    /// The resolved configuration stored in a sidecar.
    pub fn from_sidecar(path: &Path) -> Result<Self> {
        let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(path)?)?;
        Ok(sidecar.config)
    }
}

/// Trace row label for the winning step-4 candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchLabel {
    #[serde(rename = "bar")]
    Bar,
    #[serde(rename = "tilde")]
    Tilde,
    #[serde(rename = "n/a")]
    NotApplicable,
}

impl From<Branch> for BranchLabel {
    fn from(b: Branch) -> Self {
        match b {
            Branch::Bar => BranchLabel::Bar,
            Branch::Tilde => BranchLabel::Tilde,
        }
    }
}

/// One CSV row. RGD rows carry `kappa = 0` and branch `n/a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub f_value: f64,
    pub grad_norm: f64,
    pub kappa: f64,
    pub branch: BranchLabel,
    pub elapsed_ns: u64,
    pub aux: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub solver: Solver,
    pub trace: PathBuf,
    /// Index of the last trace row.
    pub iterations: usize,
    pub final_f: f64,
    pub final_grad_norm: f64,
    pub final_aux: Option<f64>,
    pub stop: StopReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverFailure {
    pub solver: Solver,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub config: ExperimentConfig,
    pub summaries: Vec<SolverSummary>,
    pub errors: Vec<SolverFailure>,
    /// Key-value report of the `diag` task.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub diagnostics: Option<serde_json::Map<String, serde_json::Value>>,
}

impl Sidecar {
    pub fn failed(&self) -> bool {
        !self.errors.is_empty()
    }
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(TRACE_HEADER.split(','))?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace, rejecting files whose header differs from [`TRACE_HEADER`].
pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != TRACE_HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    Ok(r.deserialize().collect::<std::result::Result<Vec<TraceRow>, _>>()?)
}

/// Runs the experiment and writes its outputs. Configuration and input
/// problems are returned as errors before anything runs; numerical failures,
/// including degenerate data, are recorded in the returned sidecar (see
/// [`Sidecar::failed`]), which is also written to disk. At most `workers` solvers run at once.
pub fn run_experiment(cfg: ExperimentConfig, workers: usize) -> Result<Sidecar> {
    let cfg = cfg.resolve()?;
    fs::create_dir_all(&cfg.output)?;
    let workers = if cfg.bit_reproducible { 1 } else { workers.max(1) };

    let mut sidecar = Sidecar {
        config: cfg.clone(),
        summaries: Vec::new(),
        errors: Vec::new(),
        diagnostics: None,
    };
    if cfg.task == Task::Diag {
        sidecar.diagnostics = Some(run_diag(&cfg)?);
    } else {
        let solvers = cfg.solver.solvers();
        let problem = match Problem::build(&cfg) {
            Ok(p) => p,
            Err(e) if e.is_config() => return Err(e),
            Err(e) => {
                log::error!("problem setup failed: {e}");
                sidecar.errors = solvers
                    .iter()
                    .map(|&solver| SolverFailure {
                        solver,
                        error: e.to_string(),
                    })
                    .collect();
                fs::write(cfg.output.join(SIDECAR_NAME), serde_json::to_string_pretty(&sidecar)?)?;
                return Ok(sidecar);
            }
        };
        let results: Vec<(Solver, Result<SolverSummary>)> = if workers > 1 && solvers.len() > 1 {
            let (problem, cfg) = (&problem, &cfg);
            std::thread::scope(|scope| {
                let handles: Vec<_> = solvers
                    .iter()
                    .map(|&s| (s, scope.spawn(move || problem.run(cfg, s))))
                    .collect();
                handles
                    .into_iter()
                    .map(|(s, h)| (s, h.join().expect("solver thread panicked")))
                    .collect()
            })
        } else {
            solvers.iter().map(|&s| (s, problem.run(&cfg, s))).collect()
        };
        for (solver, result) in results {
            match result {
                Ok(summary) => sidecar.summaries.push(summary),
                Err(e) => {
                    log::error!("{} failed: {e}", solver.name());
                    sidecar.errors.push(SolverFailure {
                        solver,
                        error: e.to_string(),
                    });
                }
            }
        }
    }
    fs::write(cfg.output.join(SIDECAR_NAME), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(sidecar)
}

enum Problem {
    Intrinsic {
        m: Sphere,
        f: IntrinsicFrechet,
        start: SpherePoint,
    },
    Extrinsic {
        m: Sphere,
        f: ExtrinsicFrechet,
        start: SpherePoint,
        mean: SpherePoint,
    },
    Completion {
        m: Grassmann,
        f: CompletionObjective,
        start: crate::grassmann::GrassmannPoint,
        test: Vec<Rating>,
    },
}

impl Problem {
    fn build(cfg: &ExperimentConfig) -> Result<Self> {
        match cfg.task {
            Task::FrechetIntrinsic | Task::FrechetExtrinsic => {
                let s = &cfg.sphere;
                let data = match s.ball_radius {
                    Some(r) => generate_ball_data(s.n, s.dim, r, cfg.seed)?.1,
                    None => generate_sphere_data(s.n, s.dim, cfg.seed)?,
                };
                let m = Sphere::new(s.dim);
                let start = data[0].clone();
                if cfg.task == Task::FrechetIntrinsic {
                    Ok(Problem::Intrinsic {
                        m,
                        f: IntrinsicFrechet::new(&data)?,
                        start,
                    })
                } else {
                    Ok(Problem::Extrinsic {
                        m,
                        mean: closed_form_extrinsic_mean(&data)?,
                        f: ExtrinsicFrechet::new(&data)?,
                        start,
                    })
                }
            }
            Task::Completion => {
                let c = &cfg.completion;
                let (problem, test) = match &c.input {
                    Some(path) => {
                        let ingested = ingest_ratings(path)?;
                        let ratings = ingested.ratings;
                        if c.lambda == 0.0 {
                            if let Some(k) = (0..ratings.cols()).find(|&k| ratings.user_count(k) == 0) {
                                return Err(Error::Config(format!("user {k} has no ratings and λ = 0")));
                            }
                        }
                        (CompletionProblem::new(ratings, c.lambda, c.rank)?, Vec::new())
                    }
                    None => generate_lowrank_data(c.rows, c.cols, c.rank, c.density, c.noise, cfg.seed)?
                        .into_problem(c.lambda, c.rank)?,
                };
                let m = problem.manifold();
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
                let start = m.random_point(&mut rng);
                Ok(Problem::Completion {
                    m,
                    f: CompletionObjective::new(problem),
                    start,
                    test,
                })
            }
            Task::Diag => Err(Error::Config("diag has no optimization problem".into())),
        }
    }

    fn run(&self, cfg: &ExperimentConfig, solver: Solver) -> Result<SolverSummary> {
        let path = cfg.output.join(format!("{}.csv", solver.name()));
        let rows = match self {
            Problem::Intrinsic { m, f, start } => trace_rows(f, m, start, cfg, solver, &mut |_| None)?,
            Problem::Extrinsic { m, f, start, mean } => {
                let mut aux = |p: &SpherePoint| Some((p.coords() - mean.coords()).norm_squared());
                trace_rows(f, m, start, cfg, solver, &mut aux)?
            }
            Problem::Completion { m, f, start, test } => {
                let mut aux = |u: &crate::grassmann::GrassmannPoint| {
                    if test.is_empty() {
                        return None;
                    }
                    f.problem.rmse(u, test).ok()
                };
                trace_rows(f, m, start, cfg, solver, &mut aux)?
            }
        };
        write_trace(&path, &rows.0)?;
        let last = rows.0.last().expect("every run records at least one row");
        Ok(SolverSummary {
            solver,
            trace: path,
            iterations: last.iter,
            final_f: last.f_value,
            final_grad_norm: last.grad_norm,
            final_aux: last.aux,
            stop: rows.1,
        })
    }
}

fn trace_rows<M, F>(
    f: &F,
    m: &M,
    start: &M::Point,
    cfg: &ExperimentConfig,
    solver: Solver,
    aux: &mut dyn FnMut(&M::Point) -> Option<f64>,
) -> Result<(Vec<TraceRow>, StopReason)>
where
    M: Manifold,
    F: Objective<M>,
{
    match solver {
        Solver::Rgd => {
            let (_, trace) = rgd_run_observed(f, m, start, cfg.iters, &cfg.line_search, cfg.catalyst.eps, aux)?;
            let rows = trace
                .records
                .iter()
                .map(|r| TraceRow {
                    iter: r.iter,
                    f_value: r.f_value,
                    grad_norm: r.grad_norm,
                    kappa: 0.0,
                    branch: BranchLabel::NotApplicable,
                    elapsed_ns: r.elapsed_ns,
                    aux: r.aux,
                })
                .collect();
            Ok((rows, trace.stop))
        }
        Solver::Catalyst => {
            let (_, trace) = a2_run_observed(f, m, start, &cfg.catalyst, aux)?;
            let rows = trace
                .records
                .iter()
                .map(|r| TraceRow {
                    iter: r.k,
                    f_value: r.f_value,
                    grad_norm: r.grad_norm,
                    kappa: r.kappa,
                    branch: r.branch.into(),
                    elapsed_ns: r.elapsed_ns,
                    aux: r.aux,
                })
                .collect();
            Ok((rows, trace.stop))
        }
    }
}

fn run_diag(cfg: &ExperimentConfig) -> Result<serde_json::Map<String, serde_json::Value>> {
    let d = &cfg.diag;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = serde_json::Map::new();
    let mut put = |k: &str, v: serde_json::Value| {
        report.insert(k.to_string(), v);
    };
    fn collect<M: Manifold>(
        m: &M,
        p: &M::Point,
        d: &DiagSetup,
        seed: u64,
        put: &mut dyn FnMut(&str, serde_json::Value),
    ) -> Result<()> {
        let r1 = estimate_strong_retraction_convexity(m, p, d.radius, d.samples, seed)?;
        let bl = estimate_bilipschitz(m, p, d.radius, d.samples, seed)?;
        let k = estimate_grad_dr_bound(m, p, d.radius, d.samples, seed)?;
        put("r1", r1.value.into());
        put("k1", bl.k1.into());
        put("k2", bl.k2.into());
        put("k", k.value.into());
        put("pairs", k.pairs.into());
        put("skipped_pairs", (r1.skipped + bl.skipped + k.skipped).into());
        Ok(())
    }
    put("delta", d.radius.into());
    match d.manifold {
        DiagManifold::Sphere => {
            let m = Sphere::new(d.dim);
            let p = m.random_point(&mut rng);
            collect(&m, &p, d, cfg.seed, &mut put)?;
            let grid = verify_sphere_inequality_grids(DIAG_GRID_STEP, 1.0)?;
            put("grid_intrinsic_slack", grid.intrinsic.into());
            put("grid_extrinsic_slack", grid.extrinsic.into());
        }
        DiagManifold::Grassmann => {
            let m = Grassmann::new(d.dim, d.rank);
            let p = m.random_point(&mut rng);
            collect(&m, &p, d, cfg.seed, &mut put)?;
        }
    }
    Ok(report)
}
