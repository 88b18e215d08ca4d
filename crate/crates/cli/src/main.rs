//! `mcat`: runs manifold optimization experiments and writes CSV traces.
//!
//! Exit codes: 0 on success, 2 on a configuration or input error, 3 when a
//! solver fails.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mcat_core::experiment::{
    run_experiment, CompletionSetup, DiagManifold, DiagSetup, ExperimentConfig, Sidecar, SolverSelection, SphereSetup,
    Task, SIDECAR_NAME,
};
use mcat_core::{CatalystConfig, Error, LineSearchConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Parser)]
#[command(
    name = "mcat",
    version,
    about = "Manifold optimization experiments: RGD versus catalyst acceleration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fréchet mean of points on a sphere.
    Frechet(FrechetArgs),
    /// Low-rank matrix completion on the Grassmannian.
    Complete(CompleteArgs),
    /// Empirical convexity constants of a manifold region.
    Diag(DiagArgs),
    /// Re-runs the configuration stored in a sidecar file.
    Rerun(RerunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Intrinsic,
    Extrinsic,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Rgd,
    Catalyst,
    Both,
}

impl From<SolverArg> for SolverSelection {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Rgd => SolverSelection::Rgd,
            SolverArg::Catalyst => SolverSelection::Catalyst,
            SolverArg::Both => SolverSelection::Both,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ManifoldArg {
    Sphere,
    Grassmann,
}

/// Settings shared by the optimization subcommands.
#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value = "both")]
    solver: SolverArg,
    /// RGD iterations and catalyst outer iterations.
    #[arg(long, default_value_t = 100)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for traces and the sidecar.
    #[arg(long)]
    out: PathBuf,
    /// Run solvers one after another so traces are bit-identical across runs.
    #[arg(long)]
    bit_reproducible: bool,
    #[arg(long, default_value_t = 0.1)]
    kappa0: f64,
    /// Smoothing level of the extrapolated subproblem; estimated when absent.
    #[arg(long)]
    kappa_cvx: Option<f64>,
    /// Inner budget T of the adaptive step.
    #[arg(long, default_value_t = 5)]
    budget_t: usize,
    /// Scale S of the extrapolated subproblem budget.
    #[arg(long, default_value_t = 10)]
    budget_s: usize,
    /// Stationarity target.
    #[arg(long, default_value_t = 1e-6)]
    eps: f64,
    #[arg(long, default_value_t = 40)]
    max_doublings: usize,
    #[arg(long, default_value_t = 1.0)]
    initial_step: f64,
    #[arg(long, default_value_t = 0.95)]
    shrink: f64,
    /// Armijo sufficient-decrease constant.
    #[arg(long, default_value_t = 1e-4)]
    armijo_c: f64,
    /// Accepted steps that decrease the objective by less than this count as a stall.
    #[arg(long)]
    decrease_floor: Option<f64>,
}

impl RunArgs {
    fn config(&self, task: Task) -> ExperimentConfig {
        let line_search = LineSearchConfig {
            initial_step: self.initial_step,
            shrink: self.shrink,
            sufficient_decrease: self.armijo_c,
            decrease_floor: self.decrease_floor,
            ..Default::default()
        };
        ExperimentConfig {
            task,
            solver: self.solver.into(),
            iters: self.iters,
            seed: self.seed,
            output: self.out.clone(),
            bit_reproducible: self.bit_reproducible,
            line_search,
            catalyst: CatalystConfig {
                kappa0: self.kappa0,
                kappa_cvx: self.kappa_cvx,
                t: self.budget_t,
                s: self.budget_s,
                eps: self.eps,
                max_doublings: self.max_doublings,
                line_search,
                ..Default::default()
            },
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct FrechetArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Sphere dimension d of S^d.
    #[arg(long, default_value_t = 19)]
    dim: usize,
    /// Draw the data from a geodesic ball of this radius instead of the whole sphere.
    #[arg(long)]
    radius: Option<f64>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct CompleteArgs {
    #[arg(long, default_value_t = 200)]
    rows: usize,
    #[arg(long, default_value_t = 300)]
    cols: usize,
    #[arg(long, default_value_t = 5)]
    rank: usize,
    #[arg(long, default_value_t = 0.15)]
    density: f64,
    #[arg(long, default_value_t = 0.01)]
    lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Rating file with `item<TAB>user<TAB>rating` lines; replaces the synthetic data.
    #[arg(long)]
    input: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct DiagArgs {
    #[arg(long, value_enum, default_value = "sphere")]
    manifold: ManifoldArg,
    /// Sphere dimension, or the ambient row count of the Grassmannian.
    #[arg(long, default_value_t = 9)]
    dim: usize,
    /// Subspace dimension of the Grassmannian.
    #[arg(long, default_value_t = 2)]
    rank: usize,
    #[arg(long, default_value_t = 0.5)]
    radius: f64,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for the JSON report.
    #[arg(long, default_value = "mcat-diag")]
    out: PathBuf,
}

#[derive(Args)]
struct RerunArgs {
    /// A `run.json` written by an earlier run.
    #[arg(long)]
    sidecar: PathBuf,
    /// Output directory; defaults to the one recorded in the sidecar.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn build_config(cmd: Command) -> Result<ExperimentConfig, Error> {
    Ok(match cmd {
        Command::Frechet(a) => {
            let task = match a.kind {
                Kind::Intrinsic => Task::FrechetIntrinsic,
                Kind::Extrinsic => Task::FrechetExtrinsic,
            };
            ExperimentConfig {
                sphere: SphereSetup {
                    n: a.n,
                    dim: a.dim,
                    ball_radius: a.radius,
                },
                ..a.run.config(task)
            }
        }
        Command::Complete(a) => ExperimentConfig {
            completion: CompletionSetup {
                rows: a.rows,
                cols: a.cols,
                rank: a.rank,
                density: a.density,
                noise: a.noise,
                lambda: a.lambda,
                input: a.input,
            },
            ..a.run.config(Task::Completion)
        },
        Command::Diag(a) => ExperimentConfig {
            task: Task::Diag,
            seed: a.seed,
            output: a.out,
            diag: DiagSetup {
                manifold: match a.manifold {
                    ManifoldArg::Sphere => DiagManifold::Sphere,
                    ManifoldArg::Grassmann => DiagManifold::Grassmann,
                },
                dim: a.dim,
                rank: a.rank,
                radius: a.radius,
                samples: a.samples,
            },
            ..Default::default()
        },
        Command::Rerun(a) => {
            let mut cfg = ExperimentConfig::from_sidecar(&a.sidecar)?;
            if let Some(out) = a.out {
                cfg.output = out;
            }
            cfg
        }
    })
}

/// Worker cap from `MCAT_THREADS`, defaulting to the available parallelism.
fn workers() -> Result<usize, Error> {
    match std::env::var("MCAT_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!(
                "MCAT_THREADS must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn report(sidecar: &Sidecar) {
    if let Some(diag) = &sidecar.diagnostics {
        for (k, v) in diag {
            println!("{k}={v}");
        }
    }
    for s in &sidecar.summaries {
        let aux = s.final_aux.map_or_else(|| "n/a".to_string(), |a| format!("{a:e}"));
        println!(
            "{}: iterations={} f={:e} grad_norm={:e} aux={} stop={:?} trace={}",
            s.solver.name(),
            s.iterations,
            s.final_f,
            s.final_grad_norm,
            aux,
            s.stop,
            s.trace.display()
        );
    }
    for e in &sidecar.errors {
        eprintln!("{} failed: {}", e.solver.name(), e.error);
    }
    println!("sidecar={}", sidecar.config.output.join(SIDECAR_NAME).display());
}

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_SOLVER })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let cfg = match build_config(cli.command) {
        Ok(c) => c,
        Err(e) => return exit_for(&e),
    };
    let workers = match workers() {
        Ok(w) => w,
        Err(e) => return exit_for(&e),
    };
    log::info!("running {:?} with up to {workers} workers", cfg.task);
    match run_experiment(cfg, workers) {
        Ok(sidecar) => {
            report(&sidecar);
            if sidecar.failed() {
                ExitCode::from(EXIT_SOLVER)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => exit_for(&e),
    }
}
