//! Riemannian gradient descent with Armijo backtracking, and the warm-started
//! prox subproblem solver used by the outer loops in [`crate::catalyst`].

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::Manifold;
use crate::objective::{Objective, ProxSurrogate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineSearchConfig {
    pub initial_step: f64,
    pub shrink: f64,
    /// Armijo constant `c` in `f(p) − f(next) ≥ c·t·‖g‖²`.
    pub sufficient_decrease: f64,
    pub min_step: f64,
    /// When set, an accepted step whose decrease is below this value is
    /// reported as a stall.
    pub decrease_floor: Option<f64>,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            shrink: 0.95,
            sufficient_decrease: 1e-4,
            min_step: 1e-12,
            decrease_floor: None,
        }
    }
}

impl LineSearchConfig {
    /// Absolute decrease floor used by the reference experiments.
    pub const REFERENCE_FLOOR: f64 = 1e-5 * 0.95;

    pub fn validate(&self) -> Result<()> {
        let ok = self.shrink > 0.0
            && self.shrink < 1.0
            && self.initial_step.is_finite()
            && self.min_step > 0.0
            && self.min_step < self.initial_step
            && self.sufficient_decrease > 0.0
            && self.sufficient_decrease < 1.0
            && self.decrease_floor.map_or(true, |f| f >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid line search settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone)]
pub struct ArmijoStep<P> {
    pub point: P,
    /// Accepted step length; `0` signals a stall and `point` is the input.
    pub step: f64,
    pub decrease: f64,
}

impl<P> ArmijoStep<P> {
    pub fn stalled(&self) -> bool {
        self.step == 0.0
    }
}

/// One backtracking step along `−g` from `p`, where `g = grad f(p)`.
pub fn armijo_step<M, F>(
    f: &F,
    m: &M,
    p: &M::Point,
    g: &M::Tangent,
    cfg: &LineSearchConfig,
) -> Result<ArmijoStep<M::Point>>
where
    M: Manifold,
    F: Objective<M> + ?Sized,
{
    let gsq = m.inner(p, g, g);
    if !(gsq > 0.0) {
        return Err(Error::NoDescent);
    }
    let stall = || ArmijoStep {
        point: p.clone(),
        step: 0.0,
        decrease: 0.0,
    };
    let mut t = cfg.initial_step;
    let mut retried = false;
    while t > cfg.min_step {
        let candidate = m.retract(p, &m.scale(g, -t));
        match f.decrease(m, p, &candidate) {
            Ok(dec) if dec.is_finite() && dec >= cfg.sufficient_decrease * t * gsq => {
                if cfg.decrease_floor.is_some_and(|floor| dec < floor) {
                    return Ok(stall());
                }
                return Ok(ArmijoStep {
                    point: candidate,
                    step: t,
                    decrease: dec,
                });
            }
            Ok(_) => {}
            Err(e) if e.is_domain() && !retried => {
                log::debug!("line search left the domain at t = {t:e}; shrinking once");
                retried = true;
            }
            Err(e) => return Err(e),
        }
        t *= cfg.shrink;
    }
    Ok(stall())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverRecord {
    pub iter: usize,
    pub f_value: f64,
    pub grad_norm: f64,
    pub step_size: f64,
    pub elapsed_ns: u64,
    pub aux: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub records: Vec<SolverRecord>,
    pub stop: StopReason,
}

impl SolverTrace {
    pub fn last(&self) -> &SolverRecord {
        self.records.last().expect("a trace always has its starting record")
    }
}

pub fn rgd_run<M, F>(
    f: &F,
    m: &M,
    p0: &M::Point,
    iters: usize,
    cfg: &LineSearchConfig,
    eps: f64,
) -> Result<(M::Point, SolverTrace)>
where
    M: Manifold,
    F: Objective<M> + ?Sized,
{
    rgd_run_observed(f, m, p0, iters, cfg, eps, &mut |_| None)
}

/// [`rgd_run`] with a callback that supplies the `aux` column for each
/// recorded iterate.
pub fn rgd_run_observed<M, F>(
    f: &F,
    m: &M,
    p0: &M::Point,
    iters: usize,
    cfg: &LineSearchConfig,
    eps: f64,
    observe: &mut dyn FnMut(&M::Point) -> Option<f64>,
) -> Result<(M::Point, SolverTrace)>
where
    M: Manifold,
    F: Objective<M> + ?Sized,
{
    cfg.validate()?;
    let clock = Instant::now();
    let mut p = p0.clone();
    let mut g = f.gradient(m, &p)?;
    let mut gn = m.norm(&p, &g);
    let mut records = vec![SolverRecord {
        iter: 0,
        f_value: f.value(m, &p)?,
        grad_norm: gn,
        step_size: 0.0,
        elapsed_ns: elapsed(&clock),
        aux: observe(&p),
    }];
    let mut stop = StopReason::MaxIterations;
    for iter in 1..=iters {
        if gn < eps {
            stop = StopReason::Converged;
            break;
        }
        let step = match armijo_step(f, m, &p, &g, cfg) {
            Ok(s) => s,
            Err(Error::NoDescent) => {
                stop = StopReason::Converged;
                break;
            }
            Err(e) => return Err(e),
        };
        if step.stalled() {
            stop = StopReason::Stalled;
            break;
        }
        p = step.point;
        g = f.gradient(m, &p)?;
        gn = m.norm(&p, &g);
        records.push(SolverRecord {
            iter,
            f_value: f.value(m, &p)?,
            grad_norm: gn,
            step_size: step.step,
            elapsed_ns: elapsed(&clock),
            aux: observe(&p),
        });
    }
    if stop == StopReason::MaxIterations && gn < eps {
        stop = StopReason::Converged;
    }
    Ok((p, SolverTrace { records, stop }))
}

/// Result of a descent run on `h_κ(·, ϑ)`.
#[derive(Debug, Clone)]
pub struct ProxSolve<P, T> {
    pub point: P,
    /// `grad h_κ(point, ϑ)`.
    pub grad_h: T,
    pub steps: usize,
    pub stalled: bool,
}

/// Runs up to `max_steps` Armijo steps on `h_κ(·, center)` from `start`,
/// calling `done(point, grad_h)` after every accepted step and stopping as
/// soon as it returns `true`.
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
pub fn prox_descent<M, F>(
    f: &F,
    m: &M,
    kappa: f64,
    center: &M::Point,
    start: &M::Point,
    max_steps: usize,
    cfg: &LineSearchConfig,
    done: &mut dyn FnMut(&M::Point, &M::Tangent) -> Result<bool>,
) -> Result<ProxSolve<M::Point, M::Tangent>>
where
    M: Manifold,
    F: Objective<M> + ?Sized,
{
    let h = ProxSurrogate::new(f, kappa, center);
    let mut p = start.clone();
    let mut g = h.gradient(m, &p)?;
    let mut steps = 0;
    let mut stalled = false;
    while steps < max_steps {
        let step = match armijo_step(&h, m, &p, &g, cfg) {
            Ok(s) => s,
            Err(Error::NoDescent) => break,
            Err(e) => return Err(e),
        };
        if step.stalled() {
            stalled = true;
            break;
        }
        p = step.point;
        g = h.gradient(m, &p)?;
        steps += 1;
        if done(&p, &g)? {
            break;
        }
    }
    Ok(ProxSolve {
        point: p,
        grad_h: g,
        steps,
        stalled,
    })
}

/// `T` descent steps on `h_κ(·, ϑ)` warm-started at the prox-center `ϑ`;
/// returns the last iterate.
pub fn solve_subproblem<M, F>(
    f: &F,
    m: &M,
    kappa: f64,
    center: &M::Point,
    t: usize,
    cfg: &LineSearchConfig,
) -> Result<M::Point>
where
    M: Manifold,
    F: Objective<M> + ?Sized,
{
    check_prox_args(kappa, t)?;
    Ok(prox_descent(f, m, kappa, center, center, t, cfg, &mut |_, _| Ok(false))?.point)
}

pub(crate) fn check_prox_args(kappa: f64, t: usize) -> Result<()> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::Config(format!("κ must be positive and finite, got {kappa}")));
    }
    if t == 0 {
        return Err(Error::Config("the inner budget T must be at least 1".into()));
    }
    Ok(())
}

pub(crate) fn elapsed(clock: &Instant) -> u64 {
    u64::try_from(clock.elapsed().as_nanos()).unwrap_or(u64::MAX)
}
