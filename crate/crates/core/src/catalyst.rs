//! Adaptive smoothing (A1) and the accelerated outer loop (A2).
//!
//! A1 solves the prox subproblem `min h_κ(·, θ)` approximately and doubles
//! `κ` until the candidate passes condition C1 (descent plus adaptive
//! stationarity). A2 alternates an A1 step with an extrapolated prox step at
//! the fixed smoothing level `κ_cvx`, keeping whichever candidate has the
//! smaller objective value.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{retraction_distance, Manifold};
use crate::objective::{estimate_smoothness, Objective, ProxSurrogate};
use crate::solver::{check_prox_args, elapsed, prox_descent, LineSearchConfig, StopReason};

/// Stationarity floor used when a candidate coincides with its prox-center.
pub const EPS_ABS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalystConfig {
    pub kappa0: f64,
    /// Smoothing level of the extrapolated subproblem; estimated from the
    /// objective when unset.
    pub kappa_cvx: Option<f64>,
    /// Inner budget of A1.
    pub t: usize,
    /// Scale `S` of the `⌈S·ln(k+1)⌉` budget of the extrapolated subproblem.
    pub s: usize,
    pub eps: f64,
    pub max_outer: usize,
    pub max_doublings: usize,
    pub line_search: LineSearchConfig,
}

impl Default for CatalystConfig {
    fn default() -> Self {
        Self {
            kappa0: 0.1,
            kappa_cvx: None,
            t: 5,
            s: 10,
            eps: 1e-6,
            max_outer: 100,
            max_doublings: 40,
            line_search: LineSearchConfig::default(),
        }
    }
}

impl CatalystConfig {
    pub fn validate(&self) -> Result<()> {
        check_prox_args(self.kappa0, self.t)?;
        if let Some(k) = self.kappa_cvx {
            if !(k > 0.0) || !k.is_finite() {
                return Err(Error::Config(format!("κ_cvx must be positive, got {k}")));
            }
        }
        if self.s == 0 || self.max_outer == 0 || self.max_doublings == 0 {
            return Err(Error::Config("S, max_outer and max_doublings must be positive".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("ε must be positive, got {}", self.eps)));
        }
        self.line_search.validate()
    }

    /// `⌈S·ln(k+1)⌉`, at least one step.
    pub fn tilde_budget(&self, k: usize) -> usize {
        ((self.s as f64 * ((k + 1) as f64).ln()).ceil() as usize).max(1)
    }
}

/// `α' = (√(α⁴ + 4α²) − α²)/2`, evaluated as `2/(1 + √(1 + 4/α²))`.
pub fn alpha_next(alpha: f64) -> f64 {
    2.0 / (1.0 + (1.0 + 4.0 / (alpha * alpha)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C1Report {
    pub descent: bool,
    pub stationarity: bool,
    /// `‖grad h_κ(θ̄, θ_prev)‖`
    pub grad_h: f64,
    /// `d_R(θ̄, θ_prev)`
    pub dist: f64,
}

impl C1Report {
    pub fn holds(&self) -> bool {
        self.descent && self.stationarity
    }

    fn failed() -> Self {
        Self {
            descent: false,
            stationarity: false,
            grad_h: f64::NAN,
            dist: f64::NAN,
        }
    }
}

/// Checks C1 for the candidate `theta_bar` of the subproblem centred at
/// `theta_prev`. Descent uses `h_κ(θ_prev, θ_prev) = f(θ_prev)`, so it reads
/// `f(θ_prev) − f(θ̄) ≥ (κ/2) d_R²(θ̄, θ_prev)`. Leaving the inverse-retraction
/// domain counts as a failed check.
pub fn check_c1<M, F>(f: &F, m: &M, kappa: f64, theta_bar: &M::Point, theta_prev: &M::Point) -> Result<C1Report>
where
    M: Manifold,
    F: Objective<M> + ?Sized,
{
    let identical = m.point_distance(theta_bar, theta_prev) == 0.0;
    let dist = if identical {
        0.0
    } else {
        match retraction_distance(m, theta_bar, theta_prev) {
            Ok(d) => d,
            Err(e) if e.is_domain() => return Ok(C1Report::failed()),
            Err(e) => return Err(e),
        }
    };
    let h = ProxSurrogate::new(f, kappa, theta_prev);
    let grad_h = match h.gradient(m, theta_bar) {
        Ok(g) => m.norm(theta_bar, &g),
        Err(e) if e.is_domain() => return Ok(C1Report::failed()),
        Err(e) => return Err(e),
    };
    let descent = identical || f.decrease(m, theta_prev, theta_bar)? >= 0.5 * kappa * dist * dist;
    let stationarity = if identical {
        grad_h <= EPS_ABS
    } else {
        grad_h < kappa * dist
    };
    Ok(C1Report {
        descent,
        stationarity,
        grad_h,
        dist,
    })
}

#[derive(Debug, Clone)]
pub struct A1Output<P> {
    pub theta_bar: P,
    pub kappa: f64,
    pub doublings: usize,
    pub c1: C1Report,
    /// The inner solver could not move from `θ` at all, so no value of `κ`
    /// can produce a different candidate. `c1` may then fail.
    pub stalled: bool,
}

/// Algorithm A1: solve the subproblem with `T` inner steps, doubling `κ`
/// until C1 holds.
pub fn a1_adapt<M, F>(
    f: &F,
    m: &M,
    theta: &M::Point,
    kappa_in: f64,
    t: usize,
    max_doublings: usize,
    cfg: &LineSearchConfig,
) -> Result<A1Output<M::Point>>
where
    M: Manifold,
    F: Objective<M> + ?Sized,
{
    check_prox_args(kappa_in, t)?;
    let mut kappa = kappa_in;
    for doublings in 0..=max_doublings {
        let solve = prox_descent(f, m, kappa, theta, theta, t, cfg, &mut |_, _| Ok(false))?;
        let c1 = check_c1(f, m, kappa, &solve.point, theta)?;
        if c1.holds() || (solve.steps == 0 && solve.stalled) {
            return Ok(A1Output {
                stalled: !c1.holds(),
                theta_bar: solve.point,
                kappa,
                doublings,
                c1,
            });
        }
        log::trace!("C1 failed at κ = {kappa:e} ({c1:?}); doubling");
        if doublings < max_doublings {
            kappa *= 2.0;
        }
    }
    Err(Error::Adaptation {
        doublings: max_doublings,
        kappa,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Bar,
    Tilde,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub k: usize,
    /// `f(θ_k)`
    pub f_value: f64,
    /// `‖grad f(θ̄_k)‖`
    pub grad_norm: f64,
    pub kappa: f64,
    pub doublings: usize,
    pub branch: Branch,
    pub c2_met: bool,
    pub tilde_steps: usize,
    pub extrapolation_skipped: bool,
    pub alpha: f64,
    pub elapsed_ns: u64,
    pub aux: Option<f64>,
}

/// The inputs and output of one A1 call, kept so C1 can be re-checked later.
#[derive(Debug, Clone)]
pub struct A1Checkpoint<P> {
    pub theta_prev: P,
    pub theta_bar: P,
    pub kappa: f64,
}

#[derive(Debug, Clone)]
pub struct OuterTrace<P> {
    pub records: Vec<OuterRecord>,
    pub checkpoints: Vec<A1Checkpoint<P>>,
    pub kappa_cvx: f64,
    pub f0: f64,
    pub stop: StopReason,
}

/// Default `κ_cvx`: the objective's own smoothness constant, or an empirical
/// estimate around `θ0`.
pub fn default_kappa_cvx<M, F>(f: &F, m: &M, theta0: &M::Point) -> f64
where
    M: Manifold,
    F: Objective<M> + ?Sized,
{
    if let Some(l) = f.smoothness().filter(|l| *l > 0.0 && l.is_finite()) {
        return l;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    match estimate_smoothness(f, m, theta0, 0.5, 16, &mut rng) {
        Ok(l) if l > 0.0 && l.is_finite() => l,
        other => {
            log::warn!("smoothness estimate unavailable ({other:?}); using κ_cvx = 1");
            1.0
        }
    }
}

pub fn a2_run<M, F>(f: &F, m: &M, theta0: &M::Point, cfg: &CatalystConfig) -> Result<(M::Point, OuterTrace<M::Point>)>
where
    M: Manifold,
    F: Objective<M> + ?Sized,
{
    a2_run_observed(f, m, theta0, cfg, &mut |_| None)
}

/// Algorithm A2 with a callback supplying the `aux` value of each `θ_k`.
pub fn a2_run_observed<M, F>(
    f: &F,
    m: &M,
    theta0: &M::Point,
    cfg: &CatalystConfig,
    observe: &mut dyn FnMut(&M::Point) -> Option<f64>,
) -> Result<(M::Point, OuterTrace<M::Point>)>
where
    M: Manifold,
    F: Objective<M> + ?Sized,
{
    cfg.validate()?;
    let clock = Instant::now();
    let kappa_cvx = cfg.kappa_cvx.unwrap_or_else(|| default_kappa_cvx(f, m, theta0));
    let ls = &cfg.line_search;

    let mut theta = theta0.clone();
    let mut anchor = theta0.clone();
    let mut alpha = 1.0_f64;
    let mut kappa = cfg.kappa0;
    let mut trace = OuterTrace {
        records: Vec::new(),
        checkpoints: Vec::new(),
        kappa_cvx,
        f0: f.value(m, theta0)?,
        stop: StopReason::MaxIterations,
    };

    for k in 1..=cfg.max_outer {
        let a1 = a1_adapt(f, m, &theta, kappa, cfg.t, cfg.max_doublings, ls)?;
        kappa = a1.kappa;

        // Extrapolated prox-center ϑ_k = R_{θ_{k−1}}(α_k R⁻¹_{θ_{k−1}} ϑ̃_{k−1}).
        let (center, skipped) = match m.inverse_retract(&theta, &anchor) {
            Ok(v) => (m.retract(&theta, &m.scale(&v, alpha)), false),
            Err(e) if e.is_domain() => {
                log::info!("k = {k}: extrapolation left the domain; using θ_(k−1) as prox-center");
                (theta.clone(), true)
            }
            Err(e) => return Err(e),
        };

        let c2_scale = kappa_cvx / (k as f64 + 1.0);
        let c2 = |p: &M::Point, g: &M::Tangent| -> Result<bool> {
            let gn = m.norm(p, g);
            if m.point_distance(p, &center) == 0.0 {
                return Ok(gn <= EPS_ABS);
            }
            match retraction_distance(m, p, &center) {
                Ok(d) => Ok(gn < c2_scale * d),
                Err(e) if e.is_domain() => Ok(false),
                Err(e) => Err(e),
            }
        };
        let mut done = |p: &M::Point, g: &M::Tangent| c2(p, g);
        let tilde = match prox_descent(f, m, kappa_cvx, &center, &center, cfg.tilde_budget(k), ls, &mut done) {
            Ok(s) => {
                let met = c2(&s.point, &s.grad_h)?;
                Some((s.point, s.steps, met))
            }
            Err(e) if e.is_domain() => {
                log::info!("k = {k}: extrapolated subproblem left the domain; keeping θ̄_k");
                None
            }
            Err(e) => return Err(e),
        };

        let mut branch = Branch::Bar;
        let (mut c2_met, mut tilde_steps) = (false, 0);
        let mut next = a1.theta_bar.clone();
        if let Some((theta_tilde, steps, met)) = tilde {
            c2_met = met;
            tilde_steps = steps;
            // ϑ̃_k = R_{θ_{k−1}}(R⁻¹_{θ_{k−1}} θ̃_k / α_k)
            anchor = match m.inverse_retract(&theta, &theta_tilde) {
                Ok(v) => m.retract(&theta, &m.scale(&v, 1.0 / alpha)),
                Err(e) if e.is_domain() => theta_tilde.clone(),
                Err(e) => return Err(e),
            };
            let better = match f.decrease(m, &a1.theta_bar, &theta_tilde) {
                Ok(d) => d > 0.0,
                Err(e) if e.is_domain() => false,
                Err(e) => return Err(e),
            };
            if better {
                branch = Branch::Tilde;
                next = theta_tilde;
            }
        } else {
            anchor = a1.theta_bar.clone();
        }
        let used_alpha = alpha;
        alpha = alpha_next(alpha);

        let grad_bar = f.gradient(m, &a1.theta_bar)?;
        let grad_norm = m.norm(&a1.theta_bar, &grad_bar);
        trace.checkpoints.push(A1Checkpoint {
            theta_prev: theta.clone(),
            theta_bar: a1.theta_bar,
            kappa,
        });
        theta = next;
        trace.records.push(OuterRecord {
            k,
            f_value: f.value(m, &theta)?,
            grad_norm,
            kappa,
            doublings: a1.doublings,
            branch,
            c2_met,
            tilde_steps,
            extrapolation_skipped: skipped,
            alpha: used_alpha,
            elapsed_ns: elapsed(&clock),
            aux: observe(&theta),
        });

        if grad_norm < cfg.eps {
            trace.stop = StopReason::Converged;
            break;
        }
        if a1.stalled && branch == Branch::Bar {
            log::info!("k = {k}: no further progress is numerically possible; stopping");
            trace.stop = StopReason::Stalled;
            break;
        }
    }
    Ok((theta, trace))
}

/// Whether `‖grad f(θ)‖ ≤ ‖grad h_κ(θ, ϑ)‖ + κ·K·d_R(θ, ϑ)`.
pub fn lemma2_bound_check<M, F>(
    f: &F,
    m: &M,
    kappa: f64,
    theta: &M::Point,
    center: &M::Point,
    k_bound: f64,
) -> Result<bool>
where
    M: Manifold,
    F: Objective<M> + ?Sized,
{
    let gf = f.gradient(m, theta)?;
    let h = ProxSurrogate::new(f, kappa, center);
    let gh = h.gradient(m, theta)?;
    let d = retraction_distance(m, theta, center)?;
    Ok(m.norm(theta, &gf) <= m.norm(theta, &gh) + kappa * k_bound * d)
}
