//! The objective contract, the proximal surrogate `h_κ`, and generic checks
//! that only need value and gradient.

use rand::Rng;

use crate::error::{Error, Result};
use crate::manifold::{retraction_distance, sample_in_ball, Manifold};

pub trait Objective<M: Manifold>: Sync {
    fn value(&self, m: &M, p: &M::Point) -> Result<f64>;

    /// Riemannian gradient, a tangent vector at `p`.
    fn gradient(&self, m: &M, p: &M::Point) -> Result<M::Tangent>;

    /// `f(from) − f(to)`. Objectives whose values are large compared with
    /// the changes a solver needs to resolve override this with a form that
    /// avoids the cancellation.
    fn decrease(&self, m: &M, from: &M::Point, to: &M::Point) -> Result<f64> {
        Ok(self.value(m, from)? - self.value(m, to)?)
    }

    /// Known or estimated Lipschitz constant of the gradient, if any.
    fn smoothness(&self) -> Option<f64> {
        None
    }
}

impl<M: Manifold, F: Objective<M> + ?Sized> Objective<M> for &F {
    fn value(&self, m: &M, p: &M::Point) -> Result<f64> {
        (**self).value(m, p)
    }
    fn gradient(&self, m: &M, p: &M::Point) -> Result<M::Tangent> {
        (**self).gradient(m, p)
    }
    fn decrease(&self, m: &M, from: &M::Point, to: &M::Point) -> Result<f64> {
        (**self).decrease(m, from, to)
    }
    fn smoothness(&self) -> Option<f64> {
        (**self).smoothness()
    }
}

/// `h_κ(θ, ϑ) = f(θ) + (κ/2) d_R²(θ, ϑ)` for a fixed prox-center `ϑ`.
///
/// Points outside the inverse-retraction domain of the center evaluate to
/// `+∞`, so a line search simply rejects steps that leave the domain.
pub struct ProxSurrogate<'a, M: Manifold, F: ?Sized> {
    pub f: &'a F,
    pub kappa: f64,
    pub center: &'a M::Point,
}

impl<'a, M: Manifold, F: Objective<M> + ?Sized> ProxSurrogate<'a, M, F> {
    pub fn new(f: &'a F, kappa: f64, center: &'a M::Point) -> Self {
        Self { f, kappa, center }
    }

    /// `d_R²(θ, ϑ)`, or `None` outside the domain.
    fn dist_sq(&self, m: &M, theta: &M::Point) -> Option<f64> {
        retraction_distance(m, theta, self.center).ok().map(|d| d * d)
    }
}

impl<'a, M: Manifold, F: Objective<M> + ?Sized> Objective<M> for ProxSurrogate<'a, M, F> {
    fn value(&self, m: &M, theta: &M::Point) -> Result<f64> {
        match self.dist_sq(m, theta) {
            Some(d2) => Ok(self.f.value(m, theta)? + 0.5 * self.kappa * d2),
            None => Ok(f64::INFINITY),
        }
    }

    fn gradient(&self, m: &M, theta: &M::Point) -> Result<M::Tangent> {
        let g = self.f.gradient(m, theta)?;
        let gd = m.grad_sq_retraction_distance(theta, self.center)?;
        Ok(m.axpy(&g, 0.5 * self.kappa, &gd))
    }

    fn decrease(&self, m: &M, from: &M::Point, to: &M::Point) -> Result<f64> {
        let (Some(d_from), Some(d_to)) = (self.dist_sq(m, from), self.dist_sq(m, to)) else {
            return Ok(f64::NEG_INFINITY);
        };
        Ok(self.f.decrease(m, from, to)? + 0.5 * self.kappa * (d_from - d_to))
    }

    fn smoothness(&self) -> Option<f64> {
        self.f.smoothness().map(|l| l + self.kappa)
    }
}

/// The zero function; useful as a neutral element in tests.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroObjective;

impl<M: Manifold> Objective<M> for ZeroObjective {
    fn value(&self, _m: &M, _p: &M::Point) -> Result<f64> {
        Ok(0.0)
    }
    fn gradient(&self, m: &M, p: &M::Point) -> Result<M::Tangent> {
        Ok(m.zero_tangent(p))
    }
    fn smoothness(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Largest relative disagreement between `⟨grad f(p), v⟩` and a central
/// difference of `t ↦ f(R_p(t v))` over `trials` random unit tangents.
pub fn gradient_check<M, F, R>(f: &F, m: &M, p: &M::Point, h: f64, trials: usize, rng: &mut R) -> Result<f64>
where
    M: Manifold,
    F: Objective<M> + ?Sized,
    R: Rng + ?Sized,
{
    if !(h > 0.0) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let g = f.gradient(m, p)?;
    let mut worst = 0.0_f64;
    for _ in 0..trials.max(1) {
        let v = m.random_tangent(p, rng);
        let analytic = m.inner(p, &g, &v);
        let plus = m.retract(p, &m.scale(&v, h));
        let minus = m.retract(p, &m.scale(&v, -h));
        let fd = f.decrease(m, &plus, &minus)? / (2.0 * h);
        worst = worst.max((analytic - fd).abs() / (1.0 + analytic.abs()));
    }
    Ok(worst)
}

/// Empirical gradient Lipschitz constant: the largest
/// `‖grad f(p) − P_p grad f(q)‖ / d_R(p, q)` over pairs sampled in a ball.
pub fn estimate_smoothness<M, F, R>(
    f: &F,
    m: &M,
    center: &M::Point,
    radius: f64,
    samples: usize,
    rng: &mut R,
) -> Result<f64>
where
    M: Manifold,
    F: Objective<M> + ?Sized,
    R: Rng + ?Sized,
{
    let points: Vec<M::Point> = (0..samples.max(2))
        .map(|_| sample_in_ball(m, center, radius, rng))
        .collect();
    let grads = points.iter().map(|p| f.gradient(m, p)).collect::<Result<Vec<_>>>()?;
    let mut best = 0.0_f64;
    let mut pairs = 0usize;
    for i in 0..points.len() {
        for j in 0..points.len() {
            if i == j {
                continue;
            }
            let Ok(d) = retraction_distance(m, &points[i], &points[j]) else {
                continue;
            };
            if d < 1e-8 {
                continue;
            }
            let moved = m.project_to_tangent(&points[i], &grads[j]);
            let diff = m.axpy(&grads[i], -1.0, &moved);
            best = best.max(m.norm(&points[i], &diff) / d);
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(Error::Degenerate(
            "no usable sample pairs for the smoothness estimate".into(),
        ));
    }
    Ok(best)
}
