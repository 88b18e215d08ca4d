//! The manifold contract every solver in this crate is written against.
//!
//! A manifold here is anything with a retraction `R_p(v)`, a (local) inverse
//! retraction, and an inner product on tangent spaces. Points and tangent
//! vectors are stored in ambient coordinates, so tangent arithmetic is plain
//! vector arithmetic and "ambient differences" are meaningful for finite
//! difference checks.

use std::fmt::Debug;

use rand::Rng;

use crate::error::Result;

/// Numerical tolerances shared by the concrete manifolds.
pub mod tol {
    /// Membership tolerance (unit norm on the sphere, orthonormality on
    /// canonical Grassmann representatives).
    pub const MEMBERSHIP: f64 = 1e-9;
    /// Tangency tolerance (`p·v = 0`, `UᵀH = 0`).
    pub const TANGENT: f64 = 1e-9;
    /// Guard on inverse-retraction denominators.
    pub const DOMAIN: f64 = 1e-12;
    /// Smallest singular value accepted for a full-rank Grassmann representative.
    pub const RANK: f64 = 1e-8;
}

pub trait Manifold: Sync {
    type Point: Clone + Debug + Send + Sync;
    type Tangent: Clone + Debug + Send + Sync;

    /// Dimension of the ambient representation (number of stored coordinates).
    fn ambient_dim(&self) -> usize;

    fn retract(&self, p: &Self::Point, v: &Self::Tangent) -> Self::Point;

    /// Tangent vector `v` at `p` with `retract(p, v) = q`. Fails with
    /// [`Error::Domain`](crate::Error::Domain) outside the inverse-retraction domain.
    fn inverse_retract(&self, p: &Self::Point, q: &Self::Point) -> Result<Self::Tangent>;

    fn inner(&self, p: &Self::Point, u: &Self::Tangent, v: &Self::Tangent) -> f64;

    fn norm(&self, p: &Self::Point, v: &Self::Tangent) -> f64 {
        self.inner(p, v, v).max(0.0).sqrt()
    }

    /// Orthogonal projection of an ambient vector onto the tangent space at `p`.
    fn project_to_tangent(&self, p: &Self::Point, ambient: &Self::Tangent) -> Self::Tangent;

    fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Point;

    /// A tangent vector at `p` with unit norm, uniformly distributed in direction.
    fn random_tangent<R: Rng + ?Sized>(&self, p: &Self::Point, rng: &mut R) -> Self::Tangent;

    fn zero_tangent(&self, p: &Self::Point) -> Self::Tangent;

    fn scale(&self, v: &Self::Tangent, alpha: f64) -> Self::Tangent;

    /// `u + alpha * v`
    fn axpy(&self, u: &Self::Tangent, alpha: f64, v: &Self::Tangent) -> Self::Tangent;

    /// `q - p` in ambient coordinates.
    fn ambient_difference(&self, p: &Self::Point, q: &Self::Point) -> Self::Tangent;

    /// Frobenius norm of an ambient vector.
    fn ambient_norm(&self, v: &Self::Tangent) -> f64;

    /// Frobenius distance between the stored representatives.
    fn point_distance(&self, p: &Self::Point, q: &Self::Point) -> f64 {
        self.ambient_norm(&self.ambient_difference(p, q))
    }

    /// Riemannian gradient of `θ ↦ d_R²(θ, center)` at `theta`, where
    /// `d_R(θ, ϑ) = ‖R_θ⁻¹ ϑ‖`.
    fn grad_sq_retraction_distance(&self, theta: &Self::Point, center: &Self::Point) -> Result<Self::Tangent>;
}

/// `d_R(p, q) = ‖R_p⁻¹ q‖`. Not symmetric in general.
pub fn retraction_distance<M: Manifold>(m: &M, p: &M::Point, q: &M::Point) -> Result<f64> {
    let v = m.inverse_retract(p, q)?;
    Ok(m.norm(p, &v))
}

/// Residuals of the two retraction axioms at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxiomReport {
    /// Distance between `R_p(0)` and `p`.
    pub zero_residual: f64,
    /// Worst deviation of the central-difference derivative of
    /// `t ↦ R_p(t v)` at `t = 0` from `v`, over the sampled unit tangents.
    pub diff_residual: f64,
}

pub fn check_retraction_axioms<M: Manifold, R: Rng + ?Sized>(
    m: &M,
    p: &M::Point,
    trials: usize,
    fd_step: f64,
    rng: &mut R,
) -> AxiomReport {
    let zero = m.zero_tangent(p);
    let zero_residual = m.point_distance(&m.retract(p, &zero), p);

    let mut diff_residual = 0.0_f64;
    for _ in 0..trials.max(1) {
        let v = m.random_tangent(p, rng);
        let forward = m.retract(p, &m.scale(&v, fd_step));
        let backward = m.retract(p, &m.scale(&v, -fd_step));
        let fd = m.scale(&m.ambient_difference(&backward, &forward), 0.5 / fd_step);
        let residual = m.ambient_norm(&m.axpy(&fd, -1.0, &v));
        diff_residual = diff_residual.max(residual);
    }
    AxiomReport {
        zero_residual,
        diff_residual,
    }
}

/// Point reached from `center` by a random direction with length drawn
/// uniformly from `[0, radius]`.
pub fn sample_in_ball<M: Manifold, R: Rng + ?Sized>(m: &M, center: &M::Point, radius: f64, rng: &mut R) -> M::Point {
    let dir = m.random_tangent(center, rng);
    let len = rng.random::<f64>() * radius;
    m.retract(center, &m.scale(&dir, len))
}
