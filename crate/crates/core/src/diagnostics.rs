//! Empirical estimates of the convexity constants used by the theory, each
//! computed over an explicit sampled region.
//!
//! Every sampler draws its points with [`sample_points`], so estimators called
//! with the same `(center, radius, samples, seed)` see the same point set, and
//! a larger `samples` gives a superset of a smaller one. Pair statistics run
//! over all ordered pairs of distinct points; pairs outside the
//! inverse-retraction domain, or closer than [`MIN_PAIR_DIST`], are skipped and
//! counted.

use std::f64::consts::FRAC_PI_4;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{retraction_distance, sample_in_ball, Manifold};
use crate::objective::{estimate_smoothness, Objective, ProxSurrogate};

/// Pairs whose retraction distance falls below this are skipped.
pub const MIN_PAIR_DIST: f64 = 1e-8;

/// Slack allowed by [`check_prop1`] before a pair counts as a violation.
pub const PROP1_SLACK: f64 = 1e-9;

/// Secant weights used by the secant form of the weak-convexity estimate.
const SECANT_LAMBDAS: [f64; 3] = [0.25, 0.5, 0.75];

/// Recorded constants of the convergence theory, all estimated on one region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    /// Bi-Lipschitz constants of the inverse retraction.
    pub k1: f64,
    pub k2: f64,
    /// Strong retraction convexity modulus of `d_R²(·, center)`.
    pub r1: f64,
    /// Bound on `‖∇d_R²(θ, ϑ)‖ / d_R(θ, ϑ)`.
    pub k: f64,
    /// Radius of the sampled neighborhood.
    pub delta: f64,
    /// Gradient smoothness.
    pub l: f64,
    /// Strong convexity, `max(0, −ρ̂)`.
    pub mu: f64,
    /// Weak convexity.
    pub rho: f64,
}

impl TheoryConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [self.k1, self.k2, self.r1, self.k, self.delta, self.l, self.mu, self.rho];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("non-finite theory constant in {self:?}")));
        }
        if self.k1 < 1.0 || self.k2 < 1.0 {
            return Err(Error::Config(format!(
                "bi-Lipschitz constants must be ≥ 1, got {} and {}",
                self.k1, self.k2
            )));
        }
        if !(0.0..=1.0).contains(&self.r1) {
            return Err(Error::Config(format!("R1 must lie in [0, 1], got {}", self.r1)));
        }
        Ok(())
    }
}

/// A pair statistic together with how many pairs produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub pairs: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakConvexity {
    /// From `f(θ2) ≥ f(θ1) + ⟨grad f(θ1), R⁻¹_{θ1} θ2⟩ − (ρ/2) d_R²(θ1, θ2)`.
    pub first_order: f64,
    /// From the secant form along `R_{θ1}(λ R⁻¹_{θ1} θ2)`.
    pub secant: f64,
    /// The larger of the two.
    pub rho: f64,
    pub pairs: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prop1Report {
    pub violations: usize,
    pub pairs: usize,
    pub skipped: usize,
    /// Smallest `h(θ2) − h(θ1) − ⟨grad h(θ1), R⁻¹_{θ1} θ2⟩` seen.
    pub worst_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bilipschitz {
    pub k1: f64,
    pub k2: f64,
    pub pairs: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSlack {
    pub intrinsic: f64,
    pub extrinsic: f64,
    /// Grid points evaluated on each grid.
    pub points: usize,
}

/// `samples` points in the retraction ball of `radius` around `center`.
pub fn sample_points<M: Manifold>(m: &M, center: &M::Point, radius: f64, samples: usize, seed: u64) -> Vec<M::Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| sample_in_ball(m, center, radius, &mut rng))
        .collect()
}

fn check_region(radius: f64, samples: usize) -> Result<()> {
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(Error::Config(format!(
            "radius must be finite and non-negative, got {radius}"
        )));
    }
    if samples < 2 {
        return Err(Error::Config(format!(
            "need at least 2 samples to form pairs, got {samples}"
        )));
    }
    Ok(())
}

fn no_pairs(what: &str, skipped: usize) -> Error {
    Error::Degenerate(format!("no usable sample pairs for {what} ({skipped} skipped)"))
}

/// Runs `pair` over all ordered pairs of distinct points. `pair` returns
/// `Ok(None)` for pairs it skips; domain errors are skipped as well.
fn over_pairs<P>(points: &[P], mut pair: impl FnMut(usize, usize) -> Result<Option<()>>) -> Result<(usize, usize)> {
    let (mut used, mut skipped) = (0, 0);
    for i in 0..points.len() {
        for j in 0..points.len() {
            if i == j {
                continue;
            }
            match pair(i, j) {
                Ok(Some(())) => used += 1,
                Ok(None) => skipped += 1,
                Err(e) if e.is_domain() => skipped += 1,
                Err(e) => return Err(e),
            }
        }
    }
    Ok((used, skipped))
}

fn usable_distance<M: Manifold>(m: &M, p: &M::Point, q: &M::Point) -> Result<Option<f64>> {
    let d = retraction_distance(m, p, q)?;
    Ok((d >= MIN_PAIR_DIST).then_some(d))
}

/// Largest `ρ` for which the sampled pairs violate weak convexity. A value
/// `≤ 0` means `f` looks convex on the sample.
pub fn estimate_weak_convexity<M, F>(
    f: &F,
    m: &M,
    center: &M::Point,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<WeakConvexity>
where
    M: Manifold,
    F: Objective<M> + ?Sized,
{
    check_region(radius, samples)?;
    let points = sample_points(m, center, radius, samples, seed);
    let grads = points.iter().map(|p| f.gradient(m, p)).collect::<Result<Vec<_>>>()?;
    let (mut first_order, mut secant) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let (pairs, skipped) = over_pairs(&points, |i, j| {
        let (p1, p2) = (&points[i], &points[j]);
        let Some(d) = usable_distance(m, p1, p2)? else {
            return Ok(None);
        };
        let v = m.inverse_retract(p1, p2)?;
        // f(θ1) − f(θ2) + ⟨g, v⟩ ≤ (ρ/2) d²
        let gap = f.decrease(m, p1, p2)? + m.inner(p1, &grads[i], &v);
        first_order = first_order.max(2.0 * gap / (d * d));

        let d_back = retraction_distance(m, p2, p1)?;
        if d_back >= MIN_PAIR_DIST {
            for lam in SECANT_LAMBDAS {
                let mid = m.retract(p1, &m.scale(&v, lam));
                // f(mid) − λ f(θ2) − (1 − λ) f(θ1) ≤ (ρ/2) λ(1 − λ) d²
                let excess = -(lam * f.decrease(m, p2, &mid)? + (1.0 - lam) * f.decrease(m, p1, &mid)?);
                secant = secant.max(2.0 * excess / (lam * (1.0 - lam) * d_back * d_back));
            }
        }
        Ok(Some(()))
    })?;
    if pairs == 0 {
        return Err(no_pairs("the weak-convexity estimate", skipped));
    }
    Ok(WeakConvexity {
        first_order,
        secant,
        rho: first_order.max(secant),
        pairs,
        skipped,
    })
}

/// Counts sampled pairs where `h_κ(·, center)` breaks the first-order
/// convexity inequality by more than [`PROP1_SLACK`].
pub fn check_prop1<M, F>(
    f: &F,
    m: &M,
    kappa: f64,
    center: &M::Point,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<Prop1Report>
where
    M: Manifold,
    F: Objective<M> + ?Sized,
{
    check_region(radius, samples)?;
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::Config(format!(
            "κ must be a positive finite number, got {kappa}"
        )));
    }
    let h = ProxSurrogate::new(f, kappa, center);
    let points = sample_points(m, center, radius, samples, seed);
    let grads = points.iter().map(|p| h.gradient(m, p)).collect::<Result<Vec<_>>>()?;
    let mut violations = 0;
    let mut worst_gap = f64::INFINITY;
    let (pairs, skipped) = over_pairs(&points, |i, j| {
        let (p1, p2) = (&points[i], &points[j]);
        if usable_distance(m, p1, p2)?.is_none() {
            return Ok(None);
        }
        let v = m.inverse_retract(p1, p2)?;
        let dec = h.decrease(m, p1, p2)?;
        if !dec.is_finite() {
            return Ok(None);
        }
        // h(θ2) − h(θ1) − ⟨grad h(θ1), v⟩ ≥ 0
        let gap = -dec - m.inner(p1, &grads[i], &v);
        worst_gap = worst_gap.min(gap);
        if gap < -PROP1_SLACK {
            violations += 1;
        }
        Ok(Some(()))
    })?;
    if pairs == 0 {
        return Err(no_pairs("the convexity check", skipped));
    }
    Ok(Prop1Report {
        violations,
        pairs,
        skipped,
        worst_gap,
    })
}

/// Smallest strong-convexity ratio of `d_R²(·, center)` over pairs in the
/// ball of radius `delta`, clamped to `[0, 1]`.
pub fn estimate_strong_retraction_convexity<M: Manifold>(
    m: &M,
    center: &M::Point,
    delta: f64,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    check_region(delta, samples)?;
    let points = sample_points(m, center, delta, samples, seed);
    let mut to_center = Vec::with_capacity(points.len());
    for p in &points {
        let d2 = retraction_distance(m, p, center).map(|d| d * d);
        let g = m.grad_sq_retraction_distance(p, center);
        to_center.push(d2.and_then(|d2| g.map(|g| (d2, g))));
    }
    let mut best = f64::INFINITY;
    let (pairs, skipped) = over_pairs(&points, |i, j| {
        let (p1, p2) = (&points[i], &points[j]);
        let (Ok((d1, g1)), Ok((d2, _))) = (&to_center[i], &to_center[j]) else {
            return Ok(None);
        };
        let Some(d12) = usable_distance(m, p1, p2)? else {
            return Ok(None);
        };
        let v = m.inverse_retract(p1, p2)?;
        best = best.min((d2 - d1 - m.inner(p1, g1, &v)) / (d12 * d12));
        Ok(Some(()))
    })?;
    if pairs == 0 {
        return Err(no_pairs("the strong retraction convexity estimate", skipped));
    }
    Ok(Estimate {
        value: best.clamp(0.0, 1.0),
        pairs,
        skipped,
    })
}

/// Bi-Lipschitz constants of `R_θ⁻¹` on the ball of `radius` around `theta`,
/// each clamped to at least 1.
pub fn estimate_bilipschitz<M: Manifold>(
    m: &M,
    theta: &M::Point,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<Bilipschitz> {
    check_region(radius, samples)?;
    let points = sample_points(m, theta, radius, samples, seed);
    let lifted: Vec<_> = points.iter().map(|p| m.inverse_retract(theta, p)).collect();
    let (mut k1, mut k2) = (1.0_f64, 1.0_f64);
    let (pairs, skipped) = over_pairs(&points, |i, j| {
        let (Ok(v1), Ok(v2)) = (&lifted[i], &lifted[j]) else {
            return Ok(None);
        };
        let Some(d) = usable_distance(m, &points[i], &points[j])? else {
            return Ok(None);
        };
        let lift = m.norm(theta, &m.axpy(v1, -1.0, v2));
        if lift < MIN_PAIR_DIST {
            return Ok(None);
        }
        k1 = k1.max(d / lift);
        k2 = k2.max(lift / d);
        Ok(Some(()))
    })?;
    if pairs == 0 {
        return Err(no_pairs("the bi-Lipschitz estimate", skipped));
    }
    Ok(Bilipschitz { k1, k2, pairs, skipped })
}

/// Largest `‖∇_θ d_R²(θ, ϑ)‖ / d_R(θ, ϑ)` over sampled pairs in the ball.
pub fn estimate_grad_dr_bound<M: Manifold>(
    m: &M,
    center: &M::Point,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    check_region(radius, samples)?;
    let points = sample_points(m, center, radius, samples, seed);
    let mut best = 0.0_f64;
    let (pairs, skipped) = over_pairs(&points, |i, j| {
        let (theta, target) = (&points[i], &points[j]);
        let Some(d) = usable_distance(m, theta, target)? else {
            return Ok(None);
        };
        let g = m.grad_sq_retraction_distance(theta, target)?;
        best = best.max(m.norm(theta, &g) / d);
        Ok(Some(()))
    })?;
    if pairs == 0 {
        return Err(no_pairs("the ∇d_R² bound", skipped));
    }
    Ok(Estimate {
        value: best,
        pairs,
        skipped,
    })
}

/// Worst slack of the strong-convexity inequalities of the intrinsic and
/// extrinsic squared sphere distances, on a grid of triangles with sides
/// `d1, d2 ∈ [0, π/4]` and `d3 ∈ [|d1 − d2|, d1 + d2]`. Points with
/// `sin d1` or `sin d3` below `1e-9` are excluded.
pub fn verify_sphere_inequality_grids(step: f64, mu: f64) -> Result<GridSlack> {
    if !(step > 0.0 && step <= 0.1) {
        return Err(Error::Config(format!("grid step must lie in (0, 0.1], got {step}")));
    }
    if !mu.is_finite() {
        return Err(Error::Config(format!("μ must be finite, got {mu}")));
    }
    let n = (FRAC_PI_4 / step + 1e-9).floor() as usize;
    let axis: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
    let mut out = GridSlack {
        intrinsic: f64::INFINITY,
        extrinsic: f64::INFINITY,
        points: 0,
    };
    for &d1 in &axis {
        for &d2 in &axis {
            let (lo, hi) = ((d1 - d2).abs(), d1 + d2);
            let steps = ((hi - lo) / step + 1e-9).floor() as usize;
            for j in 0..=steps {
                let d3 = lo + j as f64 * step;
                if d1.sin() < 1e-9 || d3.sin() < 1e-9 {
                    continue;
                }
                let cross = d2.cos() - d3.cos() * d1.cos();
                let quad = 0.5 * mu * d3 * d3;
                let intrinsic = d2 * d2 - (d1 * d1 - 2.0 * d1 * d3 * cross / (d1.sin() * d3.sin()) + quad);
                let extrinsic = 2.0 * (1.0 - d2.cos()) - (2.0 * (1.0 - d1.cos()) - 2.0 * d3 * cross / d3.sin() + quad);
                out.intrinsic = out.intrinsic.min(intrinsic);
                out.extrinsic = out.extrinsic.min(extrinsic);
                out.points += 1;
            }
        }
    }
    Ok(out)
}

/// All constants on the ball of `radius` around `center`, from one sample set.
pub fn estimate_theory_constants<M, F>(
    f: &F,
    m: &M,
    center: &M::Point,
    radius: f64,
    samples: usize,
    seed: u64,
) -> Result<TheoryConstants>
where
    M: Manifold,
    F: Objective<M> + ?Sized,
{
    let weak = estimate_weak_convexity(f, m, center, radius, samples, seed)?;
    let r1 = estimate_strong_retraction_convexity(m, center, radius, samples, seed)?;
    let bl = estimate_bilipschitz(m, center, radius, samples, seed)?;
    let k = estimate_grad_dr_bound(m, center, radius, samples, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = estimate_smoothness(f, m, center, radius, samples, &mut rng)?;
    let out = TheoryConstants {
        k1: bl.k1,
        k2: bl.k2,
        r1: r1.value,
        k: k.value,
        delta: radius,
        l,
        mu: (-weak.rho).max(0.0),
        rho: weak.rho,
    };
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::data::generate_sphere_data;
    use crate::frechet::{closed_form_extrinsic_mean, ExtrinsicFrechet, RingObjective};
    use crate::grassmann::Grassmann;
    use crate::objective::ZeroObjective;
    use crate::sphere::{Sphere, SpherePoint};
    use nalgebra::DVector;

    /// `−‖θ − p‖²`, concave in every direction.
    struct NegSqDist(SpherePoint);

    impl Objective<Sphere> for NegSqDist {
        fn value(&self, _m: &Sphere, q: &SpherePoint) -> Result<f64> {
            Ok(-2.0 * (1.0 - q.dot(&self.0)))
        }
        fn gradient(&self, m: &Sphere, q: &SpherePoint) -> Result<DVector<f64>> {
            Ok(m.project_to_tangent(q, &(self.0.coords() * 2.0)))
        }
    }

    #[test]
    fn weak_convexity_examples() {
        let m = Sphere::new(9);
        let c = SpherePoint::basis(10, 0);
        let zero = estimate_weak_convexity(&ZeroObjective, &m, &c, 0.5, 20, 1).unwrap();
        assert!(zero.rho <= 1e-9);

        let data = generate_sphere_data(200, 9, 4).unwrap();
        let mean = closed_form_extrinsic_mean(&data).unwrap();
        let f = ExtrinsicFrechet::new(&data).unwrap();
        let est = estimate_weak_convexity(&f, &m, &mean, PI / 8.0, 101, 2).unwrap();
        assert!(est.rho <= 1e-6, "{est:?}");
        assert_eq!(est.pairs + est.skipped, 101 * 100);

        let concave = estimate_weak_convexity(&NegSqDist(c.clone()), &m, &c, 0.5, 30, 3).unwrap();
        assert!(concave.rho >= 1.0, "{concave:?}");
        assert!(estimate_weak_convexity(&ZeroObjective, &m, &c, 0.5, 1, 1)
            .unwrap_err()
            .is_config());
    }

    #[test]
    fn surrogate_convexity_examples() {
        let m = Sphere::new(9);
        let c = SpherePoint::basis(10, 0);
        let data = generate_sphere_data(50, 9, 5).unwrap();
        let f = ExtrinsicFrechet::new(&data).unwrap();
        let mean = closed_form_extrinsic_mean(&data).unwrap();
        assert_eq!(check_prop1(&f, &m, 0.01, &mean, 0.3, 30, 1).unwrap().violations, 0);

        let ring = RingObjective::new(c.clone(), 0.5, 1.0);
        let rho = estimate_weak_convexity(&ring, &m, &c, 0.3, 40, 7).unwrap().rho;
        let r1 = estimate_strong_retraction_convexity(&m, &c, 0.3, 40, 7).unwrap().value;
        assert!(rho > 0.0 && r1 > 0.0);
        assert_eq!(
            check_prop1(&ring, &m, 2.0 * rho / r1, &c, 0.3, 40, 7)
                .unwrap()
                .violations,
            0
        );
        assert!(check_prop1(&ring, &m, rho / 100.0, &c, 0.3, 40, 7).unwrap().violations > 0);
    }

    #[test]
    fn strong_retraction_convexity_examples() {
        let m = Sphere::new(5);
        let c = SpherePoint::basis(6, 2);
        let near = estimate_strong_retraction_convexity(&m, &c, 0.1, 40, 1).unwrap().value;
        let far = estimate_strong_retraction_convexity(&m, &c, 1.0, 40, 1).unwrap().value;
        assert!(near >= 0.9, "{near}");
        assert!((0.0..=1.0).contains(&far) && far <= near, "{far} {near}");

        let g = Grassmann::new(4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = g.random_point(&mut rng);
        assert!(estimate_strong_retraction_convexity(&g, &p, 0.1, 40, 1).unwrap().value >= 0.9);
    }

    #[test]
    fn bilipschitz_examples() {
        let m = Sphere::new(4);
        let c = SpherePoint::basis(5, 0);
        let tiny = estimate_bilipschitz(&m, &c, 1e-3, 30, 1).unwrap();
        assert!(tiny.k1 <= 1.0 + 1e-3 && tiny.k2 <= 1.0 + 1e-3, "{tiny:?}");
        let wide = estimate_bilipschitz(&m, &c, 0.5, 30, 1).unwrap();
        assert!(
            (1.0..=2.0).contains(&wide.k1) && (1.0..=2.0).contains(&wide.k2),
            "{wide:?}"
        );
        assert!(estimate_bilipschitz(&m, &c, 0.5, 1, 1).unwrap_err().is_config());
    }

    #[test]
    fn grad_dr_bound_examples() {
        let m = Sphere::new(4);
        let c = SpherePoint::basis(5, 1);
        let flat = estimate_grad_dr_bound(&m, &c, 1e-4, 20, 1).unwrap().value;
        assert!((flat - 2.0).abs() < 1e-3, "{flat}");
        let wide = estimate_grad_dr_bound(&m, &c, 0.5, 30, 1).unwrap().value;
        assert!((2.0..=4.0).contains(&wide), "{wide}");
        assert!(matches!(
            estimate_grad_dr_bound(&m, &c, 0.0, 10, 1),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn grid_examples() {
        let g = verify_sphere_inequality_grids(0.05, 1.0).unwrap();
        assert!(g.intrinsic >= -1e-9 && g.extrinsic >= -1e-9, "{g:?}");
        assert_eq!(g, verify_sphere_inequality_grids(0.05, 1.0).unwrap());
        assert!(verify_sphere_inequality_grids(0.05, 3.0).unwrap().extrinsic < 0.0);
        assert!(verify_sphere_inequality_grids(0.2, 1.0).unwrap_err().is_config());
    }

    #[test]
    fn nested_samples_never_decrease_estimates() {
        let m = Sphere::new(3);
        let c = SpherePoint::basis(4, 0);
        let ring = RingObjective::new(c.clone(), 0.3, 1.0);
        let small = estimate_weak_convexity(&ring, &m, &c, 0.4, 10, 9).unwrap();
        let large = estimate_weak_convexity(&ring, &m, &c, 0.4, 25, 9).unwrap();
        assert!(large.rho >= small.rho);
        let small = estimate_grad_dr_bound(&m, &c, 0.4, 10, 9).unwrap();
        let large = estimate_grad_dr_bound(&m, &c, 0.4, 25, 9).unwrap();
        assert!(large.value >= small.value);
    }

    #[test]
    fn theory_constants_are_valid() {
        let m = Sphere::new(4);
        let c = SpherePoint::basis(5, 0);
        let data = generate_sphere_data(30, 4, 2).unwrap();
        let f = ExtrinsicFrechet::new(&data).unwrap();
        let t = estimate_theory_constants(&f, &m, &c, 0.3, 20, 1).unwrap();
        assert!(t.validate().is_ok());
        let bad = TheoryConstants { r1: 1.5, ..t };
        assert!(bad.validate().unwrap_err().is_config());
    }
}
