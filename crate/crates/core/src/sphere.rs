//! The unit sphere `S^d ⊂ R^{d+1}` with the projection retraction
//! `R_p(v) = (p + v)/|p + v|` and its inverse `R_p⁻¹(q) = q/(pᵀq) − p`.
//!
//! Exponential and log maps are provided for the intrinsic (geodesic)
//! Fréchet objective. Since `|p + v|² = 1 + |v|² ≥ 1` for tangent `v`, the
//! retraction is defined on the whole tangent space; its image is the open
//! hemisphere centred at `p`, which is exactly the inverse-retraction domain.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::manifold::{tol, Manifold};

#[derive(Debug, Clone, PartialEq)]
pub struct SpherePoint(DVector<f64>);

impl SpherePoint {
    /// Wraps a vector that must already have unit norm.
    pub fn new(x: DVector<f64>) -> Result<Self> {
        let n = x.norm();
        if !n.is_finite() || (n - 1.0).abs() > tol::MEMBERSHIP {
            return Err(Error::Config(format!("sphere point has norm {n}, expected 1")));
        }
        Ok(Self(x))
    }

    /// Normalizes `x` onto the sphere.
    pub fn normalize(x: DVector<f64>) -> Result<Self> {
        let n = x.norm();
        if !(n > tol::DOMAIN) || !n.is_finite() {
            return Err(Error::Degenerate(format!("cannot normalize vector of norm {n}")));
        }
        Ok(Self(x / n))
    }

    pub fn from_slice(x: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(x))
    }

    /// `i`-th standard basis vector of `R^dim`.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut x = DVector::zeros(dim);
        x[i] = 1.0;
        Self(x)
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &SpherePoint) -> f64 {
        self.0.dot(&other.0)
    }
}

/// `S^d` embedded in `R^{d+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sphere {
    d: usize,
}

impl Sphere {
    /// The sphere of intrinsic dimension `d` (ambient dimension `d + 1`).
    pub fn new(d: usize) -> Self {
        assert!(d >= 1, "sphere dimension must be positive");
        Self { d }
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.d
    }

    pub fn exp(&self, p: &SpherePoint, v: &DVector<f64>) -> SpherePoint {
        sphere_exp(p, v)
    }

    pub fn log(&self, p: &SpherePoint, q: &SpherePoint) -> Result<DVector<f64>> {
        sphere_log(p, q)
    }
}

pub fn sphere_retract(p: &SpherePoint, v: &DVector<f64>) -> SpherePoint {
    let x = &p.0 + v;
    let n = x.norm();
    SpherePoint(x / n)
}

pub fn sphere_inverse_retract(p: &SpherePoint, q: &SpherePoint) -> Result<DVector<f64>> {
    let c = p.dot(q);
    if !(c > tol::DOMAIN) {
        return Err(Error::Domain(format!(
            "sphere inverse retraction needs pᵀq > {:e}, got {c:e}",
            tol::DOMAIN
        )));
    }
    Ok(&q.0 / c - &p.0)
}

pub fn sphere_exp(p: &SpherePoint, v: &DVector<f64>) -> SpherePoint {
    let t = v.norm();
    if t == 0.0 {
        return p.clone();
    }
    let x = &p.0 * t.cos() + v * (t.sin() / t);
    // Re-normalize to keep rounding drift off the sphere.
    let n = x.norm();
    SpherePoint(x / n)
}

pub fn sphere_log(p: &SpherePoint, q: &SpherePoint) -> Result<DVector<f64>> {
    let c = p.dot(q);
    if c > 1.0 - tol::DOMAIN {
        return Ok(DVector::zeros(p.dim()));
    }
    if c < -1.0 + tol::DOMAIN {
        return Err(Error::Domain("log map undefined at antipodal points".into()));
    }
    let d = c.acos();
    let w = &q.0 - &p.0 * c;
    let wn = w.norm();
    if wn == 0.0 {
        return Ok(DVector::zeros(p.dim()));
    }
    Ok(w * (d / wn))
}

/// Great-circle distance `arccos(pᵀq)`, with the argument clamped to `[-1, 1]`.
pub fn geodesic_distance(p: &SpherePoint, q: &SpherePoint) -> f64 {
    p.dot(q).clamp(-1.0, 1.0).acos()
}

impl Manifold for Sphere {
    type Point = SpherePoint;
    type Tangent = DVector<f64>;

    fn ambient_dim(&self) -> usize {
        self.d + 1
    }

    fn retract(&self, p: &SpherePoint, v: &DVector<f64>) -> SpherePoint {
        sphere_retract(p, v)
    }

    fn inverse_retract(&self, p: &SpherePoint, q: &SpherePoint) -> Result<DVector<f64>> {
        sphere_inverse_retract(p, q)
    }

    fn inner(&self, _p: &SpherePoint, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.dot(v)
    }

    fn project_to_tangent(&self, p: &SpherePoint, ambient: &DVector<f64>) -> DVector<f64> {
        ambient - &p.0 * p.0.dot(ambient)
    }

    fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> SpherePoint {
        loop {
            let x = gaussian_vector(self.d + 1, rng);
            if let Ok(p) = SpherePoint::normalize(x) {
                return p;
            }
        }
    }

    fn random_tangent<R: Rng + ?Sized>(&self, p: &SpherePoint, rng: &mut R) -> DVector<f64> {
        loop {
            let v = self.project_to_tangent(p, &gaussian_vector(self.d + 1, rng));
            let n = v.norm();
            if n > 1e-8 {
                return v / n;
            }
        }
    }

    fn zero_tangent(&self, p: &SpherePoint) -> DVector<f64> {
        DVector::zeros(p.dim())
    }

    fn scale(&self, v: &DVector<f64>, alpha: f64) -> DVector<f64> {
        v * alpha
    }

    fn axpy(&self, u: &DVector<f64>, alpha: f64, v: &DVector<f64>) -> DVector<f64> {
        u + v * alpha
    }

    fn ambient_difference(&self, p: &SpherePoint, q: &SpherePoint) -> DVector<f64> {
        &q.0 - &p.0
    }

    fn ambient_norm(&self, v: &DVector<f64>) -> f64 {
        v.norm()
    }

    /// With `c = θᵀϑ`, `d_R²(θ, ϑ) = 1/c² − 1`, whose Riemannian gradient in
    /// `θ` is `−2 (ϑ − c θ)/c³`.
    fn grad_sq_retraction_distance(&self, theta: &SpherePoint, center: &SpherePoint) -> Result<DVector<f64>> {
        let c = theta.dot(center);
        if !(c > tol::DOMAIN) {
            return Err(Error::Domain(format!(
                "squared retraction distance undefined for θᵀϑ = {c:e}"
            )));
        }
        Ok((&center.0 - &theta.0 * c) * (-2.0 / (c * c * c)))
    }
}

pub(crate) fn gaussian_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

    use super::*;
    use crate::manifold::retraction_distance;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn e(dim: usize, i: usize) -> SpherePoint {
        SpherePoint::basis(dim, i)
    }

    fn close(a: &DVector<f64>, b: &DVector<f64>, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn retract_examples() {
        let s = Sphere::new(2);
        let p = e(3, 0);
        assert_eq!(s.retract(&p, &DVector::zeros(3)), p);
        let q = s.retract(&p, e(3, 1).coords());
        assert!(close(
            q.coords(),
            &DVector::from_vec(vec![1.0, 1.0, 0.0]).scale(1.0 / SQRT_2),
            1e-15
        ));
        let q = s.retract(&p, &(e(3, 1).coords() * 3.0));
        let want = DVector::from_vec(vec![1.0, 3.0, 0.0]) / 10f64.sqrt();
        assert!(close(q.coords(), &want, 1e-15));
    }

    #[test]
    fn inverse_retract_examples() {
        let p = e(3, 0);
        assert_eq!(sphere_inverse_retract(&p, &p).unwrap(), DVector::zeros(3));
        let q = SpherePoint::normalize(DVector::from_vec(vec![1.0, 1.0, 0.0])).unwrap();
        let v = sphere_inverse_retract(&p, &q).unwrap();
        assert!(close(&v, e(3, 1).coords(), 1e-15));
        let anti = SpherePoint::new(-p.coords().clone()).unwrap();
        assert!(sphere_inverse_retract(&p, &anti).unwrap_err().is_domain());
    }

    #[test]
    fn retraction_distance_examples() {
        let s = Sphere::new(2);
        let p = e(3, 0);
        assert_eq!(retraction_distance(&s, &p, &p).unwrap(), 0.0);
        let q = SpherePoint::normalize(DVector::from_vec(vec![1.0, 1.0, 0.0])).unwrap();
        assert!((retraction_distance(&s, &p, &q).unwrap() - 1.0).abs() < 1e-15);
        assert!(retraction_distance(&s, &p, &e(3, 1)).unwrap_err().is_domain());
    }

    #[test]
    fn exp_log_examples() {
        let p = e(3, 0);
        let q = sphere_exp(&p, &(e(3, 1).coords() * FRAC_PI_2));
        assert!(close(q.coords(), e(3, 1).coords(), 1e-15));
        assert_eq!(sphere_exp(&p, &DVector::zeros(3)), p);
        let q = sphere_exp(&p, &(e(3, 1).coords() * PI));
        assert!(close(q.coords(), &(-p.coords()), 1e-15));

        let v = sphere_log(&p, &e(3, 1)).unwrap();
        assert!(close(&v, &(e(3, 1).coords() * FRAC_PI_2), 1e-15));
        assert_eq!(sphere_log(&p, &p).unwrap(), DVector::zeros(3));
        let anti = SpherePoint::new(-p.coords().clone()).unwrap();
        assert!(sphere_log(&p, &anti).unwrap_err().is_domain());
    }

    #[test]
    fn geodesic_distance_examples_and_clamp() {
        let p = e(3, 0);
        assert_eq!(geodesic_distance(&p, &p), 0.0);
        assert!((geodesic_distance(&p, &e(3, 1)) - FRAC_PI_2).abs() < 1e-15);
        let anti = SpherePoint::new(-p.coords().clone()).unwrap();
        assert!((geodesic_distance(&p, &anti) - PI).abs() < 1e-15);

        // pᵀq = 1 + 1e-16 from rounding must not produce NaN.
        let bumped = SpherePoint(p.coords() * (1.0 + 1e-16));
        assert!(geodesic_distance(&p, &bumped).is_finite());
        let bumped = SpherePoint(-p.coords() * (1.0 + 1e-16));
        assert!(geodesic_distance(&p, &bumped).is_finite());
    }

    #[test]
    fn grad_sq_distance_matches_finite_differences() {
        let s = Sphere::new(6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let center = s.random_point(&mut rng);
            let theta = crate::manifold::sample_in_ball(&s, &center, 0.8, &mut rng);
            let g = s.grad_sq_retraction_distance(&theta, &center).unwrap();
            let v = s.random_tangent(&theta, &mut rng);
            let h = 1e-6;
            let dsq = |x: &SpherePoint| retraction_distance(&s, x, &center).unwrap().powi(2);
            let fd = (dsq(&s.retract(&theta, &(&v * h))) - dsq(&s.retract(&theta, &(&v * -h)))) / (2.0 * h);
            assert!(
                (fd - g.dot(&v)).abs() <= 1e-6 * (1.0 + fd.abs()),
                "fd {fd} vs {}",
                g.dot(&v)
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn round_trip_and_exp_log(seed in any::<u64>(), d in 1usize..12, len in 0.0f64..1.0) {
            let s = Sphere::new(d);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = s.random_point(&mut rng);
            let v = s.random_tangent(&p, &mut rng) * len;
            let back = s.inverse_retract(&p, &s.retract(&p, &v)).unwrap();
            prop_assert!((&back - &v).norm() <= 1e-10);

            let q = s.random_point(&mut rng);
            if p.dot(&q) > 0.01 {
                let l = sphere_log(&p, &q).unwrap();
                prop_assert!((sphere_exp(&p, &l).coords() - q.coords()).norm() <= 1e-10);
                prop_assert!((geodesic_distance(&p, &q) - l.norm()).abs() <= 1e-10);
            }
        }
    }
}
