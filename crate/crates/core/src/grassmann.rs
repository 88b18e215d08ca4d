//! The Grassmann manifold `Gr(M, r)` of `r`-dimensional subspaces of `R^M`,
//! represented by full-rank `M × r` matrices up to right multiplication by an
//! invertible `r × r` matrix.
//!
//! Tangent vectors are horizontal representatives `H` with `UᵀH = 0`. The
//! retraction is additive, `R_U(H) = U + H`, followed by canonicalization to a
//! column-orthonormal representative. The inverse retraction rescales the
//! target representative so that `U + H` spans the target subspace, then
//! projects it onto the horizontal space at `U`.
//!
//! Solvers assume canonical (column-orthonormal) base points, which is what
//! [`Grassmann::retract`] and [`Grassmann::random_point`] produce; the inner
//! product is the Frobenius one, which is the quotient metric at such points.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::manifold::{tol, Manifold};

#[derive(Debug, Clone, PartialEq)]
pub struct GrassmannPoint(DMatrix<f64>);

impl GrassmannPoint {
    /// Wraps any full-column-rank representative without canonicalizing it.
    pub fn new(u: DMatrix<f64>) -> Result<Self> {
        if u.ncols() == 0 || u.ncols() > u.nrows() {
            return Err(Error::Config(format!(
                "Grassmann representative must be M×r with 1 ≤ r ≤ M, got {}×{}",
                u.nrows(),
                u.ncols()
            )));
        }
        let smin = u
            .clone()
            .singular_values()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if !(smin > tol::RANK) {
            return Err(Error::Degenerate(format!(
                "Grassmann representative is rank deficient (σ_min = {smin:e})"
            )));
        }
        Ok(Self(u))
    }

    /// Full-rank representative, replaced by its canonical orthonormal basis.
    pub fn canonical(u: DMatrix<f64>) -> Result<Self> {
        Ok(Self::new(u)?.canonicalize())
    }

    /// Thin QR with the sign of each column chosen so that `R` has a positive
    /// diagonal; the `Q` factor is the canonical representative.
    pub fn canonicalize(&self) -> Self {
        Self(canonical_basis(&self.0))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn rank(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_orthonormal(&self, tol: f64) -> bool {
        let g = self.0.transpose() * &self.0;
        (g - DMatrix::identity(self.rank(), self.rank())).amax() <= tol
    }
}

fn canonical_basis(u: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = u.clone().qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grassmann {
    m: usize,
    r: usize,
}

impl Grassmann {
    pub fn new(m: usize, r: usize) -> Self {
        assert!(r >= 1 && r <= m, "Gr(M, r) needs 1 ≤ r ≤ M, got M={m}, r={r}");
        Self { m, r }
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn rank(&self) -> usize {
        self.r
    }
}

/// `(I − U(UᵀU)⁻¹Uᵀ) A`
fn horizontal_projection(u: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    let gram = u.transpose() * u;
    let uta = u.transpose() * a;
    let coef = gram.cholesky().map(|c| c.solve(&uta)).unwrap_or_else(|| uta.clone());
    a - u * coef
}

pub fn gr_retract(u: &GrassmannPoint, h: &DMatrix<f64>) -> GrassmannPoint {
    GrassmannPoint(canonical_basis(&(&u.0 + h)))
}

pub fn gr_inverse_retract(u: &GrassmannPoint, y: &GrassmannPoint) -> Result<DMatrix<f64>> {
    let uty = u.0.transpose() * &y.0;
    let svals = uty.clone().singular_values();
    let smin = svals.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = u.0.norm() * y.0.norm();
    if !(smin > tol::DOMAIN * scale.max(1.0)) {
        return Err(Error::Domain(format!(
            "UᵀY is singular (σ_min = {smin:e}); subspaces are not in each other's domain"
        )));
    }
    let inv = uty
        .try_inverse()
        .ok_or_else(|| Error::Domain("UᵀY is not invertible".into()))?;
    // Ŷ = Y (UᵀY)⁻¹ UᵀU satisfies UᵀŶ = UᵀU, so U + (Ŷ − P_U Ŷ) = Ŷ.
    let y_hat = &y.0 * inv * (u.0.transpose() * &u.0);
    Ok(horizontal_projection(&u.0, &y_hat))
}

/// Principal-angle distance `‖(θ₁, …, θ_r)‖₂` between the column spaces.
pub fn subspace_distance(u: &GrassmannPoint, y: &GrassmannPoint) -> f64 {
    principal_angles(u, y).iter().map(|t| t * t).sum::<f64>().sqrt()
}

/// Principal angles in ascending order. Small angles come from sines and
/// large ones from cosines, which keeps both ends accurate.
pub fn principal_angles(u: &GrassmannPoint, y: &GrassmannPoint) -> Vec<f64> {
    let qu = canonical_basis(&u.0);
    let qy = canonical_basis(&y.0);
    let mut cos: Vec<f64> = (qu.transpose() * &qy)
        .singular_values()
        .iter()
        .map(|s| s.clamp(0.0, 1.0))
        .collect();
    let resid = &qy - &qu * (qu.transpose() * &qy);
    let mut sin: Vec<f64> = resid.singular_values().iter().map(|s| s.clamp(0.0, 1.0)).collect();
    cos.sort_by(|a, b| b.total_cmp(a));
    sin.sort_by(|a, b| a.total_cmp(b));
    sin.resize(cos.len(), 0.0);
    cos.iter()
        .zip(&sin)
        .map(|(&c, &s)| if c * c < 0.5 { c.acos() } else { s.asin() })
        .collect()
}

impl Manifold for Grassmann {
    type Point = GrassmannPoint;
    type Tangent = DMatrix<f64>;

    fn ambient_dim(&self) -> usize {
        self.m * self.r
    }

    fn retract(&self, u: &GrassmannPoint, h: &DMatrix<f64>) -> GrassmannPoint {
        gr_retract(u, h)
    }

    fn inverse_retract(&self, u: &GrassmannPoint, y: &GrassmannPoint) -> Result<DMatrix<f64>> {
        gr_inverse_retract(u, y)
    }

    fn inner(&self, _u: &GrassmannPoint, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        a.dot(b)
    }

    fn project_to_tangent(&self, u: &GrassmannPoint, ambient: &DMatrix<f64>) -> DMatrix<f64> {
        horizontal_projection(&u.0, ambient)
    }

    fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> GrassmannPoint {
        loop {
            let g = gaussian_matrix(self.m, self.r, rng);
            if let Ok(p) = GrassmannPoint::canonical(g) {
                return p;
            }
        }
    }

    /// Returns the zero matrix on `Gr(M, M)`, whose tangent spaces are trivial.
    fn random_tangent<R: Rng + ?Sized>(&self, u: &GrassmannPoint, rng: &mut R) -> DMatrix<f64> {
        if u.rank() >= u.rows() {
            return DMatrix::zeros(u.rows(), u.rank());
        }
        loop {
            let h = horizontal_projection(&u.0, &gaussian_matrix(self.m, self.r, rng));
            let n = h.norm();
            if n > 1e-8 {
                return h / n;
            }
        }
    }

    fn zero_tangent(&self, u: &GrassmannPoint) -> DMatrix<f64> {
        DMatrix::zeros(u.rows(), u.rank())
    }

    fn scale(&self, v: &DMatrix<f64>, alpha: f64) -> DMatrix<f64> {
        v * alpha
    }

    fn axpy(&self, a: &DMatrix<f64>, alpha: f64, b: &DMatrix<f64>) -> DMatrix<f64> {
        a + b * alpha
    }

    fn ambient_difference(&self, p: &GrassmannPoint, q: &GrassmannPoint) -> DMatrix<f64> {
        &q.0 - &p.0
    }

    fn ambient_norm(&self, v: &DMatrix<f64>) -> f64 {
        v.norm()
    }

    /// For orthonormal `U` and `A = Uᵀ P_V U`, `d_R²(U, V) = tr(A⁻¹) − r` and
    /// the horizontal gradient is `−2 (I − UUᵀ) P_V U A⁻²`.
    fn grad_sq_retraction_distance(&self, u: &GrassmannPoint, center: &GrassmannPoint) -> Result<DMatrix<f64>> {
        debug_assert!(u.is_orthonormal(1e-6), "expected a canonical base point");
        let v = &center.0;
        let vtv = v.transpose() * v;
        let vtu = v.transpose() * &u.0;
        let coef = vtv
            .cholesky()
            .ok_or_else(|| Error::Domain("rank-deficient prox center".into()))?
            .solve(&vtu);
        let pvu = v * coef;
        let a = u.0.transpose() * &pvu;
        let smin = a
            .clone()
            .singular_values()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if !(smin > tol::DOMAIN) {
            return Err(Error::Domain(format!("UᵀP_V U is singular (σ_min = {smin:e})")));
        }
        let a_inv = a
            .try_inverse()
            .ok_or_else(|| Error::Domain("UᵀP_V U is not invertible".into()))?;
        let horiz = &pvu - &u.0 * (u.0.transpose() * &pvu);
        Ok(horiz * (&a_inv * &a_inv) * -2.0)
    }
}

pub(crate) fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_iterator(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)),
    )
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};

    use super::*;
    use crate::manifold::{retraction_distance, sample_in_ball};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn col(v: &[f64]) -> GrassmannPoint {
        GrassmannPoint::new(DMatrix::from_column_slice(v.len(), 1, v)).unwrap()
    }

    #[test]
    fn retract_examples() {
        let g = Grassmann::new(2, 1);
        let u = col(&[1.0, 0.0]);
        assert!((g.retract(&u, &DMatrix::zeros(2, 1)).matrix() - u.matrix()).norm() < 1e-15);
        let r = g.retract(&u, &DMatrix::from_column_slice(2, 1, &[0.0, 1.0]));
        let want = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]) / SQRT_2;
        assert!((r.matrix() - want).norm() < 1e-15);

        let u3 = col(&[1.0, 0.0, 0.0]);
        let r = Grassmann::new(3, 1).retract(&u3, &DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 2.0]));
        let want = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 2.0]) / 5f64.sqrt();
        assert!((r.matrix() - want).norm() < 1e-15);
    }

    #[test]
    fn inverse_retract_examples() {
        let g = Grassmann::new(2, 1);
        let u = col(&[1.0, 0.0]);
        assert!(g.inverse_retract(&u, &u).unwrap().norm() < 1e-15);
        let y = col(&[1.0 / SQRT_2, 1.0 / SQRT_2]);
        let h = g.inverse_retract(&u, &y).unwrap();
        assert!((h - DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).norm() < 1e-15);
        let e2 = col(&[0.0, 1.0]);
        assert!(g.inverse_retract(&u, &e2).unwrap_err().is_domain());
    }

    #[test]
    fn subspace_distance_examples() {
        let u = col(&[1.0, 0.0]);
        assert_eq!(subspace_distance(&u, &u), 0.0);
        assert!((subspace_distance(&u, &col(&[0.0, 1.0])) - FRAC_PI_2).abs() < 1e-15);
        assert!((subspace_distance(&u, &col(&[1.0, 1.0])) - FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn canonicalize_is_orthonormal_with_positive_r() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = GrassmannPoint::new(gaussian_matrix(7, 3, &mut rng)).unwrap();
        let c = u.canonicalize();
        assert!(c.is_orthonormal(1e-12));
        let r = c.matrix().transpose() * u.matrix();
        for j in 0..3 {
            assert!(r[(j, j)] > 0.0);
        }
        assert!(subspace_distance(&u, &c) < 1e-12);
    }

    #[test]
    fn rank_deficient_rejected() {
        let u = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        assert!(GrassmannPoint::new(u).is_err());
    }

    #[test]
    fn grad_sq_distance_matches_finite_differences() {
        let g = Grassmann::new(6, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let center = g.random_point(&mut rng);
            let u = sample_in_ball(&g, &center, 0.6, &mut rng);
            let grad = g.grad_sq_retraction_distance(&u, &center).unwrap();
            assert!((u.matrix().transpose() * &grad).amax() < 1e-10);
            let v = g.random_tangent(&u, &mut rng);
            let h = 1e-6;
            let dsq = |x: &GrassmannPoint| retraction_distance(&g, x, &center).unwrap().powi(2);
            let fd = (dsq(&g.retract(&u, &(&v * h))) - dsq(&g.retract(&u, &(&v * -h)))) / (2.0 * h);
            let an = grad.dot(&v);
            assert!((fd - an).abs() <= 1e-6 * (1.0 + fd.abs()), "fd {fd} vs {an}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn round_trip_and_representative_invariance(seed in any::<u64>(), m in 2usize..9, len in 0.0f64..1.0) {
            let r = 1 + (seed as usize) % (m - 1).min(3);
            let g = Grassmann::new(m, r);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = g.random_point(&mut rng);
            let h = g.random_tangent(&u, &mut rng) * len;
            let y = g.retract(&u, &h);
            let back = g.inverse_retract(&u, &y).unwrap();
            prop_assert!((&back - &h).norm() <= 1e-9);

            // Y → Y·G leaves the inverse retraction (and so d_R) unchanged.
            let mix = gaussian_matrix(r, r, &mut rng) + DMatrix::identity(r, r) * 3.0;
            let y_mixed = GrassmannPoint::new(y.matrix() * &mix).unwrap();
            let back_mixed = g.inverse_retract(&u, &y_mixed).unwrap();
            prop_assert!((&back_mixed - &h).norm() <= 1e-9);
            prop_assert!(subspace_distance(&y, &y_mixed) <= 1e-9);
            prop_assert!(subspace_distance(&g.retract(&u, &back_mixed), &y) <= 1e-9);
        }
    }
}
