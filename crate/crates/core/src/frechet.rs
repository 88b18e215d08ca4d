//! Fréchet-mean objectives on the sphere, plus a weakly convex test objective.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::manifold::tol;
use crate::objective::Objective;
use crate::sphere::{Sphere, SpherePoint};

fn data_matrix(data: &[SpherePoint]) -> Result<DMatrix<f64>> {
    let Some(first) = data.first() else {
        return Err(Error::Config("Fréchet objective needs at least one data point".into()));
    };
    let dim = first.dim();
    if data.iter().any(|x| x.dim() != dim) {
        return Err(Error::Config("data points have mismatched dimensions".into()));
    }
    Ok(DMatrix::from_fn(dim, data.len(), |i, j| data[j].coords()[i]))
}

fn tangent_part(p: &SpherePoint, v: DVector<f64>) -> DVector<f64> {
    let c = p.coords().dot(&v);
    v - p.coords() * c
}

/// `f(θ) = Σ arccos²(θᵀx_i)`, the sum of squared geodesic distances.
#[derive(Debug, Clone)]
pub struct IntrinsicFrechet {
    data: DMatrix<f64>,
}

impl IntrinsicFrechet {
    pub fn new(data: &[SpherePoint]) -> Result<Self> {
        Ok(Self {
            data: data_matrix(data)?,
        })
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    fn cosines(&self, p: &SpherePoint) -> Result<DVector<f64>> {
        if p.dim() != self.data.nrows() {
            return Err(Error::Config("point and data dimensions differ".into()));
        }
        let c = self.data.tr_mul(p.coords());
        if let Some(i) = c.iter().position(|&ci| ci < -1.0 + tol::DOMAIN) {
            return Err(Error::Domain(format!(
                "data point {i} is antipodal to the evaluation point"
            )));
        }
        Ok(c)
    }
}

impl Objective<Sphere> for IntrinsicFrechet {
    fn value(&self, _m: &Sphere, p: &SpherePoint) -> Result<f64> {
        Ok(self.cosines(p)?.iter().map(|c| c.clamp(-1.0, 1.0).acos().powi(2)).sum())
    }

    /// `−2 Σ log_θ(x_i)`, with `log_θ(x) = d (x − cθ)/sin d`.
    fn gradient(&self, _m: &Sphere, p: &SpherePoint) -> Result<DVector<f64>> {
        let c = self.cosines(p)?;
        let a = c.map(|ci| {
            let ci = ci.clamp(-1.0, 1.0);
            let d = ci.acos();
            let s = (1.0 - ci * ci).max(0.0).sqrt();
            if s < 1e-8 {
                1.0 + d * d / 6.0
            } else {
                d / s
            }
        });
        let ax = &self.data * &a;
        Ok(tangent_part(p, ax) * -2.0)
    }
}

/// `f(θ) = Σ 2(1 − θᵀx_i) = 2n − 2θᵀs` with `s = Σ x_i`.
///
/// Evaluated as `f* + ‖s‖·‖θ − ŝ‖²` with `ŝ = s/‖s‖`, which keeps the
/// suboptimality accurate when `f*` is large.
#[derive(Debug, Clone)]
pub struct ExtrinsicFrechet {
    sum: DVector<f64>,
    unit: DVector<f64>,
    n: usize,
}

impl ExtrinsicFrechet {
    pub fn new(data: &[SpherePoint]) -> Result<Self> {
        let x = data_matrix(data)?;
        let sum = x.column_sum();
        let norm = sum.norm();
        let unit = if norm > 0.0 {
            &sum / norm
        } else {
            DVector::zeros(sum.len())
        };
        Ok(Self {
            sum,
            unit,
            n: data.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn check_dim(&self, p: &SpherePoint) -> Result<()> {
        if p.dim() != self.sum.len() {
            return Err(Error::Config("point and data dimensions differ".into()));
        }
        Ok(())
    }

    pub fn data_sum(&self) -> &DVector<f64> {
        &self.sum
    }

    /// Minimum value, attained at the normalized Euclidean mean.
    pub fn optimal_value(&self) -> f64 {
        2.0 * self.n as f64 - 2.0 * self.sum.norm()
    }

    /// `‖s‖·‖θ − ŝ‖² = f(θ) − f*`.
    pub fn suboptimality(&self, p: &SpherePoint) -> f64 {
        self.sum.norm() * (p.coords() - &self.unit).norm_squared()
    }
}

impl Objective<Sphere> for ExtrinsicFrechet {
    fn value(&self, _m: &Sphere, p: &SpherePoint) -> Result<f64> {
        self.check_dim(p)?;
        Ok(self.optimal_value() + self.suboptimality(p))
    }

    fn gradient(&self, _m: &Sphere, p: &SpherePoint) -> Result<DVector<f64>> {
        self.check_dim(p)?;
        Ok(tangent_part(p, self.sum.clone()) * -2.0)
    }

    fn decrease(&self, _m: &Sphere, from: &SpherePoint, to: &SpherePoint) -> Result<f64> {
        self.check_dim(from)?;
        self.check_dim(to)?;
        Ok(self.suboptimality(from) - self.suboptimality(to))
    }

    /// The Riemannian Hessian is `2(θᵀs) I` on the tangent space.
    fn smoothness(&self) -> Option<f64> {
        Some(2.0 * self.sum.norm())
    }
}

/// `Σx_i / ‖Σx_i‖`, the global minimizer of [`ExtrinsicFrechet`].
pub fn closed_form_extrinsic_mean(data: &[SpherePoint]) -> Result<SpherePoint> {
    let sum = data_matrix(data)?.column_sum();
    if !(sum.norm() > tol::DOMAIN) {
        return Err(Error::Degenerate("the Euclidean mean of the data is zero".into()));
    }
    SpherePoint::normalize(sum)
}

/// `f(θ) = scale · (2(1 − θᵀc) − level)⁴`.
///
/// Near `c` this behaves like `−4·scale·level³·d²(θ, c)`, so it is weakly
/// convex with modulus about `8·scale·level³` there. Its minimizers form the
/// ring `2(1 − θᵀc) = level`, where it is degenerate (quartic), so gradient
/// methods converge sublinearly.
#[derive(Debug, Clone)]
pub struct RingObjective {
    pub center: SpherePoint,
    pub level: f64,
    pub scale: f64,
}

impl RingObjective {
    pub fn new(center: SpherePoint, level: f64, scale: f64) -> Self {
        Self { center, level, scale }
    }

    fn offset(&self, p: &SpherePoint) -> f64 {
        2.0 * (1.0 - p.dot(&self.center)) - self.level
    }
}

impl Objective<Sphere> for RingObjective {
    fn value(&self, _m: &Sphere, p: &SpherePoint) -> Result<f64> {
        Ok(self.scale * self.offset(p).powi(4))
    }

    fn gradient(&self, _m: &Sphere, p: &SpherePoint) -> Result<DVector<f64>> {
        let u = self.offset(p);
        let outer = 4.0 * self.scale * u.powi(3);
        Ok(tangent_part(p, self.center.coords().clone()) * (-2.0 * outer))
    }
}
