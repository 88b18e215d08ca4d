//! Regularized low-rank matrix completion over the Grassmannian.
//!
//! For a subspace `U` (items × rank) every user column `X_k` gets the
//! weighted least-squares fit `w_k(U) = (Uᵀ diag(c_k²) U)⁻¹ Uᵀ(c_k² ∘ X_k)`
//! with `c_k = 1` on observed entries and `λ` elsewhere, and the loss is
//! `L(U) = Σ_k ½‖c_k ∘ (U w_k − X_k)‖²`.
//!
//! Every quantity is computed from the observed entries and `UᵀU` only, so an
//! evaluation costs `O(|Ω| r² + N r³)`.

use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grassmann::{Grassmann, GrassmannPoint};
use crate::manifold::{tol, Manifold};
use crate::objective::Objective;

/// `(item, user, rating)` with 0-based indices.
pub type Rating = (usize, usize, f64);

/// Sparse ratings stored by user (column), rows sorted within each user.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    rows: usize,
    cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl RatingMatrix {
    /// Builds the matrix from `(item, user, rating)` triples. Later duplicates
    /// overwrite earlier ones; the number of overwritten entries is returned.
    pub fn from_triplets(rows: usize, cols: usize, triples: &[Rating]) -> Result<(Self, usize)> {
        for &(i, j, v) in triples {
            if i >= rows || j >= cols {
                return Err(Error::Config(format!(
                    "entry ({i}, {j}) outside a {rows}×{cols} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::Config(format!("entry ({i}, {j}) has non-finite value {v}")));
            }
        }
        let mut order: Vec<usize> = (0..triples.len()).collect();
        order.sort_by_key(|&t| (triples[t].1, triples[t].0, t));

        let mut col_ptr = vec![0usize; cols + 1];
        let mut row_idx = Vec::with_capacity(triples.len());
        let mut values = Vec::with_capacity(triples.len());
        let mut duplicates = 0usize;
        let mut last: Option<(usize, usize)> = None;
        for t in order {
            let (i, j, v) = triples[t];
            if last == Some((i, j)) {
                *values.last_mut().expect("duplicate follows an entry") = v;
                duplicates += 1;
                continue;
            }
            last = Some((i, j));
            row_idx.push(i);
            values.push(v);
            col_ptr[j + 1] += 1;
        }
        for j in 0..cols {
            col_ptr[j + 1] += col_ptr[j];
        }
        Ok((
            Self {
                rows,
                cols,
                col_ptr,
                row_idx,
                values,
            },
            duplicates,
        ))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Observed `(item, rating)` pairs of user `k`.
    pub fn user(&self, k: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.col_ptr[k]..self.col_ptr[k + 1];
        self.row_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn user_count(&self, k: usize) -> usize {
        self.col_ptr[k + 1] - self.col_ptr[k]
    }

    pub fn get(&self, i: usize, k: usize) -> Option<f64> {
        let range = self.col_ptr[k]..self.col_ptr[k + 1];
        self.row_idx[range.clone()]
            .binary_search(&i)
            .ok()
            .map(|pos| self.values[range.start + pos])
    }

    /// All entries as `(item, user, rating)` in user-major order.
    pub fn triples(&self) -> impl Iterator<Item = Rating> + '_ {
        (0..self.cols).flat_map(move |k| self.user(k).map(move |(i, v)| (i, k, v)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionProblem {
    pub ratings: RatingMatrix,
    pub lambda: f64,
    pub rank: usize,
}

impl CompletionProblem {
    pub fn new(ratings: RatingMatrix, lambda: f64, rank: usize) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::Config(format!(
                "λ must be a finite non-negative number, got {lambda}"
            )));
        }
        if rank == 0 || rank > ratings.rows() {
            return Err(Error::Config(format!(
                "rank {rank} must lie in 1..={} (the number of items)",
                ratings.rows()
            )));
        }
        Ok(Self { ratings, lambda, rank })
    }

    pub fn manifold(&self) -> Grassmann {
        Grassmann::new(self.ratings.rows(), self.rank)
    }

    fn check_shape(&self, u: &GrassmannPoint) -> Result<()> {
        if u.rows() != self.ratings.rows() || u.rank() != self.rank {
            return Err(Error::Config(format!(
                "subspace is {}×{}, problem expects {}×{}",
                u.rows(),
                u.rank(),
                self.ratings.rows(),
                self.rank
            )));
        }
        Ok(())
    }

    /// Solves for `w_k` into `ws.w`. Returns `false` for users skipped by
    /// the loss.
    fn solve_user(&self, ws: &mut Workspace, k: usize) -> Result<bool> {
        let r = self.rank;
        let lam2 = self.lambda * self.lambda;
        if self.ratings.user_count(k) == 0 {
            if lam2 == 0.0 {
                return Ok(false);
            }
            ws.w.iter_mut().for_each(|x| *x = 0.0);
            return Ok(true);
        }
        // Gather the observed rows column by column so that every Gram entry
        // is one contiguous dot product.
        let n = self.ratings.user_count(k);
        ws.obs.clear();
        ws.obs.extend(self.ratings.user(k).map(|(_, x)| x));
        ws.gathered.resize(n * r, 0.0);
        for (t, (i, _)) in self.ratings.user(k).enumerate() {
            for a in 0..r {
                ws.gathered[a * n + t] = ws.rows[i * r + a];
            }
        }
        let keep = 1.0 - lam2;
        for a in 0..r {
            let ca = &ws.gathered[a * n..(a + 1) * n];
            ws.rhs[a] = dot(ca, &ws.obs);
            for b in 0..=a {
                let cb = &ws.gathered[b * n..(b + 1) * n];
                ws.gram[a * r + b] = lam2 * ws.utu[a * r + b] + keep * dot(ca, cb);
            }
        }
        cholesky_solve(&mut ws.gram, &ws.rhs, &mut ws.w, r)
            .map_err(|()| Error::Singular(format!("weight system of user {k} is singular")))?;
        Ok(true)
    }

    fn evaluate(&self, u: &GrassmannPoint, grad: Option<&mut DMatrix<f64>>) -> Result<f64> {
        self.check_shape(u)?;
        let r = self.rank;
        let lam2 = self.lambda * self.lambda;
        let mut ws = Workspace::new(u.matrix(), r);
        let mut value = 0.0;
        let mut g_rows = grad.as_ref().map(|_| vec![0.0; ws.rows.len()]);
        let mut wwt = vec![0.0; r * r];
        for k in 0..self.ratings.cols() {
            if !self.solve_user(&mut ws, k)? {
                continue;
            }
            let w = &ws.w;
            let mut fit_all = 0.0;
            for a in 0..r {
                let t: f64 = ws.utu[a * r..(a + 1) * r].iter().zip(w).map(|(u, w)| u * w).sum();
                fit_all += w[a] * t;
            }
            let (mut obs_sq, mut fit_obs) = (0.0, 0.0);
            for (i, x) in self.ratings.user(k) {
                let row = &ws.rows[i * r..(i + 1) * r];
                let pred: f64 = row.iter().zip(w).map(|(a, b)| a * b).sum();
                obs_sq += (pred - x) * (pred - x);
                fit_obs += pred * pred;
                if let Some(g) = g_rows.as_mut() {
                    let coef = (1.0 - lam2) * pred - x;
                    for (ga, wa) in g[i * r..(i + 1) * r].iter_mut().zip(w) {
                        *ga += coef * wa;
                    }
                }
            }
            value += 0.5 * (obs_sq + lam2 * (fit_all - fit_obs));
            if g_rows.is_some() {
                for a in 0..r {
                    for b in 0..r {
                        wwt[a * r + b] += w[a] * w[b];
                    }
                }
            }
        }
        if let (Some(out), Some(g)) = (grad, g_rows) {
            let m = u.rows();
            let wwt = DMatrix::from_row_slice(r, r, &wwt);
            *out = DMatrix::from_row_slice(m, r, &g) + u.matrix() * wwt * lam2;
        }
        Ok(value)
    }

    /// Closed-form weights `w_k(U)` of one user.
    pub fn user_weights(&self, u: &GrassmannPoint, k: usize) -> Result<DVector<f64>> {
        self.check_shape(u)?;
        if k >= self.ratings.cols() {
            return Err(Error::Config(format!("user {k} out of range")));
        }
        let mut ws = Workspace::new(u.matrix(), self.rank);
        if self.ratings.user_count(k) == 0 && self.lambda == 0.0 {
            return Err(Error::Singular(format!("user {k} has no observations and λ = 0")));
        }
        self.solve_user(&mut ws, k)?;
        Ok(DVector::from_vec(ws.w))
    }

    /// Weights of every user; `None` for users skipped by the loss.
    pub fn all_weights(&self, u: &GrassmannPoint) -> Result<Vec<Option<DVector<f64>>>> {
        self.check_shape(u)?;
        let mut ws = Workspace::new(u.matrix(), self.rank);
        (0..self.ratings.cols())
            .map(|k| Ok(self.solve_user(&mut ws, k)?.then(|| DVector::from_column_slice(&ws.w))))
            .collect()
    }

    /// Root-mean-square error of `u_iᵀ w_k(U)` against held-out entries.
    pub fn rmse(&self, u: &GrassmannPoint, test: &[Rating]) -> Result<f64> {
        if test.is_empty() {
            return Ok(0.0);
        }
        let weights = self.all_weights(u)?;
        let um = u.matrix();
        let mut sq = 0.0;
        for &(i, k, x) in test {
            if i >= um.nrows() || k >= weights.len() {
                return Err(Error::Config(format!("test entry ({i}, {k}) out of range")));
            }
            let pred = weights[k].as_ref().map_or(0.0, |w| um.row(i).dot(&w.transpose()));
            sq += (pred - x).powi(2);
        }
        Ok((sq / test.len() as f64).sqrt())
    }

    pub fn value(&self, u: &GrassmannPoint) -> Result<f64> {
        self.evaluate(u, None)
    }

    /// Loss and the ambient (Euclidean) gradient `Σ_k diag(c_k²)(U w_k − X_k) w_kᵀ`.
    pub fn value_and_ambient_gradient(&self, u: &GrassmannPoint) -> Result<(f64, DMatrix<f64>)> {
        let mut g = DMatrix::zeros(0, 0);
        let v = self.evaluate(u, Some(&mut g))?;
        Ok((v, g))
    }
}

/// Scratch buffers for one evaluation: `U` in row-major order, `UᵀU`, and
/// the per-user normal equations.
struct Workspace {
    rows: Vec<f64>,
    utu: Vec<f64>,
    gram: Vec<f64>,
    rhs: Vec<f64>,
    w: Vec<f64>,
    obs: Vec<f64>,
    gathered: Vec<f64>,
}

impl Workspace {
    fn new(u: &DMatrix<f64>, r: usize) -> Self {
        let m = u.nrows();
        let mut rows = vec![0.0; m * r];
        for i in 0..m {
            for a in 0..r {
                rows[i * r + a] = u[(i, a)];
            }
        }
        let utu_m = u.transpose() * u;
        let mut utu = vec![0.0; r * r];
        for a in 0..r {
            for b in 0..r {
                utu[a * r + b] = utu_m[(a, b)];
            }
        }
        Self {
            rows,
            utu,
            gram: vec![0.0; r * r],
            rhs: vec![0.0; r],
            w: vec![0.0; r],
            obs: Vec::new(),
            gathered: Vec::new(),
        }
    }
}

/// Dot product with four independent accumulators.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Solves `G x = b` for symmetric positive definite `G` given by its lower
/// triangle (row-major, overwritten by the Cholesky factor). Fails when a
/// pivot is not safely positive.
fn cholesky_solve(g: &mut [f64], b: &[f64], x: &mut [f64], n: usize) -> std::result::Result<(), ()> {
    let scale = (0..n).map(|i| g[i * n + i]).fold(1.0_f64, f64::max);
    for j in 0..n {
        let mut d = g[j * n + j];
        for k in 0..j {
            d -= g[j * n + k] * g[j * n + k];
        }
        if !(d > tol::DOMAIN * scale) {
            return Err(());
        }
        let d = d.sqrt();
        g[j * n + j] = d;
        for i in j + 1..n {
            let mut s = g[i * n + j];
            for k in 0..j {
                s -= g[i * n + k] * g[j * n + k];
            }
            g[i * n + j] = s / d;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= g[i * n + k] * x[k];
        }
        x[i] = s / g[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= g[k * n + i] * x[k];
        }
        x[i] = s / g[i * n + i];
    }
    Ok(())
}

/// `L(U)` as an objective on `Gr(M, r)`.
#[derive(Debug)]
pub struct CompletionObjective {
    pub problem: CompletionProblem,
    /// Last `(U, L(U))` seen as the start of a `decrease`, so a line search
    /// evaluates its base point once.
    base: Mutex<Option<(DMatrix<f64>, f64)>>,
}

impl CompletionObjective {
    pub fn new(problem: CompletionProblem) -> Self {
        Self {
            problem,
            base: Mutex::new(None),
        }
    }

    fn base_value(&self, u: &GrassmannPoint) -> Result<f64> {
        let mut cache = self.base.lock().unwrap_or_else(|e| e.into_inner());
        if let Some((p, v)) = cache.as_ref() {
            if p == u.matrix() {
                return Ok(*v);
            }
        }
        let v = self.problem.value(u)?;
        *cache = Some((u.matrix().clone(), v));
        Ok(v)
    }
}

impl Clone for CompletionObjective {
    fn clone(&self) -> Self {
        Self::new(self.problem.clone())
    }
}

impl Objective<Grassmann> for CompletionObjective {
    fn value(&self, _m: &Grassmann, u: &GrassmannPoint) -> Result<f64> {
        self.problem.value(u)
    }

    /// The ambient gradient projected onto the horizontal space at `U`.
    fn gradient(&self, m: &Grassmann, u: &GrassmannPoint) -> Result<DMatrix<f64>> {
        let (_, g) = self.problem.value_and_ambient_gradient(u)?;
        Ok(m.project_to_tangent(u, &g))
    }

    fn decrease(&self, _m: &Grassmann, from: &GrassmannPoint, to: &GrassmannPoint) -> Result<f64> {
        Ok(self.base_value(from)? - self.problem.value(to)?)
    }
}
