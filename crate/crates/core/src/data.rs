//! Synthetic data generators and rating-file ingestion.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::completion::{CompletionProblem, Rating, RatingMatrix};
use crate::error::{Error, Result};
use crate::grassmann::gaussian_matrix;
use crate::manifold::Manifold;
use crate::sphere::{gaussian_vector, sphere_exp, Sphere, SpherePoint};

/// `n` i.i.d. standard Gaussian vectors in `R^{d+1}` projected onto `S^d`.
pub fn generate_sphere_data(n: usize, d: usize, seed: u64) -> Result<Vec<SpherePoint>> {
    if n == 0 || d == 0 {
        return Err(Error::Config(format!("need n ≥ 1 and d ≥ 1, got n = {n}, d = {d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if let Ok(p) = SpherePoint::normalize(gaussian_vector(d + 1, &mut rng)) {
            out.push(p);
        }
    }
    Ok(out)
}

/// `n` points `exp_c(r·v)` around a random center `c` of `S^d`, with `v` a
/// uniformly random unit tangent and `r` uniform in `[0, radius]`.
/// Returns the center and the points.
pub fn generate_ball_data(n: usize, d: usize, radius: f64, seed: u64) -> Result<(SpherePoint, Vec<SpherePoint>)> {
    if n == 0 || d == 0 {
        return Err(Error::Config(format!("need n ≥ 1 and d ≥ 1, got n = {n}, d = {d}")));
    }
    if !(radius > 0.0 && radius < std::f64::consts::PI) {
        return Err(Error::Config(format!("ball radius must lie in (0, π), got {radius}")));
    }
    let m = Sphere::new(d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = m.random_point(&mut rng);
    let points = (0..n)
        .map(|_| {
            let v = m.random_tangent(&center, &mut rng);
            let r = rng.random::<f64>() * radius;
            sphere_exp(&center, &(v * r))
        })
        .collect();
    Ok((center, points))
}

/// Observed synthetic ratings, split into training and held-out entries.
#[derive(Debug, Clone)]
pub struct LowRankData {
    pub train: RatingMatrix,
    pub test: Vec<Rating>,
}

impl LowRankData {
    pub fn into_problem(self, lambda: f64, rank: usize) -> Result<(CompletionProblem, Vec<Rating>)> {
        if lambda == 0.0 {
            if let Some(k) = (0..self.train.cols()).find(|&k| self.train.user_count(k) == 0) {
                return Err(Error::Config(format!(
                    "user {k} has no training observations and λ = 0"
                )));
            }
        }
        Ok((CompletionProblem::new(self.train, lambda, rank)?, self.test))
    }
}

/// `X = A Bᵀ + noise` with standard Gaussian `A` (M×r) and `B` (N×r); each
/// entry is observed with probability `density`, and the observed entries
/// are split 80/20 into training and test sets (no split at density 1).
pub fn generate_lowrank_data(
    rows: usize,
    cols: usize,
    rank: usize,
    density: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<LowRankData> {
    if rows == 0 || cols == 0 || rank == 0 || rank > rows.min(cols) {
        return Err(Error::Config(format!(
            "need 1 ≤ r ≤ min(M, N), got M = {rows}, N = {cols}, r = {rank}"
        )));
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::Config(format!("density must lie in (0, 1], got {density}")));
    }
    if !(noise_sd >= 0.0) || !noise_sd.is_finite() {
        return Err(Error::Config(format!(
            "noise must be a finite non-negative number, got {noise_sd}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = gaussian_matrix(rows, rank, &mut rng);
    let b = gaussian_matrix(cols, rank, &mut rng);
    let x = &a * b.transpose();
    let mut observed = Vec::new();
    for j in 0..cols {
        for i in 0..rows {
            if rng.random::<f64>() < density {
                let noise: f64 = rng.sample(rand_distr::StandardNormal);
                observed.push((i, j, x[(i, j)] + noise_sd * noise));
            }
        }
    }
    observed.shuffle(&mut rng);
    // A fully observed matrix stays fully observed; otherwise hold out 20%.
    let n_train = if density >= 1.0 {
        observed.len()
    } else {
        (0.8 * observed.len() as f64).round() as usize
    };
    let test = observed.split_off(n_train);
    let (train, _) = RatingMatrix::from_triplets(rows, cols, &observed)?;
    Ok(LowRankData { train, test })
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub ratings: RatingMatrix,
    pub duplicates: usize,
}

/// Reads `item<TAB>user<TAB>rating` lines with 0-based indices. Blank lines
/// and lines starting with `#` are skipped; for repeated `(item, user)` pairs
/// the last rating wins.
pub fn ingest_ratings(path: &Path) -> Result<Ingested> {
    let text = fs::read_to_string(path)?;
    let mut triples = Vec::new();
    let (mut rows, mut cols) = (0usize, 0usize);
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(parse_err(format!(
                "expected 3 tab-separated fields, found {}",
                fields.len()
            )));
        }
        let index = |s: &str, what: &str| -> Result<usize> {
            let v: i64 = s
                .parse()
                .map_err(|_| parse_err(format!("{what} index {s:?} is not an integer")))?;
            if v < 0 {
                return Err(Error::Index {
                    path: path.to_path_buf(),
                    line: line_no,
                    value: v,
                });
            }
            usize::try_from(v).map_err(|_| parse_err(format!("{what} index {v} is too large")))
        };
        let i = index(fields[0], "item")?;
        let j = index(fields[1], "user")?;
        let v: f64 = fields[2]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse_err(format!("rating {:?} is not a finite number", fields[2])))?;
        rows = rows.max(i + 1);
        cols = cols.max(j + 1);
        triples.push((i, j, v));
    }
    let (ratings, duplicates) = RatingMatrix::from_triplets(rows, cols, &triples)?;
    if duplicates > 0 {
        log::warn!(
            "{}: {duplicates} duplicate entries; kept the last value of each",
            path.display()
        );
    }
    Ok(Ingested { ratings, duplicates })
}
