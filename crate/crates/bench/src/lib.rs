//! Fixtures shared by the benchmarks.

use mcat_core::data::{generate_ball_data, generate_lowrank_data};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mcat_core::{CompletionProblem, GrassmannPoint, IntrinsicFrechet, Manifold, Sphere, SpherePoint};

/// Intrinsic Fréchet problem on `S^dim` with data in a ball of radius π/8.
pub fn frechet(n: usize, dim: usize) -> (Sphere, IntrinsicFrechet, SpherePoint) {
    let (_, data) = generate_ball_data(n, dim, std::f64::consts::FRAC_PI_8, 0).expect("valid sizes");
    let f = IntrinsicFrechet::new(&data).expect("non-empty data");
    (Sphere::new(dim), f, data[0].clone())
}

/// Synthetic completion problem with its starting subspace.
pub fn completion(rows: usize, cols: usize, rank: usize) -> (CompletionProblem, GrassmannPoint) {
    let data = generate_lowrank_data(rows, cols, rank, 0.15, 0.1, 0).expect("valid sizes");
    let (problem, _) = data.into_problem(0.01, rank).expect("λ > 0");
    let m = problem.manifold();
    let start = m.random_point(&mut ChaCha8Rng::seed_from_u64(1));
    (problem, start)
}
