// Positivity checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalyst;
pub mod completion;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod frechet;
pub mod grassmann;
pub mod manifold;
pub mod objective;
pub mod solver;
pub mod sphere;

pub use catalyst::{a1_adapt, a2_run, alpha_next, check_c1, Branch, CatalystConfig, OuterRecord, OuterTrace};
pub use completion::{CompletionObjective, CompletionProblem, Rating, RatingMatrix};
pub use error::{Error, Result};
pub use frechet::{closed_form_extrinsic_mean, ExtrinsicFrechet, IntrinsicFrechet, RingObjective};
pub use grassmann::{principal_angles, subspace_distance, Grassmann, GrassmannPoint};
pub use manifold::{retraction_distance, Manifold};
pub use objective::{gradient_check, Objective, ProxSurrogate};
pub use solver::{armijo_step, rgd_run, solve_subproblem, LineSearchConfig, SolverRecord, SolverTrace, StopReason};
pub use sphere::{geodesic_distance, Sphere, SpherePoint};
