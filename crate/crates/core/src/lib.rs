//! Approximation algorithms for the positive semidefinite Grothendieck problem
//! `max xᵀAx` over `x ∈ {-1, +1}ⁿ` with `A ⪰ 0`.
//!
//! The pipeline solves the semidefinite relaxation in factored form
//! ([`sdp`]), shrinks the factor width to the extreme-point bound without
//! changing the objective ([`rank_reduction`]), and rounds with random
//! hyperplanes ([`rounding`]). Small instances can be checked exactly with
//! [`oracle`]; [`gap`] builds the random instances used to probe how far the
//! relaxation can be from the discrete optimum.
//!
//! Monte Carlo rounding, the exhaustive oracle and experiment sweeps run on
//! rayon when the `parallel` feature is enabled (the default) and sequentially
//! otherwise, with identical results.

pub mod error;
pub mod gap;
pub mod instance;
pub mod linalg;
pub mod oracle;
mod par;
pub mod pipeline;
pub mod rank_reduction;
pub mod rng;
pub mod rounding;
pub mod sdp;

pub use error::{Error, Result};
pub use gap::{empirical_gap, expected_abs_projection, gap_sweep, gen_gap_instance, GapMethod, GapRecord};
pub use instance::{gen_laplacian, gen_random_gram, validate, ProblemInstance, TAU_PSD, TAU_RANK};
pub use oracle::brute_force_max;
pub use par::is_parallel;
pub use pipeline::{run_pipeline, PipelineConfig, PipelineResult};
pub use rank_reduction::{
    max_rank_bound, reduce_rank, reduce_rank_step, reduce_to_rank_of_a, triangular, RankReductionReport,
};
pub use rounding::{
    expected_value_exact, gamma, guaranteed_ratio, iqp_value, monte_carlo_round, positive_type_matrix,
    round_once, RoundingSummary, SignVector,
};
pub use sdp::{gram_to_factor, objective, solve_relaxation, FactorWidth, FactoredSolution, SolverConfig, TAU_FEAS};
