//! Ergodic exploration on directed region graphs.
//!
//! The crate covers four pieces:
//!
//! * [`graph`]: region graphs, distributions and column-stochastic transition
//!   matrices, with the structural checks they need.
//! * [`metrics`]: time-discounted averages, the `f_w` operator and the
//!   normalized ergodicity deviation (NED) with its convex upper bound.
//! * [`synthesis`]: the spectral programs (REMC, symmetric, reversible, FMMC)
//!   solved as `λ_max` minimization over the transition polytope.
//! * [`simulation`]: trajectory sampling, empirical time averages and the
//!   variance study of the time average.
//!
//! All matrices are **column-stochastic**: `P[(j, i)]` is the probability of
//! moving from region `i` to region `j`, `1ᵀP = 1ᵀ` and `ρ_{k+1} = P ρ_k`.

pub mod error;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod simulation;
pub mod synthesis;

pub use error::{Error, Result};
pub use graph::{
    check_strong_connectivity, metropolis_hastings, smooth_distribution, verify_chain, ChainReport, Distribution,
    RegionGraph, StochasticMatrix,
};
pub use metrics::{MetricReport, WeightSequence};
pub use synthesis::{ProgramKind, SolverMethod, SolverResult, SpectralProgram};
