//! Model-free LQR gain synthesis by extremum seeking, together with the
//! model-based oracles (Lyapunov, Riccati, averaged dynamics) used to
//! verify it.

// comparisons like `!(x > 0.0)` are negated on purpose so that NaN fails them
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averaging;
pub mod dfim;
pub mod dither;
pub mod error;
pub mod esc;
pub mod linalg;
pub mod lti_cost;
pub mod riccati;

pub use dfim::{build_dfim, random_cost, DfimParams, DfimPreset};
pub use dither::{
    canonical_spec, dither_matrix, verify_orthonormality, DitherSpec, OrthonormalityReport,
};
pub use error::{Error, Result};
pub use esc::{
    esc_step, run, run_with, CostOracle, EscParams, EscState, FilterInit, IterationRecord, Probes,
    RunLog, RunStatus, RunSummary, SimulatedOracle,
};
pub use lti_cost::{
    closed_loop, exact_gradient, infinite_cost, is_schur, is_stabilizing, simulate_rollout,
    solve_discrete_lyapunov, truncated_cost, CostSpec, LtiPlant, Rollout,
};
pub use riccati::{solve_dare, DareSolution};
