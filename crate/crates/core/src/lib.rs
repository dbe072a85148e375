//! Multi-task optimization with relative-rate variance regularization.
//!
//! Each step the per-task gradients are balanced by a min-norm solver,
//! a mirror-ascent player reweights tasks by their loss-to-gradient-norm
//! ratio inside a KL ball around uniform weights, and the two weightings
//! are merged into the coefficients of a plain gradient step. Linear
//! scalarization, MGDA, IMTL-G and BanditMTL are provided for comparison,
//! together with synthetic problems and a trajectory-recording harness.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod harness;
pub mod minnorm;
pub mod mirror;
pub mod problems;
pub mod rates;
pub mod types;
pub mod weighting;

pub use error::{MtlError, Result};
pub use harness::{run, run_grid, GridConfig, RunConfig, RunResult};
pub use minnorm::{minnorm_2, minnorm_fw, MinNormSolution};
pub use mirror::{player_init, player_step, PlayerState};
pub use problems::{build_problem, fd_gradient, Problem, ProblemSpec, SynthRegConfig};
pub use rates::{effective_weights, gradient_norm, relative_rates};
pub use types::{EmtlConfig, GradientSet, ParamVector, RelativeRates, TaskEvaluation, TrajectoryRecord, WeightVector};
pub use weighting::{
    banditmtl_step, emtl_step, emtl_step_with, imtl_g_step, linear_scalarization, mgda_step, GradientBalancer,
    MgdaBalancer, Strategy, StrategyOutput, Weighter,
};
