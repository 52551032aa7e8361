//! Monte Carlo iterates for Kolmogorov equations driven by subordinated
//! Brownian noise.
//!
//! The engine approximates `P_{s,t} u0(x) = P(|X_t| > R)` for the semilinear
//! equation `dX = (AX + B0(t, X)) dt + sqrt(Q) dW_L`, where `L` is an
//! alpha-stable subordinator, by a series of iterates built on top of the
//! Ornstein-Uhlenbeck process `dZ = (AZ + f) dt + sqrt(Q) dW_L`. All
//! randomness lives in a [`SimulationBank`] that is generated once and reused
//! across starting points, noise strengths and drifts.

// Negated comparisons are deliberate: they reject NaN along with out-of-range
// values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod bank;
pub mod error;
pub mod estimators;
pub mod fields;
pub mod flow;
pub mod model;
pub mod rng;
pub mod stable;

pub use error::{Error, Result};
pub use fields::{effective_drift, eval_field, soft_abs, soft_max, VectorField};
pub use flow::{forcing_convolution, solve_flow, FlowSolver, ForcingTable, TimeShift};
pub use model::{
    covariance_deterministic_clock, euclidean_norm, indicator_observable, propagator,
    DiagonalOperator, ProblemSpec, SpecHash, TimeGrid,
};
pub use rng::{derive_seed, stream_rng, StreamKind};
pub use stable::{
    laplace_exponent, sample_stable_increment, sample_subordinator_path, validate_sampler,
    LaplaceCheck, StableIncrementSampler, SubordinatorPath,
};
pub use bank::{
    bank_load_count, convolution_segment, covariance_integral, generate_bank, generated_path_count,
    load_bank, ou_endpoint, save_bank, BankConfig, BankHeader, ClockSource, ConvolutionRecord,
    CovarianceTable, Precision, SimulationBank,
};
pub use estimators::{
    em_benchmark, em_benchmark_series, mean_and_std_error, ou_gradient, ou_gradient_with, pairwise_sum,
    partial_sums, v0_estimate, v0_estimate_with, v0_samples, v1_estimate, vn_estimate, vn_estimate_with,
    vn_samples, EmScheme, EstimateMeta, IterateEstimate, Observable,
    PartialSumReport, PartialSumRow, QueryParams,
};
