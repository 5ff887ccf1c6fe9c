//! Parametric modeling of mono-component non-stationary signals with the
//! amplitude-and-phase-modulated sinusoid (APMS)
//!
//! ```text
//! x[n] = A cos φ[n] + (s A k_a / 2) cos(φ[n] + ω_a n + θ_a)
//!                   + (r A k_a / 2) cos(φ[n] − ω_a n − θ_a − θ_b),
//! φ[n] = ω_c n + k_p sin(ω_p n) + θ
//! ```
//!
//! The crate synthesizes such signals, estimates all parameters of a block
//! from its samples ([`estimate_block`]), and tracks slowly varying
//! parameters over long records with per-block estimates joined by
//! polynomials ([`run_blocks`]).
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix `f64`.
//!
//! ```
//! use apms::{estimate_block, synthesize, EstimatorConfig, Params};
//!
//! let truth = Params::table1();
//! let block = synthesize(&truth, 0, 251)?;
//! let report = estimate_block(&block, &EstimatorConfig::default())?;
//! assert!((report.params.omega_c - truth.omega_c).abs() < 1e-4);
//! assert!(report.residual_nrmse < 1e-3);
//! # Ok::<(), apms::ApmsError>(())
//! ```

// NaN-rejecting range checks are written as `!(x > lo)`.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bessel;
pub mod block_pipeline;
pub mod error;
pub mod frequency_estimator;
pub mod harmonic_solver;
pub mod io_noise;
pub mod linalg;
pub mod param_estimator;
pub mod product_function;
pub mod scalar;
pub mod signal_model;
pub mod spectral;

pub use block_pipeline::{
    block_symmetry, fit_parameter_polynomials, plan_blocks, reconstruction_error, regenerate, run_blocks,
    BlockPlan, BlockSettings, SymmetryScore,
};
pub use error::{ApmsError, Result};
pub use frequency_estimator::{FrequencyTriple, PeakCluster};
pub use io_noise::{add_awgn, read_series, write_series};
pub use param_estimator::{estimate_block, Averaging, EstimationReport, EstimatorConfig};
pub use scalar::Scalar;
pub use signal_model::{
    synthesize, synthesize_time_varying, ApmsParams, ParamPolynomial, SampleSeries, TimeVaryingModel,
};

/// `f64` parameters.
pub type Params = ApmsParams<f64>;
/// `f64` samples.
pub type Series = SampleSeries<f64>;
/// `f64` estimation report.
pub type Report = EstimationReport<f64>;
/// `f64` time-varying model.
pub type Model = TimeVaryingModel<f64>;
