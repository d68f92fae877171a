//! Adaptive tests of a null slope in the functional linear model
//! `Y = ⟨X, θ⟩ + ε`.
//!
//! The crate provides functional principal component analysis on a
//! quadrature grid, the projection statistic `φ_k` and its exact Fisher
//! calibration, adaptive tests over a dyadic collection of dimensions
//! (Bonferroni and Monte-Carlo weights), a test of `θ` lying in a known
//! finite-dimensional subspace, separation-rate calculators and a
//! simulation harness.

pub mod adaptive;
pub mod error;
pub mod fda;
pub mod linalg;
pub mod numerics;
pub mod simulation;
pub mod theory;

pub use adaptive::{
    adaptive_test, bonferroni_weight, dimension_collection, monte_carlo_weight, null_basis_scores, subspace_test, AdaptiveTestResult,
    AdaptiveTester, Calibration, CalibrationWeight, DimensionCollection, DimensionOutcome, Method,
};
pub use error::{FlmError, Result};
pub use fda::{center_sample, fpca, fpca_with_route, inner_product, FpcaResult, FpcaRoute, FunctionalSample, Grid};
pub use flm_test::{
    akdelta_norm, build_projection, build_subspace_projection, parametric_test, parametric_test_with, phi_statistic,
    ParametricTestResult, ProjectionContext,
};
pub use numerics::{
    chi2_upper_quantile, chi2_upper_tail, fisher_density, fisher_upper_quantile, fisher_upper_tail, RngStream, TailProb,
};
pub use simulation::{
    bias_term, make_theta_g, make_theta_kl, run_experiment, simulate_design, ExperimentPlan, ExperimentResult,
    MethodOutcome, ProcessConfig, ProcessSpec, SlopeSpec,
};
pub use theory::{
    adaptive_rate, check_assumption_b2, optimal_dimension, separation_rate, EllipsoidSpec, RateReport,
};
