//! Equilibria of large heterogeneous static mean-field games.
//!
//! Each of `n` agents picks an action in `[a, b]` to maximize
//! `u(x_i, z_i, alpha_i)`, where `z_i` is the average action of the other
//! agents and `alpha_i` a private parameter. The crate computes the finite-`n`
//! Nash equilibrium, the asymptotic equilibrium mean (AEM) that all
//! equilibrium means approach as `n` grows, three cheaper AEM approximations
//! and their error bounds.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aem;
pub mod bounds;
pub mod cli;
pub mod config;
pub mod distribution;
pub mod error;
pub mod game;
pub mod harness;
pub mod lipschitz;
pub mod maximize;
pub mod ne;
pub mod quadrature;
pub mod quantize;

pub use aem::{ane_strategy, evaluate_f, solve_aem, solve_aem_from, AemMethod, AemResult, ExpectationEvaluator};
pub use bounds::{
    communication_cost, prop1_bound, prop2_bound, prop3_explicit_bound, prop4_bound, BoundKind, BoundReport,
    CommunicationCost,
};
pub use distribution::ParameterDistribution;
pub use error::{MfgError, Result};
pub use game::{mean_excluding, GameSpec, Population, UtilityFamily};
pub use harness::{emit_results, run_sweep, sample_population, ExperimentSpec, OutputFormat, SweepReport, SweepRow};
pub use lipschitz::{estimate_lipschitz, estimate_lipschitz_on_params, LipschitzEstimates};
pub use ne::{brute_force_ne, solve_ne, EquilibriumResult, SolverConfig};
pub use quantize::{
    alpha_quantized_aem, cell_probabilities, empirical_aem, quantized_dist_aem, QuantizedHistogram, Quantizer,
};
