//! Primal-dual Monte Carlo bounds for discrete-time reflected BSDEs
//!
//! `Y_i = max{S_i, E_i[Y_{i+1}] + f(Y_i, E_i[β_{i+1} Y_{i+1}]) Δ_i}`, `Y_n = S_n`.
//!
//! A least-squares fit ([`lsmc`]) supplies approximations `(ỹ, q̃, z̃)`; the
//! pathwise recursions in [`upper`] and [`lower`] turn them into upward- and
//! downward-biased estimators of `Y_0`, and [`confidence`] combines the two
//! into an asymptotic 95% interval. [`oracle`] solves small trees exactly.

pub mod closed_form;
pub mod confidence;
pub mod engine;
pub mod error;
pub mod generator;
pub mod inputs;
pub mod lower;
pub mod lsmc;
pub mod normal;
pub mod oracle;
pub mod payoff;
pub mod problem;
pub mod rng;
pub mod sim;
pub mod solve;
pub mod upper;

pub use closed_form::{Basis, BasisPreset};
pub use confidence::{ci95, ConfidenceInterval};
pub use engine::{run_bounds, run_bounds_multi, BoundsRun, Flavor, PathSample, RunSettings};
pub use error::{Error, Result};
pub use generator::{CreditParams, Driver, Envelope, FundingParams, Shape, Side};
pub use inputs::{InnerMode, PathInput};
pub use lsmc::{fit, regression_paths, Approximation, FitMode, Triple};
pub use oracle::ExactTree;
pub use payoff::{Barrier, Payoff, PayoffKind};
pub use problem::Problem;
pub use sim::{GbmModel, Simulator, TimeGrid, Truncation};
pub use upper::{DualSolver, Estimate};
