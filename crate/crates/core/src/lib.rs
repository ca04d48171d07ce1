//! Simulation and numerics for the logistic branching process conditioned on
//! non-extinction.
//!
//! The chain `Z` jumps `i → i+1` at rate `b·i` and `i → i-1` at rate
//! `d·i + c·i·(i-1)`. Conditioning on survival is handled through the
//! Wright–Fisher diffusion dual to `Z` (selection `s = b`, mutation `μ = d`,
//! resampling `ν = 2c`):
//!
//! * [`model`]: exact simulation of `Z`, with or without genealogy;
//! * [`dual`]: the Moran model and its ancestral graph, the dual diffusion,
//!   its speed and scale, and the stationary density `π*`;
//! * [`conditioning`]: conditioned rates `q^T` and `q*`, the Q-process
//!   stationary law, the weak-competition approximation and the Feller
//!   scaling check;
//! * [`genealogy`]: the Q-process coalescent, reconstructed trees and the γ
//!   statistic;
//! * [`yaglom`]: the Yaglom limit by recursion, Feynman–Kac and simulation.

// NaN must fail argument checks, hence `!(x > 0.0)` style guards.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conditioning;
pub mod dual;
pub mod error;
pub mod genealogy;
pub mod io;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod stats;
pub mod yaglom;

pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use model::{ModelParams, Trajectory};
