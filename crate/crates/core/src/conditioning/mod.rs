//! Transition rates of the chain conditioned on survival.
//!
//! Conditioned on survival up to `T`, the chain in state `k` at time `t`
//! jumps with rates
//!
//! ```text
//! q^T_{k,k±1}(t) = q_{k,k±1} · r^T_{k±1,k}(T - t),
//! r^T_{i,j}(τ) = E[1 - (1 - p_τ)^i] / E[1 - (1 - p_τ)^j],
//! ```
//!
//! with `p` the dual diffusion started at 1. Letting `T → ∞` gives the
//! Q-process, whose rates use `∫ (1 - (1 - ζ)^k) π*(dζ)` instead.

mod moments;
mod rates;
mod scaling;
mod weak;

pub use moments::{survival_moments, survival_moments_at, survival_moments_moran, SurvivalMoments};
pub use rates::{
    q_stationary, rate_table_q, rate_table_q_from_density, rate_table_t, rate_table_t_moran, sandwich_violations,
    simulate_occupation, RateKind, RateTable, StationaryPmf, DEFAULT_GRID_SIZE,
};
pub use scaling::{scaling_check, ScalingReport, ScalingRow};
pub use weak::{r_star_weak, r_star_weak_limit, AlphaConvention, WeakBeta};
