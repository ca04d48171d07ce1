//! The Wright–Fisher side of the duality.
//!
//! A Moran population of `N` individuals carries types `a` (favoured) and
//! `A`. Mutation `a → A` happens at rate `μ` per individual, resampling
//! `i ← j` at rate `ν/2` per ordered pair and selection at rate `s/N` per
//! ordered pair. Traced backwards, the lineages of a sample form a
//! branching-coalescing system whose size `κ` jumps like the logistic chain
//! with `b = s`, `d = μ`, `c = ν/2`. As `N → ∞` the frequency of `a` solves
//!
//! ```text
//! dp = (-μ p + s p (1 - p)) dt + sqrt(ν p (1 - p)) dW,   p₀ = 1,
//! ```
//!
//! and `P(κ_t > 0 | κ₀ = k) = E[1 - (1 - p_t)^k]`.

pub mod moran;
pub mod sde;
pub mod speed;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;

pub use moran::{asg_trace, coupled_divergence, moran_simulate, AsgTrace, MoranEvent, MoranEventKind, MoranRealization};
pub use sde::{sde_simulate, sde_simulate_conditioned, ConditionedDrift, DiffusionPath};
pub use speed::{pi_star, speed_scale, DensityGrid, PiStarForm, SpeedScale};

/// Selection `s`, resampling `ν` and mutation `μ` rates of the dual model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualParams {
    pub s: f64,
    pub nu: f64,
    pub mu: f64,
}

impl DualParams {
    pub fn new(s: f64, nu: f64, mu: f64) -> Result<Self> {
        let dp = DualParams { s, nu, mu };
        dp.validate()?;
        Ok(dp)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("s", self.s), ("nu", self.nu), ("mu", self.mu)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Dual of the logistic chain: `s = b`, `μ = d`, `ν = 2c`.
    pub fn from_model(p: &ModelParams) -> Self {
        DualParams {
            s: p.b,
            nu: 2.0 * p.c,
            mu: p.d,
        }
    }

    /// The logistic chain followed by the lineage count as `N → ∞`.
    pub fn to_model(&self) -> Result<ModelParams> {
        ModelParams::new(self.s, self.nu / 2.0, self.mu)
    }

    /// Drift `β(p) = -μ p + s p (1 - p)`.
    #[inline]
    pub fn drift(&self, p: f64) -> f64 {
        -self.mu * p + self.s * p * (1.0 - p)
    }

    /// Diffusion coefficient `σ²(p) = ν p (1 - p)`.
    #[inline]
    pub fn variance(&self, p: f64) -> f64 {
        self.nu * p * (1.0 - p)
    }

    /// `1 / max(s, μ, ν)`, the fastest time scale of the diffusion.
    pub fn characteristic_time(&self) -> f64 {
        let r = self.s.max(self.mu).max(self.nu);
        if r > 0.0 {
            1.0 / r
        } else {
            1.0
        }
    }

    /// Default Euler step, `10⁻³` characteristic times.
    pub fn default_dt(&self) -> f64 {
        1e-3 * self.characteristic_time()
    }
}
