//! Weak-competition approximation.
//!
//! For small `ν` the conditioned diffusion stays near `p̄ = 1 - μ/s`, where
//! the linearised equation has a Beta stationary law
//!
//! ```text
//! φ(p) ∝ p^(2α p̄ - 1) (1 - p)^(2α (1 - p̄) - 1),
//! ```
//!
//! and `I_k = ∫ (1 - (1 - ζ)^k) φ = 1 - Π_{j<k} (2ν₁ + j) / (2ν₁ + 2ν₂ + j)`
//! with `ν₁ = α (1 - p̄)`, `ν₂ = α p̄`.

use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF};

use crate::dual::{DensityGrid, DualParams};
use crate::error::{Error, Result};

/// Choice of the concentration `α`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AlphaConvention {
    /// `α = 2 s p̄ / ν = 2 (s - μ) / ν`.
    TwiceGrowth,
    /// `α = s (s - μ) / ν`.
    SelectionWeighted,
    /// `α = (s - μ) / ν`, the value that matches the linearised drift
    /// `-(s - μ)(p - p̄)` and noise `ν p (1 - p)`.
    Linearised,
}

impl AlphaConvention {
    pub const ALL: [AlphaConvention; 3] = [
        AlphaConvention::TwiceGrowth,
        AlphaConvention::SelectionWeighted,
        AlphaConvention::Linearised,
    ];

    pub fn alpha(self, params: &DualParams) -> f64 {
        let growth = params.s - params.mu;
        match self {
            AlphaConvention::TwiceGrowth => 2.0 * growth / params.nu,
            AlphaConvention::SelectionWeighted => params.s * growth / params.nu,
            AlphaConvention::Linearised => growth / params.nu,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AlphaConvention::TwiceGrowth => "2(s-mu)/nu",
            AlphaConvention::SelectionWeighted => "s(s-mu)/nu",
            AlphaConvention::Linearised => "(s-mu)/nu",
        }
    }
}

/// The Beta approximation `φ` for one convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakBeta {
    pub alpha: f64,
    pub p_bar: f64,
    pub nu1: f64,
    pub nu2: f64,
}

impl WeakBeta {
    pub fn new(params: &DualParams, convention: AlphaConvention) -> Result<Self> {
        params.validate()?;
        if !(params.s > params.mu) {
            return Err(Error::UnsupportedRegime(format!(
                "weak-competition approximation needs s > mu, got s = {}, mu = {}",
                params.s, params.mu
            )));
        }
        if !(params.nu > 0.0) {
            return Err(Error::invalid("weak-competition approximation needs nu > 0"));
        }
        let alpha = convention.alpha(params);
        let p_bar = 1.0 - params.mu / params.s;
        Ok(WeakBeta {
            alpha,
            p_bar,
            nu1: alpha * (1.0 - p_bar),
            nu2: alpha * p_bar,
        })
    }

    /// Beta shape parameters `(2 α p̄, 2 α (1 - p̄))`.
    pub fn shapes(&self) -> (f64, f64) {
        (2.0 * self.nu2, 2.0 * self.nu1)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (a, b) = self.shapes();
        Beta::new(a, b).expect("positive shapes").cdf(x)
    }

    /// `ln (1 - I_k) = Σ_{j<k} ln((2ν₁ + j) / (2ν₁ + 2ν₂ + j))`.
    fn ln_miss(&self, k: usize) -> f64 {
        let two_alpha = 2.0 * (self.nu1 + self.nu2);
        (0..k).map(|j| (-2.0 * self.nu2 / (two_alpha + j as f64)).ln_1p()).sum()
    }

    /// `I_k = ∫ (1 - (1 - ζ)^k) φ(ζ) dζ`.
    pub fn survival_integral(&self, k: usize) -> f64 {
        -self.ln_miss(k).exp_m1()
    }

    /// `φ` tabulated on a quadrature grid.
    pub fn density(&self, grid_size: usize) -> Result<DensityGrid> {
        let (a, b) = self.shapes();
        DensityGrid::from_log_density(|x, cx| (a - 1.0) * x.ln() + (b - 1.0) * cx.ln(), grid_size)
    }
}

/// `r*_{k+1,k} ≈ I_{k+1} / I_k` under the Beta approximation.
pub fn r_star_weak(params: &DualParams, k: usize, convention: AlphaConvention) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("k must be >= 1"));
    }
    let beta = WeakBeta::new(params, convention)?;
    let (lo, hi) = (beta.ln_miss(k), beta.ln_miss(k + 1));
    Ok(hi.exp_m1() / lo.exp_m1())
}

/// The `ν → 0` limit `(1 - ρ^{k+1}) / (1 - ρ^k)`, `ρ = μ / s`.
pub fn r_star_weak_limit(s: f64, mu: f64, k: usize) -> Result<f64> {
    if !(s > mu && mu >= 0.0) {
        return Err(Error::UnsupportedRegime(format!("need s > mu >= 0, got s = {s}, mu = {mu}")));
    }
    let ln_rho = (mu / s).ln();
    Ok(((k + 1) as f64 * ln_rho).exp_m1() / (k as f64 * ln_rho).exp_m1())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limit_example() {
        assert!((r_star_weak_limit(1.0, 0.5, 1).unwrap() - 1.5).abs() < 1e-15);
        assert!(r_star_weak_limit(1.0, 1.2, 1).is_err());
    }

    #[test]
    fn vanishing_nu_reaches_limit() {
        for k in [1, 2, 5, 20, 1000] {
            let dp = DualParams::new(1.1, 1e-12, 1.0).unwrap();
            let r = r_star_weak(&dp, k, AlphaConvention::SelectionWeighted).unwrap();
            let lim = r_star_weak_limit(1.1, 1.0, k).unwrap();
            assert!((r - lim).abs() < 1e-8, "k={k}: {r} vs {lim}");
        }
    }

    #[test]
    fn unsupported_regime() {
        let dp = DualParams::new(1.0, 0.1, 1.2).unwrap();
        assert!(matches!(
            r_star_weak(&dp, 1, AlphaConvention::TwiceGrowth),
            Err(Error::UnsupportedRegime(_))
        ));
    }

    #[test]
    fn gamma_products_match_quadrature() {
        let dp = DualParams::new(1.1, 0.05, 1.0).unwrap();
        let beta = WeakBeta::new(&dp, AlphaConvention::Linearised).unwrap();
        let grid = beta.density(4096).unwrap();
        for k in [1, 3, 10] {
            let quad = grid.integrate(|_, cx| 1.0 - cx.powi(k as i32));
            assert!((quad / beta.survival_integral(k) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn finite_for_large_k() {
        let dp = DualParams::new(1.1, 1e-4, 1.0).unwrap();
        for k in [1, 10, 100, 1000] {
            for conv in AlphaConvention::ALL {
                assert!(r_star_weak(&dp, k, conv).unwrap().is_finite());
            }
        }
    }
}
