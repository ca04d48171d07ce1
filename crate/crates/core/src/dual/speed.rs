//! Scale density `s`, scale function `S`, speed density `m` and the Q-process
//! stationary density `π*` of the dual diffusion.
//!
//! With `σ²(x) = ν x (1 - x)`:
//!
//! ```text
//! s(x) = exp(-2 s x / ν) (1 - x)^(-2μ/ν),   S(x) = ∫₀ˣ s,   m(x) = 1 / (σ²(x) s(x)).
//! ```
//!
//! `S(1)` is finite iff `μ < ν/2`. `m·S` is integrable on `(0, 1)` for every
//! `μ`, `m·S²` only for `μ < ν`. Everything is evaluated in log space because
//! for weak resampling these functions span thousands of orders of magnitude.
//! `S` is computed through `R(x) = S(x)/s(x) = ∫₀ˣ s(y)/s(x) dy`, whose
//! integrand is at most `exp(2 s x / ν)` and never overflows in log form.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::DualParams;
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::quadrature::{self, LogSum, Node};

const INNER_LN_TOL: f64 = 1e-12;
/// Outer grids reach down to `min(x, 1 - x) = 1e-200`.
const GRID_FLOOR: f64 = 1e-200;
/// Largest acceptable share of the normalizer carried by the outermost nodes.
const EDGE_SHARE: f64 = 1e-10;
/// Largest acceptable relative change of the normalizer between the grid
/// and its every-other-node subgrid.
const HALVING_TOL: f64 = 1e-7;

/// Speed and scale of the dual diffusion with `ν > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedScale {
    pub params: DualParams,
}

/// Builds the speed/scale evaluator.
pub fn speed_scale(params: DualParams) -> Result<SpeedScale> {
    params.validate()?;
    if !(params.nu > 0.0) {
        return Err(Error::invalid("speed and scale need nu > 0"));
    }
    Ok(SpeedScale { params })
}

fn check_open_unit(x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("x = {x} outside (0, 1)")))
    }
}

impl SpeedScale {
    fn a(&self) -> f64 {
        2.0 * self.params.s / self.params.nu
    }

    fn g(&self) -> f64 {
        2.0 * self.params.mu / self.params.nu
    }

    /// `ln s(x)` from `x` and `1 - x`.
    pub fn ln_s(&self, x: f64, cx: f64) -> f64 {
        let mut v = -self.a() * x;
        if self.g() != 0.0 {
            v -= self.g() * cx.ln();
        }
        v
    }

    /// Scale density; `s(0) = 1`.
    pub fn s(&self, x: f64) -> f64 {
        self.ln_s(x, 1.0 - x).exp()
    }

    /// `ln R(x)`, `R = S / s`.
    pub fn ln_r(&self, x: f64, cx: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let (a, g) = (self.a(), self.g());
        // y = x u, 1 - y = cx + x (1 - u)
        let inner = quadrature::unit_log_integral(
            |_u, cu| {
                let d = x * cu;
                let mut v = a * d;
                if g != 0.0 {
                    v -= g * (d / cx).ln_1p();
                }
                v
            },
            INNER_LN_TOL,
        );
        x.ln() + inner.ln_value
    }

    /// `ln S(x)` from `x` and `1 - x`.
    pub fn ln_scale(&self, x: f64, cx: f64) -> f64 {
        self.ln_r(x, cx) + self.ln_s(x, cx)
    }

    /// Scale function `S(x) = ∫₀ˣ s` for `x ∈ [0, 1]`; `S(1)` is `∞` unless
    /// `μ < ν/2`.
    pub fn scale(&self, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("x = {x} outside [0, 1]")));
        }
        if x == 0.0 {
            return Ok(0.0);
        }
        if x == 1.0 {
            return Ok(self.scale_at_one());
        }
        Ok(self.ln_scale(x, 1.0 - x).exp())
    }

    /// `S(1)`.
    pub fn scale_at_one(&self) -> f64 {
        if self.g() >= 1.0 {
            return f64::INFINITY;
        }
        let (a, g) = (self.a(), self.g());
        quadrature::unit_log_integral(|y, cy| -a * y - g * cy.ln(), INNER_LN_TOL)
            .ln_value
            .exp()
    }

    /// `ln m(x)` from `x` and `1 - x`.
    pub fn ln_m(&self, x: f64, cx: f64) -> f64 {
        -self.params.nu.ln() - x.ln() - cx.ln() - self.ln_s(x, cx)
    }

    /// Speed density on `(0, 1)`.
    pub fn m(&self, x: f64) -> Result<f64> {
        check_open_unit(x)?;
        Ok(self.ln_m(x, 1.0 - x).exp())
    }

    /// `ln (m·S^power)(x)`.
    pub fn ln_m_scale_pow(&self, x: f64, cx: f64, power: u32) -> f64 {
        let ln_r = self.ln_r(x, cx);
        // m·S = R / (ν x (1 - x))
        let base = ln_r - self.params.nu.ln() - x.ln() - cx.ln();
        match power {
            0 => self.ln_m(x, cx),
            _ => base + (power - 1) as f64 * (ln_r + self.ln_s(x, cx)),
        }
    }

    /// `ln ∫_{1/2}^{1-ε} m S^power`. Grows without bound as `ε → 0` exactly
    /// when `m S^power` fails to be integrable at 1.
    pub fn ln_tail_mass(&self, power: u32, eps: f64) -> f64 {
        let len = 0.5 - eps;
        quadrature::unit_log_integral(
            |u, cu| {
                let x = 0.5 + len * u;
                let cx = eps + len * cu;
                self.ln_m_scale_pow(x, cx, power)
            },
            1e-10,
        )
        .ln_value
            + len.ln()
    }
}

/// Which product of speed and scale is taken as the stationary density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PiStarForm {
    /// `m·S`, used when `μ ≥ ν`.
    SpeedTimesScale,
    /// `m·S²`, used when `μ < ν`.
    SpeedTimesScaleSquared,
}

impl PiStarForm {
    pub fn for_params(params: &DualParams) -> Self {
        if params.mu < params.nu {
            PiStarForm::SpeedTimesScaleSquared
        } else {
            PiStarForm::SpeedTimesScale
        }
    }

    fn power(self) -> u32 {
        match self {
            PiStarForm::SpeedTimesScale => 1,
            PiStarForm::SpeedTimesScaleSquared => 2,
        }
    }
}

/// A density tabulated on double-exponential nodes of `(0, 1)`.
///
/// `weights` are quadrature weights, so `Σ wᵢ vᵢ f(xᵢ)` approximates
/// `∫ f·density`. `complements` holds `1 - xᵢ` to full relative precision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityGrid {
    pub nodes: Vec<f64>,
    pub complements: Vec<f64>,
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
    pub normalized: bool,
    /// Log of the normalizing constant divided out of `values`.
    pub ln_normalizer: f64,
}

impl DensityGrid {
    /// Tabulates and normalizes `exp(ln_f)` on `grid_size` nodes.
    ///
    /// Fails when the density is not integrable to grid precision: the
    /// outermost nodes carry a visible share of the mass, or dropping every
    /// other node changes the normalizer.
    pub fn from_log_density(ln_f: impl Fn(f64, f64) -> f64 + Sync, grid_size: usize) -> Result<Self> {
        if grid_size < 64 {
            return Err(Error::invalid(format!("grid size must be >= 64, got {grid_size}")));
        }
        let n = if grid_size.is_multiple_of(2) { grid_size + 1 } else { grid_size };
        let t_max = quadrature::t_max_for_floor(GRID_FLOOR);
        let h = 2.0 * t_max / (n - 1) as f64;
        let half = (n / 2) as i64;
        let nodes: Vec<Node> = (-half..=half).map(|k| Node::at(k as f64 * h, h)).collect();
        let ln_terms: Vec<f64> = nodes
            .par_iter()
            .map(|nd| {
                let v = ln_f(nd.x, nd.cx);
                if v.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    v
                }
            })
            .collect();
        if let Some(i) = ln_terms.iter().position(|v| *v == f64::INFINITY) {
            return Err(Error::numerical(
                "density is infinite at a grid node",
                vec![("x", nodes[i].x), ("one_minus_x", nodes[i].cx)],
            ));
        }
        let mut all = LogSum::default();
        let mut even = LogSum::default();
        for (i, (nd, lv)) in nodes.iter().zip(&ln_terms).enumerate() {
            let term = lv + nd.w.ln();
            all.add(term);
            if i % 2 == 0 {
                even.add(term + 2f64.ln());
            }
        }
        let ln_z = all.ln();
        if !ln_z.is_finite() {
            return Err(Error::numerical("normalizer is not finite", vec![("ln_normalizer", ln_z)]));
        }
        let last = nodes.len() - 1;
        let ln_edge = [0, 1, last - 1, last]
            .iter()
            .map(|&i| ln_terms[i] + nodes[i].w.ln())
            .fold(LogSum::default(), |mut acc, v| {
                acc.add(v);
                acc
            })
            .ln();
        let edge_share = (ln_edge - ln_z).exp();
        let halving = (even.ln() - ln_z).exp_m1().abs();
        if edge_share > EDGE_SHARE || halving > HALVING_TOL {
            return Err(Error::numerical(
                "normalizer does not converge on the grid (density not integrable or under-resolved)",
                vec![
                    ("edge_share", edge_share),
                    ("halving_change", halving),
                    ("ln_normalizer", ln_z),
                    ("grid_size", n as f64),
                ],
            ));
        }
        Ok(DensityGrid {
            nodes: nodes.iter().map(|nd| nd.x).collect(),
            complements: nodes.iter().map(|nd| nd.cx).collect(),
            weights: nodes.iter().map(|nd| nd.w).collect(),
            values: ln_terms.iter().map(|lv| (lv - ln_z).exp()).collect(),
            normalized: true,
            ln_normalizer: ln_z,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `∫ f(x, 1 - x) · density(x) dx`.
    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.complements)
            .zip(self.weights.iter().zip(&self.values))
            .map(|((&x, &cx), (&w, &v))| if v > 0.0 { w * v * f(x, cx) } else { 0.0 })
            .sum()
    }

    /// Total mass, 1 for a normalized grid.
    pub fn mass(&self) -> f64 {
        self.integrate(|_, _| 1.0)
    }

    /// Distribution function on the grid, by cumulative quadrature.
    pub fn cdf(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for (i, &xi) in self.nodes.iter().enumerate() {
            if xi > x {
                break;
            }
            acc += self.weights[i] * self.values[i];
        }
        acc.min(1.0)
    }

    /// Multiplies the density by `g` and renormalizes.
    pub fn reweighted(&self, g: impl Fn(f64) -> f64) -> DensityGrid {
        let mut out = self.clone();
        for (v, &x) in out.values.iter_mut().zip(&self.nodes) {
            *v *= g(x);
        }
        let z = out.mass();
        for v in &mut out.values {
            *v /= z;
        }
        out.ln_normalizer += z.ln();
        out
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x", "weight", "value"])?;
        for i in 0..self.len() {
            out.write_record([fmt_f64(self.nodes[i]), fmt_f64(self.weights[i]), fmt_f64(self.values[i])])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Tabulates `m·S^power` normalized to a density.
pub fn speed_scale_density(ss: &SpeedScale, form: PiStarForm, grid_size: usize) -> Result<DensityGrid> {
    let power = form.power();
    DensityGrid::from_log_density(|x, cx| ss.ln_m_scale_pow(x, cx, power), grid_size)
}

/// Stationary density of the dual diffusion conditioned never to hit 0:
/// `∝ m·S²` when `μ < ν` and `∝ m·S` when `μ ≥ ν`.
pub fn pi_star(params: DualParams, grid_size: usize) -> Result<DensityGrid> {
    let ss = speed_scale(params)?;
    if !(params.mu > 0.0) {
        return Err(Error::invalid("pi_star needs mu > 0"));
    }
    speed_scale_density(&ss, PiStarForm::for_params(&params), grid_size)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ss(s: f64, nu: f64, mu: f64) -> SpeedScale {
        speed_scale(DualParams::new(s, nu, mu).unwrap()).unwrap()
    }

    #[test]
    fn scale_density_at_zero() {
        assert_eq!(ss(1.0, 0.6, 1.0).s(0.0), 1.0);
    }

    #[test]
    fn closed_form_scale() {
        // μ = ν/2, s = 0: s(x) = 1/(1-x), S(x) = -ln(1-x)
        let f = ss(0.0, 1.0, 0.5);
        for x in [1e-6, 0.1, 0.5, 0.9, 0.999999] {
            assert!((f.s(x) - 1.0 / (1.0 - x)).abs() < 1e-12 / (1.0 - x));
            let exact = -(-x).ln_1p();
            let got = f.scale(x).unwrap();
            assert!((got / exact - 1.0).abs() < 1e-11, "x={x}: {got} vs {exact}");
        }
        assert_eq!(f.scale_at_one(), f64::INFINITY);
    }

    #[test]
    fn scale_at_one_finite_iff_mu_below_half_nu() {
        assert!(ss(1.0, 1.0, 0.3).scale_at_one().is_finite());
        assert_eq!(ss(1.0, 1.0, 0.5).scale_at_one(), f64::INFINITY);
        assert_eq!(ss(1.0, 1.0, 0.8).scale_at_one(), f64::INFINITY);
        // s = 0, μ = ν/4: S(1) = ∫ (1-x)^{-1/2} = 2
        assert!((ss(0.0, 1.0, 0.25).scale_at_one() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn speed_domain() {
        let f = ss(1.0, 0.6, 1.0);
        assert!(matches!(f.m(0.0), Err(Error::Domain(_))));
        assert!(matches!(f.m(1.2), Err(Error::Domain(_))));
        let x: f64 = 0.3;
        let expect = (2.0 * x / 0.6).exp() * (1.0 - x).powf(2.0 / 0.6 - 1.0) / (0.6 * x);
        assert!((f.m(x).unwrap() / expect - 1.0).abs() < 1e-13);
    }

    #[test]
    fn pi_star_normalizes_and_is_stable() {
        for (s, nu, mu) in [(1.0, 0.6, 1.0), (1.0, 2.0, 0.5), (1.1, 1e-4, 1.0), (0.5, 1.0, 0.3)] {
            let dp = DualParams::new(s, nu, mu).unwrap();
            let a = pi_star(dp, 2048).unwrap();
            let b = pi_star(dp, 4096).unwrap();
            assert!((a.mass() - 1.0).abs() < 1e-12);
            assert!((a.ln_normalizer - b.ln_normalizer).abs() < 1e-6, "{s} {nu} {mu}");
        }
    }

    #[test]
    fn scale_squared_diverges_when_mu_at_least_nu() {
        let f = ss(1.0, 0.6, 1.0);
        let t: Vec<f64> = [1e-4, 1e-8, 1e-16].iter().map(|&e| f.ln_tail_mass(2, e)).collect();
        assert!(t[1] > t[0] + 5.0 && t[2] > t[1] + 10.0, "{t:?}");
        let once: Vec<f64> = [1e-4, 1e-8, 1e-16].iter().map(|&e| f.ln_tail_mass(1, e)).collect();
        assert!((once[2] - once[1]).abs() < 1e-3);
        let err = speed_scale_density(&f, PiStarForm::SpeedTimesScaleSquared, 1024).unwrap_err();
        assert!(matches!(err, Error::NumericalFailure { .. }));
    }

    #[test]
    fn csv_header() {
        let g = pi_star(DualParams::new(1.0, 0.6, 1.0).unwrap(), 128).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("x,weight,value\n"));
    }
}
