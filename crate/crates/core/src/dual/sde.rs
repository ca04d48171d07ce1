//! Euler–Maruyama paths of the dual diffusion, unconditioned and conditioned
//! never to hit 0.
//!
//! Conditioning adds `c(x) = σ²(x) s(x) / S(x) = ν x (1 - x) / R(x)` to the
//! drift. `c` is bounded (`c(0⁺) = ν`), so it is tabulated once in log form
//! on a logit grid and interpolated.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::speed::{speed_scale, SpeedScale};
use super::DualParams;
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::rng;

/// Increments larger than this are split in two.
const MAX_INCREMENT: f64 = 0.1;
const MAX_HALVINGS: u32 = 20;

/// A diffusion path on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffusionPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl DiffusionPath {
    pub fn last(&self) -> f64 {
        *self.values.last().expect("path has an initial value")
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["time", "p"])?;
        for (t, p) in self.times.iter().zip(&self.values) {
            out.write_record([fmt_f64(*t), fmt_f64(*p)])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_step(t: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
    }
    if !(dt < t) {
        return Err(Error::invalid(format!("dt = {dt} must be smaller than t = {t}")));
    }
    Ok((t / dt).round().max(1.0) as usize)
}

/// One Euler step of length `dt` driven by the Brownian increment `dw`,
/// split recursively (by Brownian bridge) while the increment is too large.
/// `finish` applies the boundary rule.
#[inline]
#[allow(clippy::too_many_arguments)]
fn euler<R: Rng + ?Sized>(
    x: f64,
    dt: f64,
    dw: f64,
    drift: &impl Fn(f64) -> f64,
    nu: f64,
    finish: &impl Fn(f64, f64) -> f64,
    depth: u32,
    rng: &mut R,
) -> f64 {
    let inc = drift(x) * dt + (nu * x * (1.0 - x)).max(0.0).sqrt() * dw;
    if inc.abs() <= MAX_INCREMENT || depth >= MAX_HALVINGS {
        return finish(x, x + inc);
    }
    let z: f64 = rng.sample(StandardNormal);
    let dw1 = 0.5 * dw + 0.5 * dt.sqrt() * z;
    let mid = euler(x, 0.5 * dt, dw1, drift, nu, finish, depth + 1, rng);
    if mid == 0.0 {
        return 0.0;
    }
    euler(mid, 0.5 * dt, dw - dw1, drift, nu, finish, depth + 1, rng)
}

/// Clamps to `[0, 1]`; 0 is absorbing.
#[inline]
fn absorb(_prev: f64, x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Reflects into `(0, 1]`; never returns 0.
#[inline]
fn reflect(prev: f64, x: f64) -> f64 {
    let mut y = x.abs();
    if y > 1.0 {
        y = (2.0 - y).max(0.0);
    }
    if y == 0.0 {
        0.5 * prev
    } else {
        y
    }
}

/// One unconditioned step from `x`; 0 stays 0.
#[inline]
pub(crate) fn step_unconditioned<R: Rng + ?Sized>(params: &DualParams, x: f64, dt: f64, rng: &mut R) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let z: f64 = rng.sample(StandardNormal);
    euler(x, dt, dt.sqrt() * z, &|p| params.drift(p), params.nu, &absorb, 0, rng)
}

/// Euler–Maruyama path of `dp = (-μ p + s p (1 - p)) dt + sqrt(ν p (1 - p)) dW`
/// from `p0` on `[0, t]`, clamped to `[0, 1]` with 0 absorbing.
pub fn sde_simulate(params: DualParams, p0: f64, t: f64, dt: f64, seed: u64) -> Result<DiffusionPath> {
    params.validate()?;
    if !(0.0..=1.0).contains(&p0) {
        return Err(Error::invalid(format!("p0 must lie in [0, 1], got {p0}")));
    }
    let steps = check_step(t, dt)?;
    let h = t / steps as f64;
    let mut rng = rng::stream(seed, 0);
    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    let mut x = p0;
    times.push(0.0);
    values.push(x);
    for i in 1..=steps {
        x = step_unconditioned(&params, x, h, &mut rng);
        times.push(i as f64 * h);
        values.push(x);
    }
    Ok(DiffusionPath { times, values })
}

/// Tabulated drift of the diffusion conditioned never to hit 0.
#[derive(Debug, Clone)]
pub struct ConditionedDrift {
    pub params: DualParams,
    u_min: f64,
    du: f64,
    ln_c: Vec<f64>,
}

impl ConditionedDrift {
    const U_RANGE: f64 = 40.0;
    const TABLE_SIZE: usize = 4097;

    pub fn new(params: DualParams) -> Result<Self> {
        let ss = speed_scale(params)?;
        Ok(Self::from_speed_scale(&ss))
    }

    fn from_speed_scale(ss: &SpeedScale) -> Self {
        let n = Self::TABLE_SIZE;
        let u_min = -Self::U_RANGE;
        let du = 2.0 * Self::U_RANGE / (n - 1) as f64;
        let ln_nu = ss.params.nu.ln();
        let ln_c = (0..n)
            .into_par_iter()
            .map(|i| {
                let u = u_min + i as f64 * du;
                let (x, cx) = logistic(u);
                ln_nu + x.ln() + cx.ln() - ss.ln_r(x, cx)
            })
            .collect();
        ConditionedDrift {
            params: ss.params,
            u_min,
            du,
            ln_c,
        }
    }

    /// The extra drift `c(x) = ν x (1 - x) s(x) / S(x)`.
    pub fn correction(&self, x: f64) -> f64 {
        if x >= 1.0 {
            return self.ln_c[self.ln_c.len() - 1].exp();
        }
        if x <= 0.0 {
            return self.ln_c[0].exp();
        }
        let u = x.ln() - (-x).ln_1p();
        let pos = ((u - self.u_min) / self.du).clamp(0.0, (self.ln_c.len() - 1) as f64);
        let i = (pos.floor() as usize).min(self.ln_c.len() - 2);
        let f = pos - i as f64;
        ((1.0 - f) * self.ln_c[i] + f * self.ln_c[i + 1]).exp()
    }

    /// `β*(x) = β(x) + c(x)`.
    #[inline]
    pub fn drift(&self, x: f64) -> f64 {
        self.params.drift(x) + self.correction(x)
    }

    /// One step of the conditioned diffusion; the result is in `(0, 1]`.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&self, x: f64, dt: f64, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        euler(x, dt, dt.sqrt() * z, &|p| self.drift(p), self.params.nu, &reflect, 0, rng)
    }

    /// Samples of one conditioned path at times `burn_in + i·spacing`,
    /// `i = 0..count`.
    pub fn sample_path<R: Rng + ?Sized>(
        &self,
        p0: f64,
        burn_in: f64,
        spacing: f64,
        count: usize,
        dt: f64,
        rng: &mut R,
    ) -> Vec<f64> {
        let mut x = p0;
        let advance = |x: &mut f64, span: f64, rng: &mut R| {
            let steps = (span / dt).round() as usize;
            for _ in 0..steps {
                *x = self.step(*x, dt, rng);
            }
        };
        advance(&mut x, burn_in, rng);
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            if i > 0 {
                advance(&mut x, spacing, rng);
            }
            out.push(x);
        }
        out
    }
}

fn logistic(u: f64) -> (f64, f64) {
    if u >= 0.0 {
        let e = (-u).exp();
        (1.0 / (1.0 + e), e / (1.0 + e))
    } else {
        let e = u.exp();
        (e / (1.0 + e), 1.0 / (1.0 + e))
    }
}

/// Euler–Maruyama path of the conditioned diffusion with drift `β*`, from
/// `p0 ∈ (0, 1]`. Requires `ν > 0`.
pub fn sde_simulate_conditioned(params: DualParams, p0: f64, t: f64, dt: f64, seed: u64) -> Result<DiffusionPath> {
    params.validate()?;
    if p0 == 0.0 {
        return Err(Error::invalid("the conditioned diffusion is undefined from p0 = 0"));
    }
    if !(p0 > 0.0 && p0 <= 1.0) {
        return Err(Error::invalid(format!("p0 must lie in (0, 1], got {p0}")));
    }
    let steps = check_step(t, dt)?;
    let drift = ConditionedDrift::new(params)?;
    let h = t / steps as f64;
    let mut rng = rng::stream(seed, 0);
    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    let mut x = p0;
    times.push(0.0);
    values.push(x);
    for i in 1..=steps {
        x = drift.step(x, h, &mut rng);
        times.push(i as f64 * h);
        values.push(x);
    }
    Ok(DiffusionPath { times, values })
}
