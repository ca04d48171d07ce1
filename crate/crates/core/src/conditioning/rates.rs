use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use super::moments::{survival_moments, survival_moments_moran, SurvivalMoments};
use crate::dual::{pi_star, DensityGrid, DualParams};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::model::ModelParams;
use crate::rng;

/// Nodes in the `π*` grid used by [`rate_table_q`].
pub const DEFAULT_GRID_SIZE: usize = 4096;
/// Numerical slack allowed in the sandwich bounds.
const BOUND_SLACK: f64 = 1e-9;
/// Largest tail mass beyond the cap accepted by [`q_stationary`].
const MAX_TAIL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RateKind {
    /// Conditioned on survival to `horizon`, rates at time `t`.
    FixedT { horizon: f64, t: f64 },
    QProcess,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RateDiagnostics {
    /// `r_{k+1,k}` for `k = 1..K-1`.
    pub r_up: Vec<f64>,
    pub r_up_se: Vec<f64>,
    /// `r_{k-1,k}` for `k = 2..K`.
    pub r_down: Vec<f64>,
    pub r_down_se: Vec<f64>,
    /// Monte Carlo quality: every moment has relative SE ≤ 1%.
    pub quality_ok: bool,
    pub max_relative_se: f64,
}

/// Conditioned birth and death rates on states `1..=K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateTable {
    pub params: ModelParams,
    pub kind: RateKind,
    #[serde(rename = "K")]
    pub cap: usize,
    /// `up[k-1] = q_{k,k+1}` for `k = 1..K-1`.
    pub up: Vec<f64>,
    /// `down[k-2] = q_{k,k-1}` for `k = 2..K`.
    pub down: Vec<f64>,
    pub diagnostics: RateDiagnostics,
}

impl RateTable {
    /// Builds a table from survival moments `m_1..m_K` (or exact integrals
    /// with zero standard errors).
    pub fn from_moments(params: ModelParams, kind: RateKind, moments: &SurvivalMoments) -> Result<Self> {
        let cap = moments.kmax;
        if cap < 2 {
            return Err(Error::invalid("K must be >= 2"));
        }
        let mut d = RateDiagnostics {
            quality_ok: moments.quality_ok(),
            max_relative_se: moments.max_relative_se(),
            ..Default::default()
        };
        for k in 1..cap {
            let r = moments.ratio(k + 1, k);
            d.r_up.push(r.mean);
            d.r_up_se.push(r.se);
        }
        for k in 2..=cap {
            let r = moments.ratio(k - 1, k);
            d.r_down.push(r.mean);
            d.r_down_se.push(r.se);
        }
        Self::assemble(params, kind, cap, d)
    }

    fn assemble(params: ModelParams, kind: RateKind, cap: usize, d: RateDiagnostics) -> Result<Self> {
        let up = (1..cap).map(|k| params.birth_rate(k as u64) * d.r_up[k - 1]).collect();
        let down = (2..=cap).map(|k| params.death_rate(k as u64) * d.r_down[k - 2]).collect();
        let table = RateTable {
            params,
            kind,
            cap,
            up,
            down,
            diagnostics: d,
        };
        if table.up.iter().chain(&table.down).any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::numerical(
                "conditioned rates must be finite and positive",
                vec![("K", cap as f64), ("max_relative_se", table.diagnostics.max_relative_se)],
            ));
        }
        let bad = sandwich_violations(&table, BOUND_SLACK);
        if let Some(&k) = bad.first() {
            return Err(Error::numerical(
                "conditioned rate ratios violate the sandwich bounds",
                vec![("k", k as f64), ("violations", bad.len() as f64)],
            ));
        }
        Ok(table)
    }

    /// `q_{k,k+1}`; 0 at and above the cap.
    pub fn up_rate(&self, k: usize) -> f64 {
        if k == 0 || k >= self.cap {
            0.0
        } else {
            self.up[k - 1]
        }
    }

    /// `q_{k,k-1}`; 0 for `k ≤ 1` and above the cap.
    pub fn down_rate(&self, k: usize) -> f64 {
        if k <= 1 || k > self.cap {
            0.0
        } else {
            self.down[k - 2]
        }
    }

    /// `r_{k+1,k}`.
    pub fn r_up(&self, k: usize) -> f64 {
        self.diagnostics.r_up[k - 1]
    }

    /// `r_{k-1,k}`.
    pub fn r_down(&self, k: usize) -> f64 {
        self.diagnostics.r_down[k - 2]
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        crate::io::write_json(w, self)
    }
}

/// States `k` at which `1 ≤ r_{k+1,k} ≤ (k+1)/k` or `(k-1)/k ≤ r_{k-1,k} ≤ 1`
/// fails by more than `slack`.
pub fn sandwich_violations(table: &RateTable, slack: f64) -> Vec<usize> {
    let mut bad = Vec::new();
    for k in 1..table.cap {
        let r = table.r_up(k);
        let kf = k as f64;
        if !(r >= 1.0 - slack && r <= (kf + 1.0) / kf + slack) {
            bad.push(k);
        }
    }
    for k in 2..=table.cap {
        let r = table.r_down(k);
        let kf = k as f64;
        if !(r <= 1.0 + slack && r >= (kf - 1.0) / kf - slack) && !bad.contains(&k) {
            bad.push(k);
        }
    }
    bad.sort_unstable();
    bad
}

fn check_window(horizon: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0 && t < horizon) {
        return Err(Error::invalid(format!("need 0 <= t < T, got t = {t}, T = {horizon}")));
    }
    Ok(horizon - t)
}

/// Rates at time `t` of the chain conditioned to survive to `horizon`, from
/// `m` Euler paths of the dual diffusion over the remaining time `T - t`.
pub fn rate_table_t(
    p: &ModelParams,
    horizon: f64,
    t: f64,
    cap: usize,
    m: usize,
    dt: f64,
    seed: u64,
) -> Result<RateTable> {
    p.validate()?;
    let tau = check_window(horizon, t)?;
    let moments = survival_moments(DualParams::from_model(p), tau, cap, m, dt, seed)?;
    RateTable::from_moments(*p, RateKind::FixedT { horizon, t }, &moments)
}

/// As [`rate_table_t`], reading the moments off an `n`-individual Moran
/// model instead of the diffusion.
pub fn rate_table_t_moran(
    p: &ModelParams,
    horizon: f64,
    t: f64,
    cap: usize,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<RateTable> {
    p.validate()?;
    let tau = check_window(horizon, t)?;
    let moments = survival_moments_moran(DualParams::from_model(p), tau, cap, n, m, seed)?;
    RateTable::from_moments(*p, RateKind::FixedT { horizon, t }, &moments)
}

/// Q-process rates from `π*` tabulated on [`DEFAULT_GRID_SIZE`] nodes.
pub fn rate_table_q(p: &ModelParams, cap: usize) -> Result<RateTable> {
    p.validate()?;
    if cap < 2 {
        return Err(Error::invalid("K must be >= 2"));
    }
    if !(p.c > 0.0) {
        return Err(Error::UnsupportedRegime("the Q-process rates need c > 0".into()));
    }
    let grid = pi_star(DualParams::from_model(p), DEFAULT_GRID_SIZE)?;
    rate_table_q_from_density(p, cap, &grid)
}

/// Q-process rates with `r*_{k+1,k} = I_{k+1} / I_k`,
/// `I_k = ∫ (1 - (1 - ζ)^k) density(ζ) dζ`, for any density on `(0, 1)`.
pub fn rate_table_q_from_density(p: &ModelParams, cap: usize, density: &DensityGrid) -> Result<RateTable> {
    if cap < 2 {
        return Err(Error::invalid("K must be >= 2"));
    }
    let mut integrals = vec![0.0; cap];
    for i in 0..density.len() {
        let wv = density.weights[i] * density.values[i];
        if wv <= 0.0 {
            continue;
        }
        let ln_c = density.complements[i].ln();
        for (k, acc) in integrals.iter_mut().enumerate() {
            *acc += wv * -((k + 1) as f64 * ln_c).exp_m1();
        }
    }
    let d = RateDiagnostics {
        r_up: (1..cap).map(|k| integrals[k] / integrals[k - 1]).collect(),
        r_up_se: vec![0.0; cap - 1],
        r_down: (2..=cap).map(|k| integrals[k - 2] / integrals[k - 1]).collect(),
        r_down_se: vec![0.0; cap - 1],
        quality_ok: true,
        max_relative_se: 0.0,
    };
    RateTable::assemble(*p, RateKind::QProcess, cap, d)
}

/// Stationary law of a birth-death chain on `1..=K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryPmf {
    /// `probs[k-1] = π(k)`.
    pub probs: Vec<f64>,
    /// Bound on the mass the untruncated chain puts above `K`.
    pub tail_bound: f64,
}

impl StationaryPmf {
    pub fn prob(&self, k: usize) -> f64 {
        if k == 0 || k > self.probs.len() {
            0.0
        } else {
            self.probs[k - 1]
        }
    }

    pub fn cdf(&self, k: usize) -> f64 {
        self.probs.iter().take(k).sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum()
    }

    pub fn mode(&self) -> usize {
        self.probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(1, |(i, _)| i + 1)
    }

    pub fn skewness(&self) -> f64 {
        let mean = self.mean();
        let (mut m2, mut m3) = (0.0, 0.0);
        for (i, p) in self.probs.iter().enumerate() {
            let d = (i + 1) as f64 - mean;
            m2 += p * d * d;
            m3 += p * d * d * d;
        }
        m3 / m2.powf(1.5)
    }

    /// Increases up to the mode and decreases after it.
    pub fn is_unimodal(&self) -> bool {
        let m = self.mode() - 1;
        self.probs[..=m].windows(2).all(|w| w[1] >= w[0]) && self.probs[m..].windows(2).all(|w| w[1] <= w[0])
    }

    /// Largest `|π(k) q_{k,k+1} - π(k+1) q_{k+1,k}| / (π(k) q_{k,k+1})`.
    pub fn detailed_balance_residual(&self, table: &RateTable) -> f64 {
        (1..self.probs.len())
            .map(|k| {
                let flow = self.prob(k) * table.up_rate(k);
                if flow == 0.0 {
                    0.0
                } else {
                    ((flow - self.prob(k + 1) * table.down_rate(k + 1)) / flow).abs()
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "prob"])?;
        for (i, p) in self.probs.iter().enumerate() {
            out.write_record([(i + 1).to_string(), fmt_f64(*p)])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Product-form stationary law of the Q-process on `1..=K`:
/// `π(k+1)/π(k) = q*_{k,k+1} / q*_{k+1,k}`.
///
/// Above the cap the ratio is at most `b (k+1) / (k (d + c k))`, which
/// bounds the neglected tail geometrically.
pub fn q_stationary(table: &RateTable) -> Result<StationaryPmf> {
    if table.kind != RateKind::QProcess {
        return Err(Error::invalid("q_stationary needs a Q-process rate table"));
    }
    let cap = table.cap;
    let mut ln_p = Vec::with_capacity(cap);
    ln_p.push(0.0);
    for k in 1..cap {
        let prev = ln_p[k - 1];
        ln_p.push(prev + table.up_rate(k).ln() - table.down_rate(k + 1).ln());
    }
    let max = ln_p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = ln_p.iter().map(|v| (v - max).exp()).sum();
    let probs: Vec<f64> = ln_p.iter().map(|v| (v - max).exp() / z).collect();
    let p = &table.params;
    let kf = cap as f64;
    let rho = p.b * (kf + 1.0) / (kf * (p.d + p.c * kf));
    let tail_bound = if rho < 1.0 {
        probs[cap - 1] * rho / (1.0 - rho)
    } else {
        f64::INFINITY
    };
    if tail_bound > MAX_TAIL {
        return Err(Error::CapTooSmall { cap, tail_bound });
    }
    Ok(StationaryPmf { probs, tail_bound })
}

/// Runs the chain with the table's rates for `events` jumps from `z0` and
/// returns the fraction of time spent in each state `1..=K`.
pub fn simulate_occupation(table: &RateTable, z0: usize, events: u64, seed: u64) -> Result<Vec<f64>> {
    if z0 == 0 || z0 > table.cap {
        return Err(Error::invalid(format!("z0 must lie in 1..={}, got {z0}", table.cap)));
    }
    let mut rng = rng::stream(seed, 0);
    let mut occ = vec![0.0; table.cap];
    let mut z = z0;
    for _ in 0..events {
        let up = table.up_rate(z);
        let down = table.down_rate(z);
        let total = up + down;
        let e: f64 = Exp1.sample(&mut rng);
        occ[z - 1] += e / total;
        if rng.random::<f64>() * total < up {
            z += 1;
        } else {
            z -= 1;
        }
    }
    let sum: f64 = occ.iter().sum();
    Ok(occ.into_iter().map(|v| v / sum).collect())
}
