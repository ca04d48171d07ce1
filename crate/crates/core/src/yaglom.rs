//! The Yaglom limit `π(k) = lim P(Z_t = k | Z_t > 0)`.
//!
//! Three routes are provided. The primary one solves the three-term system
//!
//! ```text
//! b_{k-1} π(k-1) + d_{k+1} π(k+1) = (b_k + d_k - d_1 π(1)) π(k)
//! ```
//!
//! forward from a trial `π(1)` and bisects on `π(1)`. The generating
//! function `G(θ) = Σ π(k) θ^k` is also `1 - E_θ[e^{a T_0}; T_0 < T_1]` for
//! the diffusion `dX = (d - bX)(1 - X) dt + sqrt(2cX(1 - X)) dW`, which
//! gives a Monte Carlo cross-check. Finally the law of `Z_T` given survival
//! can be sampled directly.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::model::{final_state, ModelParams};
use crate::rng;
use crate::stats::RunningStats;

pub const DEFAULT_CAP: usize = 400;
pub const DEFAULT_TOL: f64 = 1e-10;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum YaglomMethod {
    Recursion,
    FeynmanKac,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YaglomSolution {
    pub params: ModelParams,
    /// Exponential decay rate of the survival probability, `d π(1)`.
    pub a: f64,
    #[serde(rename = "K")]
    pub k_cap: usize,
    /// `pmf[k-1] = π(k)`; entries past the truncation point are zero.
    pub pmf: Vec<f64>,
    /// `1 - Σ π(k)`.
    pub tail: f64,
    pub method: YaglomMethod,
}

impl YaglomSolution {
    pub fn prob(&self, k: usize) -> f64 {
        if k == 0 || k > self.pmf.len() {
            0.0
        } else {
            self.pmf[k - 1]
        }
    }

    pub fn cdf(&self, k: usize) -> f64 {
        self.pmf.iter().take(k).sum()
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum()
    }

    /// `G(θ) = Σ π(k) θ^k`.
    pub fn pgf(&self, theta: f64) -> f64 {
        self.pmf.iter().rev().fold(0.0, |acc, p| (acc + p) * theta)
    }

    /// Largest relative residual of the three-term relation over the
    /// untruncated range.
    pub fn max_residual(&self) -> f64 {
        let p = &self.params;
        let last = self.pmf.iter().rposition(|&x| x > 0.0).unwrap_or(0);
        (1..=last)
            .map(|k| {
                let lhs = p.birth_rate(k as u64 - 1) * self.prob(k - 1) + p.death_rate(k as u64 + 1) * self.prob(k + 1);
                let rhs = (p.birth_rate(k as u64) + p.death_rate(k as u64) - self.a) * self.prob(k);
                let scale = lhs.abs().max(rhs.abs());
                if scale == 0.0 {
                    0.0
                } else {
                    (lhs - rhs).abs() / scale
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        crate::io::write_json(w, self)
    }
}

enum Trial {
    /// Some `π(k)` went negative.
    TooLarge,
    /// Nonnegative up to the cap.
    TooSmall,
}

/// Runs the recursion from `π(1) = pi1` for `k < cap` into `out`.
fn run(p: &ModelParams, pi1: f64, cap: usize, out: &mut Vec<f64>) -> Trial {
    out.clear();
    out.push(pi1);
    let a = p.d * pi1;
    let mut prev = 0.0;
    let mut cur = pi1;
    for k in 1..cap as u64 {
        let next = ((p.birth_rate(k) + p.death_rate(k) - a) * cur - p.birth_rate(k - 1) * prev) / p.death_rate(k + 1);
        if next < 0.0 {
            return Trial::TooLarge;
        }
        if !next.is_finite() {
            return Trial::TooSmall;
        }
        out.push(next);
        prev = cur;
        cur = next;
    }
    Trial::TooSmall
}

/// Cuts the sequence where it stops decaying (the growing solution of the
/// recursion taking over) or vanishes.
fn truncate(seq: &mut [f64]) {
    let mut peaked = false;
    for k in 1..seq.len() {
        if seq[k] < seq[k - 1] {
            peaked = true;
        } else if peaked && seq[k] > seq[k - 1] {
            seq[k..].iter_mut().for_each(|x| *x = 0.0);
            return;
        }
    }
}

/// Solves for the Yaglom law by bisection on `π(1)` over
/// `[0, min(1, (b + d)/d)]`.
pub fn yaglom_recursion(p: &ModelParams, cap: usize, tol: f64) -> Result<YaglomSolution> {
    let hi = 1.0f64.min((p.b + p.d) / p.d);
    yaglom_recursion_bracket(p, cap, tol, 0.0, hi)
}

/// [`yaglom_recursion`] with an explicit bracket for `π(1)`.
pub fn yaglom_recursion_bracket(p: &ModelParams, cap: usize, tol: f64, lo: f64, hi: f64) -> Result<YaglomSolution> {
    p.validate()?;
    if p.c <= 0.0 {
        return Err(Error::UnsupportedRegime(
            "the recursion needs c > 0; without competition the tail is not summable".into(),
        ));
    }
    if cap < 2 {
        return Err(Error::invalid(format!("cap K must be >= 2, got {cap}")));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be > 0, got {tol}")));
    }
    if !(0.0 <= lo && lo < hi) {
        return Err(Error::invalid(format!("bad bracket [{lo}, {hi}]")));
    }
    let mut buf = Vec::with_capacity(cap);
    let bracket_error = |msg: &str| Error::BracketFailure {
        message: msg.into(),
        diagnostics: vec![("lo".into(), lo), ("hi".into(), hi), ("K".into(), cap as f64)],
    };
    if matches!(run(p, lo, cap, &mut buf), Trial::TooLarge) {
        return Err(bracket_error("lower end already drives the sequence negative"));
    }
    if matches!(run(p, hi, cap, &mut buf), Trial::TooSmall) {
        return Err(bracket_error("no sign change: upper end keeps the sequence nonnegative"));
    }
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match run(p, mid, cap, &mut buf) {
            Trial::TooLarge => hi = mid,
            Trial::TooSmall => lo = mid,
        }
    }
    run(p, lo, cap, &mut buf);
    truncate(&mut buf);
    let mut pmf = buf;
    pmf.resize(cap, 0.0);
    let tail = 1.0 - pmf.iter().sum::<f64>();
    if tail.abs() > tol {
        return Err(Error::numerical(
            "truncated Yaglom law misses mass beyond tol; raise K or loosen tol",
            vec![("tail", tail), ("K", cap as f64), ("pi1", lo)],
        ));
    }
    Ok(YaglomSolution {
        params: *p,
        a: p.d * pmf[0],
        k_cap: cap,
        pmf,
        tail,
        method: YaglomMethod::Recursion,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeynmanKacPoint {
    pub theta: f64,
    /// `1 - mean weight`.
    pub g: f64,
    pub se: f64,
    /// Paths that left `(0, 1)` within the step budget.
    pub paths: u64,
    /// Paths still inside `(0, 1)` when the budget ran out.
    pub censored: u64,
    /// Fraction of paths that exited through 0.
    pub hit_zero: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeynmanKacEstimate {
    pub params: ModelParams,
    pub a: f64,
    pub dt: f64,
    pub method: YaglomMethod,
    pub points: Vec<FeynmanKacPoint>,
}

/// Per-path time budget, in steps.
const FK_STEP_BUDGET: u64 = 10_000_000;
const FK_BATCH: usize = 256;

/// One path of the auxiliary diffusion from `theta`. Returns the weight
/// `e^{a T_0}` (0 when 1 is reached first), or `None` if it is censored.
fn fk_path<R: Rng + ?Sized>(p: &ModelParams, a: f64, theta: f64, dt: f64, rng: &mut R) -> Option<(f64, bool)> {
    let sq = dt.sqrt();
    let mut x = theta;
    for step in 1..=FK_STEP_BUDGET {
        let z: f64 = rng.sample(StandardNormal);
        x += (p.d - p.b * x) * (1.0 - x) * dt + (2.0 * p.c * x * (1.0 - x)).max(0.0).sqrt() * sq * z;
        if x <= 0.0 {
            return Some(((a * step as f64 * dt).exp(), true));
        }
        if x >= 1.0 {
            return Some((0.0, false));
        }
    }
    None
}

/// Monte Carlo estimate of `G(θ) = 1 - E_θ[e^{a T_0}; T_0 < T_1]` on the
/// given grid with `m` Euler paths per point.
pub fn yaglom_feynman_kac(
    p: &ModelParams,
    a: f64,
    thetas: &[f64],
    m: usize,
    dt: f64,
    seed: u64,
) -> Result<FeynmanKacEstimate> {
    p.validate()?;
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::invalid(format!("a must be finite and >= 0, got {a}")));
    }
    if !(dt > 0.0) || m == 0 {
        return Err(Error::invalid("need dt > 0 and m >= 1"));
    }
    let mut points = Vec::with_capacity(thetas.len());
    for (i, &theta) in thetas.iter().enumerate() {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::invalid(format!("theta must lie in [0, 1], got {theta}")));
        }
        if theta == 0.0 || theta == 1.0 {
            points.push(FeynmanKacPoint {
                theta,
                g: theta,
                se: 0.0,
                paths: 0,
                censored: 0,
                hit_zero: 1.0 - theta,
            });
            continue;
        }
        let point_seed = rng::derive_seed(seed, i as u64);
        let batches: Vec<(RunningStats, u64, u64)> = (0..m.div_ceil(FK_BATCH))
            .into_par_iter()
            .map(|bi| {
                let mut rng = rng::stream(point_seed, bi as u64);
                let n = FK_BATCH.min(m - bi * FK_BATCH);
                let mut w = RunningStats::new();
                let (mut censored, mut zero) = (0, 0);
                for _ in 0..n {
                    match fk_path(p, a, theta, dt, &mut rng) {
                        Some((weight, hit)) => {
                            w.push(weight);
                            zero += hit as u64;
                        }
                        None => censored += 1,
                    }
                }
                (w, censored, zero)
            })
            .collect();
        let mut w = RunningStats::new();
        let (mut censored, mut zero) = (0, 0);
        for (b, c, z) in &batches {
            w.merge(b);
            censored += c;
            zero += z;
        }
        points.push(FeynmanKacPoint {
            theta,
            g: 1.0 - w.mean(),
            se: w.se(),
            paths: w.count(),
            censored,
            hit_zero: zero as f64 / w.count().max(1) as f64,
        });
    }
    Ok(FeynmanKacEstimate {
        params: *p,
        a,
        dt,
        method: YaglomMethod::FeynmanKac,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmpiricalMethod {
    Rejection,
    Resampling,
}

/// Empirical law of `Z_T` given `Z_T > 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalPmf {
    pub horizon: f64,
    pub z0: u64,
    pub method: EmpiricalMethod,
    /// `probs[k-1]` estimates `P(Z_T = k | Z_T > 0)`.
    pub probs: Vec<f64>,
    pub se: Vec<f64>,
    /// Number of conditioned draws (accepted samples, or particles).
    pub samples: u64,
    pub attempted: u64,
    /// Estimate of `P(Z_T > 0)`.
    pub survival: f64,
    /// Raw accepted values (rejection only).
    #[serde(skip)]
    pub values: Vec<u64>,
}

impl EmpiricalPmf {
    pub fn prob(&self, k: usize) -> f64 {
        if k == 0 || k > self.probs.len() {
            0.0
        } else {
            self.probs[k - 1]
        }
    }

    pub fn mode(&self) -> usize {
        self.probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(1, |(i, _)| i + 1)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "prob", "se"])?;
        for (i, (p, s)) in self.probs.iter().zip(&self.se).enumerate() {
            out.write_record([(i + 1).to_string(), fmt_f64(*p), fmt_f64(*s)])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Attempts spent estimating the acceptance rate before committing.
const PILOT_ATTEMPTS: u64 = 100_000;
const PILOT_ACCEPTS: u64 = 200;
const MIN_ACCEPTANCE: f64 = 1e-4;

fn histogram(values: &[u64]) -> (Vec<f64>, Vec<f64>) {
    let kmax = values.iter().copied().max().unwrap_or(0) as usize;
    let mut counts = vec![0u64; kmax];
    for &v in values {
        counts[v as usize - 1] += 1;
    }
    let n = values.len() as f64;
    counts
        .into_iter()
        .map(|c| {
            let p = c as f64 / n;
            (p, (p * (1.0 - p) / n).sqrt())
        })
        .unzip()
}

/// Rejection sampling of `Z_T | Z_T > 0` from `z0`.
///
/// A pilot run estimates the acceptance rate first; below `1e-4` the call
/// fails with [`Error::Impractical`] (see [`yaglom_empirical_resampling`]).
pub fn yaglom_empirical(p: &ModelParams, horizon: f64, z0: u64, replicates: usize, seed: u64) -> Result<EmpiricalPmf> {
    p.validate()?;
    if !(horizon > 0.0) || z0 == 0 || replicates == 0 {
        return Err(Error::invalid("need T > 0, z0 >= 1 and replicates >= 1"));
    }
    let mut pilot = rng::stream(rng::derive_seed(seed, u64::MAX), 0);
    let (mut tried, mut hits) = (0u64, 0u64);
    while tried < PILOT_ATTEMPTS && hits < PILOT_ACCEPTS {
        tried += 1;
        hits += (final_state(p, z0, horizon, &mut pilot) > 0) as u64;
    }
    let rate = hits as f64 / tried as f64;
    if rate < MIN_ACCEPTANCE {
        return Err(Error::Impractical {
            rate,
            accepted: hits,
            attempted: tried,
        });
    }
    let draws: Vec<(u64, u64)> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, r as u64);
            let mut attempts = 0;
            loop {
                attempts += 1;
                let z = final_state(p, z0, horizon, &mut rng);
                if z > 0 {
                    return (z, attempts);
                }
            }
        })
        .collect();
    let attempted: u64 = draws.iter().map(|d| d.1).sum();
    let values: Vec<u64> = draws.iter().map(|d| d.0).collect();
    let (probs, se) = histogram(&values);
    Ok(EmpiricalPmf {
        horizon,
        z0,
        method: EmpiricalMethod::Rejection,
        probs,
        se,
        samples: values.len() as u64,
        attempted,
        survival: replicates as f64 / attempted as f64,
        values,
    })
}

/// Particle estimate of `Z_T | Z_T > 0` for when survival is too rare to
/// sample by rejection.
///
/// Each of `batches` independent systems of `particles` chains is advanced
/// over `T / steps`; absorbed chains are replaced by copies of uniformly
/// drawn survivors. The batch PMFs are averaged and their spread gives the
/// standard errors. The estimate carries an `O(1/particles)` bias.
pub fn yaglom_empirical_resampling(
    p: &ModelParams,
    horizon: f64,
    z0: u64,
    particles: usize,
    batches: usize,
    steps: usize,
    seed: u64,
) -> Result<EmpiricalPmf> {
    p.validate()?;
    if !(horizon > 0.0) || z0 == 0 || particles < 2 || batches < 2 || steps == 0 {
        return Err(Error::invalid(
            "need T > 0, z0 >= 1, particles >= 2, batches >= 2 and steps >= 1",
        ));
    }
    let h = horizon / steps as f64;
    let runs: Vec<Option<(Vec<u64>, f64)>> = (0..batches)
        .into_par_iter()
        .map(|bi| {
            let mut rng = rng::stream(seed, bi as u64);
            let mut pop = vec![z0; particles];
            let mut ln_survival = 0.0;
            for _ in 0..steps {
                for z in pop.iter_mut() {
                    *z = final_state(p, *z, h, &mut rng);
                }
                let alive: Vec<u64> = pop.iter().copied().filter(|&z| z > 0).collect();
                if alive.is_empty() {
                    return None;
                }
                ln_survival += (alive.len() as f64 / particles as f64).ln();
                for z in pop.iter_mut().filter(|z| **z == 0) {
                    *z = alive[rng.random_range(0..alive.len())];
                }
            }
            Some((pop, ln_survival))
        })
        .collect();
    let runs: Vec<(Vec<u64>, f64)> = runs.into_iter().collect::<Option<_>>().ok_or_else(|| {
        Error::numerical(
            "a particle system died out; increase particles or steps",
            vec![("particles", particles as f64), ("steps", steps as f64)],
        )
    })?;
    let kmax = runs.iter().flat_map(|r| r.0.iter()).copied().max().unwrap_or(1) as usize;
    let mut per_k = vec![RunningStats::new(); kmax];
    for (pop, _) in &runs {
        let mut counts = vec![0u64; kmax];
        for &z in pop {
            counts[z as usize - 1] += 1;
        }
        for (s, c) in per_k.iter_mut().zip(counts) {
            s.push(c as f64 / particles as f64);
        }
    }
    let survival: RunningStats = runs.iter().map(|r| r.1.exp()).collect();
    Ok(EmpiricalPmf {
        horizon,
        z0,
        method: EmpiricalMethod::Resampling,
        probs: per_k.iter().map(RunningStats::mean).collect(),
        se: per_k.iter().map(RunningStats::se).collect(),
        samples: (particles * batches) as u64,
        attempted: (particles * batches) as u64,
        survival: survival.mean(),
        values: Vec::new(),
    })
}
