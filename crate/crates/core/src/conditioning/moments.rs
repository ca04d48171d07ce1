use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dual::sde::step_unconditioned;
use crate::dual::DualParams;
use crate::error::{Error, Result};
use crate::rng;
use crate::stats::{Estimate, RunningStats};

/// Largest relative standard error accepted before an estimate is flagged.
const QUALITY_REL_SE: f64 = 0.01;

/// Estimates of `m_k = E[1 - (1 - p_t)^k]`, `k = 1..=kmax`, for the dual
/// diffusion started at `p_0 = 1`.
///
/// The estimates come from independent batches; `batch_moments[b][k-1]` is
/// batch `b`'s estimate of `m_k`, and standard errors are taken across
/// batches.
#[derive(Debug, Clone, Serialize)]
pub struct SurvivalMoments {
    pub t: f64,
    pub kmax: usize,
    pub paths: usize,
    pub batch_moments: Vec<Vec<f64>>,
    /// Per-batch estimates of `P(p_t > 0)`.
    pub batch_survival: Vec<f64>,
}

impl SurvivalMoments {
    fn estimate_of(values: impl Iterator<Item = f64>) -> Estimate {
        values.collect::<RunningStats>().estimate()
    }

    /// `m_k` with its standard error; `m_0 = 0`.
    pub fn moment(&self, k: usize) -> Estimate {
        if k == 0 {
            return Estimate {
                mean: 0.0,
                se: 0.0,
                n: self.batch_moments.len() as u64,
            };
        }
        Self::estimate_of(self.batch_moments.iter().map(|b| b[k - 1]))
    }

    pub fn moments(&self) -> Vec<Estimate> {
        (1..=self.kmax).map(|k| self.moment(k)).collect()
    }

    pub fn survival(&self) -> Estimate {
        Self::estimate_of(self.batch_survival.iter().copied())
    }

    /// `r_{i,j} = m_i / m_j` as a ratio of batch means, with a delta-method
    /// standard error.
    pub fn ratio(&self, i: usize, j: usize) -> Estimate {
        let nb = self.batch_moments.len();
        let get = |b: &Vec<f64>, k: usize| if k == 0 { 0.0 } else { b[k - 1] };
        let num: f64 = self.batch_moments.iter().map(|b| get(b, i)).sum::<f64>() / nb as f64;
        let den: f64 = self.batch_moments.iter().map(|b| get(b, j)).sum::<f64>() / nb as f64;
        let r = num / den;
        let resid: RunningStats = self.batch_moments.iter().map(|b| get(b, i) - r * get(b, j)).collect();
        Estimate {
            mean: r,
            se: resid.se() / den,
            n: nb as u64,
        }
    }

    /// Largest relative standard error over all `k`.
    pub fn max_relative_se(&self) -> f64 {
        self.moments()
            .iter()
            .map(|e| if e.mean > 0.0 { e.se / e.mean } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }

    /// False when some relative standard error exceeds 1%.
    pub fn quality_ok(&self) -> bool {
        self.max_relative_se() <= QUALITY_REL_SE
    }
}

fn check(t: f64, kmax: usize, m: usize) -> Result<()> {
    if !(t > 0.0) {
        return Err(Error::invalid(format!("t must be > 0, got {t}")));
    }
    if kmax == 0 {
        return Err(Error::invalid("kmax must be >= 1"));
    }
    if m < 2 {
        return Err(Error::invalid(format!("need at least 2 paths, got {m}")));
    }
    Ok(())
}

fn batch_layout(m: usize) -> (usize, usize) {
    let batches = (m / 512).clamp(2, 64).min(m);
    (batches, m.div_ceil(batches))
}

fn moments_of(values: &[f64], weight: f64, kmax: usize) -> Vec<f64> {
    let mut sums = vec![0.0; kmax];
    for &p in values {
        let q = 1.0 - p;
        let mut qk = 1.0;
        for s in sums.iter_mut() {
            qk *= q;
            *s += 1.0 - qk;
        }
    }
    let n = values.len() as f64;
    sums.into_iter().map(|s| weight * s / n).collect()
}

/// [`survival_moments`] at several times from the same paths.
///
/// Each batch runs a population of Euler paths; whenever some are absorbed
/// at 0 they are replaced by copies of uniformly chosen survivors and the
/// batch weight is multiplied by the surviving fraction. The weighted
/// average is an unbiased estimate of `E[f(p_t); p_t > 0]` at every `t`,
/// even when survival to `t` is exponentially rare.
pub fn survival_moments_at(
    params: DualParams,
    times: &[f64],
    kmax: usize,
    m: usize,
    dt: f64,
    seed: u64,
) -> Result<Vec<SurvivalMoments>> {
    params.validate()?;
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("times must be nonempty and increasing"));
    }
    check(times[0], kmax, m)?;
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("dt must be > 0, got {dt}")));
    }
    let (batches, per) = batch_layout(m);
    let runs: Vec<Vec<(Vec<f64>, f64)>> = (0..batches)
        .into_par_iter()
        .map(|b| run_batch(&params, times, kmax, per, dt, &mut rng::stream(seed, b as u64)))
        .collect();
    Ok(times
        .iter()
        .enumerate()
        .map(|(i, &t)| SurvivalMoments {
            t,
            kmax,
            paths: batches * per,
            batch_moments: runs.iter().map(|r| r[i].0.clone()).collect(),
            batch_survival: runs.iter().map(|r| r[i].1).collect(),
        })
        .collect())
}

fn run_batch<R: Rng + ?Sized>(
    params: &DualParams,
    times: &[f64],
    kmax: usize,
    n: usize,
    dt: f64,
    rng: &mut R,
) -> Vec<(Vec<f64>, f64)> {
    let mut x = vec![1.0; n];
    let mut ln_w = 0.0f64;
    let mut now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        let steps = ((target - now) / dt).round() as usize;
        let h = if steps > 0 { (target - now) / steps as f64 } else { 0.0 };
        for _ in 0..steps {
            if ln_w == f64::NEG_INFINITY {
                break;
            }
            let mut alive = 0usize;
            for v in x.iter_mut() {
                *v = step_unconditioned(params, *v, h, rng);
                if *v > 0.0 {
                    alive += 1;
                }
            }
            if alive == 0 {
                ln_w = f64::NEG_INFINITY;
            } else if alive < n {
                ln_w += (alive as f64 / n as f64).ln();
                let survivors: Vec<f64> = x.iter().copied().filter(|&v| v > 0.0).collect();
                for v in x.iter_mut().filter(|v| **v <= 0.0) {
                    *v = survivors[rng.random_range(0..survivors.len())];
                }
            }
        }
        now = target;
        let w = ln_w.exp();
        if w > 0.0 {
            out.push((moments_of(&x, w, kmax), w));
        } else {
            out.push((vec![0.0; kmax], 0.0));
        }
    }
    out
}

/// Monte Carlo estimates of `E[1 - (1 - p_t)^k]` for `k = 1..=kmax` from
/// `m` Euler paths with step `dt`.
pub fn survival_moments(
    params: DualParams,
    t: f64,
    kmax: usize,
    m: usize,
    dt: f64,
    seed: u64,
) -> Result<SurvivalMoments> {
    Ok(survival_moments_at(params, &[t], kmax, m, dt, seed)?.remove(0))
}

/// The same moments read off an `n`-individual Moran model: the exact
/// finite-population counterpart `P(a k-sample holds an a) =
/// 1 - C(N - X_t, k) / C(N, k)`, with `X_t` the number of type-`a`
/// individuals. Suited to small `t`, where absorption is not rare.
pub fn survival_moments_moran(
    params: DualParams,
    t: f64,
    kmax: usize,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<SurvivalMoments> {
    params.validate()?;
    check(t, kmax, m)?;
    if n < 2 || kmax > n {
        return Err(Error::invalid(format!("need 2 <= kmax <= N, got kmax = {kmax}, N = {n}")));
    }
    let (batches, per) = batch_layout(m);
    let nf = n as f64;
    let up_c = 0.5 * params.nu + params.s / nf;
    let res_c = 0.5 * params.nu;
    let runs: Vec<(Vec<f64>, f64)> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, b as u64);
            let mut sums = vec![0.0; kmax];
            let mut alive = 0usize;
            for _ in 0..per {
                let mut x = n as f64;
                let mut time = 0.0;
                while x > 0.0 {
                    let pairs = x * (nf - x);
                    let up = up_c * pairs;
                    let down = params.mu * x + res_c * pairs;
                    let total = up + down;
                    if total <= 0.0 {
                        break;
                    }
                    let e: f64 = rand_distr::Distribution::sample(&rand_distr::Exp1, &mut rng);
                    time += e / total;
                    if time > t {
                        break;
                    }
                    if rng.random::<f64>() * total < up {
                        x += 1.0;
                    } else {
                        x -= 1.0;
                    }
                }
                if x > 0.0 {
                    alive += 1;
                }
                let mut miss = 1.0;
                for (j, s) in sums.iter_mut().enumerate() {
                    let jf = j as f64;
                    miss *= ((nf - x - jf) / (nf - jf)).max(0.0);
                    *s += 1.0 - miss;
                }
            }
            (sums.into_iter().map(|s| s / per as f64).collect(), alive as f64 / per as f64)
        })
        .collect();
    Ok(SurvivalMoments {
        t,
        kmax,
        paths: batches * per,
        batch_moments: runs.iter().map(|r| r.0.clone()).collect(),
        batch_survival: runs.iter().map(|r| r.1).collect(),
    })
}
