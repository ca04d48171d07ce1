//! Convergence of the rescaled chain to the Feller diffusion with logistic
//! growth.
//!
//! With birth rate `1/2`, death rate `1/2 - b/K` and competition `c/K²`,
//! `X^K_t = Z_{Kt} / K` converges to
//! `dX = (b X - c X²) dt + sqrt(X) dW`. Time has to be sped up by `K`: the
//! per-capita rates are `O(1)` while the population is `O(K)`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{self, ModelParams};
use crate::rng;
use crate::stats::{wasserstein1, RunningStats};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub k: usize,
    pub w1: f64,
    pub mean_chain: f64,
    pub se_chain: f64,
    pub mean_diffusion: f64,
    pub se_diffusion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub b: f64,
    pub c: f64,
    pub x0: f64,
    pub horizon: f64,
    pub replicates: usize,
    pub dt: f64,
    pub rows: Vec<ScalingRow>,
}

impl ScalingReport {
    pub fn distances(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.w1).collect()
    }
}

/// The chain whose rescaling approximates the diffusion at level `k`.
pub fn rescaled_params(b: f64, c: f64, k: usize) -> Result<ModelParams> {
    let kf = k as f64;
    ModelParams::new(0.5, c / (kf * kf), 0.5 - b / kf)
        .map_err(|_| Error::invalid(format!("K = {k} too small: need K > 2b = {}", 2.0 * b)))
}

/// Euler samples of `X_horizon` for the logistic Feller diffusion from `x0`.
pub fn feller_logistic_samples(b: f64, c: f64, x0: f64, horizon: f64, dt: f64, n: usize, seed: u64) -> Vec<f64> {
    let steps = (horizon / dt).round().max(1.0) as usize;
    let h = horizon / steps as f64;
    let sq = h.sqrt();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed, i as u64);
            let mut x = x0;
            for _ in 0..steps {
                if x <= 0.0 {
                    return 0.0;
                }
                let z: f64 = rng.sample(StandardNormal);
                x = (x + (b * x - c * x * x) * h + x.sqrt() * sq * z).max(0.0);
            }
            x
        })
        .collect()
}

/// For each `K`, compares `Z_{K·horizon} / K` started from `round(K x0)`
/// with the diffusion started from `x0`, by the Wasserstein-1 distance
/// between `replicates` samples of each.
#[allow(clippy::too_many_arguments)]
pub fn scaling_check(
    b: f64,
    c: f64,
    ks: &[usize],
    horizon: f64,
    x0: f64,
    replicates: usize,
    dt: f64,
    seed: u64,
) -> Result<ScalingReport> {
    if ks.is_empty() || ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("K sequence must be nonempty and increasing"));
    }
    if !(horizon > 0.0 && x0 > 0.0 && dt > 0.0 && b >= 0.0 && c >= 0.0) || replicates < 2 {
        return Err(Error::invalid("need horizon, x0, dt > 0, b, c >= 0, replicates >= 2"));
    }
    let diffusion = feller_logistic_samples(b, c, x0, horizon, dt, replicates, rng::derive_seed(seed, 0));
    let diff_stats: RunningStats = diffusion.iter().copied().collect();
    let mut rows = Vec::with_capacity(ks.len());
    for (idx, &k) in ks.iter().enumerate() {
        let p = rescaled_params(b, c, k)?;
        let kf = k as f64;
        let z0 = (kf * x0).round() as u64;
        let chain_seed = rng::derive_seed(seed, idx as u64 + 1);
        let chain: Vec<f64> = (0..replicates)
            .into_par_iter()
            .map(|i| {
                let mut rng = rng::stream(chain_seed, i as u64);
                model::final_state(&p, z0, kf * horizon, &mut rng) as f64 / kf
            })
            .collect();
        let chain_stats: RunningStats = chain.iter().copied().collect();
        rows.push(ScalingRow {
            k,
            w1: wasserstein1(&chain, &diffusion),
            mean_chain: chain_stats.mean(),
            se_chain: chain_stats.se(),
            mean_diffusion: diff_stats.mean(),
            se_diffusion: diff_stats.se(),
        });
    }
    Ok(ScalingReport {
        b,
        c,
        x0,
        horizon,
        replicates,
        dt,
        rows,
    })
}
