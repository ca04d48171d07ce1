//! Forward-simulation experiments on genealogies: γ against detectability,
//! population size at the MRCA, and sample TMRCAs under survival
//! conditioning.

use std::io::Write;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::tree::{gamma_statistic, reconstruct_from_tips, reconstruct_tree};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::model::{simulate_with_genealogy_with, GenealogyLog, ModelParams, Trajectory};
use crate::rng;
use crate::stats::RunningStats;

/// Attempts per replicate before survival conditioning gives up.
const MAX_ATTEMPTS: u64 = 1_000_000;
/// Acceptance rates below this are reported as impractical.
const MIN_ACCEPTANCE: f64 = 1e-4;

/// Rejection counts of a survival-conditioned experiment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SurvivalRejection {
    pub attempted: u64,
    pub accepted: u64,
}

impl SurvivalRejection {
    pub fn rate(&self) -> f64 {
        if self.attempted == 0 {
            0.0
        } else {
            self.accepted as f64 / self.attempted as f64
        }
    }

    fn add(&mut self, other: SurvivalRejection) {
        self.attempted += other.attempted;
        self.accepted += other.accepted;
    }

    fn check(&self) -> Result<()> {
        if self.attempted > 0 && self.rate() < MIN_ACCEPTANCE {
            return Err(Error::Impractical {
                rate: self.rate(),
                accepted: self.accepted,
                attempted: self.attempted,
            });
        }
        Ok(())
    }
}

/// Default initial size: the deterministic equilibrium `⌈(b - d)/c⌉`, or 1.
pub fn default_z0(p: &ModelParams) -> u64 {
    if p.b > p.d && p.c > 0.0 {
        ((p.b - p.d) / p.c).ceil().max(1.0) as u64
    } else {
        1
    }
}

/// Simulates genealogies until one satisfies `accept`.
fn simulate_until<R: Rng + ?Sized>(
    p: &ModelParams,
    z0: u64,
    horizon: f64,
    rng: &mut R,
    accept: impl Fn(&Trajectory, &GenealogyLog) -> bool,
) -> (Option<(Trajectory, GenealogyLog)>, SurvivalRejection) {
    let mut counts = SurvivalRejection::default();
    while counts.attempted < MAX_ATTEMPTS {
        counts.attempted += 1;
        let (traj, log) = simulate_with_genealogy_with(p, z0, horizon, rng);
        if traj.final_state() > 0 && accept(&traj, &log) {
            counts.accepted += 1;
            return (Some((traj, log)), counts);
        }
        if counts.attempted >= 100_000 && counts.attempted % 100_000 == 0 {
            // only a handful of acceptances would be expected by now
            break;
        }
    }
    (None, counts)
}

fn check_common(p: &ModelParams, sample_time: f64, replicates: usize) -> Result<()> {
    p.validate()?;
    if !(sample_time > 0.0) {
        return Err(Error::invalid(format!("sample time must be > 0, got {sample_time}")));
    }
    if replicates == 0 {
        return Err(Error::invalid("replicates must be >= 1"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaRow {
    pub lambda: f64,
    pub mean_gamma: f64,
    pub se: f64,
    pub n_used: u64,
    pub n_skipped: u64,
}

/// Mean γ of reconstructed trees for each detectability rate.
///
/// Every replicate simulates one genealogy from `z0` conditioned (by
/// rejection) on survival to `sample_time`, then thins it once per `λ`.
/// Trees with fewer than three tips or with several roots are skipped and
/// counted.
pub fn gamma_scan(
    p: &ModelParams,
    lambdas: &[f64],
    sample_time: f64,
    replicates: usize,
    z0: Option<u64>,
    seed: u64,
) -> Result<Vec<GammaRow>> {
    check_common(p, sample_time, replicates)?;
    if lambdas.is_empty() || lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(Error::invalid("lambda grid must be nonempty and positive"));
    }
    let z0 = z0.unwrap_or_else(|| default_z0(p));
    let runs: Vec<(Vec<Option<f64>>, SurvivalRejection)> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let rep_seed = rng::derive_seed(seed, r as u64);
            let mut rng = rng::stream(seed, r as u64);
            let (found, counts) = simulate_until(p, z0, sample_time, &mut rng, |_, _| true);
            let gammas = match found {
                None => vec![None; lambdas.len()],
                Some((_, log)) => lambdas
                    .iter()
                    .enumerate()
                    .map(|(j, &lambda)| {
                        let tree = reconstruct_tree(&log, sample_time, lambda, rng::derive_seed(rep_seed, j as u64)).ok()?;
                        if !tree.is_single_rooted() || tree.tip_count() < 3 {
                            return None;
                        }
                        gamma_statistic(&tree.internode).ok()
                    })
                    .collect(),
            };
            (gammas, counts)
        })
        .collect();
    let mut counts = SurvivalRejection::default();
    for (_, c) in &runs {
        counts.add(*c);
    }
    counts.check()?;
    Ok(lambdas
        .iter()
        .enumerate()
        .map(|(j, &lambda)| {
            let used: RunningStats = runs.iter().filter_map(|r| r.0[j]).collect();
            GammaRow {
                lambda,
                mean_gamma: used.mean(),
                se: used.se(),
                n_used: used.count(),
                n_skipped: replicates as u64 - used.count(),
            }
        })
        .collect())
}

pub fn write_gamma_csv<W: Write>(rows: &[GammaRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["lambda", "mean_gamma", "se", "n_used", "n_skipped"])?;
    for r in rows {
        out.write_record([
            fmt_f64(r.lambda),
            fmt_f64(r.mean_gamma),
            fmt_f64(r.se),
            r.n_used.to_string(),
            r.n_skipped.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MrcaSample {
    pub z_present: u64,
    /// Population size just before the MRCA was born.
    pub z_before_mrca: u64,
    /// Time from the MRCA's birth to the present.
    pub mrca_depth: f64,
    /// A single extant individual is its own MRCA: depth 0 and
    /// `z_before_mrca` set to the initial size.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MrcaResult {
    pub samples: Vec<MrcaSample>,
    pub rejection: SurvivalRejection,
    /// Accepted runs whose extant population descends from several initial
    /// individuals, so that no MRCA exists.
    pub multi_root: u64,
}

impl MrcaResult {
    /// Mean of `z_present - z_before_mrca` over non-degenerate samples.
    pub fn mean_gap(&self) -> (f64, f64) {
        let s: RunningStats = self
            .samples
            .iter()
            .filter(|m| !m.degenerate)
            .map(|m| m.z_present as f64 - m.z_before_mrca as f64)
            .collect();
        (s.mean(), s.se())
    }
}

/// Population size at the MRCA of all extant individuals against the size
/// at `sample_time`, over runs conditioned on survival by rejection.
pub fn mrca_experiment(
    p: &ModelParams,
    sample_time: f64,
    replicates: usize,
    z0: Option<u64>,
    seed: u64,
) -> Result<MrcaResult> {
    check_common(p, sample_time, replicates)?;
    let z0 = z0.unwrap_or_else(|| default_z0(p));
    let runs: Vec<(Option<MrcaSample>, bool, SurvivalRejection)> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, r as u64);
            let (found, counts) = simulate_until(p, z0, sample_time, &mut rng, |_, _| true);
            let Some((traj, log)) = found else {
                return (None, false, counts);
            };
            let tips = log.alive_at(sample_time);
            let tree = reconstruct_from_tips(&log, sample_time, &tips).expect("survivors exist");
            if !tree.is_single_rooted() {
                return (None, true, counts);
            }
            let z_present = tips.len() as u64;
            let sample = if z_present == 1 {
                MrcaSample {
                    z_present,
                    z_before_mrca: z0,
                    mrca_depth: 0.0,
                    degenerate: true,
                }
            } else {
                let t_mrca = tree.nodes[tree.roots[0]].time;
                let idx = traj.times.partition_point(|&t| t < t_mrca);
                MrcaSample {
                    z_present,
                    z_before_mrca: traj.states[idx - 1],
                    mrca_depth: sample_time - t_mrca,
                    degenerate: false,
                }
            };
            (Some(sample), false, counts)
        })
        .collect();
    let mut rejection = SurvivalRejection::default();
    let mut multi_root = 0;
    let mut samples = Vec::new();
    for (s, multi, c) in runs {
        rejection.add(c);
        multi_root += multi as u64;
        samples.extend(s);
    }
    rejection.check()?;
    Ok(MrcaResult {
        samples,
        rejection,
        multi_root,
    })
}

pub fn write_mrca_csv<W: Write>(samples: &[MrcaSample], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["z_present", "z_before_mrca", "mrca_depth", "degenerate"])?;
    for s in samples {
        out.write_record([
            s.z_present.to_string(),
            s.z_before_mrca.to_string(),
            fmt_f64(s.mrca_depth),
            (s.degenerate as u8).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// TMRCAs of `n_sample` individuals drawn uniformly at time `burn_in` from
/// runs that start at `z0`, have at least `min_size` individuals at
/// `burn_in` and survive to `burn_in + future`. Runs whose sample descends
/// from several initial individuals are dropped.
#[allow(clippy::too_many_arguments)]
pub fn forward_sample_tmrca(
    p: &ModelParams,
    z0: u64,
    burn_in: f64,
    future: f64,
    n_sample: usize,
    min_size: usize,
    replicates: usize,
    seed: u64,
) -> Result<(Vec<f64>, SurvivalRejection)> {
    check_common(p, burn_in, replicates)?;
    if n_sample < 2 || min_size < n_sample {
        return Err(Error::invalid("need 2 <= n_sample <= min_size"));
    }
    let horizon = burn_in + future;
    let runs: Vec<(Option<f64>, SurvivalRejection)> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(seed, r as u64);
            let (found, counts) = simulate_until(p, z0, horizon, &mut rng, |traj, _| {
                traj.state_at(burn_in) as usize >= min_size
            });
            let Some((_, log)) = found else {
                return (None, counts);
            };
            let alive = log.alive_at(burn_in);
            let picks: Vec<usize> = index::sample(&mut rng, alive.len(), n_sample)
                .into_iter()
                .map(|i| alive[i])
                .collect();
            let tree = reconstruct_from_tips(&log, burn_in, &picks).expect("sampled individuals are alive");
            let tmrca = tree.is_single_rooted().then(|| tree.span());
            (tmrca, counts)
        })
        .collect();
    let mut rejection = SurvivalRejection::default();
    let mut out = Vec::new();
    for (t, c) in runs {
        rejection.add(c);
        out.extend(t);
    }
    rejection.check()?;
    Ok((out, rejection))
}
