//! Moran model with a stored event log, and the backward pass that reads the
//! ancestry of a sample off the same log.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use super::DualParams;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MoranEventKind {
    /// Individual `i` becomes type `A`.
    Mutation { i: usize },
    /// Individual `i` takes the type of `j`.
    Resampling { i: usize, j: usize },
    /// If `i` is `A` and `j` is `a`, `i` becomes `a`.
    Selection { i: usize, j: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MoranEvent {
    pub time: f64,
    pub kind: MoranEventKind,
}

/// One run of the Moran model: the complete event log on `[0, horizon]`
/// and the final types.
#[derive(Debug, Clone, Serialize)]
pub struct MoranRealization {
    pub n: usize,
    pub params: DualParams,
    pub horizon: f64,
    pub events: Vec<MoranEvent>,
    /// `true` for type `a` at the horizon.
    pub final_types: Vec<bool>,
}

impl MoranRealization {
    /// Builds a realization from a hand-written event log, replaying the
    /// forward rules from the all-`a` state.
    pub fn from_events(n: usize, params: DualParams, horizon: f64, events: Vec<MoranEvent>) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("Moran population needs N >= 2, got {n}")));
        }
        let mut last = 0.0;
        for ev in &events {
            let ok = match ev.kind {
                MoranEventKind::Mutation { i } => i < n,
                MoranEventKind::Resampling { i, j } | MoranEventKind::Selection { i, j } => i < n && j < n && i != j,
            };
            if !ok || ev.time < last || ev.time > horizon {
                return Err(Error::invalid(format!("bad event {ev:?}")));
            }
            last = ev.time;
        }
        let mut types = vec![true; n];
        for ev in &events {
            apply_forward(&mut types, ev.kind);
        }
        Ok(MoranRealization {
            n,
            params,
            horizon,
            events,
            final_types: types,
        })
    }

    /// Frequency `P_t` of type `a` at the horizon.
    pub fn frequency(&self) -> f64 {
        self.final_types.iter().filter(|&&a| a).count() as f64 / self.n as f64
    }

    /// Frequency of type `a` at time `t` (replays the log).
    pub fn frequency_at(&self, t: f64) -> f64 {
        let mut types = vec![true; self.n];
        for ev in self.events.iter().take_while(|ev| ev.time <= t) {
            apply_forward(&mut types, ev.kind);
        }
        types.iter().filter(|&&a| a).count() as f64 / self.n as f64
    }
}

fn apply_forward(types: &mut [bool], kind: MoranEventKind) {
    match kind {
        MoranEventKind::Mutation { i } => types[i] = false,
        MoranEventKind::Resampling { i, j } => types[i] = types[j],
        MoranEventKind::Selection { i, j } => {
            if !types[i] && types[j] {
                types[i] = true;
            }
        }
    }
}

/// Simulates the Moran model of `n` individuals, all of type `a` at time 0,
/// up to time `t`.
pub fn moran_simulate(n: usize, params: DualParams, t: f64, seed: u64) -> Result<MoranRealization> {
    if n < 2 {
        return Err(Error::invalid(format!("Moran population needs N >= 2, got {n}")));
    }
    params.validate()?;
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("horizon must be >= 0, got {t}")));
    }
    Ok(moran_simulate_with(n, params, t, &mut rng::stream(seed, 0)))
}

/// As [`moran_simulate`], drawing from a caller-supplied generator.
pub fn moran_simulate_with<R: Rng + ?Sized>(n: usize, params: DualParams, t: f64, rng: &mut R) -> MoranRealization {
    let nf = n as f64;
    let pairs = nf * (nf - 1.0);
    let r_mut = params.mu * nf;
    let r_res = 0.5 * params.nu * pairs;
    let r_sel = params.s / nf * pairs;
    let total = r_mut + r_res + r_sel;
    let mut events = Vec::new();
    let mut types = vec![true; n];
    let mut time = 0.0;
    if total > 0.0 {
        loop {
            let e: f64 = Exp1.sample(rng);
            time += e / total;
            if time > t {
                break;
            }
            let u = rng.random::<f64>() * total;
            let i = rng.random_range(0..n);
            let kind = if u < r_mut {
                MoranEventKind::Mutation { i }
            } else {
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                if u < r_mut + r_res {
                    MoranEventKind::Resampling { i, j }
                } else {
                    MoranEventKind::Selection { i, j }
                }
            };
            apply_forward(&mut types, kind);
            events.push(MoranEvent { time, kind });
        }
    }
    MoranRealization {
        n,
        params,
        horizon: t,
        events,
        final_types: types,
    }
}

/// Result of tracing a sample's ancestry back through a Moran log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsgTrace {
    /// Some lineage reached Moran time 0.
    pub survived: bool,
    /// `(u, κ_u)` at `u = 0` and after every change of `κ`, with `u` the
    /// backward time `horizon - event time`.
    pub kappa_path: Vec<(f64, usize)>,
}

impl AsgTrace {
    pub fn final_kappa(&self) -> usize {
        self.kappa_path.last().map_or(0, |&(_, k)| k)
    }
}

/// Replays the log of `real` backwards from the sample taken at its horizon.
///
/// A mutation on a traced lineage ends it. A resampling `i ← j` on a traced
/// `i` moves the lineage to `j`, merging with `j` when `j` is already traced.
/// A selection `(i, j)` on a traced `i` adds `j`. The sample then contains a
/// type-`a` individual exactly when some lineage reaches time 0.
pub fn asg_trace(real: &MoranRealization, sample: &[usize]) -> Result<AsgTrace> {
    if sample.is_empty() {
        return Err(Error::invalid("sample must be nonempty"));
    }
    let mut traced = vec![false; real.n];
    for &i in sample {
        if i >= real.n {
            return Err(Error::invalid(format!("sample index {i} out of range for N = {}", real.n)));
        }
        traced[i] = true;
    }
    let mut kappa = traced.iter().filter(|&&x| x).count();
    let mut path = vec![(0.0, kappa)];
    for ev in real.events.iter().rev() {
        if kappa == 0 {
            break;
        }
        let before = kappa;
        match ev.kind {
            MoranEventKind::Mutation { i } => {
                if traced[i] {
                    traced[i] = false;
                    kappa -= 1;
                }
            }
            MoranEventKind::Resampling { i, j } => {
                if traced[i] {
                    traced[i] = false;
                    if traced[j] {
                        kappa -= 1;
                    } else {
                        traced[j] = true;
                    }
                }
            }
            MoranEventKind::Selection { i, j } => {
                if traced[i] && !traced[j] {
                    traced[j] = true;
                    kappa += 1;
                }
            }
        }
        if kappa != before {
            path.push((real.horizon - ev.time, kappa));
        }
    }
    Ok(AsgTrace {
        survived: kappa > 0,
        kappa_path: path,
    })
}

/// Runs the logistic chain `Z` (birth `s`, death `μ`, competition `ν/2`) and
/// the lineage count `κ` of an `N`-individual Moran model from the same
/// state `k0`, coupled so they move together as long as possible. The two
/// down-rates agree; `κ` branches at rate `s κ (N - κ)/N` against `s Z`, so
/// the paths split at the first birth of `Z` that `κ` does not share.
///
/// Returns the first time the paths differ, or `None` if they agree on
/// `[0, horizon]`.
pub fn coupled_divergence<R: Rng + ?Sized>(
    params: DualParams,
    n: usize,
    k0: usize,
    horizon: f64,
    rng: &mut R,
) -> Option<f64> {
    let nf = n as f64;
    let mut k = k0;
    let mut t = 0.0;
    while k > 0 {
        let kf = k as f64;
        let up_z = params.s * kf;
        let up_kappa = params.s * kf * (nf - kf).max(0.0) / nf;
        let down = params.mu * kf + 0.5 * params.nu * kf * (kf - 1.0);
        let total = up_z + down;
        let e: f64 = Exp1.sample(rng);
        t += e / total;
        if t > horizon {
            return None;
        }
        let u = rng.random::<f64>() * total;
        if u < up_kappa {
            k += 1;
        } else if u < up_z {
            return Some(t);
        } else {
            k -= 1;
        }
    }
    None
}
