//! The joint chain of population size and ancestral lineage count.
//!
//! Backwards in time the stationary Q-process is again the Q-process, since
//! it is reversible. A down-step `z → z - 1` of the reversed chain is a birth
//! forwards in time; it merges two of the `n` traced lineages with
//! probability `n (n - 1) / (z (z - 1))`, the chance that both the parent and
//! the newborn are among them.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::conditioning::RateTable;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CoalescentState {
    pub z: usize,
    pub n: usize,
}

/// Outgoing transitions of the joint chain.
pub trait CoalescentRates {
    fn transitions(&self, st: CoalescentState) -> Vec<(CoalescentState, f64)>;
}

/// Transitions out of `st` under the table's rates: `(z - 1, n)` and
/// `(z - 1, n - 1)` split the down-rate, `(z + 1, n)` takes the up-rate.
/// At `z = 1` only the up-move exists; at the cap only the down-moves.
pub fn coalescent_step_rates(st: CoalescentState, table: &RateTable) -> Vec<(CoalescentState, f64)> {
    let mut out = Vec::with_capacity(3);
    let CoalescentState { z, n } = st;
    let down = table.down_rate(z);
    if z >= 2 && down > 0.0 {
        let f = (n * (n - 1)) as f64 / (z * (z - 1)) as f64;
        if f < 1.0 {
            out.push((CoalescentState { z: z - 1, n }, (1.0 - f) * down));
        }
        if f > 0.0 {
            out.push((CoalescentState { z: z - 1, n: n - 1 }, f * down));
        }
    }
    let up = table.up_rate(z);
    if up > 0.0 {
        out.push((CoalescentState { z: z + 1, n }, up));
    }
    out
}

impl CoalescentRates for RateTable {
    fn transitions(&self, st: CoalescentState) -> Vec<(CoalescentState, f64)> {
        coalescent_step_rates(st, self)
    }
}

/// A population pinned at size `z`: down-events happen at rate `down` and
/// merge lineages with the usual probability, but `z` never changes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrozenPopulation {
    pub z: usize,
    pub down: f64,
}

impl CoalescentRates for FrozenPopulation {
    fn transitions(&self, st: CoalescentState) -> Vec<(CoalescentState, f64)> {
        let f = (st.n * (st.n - 1)) as f64 / (self.z * (self.z - 1)) as f64;
        vec![
            (st, (1.0 - f) * self.down),
            (CoalescentState { z: self.z, n: st.n - 1 }, f * self.down),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoalescentRun {
    pub tmrca: f64,
    /// `durations[k-2]` is the time spent with exactly `k` lineages.
    pub durations: Vec<f64>,
    /// State after each jump, with its time; starts at `(0, initial)`.
    pub path: Vec<(f64, CoalescentState)>,
}

/// Runs the joint chain from `(z0, n0)` until one lineage is left.
pub fn simulate_coalescent(z0: usize, n0: usize, rates: &impl CoalescentRates, seed: u64) -> Result<CoalescentRun> {
    simulate_coalescent_with(z0, n0, rates, &mut rng::stream(seed, 0))
}

/// As [`simulate_coalescent`], drawing from a caller-supplied generator.
pub fn simulate_coalescent_with<R: Rng + ?Sized>(
    z0: usize,
    n0: usize,
    rates: &impl CoalescentRates,
    rng: &mut R,
) -> Result<CoalescentRun> {
    if n0 == 0 || n0 > z0 {
        return Err(Error::invalid(format!("need 1 <= n0 <= z0, got n0 = {n0}, z0 = {z0}")));
    }
    let mut st = CoalescentState { z: z0, n: n0 };
    let mut t = 0.0;
    let mut durations = vec![0.0; n0.saturating_sub(1)];
    let mut path = vec![(0.0, st)];
    while st.n > 1 {
        let moves = rates.transitions(st);
        let total: f64 = moves.iter().map(|m| m.1).sum();
        if !(total > 0.0) {
            return Err(Error::numerical(
                "lineage chain is stuck",
                vec![("z", st.z as f64), ("n", st.n as f64)],
            ));
        }
        let e: f64 = Exp1.sample(rng);
        let hold = e / total;
        t += hold;
        durations[st.n - 2] += hold;
        let mut u = rng.random::<f64>() * total;
        let mut next = moves[moves.len() - 1].0;
        for (cand, rate) in &moves {
            if u < *rate {
                next = *cand;
                break;
            }
            u -= rate;
        }
        st = next;
        path.push((t, st));
    }
    Ok(CoalescentRun {
        tmrca: t,
        durations,
        path,
    })
}
