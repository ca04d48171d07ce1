//! The logistic branching chain: jump rates, exact (Gillespie) simulation and
//! genealogy-recording simulation.
//!
//! A population of size `i` grows at rate `b·i` and shrinks at rate
//! `d·i + c·i·(i-1)`; state 0 is absorbing.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::rng;

/// Birth rate `b`, competition rate `c` (per ordered pair) and natural death
/// rate `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl ModelParams {
    pub fn new(b: f64, c: f64, d: f64) -> Result<Self> {
        let p = ModelParams { b, c, d };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::invalid(format!("birth rate b must be > 0, got {}", self.b)));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::invalid(format!("competition rate c must be >= 0, got {}", self.c)));
        }
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(Error::invalid(format!("death rate d must be > 0, got {}", self.d)));
        }
        Ok(())
    }

    /// Rate of `i -> i+1`.
    #[inline]
    pub fn birth_rate(&self, i: u64) -> f64 {
        self.b * i as f64
    }

    /// Rate of `i -> i-1`.
    #[inline]
    pub fn death_rate(&self, i: u64) -> f64 {
        let i = i as f64;
        if i <= 0.0 {
            0.0
        } else {
            self.d * i + self.c * i * (i - 1.0)
        }
    }
}

/// `(up, down)` jump rates out of state `i`.
pub fn jump_rates(i: u64, p: &ModelParams) -> (f64, f64) {
    (p.birth_rate(i), p.death_rate(i))
}

/// Piecewise-constant population path. `times[0] = 0` holds the initial state;
/// every later entry is a jump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<u64>,
    pub absorbed: bool,
    pub horizon: f64,
}

impl Trajectory {
    pub fn initial_state(&self) -> u64 {
        self.states[0]
    }

    pub fn final_state(&self) -> u64 {
        *self.states.last().expect("trajectory has an initial state")
    }

    pub fn jumps(&self) -> usize {
        self.states.len() - 1
    }

    /// Population size at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> u64 {
        let idx = self.times.partition_point(|&s| s <= t);
        self.states[idx.saturating_sub(1)]
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["time", "state"])?;
        for (t, z) in self.times.iter().zip(&self.states) {
            out.write_record([fmt_f64(*t), z.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Checks that `horizon` is a usable simulation horizon.
fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon > 0.0) || horizon.is_nan() {
        return Err(Error::invalid(format!("horizon must be > 0, got {horizon}")));
    }
    Ok(())
}

/// Exact simulation of the chain from `z0` up to `horizon`.
pub fn simulate(p: &ModelParams, z0: u64, horizon: f64, seed: u64) -> Result<Trajectory> {
    check_horizon(horizon)?;
    p.validate()?;
    Ok(simulate_with(p, z0, horizon, &mut rng::stream(seed, 0)))
}

/// As [`simulate`], drawing from a caller-supplied generator.
pub fn simulate_with<R: Rng + ?Sized>(p: &ModelParams, z0: u64, horizon: f64, rng: &mut R) -> Trajectory {
    let mut times = vec![0.0];
    let mut states = vec![z0];
    let mut t = 0.0;
    let mut z = z0;
    while z > 0 {
        let (up, down) = jump_rates(z, p);
        let total = up + down;
        let e: f64 = Exp1.sample(rng);
        t += e / total;
        if t > horizon {
            break;
        }
        if rng.random::<f64>() * total < up {
            z += 1;
        } else {
            z -= 1;
        }
        times.push(t);
        states.push(z);
    }
    Trajectory {
        times,
        states,
        absorbed: z == 0,
        horizon,
    }
}

/// Population size at `horizon` without recording the path. Returns 0 if the
/// chain was absorbed.
///
/// Without competition the lines of descent are independent and the law of
/// `Z_t` is known in closed form, so it is sampled directly.
pub fn final_state<R: Rng + ?Sized>(p: &ModelParams, z0: u64, horizon: f64, rng: &mut R) -> u64 {
    if p.c == 0.0 {
        return linear_final_state(p, z0, horizon, rng);
    }
    let mut t = 0.0;
    let mut z = z0;
    while z > 0 {
        let (up, down) = jump_rates(z, p);
        let total = up + down;
        let e: f64 = Exp1.sample(rng);
        t += e / total;
        if t > horizon {
            break;
        }
        if rng.random::<f64>() * total < up {
            z += 1;
        } else {
            z -= 1;
        }
    }
    z
}

/// Exact draw of `Z_t` for the linear chain. From one individual, `Z_t = 0`
/// with probability `α = d g / (1 + b g)` and is otherwise geometric on
/// `1, 2, ...` with ratio `β = b g / (1 + b g)`, where
/// `g = (e^{(b-d)t} - 1)/(b - d)`.
fn linear_final_state<R: Rng + ?Sized>(p: &ModelParams, z0: u64, horizon: f64, rng: &mut R) -> u64 {
    let r = p.b - p.d;
    let g = if (r * horizon).abs() < 1e-10 {
        horizon
    } else {
        (r * horizon).exp_m1() / r
    };
    let alpha = p.d * g / (1.0 + p.b * g);
    let ln_beta = -(1.0 / (p.b * g)).ln_1p();
    let mut z = 0u64;
    for _ in 0..z0 {
        if rng.random::<f64>() < alpha {
            continue;
        }
        let u: f64 = 1.0 - rng.random::<f64>();
        z = z.saturating_add(1 + (u.ln() / ln_beta).floor() as u64);
    }
    z
}

/// First time the state 0 is entered, if it was.
pub fn extinction_time(traj: &Trajectory) -> Option<f64> {
    if traj.absorbed {
        traj.states
            .iter()
            .position(|&z| z == 0)
            .map(|i| traj.times[i])
    } else {
        None
    }
}

/// One individual in a genealogy log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: usize,
    pub parent: Option<usize>,
    pub birth: f64,
    /// `None` while alive at the simulation horizon.
    pub death: Option<f64>,
}

impl Individual {
    pub fn alive_at(&self, t: f64) -> bool {
        self.birth <= t && self.death.is_none_or(|d| d > t)
    }
}

/// Birth/death records of every individual that ever lived. Ids equal
/// positions in `individuals`; roots (the initial population) have no parent.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GenealogyLog {
    pub individuals: Vec<Individual>,
    pub horizon: f64,
}

impl GenealogyLog {
    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }

    /// Number of individuals alive at `t`.
    pub fn population_at(&self, t: f64) -> u64 {
        self.individuals.iter().filter(|ind| ind.alive_at(t)).count() as u64
    }

    /// Ids of individuals alive at `t`.
    pub fn alive_at(&self, t: f64) -> Vec<usize> {
        self.individuals
            .iter()
            .filter(|ind| ind.alive_at(t))
            .map(|ind| ind.id)
            .collect()
    }

    /// Children of every individual, in birth order.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut children = vec![Vec::new(); self.individuals.len()];
        for ind in &self.individuals {
            if let Some(p) = ind.parent {
                children[p].push(ind.id);
            }
        }
        for list in &mut children {
            list.sort_by(|&a, &b| self.individuals[a].birth.total_cmp(&self.individuals[b].birth));
        }
        children
    }

    /// Population-size path implied by the log, as (event time, size) pairs
    /// starting with the initial population at time 0.
    pub fn population_path(&self) -> (Vec<f64>, Vec<u64>) {
        let mut events: Vec<(f64, i64)> = Vec::with_capacity(2 * self.individuals.len());
        let mut z0 = 0u64;
        for ind in &self.individuals {
            if ind.parent.is_none() && ind.birth == 0.0 {
                z0 += 1;
            } else {
                events.push((ind.birth, 1));
            }
            if let Some(d) = ind.death {
                events.push((d, -1));
            }
        }
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut times = vec![0.0];
        let mut states = vec![z0];
        let mut z = z0 as i64;
        for (t, delta) in events {
            z += delta;
            times.push(t);
            states.push(z as u64);
        }
        (times, states)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["id", "parent", "birth", "death"])?;
        for ind in &self.individuals {
            out.write_record([
                ind.id.to_string(),
                ind.parent.map(|p| p.to_string()).unwrap_or_default(),
                fmt_f64(ind.birth),
                ind.death.map(fmt_f64).unwrap_or_default(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a log written by [`GenealogyLog::write_csv`]. The horizon is not
    /// stored in the file and must be supplied.
    pub fn read_csv<R: Read>(r: R, horizon: f64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut individuals = Vec::new();
        for (row, record) in rdr.records().enumerate() {
            let record = record?;
            let field = |i: usize| record.get(i).unwrap_or("").trim().to_string();
            let parse_f = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("row {row}: bad number {s:?}")))
            };
            let id: usize = field(0)
                .parse()
                .map_err(|_| Error::invalid(format!("row {row}: bad id")))?;
            if id != individuals.len() {
                return Err(Error::invalid(format!("row {row}: ids must be 0..n in order")));
            }
            let parent = match field(1).as_str() {
                "" => None,
                s => Some(s.parse().map_err(|_| Error::invalid(format!("row {row}: bad parent")))?),
            };
            let birth = parse_f(&field(2))?;
            let death = match field(3).as_str() {
                "" => None,
                s => Some(parse_f(s)?),
            };
            individuals.push(Individual {
                id,
                parent,
                birth,
                death,
            });
        }
        Ok(GenealogyLog {
            individuals,
            horizon,
        })
    }
}

/// Exact simulation that also records who was born to whom and when each
/// individual died. Parents and victims are chosen uniformly among the living.
pub fn simulate_with_genealogy(
    p: &ModelParams,
    z0: u64,
    horizon: f64,
    seed: u64,
) -> Result<(Trajectory, GenealogyLog)> {
    check_horizon(horizon)?;
    p.validate()?;
    Ok(simulate_with_genealogy_with(p, z0, horizon, &mut rng::stream(seed, 0)))
}

/// As [`simulate_with_genealogy`], drawing from a caller-supplied generator.
pub fn simulate_with_genealogy_with<R: Rng + ?Sized>(
    p: &ModelParams,
    z0: u64,
    horizon: f64,
    rng: &mut R,
) -> (Trajectory, GenealogyLog) {
    let mut individuals: Vec<Individual> = (0..z0 as usize)
        .map(|id| Individual {
            id,
            parent: None,
            birth: 0.0,
            death: None,
        })
        .collect();
    let mut living: Vec<usize> = (0..z0 as usize).collect();
    let mut times = vec![0.0];
    let mut states = vec![z0];
    let mut t = 0.0;
    while !living.is_empty() {
        let z = living.len() as u64;
        let (up, down) = jump_rates(z, p);
        let total = up + down;
        let e: f64 = Exp1.sample(rng);
        t += e / total;
        if t > horizon {
            break;
        }
        let slot = rng.random_range(0..living.len());
        if rng.random::<f64>() * total < up {
            let id = individuals.len();
            individuals.push(Individual {
                id,
                parent: Some(living[slot]),
                birth: t,
                death: None,
            });
            living.push(id);
        } else {
            let victim = living.swap_remove(slot);
            individuals[victim].death = Some(t);
        }
        times.push(t);
        states.push(living.len() as u64);
    }
    let absorbed = living.is_empty();
    (
        Trajectory {
            times,
            states,
            absorbed,
            horizon,
        },
        GenealogyLog {
            individuals,
            horizon,
        },
    )
}
