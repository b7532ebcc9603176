//! Forward simulation of `Z_n` under i.i.d. environments and plain Monte
//! Carlo estimators built on it.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::genfun::EnvSequence;
use crate::model::{EnvAtom, EnvDistribution};
use crate::stats::{run_replicas, Estimate};

/// Population counts above this raise [`Error::Saturation`].
pub const MAX_POPULATION: u64 = 1 << 53;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PopulationState {
    pub z: Vec<u64>,
    pub generation: usize,
}

impl PopulationState {
    pub fn new(z: Vec<u64>) -> Self {
        Self { z, generation: 0 }
    }

    /// Start from a single particle of type `i`.
    pub fn single(p: usize, i: usize) -> Self {
        let mut z = vec![0; p];
        z[i] = 1;
        Self::new(z)
    }

    pub fn total(&self) -> u64 {
        self.z.iter().sum()
    }

    pub fn is_extinct(&self) -> bool {
        self.z.iter().all(|&k| k == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub states: Vec<PopulationState>,
    pub env_indices: Vec<usize>,
}

impl Trajectory {
    pub fn last(&self) -> &PopulationState {
        self.states.last().expect("trajectory holds the initial state")
    }
}

/// One generation: every type-`j` parent draws its offspring vector
/// independently from law `j` of `atom`.
pub fn step<R: Rng + ?Sized>(state: &PopulationState, atom: &EnvAtom, rng: &mut R) -> Result<PopulationState> {
    let p = atom.p();
    if state.z.len() != p {
        return Err(Error::Dimension {
            expected: p,
            got: state.z.len(),
        });
    }
    let mut next = vec![0u64; p];
    for (j, &parents) in state.z.iter().enumerate() {
        let law = &atom.laws()[j];
        if law.support().len() == 1 {
            // no randomness to draw: every parent has the same offspring
            for (acc, &c) in next.iter_mut().zip(law.point(0)) {
                *acc = (c as u64).saturating_mul(parents).saturating_add(*acc);
            }
            check_saturation(&next)?;
            continue;
        }
        for _ in 0..parents {
            let child = law.point(law.sample_index(rng.random()));
            for (acc, &c) in next.iter_mut().zip(child) {
                *acc += c as u64;
            }
            check_saturation(&next)?;
        }
    }
    Ok(PopulationState {
        z: next,
        generation: state.generation + 1,
    })
}

fn check_saturation(z: &[u64]) -> Result<()> {
    match z.iter().find(|&&k| k > MAX_POPULATION) {
        Some(&big) => Err(Error::Saturation(big)),
        None => Ok(()),
    }
}

/// `n` generations with environment atoms drawn i.i.d. from `env`.
pub fn run<R: Rng + ?Sized>(env: &EnvDistribution, z0: &[u64], n: usize, rng: &mut R) -> Result<Trajectory> {
    if z0.len() != env.p() {
        return Err(Error::Dimension {
            expected: env.p(),
            got: z0.len(),
        });
    }
    let mut states = Vec::with_capacity(n + 1);
    let mut env_indices = Vec::with_capacity(n);
    states.push(PopulationState::new(z0.to_vec()));
    for _ in 0..n {
        let e = env.sample_index(rng.random());
        env_indices.push(e);
        let next = step(states.last().unwrap(), env.atom(e), rng)?;
        states.push(next);
    }
    Ok(Trajectory { states, env_indices })
}

/// Evolution under a fixed environment sequence.
pub fn run_frozen<R: Rng + ?Sized>(
    env: &EnvDistribution,
    seq: &EnvSequence,
    z0: &[u64],
    rng: &mut R,
) -> Result<Trajectory> {
    seq.validate(env)?;
    let mut states = vec![PopulationState::new(z0.to_vec())];
    for e in seq.iter() {
        let next = step(states.last().unwrap(), env.atom(e), rng)?;
        states.push(next);
    }
    Ok(Trajectory {
        states,
        env_indices: seq.as_slice().to_vec(),
    })
}

/// `Z_n` from `e_i`, stopping early once the population dies out.
fn final_population<R: Rng + ?Sized>(env: &EnvDistribution, i: usize, n: usize, rng: &mut R) -> Result<PopulationState> {
    let mut state = PopulationState::single(env.p(), i);
    for _ in 0..n {
        if state.is_extinct() {
            break;
        }
        let e = env.sample_index(rng.random());
        state = step(&state, env.atom(e), rng)?;
    }
    Ok(state)
}

/// Fraction of `reps` runs from `e_i` alive at generation `n`, with its
/// binomial standard error.
pub fn mc_survival(env: &EnvDistribution, i: usize, n: usize, reps: usize, seed: u64) -> Result<Estimate> {
    if i >= env.p() {
        return Err(Error::input("i", format!("type {i} out of range")));
    }
    if reps == 0 {
        return Err(Error::input("reps", "at least one replica is required"));
    }
    let alive = run_replicas(seed, reps, |rng| final_population(env, i, n, rng).map(|s| !s.is_extinct()))
        .into_iter()
        .collect::<Result<Vec<bool>>>()?;
    let hits = alive.iter().filter(|&&a| a).count() as f64;
    let q = hits / reps as f64;
    Ok(Estimate {
        mean: q,
        std_error: (q * (1.0 - q) / reps as f64).sqrt(),
    })
}

/// Empirical law of `Z_n` over the surviving runs.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalLaw {
    pub counts: BTreeMap<Vec<u64>, u64>,
    pub survivors: u64,
    pub reps: u64,
}

impl EmpiricalLaw {
    pub fn probability(&self, z: &[u64]) -> f64 {
        self.counts.get(z).copied().unwrap_or(0) as f64 / self.survivors as f64
    }

    /// Empirical `E[s^{Z_n} | |Z_n| > 0]` with its standard error.
    pub fn pgf(&self, s: &[f64]) -> Estimate {
        let mut samples = Vec::with_capacity(self.survivors as usize);
        for (z, &count) in &self.counts {
            let v: f64 = z.iter().zip(s).map(|(&k, &x)| x.powi(k as i32)).product();
            samples.extend(std::iter::repeat_n(v, count as usize));
        }
        Estimate::from_samples(&samples)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConditionalOutcome {
    NoSurvivors { reps: u64 },
    Law(EmpiricalLaw),
}

pub fn conditional_empirical(
    env: &EnvDistribution,
    i: usize,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<ConditionalOutcome> {
    if i >= env.p() {
        return Err(Error::input("i", format!("type {i} out of range")));
    }
    let finals = run_replicas(seed, reps, |rng| final_population(env, i, n, rng))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut counts = BTreeMap::new();
    let mut survivors = 0;
    for state in finals.into_iter().filter(|s| !s.is_extinct()) {
        *counts.entry(state.z).or_insert(0) += 1;
        survivors += 1;
    }
    if survivors == 0 {
        return Ok(ConditionalOutcome::NoSurvivors { reps: reps as u64 });
    }
    Ok(ConditionalOutcome::Law(EmpiricalLaw {
        counts,
        survivors,
        reps: reps as u64,
    }))
}
