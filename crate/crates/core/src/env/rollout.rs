use alloc::vec::Vec;

use super::Environment;
use crate::policy::StochasticPolicy;
use crate::rng::{derive_seed, Stream, StreamRng};
use crate::{Error, Result};
use rand::SeedableRng;

/// One `(s, a, r, s')` record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition<S, A> {
    pub state: S,
    pub action: A,
    pub reward: f64,
    pub next_state: S,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvTag {
    Real,
    Sim,
}

/// An ordered, chained list of transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S, A> {
    pub transitions: Vec<Transition<S, A>>,
    /// Seed of the generator that produced this trajectory.
    pub seed: u64,
    pub tag: EnvTag,
}

impl<S: Copy + PartialEq, A: Copy> Trajectory<S, A> {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// True when every `next_state` equals the following `state`.
    pub fn is_chained(&self) -> bool {
        self.transitions
            .windows(2)
            .all(|w| w[0].next_state == w[1].state)
    }
}

/// Samples `count` independent trajectories of length `horizon`.
///
/// Trajectory `j` is driven by its own generator seeded from `(seed, j)`, so
/// the set is reproducible and each member can be regenerated alone.
pub fn rollout<E, P>(
    env: &E,
    policy: &P,
    horizon: usize,
    count: usize,
    seed: u64,
    tag: EnvTag,
) -> Result<Vec<Trajectory<E::State, E::Action>>>
where
    E: Environment,
    P: StochasticPolicy<State = E::State, Action = E::Action>,
{
    if horizon == 0 {
        return Err(Error::invalid("horizon", "must be at least 1"));
    }
    if count == 0 {
        return Err(Error::invalid("count", "must be at least 1"));
    }
    let mut out = Vec::with_capacity(count);
    for j in 0..count {
        let traj_seed = derive_seed(seed, Stream::Custom(0x7472_616a), j as u64);
        let mut rng = StreamRng::seed_from_u64(traj_seed);
        let mut s = env.sample_initial(&mut rng);
        let mut transitions = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let a = policy.sample_action(s, &mut rng);
            let t = env.sample_step(s, a, &mut rng);
            s = t.next_state;
            transitions.push(t);
        }
        out.push(Trajectory {
            transitions,
            seed: traj_seed,
            tag,
        });
    }
    Ok(out)
}
