//! Rollout-based evaluation of neural and symbolic protocols.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, EnvState, MacEnv, UeAction};
use crate::error::{contract, Result};
use crate::info::entropy_of;
use crate::learn::{Choice, TrainedProtocol};
use crate::seeds::derive_seed;
use crate::symbolic::{execute_step, ExecMode, SymbolicProtocol};

/// Something that picks joint actions from buffer levels.
pub enum Policy<'a> {
    Neural(&'a TrainedProtocol),
    Symbolic(&'a SymbolicProtocol),
}

impl Policy<'_> {
    fn act(&self, buffers: &[u32], deterministic: bool, rng: &mut ChaCha8Rng) -> Result<Vec<UeAction>> {
        match (self, deterministic) {
            (Policy::Neural(p), true) => Ok(p.decide(buffers, &mut Choice::Greedy)?.actions),
            (Policy::Neural(p), false) => Ok(p.decide(buffers, &mut Choice::Sample(rng))?.actions),
            (Policy::Symbolic(p), true) => {
                Ok(execute_step::<ChaCha8Rng>(p, buffers, &mut ExecMode::Deterministic)?.actions)
            }
            (Policy::Symbolic(p), false) => {
                Ok(execute_step(p, buffers, &mut ExecMode::Stochastic(rng))?.actions)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalStats {
    pub episodes: usize,
    pub slots: usize,
    /// Mean undiscounted team return per episode.
    pub mean_return: f64,
    pub collisions: usize,
    pub successes: usize,
    /// Shannon entropy in bits of the empirical joint-action distribution.
    pub action_entropy: f64,
}

impl EvalStats {
    pub fn collision_rate(&self) -> f64 {
        self.collisions as f64 / self.slots.max(1) as f64
    }
}

/// Runs `episodes` episodes. Environment seeds are derived from `seed` and
/// the episode index so that two policies evaluated with the same seed see
/// the same arrival streams.
pub fn evaluate(
    policy: &Policy<'_>,
    env_config: &EnvConfig,
    episodes: usize,
    deterministic: bool,
    seed: u64,
) -> Result<EvalStats> {
    if episodes == 0 {
        return Err(contract("at least one evaluation episode required"));
    }
    let mut env = MacEnv::new(env_config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
    let mut total = 0.0;
    let mut collisions = 0;
    let mut successes = 0;
    let mut slots = 0;
    let mut joint: BTreeMap<Vec<UeAction>, usize> = BTreeMap::new();
    for ep in 0..episodes {
        let mut state = env.reset_seeded(derive_seed(seed, ep as u64));
        for _ in 0..env_config.episode_len {
            let actions = policy.act(&state.buffers, deterministic, &mut rng)?;
            let (next, outcome) = env.step(&state, &actions)?;
            *joint.entry(actions).or_default() += 1;
            total += outcome.rewards.iter().sum::<f64>();
            collisions += usize::from(outcome.collision);
            successes += usize::from(outcome.success_ue.is_some());
            slots += 1;
            state = next;
        }
    }
    Ok(EvalStats {
        episodes,
        slots,
        mean_return: total / episodes as f64,
        collisions,
        successes,
        action_entropy: entropy_of(joint.values().map(|&c| c as f64 / slots as f64)),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    pub steps: usize,
    /// Steps on which every agent's symbolic action equals the neural one.
    pub matching_steps: usize,
    pub rate: f64,
}

/// Compares deterministic symbolic actions with neural argmax actions along
/// trajectories driven by the neural protocol, over `slots` joint steps.
pub fn fidelity(
    neural: &TrainedProtocol,
    symbolic: &SymbolicProtocol,
    slots: usize,
    seed: u64,
) -> Result<Fidelity> {
    if slots == 0 {
        return Err(contract("at least one evaluation slot required"));
    }
    let env_config = &neural.env;
    let mut env = MacEnv::new(env_config.clone())?;
    let mut matching = 0;
    let mut episode = 0u64;
    let mut state: Option<EnvState> = None;
    let mut in_episode = 0;
    for _ in 0..slots {
        if state.is_none() || in_episode == env_config.episode_len {
            state = Some(env.reset_seeded(derive_seed(seed, episode)));
            episode += 1;
            in_episode = 0;
        }
        let s = state.take().expect("state set above");
        let reference = neural.decide(&s.buffers, &mut Choice::Greedy)?.actions;
        let emulated = execute_step::<ChaCha8Rng>(symbolic, &s.buffers, &mut ExecMode::Deterministic)?.actions;
        matching += usize::from(reference == emulated);
        let (next, _) = env.step(&s, &reference)?;
        state = Some(next);
        in_episode += 1;
    }
    Ok(Fidelity {
        steps: slots,
        matching_steps: matching,
        rate: matching as f64 / slots as f64,
    })
}
