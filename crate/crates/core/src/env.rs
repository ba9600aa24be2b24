//! Slotted single-cell MAC environment.
//!
//! Each UE holds a bounded packet buffer. Every slot, all UEs pick one of
//! [`UeAction`]; the joint choice is resolved against the shared channel,
//! then new packets arrive independently per UE.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub num_ues: usize,
    pub buffer_cap: u32,
    pub arrival_prob: f64,
    pub reward_rho: f64,
    pub episode_len: usize,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            num_ues: 2,
            buffer_cap: 2,
            arrival_prob: 0.5,
            reward_rho: 1.0,
            episode_len: 20,
            seed: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: &str| {
            Err(Error::Config {
                field,
                reason: reason.to_string(),
            })
        };
        if self.num_ues < 1 {
            return bad("num_ues", "must be at least 1");
        }
        if self.buffer_cap < 1 {
            return bad("buffer_cap", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.arrival_prob) {
            return bad("arrival_prob", "must lie in [0, 1]");
        }
        if !(self.reward_rho > 0.0 && self.reward_rho.is_finite()) {
            return bad("reward_rho", "must be a positive finite number");
        }
        if self.episode_len < 1 {
            return bad("episode_len", "must be at least 1");
        }
        Ok(())
    }

    /// Number of values a single buffer can take.
    pub fn buffer_levels(&self) -> usize {
        self.buffer_cap as usize + 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnvState {
    pub buffers: Vec<u32>,
    pub slot: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UeAction {
    Access,
    Silence,
    Discard,
}

impl UeAction {
    pub const ALL: [UeAction; 3] = [UeAction::Access, UeAction::Silence, UeAction::Discard];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Symbol used for this action in clause text.
    pub fn symbol(self) -> &'static str {
        match self {
            UeAction::Access => "access",
            UeAction::Silence => "silence",
            UeAction::Discard => "discard",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.symbol() == s)
    }
}

impl fmt::Display for UeAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub rewards: Vec<f64>,
    pub success_ue: Option<usize>,
    pub collision: bool,
    pub arrivals: Vec<bool>,
}

/// Environment instance owning its random stream.
#[derive(Clone, Debug)]
pub struct MacEnv {
    config: EnvConfig,
    rng: ChaCha8Rng,
}

impl MacEnv {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self { config, rng })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    /// Empty buffers at slot 0, random stream re-initialized from the config seed.
    pub fn reset(&mut self) -> EnvState {
        self.reset_seeded(self.config.seed)
    }

    /// Like [`MacEnv::reset`] but seeds the arrival stream explicitly.
    pub fn reset_seeded(&mut self, seed: u64) -> EnvState {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        EnvState {
            buffers: vec![0; self.config.num_ues],
            slot: 0,
        }
    }

    pub fn step(&mut self, state: &EnvState, actions: &[UeAction]) -> Result<(EnvState, StepOutcome)> {
        let p = self.config.arrival_prob;
        let arrivals: Vec<bool> = (0..self.config.num_ues)
            .map(|_| self.rng.random::<f64>() < p)
            .collect();
        self.step_with_arrivals(state, actions, &arrivals)
    }

    /// Deterministic step with caller-supplied arrivals. Does not touch the random stream.
    pub fn step_with_arrivals(
        &self,
        state: &EnvState,
        actions: &[UeAction],
        arrivals: &[bool],
    ) -> Result<(EnvState, StepOutcome)> {
        let n = self.config.num_ues;
        if actions.len() != n {
            return Err(contract(format!(
                "expected {n} actions, got {}",
                actions.len()
            )));
        }
        if arrivals.len() != n || state.buffers.len() != n {
            return Err(contract(format!(
                "state/arrival vectors must have length {n}"
            )));
        }
        let rho = self.config.reward_rho;
        let mut buffers = state.buffers.clone();
        let mut rewards = vec![0.0; n];

        let accessors: Vec<usize> = actions
            .iter()
            .enumerate()
            .filter(|(_, a)| **a == UeAction::Access)
            .map(|(j, _)| j)
            .collect();
        let collision = accessors.len() >= 2;
        let mut success_ue = None;
        if collision {
            for &j in &accessors {
                rewards[j] = -rho;
            }
        } else if let Some(&j) = accessors.first() {
            if buffers[j] > 0 {
                buffers[j] -= 1;
                rewards[j] = rho;
                success_ue = Some(j);
            } else {
                rewards[j] = -rho;
            }
        }
        for (j, a) in actions.iter().enumerate() {
            if *a == UeAction::Discard && buffers[j] > 0 {
                buffers[j] -= 1;
            }
        }
        for (b, &arrived) in buffers.iter_mut().zip(arrivals) {
            if arrived {
                *b = (*b + 1).min(self.config.buffer_cap);
            }
        }
        let next = EnvState {
            buffers,
            slot: state.slot + 1,
        };
        Ok((
            next,
            StepOutcome {
                rewards,
                success_ue,
                collision,
                arrivals: arrivals.to_vec(),
            },
        ))
    }
}

/// All joint buffer configurations in lexicographic order (UE 0 most significant).
pub fn enumerate_states(config: &EnvConfig) -> Result<Vec<EnvState>> {
    config.validate()?;
    let levels = config.buffer_levels();
    let n = config.num_ues;
    let total = levels.pow(n as u32);
    Ok((0..total)
        .map(|mut code| {
            let mut buffers = vec![0u32; n];
            for b in buffers.iter_mut().rev() {
                *b = (code % levels) as u32;
                code /= levels;
            }
            EnvState { buffers, slot: 0 }
        })
        .collect())
}

/// Position of a joint state in [`enumerate_states`] order.
pub fn joint_state_index(config: &EnvConfig, buffers: &[u32]) -> usize {
    let levels = config.buffer_levels();
    buffers
        .iter()
        .fold(0, |acc, &b| acc * levels + b as usize)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> EnvConfig {
        EnvConfig {
            seed: 7,
            ..EnvConfig::default()
        }
    }

    #[test]
    fn reset_is_empty_and_deterministic() {
        let mut a = MacEnv::new(cfg()).unwrap();
        let mut b = MacEnv::new(cfg()).unwrap();
        let sa = a.reset();
        assert_eq!(sa.buffers, vec![0, 0]);
        assert_eq!(sa.slot, 0);
        assert_eq!(sa, b.reset());
    }

    #[test]
    fn invalid_config_names_field() {
        let c = EnvConfig {
            arrival_prob: 1.5,
            ..cfg()
        };
        match MacEnv::new(c) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "arrival_prob"),
            other => panic!("unexpected {other:?}"),
        }
        let c = EnvConfig {
            reward_rho: 0.0,
            ..cfg()
        };
        assert!(matches!(
            c.validate(),
            Err(Error::Config {
                field: "reward_rho",
                ..
            })
        ));
    }

    #[test]
    fn single_access_succeeds() {
        let env = MacEnv::new(cfg()).unwrap();
        let s = EnvState {
            buffers: vec![1, 0],
            slot: 0,
        };
        let (next, out) = env
            .step_with_arrivals(&s, &[UeAction::Access, UeAction::Silence], &[false, false])
            .unwrap();
        assert_eq!(out.rewards, vec![1.0, 0.0]);
        assert_eq!(next.buffers, vec![0, 0]);
        assert_eq!(out.success_ue, Some(0));
        assert!(!out.collision);
        assert_eq!(next.slot, 1);
    }

    #[test]
    fn double_access_collides() {
        let env = MacEnv::new(cfg()).unwrap();
        let s = EnvState {
            buffers: vec![1, 1],
            slot: 0,
        };
        let (next, out) = env
            .step_with_arrivals(&s, &[UeAction::Access, UeAction::Access], &[false, false])
            .unwrap();
        assert!(out.collision);
        assert_eq!(out.success_ue, None);
        assert_eq!(out.rewards, vec![-1.0, -1.0]);
        assert_eq!(next.buffers, vec![1, 1]);
    }

    #[test]
    fn empty_access_fails_and_discard_drains() {
        let env = MacEnv::new(cfg()).unwrap();
        let s = EnvState {
            buffers: vec![0, 2],
            slot: 0,
        };
        let (next, out) = env
            .step_with_arrivals(&s, &[UeAction::Access, UeAction::Discard], &[false, false])
            .unwrap();
        assert_eq!(out.rewards, vec![-1.0, 0.0]);
        assert_eq!(next.buffers, vec![0, 1]);
        let (next, out) = env
            .step_with_arrivals(&next, &[UeAction::Discard, UeAction::Silence], &[false, false])
            .unwrap();
        assert_eq!(out.rewards, vec![0.0, 0.0]);
        assert_eq!(next.buffers, vec![0, 1]);
    }

    #[test]
    fn arrivals_saturate() {
        let env = MacEnv::new(cfg()).unwrap();
        let s = EnvState {
            buffers: vec![2, 1],
            slot: 3,
        };
        let (next, _) = env
            .step_with_arrivals(&s, &[UeAction::Silence, UeAction::Silence], &[true, true])
            .unwrap();
        assert_eq!(next.buffers, vec![2, 2]);
    }

    #[test]
    fn wrong_action_count_is_rejected() {
        let mut env = MacEnv::new(cfg()).unwrap();
        let s = env.reset();
        assert!(matches!(
            env.step(&s, &[UeAction::Access]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn enumeration_counts_and_order() {
        let states = enumerate_states(&cfg()).unwrap();
        assert_eq!(states.len(), 9);
        assert_eq!(states[0].buffers, vec![0, 0]);
        assert_eq!(states[1].buffers, vec![0, 1]);
        assert_eq!(states[8].buffers, vec![2, 2]);
        for (i, s) in states.iter().enumerate() {
            assert_eq!(joint_state_index(&cfg(), &s.buffers), i);
        }
        let one = EnvConfig {
            num_ues: 1,
            ..cfg()
        };
        let singles = enumerate_states(&one).unwrap();
        let support: Vec<u32> = singles.iter().map(|s| s.buffers[0]).collect();
        assert_eq!(support, vec![0, 1, 2]);
        let cap1 = EnvConfig {
            buffer_cap: 1,
            ..cfg()
        };
        assert_eq!(enumerate_states(&cap1).unwrap().len(), 4);
    }

    #[test]
    fn action_symbols_round_trip() {
        for a in UeAction::ALL {
            assert_eq!(UeAction::from_symbol(a.symbol()), Some(a));
            assert_eq!(UeAction::from_index(a.index()), Some(a));
        }
    }
}
