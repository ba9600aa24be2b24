//! Split actors with a shared base-station message hub.
//!
//! Per slot, UE `j` feeds its buffer level through its lower network, which
//! yields a latent vector and logits over the uplink codebook. The BS network
//! reads the one-hot uplink codewords of all UEs and emits downlink logits
//! for each UE. Each upper network maps (latent, downlink one-hot) to action
//! logits.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::env::{EnvConfig, EnvState, MacEnv, UeAction};
use crate::error::{contract, Result};
use crate::nn::{argmax, one_hot, sample_categorical, softmax, Activations, Mlp};

pub const PROTOCOL_FORMAT: &str = "maclab-trained-protocol";
pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedProtocol {
    pub format: String,
    pub version: u32,
    pub env: EnvConfig,
    pub config: TrainConfig,
    pub lower_nets: Vec<Mlp>,
    pub upper_nets: Vec<Mlp>,
    pub bs_net: Mlp,
    pub critic: Mlp,
}

/// How a categorical choice is made from a softmax.
pub enum Choice<'a> {
    Sample(&'a mut ChaCha8Rng),
    Greedy,
}

impl Choice<'_> {
    fn pick(&mut self, probs: &[f64]) -> usize {
        match self {
            Choice::Sample(rng) => sample_categorical(probs, *rng),
            Choice::Greedy => argmax(probs),
        }
    }
}

/// One slot's message chain and actions for all UEs.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JointDecision {
    pub ups: Vec<usize>,
    pub dns: Vec<usize>,
    pub actions: Vec<UeAction>,
}

/// Forward-pass intermediates kept for the policy-gradient update.
pub(crate) struct DecisionCache {
    pub lower: Vec<Activations>,
    pub up_probs: Vec<Vec<f64>>,
    pub bs: Activations,
    pub dn_probs: Vec<Vec<f64>>,
    pub upper: Vec<Activations>,
    pub action_probs: Vec<Vec<f64>>,
}

impl TrainedProtocol {
    /// Freshly initialized (untrained) protocol.
    pub fn init(env: &EnvConfig, config: &TrainConfig) -> Result<Self> {
        env.validate()?;
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);
        let h = config.hidden_width;
        let k = config.codebook_size;
        let n = env.num_ues;
        let levels = env.buffer_levels();
        let lat = config.latent_dim;
        let mut lower_nets = Vec::with_capacity(n);
        let mut upper_nets = Vec::with_capacity(n);
        for _ in 0..n {
            lower_nets.push(Mlp::new(&[levels, h, h, lat + k], &mut rng)?);
        }
        for _ in 0..n {
            upper_nets.push(Mlp::new(&[lat + k, h, h, UeAction::COUNT], &mut rng)?);
        }
        let mut bs_net = Mlp::new(&[n * k, h, h, n * k], &mut rng)?;
        let critic = Mlp::new(&[n * levels + 1, h, h, 1], &mut rng)?;
        for net in &mut lower_nets {
            scale_output_rows(net, lat..lat + k, config.message_init_scale);
        }
        scale_output_rows(&mut bs_net, 0..n * k, config.message_init_scale);
        Ok(Self {
            format: PROTOCOL_FORMAT.to_string(),
            version: PROTOCOL_VERSION,
            env: env.clone(),
            config: config.clone(),
            lower_nets,
            upper_nets,
            bs_net,
            critic,
        })
    }

    pub fn num_ues(&self) -> usize {
        self.env.num_ues
    }

    pub fn codebook_size(&self) -> usize {
        self.config.codebook_size
    }

    /// Stable identifier recorded as provenance of derived artifacts.
    pub fn identifier(&self) -> String {
        format!(
            "neural-{}-seed{}",
            self.config.reg_sign.arm(),
            self.config.seed
        )
    }

    /// Shape consistency of every network with the configs.
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.config.validate()?;
        let n = self.num_ues();
        let k = self.codebook_size();
        let levels = self.env.buffer_levels();
        let lat = self.config.latent_dim;
        if self.lower_nets.len() != n || self.upper_nets.len() != n {
            return Err(contract("one lower and one upper network per UE required"));
        }
        for net in &self.lower_nets {
            if net.input_dim() != levels || net.output_dim() != lat + k {
                return Err(contract("lower network shape mismatch"));
            }
        }
        for net in &self.upper_nets {
            if net.input_dim() != lat + k || net.output_dim() != UeAction::COUNT {
                return Err(contract("upper network shape mismatch"));
            }
        }
        if self.bs_net.input_dim() != n * k || self.bs_net.output_dim() != n * k {
            return Err(contract("BS network shape mismatch"));
        }
        if self.critic.input_dim() != n * levels + 1 || self.critic.output_dim() != 1 {
            return Err(contract("critic shape mismatch"));
        }
        Ok(())
    }

    pub fn execution_nets(&self) -> impl Iterator<Item = &Mlp> {
        self.lower_nets
            .iter()
            .chain(std::iter::once(&self.bs_net))
            .chain(&self.upper_nets)
    }

    pub(crate) fn critic_input(&self, buffers: &[u32], slot: u32) -> Vec<f64> {
        let levels = self.env.buffer_levels();
        let mut x = vec![0.0; buffers.len() * levels + 1];
        for (j, &b) in buffers.iter().enumerate() {
            x[j * levels + b as usize] = 1.0;
        }
        x[buffers.len() * levels] = slot as f64 / self.env.episode_len as f64;
        x
    }

    pub fn decide(&self, buffers: &[u32], choice: &mut Choice<'_>) -> Result<JointDecision> {
        Ok(self.decide_cached(buffers, choice)?.0)
    }

    /// Probability of each action for UE `ue` given its own buffer and downlink codeword.
    pub fn action_probs(&self, ue: usize, level: u32, dn: usize) -> Result<Vec<f64>> {
        let lat = self.config.latent_dim;
        let lower = self.lower_nets[ue].forward(&one_hot(level as usize, self.env.buffer_levels()))?;
        let mut input = lower[..lat].to_vec();
        input.extend(one_hot(dn, self.codebook_size()));
        Ok(softmax(&self.upper_nets[ue].forward(&input)?))
    }

    pub(crate) fn decide_cached(
        &self,
        buffers: &[u32],
        choice: &mut Choice<'_>,
    ) -> Result<(JointDecision, DecisionCache)> {
        let n = self.num_ues();
        if buffers.len() != n {
            return Err(contract(format!(
                "protocol expects {n} UEs, state has {}",
                buffers.len()
            )));
        }
        let k = self.codebook_size();
        let lat = self.config.latent_dim;
        let levels = self.env.buffer_levels();

        let mut lower = Vec::with_capacity(n);
        let mut up_probs = Vec::with_capacity(n);
        let mut ups = Vec::with_capacity(n);
        for (j, &b) in buffers.iter().enumerate() {
            if b as usize >= levels {
                return Err(contract(format!("buffer level {b} exceeds capacity")));
            }
            let acts = self.lower_nets[j].forward_cached(&one_hot(b as usize, levels))?;
            let p = softmax(&acts.output()[lat..]);
            ups.push(choice.pick(&p));
            up_probs.push(p);
            lower.push(acts);
        }

        let mut bs_in = vec![0.0; n * k];
        for (j, &u) in ups.iter().enumerate() {
            bs_in[j * k + u] = 1.0;
        }
        let bs = self.bs_net.forward_cached(&bs_in)?;
        let mut dn_probs = Vec::with_capacity(n);
        let mut dns = Vec::with_capacity(n);
        for j in 0..n {
            let p = softmax(&bs.output()[j * k..(j + 1) * k]);
            dns.push(choice.pick(&p));
            dn_probs.push(p);
        }

        let mut upper = Vec::with_capacity(n);
        let mut action_probs = Vec::with_capacity(n);
        let mut actions = Vec::with_capacity(n);
        for j in 0..n {
            let mut input = lower[j].output()[..lat].to_vec();
            input.extend(one_hot(dns[j], k));
            let acts = self.upper_nets[j].forward_cached(&input)?;
            let p = softmax(acts.output());
            let a = choice.pick(&p);
            actions.push(UeAction::from_index(a).expect("action head has three outputs"));
            action_probs.push(p);
            upper.push(acts);
        }

        Ok((
            JointDecision { ups, dns, actions },
            DecisionCache {
                lower,
                up_probs,
                bs,
                dn_probs,
                upper,
                action_probs,
            },
        ))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let p: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if p.format != PROTOCOL_FORMAT {
            return Err(contract(format!("unexpected file format `{}`", p.format)));
        }
        p.validate()?;
        Ok(p)
    }
}

/// Per-UE record of one slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub slot: u32,
    pub ue: usize,
    pub state: u32,
    pub up: usize,
    pub dn: usize,
    pub action: UeAction,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub num_ues: usize,
    pub records: Vec<TraceRecord>,
    pub episode_return: f64,
    pub collisions: usize,
}

impl Trace {
    pub fn slots(&self) -> impl Iterator<Item = &[TraceRecord]> {
        self.records.chunks(self.num_ues)
    }
}

/// Runs one episode with sampled messages and actions. The environment's
/// state is reset with its own seed.
fn scale_output_rows(net: &mut Mlp, rows: std::ops::Range<usize>, factor: f64) {
    let last = net.layers_mut().last_mut().expect("networks have layers");
    let inputs = last.inputs;
    for o in rows {
        last.weights[o * inputs..(o + 1) * inputs].iter_mut().for_each(|w| *w *= factor);
        last.bias[o] *= factor;
    }
}

pub fn rollout_episode(
    protocol: &TrainedProtocol,
    env: &mut MacEnv,
    rng: &mut ChaCha8Rng,
) -> Result<Trace> {
    let seed = env.config().seed;
    Ok(rollout_with(protocol, env, seed, rng, |_, _, _, _| {})?.0)
}

/// Rollout that also hands every slot's cache to `visit` (used in training).
pub(crate) fn rollout_with<F>(
    protocol: &TrainedProtocol,
    env: &mut MacEnv,
    env_seed: u64,
    rng: &mut ChaCha8Rng,
    mut visit: F,
) -> Result<(Trace, Vec<EnvState>)>
where
    F: FnMut(&EnvState, &JointDecision, DecisionCache, &[f64]),
{
    if env.config().num_ues != protocol.num_ues() {
        return Err(contract(format!(
            "environment has {} UEs, protocol was trained for {}",
            env.config().num_ues,
            protocol.num_ues()
        )));
    }
    let n = protocol.num_ues();
    let len = env.config().episode_len;
    let mut state = env.reset_seeded(env_seed);
    let mut records = Vec::with_capacity(len * n);
    let mut states = Vec::with_capacity(len);
    let mut total = 0.0;
    let mut collisions = 0;
    for _ in 0..len {
        let (decision, cache) = protocol.decide_cached(&state.buffers, &mut Choice::Sample(rng))?;
        let (next, outcome) = env.step(&state, &decision.actions)?;
        for j in 0..n {
            records.push(TraceRecord {
                slot: state.slot,
                ue: j,
                state: state.buffers[j],
                up: decision.ups[j],
                dn: decision.dns[j],
                action: decision.actions[j],
                reward: outcome.rewards[j],
            });
        }
        total += outcome.rewards.iter().sum::<f64>();
        collisions += usize::from(outcome.collision);
        visit(&state, &decision, cache, &outcome.rewards);
        states.push(state);
        state = next;
    }
    Ok((
        Trace {
            num_ues: n,
            records,
            episode_return: total,
            collisions,
        },
        states,
    ))
}
