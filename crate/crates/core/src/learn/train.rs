//! Centralized training of the split actors and the BS hub with a REINFORCE
//! estimator, a Monte-Carlo critic baseline, and optional entropic-causal and
//! bottleneck regularizers.
//!
//! Regularizers enter as per-decision shaping of the policy logits. For a
//! window estimate `p` of a message marginal, the gradient of `H(m)` is
//! `E[sum_m -log2 p(m) * grad pi(m | s)] / T` for episodes of length `T`, so
//! every decision is credited with the expected surprisal over all codewords
//! rather than only the sampled one. Conditional action entropies and the
//! pointwise mutual information of the bottleneck term are handled the same way.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::model::{rollout_with, DecisionCache, JointDecision, Trace, TrainedProtocol};
use super::stats::{
    ec_branch, ib_from_counts, partner, regularizer_ec, sparsity_from_counts, ChannelSparsity,
    EcBranch, EntropyReport, MessageCounts,
};
use crate::env::{EnvConfig, EnvState, MacEnv};
use crate::error::{Error, Result};
use crate::nn::{log_prob_grad, Gradients};
use crate::seeds::derive_seed;

/// Frequency threshold for counting a codeword as active.
pub const ACTIVE_EPSILON: f64 = 0.01;

/// Cap on the inverse state frequency used to weight per-state action entropies.
const MAX_STATE_WEIGHT: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub episode_window: usize,
    /// Mean undiscounted team return per episode over the window.
    pub mean_reward: f64,
    pub h_up: Vec<f64>,
    pub h_dn: Vec<f64>,
    pub h_u: Vec<f64>,
    pub active: ChannelSparsity,
    pub l_ec: f64,
    pub ib: f64,
    /// `mean_reward - sign * weight * l_ec - beta * ib`
    pub objective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearningCurves {
    pub num_ues: usize,
    pub rows: Vec<CurveRow>,
}

impl LearningCurves {
    pub fn header(num_ues: usize) -> String {
        let mut cols = vec!["episode_window".to_string(), "mean_reward".to_string()];
        cols.extend((1..=num_ues).map(|j| format!("H_m{j}_up")));
        cols.extend((1..=num_ues).map(|j| format!("H_U{j}")));
        cols.push("active_codewords_per_channel".into());
        cols.push("L_EC".into());
        cols.push("objective".into());
        cols.join(",")
    }

    /// CSV with fixed columns, dot decimal separator, six fractional digits.
    pub fn to_csv(&self) -> String {
        let mut out = Self::header(self.num_ues);
        out.push('\n');
        for r in &self.rows {
            let mut fields = vec![r.episode_window.to_string(), format!("{:.6}", r.mean_reward)];
            fields.extend(r.h_up.iter().map(|h| format!("{h:.6}")));
            fields.extend(r.h_u.iter().map(|h| format!("{h:.6}")));
            fields.push(r.active.to_field());
            fields.push(format!("{:.6}", r.l_ec));
            fields.push(format!("{:.6}", r.objective));
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    pub fn last(&self) -> Option<&CurveRow> {
        self.rows.last()
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub protocol: TrainedProtocol,
    pub curves: LearningCurves,
    /// Traces of the final evaluation window.
    pub final_window: Vec<Trace>,
}

struct SlotSample {
    state: EnvState,
    decision: JointDecision,
    cache: DecisionCache,
    team_reward: f64,
}

/// Window of recent traces with incrementally maintained counts.
struct Window {
    traces: VecDeque<Trace>,
    counts: MessageCounts,
    capacity: usize,
}

impl Window {
    fn push(&mut self, trace: Trace) -> Result<()> {
        self.counts.add(&trace, 1.0)?;
        self.traces.push_back(trace);
        if self.traces.len() > self.capacity {
            let old = self.traces.pop_front().expect("nonempty window");
            self.counts.add(&old, -1.0)?;
        }
        Ok(())
    }

    fn mean_return(&self) -> f64 {
        self.traces.iter().map(|t| t.episode_return).sum::<f64>() / self.traces.len() as f64
    }
}

pub fn train(env_config: &EnvConfig, config: &TrainConfig) -> Result<TrainOutput> {
    let mut protocol = TrainedProtocol::init(env_config, config)?;
    let mut env = MacEnv::new(env_config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1));
    let n = env_config.num_ues;
    let k = config.codebook_size;
    let alpha = config.entropy_pseudocount;
    let sign = config.reg_sign.value();
    let mut window = Window {
        traces: VecDeque::with_capacity(config.eval_window + 1),
        counts: MessageCounts::new(n, k, env_config.buffer_levels()),
        capacity: config.eval_window,
    };
    let mut rows = Vec::new();

    for episode in 0..config.episodes {
        let env_seed = derive_seed(config.seed ^ env_config.seed.rotate_left(17), episode as u64 + 2);
        let mut samples: Vec<SlotSample> = Vec::with_capacity(env_config.episode_len);
        let (trace, _) = rollout_with(&protocol, &mut env, env_seed, &mut rng, |s, d, c, r| {
            samples.push(SlotSample {
                state: s.clone(),
                decision: d.clone(),
                cache: c,
                team_reward: r.iter().sum(),
            })
        })?;
        window.push(trace)?;
        let report = EntropyReport::from_counts(&window.counts, alpha);
        let shaping = Shaping::new(&window.counts, &report, config, sign);

        update(&mut protocol, &samples, &shaping, config)
            .map_err(|e| Error::Numeric(format!("episode {episode}: {e}")))?;

        if (episode + 1) % config.eval_window == 0 {
            let l_ec = regularizer_ec(&report);
            let ib = ib_from_counts(&window.counts);
            let mean_reward = window.mean_return();
            rows.push(CurveRow {
                episode_window: (episode + 1) / config.eval_window - 1,
                mean_reward,
                h_up: report.up.clone(),
                h_dn: report.dn.clone(),
                h_u: report.u.clone(),
                active: sparsity_from_counts(&window.counts, ACTIVE_EPSILON),
                l_ec,
                ib,
                objective: mean_reward - sign * config.reg_weight * l_ec - config.ib_beta * ib,
            });
        }
    }

    Ok(TrainOutput {
        protocol,
        curves: LearningCurves { num_ues: n, rows },
        final_window: window.traces.into_iter().collect(),
    })
}

/// Per-decision additive terms derived from the current window.
struct Shaping {
    /// `[ue][state][action]`
    action: Vec<Vec<Vec<f64>>>,
    /// `[ue][state][codeword]`
    uplink: Vec<Vec<Vec<f64>>>,
}

impl Shaping {
    fn new(counts: &MessageCounts, report: &EntropyReport, config: &TrainConfig, sign: f64) -> Self {
        let n = counts.num_ues();
        let k = counts.codebook_size;
        let levels = counts.levels;
        let alpha = config.entropy_pseudocount;
        let lambda = config.reg_weight;
        let beta = config.ib_beta;
        let mut action = vec![vec![vec![0.0; 3]; levels]; n];
        let mut uplink = vec![vec![vec![0.0; k]; levels]; n];

        let surprisal = |row: &[f64], i: usize| -> f64 {
            let total: f64 = row.iter().map(|c| c + alpha).sum();
            -((row[i] + alpha) / total).log2()
        };

        if sign != 0.0 && lambda > 0.0 {
            for j in 0..n {
                match ec_branch(report, j) {
                    EcBranch::Actions => {
                        let states = counts.state_counts(j);
                        let seen: f64 = states.iter().sum();
                        for s in 0..levels {
                            let row = &counts.action_by_state[j][s];
                            let Some(h) = report.action_given_state[j][s] else {
                                continue;
                            };
                            let weight = (seen / states[s]).min(MAX_STATE_WEIGHT);
                            for a in 0..3 {
                                action[j][s][a] -= sign * lambda * weight * (surprisal(row, a) - h);
                            }
                        }
                    }
                    EcBranch::Uplink => {
                        let p = partner(j, n);
                        let h = report.up[p];
                        for u in 0..k {
                            let c = -sign * lambda * (surprisal(&counts.up[p], u) - h);
                            for s in 0..levels {
                                uplink[p][s][u] += c;
                            }
                        }
                    }
                }
            }
        }

        if beta > 0.0 {
            for j in 0..n {
                let mi = crate::info::mutual_information(&counts.up_by_state[j]);
                for s in 0..levels {
                    for u in 0..k {
                        // pointwise MI log2 p(u|s)/p(u), smoothed like the marginals
                        let pmi = surprisal(&counts.up[j], u) - surprisal(&counts.up_by_state[j][s], u);
                        uplink[j][s][u] -= beta * (pmi - mi);
                    }
                }
            }
        }
        Self { action, uplink }
    }
}

/// Expected ascent direction in logit space for per-outcome signals `shape`:
/// `sum_b p_b shape_b (e_b - p)`, the all-outcomes form of crediting the
/// sampled outcome with its signal.
fn shaped_direction(probs: &[f64], shape: &[f64]) -> Vec<f64> {
    let mean: f64 = probs.iter().zip(shape).map(|(p, v)| p * v).sum();
    probs.iter().zip(shape).map(|(p, v)| p * (v - mean)).collect()
}

/// One gradient step on all networks from an episode's samples.
fn update(
    protocol: &mut TrainedProtocol,
    samples: &[SlotSample],
    shaping: &Shaping,
    config: &TrainConfig,
) -> Result<()> {
    let n = protocol.num_ues();
    let k = protocol.codebook_size();
    let lat = config.latent_dim;
    let len = samples.len();
    let scale = 1.0 / len as f64;
    // regularizers are functions of per-decision averages, returns are sums
    let reg_scale = scale;

    let mut returns = vec![0.0; len];
    let mut acc = 0.0;
    for t in (0..len).rev() {
        acc = samples[t].team_reward + config.discount * acc;
        returns[t] = acc;
    }

    let mut g_lower: Vec<Gradients> = protocol.lower_nets.iter().map(Gradients::zeros_like).collect();
    let mut g_upper: Vec<Gradients> = protocol.upper_nets.iter().map(Gradients::zeros_like).collect();
    let mut g_bs = Gradients::zeros_like(&protocol.bs_net);
    let mut g_critic = Gradients::zeros_like(&protocol.critic);

    for (t, sample) in samples.iter().enumerate() {
        let critic_in = protocol.critic_input(&sample.state.buffers, sample.state.slot);
        let critic_acts = protocol.critic.forward_cached(&critic_in)?;
        let value = critic_acts.output()[0];
        let advantage = returns[t] - value;
        protocol.critic.accumulate_backward(
            &critic_acts,
            &[value - returns[t]],
            scale,
            &mut g_critic,
        )?;

        let d = &sample.decision;
        let c = &sample.cache;
        let mut bs_upstream = vec![0.0; n * k];
        for j in 0..n {
            let s = sample.state.buffers[j] as usize;
            let a = d.actions[j].index();

            // ascent on signal * log pi  ==  descent with upstream -signal * dlogpi
            let act_shape = shaped_direction(&c.action_probs[j], &shaping.action[j][s]);
            let upstream: Vec<f64> = log_prob_grad(&c.action_probs[j], a)
                .into_iter()
                .zip(act_shape)
                .map(|(g, h)| -advantage * g - reg_scale * h)
                .collect();
            let d_input =
                protocol.upper_nets[j].accumulate_backward(&c.upper[j], &upstream, scale, &mut g_upper[j])?;

            let up_shape = shaped_direction(&c.up_probs[j], &shaping.uplink[j][s]);
            let mut lower_up: Vec<f64> = d_input[..lat].iter().map(|v| v / scale).collect();
            lower_up.extend(
                log_prob_grad(&c.up_probs[j], d.ups[j])
                    .into_iter()
                    .zip(up_shape)
                    .map(|(g, h)| -advantage * g - reg_scale * h),
            );
            protocol.lower_nets[j].accumulate_backward(&c.lower[j], &lower_up, scale, &mut g_lower[j])?;

            for (slot, g) in bs_upstream[j * k..(j + 1) * k]
                .iter_mut()
                .zip(log_prob_grad(&c.dn_probs[j], d.dns[j]))
            {
                *slot = -advantage * g;
            }
        }
        protocol
            .bs_net
            .accumulate_backward(&c.bs, &bs_upstream, scale, &mut g_bs)?;
    }

    for (net, g) in protocol.lower_nets.iter_mut().zip(&g_lower) {
        net.apply_sgd(g, config.lr)?;
    }
    for (net, g) in protocol.upper_nets.iter_mut().zip(&g_upper) {
        net.apply_sgd(g, config.lr)?;
    }
    protocol.bs_net.apply_sgd(&g_bs, config.lr)?;
    protocol.critic.apply_sgd(&g_critic, config.critic_lr)?;
    if !protocol.execution_nets().all(|m| m.all_finite()) || !protocol.critic.all_finite() {
        return Err(Error::Numeric("non-finite parameters".into()));
    }
    Ok(())
}
