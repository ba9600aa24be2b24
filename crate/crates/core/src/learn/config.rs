use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sign applied to the entropic-causal regularizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum RegSign {
    /// Minimize the regularizer (`+1`).
    Penalize,
    /// Maximize it (`-1`).
    Reward,
    /// Disabled (`0`).
    Off,
}

impl RegSign {
    pub fn value(self) -> f64 {
        match self {
            RegSign::Penalize => 1.0,
            RegSign::Reward => -1.0,
            RegSign::Off => 0.0,
        }
    }

    /// Short arm label used in file layouts and reports.
    pub fn arm(self) -> &'static str {
        match self {
            RegSign::Penalize => "pos",
            RegSign::Reward => "neg",
            RegSign::Off => "off",
        }
    }

    pub fn from_arm(s: &str) -> Option<Self> {
        match s {
            "pos" => Some(RegSign::Penalize),
            "neg" => Some(RegSign::Reward),
            "off" => Some(RegSign::Off),
            _ => None,
        }
    }
}

impl TryFrom<i8> for RegSign {
    type Error = String;

    fn try_from(v: i8) -> std::result::Result<Self, Self::Error> {
        match v {
            1 => Ok(RegSign::Penalize),
            -1 => Ok(RegSign::Reward),
            0 => Ok(RegSign::Off),
            other => Err(format!("reg_sign must be -1, 0 or 1, got {other}")),
        }
    }
}

impl From<RegSign> for i8 {
    fn from(s: RegSign) -> i8 {
        s.value() as i8
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub codebook_size: usize,
    pub episodes: usize,
    pub lr: f64,
    pub critic_lr: f64,
    pub reg_weight: f64,
    pub reg_sign: RegSign,
    pub ib_beta: f64,
    pub entropy_pseudocount: f64,
    pub eval_window: usize,
    pub discount: f64,
    pub hidden_width: usize,
    pub latent_dim: usize,
    /// Multiplier on the initial weights of the uplink and downlink logit rows.
    pub message_init_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            codebook_size: 8,
            episodes: 3000,
            lr: 3e-3,
            critic_lr: 1e-2,
            reg_weight: 2.0,
            reg_sign: RegSign::Penalize,
            ib_beta: 0.0,
            entropy_pseudocount: 1.0,
            eval_window: 50,
            discount: 0.9,
            hidden_width: 64,
            latent_dim: 4,
            message_init_scale: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: &str| {
            Err(Error::Config {
                field,
                reason: reason.to_string(),
            })
        };
        if self.codebook_size < 2 {
            return bad("codebook_size", "must be at least 2");
        }
        if self.eval_window < 1 {
            return bad("eval_window", "must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be positive");
        }
        if !(self.critic_lr > 0.0 && self.critic_lr.is_finite()) {
            return bad("critic_lr", "must be positive");
        }
        if !(self.reg_weight >= 0.0 && self.reg_weight.is_finite()) {
            return bad("reg_weight", "must be nonnegative");
        }
        if !(self.ib_beta >= 0.0 && self.ib_beta.is_finite()) {
            return bad("ib_beta", "must be nonnegative");
        }
        if !(self.entropy_pseudocount > 0.0 && self.entropy_pseudocount.is_finite()) {
            return bad("entropy_pseudocount", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return bad("discount", "must lie in [0, 1]");
        }
        if self.hidden_width < 1 {
            return bad("hidden_width", "must be at least 1");
        }
        if self.latent_dim < 1 {
            return bad("latent_dim", "must be at least 1");
        }
        if !(self.message_init_scale > 0.0 && self.message_init_scale.is_finite()) {
            return bad("message_init_scale", "must be positive");
        }
        Ok(())
    }
}
