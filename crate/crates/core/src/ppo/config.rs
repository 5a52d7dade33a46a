use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::PolicyKind;
use crate::reward::RewardConfig;
use crate::traffic::{Pattern, MAX_LOAD};

/// Hyperparameters of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub policy: PolicyKind,
    pub reward: RewardConfig,
    /// Discount factor, also used as the shaping discount.
    pub discount: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub lr_policy: f64,
    pub lr_value: f64,
    /// Dual ascent step size.
    pub dual_step: f64,
    pub rollout_len: usize,
    pub total_steps: usize,
    pub seed: u64,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub cost_vf_coef: f64,
    pub max_grad_norm: f64,
    /// Update the upper level on even iterations and the lower level on odd ones.
    pub alternate_levels: bool,
    /// Each episode draws its traffic load uniformly from this list.
    pub train_loads: Vec<f64>,
    pub pattern: Pattern,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            policy: PolicyKind::Hierarchical,
            reward: RewardConfig::constrained(),
            discount: 0.9,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            epochs: 4,
            minibatch_size: 256,
            lr_policy: 1e-3,
            lr_value: 1e-3,
            dual_step: 0.01,
            rollout_len: 2048,
            total_steps: 300_000,
            seed: 0,
            ent_coef: 1e-3,
            vf_coef: 0.5,
            cost_vf_coef: 0.5,
            max_grad_norm: 0.5,
            alternate_levels: false,
            train_loads: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            pattern: Pattern::Diurnal,
        }
    }
}

impl TrainConfig {
    /// The hierarchical policy with adaptive weights, shaping and Lagrangian constraints.
    pub fn hmppo() -> Self {
        Self::default()
    }

    /// The flat policy on the plain equal-weight reward.
    pub fn standard_ppo() -> Self {
        Self {
            policy: PolicyKind::Flat,
            reward: RewardConfig::plain(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad("discount must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps must lie in (0, 1)");
        }
        let rates = [self.lr_policy, self.lr_value, self.dual_step];
        if rates.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return bad("learning rates and dual step must be finite and >= 0");
        }
        if self.epochs == 0 || self.minibatch_size == 0 || self.rollout_len == 0 {
            return bad("epochs, minibatch_size and rollout_len must be >= 1");
        }
        let coefs = [self.ent_coef, self.vf_coef, self.cost_vf_coef];
        if coefs.iter().any(|c| !(*c >= 0.0)) || !(self.max_grad_norm > 0.0) {
            return bad("loss coefficients must be >= 0 and max_grad_norm > 0");
        }
        if self.train_loads.is_empty() || self.train_loads.iter().any(|l| !(0.0..=MAX_LOAD).contains(l)) {
            return bad("train_loads must be non-empty and within [0, 1.2]");
        }
        if !(self.reward.sensitivity >= 0.0) || self.reward.bounds.iter().any(|b| !(*b >= 0.0)) {
            return bad("reward sensitivity and constraint bounds must be >= 0");
        }
        Ok(())
    }
}
