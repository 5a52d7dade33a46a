//! Constrained PPO training loop.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::buffer::{RolloutBuffer, Transition};
use super::checkpoint::{read_checkpoint, write_checkpoint};
use super::config::TrainConfig;
use super::gae::compute_gae;
use crate::env::{Scenario, SlicingEnv, NUM_COSTS};
use crate::error::{Error, Result};
use crate::nn::{Adam, Matrix, Tape};
use crate::policy::{
    build_observation, to_decision, upper_decision, ActMode, Layout, Levels, Observation, PolicyAction, PolicyKind,
    PolicyModel, UpperDecision,
};
use crate::reward::{score_step, shaping_potential, ConstraintState};
use crate::traffic::{synth_trace, TrafficTrace};

pub const PPO_CHECKPOINT_KIND: &str = "ppo";
/// Abort threshold on the mean absolute deviation of probability ratios from 1.
pub const MAX_RATIO_DEVIATION: f64 = 10.0;

/// Scalars logged once per iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub env_steps: usize,
    pub episodes: usize,
    /// Mean of the reward the policy is trained on.
    pub mean_reward: f64,
    pub mean_base_reward: f64,
    pub mean_shaped_reward: f64,
    pub mean_costs: [f64; NUM_COSTS],
    /// Multipliers after this iteration's dual update.
    pub multipliers: [f64; NUM_COSTS],
    /// Fraction of (user, step) pairs with every QoS target met.
    pub satisfaction: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub cost_value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Mean `|ratio - 1|` over the last epoch.
    pub ratio_deviation: f64,
    /// Max `|ratio - 1|` on the first minibatch of the first epoch.
    pub first_minibatch_ratio_deviation: f64,
    pub grad_norm: f64,
    pub levels: Levels,
}

/// Complete trainer state; checkpoints serialize this between iterations.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trainer {
    pub config: TrainConfig,
    pub scenario: Scenario,
    pub model: PolicyModel,
    optimizer: Adam,
    pub duals: ConstraintState,
    pub iteration: usize,
    pub env_steps: usize,
    pub episodes: usize,
    rng: ChaCha8Rng,
    env: SlicingEnv,
    held: Option<UpperDecision>,
}

/// Value heads predict returns divided by this, keeping targets near unit scale.
fn value_scale(discount: f64, horizon: usize) -> f64 {
    1.0 / (1.0 - discount).max(1.0 / horizon.max(1) as f64)
}

fn new_model(kind: PolicyKind, scenario: &Scenario, seed: u64) -> PolicyModel {
    let census = scenario.census();
    let layout = Layout::from_census(&census, scenario.env.history, scenario.env.upper_period);
    match kind {
        PolicyKind::Hierarchical => PolicyModel::hierarchical(layout, seed),
        PolicyKind::Flat => PolicyModel::flat(layout, seed),
    }
}

impl Trainer {
    pub fn new(scenario: Scenario, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        scenario.validate()?;
        let model = new_model(config.policy, &scenario, config.seed);
        let optimizer = Adam::new(&model.params, config.lr_policy, config.lr_value);
        let duals = ConstraintState::new(config.reward.bounds, config.dual_step);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7a11_0c8e);
        let trace = Self::draw_trace(&config, &scenario, &mut rng)?;
        let env = SlicingEnv::new(&scenario, trace, config.seed.wrapping_add(0x9e37_79b9));
        Ok(Self {
            config,
            scenario,
            model,
            optimizer,
            duals,
            iteration: 0,
            env_steps: 0,
            episodes: 0,
            rng,
            env,
            held: None,
        })
    }

    fn draw_trace(config: &TrainConfig, scenario: &Scenario, rng: &mut ChaCha8Rng) -> Result<TrafficTrace> {
        let load = config.train_loads[rng.gen_range(0..config.train_loads.len())];
        let seed: u64 = rng.gen();
        synth_trace(load, config.pattern, scenario.env.horizon, seed, scenario.num_slices())
    }

    /// Number of iterations the configured step budget allows (at least one).
    pub fn total_iterations(&self) -> usize {
        (self.config.total_steps / self.config.rollout_len).max(1)
    }

    pub fn finished(&self) -> bool {
        self.iteration >= self.total_iterations()
    }

    fn observe(&self) -> Observation {
        build_observation(
            self.env.state(),
            self.env.census(),
            &self.model.layout,
            self.env.settings().dt,
            self.held.as_ref(),
        )
    }

    fn collect(&mut self) -> Result<RolloutBuffer> {
        let n = self.config.rollout_len;
        let mut buf = RolloutBuffer::new(n);
        let scale = value_scale(self.config.discount, self.scenario.env.horizon);
        let users = self.env.census().users.clone();
        let specs = self.env.census().specs.clone();
        while !buf.is_full() {
            let obs = self.observe();
            let phi_s = shaping_potential(self.env.state(), &specs);
            let out = self.model.act(&obs, self.held.as_ref(), ActMode::Sample, &mut self.rng);
            let decision = to_decision(&out.action, self.env.pool(), &self.model.layout);
            if out.action.upper_step {
                self.held = Some(upper_decision(&out.action, &decision));
            }
            let outcome = self.env.step(&decision);
            let phi_next = shaping_potential(self.env.state(), &specs);
            let r = score_step(
                &self.config.reward,
                &outcome,
                &users,
                &specs,
                phi_s,
                phi_next,
                self.config.discount,
                &self.duals,
            )?;
            let satisfied =
                outcome.qos.iter().filter(|q| q.satisfied()).count() as f64 / outcome.qos.len().max(1) as f64;
            let done = self.env.done();
            buf.push(Transition {
                observation: obs,
                action: out.action,
                log_prob: out.log_prob,
                value: out.value * scale,
                cost_value: out.cost_value.map(|c| c * scale),
                base_reward: r.base,
                shaped_reward: r.shaped,
                penalized_reward: r.penalized,
                costs: outcome.costs,
                done,
                potential: r.potential,
                satisfied,
            });
            self.env_steps += 1;
            if done {
                self.episodes += 1;
                let trace = Self::draw_trace(&self.config, &self.scenario, &mut self.rng)?;
                self.env.reset_with(Some(trace));
                self.held = None;
            }
        }
        Ok(buf)
    }

    fn levels(&self) -> Levels {
        match (self.config.alternate_levels, self.iteration % 2) {
            (false, _) => Levels::Both,
            (true, 0) => Levels::Upper,
            (true, _) => Levels::Lower,
        }
    }

    /// Collects one rollout, updates the policy and the dual multipliers.
    pub fn run_iteration(&mut self) -> Result<IterationMetrics> {
        let cfg = self.config.clone();
        let buf = self.collect()?;
        let n = buf.len();
        let scale = value_scale(cfg.discount, self.scenario.env.horizon);

        let last = &buf.steps()[n - 1];
        let (boot_v, boot_c) = if last.done {
            (0.0, [0.0; NUM_COSTS])
        } else {
            let (v, c) = self.model.critic(&self.observe());
            (v * scale, c.map(|x| x * scale))
        };
        let (mut adv, returns) = compute_gae(
            &buf.rewards(),
            &buf.values(),
            &buf.dones(),
            boot_v,
            cfg.discount,
            cfg.gae_lambda,
        )?;
        let mut cost_returns = vec![[0.0; NUM_COSTS]; n];
        for k in 0..NUM_COSTS {
            let (_, ret) = compute_gae(
                &buf.costs(k),
                &buf.cost_values(k),
                &buf.dones(),
                boot_c[k],
                cfg.discount,
                cfg.gae_lambda,
            )?;
            for (t, r) in ret.into_iter().enumerate() {
                cost_returns[t][k] = r;
            }
        }
        let mean_adv = adv.iter().sum::<f64>() / n as f64;
        let std_adv = (adv.iter().map(|a| (a - mean_adv).powi(2)).sum::<f64>() / n as f64).sqrt();
        for a in &mut adv {
            *a = (*a - mean_adv) / (std_adv + 1e-8);
        }

        let levels = self.levels();
        let steps = buf.steps();
        let old_logp: Vec<f64> = if levels == Levels::Both {
            steps.iter().map(|t| t.log_prob).collect()
        } else {
            self.batched_log_probs(steps, levels)
        };

        let mut order: Vec<usize> = (0..n).collect();
        let mb = cfg.minibatch_size.min(n);
        let mut stats = UpdateStats::default();
        let mut first_dev = None;
        for _epoch in 0..cfg.epochs {
            order.shuffle(&mut self.rng);
            let mut epoch_dev = 0.0;
            let mut epoch_count = 0usize;
            for chunk in order.chunks(mb) {
                let obs: Vec<&Observation> = chunk.iter().map(|&i| &steps[i].observation).collect();
                let acts: Vec<&PolicyAction> = chunk.iter().map(|&i| &steps[i].action).collect();
                let old: Vec<f64> = chunk.iter().map(|&i| old_logp[i]).collect();
                let a: Vec<f64> = chunk.iter().map(|&i| adv[i]).collect();
                let ret = Matrix::column(chunk.iter().map(|&i| returns[i] / scale).collect());
                let cret = Matrix::from_vec(
                    chunk.len(),
                    NUM_COSTS,
                    chunk.iter().flat_map(|&i| cost_returns[i].map(|c| c / scale)).collect(),
                );

                let mut t = Tape::new(&self.model.params);
                let heads = self.model.forward(&mut t, &obs);
                let (logp, ent) = self.model.log_prob_and_entropy_for(&mut t, &heads, &acts, levels);
                let surr = t.ppo_clip(logp, &old, &a, cfg.clip_eps);
                let target = t.constant(ret);
                let vd = t.sub(heads.value, target);
                let vsq = t.square(vd);
                let vloss = t.mean_all(vsq);
                let ctarget = t.constant(cret);
                let cd = t.sub(heads.cost_value, ctarget);
                let csq = t.square(cd);
                let closs = t.mean_all(csq);
                let wv = t.scale(vloss, cfg.vf_coef);
                let wc = t.scale(closs, cfg.cost_vf_coef);
                let we = t.scale(ent, -cfg.ent_coef);
                let l1 = t.add(surr, wv);
                let l2 = t.add(l1, wc);
                let loss = t.add(l2, we);
                let loss_value = t.value(loss).data[0];
                if !loss_value.is_finite() {
                    return Err(Error::Divergence(format!(
                        "non-finite loss at iteration {}",
                        self.iteration
                    )));
                }

                let new_logp = &t.value(logp).data;
                let mut max_dev: f64 = 0.0;
                for (nl, ol) in new_logp.iter().zip(&old) {
                    let r = (nl - ol).exp();
                    let dev = (r - 1.0).abs();
                    max_dev = max_dev.max(dev);
                    epoch_dev += dev;
                    epoch_count += 1;
                    stats.kl += (r - 1.0) - (nl - ol);
                    stats.clipped += (dev > cfg.clip_eps) as usize as f64;
                    stats.samples += 1.0;
                }
                if first_dev.is_none() {
                    first_dev = Some(max_dev);
                }
                stats.policy_loss += t.value(surr).data[0];
                stats.value_loss += t.value(vloss).data[0];
                stats.cost_value_loss += t.value(closs).data[0];
                stats.entropy += t.value(ent).data[0];
                stats.batches += 1.0;

                let mut grads = t.backward(loss);
                drop(t);
                stats.grad_norm += grads.global_norm();
                grads.clip_norm(cfg.max_grad_norm);
                self.optimizer.step(&mut self.model.params, &grads);
            }
            let mean_dev = epoch_dev / epoch_count.max(1) as f64;
            stats.ratio_deviation = mean_dev;
            if !(mean_dev <= MAX_RATIO_DEVIATION) || !self.model.params.is_finite() {
                return Err(Error::Divergence(format!(
                    "mean |ratio - 1| = {mean_dev:.3} after an epoch of iteration {} (limit {MAX_RATIO_DEVIATION})",
                    self.iteration
                )));
            }
        }

        let mean_costs = buf.mean_costs();
        if cfg.reward.lagrangian {
            self.duals = self.duals.dual_update(&mean_costs);
        } else {
            self.duals.running_cost = mean_costs;
        }
        let mean = |f: &dyn Fn(&Transition) -> f64| steps.iter().map(f).sum::<f64>() / n as f64;
        let b = stats.batches.max(1.0);
        let metrics = IterationMetrics {
            iteration: self.iteration,
            env_steps: self.env_steps,
            episodes: self.episodes,
            mean_reward: mean(&|t| t.penalized_reward),
            mean_base_reward: mean(&|t| t.base_reward),
            mean_shaped_reward: mean(&|t| t.shaped_reward),
            mean_costs,
            multipliers: self.duals.multipliers,
            satisfaction: mean(&|t| t.satisfied),
            policy_loss: stats.policy_loss / b,
            value_loss: stats.value_loss / b,
            cost_value_loss: stats.cost_value_loss / b,
            entropy: stats.entropy / b,
            approx_kl: stats.kl / stats.samples.max(1.0),
            clip_fraction: stats.clipped / stats.samples.max(1.0),
            ratio_deviation: stats.ratio_deviation,
            first_minibatch_ratio_deviation: first_dev.unwrap_or(0.0),
            grad_norm: stats.grad_norm / b,
            levels,
        };
        self.iteration += 1;
        Ok(metrics)
    }

    fn batched_log_probs(&self, steps: &[Transition], levels: Levels) -> Vec<f64> {
        let mut out = Vec::with_capacity(steps.len());
        for chunk in steps.chunks(256) {
            let obs: Vec<&Observation> = chunk.iter().map(|t| &t.observation).collect();
            let acts: Vec<&PolicyAction> = chunk.iter().map(|t| &t.action).collect();
            let mut t = Tape::new(&self.model.params);
            let heads = self.model.forward(&mut t, &obs);
            let (lp, _) = self.model.log_prob_and_entropy_for(&mut t, &heads, &acts, levels);
            out.extend_from_slice(&t.value(lp).data);
        }
        out
    }

    /// Runs iterations until the step budget is spent, passing each
    /// iteration's metrics to `on_iteration`.
    pub fn train(&mut self, mut on_iteration: impl FnMut(&IterationMetrics, &Trainer) -> Result<()>) -> Result<()> {
        while !self.finished() {
            let m = self.run_iteration()?;
            on_iteration(&m, self)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_checkpoint(path, PPO_CHECKPOINT_KIND, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_checkpoint(path, PPO_CHECKPOINT_KIND)
    }

    /// Loads a checkpoint and checks that it fits `scenario`'s dimensions.
    pub fn load_for(path: impl AsRef<Path>, scenario: &Scenario) -> Result<Self> {
        let t = Self::load(path)?;
        check_dims(&t.model.layout, scenario)?;
        Ok(t)
    }
}

/// Errors unless a policy laid out as `layout` can act in `scenario`.
pub fn check_dims(layout: &Layout, scenario: &Scenario) -> Result<()> {
    let census = scenario.census();
    let want = (
        census.num_slices(),
        census.num_users(),
        census.num_cells,
        scenario.env.history,
    );
    let have = (layout.num_slices, layout.num_users(), layout.num_cells, layout.history);
    if want != have {
        return Err(Error::Dimension(format!(
            "checkpoint expects (slices, users, cells, history) = {have:?}, scenario has {want:?}"
        )));
    }
    Ok(())
}

#[derive(Default)]
struct UpdateStats {
    policy_loss: f64,
    value_loss: f64,
    cost_value_loss: f64,
    entropy: f64,
    kl: f64,
    clipped: f64,
    samples: f64,
    batches: f64,
    grad_norm: f64,
    ratio_deviation: f64,
}
