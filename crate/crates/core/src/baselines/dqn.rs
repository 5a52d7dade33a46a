//! Branching deep Q-network over quantized budget shares.
//!
//! Every (slice, domain) pair is one action branch choosing a weight level in
//! `0..levels`; a domain's budget shares are the normalized weights of its
//! slices, and users split their slice budget equally. All branches share a
//! torso and are trained toward one common bootstrapped target.

use std::path::Path;

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Controller;
use crate::env::{AllocationDecision, Scenario, SlicingEnv};
use crate::error::{Error, Result};
use crate::nn::{Adam, Linear, Matrix, ParamGroup, ParamStore, Tape};
use crate::policy::{build_observation, Layout, NODE_DIM};
use crate::ppo::{read_checkpoint, write_checkpoint};
use crate::reward::{score_step, shaping_potential, ConstraintState, RewardConfig};
use crate::traffic::{synth_trace, Pattern, TrafficTrace, MAX_LOAD};

pub const DQN_CHECKPOINT_KIND: &str = "dqn";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    /// Weight levels per (slice, domain) branch.
    pub levels: usize,
    pub hidden: usize,
    pub lr: f64,
    pub discount: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Environment steps before the first update.
    pub learning_starts: usize,
    /// Environment steps between gradient updates.
    pub train_every: usize,
    /// Gradient updates between target-network syncs.
    pub target_sync: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of `total_steps` over which epsilon anneals linearly.
    pub eps_fraction: f64,
    pub huber_delta: f64,
    /// Training aborts once any |Q| exceeds this.
    pub max_q: f64,
    pub max_grad_norm: f64,
    pub total_steps: usize,
    pub seed: u64,
    pub train_loads: Vec<f64>,
    pub pattern: Pattern,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            levels: 11,
            hidden: 64,
            lr: 5e-4,
            discount: 0.9,
            replay_capacity: 50_000,
            batch_size: 64,
            learning_starts: 2_000,
            train_every: 8,
            target_sync: 250,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_fraction: 0.3,
            huber_delta: 1.0,
            max_q: 1e4,
            max_grad_norm: 10.0,
            total_steps: 300_000,
            seed: 0,
            train_loads: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            pattern: Pattern::Diurnal,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.levels < 2 || self.hidden == 0 || self.batch_size == 0 || self.train_every == 0 || self.target_sync == 0
        {
            return bad("levels must be >= 2 and hidden, batch_size, train_every, target_sync >= 1");
        }
        if self.replay_capacity < self.batch_size {
            return bad("replay_capacity must hold at least one batch");
        }
        if !(0.0..=1.0).contains(&self.eps_start) || !(0.0..=1.0).contains(&self.eps_end) {
            return bad("epsilon must lie in [0, 1]");
        }
        if !(self.eps_fraction > 0.0 && self.eps_fraction <= 1.0) {
            return bad("eps_fraction must lie in (0, 1]");
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) || !(self.lr >= 0.0) || !self.lr.is_finite() {
            return bad("discount must lie in (0, 1] and lr must be finite and >= 0");
        }
        if !(self.huber_delta > 0.0) || !(self.max_q > 0.0) || !(self.max_grad_norm > 0.0) {
            return bad("huber_delta, max_q and max_grad_norm must be > 0");
        }
        if self.train_loads.is_empty() || self.train_loads.iter().any(|l| !(0.0..=MAX_LOAD).contains(l)) {
            return bad("train_loads must be non-empty and within [0, 1.2]");
        }
        Ok(())
    }

    /// Epsilon after `step` environment steps.
    pub fn epsilon(&self, step: usize) -> f64 {
        let span = (self.eps_fraction * self.total_steps as f64).max(1.0);
        let frac = (step as f64 / span).min(1.0);
        self.eps_start + frac * (self.eps_end - self.eps_start)
    }
}

/// One branch-wise level choice per (slice, domain), slice-major.
pub type BranchAction = Vec<usize>;

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy choice per branch from a `branches x levels` Q row.
pub fn select_action<R: Rng>(q: &[f64], branches: usize, levels: usize, epsilon: f64, rng: &mut R) -> BranchAction {
    (0..branches)
        .map(|b| {
            if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
                rng.gen_range(0..levels)
            } else {
                argmax(&q[b * levels..(b + 1) * levels])
            }
        })
        .collect()
}

/// Turns branch levels into budgets; users of a slice split its budget equally.
pub fn branch_decision(action: &[usize], levels: usize, env: &SlicingEnv) -> AllocationDecision {
    let s = env.specs().len();
    let users = &env.state().active_users;
    let caps = env.pool().capacities();
    let mut d = AllocationDecision::empty(s, users.len());
    d.admissions = vec![true; s];
    let mut counts = vec![0usize; s];
    for u in users {
        counts[u.slice_id.0] += 1;
    }
    let top = (levels - 1) as f64;
    for k in 0..3 {
        let w: Vec<f64> = (0..s).map(|i| action[i * 3 + k] as f64 / top).collect();
        let total: f64 = w.iter().sum();
        for i in 0..s {
            let share = if total > 0.0 { w[i] / total } else { 1.0 / s as f64 };
            d.slice_budgets[i][k] = share * caps[k];
        }
    }
    for (u, user) in users.iter().enumerate() {
        let i = user.slice_id.0;
        for k in 0..3 {
            d.user_allocations[u][k] = d.slice_budgets[i][k] / counts[i] as f64;
        }
    }
    d
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayItem {
    pub obs: Vec<f64>,
    pub action: BranchAction,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring buffer of transitions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<ReplayItem>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn push(&mut self, item: ReplayItem) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Distinct uniformly chosen items (all of them if fewer than `n`).
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<&ReplayItem> {
        let n = n.min(self.items.len());
        sample_indices(rng, self.items.len(), n)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }
}

/// Shared torso plus one linear output of `branches * levels` Q-values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    pub params: ParamStore,
    l1: Linear,
    l2: Linear,
    out: Linear,
    pub branches: usize,
    pub levels: usize,
}

impl QNetwork {
    pub fn new(input: usize, hidden: usize, branches: usize, levels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamStore::new();
        let l1 = Linear::new(&mut ps, &mut rng, "q1", input, hidden, 1.0, ParamGroup::Value);
        let l2 = Linear::new(&mut ps, &mut rng, "q2", hidden, hidden, 1.0, ParamGroup::Value);
        let out = Linear::new(
            &mut ps,
            &mut rng,
            "q_out",
            hidden,
            branches * levels,
            0.1,
            ParamGroup::Value,
        );
        Self {
            params: ps,
            l1,
            l2,
            out,
            branches,
            levels,
        }
    }

    fn forward_var(&self, t: &mut Tape, x: Matrix) -> crate::nn::Var {
        let x = t.constant(x);
        let h = self.l1.forward(t, x);
        let h = t.tanh(h);
        let h = self.l2.forward(t, h);
        let h = t.tanh(h);
        self.out.forward(t, h)
    }

    /// Q-values, one row of `branches * levels` per input row.
    pub fn q_values(&self, x: Matrix) -> Matrix {
        let mut t = Tape::new(&self.params);
        let q = self.forward_var(&mut t, x);
        t.value(q).clone()
    }
}

/// Flattened slice-node features of the policy observation.
pub fn dqn_features(env: &SlicingEnv, layout: &Layout) -> Vec<f64> {
    let obs = build_observation(env.state(), env.census(), layout, env.settings().dt, None);
    obs.nodes.data[..layout.num_slices * NODE_DIM].to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DqnMetrics {
    pub env_steps: usize,
    pub episodes: usize,
    pub epsilon: f64,
    pub mean_reward: f64,
    pub satisfaction: f64,
    pub loss: f64,
    pub max_abs_q: f64,
}

/// Trainer state for the DQN baseline.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DqnAgent {
    pub config: DqnConfig,
    pub layout: Layout,
    pub online: QNetwork,
    target: QNetwork,
    optimizer: Adam,
    #[serde(skip)]
    replay: ReplayBuffer,
    rng: ChaCha8Rng,
    pub env_steps: usize,
    pub episodes: usize,
    updates: usize,
}

impl DqnAgent {
    pub fn new(scenario: &Scenario, config: DqnConfig) -> Result<Self> {
        config.validate()?;
        scenario.validate()?;
        let census = scenario.census();
        let layout = Layout::from_census(&census, scenario.env.history, 1);
        let online = QNetwork::new(
            layout.num_slices * NODE_DIM,
            config.hidden,
            layout.num_slices * 3,
            config.levels,
            config.seed,
        );
        let optimizer = Adam::new(&online.params, config.lr, config.lr);
        Ok(Self {
            target: online.clone(),
            replay: ReplayBuffer::new(config.replay_capacity),
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0xd9_0a11),
            layout,
            online,
            optimizer,
            config,
            env_steps: 0,
            episodes: 0,
            updates: 0,
        })
    }

    fn draw_trace(&mut self, scenario: &Scenario) -> Result<TrafficTrace> {
        let load = self.config.train_loads[self.rng.gen_range(0..self.config.train_loads.len())];
        let seed: u64 = self.rng.gen();
        synth_trace(
            load,
            self.config.pattern,
            scenario.env.horizon,
            seed,
            scenario.num_slices(),
        )
    }

    /// Trains for `config.total_steps` environment steps; `on_episode` sees
    /// one metrics record per finished episode.
    pub fn train(&mut self, scenario: &Scenario, mut on_episode: impl FnMut(&DqnMetrics)) -> Result<()> {
        let reward_cfg = RewardConfig::plain();
        let duals = ConstraintState::new(reward_cfg.bounds, 0.0);
        let trace = self.draw_trace(scenario)?;
        let mut env = SlicingEnv::new(scenario, trace, self.config.seed.wrapping_add(0x5eed));
        let users = env.census().users.clone();
        let specs = env.census().specs.clone();
        let (mut ep_reward, mut ep_sat, mut ep_len, mut ep_loss, mut ep_updates) = (0.0, 0.0, 0usize, 0.0, 0usize);
        let mut obs = dqn_features(&env, &self.layout);
        while self.env_steps < self.config.total_steps {
            let eps = self.config.epsilon(self.env_steps);
            let q = self.online.q_values(Matrix::from_vec(1, obs.len(), obs.clone()));
            let action = select_action(&q.data, self.online.branches, self.online.levels, eps, &mut self.rng);
            let decision = branch_decision(&action, self.online.levels, &env);
            let phi = shaping_potential(env.state(), &specs);
            let outcome = env.step(&decision);
            let r = score_step(
                &reward_cfg,
                &outcome,
                &users,
                &specs,
                phi,
                phi,
                self.config.discount,
                &duals,
            )?;
            let done = env.done();
            let next_obs = dqn_features(&env, &self.layout);
            self.replay.push(ReplayItem {
                obs: std::mem::take(&mut obs),
                action,
                reward: r.penalized,
                next_obs: next_obs.clone(),
                done,
            });
            obs = next_obs;
            self.env_steps += 1;
            ep_reward += r.penalized;
            ep_sat += outcome.qos.iter().filter(|q| q.satisfied()).count() as f64 / outcome.qos.len().max(1) as f64;
            ep_len += 1;

            if self.env_steps >= self.config.learning_starts && self.env_steps.is_multiple_of(self.config.train_every) {
                ep_loss += self.update()?;
                ep_updates += 1;
            }
            if done {
                self.episodes += 1;
                on_episode(&DqnMetrics {
                    env_steps: self.env_steps,
                    episodes: self.episodes,
                    epsilon: eps,
                    mean_reward: ep_reward / ep_len as f64,
                    satisfaction: ep_sat / ep_len as f64,
                    loss: if ep_updates > 0 {
                        ep_loss / ep_updates as f64
                    } else {
                        0.0
                    },
                    max_abs_q: q.data.iter().fold(0.0, |m: f64, v| m.max(v.abs())),
                });
                (ep_reward, ep_sat, ep_len, ep_loss, ep_updates) = (0.0, 0.0, 0, 0.0, 0);
                let trace = self.draw_trace(scenario)?;
                env.reset_with(Some(trace));
                obs = dqn_features(&env, &self.layout);
            }
        }
        Ok(())
    }

    /// One gradient step on a replay batch; returns the mean Huber loss.
    fn update(&mut self) -> Result<f64> {
        let batch = self.replay.sample(self.config.batch_size, &mut self.rng);
        let n = batch.len();
        let dim = batch[0].obs.len();
        let (nb, nl) = (self.online.branches, self.online.levels);
        let x = Matrix::from_vec(n, dim, batch.iter().flat_map(|b| b.obs.iter().copied()).collect());
        let xn = Matrix::from_vec(n, dim, batch.iter().flat_map(|b| b.next_obs.iter().copied()).collect());
        let q_next = self.target.q_values(xn);
        let targets: Vec<f64> = batch
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let row = q_next.row(i);
                let boot = (0..nb)
                    .map(|br| {
                        row[br * nl..(br + 1) * nl]
                            .iter()
                            .fold(f64::NEG_INFINITY, |m, v| m.max(*v))
                    })
                    .sum::<f64>()
                    / nb as f64;
                b.reward + if b.done { 0.0 } else { self.config.discount * boot }
            })
            .collect();

        let mut t = Tape::new(&self.online.params);
        let q = self.online.forward_var(&mut t, x);
        let qv = t.value(q).clone();
        if !qv.is_finite() || qv.data.iter().any(|v| v.abs() > self.config.max_q) {
            return Err(Error::Divergence(format!(
                "Q-values exceed {} after {} updates",
                self.config.max_q, self.updates
            )));
        }
        // The surrogate q * clip(q - y) has the Huber loss's gradient.
        let delta = self.config.huber_delta;
        let mut coef = Matrix::zeros(n, nb * nl);
        let mut huber = 0.0;
        for (i, b) in batch.iter().enumerate() {
            for (br, &a) in b.action.iter().enumerate() {
                let c = br * nl + a;
                let e = qv.get(i, c) - targets[i];
                huber += if e.abs() <= delta {
                    0.5 * e * e
                } else {
                    delta * (e.abs() - 0.5 * delta)
                };
                coef.set(i, c, e.clamp(-delta, delta) / (n * nb) as f64);
            }
        }
        let cv = t.constant(coef);
        let prod = t.mul(q, cv);
        let loss = t.sum_all(prod);
        let mut grads = t.backward(loss);
        drop(t);
        grads.clip_norm(self.config.max_grad_norm);
        self.optimizer.step(&mut self.online.params, &grads);
        self.updates += 1;
        if self.updates.is_multiple_of(self.config.target_sync) {
            self.target = self.online.clone();
        }
        Ok(huber / (n * nb) as f64)
    }

    pub fn controller(&self) -> DqnController {
        DqnController {
            network: self.online.clone(),
            layout: self.layout.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_checkpoint(path, DQN_CHECKPOINT_KIND, self)
    }

    /// Restores a saved agent; the replay buffer is not persisted and starts empty.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut a: Self = read_checkpoint(path, DQN_CHECKPOINT_KIND)?;
        a.replay = ReplayBuffer::new(a.config.replay_capacity);
        Ok(a)
    }
}

/// A trained Q-network acting greedily.
#[derive(Clone, Debug)]
pub struct DqnController {
    pub network: QNetwork,
    pub layout: Layout,
}

impl Controller for DqnController {
    fn name(&self) -> &str {
        "dqn"
    }

    fn decide(&mut self, env: &SlicingEnv) -> AllocationDecision {
        let obs = dqn_features(env, &self.layout);
        let q = self.network.q_values(Matrix::from_vec(1, obs.len(), obs));
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let a = select_action(&q.data, self.network.branches, self.network.levels, 0.0, &mut rng);
        branch_decision(&a, self.network.levels, env)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_epsilon_takes_the_argmax_per_branch() {
        let q = [0.1, 0.9, 0.3, 2.0, -1.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(select_action(&q, 2, 3, 0.0, &mut rng), vec![1, 0]);
    }

    #[test]
    fn full_epsilon_is_uniform_within_three_sigma() {
        let (branches, levels, draws) = (9, 11, 10_000);
        let q = vec![0.0; branches * levels];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = vec![vec![0usize; levels]; branches];
        for _ in 0..draws {
            for (b, a) in select_action(&q, branches, levels, 1.0, &mut rng)
                .into_iter()
                .enumerate()
            {
                counts[b][a] += 1;
            }
        }
        let p = 1.0 / levels as f64;
        let mean = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for row in &counts {
            for &c in row {
                assert!((c as f64 - mean).abs() <= 3.0 * sigma, "{c} vs {mean} +- {sigma}");
            }
        }
    }

    #[test]
    fn replay_returns_stored_transitions() {
        let mut buf = ReplayBuffer::new(4);
        let items: Vec<ReplayItem> = (0..3)
            .map(|i| ReplayItem {
                obs: vec![i as f64; 2],
                action: vec![i, i + 1],
                reward: i as f64 * 0.5,
                next_obs: vec![i as f64 + 1.0; 2],
                done: i == 2,
            })
            .collect();
        for it in &items {
            buf.push(it.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let got = buf.sample(3, &mut rng);
        assert_eq!(got.len(), 3);
        for g in got {
            assert!(items.contains(g));
        }
    }

    #[test]
    fn ring_buffer_overwrites_oldest() {
        let mut buf = ReplayBuffer::new(2);
        for i in 0..3 {
            buf.push(ReplayItem {
                obs: vec![i as f64],
                action: vec![],
                reward: 0.0,
                next_obs: vec![],
                done: false,
            });
        }
        assert_eq!(buf.len(), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut seen: Vec<f64> = buf.sample(2, &mut rng).iter().map(|i| i.obs[0]).collect();
        seen.sort_by(f64::total_cmp);
        assert_eq!(seen, vec![1.0, 2.0]);
    }

    #[test]
    fn epsilon_anneals_linearly_then_holds() {
        let cfg = DqnConfig {
            total_steps: 1000,
            eps_fraction: 0.5,
            ..DqnConfig::default()
        };
        assert_eq!(cfg.epsilon(0), 1.0);
        assert!((cfg.epsilon(250) - 0.525).abs() < 1e-12);
        assert!((cfg.epsilon(900) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn branch_levels_become_normalised_shares() {
        let sc = Scenario::desk();
        let env = SlicingEnv::new(&sc, TrafficTrace::constant(0.5, sc.env.horizon, 3), 0);
        let mut a = vec![0; 9];
        // radio: weights 10, 5, 5
        a[0] = 10;
        a[3] = 5;
        a[6] = 5;
        let d = branch_decision(&a, 11, &env);
        let cap = sc.pool.radio_capacity;
        assert!((d.slice_budgets[0][0] - 0.5 * cap).abs() < 1e-9);
        assert!((d.slice_budgets[1][0] - 0.25 * cap).abs() < 1e-9);
        // all-zero domains split equally
        assert!((d.slice_budgets[2][1] - sc.pool.bandwidth_capacity / 3.0).abs() < 1e-6);
        d.check_feasible(env.pool(), &env.state().active_users, 1e-9).unwrap();
    }
}
