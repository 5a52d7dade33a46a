//! Comparison controllers and the common [`Controller`] interface.
//!
//! Static slicing and priority-greedy are pure functions of the observable
//! state; the learned controllers wrap a trained network.

mod dqn;
mod heuristics;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use dqn::{
    argmax, branch_decision, dqn_features, select_action, BranchAction, DqnAgent, DqnConfig, DqnController, DqnMetrics,
    QNetwork, ReplayBuffer, ReplayItem, DQN_CHECKPOINT_KIND,
};
pub use heuristics::{greedy_allocate, observed_demands, priority_shares, static_allocate};

use crate::env::{AllocationDecision, SlicingEnv};
use crate::error::Result;
use crate::policy::{build_observation, to_decision, upper_decision, ActMode, PolicyModel, UpperDecision};

/// Anything that maps the environment's observable state to a decision.
pub trait Controller {
    fn name(&self) -> &str;
    /// Clears per-episode memory.
    fn reset(&mut self) {}
    fn decide(&mut self, env: &SlicingEnv) -> AllocationDecision;
}

/// Fixed per-slice shares of every domain.
#[derive(Clone, Debug)]
pub struct StaticController {
    pub shares: Vec<f64>,
}

impl StaticController {
    pub fn new(shares: Vec<f64>, num_slices: usize) -> Result<Self> {
        if shares.len() != num_slices {
            return Err(crate::Error::InvalidConfig(format!(
                "expected {num_slices} static shares, got {}",
                shares.len()
            )));
        }
        // validates the simplex constraint up front
        let probe = crate::env::ResourcePool {
            radio_capacity: 1.0,
            bandwidth_capacity: 1.0,
            compute_capacity: 1.0,
        };
        static_allocate(&shares, &probe, &[])?;
        Ok(Self { shares })
    }
}

impl Controller for StaticController {
    fn name(&self) -> &str {
        "static"
    }

    fn decide(&mut self, env: &SlicingEnv) -> AllocationDecision {
        static_allocate(&self.shares, env.pool(), &env.state().active_users).expect("shares validated at construction")
    }
}

#[derive(Clone, Debug, Default)]
pub struct GreedyController;

impl Controller for GreedyController {
    fn name(&self) -> &str {
        "greedy"
    }

    fn decide(&mut self, env: &SlicingEnv) -> AllocationDecision {
        let state = env.state();
        let demands = observed_demands(state, env.specs(), env.settings().dt);
        greedy_allocate(env.pool(), &state.active_users, env.specs(), &demands)
    }
}

/// A trained PPO network acting greedily (mean logits, admission threshold 0.5).
#[derive(Clone, Debug)]
pub struct PolicyController {
    pub model: PolicyModel,
    name: String,
    held: Option<UpperDecision>,
    rng: ChaCha8Rng,
}

impl PolicyController {
    pub fn new(model: PolicyModel, name: impl Into<String>) -> Self {
        Self {
            model,
            name: name.into(),
            held: None,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }
}

impl Controller for PolicyController {
    fn name(&self) -> &str {
        &self.name
    }

    fn reset(&mut self) {
        self.held = None;
    }

    fn decide(&mut self, env: &SlicingEnv) -> AllocationDecision {
        let obs = build_observation(
            env.state(),
            env.census(),
            &self.model.layout,
            env.settings().dt,
            self.held.as_ref(),
        );
        let out = self.model.act(&obs, self.held.as_ref(), ActMode::Greedy, &mut self.rng);
        let d = to_decision(&out.action, env.pool(), &self.model.layout);
        if out.action.upper_step {
            self.held = Some(upper_decision(&out.action, &d));
        }
        d
    }
}
