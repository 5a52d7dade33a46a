use crate::env::NUM_COSTS;
use crate::policy::{Observation, PolicyAction};

/// One collected transition.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub observation: Observation,
    pub action: PolicyAction,
    pub log_prob: f64,
    pub value: f64,
    pub cost_value: [f64; NUM_COSTS],
    pub base_reward: f64,
    pub shaped_reward: f64,
    /// The reward the policy is trained on.
    pub penalized_reward: f64,
    pub costs: [f64; NUM_COSTS],
    /// The episode ended after this step.
    pub done: bool,
    pub potential: f64,
    /// Fraction of users whose QoS was fully met on this step.
    pub satisfied: f64,
}

/// Fixed-capacity on-policy storage for one iteration.
#[derive(Clone, Debug, Default)]
pub struct RolloutBuffer {
    capacity: usize,
    steps: Vec<Transition>,
}

impl RolloutBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            steps: Vec::with_capacity(capacity),
        }
    }

    /// Appends a transition; panics when full.
    pub fn push(&mut self, t: Transition) {
        assert!(self.steps.len() < self.capacity, "rollout buffer is full");
        self.steps.push(t);
    }

    pub fn is_full(&self) -> bool {
        self.steps.len() == self.capacity
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn steps(&self) -> &[Transition] {
        &self.steps
    }

    pub fn clear(&mut self) {
        self.steps.clear();
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|t| t.penalized_reward).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.steps.iter().map(|t| t.value).collect()
    }

    pub fn dones(&self) -> Vec<bool> {
        self.steps.iter().map(|t| t.done).collect()
    }

    pub fn costs(&self, k: usize) -> Vec<f64> {
        self.steps.iter().map(|t| t.costs[k]).collect()
    }

    pub fn cost_values(&self, k: usize) -> Vec<f64> {
        self.steps.iter().map(|t| t.cost_value[k]).collect()
    }

    pub fn mean_costs(&self) -> [f64; NUM_COSTS] {
        let n = self.steps.len().max(1) as f64;
        let mut out = [0.0; NUM_COSTS];
        for t in &self.steps {
            for k in 0..NUM_COSTS {
                out[k] += t.costs[k] / n;
            }
        }
        out
    }
}
