//! Episode rollouts for evaluation.

use serde::{Deserialize, Serialize};

use crate::baselines::Controller;
use crate::env::{DomainVec, Scenario, SlicingEnv, NUM_COSTS};
use crate::error::{Error, Result};
use crate::traffic::TrafficTrace;

/// Everything recorded while evaluating one episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub satisfaction: f64,
    /// Satisfaction restricted to each slice's users.
    pub slice_satisfaction: Vec<f64>,
    /// Served bits per second, per step.
    pub throughput: Vec<f64>,
    /// Resources consumed per step.
    pub used: Vec<DomainVec>,
    pub mean_costs: [f64; NUM_COSTS],
}

/// Runs `controller` until the environment's horizon.
pub fn run_episode(controller: &mut dyn Controller, env: &mut SlicingEnv) -> Result<EpisodeRecord> {
    controller.reset();
    let s = env.census().num_slices();
    let user_slice: Vec<usize> = env.census().users.iter().map(|u| u.slice_id.0).collect();
    let dt = env.settings().dt;
    let mut ok = 0usize;
    let mut total = 0usize;
    let mut slice_ok = vec![0usize; s];
    let mut slice_total = vec![0usize; s];
    let mut throughput = Vec::new();
    let mut used = Vec::new();
    let mut costs = [0.0; NUM_COSTS];
    while !env.done() {
        let decision = controller.decide(env);
        let out = env.step(&decision);
        for (q, &sl) in out.qos.iter().zip(&user_slice) {
            let sat = q.satisfied() as usize;
            ok += sat;
            slice_ok[sl] += sat;
            total += 1;
            slice_total[sl] += 1;
        }
        throughput.push(out.served_bits / dt);
        used.push(out.used);
        for k in 0..NUM_COSTS {
            costs[k] += out.costs[k];
        }
    }
    if total == 0 {
        return Err(Error::InvalidInput("episode produced no QoS records".into()));
    }
    let steps = throughput.len() as f64;
    Ok(EpisodeRecord {
        satisfaction: ok as f64 / total as f64,
        slice_satisfaction: slice_ok
            .iter()
            .zip(&slice_total)
            .map(|(a, b)| if *b > 0 { *a as f64 / *b as f64 } else { 1.0 })
            .collect(),
        throughput,
        used,
        mean_costs: costs.map(|c| c / steps),
    })
}

/// Evaluates `controller` for one episode of `trace` with arrival seed `seed`.
pub fn evaluate(
    controller: &mut dyn Controller,
    scenario: &Scenario,
    trace: TrafficTrace,
    seed: u64,
) -> Result<EpisodeRecord> {
    let mut env = SlicingEnv::new(scenario, trace, seed);
    run_episode(controller, &mut env)
}
