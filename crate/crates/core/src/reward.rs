//! Multi-objective reward, potential-based shaping and Lagrangian constraint pricing.
//!
//! Five objectives are scored per step: delay, throughput, reliability,
//! fairness and isolation. Each has a utility `u` in `[0, 1]` and a violation
//! score `v = 1 - u`. Weights follow the current bottleneck,
//! `w = softmax(kappa * v)`, so the worst objective dominates the reward.
//!
//! Notation: `beta` is the discount factor everywhere and `kappa` the weight
//! sensitivity. Constraint `k` has cost `c_k`, bound `C_k` and multiplier
//! `lambda_k`.

use serde::{Deserialize, Serialize};

use crate::env::{EnvState, QoSRecord, SliceSpec, StepOutcome, UserSession, NUM_COSTS};
use crate::error::{Error, Result};

pub const NUM_OBJECTIVES: usize = 5;
pub const OBJECTIVE_NAMES: [&str; NUM_OBJECTIVES] = ["delay", "throughput", "reliability", "fairness", "isolation"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub utility: [f64; NUM_OBJECTIVES],
    pub violation: [f64; NUM_OBJECTIVES],
}

impl ObjectiveVector {
    pub fn from_utilities(u: [f64; NUM_OBJECTIVES]) -> Self {
        let utility = u.map(|x| x.clamp(0.0, 1.0));
        Self {
            utility,
            violation: utility.map(|x| 1.0 - x),
        }
    }
}

/// `(sum x)^2 / (n * sum x^2)`; zero for an empty or all-zero input.
pub fn jain_index(xs: &[f64]) -> f64 {
    let sum: f64 = xs.iter().sum();
    let sq: f64 = xs.iter().map(|x| x * x).sum();
    if xs.is_empty() || sq == 0.0 {
        0.0
    } else {
        sum * sum / (xs.len() as f64 * sq)
    }
}

fn ratio_utility(achieved: f64, target: f64) -> f64 {
    if target <= 0.0 {
        1.0
    } else {
        (achieved / target).clamp(0.0, 1.0)
    }
}

/// Scores one step's records.
///
/// `slice_throughput` holds each slice's normalised throughput and `overdraw`
/// each slice's budget fraction lost to other slices during projection.
pub fn objective_vector(
    records: &[QoSRecord],
    users: &[UserSession],
    specs: &[SliceSpec],
    slice_throughput: &[f64],
    overdraw: &[f64],
) -> Result<ObjectiveVector> {
    if records.is_empty() {
        return Err(Error::InvalidInput(
            "objective_vector needs at least one QoS record".into(),
        ));
    }
    let n = records.len() as f64;
    let spec_of = |r: &QoSRecord| -> Result<&SliceSpec> {
        let user = users
            .get(r.user_id.0)
            .ok_or_else(|| Error::InvalidInput(format!("record for unknown user {}", r.user_id.0)))?;
        specs
            .get(user.slice_id.0)
            .ok_or_else(|| Error::InvalidInput(format!("user {} has unknown slice", r.user_id.0)))
    };
    let mut delay = 0.0;
    let mut thr = 0.0;
    let mut rel = 0.0;
    for r in records {
        let spec = spec_of(r)?;
        delay += if r.delay > 0.0 {
            (spec.delay_bound / r.delay).clamp(0.0, 1.0)
        } else {
            1.0
        };
        thr += ratio_utility(r.achieved_rate, spec.min_throughput);
        rel += r.reliability.clamp(0.0, 1.0);
    }
    let fairness = jain_index(slice_throughput);
    let isolation = if overdraw.is_empty() {
        1.0
    } else {
        1.0 - overdraw.iter().sum::<f64>() / overdraw.len() as f64
    };
    Ok(ObjectiveVector::from_utilities([
        delay / n,
        thr / n,
        rel / n,
        fairness,
        isolation,
    ]))
}

/// Softmax of `kappa * v`: the most violated objective gets the largest weight.
pub fn adaptive_weights(v: &[f64; NUM_OBJECTIVES], kappa: f64) -> [f64; NUM_OBJECTIVES] {
    let scaled = v.map(|x| kappa * x);
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e = scaled.map(|x| (x - max).exp());
    let z: f64 = e.iter().sum();
    e.map(|x| x / z)
}

pub fn base_reward(u: &[f64; NUM_OBJECTIVES], w: &[f64; NUM_OBJECTIVES]) -> f64 {
    u.iter().zip(w).map(|(a, b)| a * b).sum()
}

/// Adds the potential-based term `beta * phi(s') - phi(s)`.
pub fn shaped_reward(r: f64, phi_s: f64, phi_next: f64, beta: f64) -> f64 {
    r + beta * phi_next - phi_s
}

/// Prices constraint costs into the reward: `r - sum_k lambda_k c_k`.
pub fn penalized_reward(r_shaped: f64, costs: &[f64; NUM_COSTS], state: &ConstraintState) -> f64 {
    r_shaped - state.multipliers.iter().zip(costs).map(|(l, c)| l * c).sum::<f64>()
}

/// Lagrange multipliers and bounds for the per-step constraint costs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintState {
    pub multipliers: [f64; NUM_COSTS],
    pub bounds: [f64; NUM_COSTS],
    /// Last batch-mean cost per constraint.
    pub running_cost: [f64; NUM_COSTS],
    /// Dual step size.
    pub step_size: f64,
}

/// Default bounds for delay-violation, reliability-violation and isolation-overdraw rates.
pub const DEFAULT_BOUNDS: [f64; NUM_COSTS] = [0.05, 0.05, 0.02];

impl ConstraintState {
    pub fn new(bounds: [f64; NUM_COSTS], step_size: f64) -> Self {
        Self {
            multipliers: [0.0; NUM_COSTS],
            bounds,
            running_cost: [0.0; NUM_COSTS],
            step_size,
        }
    }

    /// Projected dual ascent: `lambda_k <- max(0, lambda_k + eta * (J_k - C_k))`.
    pub fn dual_update(&self, batch_costs: &[f64; NUM_COSTS]) -> Self {
        let mut next = self.clone();
        for k in 0..NUM_COSTS {
            next.multipliers[k] = (self.multipliers[k] + self.step_size * (batch_costs[k] - self.bounds[k])).max(0.0);
        }
        next.running_cost = *batch_costs;
        next
    }
}

/// Mean QoS margin across slices, computed from the state's latest QoS records.
///
/// A user's margin averages `clip(target / achieved)`-style ratios over its
/// delay, throughput and reliability targets. Zero before the first step.
pub fn shaping_potential(state: &EnvState, specs: &[SliceSpec]) -> f64 {
    if state.last_qos.is_empty() {
        return 0.0;
    }
    let mut sums = vec![0.0; specs.len()];
    let mut counts = vec![0usize; specs.len()];
    for r in &state.last_qos {
        let s = state.active_users[r.user_id.0].slice_id.0;
        let spec = &specs[s];
        let delay = if r.delay > 0.0 {
            (spec.delay_bound / r.delay).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let thr = ratio_utility(r.achieved_rate, spec.min_throughput);
        let rel = ratio_utility(r.reliability, spec.reliability_target);
        sums[s] += (delay + thr + rel) / 3.0;
        counts[s] += 1;
    }
    let margins: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .filter(|(_, c)| **c > 0)
        .map(|(s, c)| s / *c as f64)
        .collect();
    if margins.is_empty() {
        0.0
    } else {
        (margins.iter().sum::<f64>() / margins.len() as f64).clamp(0.0, 1.0)
    }
}

/// Which reward components are active.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    /// Weight sensitivity `kappa`; ignored when `adaptive_weights` is false.
    pub sensitivity: f64,
    pub adaptive_weights: bool,
    pub shaping: bool,
    pub lagrangian: bool,
    pub bounds: [f64; NUM_COSTS],
}

impl RewardConfig {
    /// Adaptive weights, shaping and Lagrangian penalties.
    pub fn constrained() -> Self {
        Self {
            sensitivity: 2.0,
            adaptive_weights: true,
            shaping: true,
            lagrangian: true,
            bounds: DEFAULT_BOUNDS,
        }
    }

    /// Fixed equal weights, no shaping, no penalties.
    pub fn plain() -> Self {
        Self {
            sensitivity: 0.0,
            adaptive_weights: false,
            shaping: false,
            lagrangian: false,
            bounds: DEFAULT_BOUNDS,
        }
    }
}

/// Every reward quantity logged for one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub objectives: ObjectiveVector,
    pub weights: [f64; NUM_OBJECTIVES],
    pub base: f64,
    pub shaped: f64,
    pub penalized: f64,
    pub potential: f64,
}

/// Scores a step outcome under `cfg`.
#[allow(clippy::too_many_arguments)]
pub fn score_step(
    cfg: &RewardConfig,
    outcome: &StepOutcome,
    users: &[UserSession],
    specs: &[SliceSpec],
    phi_s: f64,
    phi_next: f64,
    beta: f64,
    duals: &ConstraintState,
) -> Result<RewardBreakdown> {
    let objectives = objective_vector(&outcome.qos, users, specs, &outcome.slice_throughput, &outcome.overdraw)?;
    let weights = if cfg.adaptive_weights {
        adaptive_weights(&objectives.violation, cfg.sensitivity)
    } else {
        [1.0 / NUM_OBJECTIVES as f64; NUM_OBJECTIVES]
    };
    let base = base_reward(&objectives.utility, &weights);
    let shaped = if cfg.shaping {
        shaped_reward(base, phi_s, phi_next, beta)
    } else {
        base
    };
    let penalized = if cfg.lagrangian {
        penalized_reward(shaped, &outcome.costs, duals)
    } else {
        shaped
    };
    Ok(RewardBreakdown {
        objectives,
        weights,
        base,
        shaped,
        penalized,
        potential: phi_next,
    })
}
