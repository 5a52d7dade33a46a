//! Step dynamics, action projection and the episodic environment wrapper.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::model::{bottleneck_rate, queueing_delay};
use super::scenario::{Census, Scenario};
use super::types::{
    AllocationDecision, Domain, DomainVec, EnvState, QoSRecord, SliceSpec, UserSession, SLICE_STAT_DIM,
};
use crate::error::Result;
use crate::traffic::TrafficTrace;

/// Number of per-step constraint costs.
pub const NUM_COSTS: usize = 3;
pub const COST_NAMES: [&str; NUM_COSTS] = ["delay_violation", "reliability_violation", "isolation_overdraw"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub dt: f64,
    pub epsilon: f64,
}

/// Everything measured during one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub qos: Vec<QoSRecord>,
    /// Delay-violation rate, reliability-violation rate, isolation-overdraw rate.
    pub costs: [f64; NUM_COSTS],
    pub served_bits: f64,
    pub offered_bits: f64,
    /// The decision after projection onto the feasible set.
    pub decision: AllocationDecision,
    /// Per slice: fraction of its capacity-feasible request cut because of other slices.
    pub overdraw: Vec<f64>,
    /// Per slice: served bits over offered bits, in `[0, 1]`.
    pub slice_throughput: Vec<f64>,
    /// Resources actually consumed to carry the served bits, per domain.
    pub used: DomainVec,
}

/// Resources a user needs in each domain so that its delay stays within `delay_bound`
/// and its rate reaches `min_throughput`, given an arrival estimate and backlog.
///
/// The rate covers the backlog, the estimated arrivals plus three standard
/// deviations of packet-count noise, and the per-domain service headroom that
/// keeps the summed queueing delay at the bound.
pub fn qos_demand(user: &UserSession, spec: &SliceSpec, arrival_estimate: f64, backlog: f64, dt: f64) -> DomainVec {
    let headroom = 3.0 * user.packet_size / spec.delay_bound;
    let noise = 3.0 * (arrival_estimate.max(0.0) * user.packet_size / dt).sqrt();
    let rate = (arrival_estimate + noise + backlog / dt + headroom).max(spec.min_throughput);
    user.resources_for_rate(rate)
}

fn clean(x: f64) -> f64 {
    if x.is_finite() && x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Projects a raw decision onto the feasible set.
///
/// Non-admitted slices lose everything; per domain, admitted budgets are
/// rescaled proportionally to fit capacity; user allocations are rescaled to
/// fit their slice budget. Returns the projected decision and the per-slice
/// overdraw fractions.
pub fn project(
    raw: &AllocationDecision,
    pool: &crate::env::ResourcePool,
    users: &[UserSession],
) -> (AllocationDecision, Vec<f64>) {
    let s = raw.admissions.len();
    let mut out = AllocationDecision::empty(s, users.len());
    out.admissions.clone_from(&raw.admissions);
    let mut overdraw = vec![0.0; s];
    for d in Domain::ALL {
        let k = d.index();
        let cap = pool.capacity(d);
        let requested: Vec<f64> = (0..s)
            .map(|i| {
                if raw.admissions[i] {
                    raw.slice_budgets.get(i).map_or(0.0, |b| clean(b[k]))
                } else {
                    0.0
                }
            })
            .collect();
        let total: f64 = requested.iter().sum();
        let scale = if total > cap { cap / total } else { 1.0 };
        for i in 0..s {
            let granted = requested[i] * scale;
            out.slice_budgets[i][k] = granted;
            if requested[i] > 0.0 {
                let own_feasible = requested[i].min(cap);
                overdraw[i] += ((own_feasible - granted) / requested[i]).max(0.0) / 3.0;
            }
        }
    }
    for i in 0..s {
        if !raw.admissions[i] {
            continue;
        }
        for d in Domain::ALL {
            let k = d.index();
            let members: Vec<usize> = users
                .iter()
                .filter(|u| u.slice_id.0 == i)
                .map(|u| u.user_id.0)
                .collect();
            let sum: f64 = members
                .iter()
                .map(|&u| raw.user_allocations.get(u).map_or(0.0, |a| clean(a[k])))
                .sum();
            let budget = out.slice_budgets[i][k];
            let scale = if sum > budget { budget / sum } else { 1.0 };
            for u in members {
                let a = raw.user_allocations.get(u).map_or(0.0, |a| clean(a[k]));
                out.user_allocations[u][k] = a * scale;
            }
        }
    }
    (out, overdraw)
}

/// Advances the state by one control step under `decision`.
///
/// Each user's `arrival_rate` in `state` is the rate realised during this step.
/// Infeasible decisions are projected first, never rejected.
pub fn step(
    state: &EnvState,
    specs: &[SliceSpec],
    decision: &AllocationDecision,
    cfg: StepConfig,
) -> (EnvState, StepOutcome) {
    let users = &state.active_users;
    let (decision, overdraw) = project(decision, &state.pool, users);
    let dt = cfg.dt;
    let n_slices = specs.len();

    let mut qos = Vec::with_capacity(users.len());
    let mut backlog_next = Vec::with_capacity(users.len());
    let mut served_total = 0.0;
    let mut offered_total = 0.0;
    let mut used = [0.0; 3];
    let mut slice_served = vec![0.0; n_slices];
    let mut slice_offered = vec![0.0; n_slices];
    let mut slice_used = vec![[0.0; 3]; n_slices];

    for (u, user) in users.iter().enumerate() {
        let spec = &specs[user.slice_id.0];
        let alloc = decision.user_allocations[u];
        let rates = user.domain_rates(&alloc);
        let rate = bottleneck_rate(rates[0], alloc[1], alloc[2], user.compute_demand)
            .expect("compute demand validated at scenario load");
        let backlog = state.queue_backlog[u];
        let effective_arrival = user.arrival_rate + backlog / dt;
        let delay = queueing_delay(user.packet_size, effective_arrival, &rates, cfg.epsilon);

        let offered = backlog + user.arrival_rate * dt;
        let served = (rate * dt).min(offered);
        backlog_next.push((offered - served).max(0.0));
        let served_fraction = if offered > 0.0 { served / offered } else { 1.0 };
        let in_time = if delay > 0.0 {
            (spec.delay_bound / delay).min(1.0)
        } else {
            1.0
        };
        let reliability = (served_fraction * in_time).clamp(0.0, 1.0);

        let consumed = user.resources_for_rate(served / dt);
        for k in 0..3 {
            let c = consumed[k].min(alloc[k]);
            used[k] += c;
            slice_used[user.slice_id.0][k] += c;
        }
        served_total += served;
        offered_total += offered;
        slice_served[user.slice_id.0] += served;
        slice_offered[user.slice_id.0] += offered;

        qos.push(QoSRecord {
            user_id: user.user_id,
            achieved_rate: rate,
            delay,
            reliability,
            delay_violation: delay > spec.delay_bound,
            throughput_violation: rate < spec.min_throughput,
            reliability_violation: reliability < spec.reliability_target,
        });
    }

    let n = users.len().max(1) as f64;
    let any_admitted = decision.admissions.iter().any(|a| *a);
    let costs = if any_admitted {
        [
            qos.iter().filter(|q| q.delay_violation).count() as f64 / n,
            qos.iter().filter(|q| q.reliability_violation).count() as f64 / n,
            overdraw.iter().sum::<f64>() / n_slices.max(1) as f64,
        ]
    } else {
        [1.0; NUM_COSTS]
    };

    let slice_throughput: Vec<f64> = slice_served
        .iter()
        .zip(&slice_offered)
        .map(|(s, o)| if *o > 0.0 { (s / o).clamp(0.0, 1.0) } else { 1.0 })
        .collect();

    let caps = state.pool.capacities();
    let mut stats = vec![[0.0; SLICE_STAT_DIM]; n_slices];
    for (i, row) in stats.iter_mut().enumerate() {
        let members: Vec<usize> = users
            .iter()
            .filter(|u| u.slice_id.0 == i)
            .map(|u| u.user_id.0)
            .collect();
        let m = members.len().max(1) as f64;
        let arrivals: f64 = members.iter().map(|&u| users[u].arrival_rate).sum();
        let backlog: f64 = members.iter().map(|&u| backlog_next[u]).sum();
        row[0] = arrivals / caps[1];
        row[1] = (backlog / (caps[1] * dt)).min(10.0);
        row[2] = members.iter().filter(|&&u| qos[u].delay_violation).count() as f64 / m;
        row[3] = members.iter().filter(|&&u| qos[u].throughput_violation).count() as f64 / m;
        row[4] = members.iter().filter(|&&u| qos[u].reliability_violation).count() as f64 / m;
        for k in 0..3 {
            row[5 + k] = slice_used[i][k] / caps[k];
        }
    }

    let mut next = state.clone();
    next.step_index += 1;
    next.queue_backlog = backlog_next;
    next.measured_arrival = users.iter().map(|u| u.arrival_rate).collect();
    next.last_qos = qos.clone();
    next.push_history(stats);

    let outcome = StepOutcome {
        qos,
        costs,
        served_bits: served_total,
        offered_bits: offered_total,
        decision,
        overdraw,
        slice_throughput,
        used,
    };
    (next, outcome)
}

/// Episodic environment: a census, a traffic trace and stochastic arrivals.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SlicingEnv {
    census: Census,
    settings: super::scenario::EnvSettings,
    pool: crate::env::ResourcePool,
    trace: TrafficTrace,
    state: EnvState,
    rng: ChaCha8Rng,
}

impl SlicingEnv {
    pub fn new(scenario: &Scenario, trace: TrafficTrace, seed: u64) -> Self {
        let census = scenario.census();
        let state = EnvState::new(scenario.pool, census.users.clone(), scenario.env.history);
        let mut env = Self {
            census,
            settings: scenario.env.clone(),
            pool: scenario.pool,
            trace,
            state,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        env.reset_with(None);
        env
    }

    /// Starts a new episode, optionally on a new traffic trace.
    pub fn reset_with(&mut self, trace: Option<TrafficTrace>) {
        if let Some(t) = trace {
            self.trace = t;
        }
        let mut state = EnvState::new(self.pool, self.census.users.clone(), self.settings.history);
        let expected = self.expected_arrivals(0);
        state.measured_arrival = expected;
        self.state = state;
        self.draw_arrivals();
    }

    fn expected_arrivals(&self, step: usize) -> Vec<f64> {
        self.census
            .users
            .iter()
            .map(|u| u.arrival_rate * self.trace.multiplier(step, u.slice_id.0))
            .collect()
    }

    fn draw_arrivals(&mut self) {
        let expected = self.expected_arrivals(self.state.step_index);
        let dt = self.settings.dt;
        for (user, mean) in self.state.active_users.iter_mut().zip(expected) {
            user.arrival_rate = if self.settings.poisson_arrivals && mean > 0.0 {
                let packets = mean * dt / user.packet_size;
                let count = Poisson::new(packets).map(|p| p.sample(&mut self.rng)).unwrap_or(0.0);
                count * user.packet_size / dt
            } else {
                mean
            };
        }
    }

    pub fn step(&mut self, decision: &AllocationDecision) -> StepOutcome {
        let cfg = StepConfig {
            dt: self.settings.dt,
            epsilon: self.settings.epsilon,
        };
        let (next, outcome) = step(&self.state, &self.census.specs, decision, cfg);
        self.state = next;
        self.draw_arrivals();
        outcome
    }

    pub fn done(&self) -> bool {
        self.state.step_index >= self.settings.horizon
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn census(&self) -> &Census {
        &self.census
    }

    pub fn specs(&self) -> &[SliceSpec] {
        &self.census.specs
    }

    pub fn settings(&self) -> &super::scenario::EnvSettings {
        &self.settings
    }

    pub fn pool(&self) -> &crate::env::ResourcePool {
        &self.pool
    }

    pub fn trace(&self) -> &TrafficTrace {
        &self.trace
    }

    /// Replaces the pool (used for degenerate-capacity experiments).
    pub fn set_pool(&mut self, pool: crate::env::ResourcePool) -> Result<()> {
        self.pool = pool;
        self.state.pool = pool;
        Ok(())
    }

    /// Per-user QoS demand from what a controller can observe.
    pub fn observed_demands(&self) -> Vec<DomainVec> {
        let s = &self.state;
        s.active_users
            .iter()
            .enumerate()
            .map(|(u, user)| {
                qos_demand(
                    user,
                    &self.census.specs[user.slice_id.0],
                    s.measured_arrival[u],
                    s.queue_backlog[u],
                    self.settings.dt,
                )
            })
            .collect()
    }
}
