//! Domain types shared by the simulator, the policies and the baselines.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a slice within a scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SliceId(pub usize);

/// Index of a user session within a scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UserId(pub usize);

/// Index of a grid cell within a scenario.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId(pub usize);

impl fmt::Display for SliceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "slice {}", self.0)
    }
}

/// The three jointly allocated resource domains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Radio,
    Bandwidth,
    Compute,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Radio, Domain::Bandwidth, Domain::Compute];

    pub fn index(self) -> usize {
        match self {
            Domain::Radio => 0,
            Domain::Bandwidth => 1,
            Domain::Compute => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Domain::Radio => "radio",
            Domain::Bandwidth => "bandwidth",
            Domain::Compute => "compute",
        }
    }
}

/// One amount per resource domain, indexed by [`Domain::index`].
pub type DomainVec = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ServiceClass {
    #[serde(rename = "eMBB", alias = "embb")]
    Embb,
    #[serde(rename = "URLLC", alias = "urllc")]
    Urllc,
    #[serde(rename = "mMTC", alias = "mmtc")]
    Mmtc,
}

/// A slice's service class and QoS targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub slice_id: SliceId,
    pub service_class: ServiceClass,
    /// Seconds.
    pub delay_bound: f64,
    /// Bits per second.
    pub min_throughput: f64,
    pub reliability_target: f64,
    pub priority: f64,
}

impl SliceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.delay_bound > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "{}: delay_bound must be > 0",
                self.slice_id
            )));
        }
        if !(self.min_throughput >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "{}: min_throughput must be >= 0",
                self.slice_id
            )));
        }
        if !(0.0..=1.0).contains(&self.reliability_target) {
            return Err(Error::InvalidConfig(format!(
                "{}: reliability_target must lie in [0, 1]",
                self.slice_id
            )));
        }
        if !(self.priority >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "{}: priority must be >= 0",
                self.slice_id
            )));
        }
        Ok(())
    }
}

/// One active user session.
///
/// `wireless_rate` is the rate the user achieves per radio resource unit
/// (bits/s per unit); the radio-domain service rate is
/// `wireless_rate * radio_allocation`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserSession {
    pub user_id: UserId,
    pub slice_id: SliceId,
    /// Bits per second in effect for the upcoming step.
    pub arrival_rate: f64,
    /// Bits.
    pub packet_size: f64,
    /// Cycles per bit.
    pub compute_demand: f64,
    pub wireless_rate: f64,
    pub cell_id: CellId,
}

impl UserSession {
    pub fn validate(&self) -> Result<()> {
        let ok = self.arrival_rate >= 0.0
            && self.packet_size > 0.0
            && self.compute_demand > 0.0
            && self.wireless_rate >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "user {}: need arrival_rate >= 0, packet_size > 0, compute_demand > 0, wireless_rate >= 0",
                self.user_id.0
            )))
        }
    }

    /// Radio, bandwidth and compute service rates (bits/s) delivered by an allocation.
    pub fn domain_rates(&self, alloc: &DomainVec) -> DomainVec {
        [self.wireless_rate * alloc[0], alloc[1], alloc[2] / self.compute_demand]
    }

    /// Resource amounts needed in each domain to carry `rate` bits/s.
    pub fn resources_for_rate(&self, rate: f64) -> DomainVec {
        let radio = if self.wireless_rate > 0.0 {
            rate / self.wireless_rate
        } else {
            f64::INFINITY
        };
        [radio, rate, rate * self.compute_demand]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourcePool {
    /// Resource units.
    pub radio_capacity: f64,
    /// Bits per second.
    pub bandwidth_capacity: f64,
    /// Cycles per second.
    pub compute_capacity: f64,
}

impl ResourcePool {
    pub fn capacity(&self, domain: Domain) -> f64 {
        self.capacities()[domain.index()]
    }

    pub fn capacities(&self) -> DomainVec {
        [self.radio_capacity, self.bandwidth_capacity, self.compute_capacity]
    }

    pub fn validate(&self) -> Result<()> {
        if self.capacities().iter().all(|c| *c > 0.0 && c.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "all pool capacities must be positive and finite".into(),
            ))
        }
    }
}

/// The full hierarchical action, densely indexed by slice and user.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AllocationDecision {
    pub admissions: Vec<bool>,
    pub slice_budgets: Vec<DomainVec>,
    pub user_allocations: Vec<DomainVec>,
}

impl AllocationDecision {
    pub fn empty(num_slices: usize, num_users: usize) -> Self {
        Self {
            admissions: vec![false; num_slices],
            slice_budgets: vec![[0.0; 3]; num_slices],
            user_allocations: vec![[0.0; 3]; num_users],
        }
    }

    pub fn num_slices(&self) -> usize {
        self.admissions.len()
    }

    /// Checks every structural invariant with a relative tolerance.
    pub fn check_feasible(&self, pool: &ResourcePool, users: &[UserSession], tol: f64) -> Result<()> {
        let s = self.admissions.len();
        if self.slice_budgets.len() != s || self.user_allocations.len() != users.len() {
            return Err(Error::InvalidAction("decision dimensions do not match scenario".into()));
        }
        for d in Domain::ALL {
            let cap = pool.capacity(d);
            let used: f64 = (0..s)
                .filter(|&i| self.admissions[i])
                .map(|i| self.slice_budgets[i][d.index()])
                .sum();
            if used > cap * (1.0 + tol) {
                return Err(Error::InvalidAction(format!(
                    "{} budgets {used} exceed capacity {cap}",
                    d.name()
                )));
            }
        }
        for (i, admitted) in self.admissions.iter().enumerate() {
            for d in Domain::ALL {
                let budget = self.slice_budgets[i][d.index()];
                if budget < 0.0 || !budget.is_finite() {
                    return Err(Error::InvalidAction(format!("negative budget on slice {i}")));
                }
                if !admitted && budget != 0.0 {
                    return Err(Error::InvalidAction(format!("non-admitted slice {i} holds a budget")));
                }
                let sum: f64 = users
                    .iter()
                    .filter(|u| u.slice_id.0 == i)
                    .map(|u| self.user_allocations[u.user_id.0][d.index()])
                    .sum();
                if sum > budget * (1.0 + tol) + 1e-12 {
                    return Err(Error::InvalidAction(format!(
                        "slice {i} {} user allocations {sum} exceed budget {budget}",
                        d.name()
                    )));
                }
            }
        }
        if self
            .user_allocations
            .iter()
            .flatten()
            .any(|a| *a < 0.0 || !a.is_finite())
        {
            return Err(Error::InvalidAction("negative user allocation".into()));
        }
        Ok(())
    }
}

/// Measured QoS of one user for one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QoSRecord {
    pub user_id: UserId,
    /// Effective end-to-end service rate, bits/s.
    pub achieved_rate: f64,
    /// Seconds.
    pub delay: f64,
    pub reliability: f64,
    pub delay_violation: bool,
    pub throughput_violation: bool,
    pub reliability_violation: bool,
}

impl QoSRecord {
    pub fn satisfied(&self) -> bool {
        !(self.delay_violation || self.throughput_violation || self.reliability_violation)
    }
}

/// Per-slice summary fed to the temporal encoder.
pub const SLICE_STAT_DIM: usize = 8;

/// Full simulator state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub step_index: usize,
    pub active_users: Vec<UserSession>,
    /// Bits per user.
    pub queue_backlog: Vec<f64>,
    pub pool: ResourcePool,
    /// Arrival rate realised on the previous step, per user (what a controller can observe).
    pub measured_arrival: Vec<f64>,
    /// Most recent QoS per user; empty before the first step.
    pub last_qos: Vec<QoSRecord>,
    /// Last `H` per-slice observation vectors, oldest first.
    pub history_window: VecDeque<Vec<[f64; SLICE_STAT_DIM]>>,
    pub history_len: usize,
}

impl EnvState {
    pub fn new(pool: ResourcePool, users: Vec<UserSession>, history_len: usize) -> Self {
        let n = users.len();
        let measured = users.iter().map(|u| u.arrival_rate).collect();
        Self {
            step_index: 0,
            active_users: users,
            queue_backlog: vec![0.0; n],
            pool,
            measured_arrival: measured,
            last_qos: Vec::new(),
            history_window: VecDeque::with_capacity(history_len),
            history_len,
        }
    }

    pub fn push_history(&mut self, row: Vec<[f64; SLICE_STAT_DIM]>) {
        if self.history_len == 0 {
            return;
        }
        if self.history_window.len() == self.history_len {
            self.history_window.pop_front();
        }
        self.history_window.push_back(row);
    }
}
