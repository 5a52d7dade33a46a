//! Discrete-time slicing environment.
//!
//! Radio, bandwidth and compute are allocated jointly: the upper level grants
//! each admitted slice a budget per domain and the lower level splits that
//! budget among the slice's users. A user's service rate is the bottleneck
//! of its three domain rates; its delay sums a queueing term per domain.

mod model;
mod scenario;
mod sim;
mod types;

pub use model::{aggregate_slice_usage, bottleneck_rate, end_to_end_delay, queueing_delay};
pub use scenario::{Census, EnvSettings, Scenario, SliceTemplate, Topology};
pub use sim::{project, qos_demand, step, SlicingEnv, StepConfig, StepOutcome, COST_NAMES, NUM_COSTS};
pub use types::{
    AllocationDecision, CellId, Domain, DomainVec, EnvState, QoSRecord, ResourcePool, ServiceClass, SliceId, SliceSpec,
    UserId, UserSession, SLICE_STAT_DIM,
};
