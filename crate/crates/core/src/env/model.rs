//! Service-rate, delay and aggregation formulas.
//!
//! The end-to-end rate is the minimum over the three domains (a user is only
//! as fast as its slowest domain). Delay sums one queueing-style term per
//! domain, `tau / (max(mu_R - lambda, 0) + eps)`, so a saturated domain
//! contributes `tau / eps`.

use std::collections::HashMap;

use super::types::{AllocationDecision, Domain, DomainVec, SliceId, UserSession};
use crate::error::{Error, Result};

/// Effective end-to-end service rate in bits/s.
pub fn bottleneck_rate(
    wireless_rate: f64,
    bandwidth_alloc: f64,
    compute_alloc: f64,
    compute_demand: f64,
) -> Result<f64> {
    if !(compute_demand > 0.0) {
        return Err(Error::InvalidDemand(compute_demand));
    }
    Ok(wireless_rate
        .min(bandwidth_alloc)
        .min(compute_alloc / compute_demand)
        .max(0.0))
}

/// Delay of one packet of `packet_size` bits against per-domain service rates.
pub fn queueing_delay(packet_size: f64, arrival_rate: f64, rates: &DomainVec, eps: f64) -> f64 {
    rates
        .iter()
        .map(|mu| packet_size / ((mu - arrival_rate).max(0.0) + eps))
        .sum()
}

/// End-to-end delay in seconds for `user`, whose `arrival_rate` is taken as the
/// (possibly backlog-inflated) offered rate.
pub fn end_to_end_delay(user: &UserSession, rates: &HashMap<Domain, f64>, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::InvalidInput(format!("stabilizer must be positive, got {eps}")));
    }
    let mut dense = [0.0; 3];
    for d in Domain::ALL {
        dense[d.index()] = *rates
            .get(&d)
            .ok_or_else(|| Error::InvalidInput(format!("missing {} service rate", d.name())))?;
    }
    Ok(queueing_delay(user.packet_size, user.arrival_rate, &dense, eps))
}

/// Sum of a slice's user allocations in one domain.
pub fn aggregate_slice_usage(
    decision: &AllocationDecision,
    users: &[UserSession],
    slice: SliceId,
    domain: Domain,
) -> Result<f64> {
    if slice.0 >= decision.num_slices() {
        return Err(Error::NotFound(format!("{slice}")));
    }
    Ok(users
        .iter()
        .filter(|u| u.slice_id == slice)
        .filter_map(|u| decision.user_allocations.get(u.user_id.0))
        .map(|a| a[domain.index()])
        .sum())
}
