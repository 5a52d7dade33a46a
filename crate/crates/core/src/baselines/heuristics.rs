//! Fixed-share and priority-greedy allocators.

use std::cmp::Ordering;

use crate::env::{qos_demand, AllocationDecision, DomainVec, EnvState, ResourcePool, SliceSpec, UserSession};
use crate::error::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-6;

/// Shares proportional to slice priority; equal shares if every priority is zero.
pub fn priority_shares(specs: &[SliceSpec]) -> Vec<f64> {
    let total: f64 = specs.iter().map(|s| s.priority).sum();
    if total > 0.0 {
        specs.iter().map(|s| s.priority / total).collect()
    } else {
        vec![1.0 / specs.len().max(1) as f64; specs.len()]
    }
}

/// Admits every slice, gives slice `i` the fraction `shares[i]` of every domain
/// and splits each slice budget equally among its users.
pub fn static_allocate(shares: &[f64], pool: &ResourcePool, users: &[UserSession]) -> Result<AllocationDecision> {
    let sum: f64 = shares.iter().sum();
    if shares.iter().any(|s| !(*s >= 0.0)) || (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidConfig(format!(
            "static shares must be non-negative and sum to 1, got {shares:?}"
        )));
    }
    let s = shares.len();
    let mut d = AllocationDecision::empty(s, users.len());
    d.admissions = vec![true; s];
    let caps = pool.capacities();
    let mut counts = vec![0usize; s];
    for u in users {
        if u.slice_id.0 >= s {
            return Err(Error::InvalidConfig(format!(
                "user {} belongs to slice {} but only {s} shares were given",
                u.user_id.0, u.slice_id.0
            )));
        }
        counts[u.slice_id.0] += 1;
    }
    for i in 0..s {
        for k in 0..3 {
            d.slice_budgets[i][k] = shares[i] * caps[k];
        }
    }
    for u in users {
        let i = u.slice_id.0;
        for k in 0..3 {
            d.user_allocations[u.user_id.0][k] = d.slice_budgets[i][k] / counts[i] as f64;
        }
    }
    Ok(d)
}

/// Serves users in order of slice priority (highest first), then largest
/// demand, then lower user id, giving each its full demand in every domain
/// until that domain runs out. Every slice is admitted; leftovers stay idle.
///
/// `demands[u]` is user `u`'s per-domain requirement.
pub fn greedy_allocate(
    pool: &ResourcePool,
    users: &[UserSession],
    specs: &[SliceSpec],
    demands: &[DomainVec],
) -> AllocationDecision {
    let caps = pool.capacities();
    let size = |u: usize| -> f64 { (0..3).map(|k| demands[u][k] / caps[k]).sum() };
    let mut order: Vec<usize> = (0..users.len()).collect();
    order.sort_by(|&a, &b| {
        let pa = specs[users[a].slice_id.0].priority;
        let pb = specs[users[b].slice_id.0].priority;
        pb.partial_cmp(&pa)
            .unwrap_or(Ordering::Equal)
            .then(size(b).partial_cmp(&size(a)).unwrap_or(Ordering::Equal))
            .then(users[a].user_id.0.cmp(&users[b].user_id.0))
    });
    let mut d = AllocationDecision::empty(specs.len(), users.len());
    d.admissions = vec![true; specs.len()];
    let mut remaining = caps;
    for u in order {
        let slot = users[u].user_id.0;
        for k in 0..3 {
            let want = if demands[u][k].is_finite() {
                demands[u][k].max(0.0)
            } else {
                remaining[k]
            };
            let give = want.min(remaining[k]);
            remaining[k] -= give;
            d.user_allocations[slot][k] = give;
            d.slice_budgets[users[u].slice_id.0][k] += give;
        }
    }
    d
}

/// Per-user demands a controller can estimate from the observable state.
pub fn observed_demands(state: &EnvState, specs: &[SliceSpec], dt: f64) -> Vec<DomainVec> {
    state
        .active_users
        .iter()
        .enumerate()
        .map(|(u, user)| {
            qos_demand(
                user,
                &specs[user.slice_id.0],
                state.measured_arrival[u],
                state.queue_backlog[u],
                dt,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{CellId, ServiceClass, SliceId, UserId};

    fn user(id: usize, slice: usize) -> UserSession {
        UserSession {
            user_id: UserId(id),
            slice_id: SliceId(slice),
            arrival_rate: 1.0,
            packet_size: 1.0,
            compute_demand: 1.0,
            wireless_rate: 1.0,
            cell_id: CellId(0),
        }
    }

    fn spec(id: usize, priority: f64) -> SliceSpec {
        SliceSpec {
            slice_id: SliceId(id),
            service_class: ServiceClass::Embb,
            delay_bound: 1.0,
            min_throughput: 0.0,
            reliability_target: 0.9,
            priority,
        }
    }

    fn pool(c: f64) -> ResourcePool {
        ResourcePool {
            radio_capacity: c,
            bandwidth_capacity: c,
            compute_capacity: c,
        }
    }

    #[test]
    fn static_budgets_follow_shares() {
        let users = vec![user(0, 0), user(1, 1), user(2, 1), user(3, 2)];
        let d = static_allocate(&[0.5, 0.3, 0.2], &pool(100.0), &users).unwrap();
        assert_eq!(d.slice_budgets[0][0], 50.0);
        assert!((d.slice_budgets[1][0] - 30.0).abs() < 1e-12);
        assert!((d.slice_budgets[2][0] - 20.0).abs() < 1e-12);
        assert!((d.user_allocations[1][0] - 15.0).abs() < 1e-12);
        assert!((d.user_allocations[2][0] - 15.0).abs() < 1e-12);
    }

    #[test]
    fn static_slice_without_users_keeps_its_budget() {
        let users = vec![user(0, 0), user(1, 2)];
        let d = static_allocate(&[0.5, 0.3, 0.2], &pool(100.0), &users).unwrap();
        assert!((d.slice_budgets[1][0] - 30.0).abs() < 1e-12);
        assert_eq!(d.user_allocations[0][0], 50.0);
        d.check_feasible(&pool(100.0), &users, 1e-12).unwrap();
    }

    #[test]
    fn off_simplex_shares_are_rejected() {
        let users = vec![user(0, 0)];
        assert!(matches!(
            static_allocate(&[0.7, 0.7], &pool(1.0), &users),
            Err(Error::InvalidConfig(_))
        ));
        assert!(static_allocate(&[1.2, -0.2], &pool(1.0), &users).is_err());
    }

    #[test]
    fn greedy_serves_everyone_when_capacity_is_abundant() {
        let users = vec![user(0, 0), user(1, 1)];
        let specs = vec![spec(0, 1.0), spec(1, 2.0)];
        let demands = vec![[10.0, 20.0, 30.0], [5.0, 5.0, 5.0]];
        let d = greedy_allocate(&pool(100.0), &users, &specs, &demands);
        assert_eq!(d.user_allocations, demands);
        assert!(d.admissions.iter().all(|a| *a));
    }

    #[test]
    fn greedy_breaks_ties_by_user_id() {
        let users = vec![user(0, 0), user(1, 0)];
        let specs = vec![spec(0, 1.0)];
        let demands = vec![[10.0; 3], [10.0; 3]];
        let d = greedy_allocate(&pool(10.0), &users, &specs, &demands);
        assert_eq!(d.user_allocations[0], [10.0; 3]);
        assert_eq!(d.user_allocations[1], [0.0; 3]);
    }

    #[test]
    fn greedy_prefers_higher_priority() {
        let users = vec![user(0, 0), user(1, 1)];
        let specs = vec![spec(0, 1.0), spec(1, 5.0)];
        let demands = vec![[8.0; 3], [8.0; 3]];
        let d = greedy_allocate(&pool(10.0), &users, &specs, &demands);
        assert_eq!(d.user_allocations[1], [8.0; 3]);
        assert_eq!(d.user_allocations[0], [2.0; 3]);
    }
}
