#![allow(dead_code)]
//! Randomized invariant checks shared by the property and acceptance suites.

use hmppo::baselines::{greedy_allocate, static_allocate};
use hmppo::env::{
    aggregate_slice_usage, bottleneck_rate, end_to_end_delay, project, step, AllocationDecision, CellId, Domain,
    DomainVec, EnvState, ResourcePool, Scenario, ServiceClass, SliceId, SliceSpec, StepConfig, UserId, UserSession,
};
use hmppo::policy::{to_decision, Layout, PolicyAction};
use hmppo::ppo::{compute_gae, ppo_clip_loss};
use hmppo::reward::{adaptive_weights, base_reward, shaped_reward, ConstraintState, NUM_OBJECTIVES};
use proptest::collection::vec;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use std::collections::HashMap;

pub const CASES: u32 = 1000;

fn check<S: Strategy>(strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn desk_layout() -> (Layout, ResourcePool) {
    let sc = Scenario::desk();
    let census = sc.census();
    (
        Layout::from_census(&census, sc.env.history, sc.env.upper_period),
        sc.pool,
    )
}

fn triple() -> impl Strategy<Value = DomainVec> {
    [-6.0..6.0f64, -6.0..6.0f64, -6.0..6.0f64]
}

fn spec(id: usize, priority: f64) -> SliceSpec {
    SliceSpec {
        slice_id: SliceId(id),
        service_class: ServiceClass::Embb,
        delay_bound: 0.05,
        min_throughput: 1.0,
        reliability_target: 0.9,
        priority,
    }
}

fn user(id: usize, slice: usize, arrival: f64, wireless: f64, compute: f64) -> UserSession {
    UserSession {
        user_id: UserId(id),
        slice_id: SliceId(slice),
        arrival_rate: arrival,
        packet_size: 1000.0,
        compute_demand: compute,
        wireless_rate: wireless,
        cell_id: CellId(0),
    }
}

prop_compose! {
    fn instance(max_users: usize)(n in 1..=max_users)(
        slices in vec(0..3usize, n),
        arrivals in vec(0.0..5e6f64, n),
        wireless in vec(1e5..3e6f64, n),
        compute in vec(1.0..100.0f64, n),
        backlog in vec(0.0..2e6f64, n),
        caps in [1.0..200.0f64, 1e6..2e8f64, 1e7..5e9f64],
    ) -> (Vec<UserSession>, Vec<f64>, ResourcePool) {
        let users = (0..slices.len()).map(|u| user(u, slices[u], arrivals[u], wireless[u], compute[u])).collect();
        let pool = ResourcePool { radio_capacity: caps[0], bandwidth_capacity: caps[1], compute_capacity: caps[2] };
        (users, backlog, pool)
    }
}

fn raw_decision(users: usize, adm: Vec<bool>, budgets: Vec<DomainVec>, allocs: Vec<DomainVec>) -> AllocationDecision {
    assert_eq!(allocs.len(), users);
    AllocationDecision {
        admissions: adm,
        slice_budgets: budgets,
        user_allocations: allocs,
    }
}

pub fn budget_simplex() -> Result<(), String> {
    check(
        (vec(any::<bool>(), 3), vec(triple(), 3), vec(triple(), 12)),
        |(adm, logits, users)| {
            let (layout, pool) = desk_layout();
            let action = PolicyAction {
                upper_step: true,
                admissions: adm.clone(),
                budget_logits: logits,
                user_logits: users,
            };
            let d = to_decision(&action, &pool, &layout);
            let caps = pool.capacities();
            for k in 0..3 {
                let ratios: Vec<f64> = (0..3).map(|i| d.slice_budgets[i][k] / caps[k]).collect();
                for i in 0..3 {
                    if !adm[i] {
                        prop_assert_eq!(d.slice_budgets[i][k], 0.0);
                    }
                    prop_assert!(ratios[i] >= 0.0);
                }
                if adm.iter().any(|a| *a) {
                    prop_assert!((ratios.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                }
            }
            Ok(())
        },
    )
}

pub fn allocation_simplex() -> Result<(), String> {
    check(
        (vec(any::<bool>(), 3), vec(triple(), 3), vec(triple(), 12)),
        |(adm, logits, users)| {
            let (layout, pool) = desk_layout();
            let action = PolicyAction {
                upper_step: true,
                admissions: adm,
                budget_logits: logits,
                user_logits: users,
            };
            let d = to_decision(&action, &pool, &layout);
            for i in 0..layout.num_slices {
                for k in 0..3 {
                    let sum: f64 = (0..layout.num_users())
                        .filter(|&u| layout.user_slice[u] == i)
                        .map(|u| d.user_allocations[u][k])
                        .sum();
                    let b = d.slice_budgets[i][k];
                    prop_assert!(
                        (sum - b).abs() <= 1e-6 * b.max(1e-300),
                        "slice {} domain {}: {} vs {}",
                        i,
                        k,
                        sum,
                        b
                    );
                }
            }
            Ok(())
        },
    )
}

pub fn dual_nonnegativity() -> Result<(), String> {
    check(
        (
            vec(0.0..5.0f64, 3),
            vec(0.0..1.0f64, 3),
            0.0..10.0f64,
            vec(vec(0.0..1.0f64, 3), 1..20),
        ),
        |(start, bounds, eta, batches)| {
            let mut s = ConstraintState::new([bounds[0], bounds[1], bounds[2]], eta);
            s.multipliers = [start[0], start[1], start[2]];
            for b in batches {
                s = s.dual_update(&[b[0], b[1], b[2]]);
                prop_assert!(s.multipliers.iter().all(|l| *l >= 0.0));
            }
            Ok(())
        },
    )
}

pub fn shaping_telescopes() -> Result<(), String> {
    check((vec(-10.0..10.0f64, 2..40), 0.0..=1.0f64), |(phi, beta)| {
        let t = phi.len() - 1;
        let direct: f64 = (0..t)
            .map(|i| beta.powi(i as i32) * shaped_reward(0.0, phi[i], phi[i + 1], beta))
            .sum();
        let closed = beta.powi(t as i32) * phi[t] - phi[0];
        prop_assert!((direct - closed).abs() < 1e-9, "{} vs {}", direct, closed);
        Ok(())
    })
}

pub fn gae_equals_discounted_reward_to_go() -> Result<(), String> {
    check((vec(-5.0..5.0f64, 1..60), 0.01..=1.0f64), |(rewards, beta)| {
        let n = rewards.len();
        let (adv, ret) = compute_gae(&rewards, &vec![0.0; n], &vec![false; n], 0.0, beta, 1.0).unwrap();
        for t in 0..n {
            let mut g = 0.0;
            let mut w = 1.0;
            for r in &rewards[t..] {
                g += w * r;
                w *= beta;
            }
            prop_assert!((adv[t] - g).abs() < 1e-9);
            prop_assert!((ret[t] - g).abs() < 1e-9);
        }
        Ok(())
    })
}

pub fn queue_conservation() -> Result<(), String> {
    check(
        (instance(12), vec(triple(), 12), vec(any::<bool>(), 3), vec(triple(), 3)),
        |((users, backlog, pool), raw, adm, budgets)| {
            let n = users.len();
            let specs: Vec<SliceSpec> = (0..3).map(|i| spec(i, 1.0)).collect();
            let mut state = EnvState::new(pool, users.clone(), 4);
            state.queue_backlog = backlog.clone();
            let caps = pool.capacities();
            let scale = |v: DomainVec| {
                [
                    v[0].abs() * caps[0] / 4.0,
                    v[1].abs() * caps[1] / 4.0,
                    v[2].abs() * caps[2] / 4.0,
                ]
            };
            let d = raw_decision(
                n,
                adm,
                budgets.into_iter().map(scale).collect(),
                raw[..n].iter().copied().map(scale).collect(),
            );
            let dt = 0.5;
            let (next, out) = step(&state, &specs, &d, StepConfig { dt, epsilon: 1e-6 });
            for u in 0..n {
                let offered = backlog[u] + users[u].arrival_rate * dt;
                let served = (out.qos[u].achieved_rate * dt).min(offered);
                let lhs = next.queue_backlog[u] - backlog[u];
                let rhs = users[u].arrival_rate * dt - served;
                prop_assert!(next.queue_backlog[u] >= 0.0);
                prop_assert!((lhs - rhs).abs() <= 1e-9 * offered.max(1.0));
            }
            prop_assert!(out.served_bits <= out.offered_bits * (1.0 + 1e-12));
            Ok(())
        },
    )
}

pub fn projection_is_feasible() -> Result<(), String> {
    check(
        (
            instance(12),
            vec(any::<bool>(), 3),
            vec([-1e9..1e10f64, -1e9..1e10f64, -1e9..1e10f64], 3),
            vec([-1e9..1e10f64, -1e9..1e10f64, -1e9..1e10f64], 12),
            0..40usize,
        ),
        |((users, _b, pool), adm, budgets, allocs, poison)| {
            let n = users.len();
            let mut allocs = allocs[..n].to_vec();
            if poison < n {
                allocs[poison][poison % 3] = if poison % 2 == 0 { f64::NAN } else { f64::INFINITY };
            }
            let raw = raw_decision(n, adm.clone(), budgets, allocs);
            let (p, overdraw) = project(&raw, &pool, &users);
            prop_assert!(
                p.check_feasible(&pool, &users, 1e-9).is_ok(),
                "{:?}",
                p.check_feasible(&pool, &users, 1e-9)
            );
            prop_assert!(overdraw.iter().all(|o| (0.0..=1.0 + 1e-12).contains(o)));
            for i in 0..3 {
                if !adm[i] {
                    prop_assert_eq!(p.slice_budgets[i], [0.0; 3]);
                }
            }
            Ok(())
        },
    )
}

pub fn bottleneck_monotone_and_fixed_point() -> Result<(), String> {
    check(
        (
            0.0..1e9f64,
            0.1..100.0f64,
            [0.0..1e9f64, 0.0..1e9f64, 0.0..1e10f64],
            0.0..1e9f64,
            0..3usize,
        ),
        |(x, d, a, bump, which)| {
            prop_assert!((bottleneck_rate(x, x, x * d, d).unwrap() - x).abs() <= 1e-9 * x.max(1.0));
            let base = bottleneck_rate(a[0], a[1], a[2], d).unwrap();
            let mut b = a;
            b[which] += bump;
            prop_assert!(bottleneck_rate(b[0], b[1], b[2], d).unwrap() >= base);
            Ok(())
        },
    )
}

pub fn delay_decreases_with_service_rate() -> Result<(), String> {
    check(
        (
            0.0..1e6f64,
            [0.0..2e6f64, 0.0..2e6f64, 0.0..2e6f64],
            0.0..1e6f64,
            0..3usize,
        ),
        |(lambda, rates, bump, which)| {
            let u = user(0, 0, lambda, 1.0, 1.0);
            let map =
                |r: [f64; 3]| -> HashMap<Domain, f64> { Domain::ALL.iter().map(|d| (*d, r[d.index()])).collect() };
            let before = end_to_end_delay(&u, &map(rates), 1e-6).unwrap();
            let mut more = rates;
            more[which] += bump;
            prop_assert!(end_to_end_delay(&u, &map(more), 1e-6).unwrap() <= before);
            Ok(())
        },
    )
}

pub fn slice_usage_matches_brute_force() -> Result<(), String> {
    check(
        (
            vec(0..4usize, 0..=20),
            vec([0.0..100.0f64, 0.0..100.0f64, 0.0..100.0f64], 20),
            0..4usize,
            0..3usize,
        ),
        |(slices, allocs, target, k)| {
            let n = slices.len();
            let users: Vec<UserSession> = (0..n).map(|u| user(u, slices[u], 1.0, 1.0, 1.0)).collect();
            let mut d = AllocationDecision::empty(4, n);
            d.user_allocations = allocs[..n].to_vec();
            let mut oracle = 0.0;
            for u in 0..n {
                if slices[u] == target {
                    oracle += allocs[u][k];
                }
            }
            let got = aggregate_slice_usage(&d, &users, SliceId(target), Domain::ALL[k]).unwrap();
            prop_assert_eq!(got, oracle);
            Ok(())
        },
    )
}

pub fn weights_on_simplex_and_track_worst_objective() -> Result<(), String> {
    check((vec(0.0..1.0f64, NUM_OBJECTIVES), 0.0..20.0f64), |(v, kappa)| {
        let v: [f64; NUM_OBJECTIVES] = v.try_into().unwrap();
        let w = adaptive_weights(&v, kappa);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(w.iter().all(|x| *x >= 0.0));
        let arg = |xs: &[f64]| (0..xs.len()).fold(0, |b, i| if xs[i] > xs[b] { i } else { b });
        let top = arg(&v);
        let unique = v.iter().enumerate().all(|(i, x)| i == top || *x < v[top] - 1e-6);
        if unique && kappa > 0.01 {
            prop_assert_eq!(arg(&w), top);
        }
        let u = v.map(|x| 1.0 - x);
        let r = base_reward(&u, &w);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&r));
        Ok(())
    })
}

pub fn unclipped_ratio_is_negated_advantage() -> Result<(), String> {
    check((-100.0..100.0f64, 0.0..1.0f64), |(a, eps)| {
        prop_assert_eq!(ppo_clip_loss(1.0, a, eps), -a);
        Ok(())
    })
}

pub fn greedy_ignores_priority_scale() -> Result<(), String> {
    check(
        (
            instance(8),
            [0.0..5.0f64, 0.0..5.0f64, 0.0..5.0f64],
            0.01..100.0f64,
            vec([0.0..50.0f64, 0.0..5e7f64, 0.0..1e9f64], 8),
        ),
        |((users, _b, pool), prio, factor, demands)| {
            let n = users.len();
            let specs: Vec<SliceSpec> = (0..3).map(|i| spec(i, prio[i])).collect();
            let scaled: Vec<SliceSpec> = (0..3).map(|i| spec(i, prio[i] * factor)).collect();
            let a = greedy_allocate(&pool, &users, &specs, &demands[..n]);
            let b = greedy_allocate(&pool, &users, &scaled, &demands[..n]);
            prop_assert_eq!(&a, &b);
            prop_assert!(a.check_feasible(&pool, &users, 1e-9).is_ok());
            Ok(())
        },
    )
}

pub fn static_allocation_is_feasible_and_state_free() -> Result<(), String> {
    check(
        (instance(12), [0.01..1.0f64, 0.01..1.0f64, 0.01..1.0f64]),
        |((users, backlog, pool), raw)| {
            let total: f64 = raw.iter().sum();
            let shares: Vec<f64> = raw.iter().map(|x| x / total).collect();
            let d = static_allocate(&shares, &pool, &users).unwrap();
            prop_assert!(d.check_feasible(&pool, &users, 1e-9).is_ok());
            let specs: Vec<SliceSpec> = (0..3).map(|i| spec(i, 1.0)).collect();
            let mut state = EnvState::new(pool, users.clone(), 2);
            state.queue_backlog = backlog;
            let (next, _) = step(&state, &specs, &d, StepConfig { dt: 1.0, epsilon: 1e-6 });
            prop_assert_eq!(static_allocate(&shares, &next.pool, &next.active_users).unwrap(), d);
            Ok(())
        },
    )
}

/// Every property, by name.
pub const ALL: &[(&str, fn() -> Result<(), String>)] = &[
    ("budget_simplex", budget_simplex),
    ("allocation_simplex", allocation_simplex),
    ("dual_nonnegativity", dual_nonnegativity),
    ("shaping_telescopes", shaping_telescopes),
    ("gae_equals_discounted_reward_to_go", gae_equals_discounted_reward_to_go),
    ("queue_conservation", queue_conservation),
    ("projection_is_feasible", projection_is_feasible),
    (
        "bottleneck_monotone_and_fixed_point",
        bottleneck_monotone_and_fixed_point,
    ),
    ("delay_decreases_with_service_rate", delay_decreases_with_service_rate),
    ("slice_usage_matches_brute_force", slice_usage_matches_brute_force),
    (
        "weights_on_simplex_and_track_worst_objective",
        weights_on_simplex_and_track_worst_objective,
    ),
    (
        "unclipped_ratio_is_negated_advantage",
        unclipped_ratio_is_negated_advantage,
    ),
    ("greedy_ignores_priority_scale", greedy_ignores_priority_scale),
    (
        "static_allocation_is_feasible_and_state_free",
        static_allocation_is_feasible_and_state_free,
    ),
];
