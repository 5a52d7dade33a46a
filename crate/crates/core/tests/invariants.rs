mod common;

#[test]
fn budget_simplex() {
    common::budget_simplex().unwrap();
}

#[test]
fn allocation_simplex() {
    common::allocation_simplex().unwrap();
}

#[test]
fn dual_nonnegativity() {
    common::dual_nonnegativity().unwrap();
}

#[test]
fn shaping_telescopes() {
    common::shaping_telescopes().unwrap();
}

#[test]
fn gae_equals_discounted_reward_to_go() {
    common::gae_equals_discounted_reward_to_go().unwrap();
}

#[test]
fn queue_conservation() {
    common::queue_conservation().unwrap();
}

#[test]
fn projection_is_feasible() {
    common::projection_is_feasible().unwrap();
}

#[test]
fn bottleneck_monotone_and_fixed_point() {
    common::bottleneck_monotone_and_fixed_point().unwrap();
}

#[test]
fn delay_decreases_with_service_rate() {
    common::delay_decreases_with_service_rate().unwrap();
}

#[test]
fn slice_usage_matches_brute_force() {
    common::slice_usage_matches_brute_force().unwrap();
}

#[test]
fn weights_on_simplex_and_track_worst_objective() {
    common::weights_on_simplex_and_track_worst_objective().unwrap();
}

#[test]
fn unclipped_ratio_is_negated_advantage() {
    common::unclipped_ratio_is_negated_advantage().unwrap();
}

#[test]
fn greedy_ignores_priority_scale() {
    common::greedy_ignores_priority_scale().unwrap();
}

#[test]
fn static_allocation_is_feasible_and_state_free() {
    common::static_allocation_is_feasible_and_state_free().unwrap();
}
