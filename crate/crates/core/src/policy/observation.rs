//! Observation tensors built from the simulator state.
//!
//! The spatial part is a graph with one node per slice followed by one node
//! per cell; slices connect to the cells that host their users and cells
//! connect to their grid neighbours. The temporal part is the per-slice
//! history window, zero-padded at the oldest end.

use serde::{Deserialize, Serialize};

use crate::env::{qos_demand, Census, DomainVec, EnvState, SLICE_STAT_DIM};
use crate::nn::{AttentionGraph, Matrix};

/// Width of each graph-node feature vector.
pub const NODE_DIM: usize = 18;
/// Width of each user feature vector.
pub const USER_DIM: usize = 10;
/// First of the three node columns holding `ln(demand / capacity) / 5`.
pub const NODE_LOG_DEMAND: usize = 4;
/// First of the three user columns holding `ln(demand / capacity) / 5`.
pub const USER_LOG_DEMAND: usize = 0;

/// Fixed structure of a scenario as seen by the policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub num_slices: usize,
    pub num_cells: usize,
    /// Slice index of every user.
    pub user_slice: Vec<usize>,
    pub user_cell: Vec<usize>,
    /// Attention neighbourhoods over `num_slices + num_cells` nodes, self included.
    pub neighbors: Vec<Vec<usize>>,
    pub history: usize,
    pub upper_period: usize,
}

impl Layout {
    pub fn from_census(census: &Census, history: usize, upper_period: usize) -> Self {
        let s = census.num_slices();
        let c = census.num_cells;
        let user_slice: Vec<usize> = census.users.iter().map(|u| u.slice_id.0).collect();
        let user_cell: Vec<usize> = census.users.iter().map(|u| u.cell_id.0 % c.max(1)).collect();
        let mut neighbors = vec![Vec::new(); s + c];
        for (i, n) in neighbors.iter_mut().enumerate() {
            n.push(i);
        }
        for (&sl, &cell) in user_slice.iter().zip(&user_cell) {
            if c == 0 {
                break;
            }
            let (a, b) = (sl, s + cell);
            if !neighbors[a].contains(&b) {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
        for (cell, adj) in census.cell_neighbors.iter().enumerate() {
            for &other in adj {
                if !neighbors[s + cell].contains(&(s + other)) {
                    neighbors[s + cell].push(s + other);
                }
            }
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        Self {
            num_slices: s,
            num_cells: c,
            user_slice,
            user_cell,
            neighbors,
            history: history.max(1),
            upper_period: upper_period.max(1),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_slices + self.num_cells
    }

    pub fn num_users(&self) -> usize {
        self.user_slice.len()
    }

    pub fn graph(&self) -> AttentionGraph {
        AttentionGraph {
            neighbors: self.neighbors.clone(),
        }
    }

    /// Users of each slice, in index order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_slices];
        for (u, &s) in self.user_slice.iter().enumerate() {
            out[s].push(u);
        }
        out
    }
}

/// The admission and budget decision currently in force.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperDecision {
    pub admissions: Vec<bool>,
    pub budget_logits: Vec<DomainVec>,
    /// Absolute budgets, per slice and domain.
    pub budgets: Vec<DomainVec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// `num_nodes x NODE_DIM`.
    pub nodes: Matrix,
    /// `num_users x USER_DIM`.
    pub users: Matrix,
    /// `num_slices x (history * SLICE_STAT_DIM)`, oldest step first.
    pub history: Matrix,
    /// Whether admissions and budgets are re-decided at this step.
    pub upper_step: bool,
}

fn log_ratio(x: f64) -> f64 {
    x.max(1e-5).ln() / 5.0
}

/// Builds the observation for the upcoming step.
pub fn build_observation(
    state: &EnvState,
    census: &Census,
    layout: &Layout,
    dt: f64,
    held: Option<&UpperDecision>,
) -> Observation {
    let s = layout.num_slices;
    let n = layout.num_nodes();
    let caps = state.pool.capacities();
    let users = &state.active_users;
    let phase = state.step_index % layout.upper_period;
    let upper_step = phase == 0 || held.is_none();

    let demands: Vec<DomainVec> = users
        .iter()
        .enumerate()
        .map(|(u, user)| {
            let spec = &census.specs[user.slice_id.0];
            let d = qos_demand(user, spec, state.measured_arrival[u], state.queue_backlog[u], dt);
            d.map(|x| if x.is_finite() { x } else { 1e12 })
        })
        .collect();
    let satisfied: Vec<f64> = (0..users.len())
        .map(|u| state.last_qos.get(u).map_or(1.0, |q| q.satisfied() as u8 as f64))
        .collect();
    let delay_viol: Vec<f64> = (0..users.len())
        .map(|u| state.last_qos.get(u).map_or(0.0, |q| q.delay_violation as u8 as f64))
        .collect();

    let mut group_of_node: Vec<Vec<usize>> = vec![Vec::new(); n];
    for u in 0..users.len() {
        group_of_node[layout.user_slice[u]].push(u);
        if layout.num_cells > 0 {
            group_of_node[s + layout.user_cell[u]].push(u);
        }
    }
    let max_priority = census.specs.iter().map(|sp| sp.priority).fold(0.0, f64::max).max(1e-9);

    let mut nodes = Matrix::zeros(n, NODE_DIM);
    for (i, members) in group_of_node.iter().enumerate() {
        let row = nodes.row_mut(i);
        let m = members.len().max(1) as f64;
        row[0] = (i < s) as u8 as f64;
        for k in 0..3 {
            let total: f64 = members.iter().map(|&u| demands[u][k]).sum();
            let frac = total / caps[k];
            row[1 + k] = frac.min(10.0);
            row[NODE_LOG_DEMAND + k] = log_ratio(frac);
        }
        let backlog: f64 = members.iter().map(|&u| state.queue_backlog[u]).sum();
        row[7] = (backlog / (caps[1] * dt)).min(10.0);
        row[8] = members.iter().map(|&u| delay_viol[u]).sum::<f64>() / m;
        row[9] = members.iter().map(|&u| satisfied[u]).sum::<f64>() / m;
        row[15] = phase as f64 / layout.upper_period as f64;
        if i < s {
            let spec = &census.specs[i];
            row[10] = spec.priority / max_priority;
            if let Some(h) = held {
                row[11] = h.admissions[i] as u8 as f64;
                for k in 0..3 {
                    row[12 + k] = h.budgets[i][k] / caps[k];
                }
            }
            row[16] = -spec.delay_bound.log10() / 3.0;
            row[17] = spec.reliability_target;
        }
    }

    let mut slice_bw = vec![0.0; s];
    for (u, d) in demands.iter().enumerate() {
        slice_bw[layout.user_slice[u]] += d[1];
    }
    let mut user_feats = Matrix::zeros(users.len(), USER_DIM);
    for (u, d) in demands.iter().enumerate() {
        let row = user_feats.row_mut(u);
        for k in 0..3 {
            let frac = d[k] / caps[k];
            row[USER_LOG_DEMAND + k] = log_ratio(frac);
            row[3 + k] = (10.0 * frac).min(10.0);
        }
        row[6] = (10.0 * state.queue_backlog[u] / (caps[1] * dt)).min(10.0);
        row[7] = satisfied[u];
        row[8] = 1.0 - delay_viol[u];
        let total = slice_bw[layout.user_slice[u]];
        row[9] = if total > 0.0 { d[1] / total } else { 0.0 };
    }

    let h = layout.history;
    let mut history = Matrix::zeros(s, h * SLICE_STAT_DIM);
    let window = &state.history_window;
    let pad = h.saturating_sub(window.len());
    for (t, rows) in window.iter().rev().take(h).rev().enumerate() {
        for (i, stats) in rows.iter().enumerate().take(s) {
            let off = (pad + t) * SLICE_STAT_DIM;
            history.row_mut(i)[off..off + SLICE_STAT_DIM].copy_from_slice(stats);
        }
    }

    Observation {
        nodes,
        users: user_feats,
        history,
        upper_step,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Scenario;

    #[test]
    fn layout_connects_slices_to_their_cells() {
        let sc = Scenario::desk();
        let census = sc.census();
        let layout = Layout::from_census(&census, 8, 5);
        assert_eq!(layout.num_nodes(), census.num_slices() + census.num_cells);
        for (i, n) in layout.neighbors.iter().enumerate() {
            assert!(n.contains(&i));
            for &j in n {
                // attention edges are symmetric
                assert!(layout.neighbors[j].contains(&i), "{i} -> {j}");
            }
        }
    }

    #[test]
    fn history_is_padded_at_the_oldest_end() {
        let sc = Scenario::desk();
        let census = sc.census();
        let layout = Layout::from_census(&census, 3, 5);
        let mut state = EnvState::new(sc.pool, census.users.clone(), 3);
        state.push_history(vec![[0.5; SLICE_STAT_DIM]; census.num_slices()]);
        let obs = build_observation(&state, &census, &layout, 1.0, None);
        assert!(obs.upper_step);
        let row = obs.history.row(0);
        assert!(row[..2 * SLICE_STAT_DIM].iter().all(|v| *v == 0.0));
        assert!(row[2 * SLICE_STAT_DIM..].iter().all(|v| *v == 0.5));
        assert!(obs.nodes.is_finite() && obs.users.is_finite());
    }
}
