//! Actor-critic networks.
//!
//! [`PolicyModel`] is either the spatio-temporal hierarchical network (graph
//! attention over slices and cells, a bidirectional LSTM over the per-slice
//! history, admission/budget/user heads) or a flat MLP that always admits every
//! slice and re-decides budgets each step.

use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dist::raw_for_log_std;
use super::dist::LOG_STD_MIN;
use super::observation::{Layout, Observation, NODE_DIM, NODE_LOG_DEMAND, USER_DIM, USER_LOG_DEMAND};
use crate::env::SLICE_STAT_DIM;
use crate::nn::{GatLayer, Linear, Lstm, Matrix, ParamGroup, ParamId, ParamStore, Tape, Var};

pub const EMBED_DIM: usize = 64;
pub const LSTM_HIDDEN: usize = 16;
pub const GAT_HEADS: usize = 2;
pub const USER_HIDDEN: usize = 32;
pub const FLAT_HIDDEN: usize = 64;
const INITIAL_LOG_STD: f64 = 0.0;
const ADMIT_BIAS: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Hierarchical,
    Flat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
enum Arch {
    Hierarchical {
        gat: GatLayer,
        fwd: Lstm,
        bwd: Lstm,
        fuse: Linear,
        admit: Linear,
        budget: Linear,
        budget_skip: Linear,
        user_hidden: Linear,
        user_out: Linear,
        user_skip: Linear,
        value_hidden: Linear,
        value_out: Linear,
        cost_out: Linear,
    },
    Flat {
        l1: Linear,
        l2: Linear,
        budget: Linear,
        user: Linear,
        v1: Linear,
        v2: Linear,
        value_out: Linear,
        cost_out: Linear,
    },
}

/// Raw head outputs for a batch of observations.
#[derive(Clone, Copy, Debug)]
pub struct Heads {
    /// Admission logits, `batch * slices x 1`; `None` when every slice is always admitted.
    pub admit: Option<Var>,
    /// Budget logit means, `batch * slices x 3`.
    pub budget_mean: Var,
    /// User logit means, `batch * users x 3`.
    pub user_mean: Var,
    /// Bounded log standard deviations, `1 x 3` each.
    pub budget_log_std: Var,
    pub user_log_std: Var,
    /// `batch x 1`.
    pub value: Var,
    /// `batch x NUM_COSTS`.
    pub cost_value: Var,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyModel {
    pub kind: PolicyKind,
    pub layout: Layout,
    pub params: ParamStore,
    arch: Arch,
    budget_log_std: ParamId,
    user_log_std: ParamId,
}

/// Log demand-to-capacity ratios at unit scale, read from the observation
/// columns starting at `col` (stored there divided by 5) and centred within
/// each group of rows. The centring leaves every normalised exponential over a
/// group unchanged but removes the shared offset from the skip inputs.
fn centred_log_demand(features: &Matrix, col: usize, groups: &[Vec<usize>]) -> Matrix {
    let mut out = Matrix::zeros(features.rows, 3);
    for g in groups {
        for k in 0..3 {
            let mean = g.iter().map(|&r| features.get(r, col + k)).sum::<f64>() / g.len().max(1) as f64;
            for &r in g {
                out.set(r, k, 5.0 * (features.get(r, col + k) - mean));
            }
        }
    }
    out
}

fn slice_rows(nodes: &Matrix, s: usize) -> Matrix {
    Matrix::from_vec(s, nodes.cols, nodes.data[..s * nodes.cols].to_vec())
}

fn stack(mats: impl Iterator<Item = Matrix>, cols: usize) -> Matrix {
    let mut data = Vec::new();
    let mut rows = 0;
    for m in mats {
        debug_assert_eq!(m.cols, cols);
        rows += m.rows;
        data.extend_from_slice(&m.data);
    }
    Matrix::from_vec(rows, cols, data)
}

impl PolicyModel {
    /// The spatio-temporal hierarchical network.
    pub fn hierarchical(layout: Layout, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamStore::new();
        let p = ParamGroup::Policy;
        let v = ParamGroup::Value;
        let gat = GatLayer::new(&mut ps, &mut rng, "gat", NODE_DIM, EMBED_DIM, GAT_HEADS);
        let fwd = Lstm::new(&mut ps, &mut rng, "lstm_fwd", SLICE_STAT_DIM, LSTM_HIDDEN);
        let bwd = Lstm::new(&mut ps, &mut rng, "lstm_bwd", SLICE_STAT_DIM, LSTM_HIDDEN);
        let fuse = Linear::new(
            &mut ps,
            &mut rng,
            "fuse",
            EMBED_DIM + 2 * LSTM_HIDDEN,
            EMBED_DIM,
            1.0,
            p,
        );
        let admit = Linear::new(&mut ps, &mut rng, "admit", EMBED_DIM, 1, 0.01, p);
        ps.get_mut(admit.b).data[0] = ADMIT_BIAS;
        let budget = Linear::new(&mut ps, &mut rng, "budget", EMBED_DIM, 3, 0.01, p);
        let budget_skip = Linear::new(&mut ps, &mut rng, "budget_skip", 3, 3, 0.01, p);
        let user_hidden = Linear::new(
            &mut ps,
            &mut rng,
            "user_hidden",
            EMBED_DIM + USER_DIM,
            USER_HIDDEN,
            1.0,
            p,
        );
        let user_out = Linear::new(&mut ps, &mut rng, "user_out", USER_HIDDEN, 3, 0.01, p);
        let user_skip = Linear::new(&mut ps, &mut rng, "user_skip", 3, 3, 0.01, p);
        // Identity skips: the untrained network allocates in proportion to estimated demand.
        for skip in [&budget_skip, &user_skip] {
            let w = ps.get_mut(skip.w);
            for r in 0..3 {
                for c in 0..3 {
                    w.set(r, c, (r == c) as u8 as f64);
                }
            }
        }
        let value_hidden = Linear::new(&mut ps, &mut rng, "value_hidden", EMBED_DIM, EMBED_DIM, 1.0, v);
        let value_out = Linear::new(&mut ps, &mut rng, "value_out", EMBED_DIM, 1, 1.0, v);
        let cost_out = Linear::new(&mut ps, &mut rng, "cost_out", EMBED_DIM, crate::env::NUM_COSTS, 1.0, v);
        let (budget_log_std, user_log_std) = Self::add_log_stds(&mut ps);
        Self {
            kind: PolicyKind::Hierarchical,
            layout,
            params: ps,
            arch: Arch::Hierarchical {
                gat,
                fwd,
                bwd,
                fuse,
                admit,
                budget,
                budget_skip,
                user_hidden,
                user_out,
                user_skip,
                value_hidden,
                value_out,
                cost_out,
            },
            budget_log_std,
            user_log_std,
        }
    }

    /// A flat two-layer MLP over the concatenated node and user features.
    pub fn flat(mut layout: Layout, seed: u64) -> Self {
        layout.upper_period = 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamStore::new();
        let p = ParamGroup::Policy;
        let v = ParamGroup::Value;
        let input = layout.num_nodes() * NODE_DIM + layout.num_users() * USER_DIM;
        let s = layout.num_slices;
        let u = layout.num_users();
        let l1 = Linear::new(&mut ps, &mut rng, "l1", input, FLAT_HIDDEN, 1.0, p);
        let l2 = Linear::new(&mut ps, &mut rng, "l2", FLAT_HIDDEN, FLAT_HIDDEN, 1.0, p);
        let budget = Linear::new(&mut ps, &mut rng, "budget", FLAT_HIDDEN, 3 * s, 0.01, p);
        let user = Linear::new(&mut ps, &mut rng, "user", FLAT_HIDDEN, 3 * u, 0.01, p);
        let v1 = Linear::new(&mut ps, &mut rng, "v1", input, FLAT_HIDDEN, 1.0, v);
        let v2 = Linear::new(&mut ps, &mut rng, "v2", FLAT_HIDDEN, FLAT_HIDDEN, 1.0, v);
        let value_out = Linear::new(&mut ps, &mut rng, "value_out", FLAT_HIDDEN, 1, 1.0, v);
        let cost_out = Linear::new(
            &mut ps,
            &mut rng,
            "cost_out",
            FLAT_HIDDEN,
            crate::env::NUM_COSTS,
            1.0,
            v,
        );
        let (budget_log_std, user_log_std) = Self::add_log_stds(&mut ps);
        Self {
            kind: PolicyKind::Flat,
            layout,
            params: ps,
            arch: Arch::Flat {
                l1,
                l2,
                budget,
                user,
                v1,
                v2,
                value_out,
                cost_out,
            },
            budget_log_std,
            user_log_std,
        }
    }

    fn add_log_stds(ps: &mut ParamStore) -> (ParamId, ParamId) {
        let raw = raw_for_log_std(INITIAL_LOG_STD);
        let b = ps.add("budget_log_std", Matrix::filled(1, 3, raw), ParamGroup::Policy);
        let u = ps.add("user_log_std", Matrix::filled(1, 3, raw), ParamGroup::Policy);
        (b, u)
    }

    /// Critic outputs for one observation: value and per-constraint cost values.
    pub fn critic(&self, obs: &Observation) -> (f64, [f64; crate::env::NUM_COSTS]) {
        let mut t = Tape::new(&self.params);
        let h = self.forward(&mut t, &[obs]);
        let mut c = [0.0; crate::env::NUM_COSTS];
        c.copy_from_slice(&t.value(h.cost_value).data[..crate::env::NUM_COSTS]);
        (t.value(h.value).data[0], c)
    }

    pub fn has_admission(&self) -> bool {
        self.kind == PolicyKind::Hierarchical
    }

    pub fn upper_period(&self) -> usize {
        self.layout.upper_period
    }

    fn bounded_log_std(t: &mut Tape, id: ParamId) -> Var {
        let raw = t.param(id);
        let sp = t.softplus(raw);
        let floor = t.constant(Matrix::filled(1, 3, LOG_STD_MIN));
        t.add(sp, floor)
    }

    /// Slice embeddings from graph attention and the bidirectional history
    /// encoder, `batch * slices x EMBED_DIM`. Hierarchical models only.
    pub fn encode(&self, t: &mut Tape, batch: &[&Observation]) -> Var {
        let Arch::Hierarchical {
            gat, fwd, bwd, fuse, ..
        } = &self.arch
        else {
            panic!("encode is only defined for the hierarchical network");
        };
        let l = &self.layout;
        let (s, n) = (l.num_slices, l.num_nodes());
        let nodes = t.constant(stack(batch.iter().map(|o| o.nodes.clone()), NODE_DIM));
        let graph = Rc::new(l.graph());
        let g = gat.forward(t, nodes, &graph);
        let g = t.tanh(g);
        let idx: Vec<usize> = (0..batch.len()).flat_map(|b| (0..s).map(move |i| b * n + i)).collect();
        let gs = t.gather_rows(g, idx);

        let hist = t.constant(stack(
            batch.iter().map(|o| o.history.clone()),
            l.history * SLICE_STAT_DIM,
        ));
        let steps: Vec<Var> = (0..l.history)
            .map(|k| t.slice_cols(hist, k * SLICE_STAT_DIM, SLICE_STAT_DIM))
            .collect();
        let hf = fwd.run(t, &steps);
        let rev: Vec<Var> = steps.iter().rev().copied().collect();
        let hb = bwd.run(t, &rev);
        let cat = t.concat_cols(&[gs, hf, hb]);
        let e = fuse.forward(t, cat);
        t.tanh(e)
    }

    /// Forward pass over a batch.
    pub fn forward(&self, t: &mut Tape, batch: &[&Observation]) -> Heads {
        let l = &self.layout;
        let (s, u) = (l.num_slices, l.num_users());
        let b = batch.len();
        let budget_log_std = Self::bounded_log_std(t, self.budget_log_std);
        let user_log_std = Self::bounded_log_std(t, self.user_log_std);
        let user_rows = stack(batch.iter().map(|o| o.users.clone()), USER_DIM);
        let users = t.constant(user_rows.clone());
        match &self.arch {
            Arch::Hierarchical {
                admit,
                budget,
                budget_skip,
                user_hidden,
                user_out,
                user_skip,
                value_hidden,
                value_out,
                cost_out,
                ..
            } => {
                let e = self.encode(t, batch);
                let admit_logits = admit.forward(t, e);
                let budget_main = budget.forward(t, e);
                let slice_groups: Vec<Vec<usize>> = (0..b)
                    .map(|bi| (0..s).collect::<Vec<_>>().iter().map(|i| bi * s + i).collect())
                    .collect();
                let slice_rows = stack(batch.iter().map(|o| slice_rows(&o.nodes, s)), NODE_DIM);
                let slice_log_demand = t.constant(centred_log_demand(&slice_rows, NODE_LOG_DEMAND, &slice_groups));
                let bskip = budget_skip.forward(t, slice_log_demand);
                let budget_mean = t.add(budget_main, bskip);
                let idx: Vec<usize> = (0..b)
                    .flat_map(|bi| l.user_slice.iter().map(move |&sl| bi * s + sl))
                    .collect();
                let eu = t.gather_rows(e, idx);
                let cat = t.concat_cols(&[eu, users]);
                let h = user_hidden.forward(t, cat);
                let h = t.tanh(h);
                let main = user_out.forward(t, h);
                let members = l.members();
                let user_groups: Vec<Vec<usize>> = (0..b)
                    .flat_map(|bi| members.iter().map(move |m| m.iter().map(|&ui| bi * u + ui).collect()))
                    .collect();
                let user_log_demand = t.constant(centred_log_demand(&user_rows, USER_LOG_DEMAND, &user_groups));
                let skip = user_skip.forward(t, user_log_demand);
                let user_mean = t.add(main, skip);
                let pooled = t.group_mean(e, s);
                let vh = value_hidden.forward(t, pooled);
                let vh = t.tanh(vh);
                let value = value_out.forward(t, vh);
                let cost_value = cost_out.forward(t, vh);
                Heads {
                    admit: Some(admit_logits),
                    budget_mean,
                    user_mean,
                    budget_log_std,
                    user_log_std,
                    value,
                    cost_value,
                }
            }
            Arch::Flat {
                l1,
                l2,
                budget,
                user,
                v1,
                v2,
                value_out,
                cost_out,
            } => {
                let n = l.num_nodes();
                let nodes = t.constant(stack(batch.iter().map(|o| o.nodes.clone()), NODE_DIM));
                let nodes = t.reshape(nodes, b, n * NODE_DIM);
                let users_flat = t.reshape(users, b, u * USER_DIM);
                let x = t.concat_cols(&[nodes, users_flat]);
                let h = l1.forward(t, x);
                let h = t.tanh(h);
                let h = l2.forward(t, h);
                let h = t.tanh(h);
                let bm = budget.forward(t, h);
                let budget_mean = t.reshape(bm, b * s, 3);
                let um = user.forward(t, h);
                let user_mean = t.reshape(um, b * u, 3);
                let vh = v1.forward(t, x);
                let vh = t.tanh(vh);
                let vh = v2.forward(t, vh);
                let vh = t.tanh(vh);
                let value = value_out.forward(t, vh);
                let cost_value = cost_out.forward(t, vh);
                Heads {
                    admit: None,
                    budget_mean,
                    user_mean,
                    budget_log_std,
                    user_log_std,
                    value,
                    cost_value,
                }
            }
        }
    }
}
