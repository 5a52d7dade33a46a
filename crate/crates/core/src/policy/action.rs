//! Sampling, log-probabilities and the mapping from actions to allocations.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::dist::{bernoulli_log_prob, gaussian_log_prob, masked_softmax, ACTION_SCALE, HALF_LN_2PI, HALF_LN_2PI_E};
use super::network::{Heads, PolicyModel};
use super::observation::{Layout, Observation, UpperDecision};
use crate::env::{AllocationDecision, DomainVec, ResourcePool, NUM_COSTS};
use crate::nn::{stable_sigmoid, Matrix, Tape, Var};

/// One hierarchical action in logit space.
///
/// On steps where the upper level does not act, `admissions` and
/// `budget_logits` repeat the decision in force and contribute nothing to the
/// log-probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyAction {
    pub upper_step: bool,
    pub admissions: Vec<bool>,
    pub budget_logits: Vec<DomainVec>,
    pub user_logits: Vec<DomainVec>,
}

/// Which hierarchy levels a log-probability covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Levels {
    Both,
    Upper,
    Lower,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActMode {
    Sample,
    Greedy,
}

/// Result of acting on one observation.
#[derive(Clone, Debug, PartialEq)]
pub struct ActOutput {
    pub action: PolicyAction,
    pub log_prob: f64,
    pub value: f64,
    pub cost_value: [f64; NUM_COSTS],
}

fn rows3(m: &Matrix) -> Vec<DomainVec> {
    (0..m.rows).map(|r| [m.get(r, 0), m.get(r, 1), m.get(r, 2)]).collect()
}

/// Density of logit `x` given logit mean `mean`, measured on the action scale.
fn logit_log_prob(x: f64, mean: f64, log_std: f64) -> f64 {
    gaussian_log_prob(ACTION_SCALE * x, ACTION_SCALE * mean, log_std)
}

/// Log-probability of `action` under head values for a single observation.
pub fn log_prob_of(
    action: &PolicyAction,
    admit_logits: Option<&[f64]>,
    budget_mean: &[DomainVec],
    budget_log_std: &DomainVec,
    user_mean: &[DomainVec],
    user_log_std: &DomainVec,
    layout: &Layout,
) -> f64 {
    let mut lp = 0.0;
    if action.upper_step {
        if let Some(z) = admit_logits {
            for (a, z) in action.admissions.iter().zip(z) {
                lp += bernoulli_log_prob(*a, *z);
            }
        }
        for (i, admitted) in action.admissions.iter().enumerate() {
            if *admitted {
                for k in 0..3 {
                    lp += logit_log_prob(action.budget_logits[i][k], budget_mean[i][k], budget_log_std[k]);
                }
            }
        }
    }
    for (u, &sl) in layout.user_slice.iter().enumerate() {
        if action.admissions[sl] {
            for k in 0..3 {
                lp += logit_log_prob(action.user_logits[u][k], user_mean[u][k], user_log_std[k]);
            }
        }
    }
    lp
}

impl PolicyModel {
    /// Chooses an action for one observation. `held` is the upper decision in
    /// force, used when `obs.upper_step` is false.
    pub fn act<R: Rng>(
        &self,
        obs: &Observation,
        held: Option<&UpperDecision>,
        mode: ActMode,
        rng: &mut R,
    ) -> ActOutput {
        let mut t = Tape::new(&self.params);
        let heads = self.forward(&mut t, &[obs]);
        let l = &self.layout;
        let admit: Option<Vec<f64>> = heads.admit.map(|v| t.value(v).data.clone());
        let budget_mean = rows3(t.value(heads.budget_mean));
        let user_mean = rows3(t.value(heads.user_mean));
        let bls = t.value(heads.budget_log_std).data.clone();
        let uls = t.value(heads.user_log_std).data.clone();
        let budget_log_std = [bls[0], bls[1], bls[2]];
        let user_log_std = [uls[0], uls[1], uls[2]];
        let noise = |rng: &mut R, mean: f64, log_std: f64| match mode {
            ActMode::Sample => mean + log_std.exp() / ACTION_SCALE * rng.sample::<f64, _>(StandardNormal),
            ActMode::Greedy => mean,
        };

        let upper_step = obs.upper_step || held.is_none();
        let (admissions, budget_logits) = if upper_step {
            let admissions: Vec<bool> = match &admit {
                Some(z) => z
                    .iter()
                    .map(|&z| match mode {
                        ActMode::Sample => rng.gen::<f64>() < stable_sigmoid(z),
                        ActMode::Greedy => z >= 0.0,
                    })
                    .collect(),
                None => vec![true; l.num_slices],
            };
            let logits = budget_mean
                .iter()
                .map(|m| {
                    let mut out = [0.0; 3];
                    for k in 0..3 {
                        out[k] = noise(rng, m[k], budget_log_std[k]);
                    }
                    out
                })
                .collect();
            (admissions, logits)
        } else {
            let h = held.expect("held decision present on lower-only steps");
            (h.admissions.clone(), h.budget_logits.clone())
        };
        let user_logits = user_mean
            .iter()
            .map(|m| {
                let mut out = [0.0; 3];
                for k in 0..3 {
                    out[k] = noise(rng, m[k], user_log_std[k]);
                }
                out
            })
            .collect();
        let action = PolicyAction {
            upper_step,
            admissions,
            budget_logits,
            user_logits,
        };
        let log_prob = log_prob_of(
            &action,
            admit.as_deref(),
            &budget_mean,
            &budget_log_std,
            &user_mean,
            &user_log_std,
            l,
        );
        let cv = t.value(heads.cost_value).data.clone();
        let mut cost_value = [0.0; NUM_COSTS];
        cost_value.copy_from_slice(&cv[..NUM_COSTS]);
        ActOutput {
            action,
            log_prob,
            value: t.value(heads.value).data[0],
            cost_value,
        }
    }

    /// Differentiable log-probabilities (`batch x 1`) and mean entropy (scalar)
    /// of the given actions.
    pub fn log_prob_and_entropy(&self, t: &mut Tape, heads: &Heads, actions: &[&PolicyAction]) -> (Var, Var) {
        self.log_prob_and_entropy_for(t, heads, actions, Levels::Both)
    }

    /// As [`PolicyModel::log_prob_and_entropy`], restricted to some levels.
    pub fn log_prob_and_entropy_for(
        &self,
        t: &mut Tape,
        heads: &Heads,
        actions: &[&PolicyAction],
        levels: Levels,
    ) -> (Var, Var) {
        let upper_on = levels != Levels::Lower;
        let lower_on = levels != Levels::Upper;
        let l = &self.layout;
        let (s, u) = (l.num_slices, l.num_users());
        let b = actions.len();

        // masks and targets
        let mut upper_row = vec![0.0; b * s];
        let mut sign = vec![0.0; b * s];
        let mut budget_mask = Matrix::zeros(b * s, 3);
        let mut budget_x = Matrix::zeros(b * s, 3);
        let mut user_mask = Matrix::zeros(b * u, 3);
        let mut user_x = Matrix::zeros(b * u, 3);
        for (bi, a) in actions.iter().enumerate() {
            for i in 0..s {
                let r = bi * s + i;
                let up = (a.upper_step && upper_on) as u8 as f64;
                upper_row[r] = up;
                sign[r] = if a.admissions[i] { -1.0 } else { 1.0 };
                let m = up * a.admissions[i] as u8 as f64;
                budget_x.row_mut(r).copy_from_slice(&a.budget_logits[i]);
                budget_mask.row_mut(r).fill(m);
            }
            for (ui, &sl) in l.user_slice.iter().enumerate() {
                let r = bi * u + ui;
                user_x.row_mut(r).copy_from_slice(&a.user_logits[ui]);
                user_mask.row_mut(r).fill((a.admissions[sl] && lower_on) as u8 as f64);
            }
        }

        let (budget_lp, budget_ent) =
            gaussian_terms(t, heads.budget_mean, heads.budget_log_std, budget_x, budget_mask, s);
        let (user_lp, user_ent) = gaussian_terms(t, heads.user_mean, heads.user_log_std, user_x, user_mask, u);
        let mut logp = t.add(budget_lp, user_lp);
        let mut ent = t.add(budget_ent, user_ent);

        if let Some(z) = heads.admit {
            let upper = t.constant(Matrix::column(upper_row));
            let sgn = t.constant(Matrix::column(sign));
            // log P(a) = -softplus(sign * z)
            let sz = t.mul(z, sgn);
            let sp = t.softplus(sz);
            let masked = t.mul(sp, upper);
            let per_sample = t.group_sum(masked, s);
            let adm_lp = t.scale(per_sample, -1.0);
            logp = t.add(logp, adm_lp);
            // H = softplus(z) - z sigmoid(z)
            let spz = t.softplus(z);
            let sig = t.sigmoid(z);
            let zs = t.mul(z, sig);
            let h = t.sub(spz, zs);
            let h = t.mul(h, upper);
            let adm_ent = t.group_sum(h, s);
            ent = t.add(ent, adm_ent);
        }
        let mean_ent = t.mean_all(ent);
        (logp, mean_ent)
    }
}

/// Masked diagonal-Gaussian log-density and entropy on the action scale,
/// summed per sample.
fn gaussian_terms(t: &mut Tape, mean: Var, log_std: Var, x: Matrix, mask: Matrix, group: usize) -> (Var, Var) {
    let counts: Vec<f64> = (0..mask.rows).map(|r| mask.row(r).iter().sum()).collect();
    let xv = t.constant(x.map(|v| v * ACTION_SCALE));
    let mv = t.constant(mask);
    let scaled_mean = t.scale(mean, ACTION_SCALE);
    let diff = t.sub(xv, scaled_mean);
    let neg_ls = t.scale(log_std, -1.0);
    let inv_std = t.exp(neg_ls);
    let z = t.mul_row(diff, inv_std);
    let sq = t.square(z);
    let sq = t.mul(sq, mv);
    let quad = t.row_sum(sq);
    let ls_col = t.reshape(log_std, 3, 1);
    let ls_sum = t.matmul(mv, ls_col);
    let lp_const = t.constant(Matrix::column(counts.iter().map(|c| -HALF_LN_2PI * c).collect()));
    let ent_const = t.constant(Matrix::column(counts.iter().map(|c| HALF_LN_2PI_E * c).collect()));
    let half_quad = t.scale(quad, -0.5);
    let lp = t.sub(half_quad, ls_sum);
    let lp = t.add(lp, lp_const);
    let ent = t.add(ls_sum, ent_const);
    (t.group_sum(lp, group), t.group_sum(ent, group))
}

/// Maps an action to absolute budgets and user allocations.
///
/// Per domain, admitted slices split the capacity by a normalised exponential
/// of their budget logits; within a slice, users split the slice budget the
/// same way.
pub fn to_decision(action: &PolicyAction, pool: &ResourcePool, layout: &Layout) -> AllocationDecision {
    let s = layout.num_slices;
    let caps = pool.capacities();
    let mut d = AllocationDecision::empty(s, layout.num_users());
    d.admissions.clone_from(&action.admissions);
    let members = layout.members();
    for k in 0..3 {
        let logits: Vec<f64> = action.budget_logits.iter().map(|b| b[k]).collect();
        let ratios = masked_softmax(&logits, &action.admissions);
        for i in 0..s {
            d.slice_budgets[i][k] = ratios[i] * caps[k];
            if members[i].is_empty() || !action.admissions[i] {
                continue;
            }
            let ul: Vec<f64> = members[i].iter().map(|&u| action.user_logits[u][k]).collect();
            let shares = masked_softmax(&ul, &vec![true; ul.len()]);
            for (&u, sh) in members[i].iter().zip(shares) {
                d.user_allocations[u][k] = sh * d.slice_budgets[i][k];
            }
        }
    }
    d
}

/// The upper decision implied by an action, to hold between upper steps.
pub fn upper_decision(action: &PolicyAction, decision: &AllocationDecision) -> UpperDecision {
    UpperDecision {
        admissions: action.admissions.clone(),
        budget_logits: action.budget_logits.clone(),
        budgets: decision.slice_budgets.clone(),
    }
}
