//! Spatio-temporal hierarchical policy.
//!
//! The upper level decides which slices are admitted and how each domain's
//! capacity is split among them, every `upper_period` steps. The lower level
//! splits each slice budget among the slice's users on every step. Both levels
//! share one encoder: graph attention over slices and cells for spatial
//! context, and a bidirectional LSTM over each slice's recent history.

mod action;
pub mod dist;
mod network;
mod observation;

pub use action::{log_prob_of, to_decision, upper_decision, ActMode, ActOutput, Levels, PolicyAction};
pub use network::{Heads, PolicyKind, PolicyModel, EMBED_DIM, GAT_HEADS, LSTM_HIDDEN};
pub use observation::{
    build_observation, Layout, Observation, UpperDecision, NODE_DIM, NODE_LOG_DEMAND, USER_DIM, USER_LOG_DEMAND,
};
