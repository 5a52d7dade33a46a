//! Joint radio, bandwidth and compute slicing for multi-domain networks.
//!
//! The crate bundles a step-level slicing simulator ([`env`]), CDR traffic
//! ingestion ([`traffic`]), a small reverse-mode autodiff engine ([`nn`]), the
//! spatio-temporal hierarchical policy ([`policy`]), multi-objective reward and
//! constraint handling ([`reward`]), the constrained PPO trainer ([`ppo`]),
//! reference controllers ([`baselines`]) and the evaluation harness ([`eval`]).

pub mod baselines;
pub mod env;
pub mod error;
pub mod eval;
pub mod nn;
pub mod policy;
pub mod ppo;
pub mod reward;
pub mod traffic;

pub use error::{Error, Result};
