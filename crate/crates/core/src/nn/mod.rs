//! Minimal dense neural-network toolkit: matrices, a reverse-mode tape,
//! parameter storage with Adam, and the layers used by the policies.

mod layers;
mod matrix;
mod params;
mod tape;

pub use layers::{GatHead, GatLayer, Linear, Lstm};
pub use matrix::Matrix;
pub use params::{Adam, Gradients, Param, ParamGroup, ParamId, ParamStore};
pub use tape::{softplus, stable_sigmoid, AttentionGraph, Tape, Var};
