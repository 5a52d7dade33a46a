use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::params::{ParamGroup, ParamId, ParamStore};
use super::tape::{AttentionGraph, Tape, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng>(
        ps: &mut ParamStore,
        rng: &mut R,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        gain: f64,
        group: ParamGroup,
    ) -> Self {
        let w = ps.add_init(rng, format!("{name}.w"), in_dim, out_dim, gain, group);
        let b = ps.add(format!("{name}.b"), Matrix::zeros(1, out_dim), group);
        Self { w, b, in_dim, out_dim }
    }

    pub fn forward(&self, t: &mut Tape, x: Var) -> Var {
        let w = t.param(self.w);
        let b = t.param(self.b);
        let y = t.matmul(x, w);
        t.add_row(y, b)
    }
}

/// One direction of an LSTM; gate order is input, forget, cell, output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<R: Rng>(ps: &mut ParamStore, rng: &mut R, name: &str, in_dim: usize, hidden: usize) -> Self {
        let wx = ps.add_init(rng, format!("{name}.wx"), in_dim, 4 * hidden, 1.0, ParamGroup::Policy);
        let wh = ps.add_init(rng, format!("{name}.wh"), hidden, 4 * hidden, 1.0, ParamGroup::Policy);
        let mut bias = Matrix::zeros(1, 4 * hidden);
        // forget-gate bias of 1
        for v in &mut bias.data[hidden..2 * hidden] {
            *v = 1.0;
        }
        let b = ps.add(format!("{name}.b"), bias, ParamGroup::Policy);
        Self { wx, wh, b, hidden }
    }

    /// Runs over `inputs` (one `rows x in_dim` matrix per time step) and returns the final hidden state.
    pub fn run(&self, t: &mut Tape, inputs: &[Var]) -> Var {
        let rows = t.shape(inputs[0]).0;
        let hd = self.hidden;
        let wx = t.param(self.wx);
        let wh = t.param(self.wh);
        let b = t.param(self.b);
        let mut h = t.constant(Matrix::zeros(rows, hd));
        let mut c = t.constant(Matrix::zeros(rows, hd));
        for &x in inputs {
            let gx = t.matmul(x, wx);
            let gh = t.matmul(h, wh);
            let g = t.add(gx, gh);
            let g = t.add_row(g, b);
            let i_pre = t.slice_cols(g, 0, hd);
            let f_pre = t.slice_cols(g, hd, hd);
            let c_pre = t.slice_cols(g, 2 * hd, hd);
            let o_pre = t.slice_cols(g, 3 * hd, hd);
            let i = t.sigmoid(i_pre);
            let f = t.sigmoid(f_pre);
            let cand = t.tanh(c_pre);
            let o = t.sigmoid(o_pre);
            let keep = t.mul(f, c);
            let write = t.mul(i, cand);
            c = t.add(keep, write);
            let ct = t.tanh(c);
            h = t.mul(o, ct);
        }
        h
    }
}

/// Multi-head graph attention layer; head outputs are concatenated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatLayer {
    pub heads: Vec<GatHead>,
    pub slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatHead {
    pub w: ParamId,
    pub a_src: ParamId,
    pub a_dst: ParamId,
}

impl GatLayer {
    pub fn new<R: Rng>(
        ps: &mut ParamStore,
        rng: &mut R,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        num_heads: usize,
    ) -> Self {
        assert!(
            num_heads > 0 && out_dim.is_multiple_of(num_heads),
            "output width must split evenly over heads"
        );
        let per_head = out_dim / num_heads;
        let heads = (0..num_heads)
            .map(|h| GatHead {
                w: ps.add_init(rng, format!("{name}.h{h}.w"), in_dim, per_head, 1.0, ParamGroup::Policy),
                a_src: ps.add_init(rng, format!("{name}.h{h}.a_src"), per_head, 1, 1.0, ParamGroup::Policy),
                a_dst: ps.add_init(rng, format!("{name}.h{h}.a_dst"), per_head, 1, 1.0, ParamGroup::Policy),
            })
            .collect();
        Self { heads, slope: 0.2 }
    }

    pub fn forward(&self, t: &mut Tape, x: Var, graph: &Rc<AttentionGraph>) -> Var {
        let outs: Vec<Var> = self
            .heads
            .iter()
            .map(|h| {
                let w = t.param(h.w);
                let wh = t.matmul(x, w);
                let a_src = t.param(h.a_src);
                let a_dst = t.param(h.a_dst);
                let s = t.matmul(wh, a_src);
                let d = t.matmul(wh, a_dst);
                t.graph_attention(wh, s, d, graph.clone(), self.slope)
            })
            .collect();
        if outs.len() == 1 {
            outs[0]
        } else {
            t.concat_cols(&outs)
        }
    }
}
