//! Reverse-mode automatic differentiation over small dense matrices.
//!
//! A [`Tape`] records every operation of one forward pass; [`Tape::backward`]
//! walks it in reverse and returns gradients for the parameters that were read.

use std::rc::Rc;

use super::matrix::Matrix;
use super::params::{Gradients, ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// Per-sample neighbourhoods for graph attention; `neighbors[i]` includes `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionGraph {
    pub neighbors: Vec<Vec<usize>>,
}

impl AttentionGraph {
    pub fn num_nodes(&self) -> usize {
        self.neighbors.len()
    }
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    Exp(Var),
    Square(Var),
    LeakyRelu(Var, f64),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    GroupSum(Var, usize),
    RowSum(Var),
    SumAll(Var),
    Reshape(Var),
    Attention {
        wh: Var,
        src: Var,
        dst: Var,
        graph: Rc<AttentionGraph>,
        alpha: Vec<f64>,
        positive: Vec<bool>,
        slope: f64,
    },
    PpoClip {
        logp: Var,
        ratio: Vec<f64>,
        adv: Vec<f64>,
        eps: f64,
    },
}

struct Node {
    value: Matrix,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn stable_sigmoid(x: f64) -> f64 {
    sigmoid(x)
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(256),
            param_vars: vec![None; params.len()],
        }
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let v = self.push(self.params.get(id).clone(), Op::Param(id));
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Matrix {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "elementwise shape mismatch");
        Matrix::from_vec(
            x.rows,
            x.cols,
            x.data.iter().zip(&y.data).map(|(p, q)| f(*p, *q)).collect(),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p + q);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p - q);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |p, q| p * q);
        self.push(v, Op::Mul(a, b))
    }

    fn row_op(&mut self, a: Var, row: Var, f: impl Fn(f64, f64) -> f64) -> Matrix {
        let (x, r) = (self.value(a), self.value(row));
        assert_eq!(r.rows, 1, "row operand must have one row");
        assert_eq!(x.cols, r.cols, "row operand width");
        let mut out = x.clone();
        for i in 0..x.rows {
            for (o, b) in out.row_mut(i).iter_mut().zip(&r.data) {
                *o = f(*o, *b);
            }
        }
        out
    }

    /// Adds a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.row_op(a, row, |p, q| p + q);
        self.push(v, Op::AddRow(a, row))
    }

    /// Multiplies every row of `a` elementwise by a `1 x c` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.row_op(a, row, |p, q| p * q);
        self.push(v, Op::MulRow(a, row))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(softplus);
        self.push(v, Op::Softplus(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push(v, Op::LeakyRelu(a, slope))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let total: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut out = Matrix::zeros(rows, total);
        let mut offset = 0;
        for p in parts {
            let m = self.value(*p);
            assert_eq!(m.rows, rows, "concat row mismatch");
            for r in 0..rows {
                out.row_mut(r)[offset..offset + m.cols].copy_from_slice(m.row(r));
            }
            offset += m.cols;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Var {
        let m = self.value(a);
        assert!(start + width <= m.cols, "column slice out of range");
        let mut out = Matrix::zeros(m.rows, width);
        for r in 0..m.rows {
            out.row_mut(r).copy_from_slice(&m.row(r)[start..start + width]);
        }
        self.push(out, Op::SliceCols(a, start))
    }

    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let m = self.value(a);
        let mut out = Matrix::zeros(idx.len(), m.cols);
        for (o, &i) in idx.iter().enumerate() {
            out.row_mut(o).copy_from_slice(m.row(i));
        }
        self.push(out, Op::GatherRows(a, idx))
    }

    /// Sums consecutive groups of `group` rows.
    pub fn group_sum(&mut self, a: Var, group: usize) -> Var {
        let m = self.value(a);
        assert!(group > 0 && m.rows.is_multiple_of(group), "group size must divide rows");
        let mut out = Matrix::zeros(m.rows / group, m.cols);
        for r in 0..m.rows {
            let g = r / group;
            for (o, v) in out.row_mut(g).iter_mut().zip(m.row(r)) {
                *o += v;
            }
        }
        self.push(out, Op::GroupSum(a, group))
    }

    pub fn group_mean(&mut self, a: Var, group: usize) -> Var {
        let s = self.group_sum(a, group);
        self.scale(s, 1.0 / group as f64)
    }

    pub fn row_sum(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let out = Matrix::column((0..m.rows).map(|r| m.row(r).iter().sum()).collect());
        self.push(out, Op::RowSum(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = Matrix::scalar(self.value(a).sum());
        self.push(v, Op::SumAll(a))
    }

    /// Row-major reshape; the data order is unchanged.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let m = self.value(a);
        assert_eq!(m.rows * m.cols, rows * cols, "reshape must preserve the element count");
        let out = Matrix::from_vec(rows, cols, m.data.clone());
        self.push(out, Op::Reshape(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).data.len().max(1);
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n as f64)
    }

    /// Single-head graph attention over a batch of identical graphs.
    ///
    /// `wh` holds projected node features (`batch * n` rows), `src` and `dst`
    /// the per-node attention scores (`batch * n` x 1). Node `i` attends to
    /// `j` with weight `softmax_j(leaky(dst_i + src_j))` over its neighbourhood.
    pub fn graph_attention(&mut self, wh: Var, src: Var, dst: Var, graph: Rc<AttentionGraph>, slope: f64) -> Var {
        let n = graph.num_nodes();
        let h = self.value(wh);
        let (s, d) = (self.value(src), self.value(dst));
        assert_eq!(h.rows % n, 0, "attention rows must be a multiple of the node count");
        assert_eq!(s.shape(), (h.rows, 1));
        assert_eq!(d.shape(), (h.rows, 1));
        let batch = h.rows / n;
        let mut out = Matrix::zeros(h.rows, h.cols);
        let mut alpha = Vec::new();
        let mut positive = Vec::new();
        let mut scores = Vec::new();
        for b in 0..batch {
            let base = b * n;
            for i in 0..n {
                scores.clear();
                for &j in &graph.neighbors[i] {
                    let pre = d.data[base + i] + s.data[base + j];
                    positive.push(pre > 0.0);
                    scores.push(if pre > 0.0 { pre } else { slope * pre });
                }
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = scores.iter().map(|e| (e - max).exp()).sum();
                for (k, &j) in graph.neighbors[i].iter().enumerate() {
                    let a = (scores[k] - max).exp() / z;
                    alpha.push(a);
                    let src_row = &h.data[(base + j) * h.cols..(base + j + 1) * h.cols];
                    let o = &mut out.data[(base + i) * h.cols..(base + i + 1) * h.cols];
                    for (ov, hv) in o.iter_mut().zip(src_row) {
                        *ov += a * hv;
                    }
                }
            }
        }
        self.push(
            out,
            Op::Attention {
                wh,
                src,
                dst,
                graph,
                alpha,
                positive,
                slope,
            },
        )
    }

    /// Mean clipped-surrogate loss `-min(r A, clip(r, 1-eps, 1+eps) A)` with
    /// `r = exp(logp - old_logp)`.
    pub fn ppo_clip(&mut self, logp: Var, old_logp: &[f64], adv: &[f64], eps: f64) -> Var {
        let lp = self.value(logp);
        assert_eq!(lp.shape(), (old_logp.len(), 1));
        assert_eq!(adv.len(), old_logp.len());
        let ratio: Vec<f64> = lp.data.iter().zip(old_logp).map(|(a, b)| (a - b).exp()).collect();
        let n = ratio.len().max(1) as f64;
        let loss: f64 = ratio
            .iter()
            .zip(adv)
            .map(|(r, a)| crate::ppo::ppo_clip_loss(*r, *a, eps))
            .sum::<f64>()
            / n;
        self.push(
            Matrix::scalar(loss),
            Op::PpoClip {
                logp,
                ratio,
                adv: adv.to_vec(),
                eps,
            },
        )
    }

    /// Gradients of the scalar `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).shape(), (1, 1), "loss must be a scalar");
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(1.0));
        let mut out = Gradients::zeros_like(self.params);

        fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => out.grads[id.0].add_assign(&g),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let mut ga = Matrix::zeros(av.rows, av.cols);
                    g.matmul_bt_into(bv, &mut ga);
                    let mut gb = Matrix::zeros(bv.rows, bv.cols);
                    av.matmul_at_into(&g, &mut gb);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.map(|x| -x));
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = Matrix::from_vec(
                        g.rows,
                        g.cols,
                        g.data.iter().zip(&bv.data).map(|(x, y)| x * y).collect(),
                    );
                    let gb = Matrix::from_vec(
                        g.rows,
                        g.cols,
                        g.data.iter().zip(&av.data).map(|(x, y)| x * y).collect(),
                    );
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddRow(a, row) => {
                    let mut gr = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (o, v) in gr.data.iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *row, gr);
                    acc(&mut grads, *a, g);
                }
                Op::MulRow(a, row) => {
                    let (av, rv) = (self.value(*a), self.value(*row));
                    let mut ga = g.clone();
                    let mut gr = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for c in 0..g.cols {
                            let gv = g.get(r, c);
                            ga.set(r, c, gv * rv.data[c]);
                            gr.data[c] += gv * av.get(r, c);
                        }
                    }
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *row, gr);
                }
                Op::Scale(a, s) => acc(&mut grads, *a, g.map(|x| x * s)),
                Op::Tanh(a) => {
                    let y = &node.value;
                    let ga = Matrix::from_vec(
                        g.rows,
                        g.cols,
                        g.data
                            .iter()
                            .zip(&y.data)
                            .map(|(gv, yv)| gv * (1.0 - yv * yv))
                            .collect(),
                    );
                    acc(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let ga = Matrix::from_vec(
                        g.rows,
                        g.cols,
                        g.data
                            .iter()
                            .zip(&y.data)
                            .map(|(gv, yv)| gv * yv * (1.0 - yv))
                            .collect(),
                    );
                    acc(&mut grads, *a, ga);
                }
                Op::Softplus(a) => {
                    let x = self.value(*a);
                    let ga = Matrix::from_vec(
                        g.rows,
                        g.cols,
                        g.data.iter().zip(&x.data).map(|(gv, xv)| gv * sigmoid(*xv)).collect(),
                    );
                    acc(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let y = &node.value;
                    let ga = Matrix::from_vec(
                        g.rows,
                        g.cols,
                        g.data.iter().zip(&y.data).map(|(gv, yv)| gv * yv).collect(),
                    );
                    acc(&mut grads, *a, ga);
                }
                Op::Square(a) => {
                    let x = self.value(*a);
                    let ga = Matrix::from_vec(
                        g.rows,
                        g.cols,
                        g.data.iter().zip(&x.data).map(|(gv, xv)| 2.0 * gv * xv).collect(),
                    );
                    acc(&mut grads, *a, ga);
                }
                Op::LeakyRelu(a, slope) => {
                    let x = self.value(*a);
                    let ga = Matrix::from_vec(
                        g.rows,
                        g.cols,
                        g.data
                            .iter()
                            .zip(&x.data)
                            .map(|(gv, xv)| if *xv > 0.0 { *gv } else { gv * slope })
                            .collect(),
                    );
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let cols = self.value(*p).cols;
                        let mut gp = Matrix::zeros(g.rows, cols);
                        for r in 0..g.rows {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        offset += cols;
                        acc(&mut grads, *p, gp);
                    }
                }
                Op::SliceCols(a, start) => {
                    let av = self.value(*a);
                    let mut ga = Matrix::zeros(av.rows, av.cols);
                    for r in 0..g.rows {
                        ga.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::GatherRows(a, idx) => {
                    let av = self.value(*a);
                    let mut ga = Matrix::zeros(av.rows, av.cols);
                    for (o, &src) in idx.iter().enumerate() {
                        for (d, v) in ga.row_mut(src).iter_mut().zip(g.row(o)) {
                            *d += v;
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::GroupSum(a, group) => {
                    let av = self.value(*a);
                    let mut ga = Matrix::zeros(av.rows, av.cols);
                    for r in 0..av.rows {
                        ga.row_mut(r).copy_from_slice(g.row(r / group));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::RowSum(a) => {
                    let av = self.value(*a);
                    let mut ga = Matrix::zeros(av.rows, av.cols);
                    for r in 0..av.rows {
                        let gv = g.data[r];
                        ga.row_mut(r).iter_mut().for_each(|x| *x = gv);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SumAll(a) => {
                    let av = self.value(*a);
                    acc(&mut grads, *a, Matrix::filled(av.rows, av.cols, g.data[0]));
                }
                Op::Reshape(a) => {
                    let av = self.value(*a);
                    acc(&mut grads, *a, Matrix::from_vec(av.rows, av.cols, g.data));
                }
                Op::Attention {
                    wh,
                    src,
                    dst,
                    graph,
                    alpha,
                    positive,
                    slope,
                } => {
                    let h = self.value(*wh);
                    let n = graph.num_nodes();
                    let batch = h.rows / n;
                    let cols = h.cols;
                    let mut gh = Matrix::zeros(h.rows, cols);
                    let mut gs = Matrix::zeros(h.rows, 1);
                    let mut gd = Matrix::zeros(h.rows, 1);
                    let mut k = 0usize;
                    let mut dalpha = Vec::new();
                    for b in 0..batch {
                        let base = b * n;
                        for i in 0..n {
                            let gi = g.row(base + i);
                            let nb = &graph.neighbors[i];
                            dalpha.clear();
                            for (e, &j) in nb.iter().enumerate() {
                                let a = alpha[k + e];
                                let hj = h.row(base + j);
                                dalpha.push(gi.iter().zip(hj).map(|(x, y)| x * y).sum::<f64>());
                                for (o, gv) in gh.row_mut(base + j).iter_mut().zip(gi) {
                                    *o += a * gv;
                                }
                            }
                            let weighted: f64 = (0..nb.len()).map(|e| alpha[k + e] * dalpha[e]).sum();
                            for (e, &j) in nb.iter().enumerate() {
                                let de = alpha[k + e] * (dalpha[e] - weighted);
                                let dpre = if positive[k + e] { de } else { de * slope };
                                gd.data[base + i] += dpre;
                                gs.data[base + j] += dpre;
                            }
                            k += nb.len();
                        }
                    }
                    acc(&mut grads, *wh, gh);
                    acc(&mut grads, *src, gs);
                    acc(&mut grads, *dst, gd);
                }
                Op::PpoClip { logp, ratio, adv, eps } => {
                    let n = ratio.len().max(1) as f64;
                    let scale = g.data[0];
                    let gl = ratio
                        .iter()
                        .zip(adv)
                        .map(|(r, a)| {
                            let clipped = r.clamp(1.0 - eps, 1.0 + eps);
                            if r * a <= clipped * a {
                                -a * r * scale / n
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    acc(&mut grads, *logp, Matrix::column(gl));
                }
            }
        }
        out
    }
}
