//! Define-by-run computation graph.
//!
//! Every forward pass builds a fresh [`Graph`]. Nodes are appended in
//! evaluation order, so the node list is already a topological order and
//! [`Graph::backward`] simply walks it in reverse.

use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node inside one [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    /// `x · w + b`, with `b` broadcast over rows.
    Affine(Var, Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    SoftmaxRows(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Mul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Clamp(Var, f64, f64),
    ConcatCols(Var, Var),
    SumRows(Var),
    Sum(Var),
    Mean(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: Option<ParamId>,
    grad: Option<Vec<f64>>,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that receives a gradient.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf bound to a parameter of `store`; see [`ParamStore::collect_grads`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.leaf(store.value(id).clone());
        self.nodes[v.0].param = Some(id);
        v
    }

    /// Constant copy of `v`: gradients stop here.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub(crate) fn param_grads(&self) -> impl Iterator<Item = (ParamId, &[f64])> {
        self.nodes
            .iter()
            .filter_map(|n| Some((n.param?, n.grad.as_deref()?)))
    }

    fn requires(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn matrix_of(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        let t = self.value(v);
        if t.is_matrix() {
            Ok((t.rows(), t.cols()))
        } else {
            Err(Error::Shape {
                op,
                lhs: t.shape().to_vec(),
                rhs: vec![],
            })
        }
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa == sb {
            Ok(())
        } else {
            Err(Error::Shape {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            })
        }
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let src = self.value(a);
        let data = src.data().iter().map(|&x| f(x)).collect();
        let value = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        let rg = self.requires(&[a]);
        self.push(value, op, rg)
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.requires(&[a, b]);
        Ok(self.push(value, op, rg))
    }

    /// `x · w + b` for `x: n×i`, `w: i×o`, `b: 1×o`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, i) = self.matrix_of("affine", x)?;
        let (wi, o) = self.matrix_of("affine", w)?;
        let bshape = self.value(b).shape().to_vec();
        if wi != i {
            return Err(Error::Shape {
                op: "affine",
                lhs: vec![n, i],
                rhs: vec![wi, o],
            });
        }
        if bshape != [1, o] {
            return Err(Error::Shape {
                op: "affine bias",
                lhs: vec![wi, o],
                rhs: bshape,
            });
        }
        let (xd, wd, bd) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        let mut out = Vec::with_capacity(n * o);
        for r in 0..n {
            out.extend_from_slice(bd);
            let orow = &mut out[r * o..(r + 1) * o];
            for k in 0..i {
                let xv = xd[r * i + k];
                if xv == 0.0 {
                    continue;
                }
                for (acc, &wv) in orow.iter_mut().zip(&wd[k * o..(k + 1) * o]) {
                    *acc += xv * wv;
                }
            }
        }
        let value = Tensor::matrix(n, o, out)?;
        let rg = self.requires(&[x, w, b]);
        Ok(self.push(value, Op::Affine(x, w, b), rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), |x| c * x)
    }

    /// Adds the constant `c` to every element.
    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Offset(a), |x| x + c)
    }

    /// Elementwise clamp into `[lo, hi]`; the gradient is zero where clamped.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, Op::Clamp(a, lo, hi), |x| x.clamp(lo, hi))
    }

    /// Natural log; every input element must be strictly positive.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).data().iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::domain("log", format!("non-positive input {bad}")));
        }
        Ok(self.unary(a, Op::Log(a), f64::ln))
    }

    /// Row-wise softmax of a matrix, stabilized by subtracting the row max.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (n, c) = self.matrix_of("softmax_rows", a)?;
        let src = self.value(a).data();
        let mut out = vec![0.0; n * c];
        for r in 0..n {
            let row = &src[r * c..(r + 1) * c];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let orow = &mut out[r * c..(r + 1) * c];
            let mut total = 0.0;
            for (o, &x) in orow.iter_mut().zip(row) {
                *o = (x - max).exp();
                total += *o;
            }
            for o in orow.iter_mut() {
                *o /= total;
            }
        }
        let value = Tensor::matrix(n, c, out)?;
        let rg = self.requires(&[a]);
        Ok(self.push(value, Op::SoftmaxRows(a), rg))
    }

    /// Elementwise product; also the Hadamard fusion of two embeddings.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("hadamard", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    /// `[a | b]` for matrices with equal row counts.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, ca) = self.matrix_of("concat_cols", a)?;
        let (nb, cb) = self.matrix_of("concat_cols", b)?;
        if na != nb {
            return Err(Error::Shape {
                op: "concat_cols",
                lhs: vec![na, ca],
                rhs: vec![nb, cb],
            });
        }
        let (ta, tb) = (self.value(a), self.value(b));
        let mut out = Vec::with_capacity(na * (ca + cb));
        for r in 0..na {
            out.extend_from_slice(ta.row(r));
            out.extend_from_slice(tb.row(r));
        }
        let value = Tensor::matrix(na, ca + cb, out)?;
        let rg = self.requires(&[a, b]);
        Ok(self.push(value, Op::ConcatCols(a, b), rg))
    }

    /// Sums each row of an `n×c` matrix into an `n×1` column.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let (n, c) = self.matrix_of("sum_rows", a)?;
        let src = self.value(a).data();
        let out = (0..n).map(|r| src[r * c..(r + 1) * c].iter().sum()).collect();
        let value = Tensor::matrix(n, 1, out)?;
        let rg = self.requires(&[a]);
        Ok(self.push(value, Op::SumRows(a), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().sum();
        let rg = self.requires(&[a]);
        self.push(Tensor::scalar(total), Op::Sum(a), rg)
    }

    /// Mean over all elements. The mean of an empty tensor is 0.
    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let n = t.numel();
        let m = if n == 0 {
            0.0
        } else {
            t.data().iter().sum::<f64>() / n as f64
        };
        let rg = self.requires(&[a]);
        self.push(Tensor::scalar(m), Op::Mean(a), rg)
    }

    /// Accumulates `d root / d leaf` into every reachable leaf that requires
    /// a gradient. Calling it twice without rebuilding the graph adds the
    /// gradients again.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let rshape = self.value(root).shape();
        if self.value(root).numel() != 1 {
            return Err(Error::NonScalarRoot(rshape.to_vec()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        adj[root.0] = Some(vec![1.0]);

        for id in (0..=root.0).rev() {
            let Some(up) = adj[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let op = node.op;
            if let Op::Leaf = op {
                let node = &mut self.nodes[id];
                match &mut node.grad {
                    Some(g) => g.iter_mut().zip(&up).for_each(|(g, u)| *g += u),
                    None => node.grad = Some(up),
                }
                continue;
            }
            self.propagate(op, id, &up, &mut adj);
        }
        Ok(())
    }

    fn propagate(&self, op: Op, id: usize, up: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let out = self.nodes[id].value.data();
        let val = |v: Var| self.nodes[v.0].value.data();
        let mut send = |v: Var, g: Vec<f64>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut adj[v.0] {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                slot => *slot = Some(g),
            }
        };
        let map1 = |src: &[f64], f: &dyn Fn(usize, f64) -> f64| -> Vec<f64> {
            src.iter().enumerate().map(|(i, &x)| f(i, x)).collect()
        };

        match op {
            Op::Leaf => unreachable!(),
            Op::Affine(x, w, b) => {
                let (xt, wt) = (&self.nodes[x.0].value, &self.nodes[w.0].value);
                let (n, i) = (xt.rows(), xt.cols());
                let o = wt.cols();
                let (xd, wd) = (xt.data(), wt.data());
                if self.nodes[x.0].requires_grad {
                    let mut gx = vec![0.0; n * i];
                    for r in 0..n {
                        let urow = &up[r * o..(r + 1) * o];
                        for k in 0..i {
                            let wrow = &wd[k * o..(k + 1) * o];
                            gx[r * i + k] = urow.iter().zip(wrow).map(|(u, w)| u * w).sum();
                        }
                    }
                    send(x, gx);
                }
                if self.nodes[w.0].requires_grad {
                    let mut gw = vec![0.0; i * o];
                    for r in 0..n {
                        let urow = &up[r * o..(r + 1) * o];
                        for k in 0..i {
                            let xv = xd[r * i + k];
                            if xv == 0.0 {
                                continue;
                            }
                            for (g, &u) in gw[k * o..(k + 1) * o].iter_mut().zip(urow) {
                                *g += xv * u;
                            }
                        }
                    }
                    send(w, gw);
                }
                if self.nodes[b.0].requires_grad {
                    let mut gb = vec![0.0; o];
                    for r in 0..n {
                        for (g, &u) in gb.iter_mut().zip(&up[r * o..(r + 1) * o]) {
                            *g += u;
                        }
                    }
                    send(b, gb);
                }
            }
            Op::Relu(a) => send(a, map1(val(a), &|i, x| if x > 0.0 { up[i] } else { 0.0 })),
            Op::Sigmoid(a) => send(a, map1(out, &|i, s| up[i] * s * (1.0 - s))),
            Op::Tanh(a) => send(a, map1(out, &|i, t| up[i] * (1.0 - t * t))),
            Op::Exp(a) => send(a, map1(out, &|i, e| up[i] * e)),
            Op::Log(a) => send(a, map1(val(a), &|i, x| up[i] / x)),
            Op::Square(a) => send(a, map1(val(a), &|i, x| up[i] * 2.0 * x)),
            Op::Scale(a, c) => send(a, up.iter().map(|u| u * c).collect()),
            Op::Offset(a) => send(a, up.to_vec()),
            Op::Clamp(a, lo, hi) => {
                send(a, map1(val(a), &|i, x| if x >= lo && x <= hi { up[i] } else { 0.0 }))
            }
            Op::SoftmaxRows(a) => {
                let c = self.nodes[id].value.cols();
                let mut g = vec![0.0; out.len()];
                let c = c.max(1);
                for (grow, (yrow, urow)) in g.chunks_mut(c).zip(out.chunks(c).zip(up.chunks(c))) {
                    let dot: f64 = yrow.iter().zip(urow).map(|(y, u)| y * u).sum();
                    for ((gv, &y), &u) in grow.iter_mut().zip(yrow).zip(urow) {
                        *gv = y * (u - dot);
                    }
                }
                send(a, g);
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (val(a), val(b));
                send(a, map1(bd, &|i, y| up[i] * y));
                send(b, map1(ad, &|i, x| up[i] * x));
            }
            Op::Add(a, b) => {
                send(a, up.to_vec());
                send(b, up.to_vec());
            }
            Op::Sub(a, b) => {
                send(a, up.to_vec());
                send(b, up.iter().map(|u| -u).collect());
            }
            Op::ConcatCols(a, b) => {
                let (ca, cb) = (self.nodes[a.0].value.cols(), self.nodes[b.0].value.cols());
                let n = self.nodes[a.0].value.rows();
                let mut ga = Vec::with_capacity(n * ca);
                let mut gb = Vec::with_capacity(n * cb);
                for r in 0..n {
                    let urow = &up[r * (ca + cb)..(r + 1) * (ca + cb)];
                    ga.extend_from_slice(&urow[..ca]);
                    gb.extend_from_slice(&urow[ca..]);
                }
                send(a, ga);
                send(b, gb);
            }
            Op::SumRows(a) => {
                let c = self.nodes[a.0].value.cols();
                send(a, map1(val(a), &|i, _| up[i / c]));
            }
            Op::Sum(a) => send(a, vec![up[0]; val(a).len()]),
            Op::Mean(a) => {
                let n = val(a).len();
                send(a, vec![up[0] / n as f64; n]);
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
