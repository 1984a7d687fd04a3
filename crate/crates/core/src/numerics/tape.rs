//! Dynamically recorded reverse-mode differentiation over 2-D tensors.
//!
//! A [`Tape`] is built fresh for every forward pass. Each operation appends a
//! node holding its value and enough context to propagate gradients; calling
//! [`Tape::backward`] walks the nodes in reverse and accumulates parameter
//! gradients into a [`ParamStore`]. All reductions run in ascending index
//! order, so two tapes built from the same inputs produce bit-identical
//! values and gradients.

use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::numerics::params::{ParamId, ParamStore};
use crate::numerics::tensor::{matmul_into, matmul_nt_into, matmul_tn_into, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    Silu(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Abs(Var),
    Recip(Var),
    Square(Var),
    GatherRows(Var, Rc<[usize]>),
    ScatterAddRows(Var, Rc<[usize]>),
    GatherElems(Var, Rc<[usize]>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    RowSum(Var),
    SumAll(Var),
    LogSoftmax(Var),
    SortRows(Var, Vec<usize>),
    RadialBasis {
        input: Var,
        centers: Rc<[f64]>,
        width: f64,
        scale: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Operation tape. One per forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

/// Parameter gradients produced by [`Tape::gradients`].
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    pub(crate) by_param: Vec<(ParamId, Tensor)>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.by_param.iter().find(|(p, _)| *p == id).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.by_param.iter().map(|(p, t)| (*p, t))
    }
}

fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let t = &self.nodes[v.0].value;
        (t.rows(), t.cols())
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn mat(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
        Tensor::matrix(rows, cols, data).expect("tape op produced inconsistent shape")
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Records a parameter leaf. Repeated calls with the same id return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param(id));
        self.params.insert(id, v);
        v
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op, name: &str) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "{name}: shape mismatch");
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data).expect("binary op");
        self.push(value, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b), "mul")
    }

    /// Adds a `[1, m]` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (n, m) = self.shape(a);
        assert_eq!(self.shape(row), (1, m), "add_row: row shape");
        let r = self.value(row).data().to_vec();
        let mut data = self.value(a).data().to_vec();
        for chunk in data.chunks_mut(m) {
            for (x, y) in chunk.iter_mut().zip(&r) {
                *x += y;
            }
        }
        self.push(Self::mat(n, m, data), Op::AddRow(a, row))
    }

    /// Scales row `i` of `a` by `col[i]`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (n, m) = self.shape(a);
        assert_eq!(self.shape(col), (n, 1), "mul_col: column shape");
        let c = self.value(col).data().to_vec();
        let mut data = self.value(a).data().to_vec();
        if m > 0 {
            for (chunk, s) in data.chunks_mut(m).zip(&c) {
                chunk.iter_mut().for_each(|x| *x *= s);
            }
        }
        self.push(Self::mat(n, m, data), Op::MulCol(a, col))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x * c);
        self.push(value, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| x + c);
        self.push(value, Op::AddScalar(a))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (n, k) = self.shape(a);
        let (k2, m) = self.shape(b);
        assert_eq!(k, k2, "matmul: inner dimension {k} vs {k2}");
        let mut out = vec![0.0; n * m];
        matmul_into(self.value(a).data(), self.value(b).data(), &mut out, n, k, m);
        self.push(Self::mat(n, m, out), Op::MatMul(a, b))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(silu);
        self.push(value, Op::Silu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        self.push(value, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::ln);
        self.push(value, Op::Log(a))
    }

    /// Square root; the derivative at 0 is taken as 0.
    pub fn sqrt(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::sqrt);
        self.push(value, Op::Sqrt(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::abs);
        self.push(value, Op::Abs(a))
    }

    pub fn recip(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::recip);
        self.push(value, Op::Recip(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        self.push(value, Op::Square(a))
    }

    /// Row `i` of the result is row `idx[i]` of `a`.
    pub fn gather_rows(&mut self, a: Var, idx: Rc<[usize]>) -> Var {
        let (n, m) = self.shape(a);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(idx.len() * m);
        for &i in idx.iter() {
            assert!(i < n, "gather_rows: index {i} out of {n}");
            data.extend_from_slice(&src[i * m..(i + 1) * m]);
        }
        let rows = idx.len();
        self.push(Self::mat(rows, m, data), Op::GatherRows(a, idx))
    }

    /// `out[idx[i]] += a[i]`, summed in ascending `i`.
    pub fn scatter_add_rows(&mut self, a: Var, idx: Rc<[usize]>, out_rows: usize) -> Var {
        let (n, m) = self.shape(a);
        assert_eq!(n, idx.len(), "scatter_add_rows: index length");
        let src = self.value(a).data();
        let mut data = vec![0.0; out_rows * m];
        for (i, &o) in idx.iter().enumerate() {
            assert!(o < out_rows, "scatter_add_rows: index {o} out of {out_rows}");
            for (d, s) in data[o * m..(o + 1) * m].iter_mut().zip(&src[i * m..(i + 1) * m]) {
                *d += s;
            }
        }
        self.push(Self::mat(out_rows, m, data), Op::ScatterAddRows(a, idx))
    }

    /// Picks flat (row-major) entries into a `[len, 1]` column.
    pub fn gather_elems(&mut self, a: Var, flat: Rc<[usize]>) -> Var {
        let src = self.value(a).data();
        let data: Vec<f64> = flat.iter().map(|&i| src[i]).collect();
        let rows = data.len();
        self.push(Self::mat(rows, 1, data), Op::GatherElems(a, flat))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols: no inputs");
        let n = self.shape(parts[0]).0;
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let (r, c) = self.shape(p);
                assert_eq!(r, n, "concat_cols: row mismatch");
                c
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for r in 0..n {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        self.push(Self::mat(n, total, data), Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows: no inputs");
        let m = self.shape(parts[0]).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            assert_eq!(c, m, "concat_rows: column mismatch");
            data.extend_from_slice(self.value(p).data());
            rows += r;
        }
        self.push(Self::mat(rows, m, data), Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let (n, m) = self.shape(a);
        assert!(start + len <= m, "slice_cols: out of range");
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(n * len);
        for r in 0..n {
            data.extend_from_slice(&src[r * m + start..r * m + start + len]);
        }
        self.push(Self::mat(n, len, data), Op::SliceCols(a, start))
    }

    /// `[n, m] -> [n, 1]`.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let (n, m) = self.shape(a);
        let src = self.value(a).data();
        let data = (0..n).map(|r| src[r * m..(r + 1) * m].iter().sum()).collect();
        self.push(Self::mat(n, 1, data), Op::RowSum(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1);
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n as f64)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let (n, m) = self.shape(a);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(n * m);
        for r in 0..n {
            let row = &src[r * m..(r + 1) * m];
            let mx = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = mx + row.iter().map(|x| (x - mx).exp()).sum::<f64>().ln();
            data.extend(row.iter().map(|x| x - lse));
        }
        self.push(Self::mat(n, m, data), Op::LogSoftmax(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let l = self.log_softmax_rows(a);
        self.exp(l)
    }

    /// Sorts each row ascending (stable, so ties keep column order).
    pub fn sort_rows(&mut self, a: Var) -> Var {
        let (n, m) = self.shape(a);
        let src = self.value(a).data();
        let mut perm = Vec::with_capacity(n * m);
        let mut data = Vec::with_capacity(n * m);
        for r in 0..n {
            let row = &src[r * m..(r + 1) * m];
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&i, &j| row[i].total_cmp(&row[j]));
            data.extend(order.iter().map(|&i| row[i]));
            perm.extend(order);
        }
        self.push(Self::mat(n, m, data), Op::SortRows(a, perm))
    }

    /// Expands a `[n, 1]` column into `[n, R + 1]`: `x * scale` followed by
    /// Gaussian radial basis values `exp(-((x - c_i) / width)^2)`.
    pub fn radial_basis(&mut self, a: Var, centers: Rc<[f64]>, width: f64, scale: f64) -> Var {
        let (n, one) = self.shape(a);
        assert_eq!(one, 1, "radial_basis: expects a column");
        let r = centers.len();
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(n * (r + 1));
        for &x in src {
            data.push(x * scale);
            for &c in centers.iter() {
                let z = (x - c) / width;
                data.push((-z * z).exp());
            }
        }
        self.push(
            Self::mat(n, r + 1, data),
            Op::RadialBasis {
                input: a,
                centers,
                width,
                scale,
            },
        )
    }

    /// Reverse sweep from a scalar `loss`; returns per-parameter gradients.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::NonScalarLoss(lt.shape().to_vec()));
        }
        for (i, node) in self.nodes[..=loss.0].iter().enumerate() {
            if !node.value.is_finite() {
                return Err(Error::NonFinite(format!("forward value of tape node {i} ({:?})", op_name(&node.op))));
            }
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(lt.shape(), 1.0));
        let mut out = Gradients::default();
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            if let Op::Param(id) = self.nodes[i].op {
                out.by_param.push((id, g));
            }
        }
        out.by_param.sort_by_key(|(p, _)| *p);
        Ok(out)
    }

    /// Runs [`Tape::gradients`] and adds the result into `store`'s accumulators.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let grads = self.gradients(loss)?;
        for (id, g) in grads.iter() {
            store.grad_mut(id).add_assign(g);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                acc(grads, *a, zip(g, val(*b), |x, y| x * y));
                acc(grads, *b, zip(g, val(*a), |x, y| x * y));
            }
            Op::AddRow(a, row) => {
                acc(grads, *a, g.clone());
                let m = g.cols();
                let mut r = vec![0.0; m];
                for chunk in g.data().chunks(m.max(1)) {
                    for (x, y) in r.iter_mut().zip(chunk) {
                        *x += y;
                    }
                }
                acc(grads, *row, Self::mat(1, m, r));
            }
            Op::MulCol(a, col) => {
                let (n, m) = (g.rows(), g.cols());
                let c = val(*col).data();
                let av = val(*a).data();
                let mut ga = g.data().to_vec();
                let mut gc = vec![0.0; n];
                for r in 0..n {
                    let mut s = 0.0;
                    for k in 0..m {
                        s += g.data()[r * m + k] * av[r * m + k];
                        ga[r * m + k] *= c[r];
                    }
                    gc[r] = s;
                }
                acc(grads, *a, Self::mat(n, m, ga));
                acc(grads, *col, Self::mat(n, 1, gc));
            }
            Op::Scale(a, c) => acc(grads, *a, g.map(|x| x * c)),
            Op::AddScalar(a) => acc(grads, *a, g.clone()),
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (n, k, m) = (ta.rows(), ta.cols(), tb.cols());
                let mut ga = vec![0.0; n * k];
                matmul_nt_into(g.data(), tb.data(), &mut ga, n, m, k);
                let mut gb = vec![0.0; k * m];
                matmul_tn_into(ta.data(), g.data(), &mut gb, n, k, m);
                acc(grads, *a, Self::mat(n, k, ga));
                acc(grads, *b, Self::mat(k, m, gb));
            }
            Op::Silu(a) => acc(grads, *a, zip(g, val(*a), |gx, x| gx * silu_grad(x))),
            Op::Tanh(a) => acc(grads, *a, zip(g, &node.value, |gx, y| gx * (1.0 - y * y))),
            Op::Exp(a) => acc(grads, *a, zip(g, &node.value, |gx, y| gx * y)),
            Op::Log(a) => acc(grads, *a, zip(g, val(*a), |gx, x| gx / x)),
            Op::Sqrt(a) => acc(
                grads,
                *a,
                zip(g, &node.value, |gx, y| if y > 0.0 { gx * 0.5 / y } else { 0.0 }),
            ),
            Op::Abs(a) => acc(grads, *a, zip(g, val(*a), |gx, x| gx * x.signum() * f64::from(x != 0.0))),
            Op::Recip(a) => acc(grads, *a, zip(g, &node.value, |gx, y| -gx * y * y)),
            Op::Square(a) => acc(grads, *a, zip(g, val(*a), |gx, x| 2.0 * gx * x)),
            Op::GatherRows(a, idx) => {
                let (n, m) = (val(*a).rows(), val(*a).cols());
                let mut ga = vec![0.0; n * m];
                for (r, &src) in idx.iter().enumerate() {
                    for k in 0..m {
                        ga[src * m + k] += g.data()[r * m + k];
                    }
                }
                acc(grads, *a, Self::mat(n, m, ga));
            }
            Op::ScatterAddRows(a, idx) => {
                let m = g.cols();
                let mut ga = Vec::with_capacity(idx.len() * m);
                for &o in idx.iter() {
                    ga.extend_from_slice(&g.data()[o * m..(o + 1) * m]);
                }
                acc(grads, *a, Self::mat(idx.len(), m, ga));
            }
            Op::GatherElems(a, flat) => {
                let ta = val(*a);
                let mut ga = Tensor::zeros(ta.shape());
                for (k, &f) in flat.iter().enumerate() {
                    ga.data_mut()[f] += g.data()[k];
                }
                acc(grads, *a, ga);
            }
            Op::ConcatCols(parts) => {
                let n = g.rows();
                let total = g.cols();
                let mut off = 0;
                for &p in parts {
                    let w = val(p).cols();
                    let mut gp = Vec::with_capacity(n * w);
                    for r in 0..n {
                        gp.extend_from_slice(&g.data()[r * total + off..r * total + off + w]);
                    }
                    acc(grads, p, Self::mat(n, w, gp));
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let m = g.cols();
                let mut off = 0;
                for &p in parts {
                    let r = val(p).rows();
                    let gp = g.data()[off * m..(off + r) * m].to_vec();
                    acc(grads, p, Self::mat(r, m, gp));
                    off += r;
                }
            }
            Op::SliceCols(a, start) => {
                let ta = val(*a);
                let (n, m) = (ta.rows(), ta.cols());
                let w = g.cols();
                let mut ga = vec![0.0; n * m];
                for r in 0..n {
                    ga[r * m + start..r * m + start + w].copy_from_slice(&g.data()[r * w..(r + 1) * w]);
                }
                acc(grads, *a, Self::mat(n, m, ga));
            }
            Op::RowSum(a) => {
                let ta = val(*a);
                let (n, m) = (ta.rows(), ta.cols());
                let mut ga = Vec::with_capacity(n * m);
                for r in 0..n {
                    ga.extend(std::iter::repeat_n(g.data()[r], m));
                }
                acc(grads, *a, Self::mat(n, m, ga));
            }
            Op::SumAll(a) => {
                let ta = val(*a);
                acc(grads, *a, Tensor::filled(ta.shape(), g.item()));
            }
            Op::LogSoftmax(a) => {
                let (n, m) = (g.rows(), g.cols());
                let y = node.value.data();
                let mut ga = Vec::with_capacity(n * m);
                for r in 0..n {
                    let gr = &g.data()[r * m..(r + 1) * m];
                    let s: f64 = gr.iter().sum();
                    for k in 0..m {
                        ga.push(gr[k] - y[r * m + k].exp() * s);
                    }
                }
                acc(grads, *a, Self::mat(n, m, ga));
            }
            Op::SortRows(a, perm) => {
                let (n, m) = (g.rows(), g.cols());
                let mut ga = vec![0.0; n * m];
                for r in 0..n {
                    for k in 0..m {
                        ga[r * m + perm[r * m + k]] += g.data()[r * m + k];
                    }
                }
                acc(grads, *a, Self::mat(n, m, ga));
            }
            Op::RadialBasis {
                input,
                centers,
                width,
                scale,
            } => {
                let x = val(*input).data();
                let w = centers.len() + 1;
                let mut gx = Vec::with_capacity(x.len());
                for (r, &xv) in x.iter().enumerate() {
                    let row = &g.data()[r * w..(r + 1) * w];
                    let out = &node.value.data()[r * w..(r + 1) * w];
                    let mut s = row[0] * scale;
                    for (k, &c) in centers.iter().enumerate() {
                        let z = (xv - c) / width;
                        s += row[k + 1] * out[k + 1] * (-2.0 * z / width);
                    }
                    gx.push(s);
                }
                acc(grads, *input, Self::mat(x.len(), 1, gx));
            }
        }
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Param(_) => "param",
        Op::Log(_) => "log",
        Op::Recip(_) => "recip",
        Op::Sqrt(_) => "sqrt",
        Op::Exp(_) => "exp",
        Op::MatMul(..) => "matmul",
        _ => "op",
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("zip shapes")
}

fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64) -> (ParamStore, ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::scalar(v)).unwrap();
        (store, id)
    }

    #[test]
    fn square_gradient() {
        let (mut store, id) = scalar_param(3.0);
        let mut tape = Tape::new();
        let x = tape.param(&store, id);
        let y = tape.mul(x, x);
        tape.backward(y, &mut store).unwrap();
        assert_eq!(store.grad(id).item(), 6.0);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let (mut store, id) = scalar_param(3.0);
        let other = store.add("unused", Tensor::scalar(1.0)).unwrap();
        let mut tape = Tape::new();
        let _x = tape.param(&store, id);
        let c = tape.constant(Tensor::scalar(5.0));
        tape.backward(c, &mut store).unwrap();
        assert_eq!(store.grad(id).item(), 0.0);
        assert_eq!(store.grad(other).item(), 0.0);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::zeros(&[2, 2]));
        assert!(matches!(tape.gradients(c), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn nan_forward_rejected() {
        let mut tape = Tape::new();
        let c = tape.constant(Tensor::scalar(-1.0));
        let s = tape.log(c);
        assert!(matches!(tape.gradients(s), Err(Error::NonFinite(_))));
    }

    #[test]
    fn scatter_is_adjoint_of_gather() {
        let (mut store, id) = {
            let mut s = ParamStore::new();
            let id = s
                .add("a", Tensor::matrix(3, 2, vec![1., 2., 3., 4., 5., 6.]).unwrap())
                .unwrap();
            (s, id)
        };
        let mut tape = Tape::new();
        let a = tape.param(&store, id);
        let idx: Rc<[usize]> = vec![2, 0, 2, 1].into();
        let g = tape.gather_rows(a, idx.clone());
        let back = tape.scatter_add_rows(g, idx, 3);
        assert_eq!(tape.value(back).data(), &[1., 2., 3., 4., 10., 12.]);
        let l = tape.sum_all(back);
        tape.backward(l, &mut store).unwrap();
        assert_eq!(store.grad(id).data(), &[1., 1., 1., 1., 2., 2.]);
    }

    #[test]
    fn softmax_rows_normalized() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::matrix(2, 3, vec![1., 2., 3., -100., 0., 100.]).unwrap());
        let s = tape.softmax_rows(a);
        for r in 0..2 {
            let sum: f64 = tape.value(s).row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}
