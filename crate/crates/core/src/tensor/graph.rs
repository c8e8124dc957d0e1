//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every op applied during a forward pass as a node
//! holding its output value. [`Graph::backward`] walks the tape in reverse,
//! propagating adjoints and accumulating them into [`Gradients`] for the
//! parameter leaves. Parameters and large constants are borrowed, never
//! copied, so a graph can be built per sentence cheaply.

use super::{softmax_masked, Gradients, ParamId, ParamStore, Tensor};
use crate::error::{invalid, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Value<'a> {
    Owned(Tensor),
    Borrowed(&'a Tensor),
}

impl Value<'_> {
    fn get(&self) -> &Tensor {
        match self {
            Value::Owned(t) => t,
            Value::Borrowed(t) => t,
        }
    }
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Concat(Vec<Var>),
    Stack(Vec<Var>),
    Lookup(Var, usize),
    Softmax(Var),
    CrossEntropy(Var, usize),
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
}

struct Node<'a> {
    value: Value<'a>,
    op: Op,
}

/// A tape of tensor ops over a read-only [`ParamStore`].
pub struct Graph<'a> {
    params: &'a ParamStore,
    nodes: Vec<Node<'a>>,
    param_nodes: Vec<Option<Var>>,
}

fn shape_error(op: &str, node: usize, detail: String) -> crate::Error {
    invalid(format!("{op} (node {node}): {detail}"))
}

impl<'a> Graph<'a> {
    pub fn new(params: &'a ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_nodes: vec![None; params.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.nodes[v.0].value.get()
    }

    fn next_id(&self) -> usize {
        self.nodes.len()
    }

    /// Leaf for a parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: Value::Borrowed(self.params.get(id)),
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(v);
        v
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn constant_ref(&mut self, value: &'a Tensor) -> Var {
        self.nodes.push(Node {
            value: Value::Borrowed(value),
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Matrix-vector, vector-matrix or matrix-matrix product.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let out = match (ta.shape(), tb.shape()) {
            (&[m, k], &[k2]) if k == k2 => {
                let (ad, x) = (ta.data(), tb.data());
                let mut y = vec![0.0; m];
                for (i, yi) in y.iter_mut().enumerate() {
                    let row = &ad[i * k..(i + 1) * k];
                    *yi = row.iter().zip(x).map(|(w, v)| w * v).sum();
                }
                Tensor::vector(y)
            }
            (&[k], &[k2, n]) if k == k2 => {
                let (x, bd) = (ta.data(), tb.data());
                let mut y = vec![0.0; n];
                for (i, &xi) in x.iter().enumerate() {
                    if xi == 0.0 {
                        continue;
                    }
                    for (yj, bij) in y.iter_mut().zip(&bd[i * n..(i + 1) * n]) {
                        *yj += xi * bij;
                    }
                }
                Tensor::vector(y)
            }
            (&[m, k], &[k2, n]) if k == k2 => {
                let (ad, bd) = (ta.data(), tb.data());
                let mut y = vec![0.0; m * n];
                for i in 0..m {
                    let yrow = &mut y[i * n..(i + 1) * n];
                    for p in 0..k {
                        let aip = ad[i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        for (yj, bpj) in yrow.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                            *yj += aip * bpj;
                        }
                    }
                }
                Tensor::matrix(m, n, y)?
            }
            (sa, sb) => {
                return Err(shape_error(
                    "matmul",
                    self.next_id(),
                    format!("incompatible shapes {sa:?} and {sb:?}"),
                ))
            }
        };
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn zip_with(&mut self, name: &str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_error(
                name,
                self.next_id(),
                format!("shape {:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("add", a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("sub", a, b, |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("mul", a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let t = self.value(a);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|x| x * factor).collect()).expect("same shape");
        self.push(out, Op::Scale(a, factor))
    }

    /// Adds vector `row` to every row of matrix `m`.
    pub fn add_row(&mut self, m: Var, row: Var) -> Result<Var> {
        let (tm, tr) = (self.value(m), self.value(row));
        if tm.rank() != 2 || tr.rank() != 1 || tm.cols() != tr.len() {
            return Err(shape_error(
                "add_row",
                self.next_id(),
                format!("matrix {:?} with row {:?}", tm.shape(), tr.shape()),
            ));
        }
        let cols = tm.cols();
        let data = tm
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| x + tr.data()[i % cols])
            .collect();
        let out = Tensor::new(tm.shape().to_vec(), data)?;
        Ok(self.push(out, Op::AddRow(m, row)))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let t = self.value(a);
        let out = Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect()).expect("same shape");
        self.push(out, op)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    /// Concatenates vectors end to end.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.rank() != 1 {
                return Err(shape_error(
                    "concat",
                    self.next_id(),
                    format!("part of shape {:?}", t.shape()),
                ));
            }
            data.extend_from_slice(t.data());
        }
        Ok(self.push(Tensor::vector(data), Op::Concat(parts.to_vec())))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        if rows.is_empty() {
            return Err(shape_error("stack", self.next_id(), "no rows".into()));
        }
        let cols = self.value(rows[0]).len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for &r in rows {
            let t = self.value(r);
            if t.rank() != 1 || t.len() != cols {
                return Err(shape_error(
                    "stack",
                    self.next_id(),
                    format!("row of shape {:?}, expected [{cols}]", t.shape()),
                ));
            }
            data.extend_from_slice(t.data());
        }
        let out = Tensor::matrix(rows.len(), cols, data)?;
        Ok(self.push(out, Op::Stack(rows.to_vec())))
    }

    /// Row `index` of a rank-2 table (embedding lookup).
    pub fn lookup(&mut self, table: Var, index: usize) -> Result<Var> {
        let t = self.value(table);
        if t.rank() != 2 || index >= t.rows() {
            return Err(shape_error(
                "lookup",
                self.next_id(),
                format!("row {index} of table {:?}", t.shape()),
            ));
        }
        let out = Tensor::vector(t.row(index).to_vec());
        Ok(self.push(out, Op::Lookup(table, index)))
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 1 {
            return Err(shape_error("softmax", self.next_id(), format!("shape {:?}", t.shape())));
        }
        let out = Tensor::vector(softmax_masked(t.data(), None));
        Ok(self.push(out, Op::Softmax(a)))
    }

    /// `logsumexp(logits) - logits[target]`, fused for stability.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let t = self.value(logits);
        if t.rank() != 1 || target >= t.len() {
            return Err(shape_error(
                "cross_entropy",
                self.next_id(),
                format!("target {target} for logits {:?}", t.shape()),
            ));
        }
        let d = t.data();
        let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + d.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let out = Tensor::scalar(lse - d[target]);
        Ok(self.push(out, Op::CrossEntropy(logits, target)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.len().max(1) as f64;
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    /// Column-wise mean of a matrix, giving one vector.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.rank() != 2 || t.rows() == 0 {
            return Err(shape_error(
                "mean_rows",
                self.next_id(),
                format!("shape {:?}", t.shape()),
            ));
        }
        let (rows, cols) = (t.rows(), t.cols());
        let mut out = vec![0.0; cols];
        for i in 0..rows {
            for (o, x) in out.iter_mut().zip(t.row(i)) {
                *o += x;
            }
        }
        for o in &mut out {
            *o /= rows as f64;
        }
        Ok(self.push(Tensor::vector(out), Op::MeanRows(a)))
    }

    /// Backpropagates from scalar `loss`, seeding its adjoint with `seed`,
    /// and adds parameter gradients into `grads`.
    pub fn backward(&self, loss: Var, seed: f64, grads: &mut Gradients) -> Result<()> {
        self.sweep(loss, seed, Some(grads)).map(|_| ())
    }

    /// Adjoints of arbitrary nodes (constants included) with respect to a
    /// scalar `loss`. Nodes the loss does not depend on get zeros.
    pub fn gradients_of(&self, loss: Var, wrt: &[Var]) -> Result<Vec<Tensor>> {
        let adj = self.sweep(loss, 1.0, None)?;
        Ok(wrt
            .iter()
            .map(|v| {
                let shape = self.value(*v).shape().to_vec();
                match &adj[v.0] {
                    Some(g) => Tensor::new(shape, g.clone()).expect("adjoint shape"),
                    None => Tensor::zeros(&shape),
                }
            })
            .collect())
    }

    fn sweep(&self, loss: Var, seed: f64, mut sink: Option<&mut Gradients>) -> Result<Vec<Option<Vec<f64>>>> {
        if self.value(loss).len() != 1 {
            return Err(invalid(format!(
                "backward (node {}): loss must be scalar, found shape {:?}",
                loss.0,
                self.value(loss).shape()
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(vec![seed]);

        fn acc(adj: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
            adj[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            let out = node.value.get();
            match &node.op {
                Op::Leaf => {
                    adj[idx] = Some(g);
                }
                Op::Param(id) => {
                    if let Some(grads) = sink.as_deref_mut() {
                        for (a, x) in grads.get_mut(*id).data_mut().iter_mut().zip(&g) {
                            *a += x;
                        }
                    }
                    adj[idx] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    match (ta.shape(), tb.shape()) {
                        (&[m, k], &[_]) => {
                            let (ad, x) = (ta.data(), tb.data());
                            {
                                let da = acc(&mut adj, *a, m * k);
                                for i in 0..m {
                                    if g[i] == 0.0 {
                                        continue;
                                    }
                                    for (d, xj) in da[i * k..(i + 1) * k].iter_mut().zip(x) {
                                        *d += g[i] * xj;
                                    }
                                }
                            }
                            let dx = acc(&mut adj, *b, k);
                            for i in 0..m {
                                if g[i] == 0.0 {
                                    continue;
                                }
                                for (d, w) in dx.iter_mut().zip(&ad[i * k..(i + 1) * k]) {
                                    *d += g[i] * w;
                                }
                            }
                        }
                        (&[k], &[_, n]) => {
                            let (x, bd) = (ta.data(), tb.data());
                            {
                                let dx = acc(&mut adj, *a, k);
                                for i in 0..k {
                                    dx[i] += bd[i * n..(i + 1) * n].iter().zip(&g).map(|(b, gj)| b * gj).sum::<f64>();
                                }
                            }
                            let db = acc(&mut adj, *b, k * n);
                            for i in 0..k {
                                if x[i] == 0.0 {
                                    continue;
                                }
                                for (d, gj) in db[i * n..(i + 1) * n].iter_mut().zip(&g) {
                                    *d += x[i] * gj;
                                }
                            }
                        }
                        (&[m, k], &[_, n]) => {
                            let (ad, bd) = (ta.data(), tb.data());
                            {
                                // dA = G · Bᵀ
                                let da = acc(&mut adj, *a, m * k);
                                for i in 0..m {
                                    let grow = &g[i * n..(i + 1) * n];
                                    for p in 0..k {
                                        da[i * k + p] += grow
                                            .iter()
                                            .zip(&bd[p * n..(p + 1) * n])
                                            .map(|(x, y)| x * y)
                                            .sum::<f64>();
                                    }
                                }
                            }
                            // dB = Aᵀ · G
                            let db = acc(&mut adj, *b, k * n);
                            for i in 0..m {
                                let grow = &g[i * n..(i + 1) * n];
                                for p in 0..k {
                                    let aip = ad[i * k + p];
                                    if aip == 0.0 {
                                        continue;
                                    }
                                    for (d, gj) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                        *d += aip * gj;
                                    }
                                }
                            }
                        }
                        _ => unreachable!("shapes validated in forward"),
                    }
                }
                Op::Add(a, b) => {
                    add_into(acc(&mut adj, *a, g.len()), &g, 1.0);
                    add_into(acc(&mut adj, *b, g.len()), &g, 1.0);
                }
                Op::Sub(a, b) => {
                    add_into(acc(&mut adj, *a, g.len()), &g, 1.0);
                    add_into(acc(&mut adj, *b, g.len()), &g, -1.0);
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                    for (d, (gi, y)) in acc(&mut adj, *a, g.len()).iter_mut().zip(g.iter().zip(tb)) {
                        *d += gi * y;
                    }
                    for (d, (gi, x)) in acc(&mut adj, *b, g.len()).iter_mut().zip(g.iter().zip(ta)) {
                        *d += gi * x;
                    }
                }
                Op::Scale(a, factor) => {
                    add_into(acc(&mut adj, *a, g.len()), &g, *factor);
                }
                Op::AddRow(m, row) => {
                    add_into(acc(&mut adj, *m, g.len()), &g, 1.0);
                    let cols = self.value(*row).len();
                    let dr = acc(&mut adj, *row, cols);
                    for (i, gi) in g.iter().enumerate() {
                        dr[i % cols] += gi;
                    }
                }
                Op::Tanh(a) => {
                    let y = out.data();
                    for (d, (gi, yi)) in acc(&mut adj, *a, g.len()).iter_mut().zip(g.iter().zip(y)) {
                        *d += gi * (1.0 - yi * yi);
                    }
                }
                Op::Sigmoid(a) => {
                    let y = out.data();
                    for (d, (gi, yi)) in acc(&mut adj, *a, g.len()).iter_mut().zip(g.iter().zip(y)) {
                        *d += gi * yi * (1.0 - yi);
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.value(*p).len();
                        add_into(acc(&mut adj, *p, len), &g[offset..offset + len], 1.0);
                        offset += len;
                    }
                }
                Op::Stack(rows) => {
                    let cols = out.cols();
                    for (i, r) in rows.iter().enumerate() {
                        add_into(acc(&mut adj, *r, cols), &g[i * cols..(i + 1) * cols], 1.0);
                    }
                }
                Op::Lookup(table, row) => {
                    let t = self.value(*table);
                    let cols = t.cols();
                    let direct = match (&self.nodes[table.0].op, sink.as_deref_mut()) {
                        (Op::Param(id), Some(grads)) => {
                            let dst = &mut grads.get_mut(*id).data_mut()[row * cols..(row + 1) * cols];
                            add_into(dst, &g, 1.0);
                            true
                        }
                        _ => false,
                    };
                    if !direct {
                        let dt = acc(&mut adj, *table, t.len());
                        add_into(&mut dt[row * cols..(row + 1) * cols], &g, 1.0);
                    }
                }
                Op::Softmax(a) => {
                    let y = out.data();
                    let dot: f64 = g.iter().zip(y).map(|(gi, yi)| gi * yi).sum();
                    for (d, (gi, yi)) in acc(&mut adj, *a, g.len()).iter_mut().zip(g.iter().zip(y)) {
                        *d += yi * (gi - dot);
                    }
                }
                Op::CrossEntropy(logits, target) => {
                    let z = self.value(*logits).data();
                    let p = softmax_masked(z, None);
                    let dz = acc(&mut adj, *logits, z.len());
                    for (i, (d, pi)) in dz.iter_mut().zip(&p).enumerate() {
                        let onehot = if i == *target { 1.0 } else { 0.0 };
                        *d += g[0] * (pi - onehot);
                    }
                }
                Op::Sum(a) => {
                    let len = self.value(*a).len();
                    for d in acc(&mut adj, *a, len).iter_mut() {
                        *d += g[0];
                    }
                }
                Op::Mean(a) => {
                    let len = self.value(*a).len();
                    let share = g[0] / len.max(1) as f64;
                    for d in acc(&mut adj, *a, len).iter_mut() {
                        *d += share;
                    }
                }
                Op::MeanRows(a) => {
                    let t = self.value(*a);
                    let (rows, cols) = (t.rows(), t.cols());
                    let da = acc(&mut adj, *a, rows * cols);
                    for i in 0..rows {
                        for (d, gj) in da[i * cols..(i + 1) * cols].iter_mut().zip(&g) {
                            *d += gj / rows as f64;
                        }
                    }
                }
            }
        }
        Ok(adj)
    }
}

fn add_into(dst: &mut [f64], src: &[f64], factor: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += factor * s;
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
