//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! Every operation appends a node holding its forward value, so the node
//! list is already in topological order. [`Graph::backward`] walks it once
//! in reverse, accumulating gradients into each node's parents.

use super::loss::{self, clamp_prob};
use super::params::{ParamId, ParamStore};
use super::{matmul_into, sigmoid, Tensor};
use crate::candgen::Label;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    /// `m x n` plus a `1 x n` row broadcast over every row.
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    SliceCols {
        src: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows {
        src: Var,
        rows: Vec<usize>,
    },
    SoftmaxRows(Var),
    SumAll(Var),
    WeightedCrossEntropy {
        scores: Var,
        labels: Vec<Label>,
        pos_weight: f64,
    },
    Hinge {
        scores: Var,
        labels: Vec<Label>,
        margin: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<(ParamId, Var)>,
}

/// Gradients of one scalar output with respect to every node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
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

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// An input node. Its gradient is available after `backward`.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// A leaf bound to a stored parameter; see [`Graph::param_grads`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&(_, v)) = self.params.iter().find(|(p, _)| *p == id) {
            return v;
        }
        let v = self.leaf(store.get(id).clone());
        self.params.push((id, v));
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", ta.shape(), tb.shape()),
            ));
        }
        let mut out = Tensor::zeros(ta.rows(), tb.cols());
        matmul_into(ta, tb, &mut out);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.value(a), self.value(b))?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("sub", self.value(a), self.value(b))?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("mul", self.value(a), self.value(b))?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ta, tr) = (self.value(a), self.value(row));
        if tr.rows() != 1 || tr.cols() != ta.cols() {
            return Err(Error::shape(
                "add_row",
                format!("{:?} + {:?}", ta.shape(), tr.shape()),
            ));
        }
        let mut out = ta.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(tr.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let src = self.value(a);
        if start + width > src.cols() {
            return Err(Error::shape(
                "slice_cols",
                format!("[{start}, {}) of {:?}", start + width, src.shape()),
            ));
        }
        let mut out = Tensor::zeros(src.rows(), width);
        for r in 0..src.rows() {
            out.row_mut(r)
                .copy_from_slice(&src.row(r)[start..start + width]);
        }
        Ok(self.push(out, Op::SliceCols { src: a, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = match parts.first() {
            Some(&p) => self.value(p).rows(),
            None => return Err(Error::shape("concat_cols", "no inputs")),
        };
        if let Some(bad) = parts.iter().find(|&&p| self.value(p).rows() != rows) {
            return Err(Error::shape(
                "concat_cols",
                format!("{rows} rows vs {:?}", self.value(*bad).shape()),
            ));
        }
        let cols = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                out.row_mut(r)[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Vertical concatenation. An empty `parts` yields a `0 x cols` node.
    pub fn concat_rows(&mut self, parts: &[Var], cols: usize) -> Result<Var> {
        if let Some(bad) = parts.iter().find(|&&p| self.value(p).cols() != cols) {
            return Err(Error::shape(
                "concat_rows",
                format!("{cols} cols vs {:?}", self.value(*bad).shape()),
            ));
        }
        let rows = parts.iter().map(|&p| self.value(p).rows()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::from_vec(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let src = self.value(a);
        if let Some(&bad) = rows.iter().find(|&&r| r >= src.rows()) {
            return Err(Error::shape(
                "gather_rows",
                format!("row {bad} of {:?}", src.shape()),
            ));
        }
        let mut out = Tensor::zeros(rows.len(), src.cols());
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(src.row(r));
        }
        Ok(self.push(
            out,
            Op::GatherRows {
                src: a,
                rows: rows.to_vec(),
            },
        ))
    }

    pub fn row(&mut self, a: Var, r: usize) -> Result<Var> {
        self.gather_rows(a, &[r])
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    fn check_scores(&self, op: &'static str, scores: Var, labels: &[Label]) -> Result<()> {
        let t = self.value(scores);
        if t.cols() != 1 || t.rows() != labels.len() {
            return Err(Error::shape(
                op,
                format!("scores {:?} for {} labels", t.shape(), labels.len()),
            ));
        }
        Ok(())
    }

    /// Scalar node with [`loss::weighted_cross_entropy`] over an `M x 1`
    /// column of positive-class probabilities.
    pub fn weighted_cross_entropy(
        &mut self,
        scores: Var,
        labels: &[Label],
        pos_weight: f64,
    ) -> Result<Var> {
        self.check_scores("weighted_cross_entropy", scores, labels)?;
        let l = loss::weighted_cross_entropy(self.value(scores).data(), labels, pos_weight);
        Ok(self.push(
            Tensor::scalar(l),
            Op::WeightedCrossEntropy {
                scores,
                labels: labels.to_vec(),
                pos_weight,
            },
        ))
    }

    /// Scalar node with [`loss::hinge_loss`] over an `M x 1` score column.
    pub fn hinge(&mut self, scores: Var, labels: &[Label], margin: f64) -> Result<Var> {
        self.check_scores("hinge", scores, labels)?;
        let l = loss::hinge_loss(self.value(scores).data(), labels, margin);
        Ok(self.push(
            Tensor::scalar(l),
            Op::Hinge {
                scores,
                labels: labels.to_vec(),
                margin,
            },
        ))
    }

    /// Backpropagates from the scalar `out`.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        let shape = self.value(out).shape();
        if shape != [1, 1] {
            return Err(Error::shape("backward", format!("output is {shape:?}")));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; out.0 + 1];
        grads[out.0] = Some(Tensor::scalar(1.0));
        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Gradient per stored parameter, zero for parameters not on this graph.
    pub fn param_grads(&self, grads: &Gradients, store: &ParamStore) -> Vec<Tensor> {
        let mut out = store.zeros_like();
        for &(id, v) in &self.params {
            if let Some(g) = grads.get(v) {
                out[id.index()].add_assign(g);
            }
        }
        out
    }

    fn backprop_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let mut da = Tensor::zeros(ta.rows(), ta.cols());
                matmul_into(g, &tb.transpose(), &mut da);
                let mut db = Tensor::zeros(tb.rows(), tb.cols());
                matmul_into(&ta.transpose(), g, &mut db);
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::AddRow(a, row) => {
                accumulate(grads, *a, g.clone());
                let mut db = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (d, v) in db.data_mut().iter_mut().zip(g.row(r)) {
                        *d += v;
                    }
                }
                accumulate(grads, *row, db);
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                accumulate(grads, *a, g.zip_map(self.value(*b), |x, y| x * y));
                accumulate(grads, *b, g.zip_map(self.value(*a), |x, y| x * y));
            }
            Op::Sigmoid(a) => {
                let d = g.zip_map(&node.value, |gv, y| gv * y * (1.0 - y));
                accumulate(grads, *a, d);
            }
            Op::Tanh(a) => {
                let d = g.zip_map(&node.value, |gv, y| gv * (1.0 - y * y));
                accumulate(grads, *a, d);
            }
            Op::SliceCols { src, start } => {
                let s = self.value(*src);
                let mut d = Tensor::zeros(s.rows(), s.cols());
                for r in 0..g.rows() {
                    d.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                accumulate(grads, *src, d);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    let mut d = Tensor::zeros(g.rows(), w);
                    for r in 0..g.rows() {
                        d.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + w]);
                    }
                    offset += w;
                    accumulate(grads, p, d);
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let t = self.value(p);
                    let n = t.len();
                    let d =
                        Tensor::from_vec(t.rows(), t.cols(), g.data()[offset..offset + n].to_vec())
                            .expect("slice sized from the part");
                    offset += n;
                    accumulate(grads, p, d);
                }
            }
            Op::GatherRows { src, rows } => {
                let s = self.value(*src);
                let mut d = Tensor::zeros(s.rows(), s.cols());
                for (i, &r) in rows.iter().enumerate() {
                    for (dv, gv) in d.row_mut(r).iter_mut().zip(g.row(i)) {
                        *dv += gv;
                    }
                }
                accumulate(grads, *src, d);
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut d = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                    for ((dv, gv), yv) in d.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                        *dv = yv * (gv - dot);
                    }
                }
                accumulate(grads, *a, d);
            }
            Op::SumAll(a) => {
                let s = self.value(*a);
                accumulate(grads, *a, Tensor::filled(s.rows(), s.cols(), g.item()));
            }
            Op::WeightedCrossEntropy {
                scores,
                labels,
                pos_weight,
            } => {
                let h = self.value(*scores);
                let mut d = Tensor::zeros(h.rows(), 1);
                for (r, label) in labels.iter().enumerate() {
                    let p = h.get(r, 0);
                    // the clamp is flat outside its range
                    if clamp_prob(p) != p {
                        continue;
                    }
                    let dv = match label {
                        Label::Positive => -pos_weight / p,
                        Label::Negative => 1.0 / (1.0 - p),
                    };
                    d.set(r, 0, g.item() * dv);
                }
                accumulate(grads, *scores, d);
            }
            Op::Hinge {
                scores,
                labels,
                margin,
            } => {
                let h = self.value(*scores);
                let mut d = Tensor::zeros(h.rows(), 1);
                for (p, lp) in labels.iter().enumerate() {
                    if !lp.is_positive() {
                        continue;
                    }
                    for (n, ln) in labels.iter().enumerate() {
                        if ln.is_positive() {
                            continue;
                        }
                        if margin - (h.get(p, 0) - h.get(n, 0)) > 0.0 {
                            d.data_mut()[p] -= g.item();
                            d.data_mut()[n] += g.item();
                        }
                    }
                }
                accumulate(grads, *scores, d);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, d: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&d),
        slot @ None => *slot = Some(d),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::{grad_check, GradCheckConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rows: usize, cols: usize, seed: u64) -> Tensor {
        Tensor::uniform(rows, cols, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Gradient check of `sum(f(inputs) * R)` for a fixed random projection R.
    fn check_op(inputs: Vec<Tensor>, f: impl Fn(&mut Graph, &[Var]) -> Result<Var>) -> f64 {
        let mut store = ParamStore::new();
        let ids: Vec<_> = inputs
            .into_iter()
            .enumerate()
            .map(|(i, t)| store.add(format!("x{i}"), t))
            .collect();
        let report = grad_check(
            &mut store,
            |s| {
                let mut g = Graph::new();
                let vars: Vec<Var> = ids.iter().map(|&id| g.param(s, id)).collect();
                let y = f(&mut g, &vars)?;
                let shape = g.value(y).shape();
                let r = g.leaf(rand_tensor(shape[0], shape[1], 99));
                let prod = g.mul(y, r)?;
                let out = g.sum_all(prod);
                let grads = g.backward(out)?;
                Ok((g.value(out).item(), g.param_grads(&grads, s)))
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        report.max_rel_error
    }

    const TOL: f64 = 1e-4;

    #[test]
    fn primitive_gradients_match_finite_differences() {
        let a = || rand_tensor(3, 4, 1);
        let b = || rand_tensor(3, 4, 2);
        let cases: Vec<(&str, f64)> = vec![
            (
                "matmul",
                check_op(vec![a(), rand_tensor(4, 2, 3)], |g, v| g.matmul(v[0], v[1])),
            ),
            ("add", check_op(vec![a(), b()], |g, v| g.add(v[0], v[1]))),
            ("sub", check_op(vec![a(), b()], |g, v| g.sub(v[0], v[1]))),
            ("mul", check_op(vec![a(), b()], |g, v| g.mul(v[0], v[1]))),
            (
                "add_row",
                check_op(vec![a(), rand_tensor(1, 4, 5)], |g, v| {
                    g.add_row(v[0], v[1])
                }),
            ),
            ("sigmoid", check_op(vec![a()], |g, v| Ok(g.sigmoid(v[0])))),
            ("tanh", check_op(vec![a()], |g, v| Ok(g.tanh(v[0])))),
            (
                "slice",
                check_op(vec![a()], |g, v| g.slice_cols(v[0], 1, 2)),
            ),
            (
                "concat_cols",
                check_op(vec![a(), rand_tensor(3, 2, 6)], |g, v| {
                    g.concat_cols(&[v[0], v[1], v[0]])
                }),
            ),
            (
                "concat_rows",
                check_op(vec![a(), b()], |g, v| g.concat_rows(&[v[1], v[0]], 4)),
            ),
            (
                "gather",
                check_op(vec![a()], |g, v| g.gather_rows(v[0], &[2, 0, 2])),
            ),
            (
                "softmax",
                check_op(vec![a()], |g, v| Ok(g.softmax_rows(v[0]))),
            ),
        ];
        for (name, err) in cases {
            assert!(err < TOL, "{name}: rel error {err}");
        }
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let labels = [
            Label::Positive,
            Label::Negative,
            Label::Negative,
            Label::Positive,
        ];
        let err = check_op(vec![rand_tensor(4, 1, 7)], |g, v| {
            let h = g.sigmoid(v[0]);
            g.weighted_cross_entropy(h, &labels, 10.0)
        });
        assert!(err < TOL, "bce {err}");
        let err = check_op(vec![rand_tensor(4, 1, 8)], |g, v| {
            let h = g.sigmoid(v[0]);
            g.hinge(h, &labels, 0.7)
        });
        assert!(err < TOL, "hinge {err}");
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut g = Graph::new();
        let x = g.leaf(rand_tensor(5, 3, 11).map(|v| v * 40.0));
        let y = g.softmax_rows(x);
        for r in 0..5 {
            let s: f64 = g.value(y).row(r).iter().sum();
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn shape_errors() {
        let mut g = Graph::new();
        let a = g.leaf(Tensor::zeros(2, 3));
        let b = g.leaf(Tensor::zeros(2, 2));
        assert!(g.matmul(a, a).is_err());
        assert!(g.add(a, b).is_err());
        assert!(g.slice_cols(a, 2, 2).is_err());
        assert!(g.gather_rows(a, &[2]).is_err());
        assert!(g.backward(a).is_err());
    }

    #[test]
    fn shared_param_binds_once() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::scalar(3.0));
        let mut g = Graph::new();
        let a = g.param(&store, id);
        let b = g.param(&store, id);
        assert_eq!(a, b);
        let y = g.mul(a, b).unwrap();
        let grads = g.backward(y).unwrap();
        assert_eq!(g.param_grads(&grads, &store)[0].item(), 6.0);
    }
}
