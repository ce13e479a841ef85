use crate::params::{ParamId, ParamSet};
use crate::tensor::{compensated_sum, Tensor};
use crate::{NnError, Result};

/// Handle to a node recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Minimum(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MulConst(Var, Tensor),
    AddConst(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Ln(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    MulCol(Var, Var),
    RowDot(Var, Var),
    SumAll(Var),
    SumRows(Var),
    GatherCols(Var, Vec<usize>),
    GatherRows(Var, Vec<Option<usize>>),
    WeightedSlots(Vec<Var>, Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Tape of recorded operations.
///
/// Shape errors inside individual operations are programming errors and
/// panic; the layer types in [`crate::layers`] validate user-facing widths
/// and return [`NnError::ShapeMismatch`] instead.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<(ParamId, Var)>,
}

/// Gradients of a scalar loss with respect to every recorded node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    pub fn of(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient for a registered parameter; `None` if the parameter was not
    /// part of the graph or does not influence the loss.
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|(_, v)| self.of(*v))
    }

    /// Gradients for all parameters of `set`, zero-filled where absent.
    pub fn param_grads(&self, set: &ParamSet) -> Vec<Tensor> {
        set.ids()
            .map(|id| {
                self.param(id).cloned().unwrap_or_else(|| {
                    let t = set.get(id);
                    Tensor::zeros(t.rows(), t.cols())
                })
            })
            .collect()
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant input.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input)
    }

    /// Registers a parameter; repeated calls for the same id return the same
    /// node so gradients accumulate in one place.
    pub fn param(&mut self, set: &ParamSet, id: ParamId) -> Var {
        if let Some((_, v)) = self.params.iter().find(|(p, _)| *p == id) {
            return *v;
        }
        let v = self.push(set.get(id).clone(), Op::Param);
        self.params.push((id, v));
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    /// Adds a 1xC row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(row));
        assert_eq!(bv.rows(), 1, "add_row expects a single row");
        assert_eq!(av.cols(), bv.cols(), "add_row width");
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(a, row))
    }

    fn zip_with(&self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "{name}: shape mismatch");
        Tensor::from_vec(
            av.rows(),
            av.cols(),
            av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect(),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, "add", |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, "sub", |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, "mul", |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, "div", |x, y| x / y);
        self.push(v, Op::Div(a, b))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_with(a, b, "minimum", f64::min);
        self.push(v, Op::Minimum(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x + s);
        self.push(v, Op::AddScalar(a))
    }

    /// Elementwise product with a constant tensor of the same shape.
    pub fn mul_const(&mut self, a: Var, c: Tensor) -> Var {
        let av = self.value(a);
        assert_eq!(av.shape(), c.shape(), "mul_const shape");
        let v = Tensor::from_vec(
            av.rows(),
            av.cols(),
            av.data().iter().zip(c.data()).map(|(x, y)| x * y).collect(),
        );
        self.push(v, Op::MulConst(a, c))
    }

    pub fn add_const(&mut self, a: Var, c: &Tensor) -> Var {
        let av = self.value(a);
        assert_eq!(av.shape(), c.shape(), "add_const shape");
        let mut v = av.clone();
        v.add_assign(c);
        self.push(v, Op::AddConst(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    /// Natural logarithm.
    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::ln);
        self.push(v, Op::Ln(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    /// Clamp into `[lo, hi]`; the gradient passes where `lo <= x <= hi`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a, lo, hi))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let v = softmax_rows(self.value(a));
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut out = av.clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + compensated_sum(row.iter().map(|x| (x - max).exp())).ln();
            for x in row.iter_mut() {
                *x -= lse;
            }
        }
        self.push(out, Op::LogSoftmaxRows(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for p in parts {
                let pv = self.value(*p);
                assert_eq!(pv.rows(), rows, "concat_cols row count");
                out.row_mut(r)[off..off + pv.cols()].copy_from_slice(pv.row(r));
                off += pv.cols();
            }
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let av = self.value(a);
        assert!(start + len <= av.cols(), "slice_cols out of range");
        let mut out = Tensor::zeros(av.rows(), len);
        for r in 0..av.rows() {
            out.row_mut(r).copy_from_slice(&av.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols(a, start))
    }

    /// Scales each row of `a` (RxC) by the matching entry of `w` (Rx1).
    pub fn mul_col(&mut self, a: Var, w: Var) -> Var {
        let (av, wv) = (self.value(a), self.value(w));
        assert_eq!(wv.cols(), 1, "mul_col weight must be a column");
        assert_eq!(av.rows(), wv.rows(), "mul_col rows");
        let mut out = av.clone();
        for r in 0..out.rows() {
            let s = wv.get(r, 0);
            for x in out.row_mut(r) {
                *x *= s;
            }
        }
        self.push(out, Op::MulCol(a, w))
    }

    /// Per-row dot product, producing an Rx1 column.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "row_dot shape");
        let mut out = Tensor::zeros(av.rows(), 1);
        for r in 0..av.rows() {
            out.set(r, 0, av.row(r).iter().zip(bv.row(r)).map(|(x, y)| x * y).sum());
        }
        self.push(out, Op::RowDot(a, b))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = compensated_sum(self.value(a).data().iter().copied());
        self.push(Tensor::scalar(v), Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// Row sums as an Rx1 column.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let mut out = Tensor::zeros(av.rows(), 1);
        for r in 0..av.rows() {
            out.set(r, 0, compensated_sum(av.row(r).iter().copied()));
        }
        self.push(out, Op::SumRows(a))
    }

    /// Picks column `idx[r]` from each row `r`, producing an Rx1 column.
    pub fn gather_cols(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let av = self.value(a);
        assert_eq!(av.rows(), idx.len(), "gather_cols index count");
        let mut out = Tensor::zeros(av.rows(), 1);
        for (r, &c) in idx.iter().enumerate() {
            out.set(r, 0, av.get(r, c));
        }
        self.push(out, Op::GatherCols(a, idx))
    }

    /// Builds a new matrix from rows of `a`; `None` yields a zero row.
    pub fn gather_rows(&mut self, a: Var, idx: Vec<Option<usize>>) -> Var {
        let av = self.value(a);
        let mut out = Tensor::zeros(idx.len(), av.cols());
        for (r, src) in idx.iter().enumerate() {
            if let Some(s) = src {
                out.row_mut(r).copy_from_slice(av.row(*s));
            }
        }
        self.push(out, Op::GatherRows(a, idx))
    }

    /// `sum_m weights[:, m] * slots[m]` with compensated summation over `m`,
    /// so the result does not depend on slot order beyond final rounding.
    pub fn weighted_slots(&mut self, slots: &[Var], weights: Var) -> Var {
        let wv = self.value(weights);
        assert_eq!(wv.cols(), slots.len(), "weighted_slots weight width");
        assert!(!slots.is_empty(), "weighted_slots needs at least one slot");
        let (rows, cols) = self.value(slots[0]).shape();
        let mut out = Tensor::zeros(rows, cols);
        let mut terms = Vec::with_capacity(slots.len());
        for r in 0..rows {
            for c in 0..cols {
                terms.clear();
                for (m, s) in slots.iter().enumerate() {
                    terms.push(wv.get(r, m) * self.value(*s).get(r, c));
                }
                out.set(r, c, compensated_sum(terms.iter().copied()));
            }
        }
        self.push(out, Op::WeightedSlots(slots.to_vec(), weights))
    }

    /// Reverse pass from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let node = self.nodes.get(loss.0).ok_or(NnError::NoForward)?;
        if node.value.shape() != (1, 1) {
            return Err(NnError::NonScalarLoss {
                rows: node.value.rows(),
                cols: node.value.cols(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            params: self.params.clone(),
        })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        fn acc(grads: &mut [Option<Tensor>], v: Var, t: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        }
        let val = |v: Var| &self.nodes[v.0].value;
        let y = &node.value;
        match &node.op {
            Op::Input | Op::Param => {}
            Op::MatMul(a, b) => {
                acc(grads, *a, g.matmul_t(val(*b)));
                acc(grads, *b, val(*a).t_matmul(g));
            }
            Op::AddRow(a, row) => {
                acc(grads, *a, g.clone());
                let mut gb = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, x) in gb.data_mut().iter_mut().zip(g.row(r)) {
                        *o += x;
                    }
                }
                acc(grads, *row, gb);
            }
            Op::Add(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(grads, *a, g.clone());
                acc(grads, *b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                acc(grads, *a, elementwise(g, val(*b), |g, b| g * b));
                acc(grads, *b, elementwise(g, val(*a), |g, a| g * a));
            }
            Op::Div(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                acc(grads, *a, elementwise(g, bv, |g, b| g / b));
                let gb = Tensor::from_vec(
                    g.rows(),
                    g.cols(),
                    g.data()
                        .iter()
                        .zip(av.data())
                        .zip(bv.data())
                        .map(|((g, a), b)| -g * a / (b * b))
                        .collect(),
                );
                acc(grads, *b, gb);
            }
            Op::Minimum(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let mut ga = Tensor::zeros(g.rows(), g.cols());
                let mut gb = Tensor::zeros(g.rows(), g.cols());
                for k in 0..g.len() {
                    if av.data()[k] <= bv.data()[k] {
                        ga.data_mut()[k] = g.data()[k];
                    } else {
                        gb.data_mut()[k] = g.data()[k];
                    }
                }
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::Scale(a, s) => acc(grads, *a, g.map(|x| x * s)),
            Op::AddScalar(a) | Op::AddConst(a) => acc(grads, *a, g.clone()),
            Op::MulConst(a, c) => acc(grads, *a, elementwise(g, c, |g, c| g * c)),
            Op::Tanh(a) => acc(grads, *a, elementwise(g, y, |g, y| g * (1.0 - y * y))),
            Op::Relu(a) => acc(
                grads,
                *a,
                elementwise(g, val(*a), |g, x| if x > 0.0 { g } else { 0.0 }),
            ),
            Op::Exp(a) => acc(grads, *a, elementwise(g, y, |g, y| g * y)),
            Op::Ln(a) => acc(grads, *a, elementwise(g, val(*a), |g, x| g / x)),
            Op::Square(a) => acc(grads, *a, elementwise(g, val(*a), |g, x| 2.0 * g * x)),
            Op::Clamp(a, lo, hi) => acc(
                grads,
                *a,
                elementwise(g, val(*a), |g, x| if x >= *lo && x <= *hi { g } else { 0.0 }),
            ),
            Op::SoftmaxRows(a) => {
                let mut ga = Tensor::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let (gr, yr) = (g.row(r), y.row(r));
                    let dot: f64 = gr.iter().zip(yr).map(|(g, y)| g * y).sum();
                    for (o, (g, y)) in ga.row_mut(r).iter_mut().zip(gr.iter().zip(yr)) {
                        *o = y * (g - dot);
                    }
                }
                acc(grads, *a, ga);
            }
            Op::LogSoftmaxRows(a) => {
                let mut ga = Tensor::zeros(g.rows(), g.cols());
                for r in 0..g.rows() {
                    let (gr, yr) = (g.row(r), y.row(r));
                    let total: f64 = gr.iter().sum();
                    for (o, (g, y)) in ga.row_mut(r).iter_mut().zip(gr.iter().zip(yr)) {
                        *o = g - y.exp() * total;
                    }
                }
                acc(grads, *a, ga);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for p in parts {
                    let w = val(*p).cols();
                    let mut gp = Tensor::zeros(g.rows(), w);
                    for r in 0..g.rows() {
                        gp.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                    }
                    acc(grads, *p, gp);
                    off += w;
                }
            }
            Op::SliceCols(a, start) => {
                let av = val(*a);
                let mut ga = Tensor::zeros(av.rows(), av.cols());
                for r in 0..g.rows() {
                    ga.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                acc(grads, *a, ga);
            }
            Op::MulCol(a, w) => {
                let (av, wv) = (val(*a), val(*w));
                let mut ga = g.clone();
                let mut gw = Tensor::zeros(wv.rows(), 1);
                for r in 0..g.rows() {
                    let s = wv.get(r, 0);
                    gw.set(r, 0, g.row(r).iter().zip(av.row(r)).map(|(g, a)| g * a).sum());
                    for x in ga.row_mut(r) {
                        *x *= s;
                    }
                }
                acc(grads, *a, ga);
                acc(grads, *w, gw);
            }
            Op::RowDot(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let mut ga = bv.clone();
                let mut gb = av.clone();
                for r in 0..g.rows() {
                    let s = g.get(r, 0);
                    ga.row_mut(r).iter_mut().for_each(|x| *x *= s);
                    gb.row_mut(r).iter_mut().for_each(|x| *x *= s);
                }
                acc(grads, *a, ga);
                acc(grads, *b, gb);
            }
            Op::SumAll(a) => {
                let av = val(*a);
                acc(grads, *a, Tensor::filled(av.rows(), av.cols(), g.item()));
            }
            Op::SumRows(a) => {
                let av = val(*a);
                let mut ga = Tensor::zeros(av.rows(), av.cols());
                for r in 0..av.rows() {
                    let s = g.get(r, 0);
                    ga.row_mut(r).iter_mut().for_each(|x| *x = s);
                }
                acc(grads, *a, ga);
            }
            Op::GatherCols(a, idx) => {
                let av = val(*a);
                let mut ga = Tensor::zeros(av.rows(), av.cols());
                for (r, &c) in idx.iter().enumerate() {
                    ga.set(r, c, g.get(r, 0));
                }
                acc(grads, *a, ga);
            }
            Op::GatherRows(a, idx) => {
                let av = val(*a);
                let mut ga = Tensor::zeros(av.rows(), av.cols());
                for (r, src) in idx.iter().enumerate() {
                    if let Some(s) = src {
                        for (o, x) in ga.row_mut(*s).iter_mut().zip(g.row(r)) {
                            *o += x;
                        }
                    }
                }
                acc(grads, *a, ga);
            }
            Op::WeightedSlots(slots, weights) => {
                let wv = val(*weights);
                let mut gw = Tensor::zeros(wv.rows(), wv.cols());
                for (m, s) in slots.iter().enumerate() {
                    let sv = val(*s);
                    let mut gs = Tensor::zeros(sv.rows(), sv.cols());
                    for r in 0..g.rows() {
                        let w = wv.get(r, m);
                        let mut dot = 0.0;
                        for ((o, gx), x) in gs.row_mut(r).iter_mut().zip(g.row(r)).zip(sv.row(r)) {
                            *o = gx * w;
                            dot += gx * x;
                        }
                        gw.set(r, m, dot);
                    }
                    acc(grads, *s, gs);
                }
                acc(grads, *weights, gw);
            }
        }
    }
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::from_vec(
        a.rows(),
        a.cols(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
}

pub(crate) fn softmax_rows(a: &Tensor) -> Tensor {
    let mut out = a.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for x in row.iter_mut() {
            *x = (*x - max).exp();
        }
        let total = compensated_sum(row.iter().copied());
        for x in row.iter_mut() {
            *x /= total;
        }
    }
    out
}
