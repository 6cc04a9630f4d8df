//! Reverse-mode automatic differentiation over a recording tape.
//!
//! Ops append nodes to the tape, so the node list is already topologically
//! ordered; `backward` walks it once in reverse accumulating adjoints.
//! A [`Var`] is a cheap handle (tape pointer + node id) and ops on it
//! return `Result` so shape mismatches surface as typed errors.

use std::cell::RefCell;
use std::rc::Rc;

use super::{Tensor, TensorError};

#[derive(Debug)]
enum Op {
    Leaf,
    Matmul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    Shift(usize),
    ConcatCols(usize, usize),
    SliceCols(usize, usize, usize),
    Sum(usize),
    SumRows(usize),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    Exp(usize),
    Log(usize),
    LogSoftmax(usize),
    GatherRows(usize, Vec<usize>),
    Clamp(usize, f64, f64),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
struct Inner {
    nodes: Vec<Node>,
}

/// A recording tape. Clone handles freely; they share the same recording.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    inner: Rc<RefCell<Inner>>,
}

/// A handle to a tensor recorded on a tape.
#[derive(Debug, Clone)]
pub struct Var {
    tape: Tape,
    id: usize,
    rows: usize,
    cols: usize,
}

/// Gradients keyed by tape node, produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to a var, zero if the var did not
    /// influence the loss.
    pub fn get(&self, var: &Var) -> Tensor {
        self.grads[var.id]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(var.rows, var.cols))
    }

    /// True when the var received no gradient at all (detached branch).
    pub fn is_zero(&self, var: &Var) -> bool {
        match &self.grads[var.id] {
            None => true,
            Some(g) => g.data().iter().all(|&v| v == 0.0),
        }
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records an input tensor. Leaves receive gradients in `backward`.
    pub fn leaf(&self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Records a scalar constant.
    pub fn scalar(&self, value: f64) -> Var {
        self.leaf(Tensor::scalar(value))
    }

    fn push(&self, value: Tensor, op: Op) -> Var {
        value.assert_finite(op_name(&op));
        let (rows, cols) = value.shape();
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(Node { value, op });
        Var {
            tape: self.clone(),
            id: inner.nodes.len() - 1,
            rows,
            cols,
        }
    }

    fn value_of(&self, id: usize) -> Tensor {
        self.inner.borrow().nodes[id].value.clone()
    }

    /// Accumulates gradients for every node reachable from the scalar loss
    /// and clears the recording. The tape handle stays reusable for a new
    /// forward pass afterwards.
    pub fn backward(&self, loss: &Var) -> Result<Gradients, TensorError> {
        if (loss.rows, loss.cols) != (1, 1) {
            return Err(TensorError::NonScalarLoss {
                shape: (loss.rows, loss.cols),
            });
        }
        let mut inner = self.inner.borrow_mut();
        let nodes = std::mem::take(&mut inner.nodes);
        drop(inner);

        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Tensor::scalar(1.0));

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            match &node.op {
                Op::Leaf => {}
                Op::Matmul(a, b) => {
                    let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
                    accumulate(&mut grads, *a, g.matmul_raw(&vb.transpose()));
                    accumulate(&mut grads, *b, va.transpose().matmul_raw(&g));
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.map(|v| -v));
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
                    accumulate(&mut grads, *a, g.zip(vb, |x, y| x * y));
                    accumulate(&mut grads, *b, g.zip(va, |x, y| x * y));
                }
                Op::AddRow(a, b) => {
                    let mut row = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            row.data_mut()[c] += g.get(r, c);
                        }
                    }
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, row);
                }
                Op::Scale(a, k) => accumulate(&mut grads, *a, g.map(|v| v * k)),
                Op::Shift(a) => accumulate(&mut grads, *a, g.clone()),
                Op::ConcatCols(a, b) => {
                    let na = nodes[*a].value.cols();
                    let (mut ga, mut gb) = (
                        Tensor::zeros(g.rows(), na),
                        Tensor::zeros(g.rows(), g.cols() - na),
                    );
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            if c < na {
                                ga.set(r, c, g.get(r, c));
                            } else {
                                gb.set(r, c - na, g.get(r, c));
                            }
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::SliceCols(a, start, _end) => {
                    let va = &nodes[*a].value;
                    let mut ga = Tensor::zeros(va.rows(), va.cols());
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            ga.set(r, start + c, g.get(r, c));
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let va = &nodes[*a].value;
                    let fill = g.item();
                    accumulate(&mut grads, *a, va.map(|_| fill));
                }
                Op::SumRows(a) => {
                    let va = &nodes[*a].value;
                    let mut ga = Tensor::zeros(va.rows(), va.cols());
                    for r in 0..va.rows() {
                        for c in 0..va.cols() {
                            ga.set(r, c, g.get(0, c));
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    accumulate(&mut grads, *a, g.zip(y, |gv, yv| gv * yv * (1.0 - yv)));
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    accumulate(&mut grads, *a, g.zip(y, |gv, yv| gv * (1.0 - yv * yv)));
                }
                Op::Relu(a) => {
                    let x = &nodes[*a].value;
                    accumulate(&mut grads, *a, g.zip(x, |gv, xv| if xv > 0.0 { gv } else { 0.0 }));
                }
                Op::Exp(a) => {
                    let y = &node.value;
                    accumulate(&mut grads, *a, g.zip(y, |gv, yv| gv * yv));
                }
                Op::Log(a) => {
                    let x = &nodes[*a].value;
                    accumulate(&mut grads, *a, g.zip(x, |gv, xv| gv / xv));
                }
                Op::LogSoftmax(a) => {
                    // dx = g - softmax * rowsum(g)
                    let y = &node.value;
                    let mut ga = Tensor::zeros(g.rows(), g.cols());
                    for r in 0..g.rows() {
                        let row_sum: f64 = (0..g.cols()).map(|c| g.get(r, c)).sum();
                        for c in 0..g.cols() {
                            let soft = y.get(r, c).exp();
                            ga.set(r, c, g.get(r, c) - soft * row_sum);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::GatherRows(a, idx) => {
                    let va = &nodes[*a].value;
                    let mut ga = Tensor::zeros(va.rows(), va.cols());
                    for (out_r, &src_r) in idx.iter().enumerate() {
                        for c in 0..g.cols() {
                            let cur = ga.get(src_r, c);
                            ga.set(src_r, c, cur + g.get(out_r, c));
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Clamp(a, lo, hi) => {
                    let x = &nodes[*a].value;
                    accumulate(
                        &mut grads,
                        *a,
                        g.zip(x, |gv, xv| if xv >= *lo && xv <= *hi { gv } else { 0.0 }),
                    );
                }
            }
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: usize, delta: Tensor) {
    match &mut grads[id] {
        Some(g) => g.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Matmul(..) => "matmul",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::AddRow(..) => "add_row",
        Op::Scale(..) => "scale",
        Op::Shift(..) => "shift",
        Op::ConcatCols(..) => "concat_cols",
        Op::SliceCols(..) => "slice_cols",
        Op::Sum(..) => "sum",
        Op::SumRows(..) => "sum_rows",
        Op::Sigmoid(..) => "sigmoid",
        Op::Tanh(..) => "tanh",
        Op::Relu(..) => "relu",
        Op::Exp(..) => "exp",
        Op::Log(..) => "log",
        Op::LogSoftmax(..) => "log_softmax",
        Op::GatherRows(..) => "gather_rows",
        Op::Clamp(..) => "clamp",
    }
}

impl Var {
    /// The tape this var is recorded on.
    pub fn tape(&self) -> Tape {
        self.tape.clone()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// The forward value (cloned out of the tape).
    pub fn value(&self) -> Tensor {
        self.tape.value_of(self.id)
    }

    /// Scalar forward value.
    pub fn item(&self) -> f64 {
        self.value().item()
    }

    /// Re-enters the value as a fresh leaf: gradients stop here.
    pub fn detach(&self) -> Var {
        self.tape.leaf(self.value())
    }

    fn mismatch(&self, op: &'static str, other: &Var) -> TensorError {
        TensorError::ShapeMismatch {
            op,
            lhs: self.shape(),
            rhs: other.shape(),
        }
    }

    pub fn matmul(&self, other: &Var) -> Result<Var, TensorError> {
        if self.cols != other.rows {
            return Err(self.mismatch("matmul", other));
        }
        let value = self.value().matmul_raw(&other.value());
        Ok(self.tape.push(value, Op::Matmul(self.id, other.id)))
    }

    pub fn add(&self, other: &Var) -> Result<Var, TensorError> {
        if self.shape() != other.shape() {
            return Err(self.mismatch("add", other));
        }
        let value = self.value().zip(&other.value(), |a, b| a + b);
        Ok(self.tape.push(value, Op::Add(self.id, other.id)))
    }

    pub fn sub(&self, other: &Var) -> Result<Var, TensorError> {
        if self.shape() != other.shape() {
            return Err(self.mismatch("sub", other));
        }
        let value = self.value().zip(&other.value(), |a, b| a - b);
        Ok(self.tape.push(value, Op::Sub(self.id, other.id)))
    }

    pub fn mul(&self, other: &Var) -> Result<Var, TensorError> {
        if self.shape() != other.shape() {
            return Err(self.mismatch("mul", other));
        }
        let value = self.value().zip(&other.value(), |a, b| a * b);
        Ok(self.tape.push(value, Op::Mul(self.id, other.id)))
    }

    /// Broadcasts a 1xn row over every row of an mxn tensor.
    pub fn add_row(&self, row: &Var) -> Result<Var, TensorError> {
        if row.rows != 1 || row.cols != self.cols {
            return Err(self.mismatch("add_row", row));
        }
        let (a, b) = (self.value(), row.value());
        let mut out = Tensor::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(r, c, a.get(r, c) + b.get(0, c));
            }
        }
        Ok(self.tape.push(out, Op::AddRow(self.id, row.id)))
    }

    pub fn scale(&self, k: f64) -> Var {
        let value = self.value().map(|v| v * k);
        self.tape.push(value, Op::Scale(self.id, k))
    }

    pub fn shift(&self, k: f64) -> Var {
        let value = self.value().map(|v| v + k);
        self.tape.push(value, Op::Shift(self.id))
    }

    pub fn neg(&self) -> Var {
        self.scale(-1.0)
    }

    pub fn concat_cols(&self, other: &Var) -> Result<Var, TensorError> {
        if self.rows != other.rows {
            return Err(self.mismatch("concat_cols", other));
        }
        let (a, b) = (self.value(), other.value());
        let mut out = Tensor::zeros(self.rows, self.cols + other.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(r, c, a.get(r, c));
            }
            for c in 0..other.cols {
                out.set(r, self.cols + c, b.get(r, c));
            }
        }
        Ok(self.tape.push(out, Op::ConcatCols(self.id, other.id)))
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Var, TensorError> {
        if start >= end || end > self.cols {
            return Err(TensorError::ShapeMismatch {
                op: "slice_cols",
                lhs: self.shape(),
                rhs: (start, end),
            });
        }
        let a = self.value();
        let mut out = Tensor::zeros(self.rows, end - start);
        for r in 0..self.rows {
            for c in start..end {
                out.set(r, c - start, a.get(r, c));
            }
        }
        Ok(self.tape.push(out, Op::SliceCols(self.id, start, end)))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&self) -> Var {
        let total: f64 = self.value().data().iter().sum();
        self.tape.push(Tensor::scalar(total), Op::Sum(self.id))
    }

    /// Column-wise sum collapsing all rows into one: mxn -> 1xn.
    pub fn sum_rows(&self) -> Var {
        let a = self.value();
        let mut out = Tensor::zeros(1, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data_mut()[c] += a.get(r, c);
            }
        }
        self.tape.push(out, Op::SumRows(self.id))
    }

    pub fn sigmoid(&self) -> Var {
        let value = self.value().map(|v| 1.0 / (1.0 + (-v).exp()));
        self.tape.push(value, Op::Sigmoid(self.id))
    }

    pub fn tanh(&self) -> Var {
        let value = self.value().map(f64::tanh);
        self.tape.push(value, Op::Tanh(self.id))
    }

    pub fn relu(&self) -> Var {
        let value = self.value().map(|v| v.max(0.0));
        self.tape.push(value, Op::Relu(self.id))
    }

    pub fn exp(&self) -> Var {
        let value = self.value().map(f64::exp);
        self.tape.push(value, Op::Exp(self.id))
    }

    /// Natural log; entries must be strictly positive.
    pub fn log(&self) -> Var {
        let value = self.value().map(f64::ln);
        self.tape.push(value, Op::Log(self.id))
    }

    /// Row-wise log-softmax, stabilized by the row maximum.
    pub fn log_softmax(&self) -> Var {
        let a = self.value();
        let mut out = Tensor::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let max = (0..self.cols)
                .map(|c| a.get(r, c))
                .fold(f64::NEG_INFINITY, f64::max);
            let lse = (0..self.cols)
                .map(|c| (a.get(r, c) - max).exp())
                .sum::<f64>()
                .ln()
                + max;
            for c in 0..self.cols {
                out.set(r, c, a.get(r, c) - lse);
            }
        }
        self.tape.push(out, Op::LogSoftmax(self.id))
    }

    /// Selects rows by index (repeats allowed); gradients scatter-add back.
    pub fn gather_rows(&self, idx: &[usize]) -> Result<Var, TensorError> {
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.rows) {
            return Err(TensorError::ShapeMismatch {
                op: "gather_rows",
                lhs: self.shape(),
                rhs: (bad, 0),
            });
        }
        let a = self.value();
        let mut out = Tensor::zeros(idx.len(), self.cols);
        for (r, &src) in idx.iter().enumerate() {
            for c in 0..self.cols {
                out.set(r, c, a.get(src, c));
            }
        }
        Ok(self
            .tape
            .push(out, Op::GatherRows(self.id, idx.to_vec())))
    }

    /// Clamps entries to [lo, hi]; gradient is zero outside the range.
    pub fn clamp(&self, lo: f64, hi: f64) -> Var {
        let value = self.value().map(|v| v.clamp(lo, hi));
        self.tape.push(value, Op::Clamp(self.id, lo, hi))
    }
}

/// Numeric gradient verification used by the test suites.
pub mod checks {
    use super::*;

    /// Central finite differences for a scalar function of leaf tensors.
    /// Returns the worst relative error between analytic and numeric
    /// gradients across all input entries.
    pub fn gradcheck<F>(inputs: &[Tensor], f: F) -> f64
    where
        F: Fn(&Tape, &[Var]) -> Var,
    {
        let h = 1e-5;
        let tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = f(&tape, &vars);
        let grads = tape.backward(&loss).expect("scalar loss");
        let analytic: Vec<Tensor> = vars.iter().map(|v| grads.get(v)).collect();

        let mut worst: f64 = 0.0;
        for (i, base) in inputs.iter().enumerate() {
            for slot in 0..base.len() {
                let eval = |delta: f64| -> f64 {
                    let mut bumped: Vec<Tensor> = inputs.to_vec();
                    bumped[i].data_mut()[slot] += delta;
                    let tape = Tape::new();
                    let vars: Vec<Var> = bumped.iter().map(|t| tape.leaf(t.clone())).collect();
                    f(&tape, &vars).item()
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let a = analytic[i].data()[slot];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
                worst = worst.max(rel);
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::checks::gradcheck;
    use super::*;

    #[test]
    fn matmul_example() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::from_vec(1, 2, vec![1.0, 2.0]));
        let b = tape.leaf(Tensor::from_vec(2, 1, vec![3.0, 4.0]));
        assert_eq!(a.matmul(&b).unwrap().item(), 11.0);
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let tape = Tape::new();
        assert_eq!(tape.scalar(0.0).sigmoid().item(), 0.5);
    }

    #[test]
    fn log_softmax_rows_normalize() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, -5.0, 0.0, 5.0]));
        let y = x.log_softmax().value();
        for r in 0..2 {
            let total: f64 = (0..3).map(|c| y.get(r, c).exp()).sum();
            assert!((total - 1.0).abs() < 1e-12, "row {r} sums to {total}");
        }
    }

    #[test]
    fn square_gradient_at_three_is_six() {
        let tape = Tape::new();
        let x = tape.scalar(3.0);
        let loss = x.mul(&x).unwrap();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.get(&x).item(), 6.0);
    }

    #[test]
    fn detached_branch_gets_zero_gradient() {
        let tape = Tape::new();
        let x = tape.scalar(2.0);
        let stopped = x.detach();
        let loss = stopped.mul(&stopped).unwrap().add(&x).unwrap();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.get(&x).item(), 1.0, "only the direct path counts");
        assert_eq!(grads.get(&stopped).item(), 4.0);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(1, 2, vec![1.0, 2.0]));
        assert!(matches!(
            tape.backward(&x),
            Err(TensorError::NonScalarLoss { shape: (1, 2) })
        ));
    }

    #[test]
    fn shape_mismatches_name_both_shapes() {
        let tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(2, 3));
        let b = tape.leaf(Tensor::zeros(2, 2));
        let err = a.add(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(2, 3)") && msg.contains("(2, 2)"), "{msg}");
    }

    #[test]
    fn every_primitive_passes_finite_difference_check() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1234);
        let mut t = |r, c| Tensor::randn(r, c, 1.0, &mut rng);

        let cases: Vec<(&str, Vec<Tensor>, Box<dyn Fn(&Tape, &[Var]) -> Var>)> = vec![
            (
                "matmul",
                vec![t(3, 4), t(4, 2)],
                Box::new(|_, v| v[0].matmul(&v[1]).unwrap().sum()),
            ),
            (
                "add",
                vec![t(2, 3), t(2, 3)],
                Box::new(|_, v| v[0].add(&v[1]).unwrap().mul(&v[0].add(&v[1]).unwrap()).unwrap().sum()),
            ),
            (
                "sub_mul",
                vec![t(2, 3), t(2, 3)],
                Box::new(|_, v| v[0].sub(&v[1]).unwrap().mul(&v[0]).unwrap().sum()),
            ),
            (
                "add_row",
                vec![t(3, 4), t(1, 4)],
                Box::new(|_, v| {
                    let y = v[0].add_row(&v[1]).unwrap();
                    y.mul(&y).unwrap().sum()
                }),
            ),
            (
                "scale_shift",
                vec![t(2, 2)],
                Box::new(|_, v| {
                    let y = v[0].scale(1.7).shift(0.3);
                    y.mul(&y).unwrap().sum()
                }),
            ),
            (
                "concat_slice",
                vec![t(2, 3), t(2, 2)],
                Box::new(|_, v| {
                    let joined = v[0].concat_cols(&v[1]).unwrap();
                    let left = joined.slice_cols(1, 4).unwrap();
                    left.mul(&left).unwrap().sum()
                }),
            ),
            (
                "sum_rows",
                vec![t(4, 3)],
                Box::new(|_, v| {
                    let y = v[0].sum_rows();
                    y.mul(&y).unwrap().sum()
                }),
            ),
            ("sigmoid", vec![t(2, 3)], Box::new(|_, v| v[0].sigmoid().sum())),
            ("tanh", vec![t(2, 3)], Box::new(|_, v| v[0].tanh().sum())),
            (
                "relu",
                // keep entries away from the kink at zero
                vec![Tensor::from_vec(1, 4, vec![-1.3, 0.7, 2.1, -0.4])],
                Box::new(|_, v| {
                    let y = v[0].relu();
                    y.mul(&y).unwrap().sum()
                }),
            ),
            ("exp", vec![t(2, 2)], Box::new(|_, v| v[0].exp().sum())),
            (
                "log",
                vec![Tensor::from_vec(1, 3, vec![0.5, 1.7, 3.2])],
                Box::new(|_, v| v[0].log().sum()),
            ),
            (
                "log_softmax",
                vec![t(2, 4), t(2, 4)],
                Box::new(|_, v| v[0].log_softmax().mul(&v[1]).unwrap().sum()),
            ),
            (
                "gather_rows",
                vec![t(4, 3)],
                Box::new(|_, v| {
                    let y = v[0].gather_rows(&[2, 0, 2, 3]).unwrap();
                    y.mul(&y).unwrap().sum()
                }),
            ),
            (
                "clamp",
                // keep entries away from the clamp boundaries
                vec![Tensor::from_vec(1, 4, vec![-3.0, -0.4, 0.8, 4.0])],
                Box::new(|_, v| {
                    let y = v[0].clamp(-1.5, 1.5);
                    y.mul(&y).unwrap().sum()
                }),
            ),
        ];

        for (name, inputs, f) in cases {
            let worst = gradcheck(&inputs, |tape, vars| f(tape, vars));
            assert!(worst < 1e-4, "{name}: worst relative error {worst}");
        }
    }

    #[test]
    fn gradients_accumulate_across_reuse() {
        // f = x * x + x  =>  f' = 2x + 1
        let tape = Tape::new();
        let x = tape.scalar(5.0);
        let loss = x.mul(&x).unwrap().add(&x).unwrap();
        let grads = tape.backward(&loss).unwrap();
        assert_eq!(grads.get(&x).item(), 11.0);
    }

    #[test]
    fn tape_is_reusable_after_backward() {
        let tape = Tape::new();
        let x = tape.scalar(2.0);
        let loss = x.mul(&x).unwrap();
        tape.backward(&loss).unwrap();
        assert!(tape.is_empty());
        let y = tape.scalar(4.0);
        let loss2 = y.mul(&y).unwrap();
        let grads = tape.backward(&loss2).unwrap();
        assert_eq!(grads.get(&y).item(), 8.0);
    }
}
