//! Reverse-mode autodiff over a flat tape of matrix operations.
//!
//! Forward calls record one node per operation; `backward` walks the tape in
//! reverse, accumulating gradients at every node (fan-out adds) and finally
//! into the [`ParamStore`] gradient buffers of every parameter leaf touched.

use super::store::ParamStore;
use super::tensor::Tensor2;
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(usize),
    MatMul(usize, usize),
    Add(usize, usize),
    /// matrix + row vector, broadcast over rows
    AddBias(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Relu(usize),
    Tanh(usize),
    Transpose(usize),
    SoftmaxRows(usize),
    LogSoftmaxRows(usize),
    /// column-wise max over rows -> 1 x c
    ColMax(usize),
    ConcatCols(usize, usize),
    SumAll(usize),
    Square(usize),
    /// single entry -> 1 x 1
    Pick(usize, usize, usize),
}

struct Node {
    op: Op,
    value: Tensor2,
}

/// A single forward recording. Build ops, then call [`Tape::backward`] once.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, op: Op, value: Tensor2) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.at(0, 0)
    }

    pub fn constant(&mut self, t: Tensor2) -> Var {
        self.push(Op::Constant, t)
    }

    /// Leaf bound to a named parameter; its value is copied from the store
    /// and gradients flow back into the store on `backward`.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var, NnError> {
        let slot = store.slot(name)?;
        Ok(self.push(Op::Param(slot), store.value_at(slot).clone()))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let value = self.nodes[a.0].value.matmul(&self.nodes[b.0].value)?;
        Ok(self.push(Op::MatMul(a.0, b.0), value))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.binary_same_shape(a, b, Op::Add(a.0, b.0), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.binary_same_shape(a, b, Op::Sub(a.0, b.0), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.binary_same_shape(a, b, Op::Mul(a.0, b.0), |x, y| x * y)
    }

    fn binary_same_shape(
        &mut self,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var, NnError> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if !ta.same_shape(tb) {
            return Err(NnError::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                ta.rows, ta.cols, tb.rows, tb.cols
            )));
        }
        let mut out = ta.clone();
        for (o, &v) in out.data_mut().iter_mut().zip(tb.data()) {
            *o = f(*o, v);
        }
        Ok(self.push(op, out))
    }

    /// `(r x c) + (1 x c)` bias broadcast over rows.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var, NnError> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[bias.0].value);
        if tb.rows != 1 || tb.cols != ta.cols {
            return Err(NnError::ShapeMismatch(format!(
                "bias 1x{} against {}x{}",
                tb.cols, ta.rows, ta.cols
            )));
        }
        let mut out = ta.clone();
        for r in 0..out.rows {
            for c in 0..out.cols {
                let v = out.at(r, c) + tb.at(0, c);
                out.set(r, c, v);
            }
        }
        Ok(self.push(Op::AddBias(a.0, bias.0), out))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.nodes[a.0].value.map(|v| v * factor);
        self.push(Op::Scale(a.0, factor), value)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.map(|v| v.max(0.0));
        self.push(Op::Relu(a.0), value)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.map(f64::tanh);
        self.push(Op::Tanh(a.0), value)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.transpose();
        self.push(Op::Transpose(a.0), value)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = &self.nodes[a.0].value;
        let mut out = x.clone();
        for r in 0..x.rows {
            let row: Vec<f64> = (0..x.cols).map(|c| x.at(r, c)).collect();
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            for c in 0..x.cols {
                out.set(r, c, exps[c] / sum);
            }
        }
        self.push(Op::SoftmaxRows(a.0), out)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let x = &self.nodes[a.0].value;
        let mut out = x.clone();
        for r in 0..x.rows {
            let row: Vec<f64> = (0..x.cols).map(|c| x.at(r, c)).collect();
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_sum = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
            for c in 0..x.cols {
                out.set(r, c, x.at(r, c) - log_sum);
            }
        }
        self.push(Op::LogSoftmaxRows(a.0), out)
    }

    /// Column-wise max over rows; the gradient routes to the first argmax.
    pub fn col_max(&mut self, a: Var) -> Result<Var, NnError> {
        let x = &self.nodes[a.0].value;
        if x.rows == 0 {
            return Err(NnError::EmptyGraph);
        }
        let mut out = Tensor2::zeros(1, x.cols);
        for c in 0..x.cols {
            let mut best = f64::NEG_INFINITY;
            for r in 0..x.rows {
                if x.at(r, c) > best {
                    best = x.at(r, c);
                }
            }
            out.set(0, c, best);
        }
        Ok(self.push(Op::ColMax(a.0), out))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.rows != tb.rows {
            return Err(NnError::ShapeMismatch(format!(
                "concat rows {} vs {}",
                ta.rows, tb.rows
            )));
        }
        let mut out = Tensor2::zeros(ta.rows, ta.cols + tb.cols);
        for r in 0..ta.rows {
            for c in 0..ta.cols {
                out.set(r, c, ta.at(r, c));
            }
            for c in 0..tb.cols {
                out.set(r, ta.cols + c, tb.at(r, c));
            }
        }
        Ok(self.push(Op::ConcatCols(a.0, b.0), out))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let total: f64 = self.nodes[a.0].value.data().iter().sum();
        self.push(
            Op::SumAll(a.0),
            Tensor2::from_vec(1, 1, vec![total]).unwrap(),
        )
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.map(|v| v * v);
        self.push(Op::Square(a.0), value)
    }

    pub fn pick(&mut self, a: Var, row: usize, col: usize) -> Result<Var, NnError> {
        let x = &self.nodes[a.0].value;
        if row >= x.rows || col >= x.cols {
            return Err(NnError::ShapeMismatch(format!(
                "pick ({row},{col}) from {}x{}",
                x.rows, x.cols
            )));
        }
        let v = x.at(row, col);
        Ok(self.push(
            Op::Pick(a.0, row, col),
            Tensor2::from_vec(1, 1, vec![v]).unwrap(),
        ))
    }

    /// `x * w + b` with bias broadcast.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
        let xw = self.matmul(x, w)?;
        self.add_bias(xw, b)
    }

    /// Accumulates `d(loss)/d(param)` into the store for every parameter
    /// leaf on the tape. `loss` must be a 1x1 node.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Result<(), NnError> {
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(NnError::GraphNotRecorded);
        }
        {
            let lt = &self.nodes[loss.0].value;
            if lt.rows != 1 || lt.cols != 1 {
                return Err(NnError::ShapeMismatch(format!(
                    "loss must be 1x1, got {}x{}",
                    lt.rows, lt.cols
                )));
            }
        }
        let mut grads: Vec<Option<Tensor2>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor2::from_vec(1, 1, vec![1.0]).unwrap());

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let op = self.nodes[idx].op.clone();
            match op {
                Op::Constant => {}
                Op::Param(slot) => store.accumulate_grad(slot, &g),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (&self.nodes[a].value, &self.nodes[b].value);
                    let da = g.matmul(&tb.transpose()).expect("shapes agree");
                    let db = ta.transpose().matmul(&g).expect("shapes agree");
                    add_grad(&mut grads, a, da);
                    add_grad(&mut grads, b, db);
                }
                Op::Add(a, b) => {
                    add_grad(&mut grads, a, g.clone());
                    add_grad(&mut grads, b, g);
                }
                Op::AddBias(a, b) => {
                    let mut db = Tensor2::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for c in 0..g.cols {
                            db.set(0, c, db.at(0, c) + g.at(r, c));
                        }
                    }
                    add_grad(&mut grads, a, g);
                    add_grad(&mut grads, b, db);
                }
                Op::Sub(a, b) => {
                    add_grad(&mut grads, a, g.clone());
                    add_grad(&mut grads, b, g.map(|v| -v));
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.nodes[a].value.clone(), self.nodes[b].value.clone());
                    let mut da = g.clone();
                    for (d, &v) in da.data_mut().iter_mut().zip(tb.data()) {
                        *d *= v;
                    }
                    let mut db = g;
                    for (d, &v) in db.data_mut().iter_mut().zip(ta.data()) {
                        *d *= v;
                    }
                    add_grad(&mut grads, a, da);
                    add_grad(&mut grads, b, db);
                }
                Op::Scale(a, factor) => add_grad(&mut grads, a, g.map(|v| v * factor)),
                Op::Relu(a) => {
                    let y = &self.nodes[idx].value;
                    let mut da = g;
                    for (d, &v) in da.data_mut().iter_mut().zip(y.data()) {
                        if v <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    add_grad(&mut grads, a, da);
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[idx].value;
                    let mut da = g;
                    for (d, &v) in da.data_mut().iter_mut().zip(y.data()) {
                        *d *= 1.0 - v * v;
                    }
                    add_grad(&mut grads, a, da);
                }
                Op::Transpose(a) => add_grad(&mut grads, a, g.transpose()),
                Op::SoftmaxRows(a) => {
                    let y = &self.nodes[idx].value;
                    let mut da = Tensor2::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let dot: f64 = (0..y.cols).map(|c| g.at(r, c) * y.at(r, c)).sum();
                        for c in 0..y.cols {
                            da.set(r, c, y.at(r, c) * (g.at(r, c) - dot));
                        }
                    }
                    add_grad(&mut grads, a, da);
                }
                Op::LogSoftmaxRows(a) => {
                    let y = &self.nodes[idx].value; // log-probabilities
                    let mut da = Tensor2::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let gsum: f64 = (0..y.cols).map(|c| g.at(r, c)).sum();
                        for c in 0..y.cols {
                            da.set(r, c, g.at(r, c) - y.at(r, c).exp() * gsum);
                        }
                    }
                    add_grad(&mut grads, a, da);
                }
                Op::ColMax(a) => {
                    let x = &self.nodes[a].value;
                    let y = &self.nodes[idx].value;
                    let mut da = Tensor2::zeros(x.rows, x.cols);
                    for c in 0..x.cols {
                        for r in 0..x.rows {
                            if x.at(r, c) == y.at(0, c) {
                                da.set(r, c, g.at(0, c));
                                break;
                            }
                        }
                    }
                    add_grad(&mut grads, a, da);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.nodes[a].value.cols;
                    let cb = self.nodes[b].value.cols;
                    let mut da = Tensor2::zeros(g.rows, ca);
                    let mut db = Tensor2::zeros(g.rows, cb);
                    for r in 0..g.rows {
                        for c in 0..ca {
                            da.set(r, c, g.at(r, c));
                        }
                        for c in 0..cb {
                            db.set(r, c, g.at(r, ca + c));
                        }
                    }
                    add_grad(&mut grads, a, da);
                    add_grad(&mut grads, b, db);
                }
                Op::SumAll(a) => {
                    let x = &self.nodes[a].value;
                    let s = g.at(0, 0);
                    add_grad(&mut grads, a, Tensor2::zeros(x.rows, x.cols).map(|_| s));
                }
                Op::Square(a) => {
                    let x = &self.nodes[a].value;
                    let mut da = g;
                    for (d, &v) in da.data_mut().iter_mut().zip(x.data()) {
                        *d *= 2.0 * v;
                    }
                    add_grad(&mut grads, a, da);
                }
                Op::Pick(a, row, col) => {
                    let x = &self.nodes[a].value;
                    let mut da = Tensor2::zeros(x.rows, x.cols);
                    da.set(row, col, g.at(0, 0));
                    add_grad(&mut grads, a, da);
                }
            }
        }
        Ok(())
    }
}

fn add_grad(grads: &mut [Option<Tensor2>], idx: usize, g: Tensor2) {
    match &mut grads[idx] {
        Some(existing) => existing.add_in_place(&g),
        slot @ None => *slot = Some(g),
    }
}
