//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Graph`] records every operation of one forward pass. Values are
//! row-major `B × n` matrices where rows index batch elements; scalars are
//! `1 × 1`. [`Graph::backward`] walks the record in reverse and returns the
//! gradient of a scalar node with respect to every parameter leaf.

use ndarray::linalg::general_mat_mul;
use ndarray::{concatenate, s, Array2, ArrayView2, ArrayViewMut2, Axis, Zip};

use crate::error::{Error, Result};

pub type Mat = Array2<f64>;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Fused LSTM step. The node value is the new state `[h | c]`.
#[derive(Debug, Clone)]
struct LstmStep {
    x: Var,
    state: Var,
    w: Var,
    b: Var,
    /// Activated gates `[i | f | g | o]`.
    gates: Mat,
    tanh_c: Mat,
}

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(usize),
    MatMul(Var, Var),
    Affine(Var, Var, Var),
    Lstm(Box<LstmStep>),
    /// `a + b` where `b` is `1 × n` broadcast over rows.
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `a ⊙ c` where `c` is `B × 1` broadcast over columns.
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    Softmax(Var),
    LogSoftmax(Var),
    SumRows(Var),
    Sum(Var),
    Mean(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize, usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::Affine(..) => "affine",
            Op::Lstm(_) => "lstm",
            Op::AddRow(..) => "add_row",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::MulCol(..) => "mul_col",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Square(_) => "square",
            Op::Clamp(..) => "clamp",
            Op::Softmax(_) => "softmax",
            Op::LogSoftmax(_) => "log_softmax",
            Op::SumRows(_) => "sum_rows",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::ConcatCols(_) => "concat_cols",
            Op::SliceCols(..) => "slice_cols",
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Mat,
    /// Whether any parameter leaf feeds this node.
    needs_grad: bool,
}

/// Recorded computation. Shape errors panic (they are programming errors in
/// the model wiring); non-finite values are recorded and surfaced as
/// [`Error::Numeric`] by [`Graph::check`] and [`Graph::backward`].
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    fault: Option<&'static str>,
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

    fn push(&mut self, op: Op, value: Mat) -> Var {
        if self.fault.is_none() && !value.iter().all(|v| v.is_finite()) {
            self.fault = Some(op.name());
        }
        let needs_grad = self.op_needs_grad(&op);
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn op_needs_grad(&self, op: &Op) -> bool {
        let ng = |v: &Var| self.nodes[v.0].needs_grad;
        match op {
            Op::Constant => false,
            Op::Param(_) => true,
            Op::MatMul(a, b)
            | Op::AddRow(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::MulCol(a, b) => ng(a) || ng(b),
            Op::Affine(a, w, b) => ng(a) || ng(w) || ng(b),
            Op::Lstm(c) => ng(&c.x) || ng(&c.state) || ng(&c.w) || ng(&c.b),
            Op::ConcatCols(parts) => parts.iter().any(ng),
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Square(a)
            | Op::Clamp(a, ..)
            | Op::Softmax(a)
            | Op::LogSoftmax(a)
            | Op::SumRows(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::SliceCols(a, ..) => ng(a),
        }
    }

    fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    /// Value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.dim(), (1, 1), "scalar() on a non-scalar node");
        m[[0, 0]]
    }

    /// Returns the first operation that produced a non-finite value.
    pub fn check(&self) -> Result<()> {
        match self.fault {
            Some(op) => Err(Error::numeric(op)),
            None => Ok(()),
        }
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(Op::Constant, value)
    }

    /// Leaf bound to entry `index` of a parameter collection.
    pub fn param(&mut self, index: usize, value: Mat) -> Var {
        self.push(Op::Param(index), value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(Op::MatMul(a, b), v)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.nrows(), 1, "add_row expects a 1 × n row");
        let v = self.value(a) + r;
        self.push(Op::AddRow(a, row), v)
    }

    /// `a · w + b`, the dense layer.
    pub fn affine(&mut self, a: Var, w: Var, b: Var) -> Var {
        let r = self.value(b);
        assert_eq!(r.nrows(), 1, "affine bias must be a 1 × n row");
        let mut v = r
            .broadcast((self.value(a).nrows(), r.ncols()))
            .expect("affine bias width")
            .to_owned();
        mat_mul_acc(&self.value(a).view(), &self.value(w).view(), &mut v.view_mut());
        self.push(Op::Affine(a, w, b), v)
    }

    /// One LSTM step on state `[h | c]` (`B × 2H`) with input `x`
    /// (`B × n`), weights `w` (`(n + H) × 4H`, rows `[x; h]`, gate columns
    /// `[i | f | g | o]`) and bias `b` (`1 × 4H`). Returns the new state.
    pub fn lstm_cell(&mut self, x: Var, state: Var, w: Var, b: Var) -> Var {
        let (xv, sv, wv, bv) = (self.value(x), self.value(state), self.value(w), self.value(b));
        let (batch, n_in) = xv.dim();
        let h = wv.ncols() / 4;
        assert_eq!(wv.nrows(), n_in + h, "lstm weight rows");
        assert_eq!(sv.dim(), (batch, 2 * h), "lstm state shape");
        assert_eq!(bv.dim(), (1, 4 * h), "lstm bias shape");
        let h_prev = sv.slice(s![.., ..h]);
        let c_prev = sv.slice(s![.., h..]);

        let mut gates = bv.broadcast((batch, 4 * h)).expect("lstm bias").to_owned();
        mat_mul_acc(&xv.view(), &wv.slice(s![..n_in, ..]), &mut gates.view_mut());
        mat_mul_acc(&h_prev, &wv.slice(s![n_in.., ..]), &mut gates.view_mut());
        for mut row in gates.rows_mut() {
            for (j, z) in row.iter_mut().enumerate() {
                *z = if j / h == 2 { z.tanh() } else { sigmoid(*z) };
            }
        }
        let mut out = Array2::zeros((batch, 2 * h));
        let mut tanh_c = Array2::zeros((batch, h));
        for r in 0..batch {
            for u in 0..h {
                let (i, f, g, o) = (gates[[r, u]], gates[[r, h + u]], gates[[r, 2 * h + u]], gates[[r, 3 * h + u]]);
                let c = f * c_prev[[r, u]] + i * g;
                let t = c.tanh();
                out[[r, u]] = o * t;
                out[[r, h + u]] = c;
                tanh_c[[r, u]] = t;
            }
        }
        let step = LstmStep {
            x,
            state,
            w,
            b,
            gates,
            tanh_c,
        };
        self.push(Op::Lstm(Box::new(step)), out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(Op::Mul(a, b), v)
    }

    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let c = self.value(col);
        assert_eq!(c.ncols(), 1, "mul_col expects a B × 1 column");
        let v = self.value(a) * c;
        self.push(Op::MulCol(a, col), v)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        self.push(Op::Scale(a, k), v)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) + k;
        self.push(Op::AddScalar(a), v)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.push(Op::Relu(a), v)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::exp);
        self.push(Op::Exp(a), v)
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::ln);
        self.push(Op::Log(a), v)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * x);
        self.push(Op::Square(a), v)
    }

    /// Elementwise clamp; the gradient is zero outside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).mapv(|x| x.clamp(lo, hi));
        self.push(Op::Clamp(a, lo, hi), v)
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            row.mapv_inplace(|x| (x - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|x| x / sum);
        }
        self.push(Op::Softmax(a), v)
    }

    /// Row-wise `x - logsumexp(x)`.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let mut v = self.value(a).clone();
        for mut row in v.rows_mut() {
            let lse = log_sum_exp(row.iter().copied());
            row.mapv_inplace(|x| x - lse);
        }
        self.push(Op::LogSoftmax(a), v)
    }

    /// `B × n → B × 1` row sums.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(Op::SumRows(a), v)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(Op::Sum(a), v)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let v = Array2::from_elem((1, 1), m.sum() / m.len() as f64);
        self.push(Op::Mean(a), v)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let v = concatenate(Axis(1), &views).expect("concat_cols: row counts differ");
        self.push(Op::ConcatCols(parts.to_vec()), v)
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let v = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(Op::SliceCols(a, start, end), v)
    }

    /// Gradients of the scalar node `loss` with respect to every parameter
    /// leaf, indexed by the parameter index passed to [`Graph::param`].
    /// Parameters absent from the graph receive `None`.
    pub fn backward(&self, loss: Var, n_params: usize) -> Result<Vec<Option<Mat>>> {
        self.check()?;
        assert_eq!(self.value(loss).dim(), (1, 1), "backward from non-scalar");
        let mut grads: Vec<Option<Mat>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array2::ones((1, 1)));
        let mut out: Vec<Option<Mat>> = vec![None; n_params];

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param(p) => accumulate(&mut out[*p], g),
                Op::MatMul(a, b) => {
                    if self.needs_grad(*a) {
                        accumulate(&mut grads[a.0], g.dot(&self.value(*b).t()));
                    }
                    if self.needs_grad(*b) {
                        accumulate(&mut grads[b.0], self.value(*a).t().dot(&g));
                    }
                }
                Op::Affine(a, w, b) => {
                    if self.needs_grad(*a) {
                        accumulate(&mut grads[a.0], g.dot(&self.value(*w).t()));
                    }
                    if self.needs_grad(*w) {
                        let wv = self.value(*w);
                        let dw = grads[w.0].get_or_insert_with(|| Array2::zeros(wv.dim()));
                        general_mat_mul(1.0, &self.value(*a).t(), &g, 1.0, dw);
                    }
                    if self.needs_grad(*b) {
                        accumulate(&mut grads[b.0], g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                }
                Op::Lstm(step) => self.lstm_backward(step, &g, &mut grads),
                Op::AddRow(a, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads[row.0], gr);
                    accumulate(&mut grads[a.0], g);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[b.0], g.clone());
                    accumulate(&mut grads[a.0], g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads[b.0], -&g);
                    accumulate(&mut grads[a.0], g);
                }
                Op::Mul(a, b) => {
                    let ga = &g * self.value(*b);
                    let gb = &g * self.value(*a);
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::MulCol(a, col) => {
                    let gc = (&g * self.value(*a)).sum_axis(Axis(1)).insert_axis(Axis(1));
                    let ga = &g * self.value(*col);
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[col.0], gc);
                }
                Op::Scale(a, k) => accumulate(&mut grads[a.0], g * *k),
                Op::AddScalar(a) => accumulate(&mut grads[a.0], g),
                Op::Sigmoid(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(&node.value)
                        .for_each(|g, &y| *g *= y * (1.0 - y));
                    accumulate(&mut grads[a.0], ga);
                }
                Op::Tanh(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(&node.value)
                        .for_each(|g, &y| *g *= 1.0 - y * y);
                    accumulate(&mut grads[a.0], ga);
                }
                Op::Relu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(self.value(*a)).for_each(|g, &x| {
                        if x <= 0.0 {
                            *g = 0.0
                        }
                    });
                    accumulate(&mut grads[a.0], ga);
                }
                Op::Exp(a) => accumulate(&mut grads[a.0], g * &node.value),
                Op::Log(a) => accumulate(&mut grads[a.0], g / self.value(*a)),
                Op::Square(a) => accumulate(&mut grads[a.0], g * self.value(*a) * 2.0),
                Op::Clamp(a, lo, hi) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(self.value(*a)).for_each(|g, &x| {
                        if x < *lo || x > *hi {
                            *g = 0.0
                        }
                    });
                    accumulate(&mut grads[a.0], ga);
                }
                Op::Softmax(a) => {
                    // dx = y ⊙ (g − Σ g ⊙ y)
                    let y = &node.value;
                    let dot = (&g * y).sum_axis(Axis(1)).insert_axis(Axis(1));
                    let ga = y * &(&g - &dot);
                    accumulate(&mut grads[a.0], ga);
                }
                Op::LogSoftmax(a) => {
                    // dx = g − softmax ⊙ Σ g
                    let p = node.value.mapv(f64::exp);
                    let total = g.sum_axis(Axis(1)).insert_axis(Axis(1));
                    let ga = &g - &(p * &total);
                    accumulate(&mut grads[a.0], ga);
                }
                Op::SumRows(a) => {
                    let cols = self.value(*a).ncols();
                    let ga = g
                        .broadcast((g.nrows(), cols))
                        .expect("sum_rows broadcast")
                        .to_owned();
                    accumulate(&mut grads[a.0], ga);
                }
                Op::Sum(a) => {
                    let ga = Array2::from_elem(self.value(*a).dim(), g[[0, 0]]);
                    accumulate(&mut grads[a.0], ga);
                }
                Op::Mean(a) => {
                    let m = self.value(*a);
                    let ga = Array2::from_elem(m.dim(), g[[0, 0]] / m.len() as f64);
                    accumulate(&mut grads[a.0], ga);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        let gp = g.slice(s![.., offset..offset + w]).to_owned();
                        accumulate(&mut grads[p.0], gp);
                        offset += w;
                    }
                }
                Op::SliceCols(a, start, end) => {
                    let mut ga = Array2::zeros(self.value(*a).dim());
                    ga.slice_mut(s![.., *start..*end]).assign(&g);
                    accumulate(&mut grads[a.0], ga);
                }
            }
        }

        if out
            .iter()
            .flatten()
            .any(|g| !g.iter().all(|v| v.is_finite()))
        {
            return Err(Error::numeric("backward"));
        }
        Ok(out)
    }
}

impl Graph {
    fn lstm_backward(&self, step: &LstmStep, g: &Mat, grads: &mut [Option<Mat>]) {
        let xv = self.value(step.x);
        let sv = self.value(step.state);
        let wv = self.value(step.w);
        let (batch, n_in) = xv.dim();
        let h = step.tanh_c.ncols();
        let gates = &step.gates;

        let mut dz = Array2::zeros((batch, 4 * h));
        let mut dstate = Array2::zeros((batch, 2 * h));
        for r in 0..batch {
            for u in 0..h {
                let (i, f, gg, o) = (gates[[r, u]], gates[[r, h + u]], gates[[r, 2 * h + u]], gates[[r, 3 * h + u]]);
                let t = step.tanh_c[[r, u]];
                let dh = g[[r, u]];
                let dc = g[[r, h + u]] + dh * o * (1.0 - t * t);
                dz[[r, u]] = dc * gg * i * (1.0 - i);
                dz[[r, h + u]] = dc * sv[[r, h + u]] * f * (1.0 - f);
                dz[[r, 2 * h + u]] = dc * i * (1.0 - gg * gg);
                dz[[r, 3 * h + u]] = dh * t * o * (1.0 - o);
                dstate[[r, h + u]] = dc * f;
            }
        }
        let w_x = wv.slice(s![..n_in, ..]);
        let w_h = wv.slice(s![n_in.., ..]);
        if self.needs_grad(step.w) {
            let dw = grads[step.w.0].get_or_insert_with(|| Array2::zeros(wv.dim()));
            general_mat_mul(1.0, &xv.t(), &dz, 1.0, &mut dw.slice_mut(s![..n_in, ..]));
            general_mat_mul(1.0, &sv.slice(s![.., ..h]).t(), &dz, 1.0, &mut dw.slice_mut(s![n_in.., ..]));
        }
        if self.needs_grad(step.b) {
            accumulate(&mut grads[step.b.0], dz.sum_axis(Axis(0)).insert_axis(Axis(0)));
        }
        if self.needs_grad(step.x) {
            accumulate(&mut grads[step.x.0], dz.dot(&w_x.t()));
        }
        if self.needs_grad(step.state) {
            general_mat_mul(1.0, &dz, &w_h.t(), 0.0, &mut dstate.slice_mut(s![.., ..h]));
            accumulate(&mut grads[step.state.0], dstate);
        }
    }
}

/// `c += a · b`. Skips operand packing when `a` has few rows.
fn mat_mul_acc(a: &ArrayView2<f64>, b: &ArrayView2<f64>, c: &mut ArrayViewMut2<f64>) {
    if a.nrows() <= 8 {
        if let Some(_) = b.row(0).as_slice() {
            for (a_row, mut c_row) in a.rows().into_iter().zip(c.rows_mut()) {
                let c_row = c_row.as_slice_mut().expect("contiguous output row");
                for (k, &s) in a_row.iter().enumerate() {
                    if s != 0.0 {
                        let b_row = b.row(k);
                        let b_row = b_row.as_slice().expect("contiguous weight row");
                        for (cv, bv) in c_row.iter_mut().zip(b_row) {
                            *cv += s * bv;
                        }
                    }
                }
            }
            return;
        }
    }
    general_mat_mul(1.0, a, b, 1.0, c);
}

fn accumulate(slot: &mut Option<Mat>, g: Mat) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
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

/// Stabilized `log Σ exp(x_i)`.
pub fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::new();
        let p = g.param(0, array![[1.0, 2.0]]);
        let sq = g.square(p);
        let loss = g.sum(sq);
        let grads = g.backward(loss, 1).unwrap();
        assert_eq!(grads[0].as_ref().unwrap(), &array![[2.0, 4.0]]);
    }

    #[test]
    fn constant_objective_has_no_param_gradient() {
        let mut g = Graph::new();
        let _p = g.param(0, array![[1.0, 2.0]]);
        let c = g.constant(array![[3.0]]);
        let loss = g.sum(c);
        let grads = g.backward(loss, 1).unwrap();
        assert!(grads[0].is_none());
    }

    #[test]
    fn log_of_zero_is_reported() {
        let mut g = Graph::new();
        let p = g.param(0, array![[0.0]]);
        let l = g.log(p);
        let loss = g.sum(l);
        match g.backward(loss, 1) {
            Err(Error::Numeric { op }) => assert_eq!(op, "log"),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut g = Graph::new();
        let x = g.constant(array![[1000.0, 1001.0, 999.0], [-3.0, 0.0, 2.0]]);
        let s = g.softmax(x);
        for row in g.value(s).rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        g.check().unwrap();
    }

    #[test]
    fn reused_node_accumulates() {
        let mut g = Graph::new();
        let p = g.param(0, array![[3.0]]);
        let y = g.mul(p, p);
        let loss = g.sum(y);
        let grads = g.backward(loss, 1).unwrap();
        assert_eq!(grads[0].as_ref().unwrap()[[0, 0]], 6.0);
    }

    /// Unfused reference composition of one LSTM step.
    fn lstm_reference(g: &mut Graph, x: Var, state: Var, w: Var, b: Var, h: usize) -> Var {
        let hp = g.slice_cols(state, 0, h);
        let cp = g.slice_cols(state, h, 2 * h);
        let xh = g.concat_cols(&[x, hp]);
        let m = g.matmul(xh, w);
        let z = g.add_row(m, b);
        let zi = g.slice_cols(z, 0, h);
        let zf = g.slice_cols(z, h, 2 * h);
        let zg = g.slice_cols(z, 2 * h, 3 * h);
        let zo = g.slice_cols(z, 3 * h, 4 * h);
        let (i, f, gg, o) = (g.sigmoid(zi), g.sigmoid(zf), g.tanh(zg), g.sigmoid(zo));
        let fc = g.mul(f, cp);
        let ig = g.mul(i, gg);
        let c = g.add(fc, ig);
        let tc = g.tanh(c);
        let hn = g.mul(o, tc);
        g.concat_cols(&[hn, c])
    }

    #[test]
    fn fused_lstm_matches_reference() {
        use crate::diff::RngStream;
        let mut rng = RngStream::new(4);
        let mut rand = |r: usize, c: usize| Array2::from_shape_fn((r, c), |_| rng.normal() * 0.7);
        let (xv, wv, bv, x2) = (rand(3, 2), rand(5, 12), rand(1, 12), rand(3, 2));
        let run = |fused: bool| {
            let mut g = Graph::new();
            let x = g.param(0, xv.clone());
            let w = g.param(1, wv.clone());
            let b = g.param(2, bv.clone());
            let x2 = g.constant(x2.clone());
            let mut s = g.constant(Array2::zeros((3, 6)));
            for input in [x, x2, x] {
                s = if fused {
                    g.lstm_cell(input, s, w, b)
                } else {
                    lstm_reference(&mut g, input, s, w, b, 3)
                };
            }
            let sq = g.square(s);
            let loss = g.sum(sq);
            (g.scalar(loss), g.backward(loss, 3).unwrap())
        };
        let (lf, gf) = run(true);
        let (lr, gr) = run(false);
        assert!((lf - lr).abs() < 1e-12);
        for (a, b) in gf.iter().zip(&gr) {
            let (a, b) = (a.as_ref().unwrap(), b.as_ref().unwrap());
            assert!(a.iter().zip(b).all(|(p, q)| (p - q).abs() < 1e-12));
        }
    }

    #[test]
    fn fused_affine_gradients() {
        let mut g = Graph::new();
        let a = g.param(0, array![[1.0, 2.0], [3.0, -1.0]]);
        let w = g.param(1, array![[0.5], [-0.25]]);
        let b = g.param(2, array![[0.1]]);
        let y = g.affine(a, w, b);
        let expected = array![[0.1], [1.85]];
        assert!(g.value(y).iter().zip(&expected).all(|(p, q)| (p - q).abs() < 1e-15));
        let loss = g.sum(y);
        let grads = g.backward(loss, 3).unwrap();
        assert_eq!(grads[1].as_ref().unwrap(), &array![[4.0], [1.0]]);
        assert_eq!(grads[2].as_ref().unwrap(), &array![[2.0]]);
        assert_eq!(grads[0].as_ref().unwrap(), &array![[0.5, -0.25], [0.5, -0.25]]);
    }
}
