//! Dense matrices, a reverse-mode tape whose gradients are themselves
//! recorded (so they can be differentiated again), MLPs, and Adam.

use ndarray::{concatenate, s, Array2, Axis};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::path::Path;
use std::rc::Rc;

/// Row-major matrix of doubles. Vectors are `1 × n` or `n × 1`.
pub type Tensor = Array2<f64>;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("gradient of a non-scalar output of shape {0:?}")]
    NonScalarOutput(Vec<usize>),
    #[error("{0} produced a non-finite value")]
    NonFinite(&'static str),
    #[error("input gradient requested through a relu layer")]
    NonSmoothActivation,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Matmul(usize, usize),
    Transpose(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// `n × m` plus a `1 × m` row broadcast down.
    AddRow(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Tanh(usize),
    Sigmoid(usize),
    Softplus(usize),
    Relu(usize),
    Recip(usize),
    Sqrt(usize),
    Sum(usize),
    SumRows(usize),
    SumCols(usize),
    BroadcastRows(usize),
    BroadcastCols(usize),
    BroadcastScalar(usize),
    ConcatCols(Vec<usize>),
    SliceCols(usize, usize),
    PadCols(usize, usize),
    GatherRows(usize, Rc<Vec<usize>>),
    ScatterRows(usize, Rc<Vec<usize>>),
    Pick(usize, usize, usize),
    Embed(usize, usize, usize),
}

impl Op {
    fn inputs(&self) -> Vec<usize> {
        use Op::*;
        match self {
            Leaf => vec![],
            Matmul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) | AddRow(a, b) => vec![*a, *b],
            Transpose(a) | Scale(a, _) | AddScalar(a) | Tanh(a) | Sigmoid(a) | Softplus(a) | Relu(a)
            | Recip(a) | Sqrt(a) | Sum(a) | SumRows(a) | SumCols(a) | BroadcastRows(a)
            | BroadcastCols(a) | BroadcastScalar(a) | SliceCols(a, _) | PadCols(a, _) | GatherRows(a, _)
            | ScatterRows(a, _) | Pick(a, _, _) | Embed(a, _, _) => vec![*a],
            ConcatCols(v) => v.clone(),
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Records operations for reverse-mode differentiation. Gradients produced
/// by [`Tape::grad`] are recorded on the same tape.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    error: RefCell<Option<&'static str>>,
}

#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    fn push(&self, value: Tensor, op: Op, name: &'static str) -> Var<'_> {
        if !value.iter().all(|v| v.is_finite()) {
            self.error.borrow_mut().get_or_insert(name);
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    /// A leaf: an input, a parameter, or a constant.
    pub fn var(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, "leaf")
    }

    pub fn scalar(&self, v: f64) -> Var<'_> {
        self.var(Array2::from_elem((1, 1), v))
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fails if any recorded operation produced NaN or infinity.
    pub fn check(&self) -> Result<(), NnError> {
        match *self.error.borrow() {
            Some(op) => Err(NnError::NonFinite(op)),
            None => Ok(()),
        }
    }

    fn value_of(&self, id: usize) -> std::cell::Ref<'_, Tensor> {
        std::cell::Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    fn shape_of(&self, id: usize) -> (usize, usize) {
        self.value_of(id).dim()
    }

    /// Gradients of the scalar `out` with respect to each of `wrt`, as new
    /// tape variables. Unreached variables get a zero gradient.
    pub fn grad<'t>(&'t self, out: Var<'t>, wrt: &[Var<'t>]) -> Result<Vec<Var<'t>>, NnError> {
        let shape = out.shape();
        if shape != (1, 1) {
            return Err(NnError::NonScalarOutput(vec![shape.0, shape.1]));
        }
        let n = out.id + 1;
        let mut relevant = vec![false; n];
        for w in wrt {
            if w.id < n {
                relevant[w.id] = true;
            }
        }
        {
            let nodes = self.nodes.borrow();
            for id in 0..n {
                if !relevant[id] {
                    relevant[id] = nodes[id].op.inputs().iter().any(|&i| relevant[i]);
                }
            }
        }
        let mut adj: Vec<Option<Var<'t>>> = vec![None; n];
        adj[out.id] = Some(self.scalar(1.0));
        for id in (0..n).rev() {
            let Some(g) = adj[id] else { continue };
            if !relevant[id] {
                continue;
            }
            let op = self.nodes.borrow()[id].op.clone();
            let y = Var { tape: self, id };
            for (i, contrib) in self.vjp(&op, y, g, &relevant) {
                adj[i] = Some(match adj[i] {
                    Some(prev) => prev + contrib,
                    None => contrib,
                });
            }
        }
        Ok(wrt
            .iter()
            .map(|w| match adj.get(w.id).copied().flatten() {
                Some(g) if relevant[w.id] => g,
                _ => self.var(Array2::zeros(w.shape())),
            })
            .collect())
    }

    fn vjp<'t>(&'t self, op: &Op, y: Var<'t>, g: Var<'t>, relevant: &[bool]) -> Vec<(usize, Var<'t>)> {
        use Op::*;
        let v = |id: usize| Var { tape: self, id };
        let mut out = Vec::new();
        let mut emit = |i: usize, f: &dyn Fn() -> Var<'t>| {
            if relevant[i] {
                out.push((i, f()));
            }
        };
        match *op {
            Leaf => {}
            Matmul(a, b) => {
                emit(a, &|| g.matmul(v(b).t()));
                emit(b, &|| v(a).t().matmul(g));
            }
            Transpose(a) => emit(a, &|| g.t()),
            Add(a, b) => {
                emit(a, &|| g);
                emit(b, &|| g);
            }
            Sub(a, b) => {
                emit(a, &|| g);
                emit(b, &|| g.scale(-1.0));
            }
            Mul(a, b) => {
                emit(a, &|| g * v(b));
                emit(b, &|| g * v(a));
            }
            AddRow(a, b) => {
                emit(a, &|| g);
                emit(b, &|| g.sum_rows());
            }
            Scale(a, c) => emit(a, &|| g.scale(c)),
            AddScalar(a) => emit(a, &|| g),
            Tanh(a) => emit(a, &|| g * (y * y).scale(-1.0).add_scalar(1.0)),
            Sigmoid(a) => emit(a, &|| g * y * y.scale(-1.0).add_scalar(1.0)),
            Softplus(a) => emit(a, &|| g * v(a).sigmoid()),
            Relu(a) => emit(a, &|| {
                let mask = self.value_of(a).mapv(|x| if x > 0.0 { 1.0 } else { 0.0 });
                g * self.var(mask)
            }),
            Recip(a) => emit(a, &|| (g * y * y).scale(-1.0)),
            Sqrt(a) => emit(a, &|| (g * y.recip()).scale(0.5)),
            Sum(a) => emit(a, &|| g.broadcast_scalar(self.shape_of(a))),
            SumRows(a) => emit(a, &|| g.broadcast_rows(self.shape_of(a).0)),
            SumCols(a) => emit(a, &|| g.broadcast_cols(self.shape_of(a).1)),
            BroadcastRows(a) => emit(a, &|| g.sum_rows()),
            BroadcastCols(a) => emit(a, &|| g.sum_cols()),
            BroadcastScalar(a) => emit(a, &|| g.sum()),
            ConcatCols(ref parts) => {
                let mut start = 0;
                for &p in parts {
                    let w = self.shape_of(p).1;
                    emit(p, &|| g.slice_cols(start, w));
                    start += w;
                }
            }
            SliceCols(a, start) => emit(a, &|| g.pad_cols(start, self.shape_of(a).1)),
            PadCols(a, start) => emit(a, &|| g.slice_cols(start, self.shape_of(a).1)),
            GatherRows(a, ref idx) => emit(a, &|| g.scatter_rows_rc(idx.clone(), self.shape_of(a).0)),
            ScatterRows(a, ref idx) => emit(a, &|| g.gather_rows_rc(idx.clone())),
            Pick(a, i, j) => emit(a, &|| g.embed(i, j, self.shape_of(a))),
            Embed(a, i, j) => emit(a, &|| g.pick(i, j)),
        }
        out
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Tensor {
        self.tape.value_of(self.id).clone()
    }

    /// The single entry of a `1 × 1` variable.
    pub fn item(&self) -> f64 {
        let v = self.tape.value_of(self.id);
        assert_eq!(v.dim(), (1, 1), "item() of a non-scalar");
        v[[0, 0]]
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.shape_of(self.id)
    }

    fn un(self, op: Op, name: &'static str, f: impl FnOnce(&Tensor) -> Tensor) -> Var<'t> {
        let value = f(&self.tape.value_of(self.id));
        self.tape.push(value, op, name)
    }

    fn map(self, op: Op, name: &'static str, f: impl Fn(f64) -> f64) -> Var<'t> {
        self.un(op, name, |x| x.mapv(&f))
    }

    pub fn matmul(self, o: Var<'t>) -> Var<'t> {
        let value = self.tape.value_of(self.id).dot(&*self.tape.value_of(o.id));
        self.tape.push(value, Op::Matmul(self.id, o.id), "matmul")
    }

    pub fn t(self) -> Var<'t> {
        self.un(Op::Transpose(self.id), "transpose", |x| x.t().to_owned())
    }

    /// Adds a `1 × m` row to every row.
    pub fn add_row(self, row: Var<'t>) -> Var<'t> {
        let value = &*self.tape.value_of(self.id) + &*self.tape.value_of(row.id);
        self.tape.push(value, Op::AddRow(self.id, row.id), "add_row")
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.map(Op::Scale(self.id, c), "scale", |x| c * x)
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.map(Op::AddScalar(self.id), "add_scalar", |x| x + c)
    }

    pub fn tanh(self) -> Var<'t> {
        self.map(Op::Tanh(self.id), "tanh", f64::tanh)
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.map(Op::Sigmoid(self.id), "sigmoid", |x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        })
    }

    pub fn softplus(self) -> Var<'t> {
        self.map(Op::Softplus(self.id), "softplus", |x| x.max(0.0) + (-x.abs()).exp().ln_1p())
    }

    pub fn relu(self) -> Var<'t> {
        self.map(Op::Relu(self.id), "relu", |x| x.max(0.0))
    }

    pub fn recip(self) -> Var<'t> {
        self.map(Op::Recip(self.id), "recip", |x| 1.0 / x)
    }

    pub fn sqrt(self) -> Var<'t> {
        self.map(Op::Sqrt(self.id), "sqrt", f64::sqrt)
    }

    pub fn square(self) -> Var<'t> {
        self * self
    }

    /// Sum of all entries, as `1 × 1`.
    pub fn sum(self) -> Var<'t> {
        self.un(Op::Sum(self.id), "sum", |x| Array2::from_elem((1, 1), x.sum()))
    }

    pub fn mean(self) -> Var<'t> {
        let (r, c) = self.shape();
        self.sum().scale(1.0 / (r * c) as f64)
    }

    /// Column sums, as `1 × m`.
    pub fn sum_rows(self) -> Var<'t> {
        self.un(Op::SumRows(self.id), "sum_rows", |x| x.sum_axis(Axis(0)).insert_axis(Axis(0)))
    }

    /// Row sums, as `n × 1`.
    pub fn sum_cols(self) -> Var<'t> {
        self.un(Op::SumCols(self.id), "sum_cols", |x| x.sum_axis(Axis(1)).insert_axis(Axis(1)))
    }

    pub fn broadcast_rows(self, n: usize) -> Var<'t> {
        self.un(Op::BroadcastRows(self.id), "broadcast_rows", |x| {
            x.broadcast((n, x.ncols())).expect("row vector").to_owned()
        })
    }

    pub fn broadcast_cols(self, m: usize) -> Var<'t> {
        self.un(Op::BroadcastCols(self.id), "broadcast_cols", |x| {
            x.broadcast((x.nrows(), m)).expect("column vector").to_owned()
        })
    }

    pub fn broadcast_scalar(self, shape: (usize, usize)) -> Var<'t> {
        self.un(Op::BroadcastScalar(self.id), "broadcast_scalar", |x| {
            Array2::from_elem(shape, x[[0, 0]])
        })
    }

    pub fn slice_cols(self, start: usize, len: usize) -> Var<'t> {
        self.un(Op::SliceCols(self.id, start), "slice_cols", |x| {
            x.slice(s![.., start..start + len]).to_owned()
        })
    }

    pub fn pad_cols(self, start: usize, total: usize) -> Var<'t> {
        self.un(Op::PadCols(self.id, start), "pad_cols", |x| {
            let mut out = Array2::zeros((x.nrows(), total));
            out.slice_mut(s![.., start..start + x.ncols()]).assign(x);
            out
        })
    }

    /// Rows `idx[0], idx[1], ...` of `self`.
    pub fn gather_rows(self, idx: &[usize]) -> Var<'t> {
        self.gather_rows_rc(Rc::new(idx.to_vec()))
    }

    fn gather_rows_rc(self, idx: Rc<Vec<usize>>) -> Var<'t> {
        let value = self.tape.value_of(self.id).select(Axis(0), &idx);
        self.tape.push(value, Op::GatherRows(self.id, idx), "gather_rows")
    }

    /// `n`-row result whose row `r` is the sum of rows `t` with `idx[t] == r`.
    pub fn scatter_rows(self, idx: &[usize], n: usize) -> Var<'t> {
        self.scatter_rows_rc(Rc::new(idx.to_vec()), n)
    }

    fn scatter_rows_rc(self, idx: Rc<Vec<usize>>, n: usize) -> Var<'t> {
        let value = {
            let x = self.tape.value_of(self.id);
            let mut out = Array2::zeros((n, x.ncols()));
            for (t, &r) in idx.iter().enumerate() {
                let mut row = out.row_mut(r);
                row += &x.row(t);
            }
            out
        };
        self.tape.push(value, Op::ScatterRows(self.id, idx), "scatter_rows")
    }

    pub fn pick(self, i: usize, j: usize) -> Var<'t> {
        self.un(Op::Pick(self.id, i, j), "pick", |x| Array2::from_elem((1, 1), x[[i, j]]))
    }

    fn embed(self, i: usize, j: usize, shape: (usize, usize)) -> Var<'t> {
        self.un(Op::Embed(self.id, i, j), "embed", |x| {
            let mut out = Array2::zeros(shape);
            out[[i, j]] = x[[0, 0]];
            out
        })
    }
}

/// Column-wise concatenation.
pub fn concat_cols<'t>(parts: &[Var<'t>]) -> Var<'t> {
    let tape = parts[0].tape;
    let value = {
        let vals: Vec<_> = parts.iter().map(|p| tape.value_of(p.id)).collect();
        let views: Vec<_> = vals.iter().map(|v| v.view()).collect();
        concatenate(Axis(1), &views).expect("equal row counts")
    };
    tape.push(value, Op::ConcatCols(parts.iter().map(|p| p.id).collect()), "concat_cols")
}

macro_rules! binop {
    ($tr:ident, $m:ident, $op:ident, $name:literal, $sym:tt) => {
        impl<'t> std::ops::$tr for Var<'t> {
            type Output = Var<'t>;
            fn $m(self, o: Var<'t>) -> Var<'t> {
                let value = {
                    let a = self.tape.value_of(self.id);
                    let b = self.tape.value_of(o.id);
                    assert_eq!(a.dim(), b.dim(), concat!($name, " shape mismatch"));
                    &*a $sym &*b
                };
                self.tape.push(value, Op::$op(self.id, o.id), $name)
            }
        }
    };
}

binop!(Add, add, Add, "add", +);
binop!(Sub, sub, Sub, "sub", -);
binop!(Mul, mul, Mul, "mul", *);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Softplus,
    Relu,
    Linear,
}

impl Activation {
    fn apply<'t>(self, x: Var<'t>) -> Var<'t> {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Softplus => x.softplus(),
            Activation::Relu => x.relu(),
            Activation::Linear => x,
        }
    }
}

/// Fully connected network; `activations[l]` follows layer `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

/// Anything holding an ordered list of trainable tensors.
pub trait Params {
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(widths: &[usize], activations: &[Activation], rng: &mut impl rand::Rng) -> Mlp {
        assert!(widths.len() >= 2 && activations.len() == widths.len() - 1);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in widths.windows(2) {
            let a = (6.0 / (w[0] + w[1]) as f64).sqrt();
            weights.push(Array2::from_shape_fn((w[0], w[1]), |_| rng.random_range(-a..a)));
            biases.push(Array2::zeros((1, w[1])));
        }
        Mlp {
            widths: widths.to_vec(),
            activations: activations.to_vec(),
            weights,
            biases,
        }
    }

    /// One hidden layer of `hidden` units with `act`, linear output.
    pub fn one_hidden(input: usize, hidden: usize, output: usize, act: Activation, rng: &mut impl rand::Rng) -> Mlp {
        Mlp::new(&[input, hidden, output], &[act, Activation::Linear], rng)
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Places the parameters on `tape`, in [`Params::tensors`] order.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.tensors().into_iter().map(|t| tape.var(t.clone())).collect()
    }

    pub fn forward<'t>(&self, params: &[Var<'t>], x: Var<'t>) -> Var<'t> {
        let mut h = x;
        for (l, act) in self.activations.iter().enumerate() {
            h = act.apply(h.matmul(params[2 * l]).add_row(params[2 * l + 1]));
        }
        h
    }

    /// Plain evaluation without gradients.
    pub fn eval(&self, x: &Tensor) -> Tensor {
        let mut h = x.clone();
        for (l, act) in self.activations.iter().enumerate() {
            h = h.dot(&self.weights[l]) + &self.biases[l];
            match act {
                Activation::Tanh => h.mapv_inplace(f64::tanh),
                Activation::Softplus => h.mapv_inplace(|x| x.max(0.0) + (-x.abs()).exp().ln_1p()),
                Activation::Relu => h.mapv_inplace(|x| x.max(0.0)),
                Activation::Linear => {}
            }
        }
        h
    }

    /// Gradient of the (per-row) scalar output with respect to the input
    /// rows, recorded so it can be differentiated again.
    pub fn input_grad<'t>(&self, params: &[Var<'t>], x: Var<'t>) -> Result<Var<'t>, NnError> {
        if self.activations.contains(&Activation::Relu) {
            return Err(NnError::NonSmoothActivation);
        }
        if self.output_width() != 1 {
            return Err(NnError::Shape("input gradient needs a scalar output".into()));
        }
        let y = self.forward(params, x).sum();
        Ok(x.tape.grad(y, &[x])?.remove(0))
    }
}

impl Params for Mlp {
    fn tensors(&self) -> Vec<&Tensor> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w, b]).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }
}

/// Bias-corrected Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Descends along `grads`.
    pub fn update(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor]) {
        assert_eq!(params.len(), grads.len());
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Array2::zeros(g.dim())).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            assert_eq!(p.dim(), g.dim());
            let m = &mut self.m[k];
            let v = &mut self.v[k];
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
            });
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    shapes: Vec<[usize; 2]>,
    data: Vec<f64>,
}

const CHECKPOINT_FORMAT: &str = "gtamp-params/1";

/// Writes the tensors as one flat array plus a shape manifest.
pub fn save_params(path: &Path, tensors: &[&Tensor]) -> Result<(), NnError> {
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        shapes: tensors.iter().map(|t| [t.nrows(), t.ncols()]).collect(),
        data: tensors.iter().flat_map(|t| t.iter().copied()).collect(),
    };
    std::fs::write(path, serde_json::to_vec(&ck).expect("serializes"))?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<Vec<Tensor>, NnError> {
    let ck: Checkpoint = serde_json::from_slice(&std::fs::read(path)?).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    if ck.format != CHECKPOINT_FORMAT {
        return Err(NnError::Checkpoint(format!("unknown format {}", ck.format)));
    }
    let total: usize = ck.shapes.iter().map(|s| s[0] * s[1]).sum();
    if total != ck.data.len() {
        return Err(NnError::Checkpoint("manifest does not match data length".into()));
    }
    let mut off = 0;
    Ok(ck
        .shapes
        .iter()
        .map(|&[r, c]| {
            let t = Array2::from_shape_vec((r, c), ck.data[off..off + r * c].to_vec()).expect("sized");
            off += r * c;
            t
        })
        .collect())
}

/// Loads a checkpoint into `target`, checking shapes.
pub fn load_into(path: &Path, target: &mut dyn Params) -> Result<(), NnError> {
    let loaded = load_params(path)?;
    let slots = target.tensors_mut();
    if loaded.len() != slots.len() || loaded.iter().zip(&slots).any(|(a, b)| a.dim() != b.dim()) {
        return Err(NnError::Checkpoint("shape manifest does not match the model".into()));
    }
    for (slot, t) in slots.into_iter().zip(loaded) {
        *slot = t;
    }
    Ok(())
}

/// Largest coordinate-wise relative error between `analytic` gradients and
/// central differences of `f` at `params`, with step `h`. Denominators are
/// floored at `1e-5` so that near-zero coordinates are compared absolutely.
pub fn gradcheck(f: &mut dyn FnMut(&[Tensor]) -> f64, params: &[Tensor], analytic: &[Tensor], h: f64) -> f64 {
    let mut worst: f64 = 0.0;
    let mut p: Vec<Tensor> = params.to_vec();
    for k in 0..p.len() {
        for idx in 0..p[k].len() {
            let (r, c) = (idx / p[k].ncols(), idx % p[k].ncols());
            let orig = p[k][[r, c]];
            p[k][[r, c]] = orig + h;
            let up = f(&p);
            p[k][[r, c]] = orig - h;
            let down = f(&p);
            p[k][[r, c]] = orig;
            let num = (up - down) / (2.0 * h);
            let a = analytic[k][[r, c]];
            let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-5);
            worst = worst.max(rel);
        }
    }
    worst
}
