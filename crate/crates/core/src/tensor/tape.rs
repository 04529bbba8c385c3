use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

use super::kernels::{col2im_add, im2col, ConvGeom, UpsamplePlan};
use super::{Real, Result, Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    /// Gradient goes to the smaller operand, the first one on ties.
    Min,
}

impl BinaryOp {
    fn apply<T: Real>(self, a: T, b: T) -> T {
        match self {
            BinaryOp::Add => a + b,
            BinaryOp::Sub => a - b,
            BinaryOp::Mul => a * b,
            BinaryOp::Div => a / b,
            BinaryOp::Min => {
                if a <= b {
                    a
                } else {
                    b
                }
            }
        }
    }
}

/// Which axis of a 2-D map [`Var::axis_max`] collapses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    /// Collapse `H`: per-column maxima, output `1×W`.
    Rows,
    /// Collapse `W`: per-row maxima, output `H×1`.
    Cols,
}

enum Op<T> {
    Leaf,
    Binary { kind: BinaryOp, a: usize, b: usize },
    Scalar { kind: BinaryOp, a: usize, s: T },
    Abs(usize),
    Neg(usize),
    Sigmoid(usize),
    Relu(usize),
    SafeLog { a: usize, eps: T },
    AxisMax { a: usize, argmax: Vec<usize> },
    Sum(usize),
    Mean(usize),
    Reshape(usize),
    Conv2d {
        x: usize,
        w: usize,
        b: Option<usize>,
        geom: ConvGeom,
        // `None` for pointwise convolutions, which read the input directly.
        cols: Option<Vec<T>>,
    },
    Upsample { x: usize, plan: UpsamplePlan },
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::Binary { a, b, .. } => vec![*a, *b],
            Op::Scalar { a, .. }
            | Op::SafeLog { a, .. }
            | Op::AxisMax { a, .. }
            | Op::Abs(a)
            | Op::Neg(a)
            | Op::Sigmoid(a)
            | Op::Relu(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Reshape(a)
            | Op::Upsample { x: a, .. } => vec![*a],
            Op::Conv2d { x, w, b, .. } => {
                let mut v = vec![*x, *w];
                v.extend(b);
                v
            }
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Binary { .. } => "binary",
            Op::Scalar { .. } => "binary_scalar",
            Op::Abs(_) => "abs",
            Op::Neg(_) => "neg",
            Op::Sigmoid(_) => "sigmoid",
            Op::Relu(_) => "relu",
            Op::SafeLog { .. } => "safe_log",
            Op::AxisMax { .. } => "axis_max",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Reshape(_) => "reshape",
            Op::Conv2d { .. } => "conv2d",
            Op::Upsample { .. } => "upsample_bilinear",
        }
    }
}

struct Node<T> {
    value: Rc<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records operations in execution order; [`Tape::backward`] replays them in
/// reverse. A tape and its vars stay on one thread.
pub struct Tape<T: Real = f64> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::new()) }
    }

    pub fn leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var<'_, T> {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Leaf that receives a gradient.
    pub fn param(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor<T>) -> Var<'_, T> {
        self.leaf(value, false)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Ids of the nodes that read node `id`.
    pub fn consumers(&self, id: usize) -> Vec<usize> {
        self.nodes
            .borrow()
            .iter()
            .enumerate()
            .filter(|(_, n)| n.op.inputs().contains(&id))
            .map(|(i, _)| i)
            .collect()
    }

    /// Op kind recorded at node `id`.
    pub fn op_name(&self, id: usize) -> &'static str {
        self.nodes.borrow()[id].op.name()
    }

    pub fn inputs(&self, id: usize) -> Vec<usize> {
        self.nodes.borrow()[id].op.inputs()
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var<'_, T> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value: Rc::new(value), op, requires_grad });
        Var { tape: self, id: nodes.len() - 1 }
    }

    fn value(&self, id: usize) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }

    /// Reverse sweep from a single-element output. Every node at or below
    /// `root` is visited once, in reverse recording order.
    pub fn backward(&self, root: Var<'_, T>) -> Result<Gradients<T>> {
        assert!(std::ptr::eq(root.tape, self), "var belongs to another tape");
        let nodes = self.nodes.borrow();
        let root_shape = nodes[root.id].value.shape().to_vec();
        if nodes[root.id].value.len() != 1 {
            return Err(TensorError::NonScalar(root_shape));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; nodes.len()];
        if nodes[root.id].requires_grad {
            grads[root.id] = Some(vec![T::one()]);
        }
        let mut scratch = Vec::new();
        for i in (0..=root.id).rev() {
            let (lower, upper) = grads.split_at_mut(i);
            let Some(g) = upper[0].as_ref() else {
                continue;
            };
            backward_node(&nodes, i, g, lower, &mut scratch);
            if !matches!(nodes[i].op, Op::Leaf) {
                upper[0] = None;
            }
        }
        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn accumulate<'a, T: Real>(
    nodes: &[Node<T>],
    grads: &'a mut [Option<Vec<T>>],
    id: usize,
) -> Option<&'a mut Vec<T>> {
    if !nodes[id].requires_grad {
        return None;
    }
    let len = nodes[id].value.len();
    Some(grads[id].get_or_insert_with(|| vec![T::zero(); len]))
}

fn backward_node<T: Real>(
    nodes: &[Node<T>],
    i: usize,
    g: &[T],
    grads: &mut [Option<Vec<T>>],
    scratch: &mut Vec<T>,
) {
    let out = &nodes[i].value;
    match &nodes[i].op {
        Op::Leaf => {}
        Op::Binary { kind, a, b } => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            if let Some(ga) = accumulate(nodes, grads, *a) {
                for (j, slot) in ga.iter_mut().enumerate() {
                    let (x, y) = (av.data[j], bv.data[j]);
                    *slot += match kind {
                        BinaryOp::Add | BinaryOp::Sub => g[j],
                        BinaryOp::Mul => g[j] * y,
                        BinaryOp::Div => g[j] / y,
                        BinaryOp::Min => {
                            if x <= y {
                                g[j]
                            } else {
                                T::zero()
                            }
                        }
                    };
                }
            }
            if let Some(gb) = accumulate(nodes, grads, *b) {
                for (j, slot) in gb.iter_mut().enumerate() {
                    let (x, y) = (av.data[j], bv.data[j]);
                    *slot += match kind {
                        BinaryOp::Add => g[j],
                        BinaryOp::Sub => -g[j],
                        BinaryOp::Mul => g[j] * x,
                        BinaryOp::Div => -g[j] * x / (y * y),
                        BinaryOp::Min => {
                            if x <= y {
                                T::zero()
                            } else {
                                g[j]
                            }
                        }
                    };
                }
            }
        }
        Op::Scalar { kind, a, s } => {
            let av = &nodes[*a].value;
            if let Some(ga) = accumulate(nodes, grads, *a) {
                for (j, slot) in ga.iter_mut().enumerate() {
                    *slot += match kind {
                        BinaryOp::Add | BinaryOp::Sub => g[j],
                        BinaryOp::Mul => g[j] * *s,
                        BinaryOp::Div => g[j] / *s,
                        BinaryOp::Min => {
                            if av.data[j] <= *s {
                                g[j]
                            } else {
                                T::zero()
                            }
                        }
                    };
                }
            }
        }
        Op::Abs(a) => {
            let av = &nodes[*a].value;
            if let Some(ga) = accumulate(nodes, grads, *a) {
                for (j, slot) in ga.iter_mut().enumerate() {
                    let x = av.data[j];
                    if x > T::zero() {
                        *slot += g[j];
                    } else if x < T::zero() {
                        *slot -= g[j];
                    }
                }
            }
        }
        Op::Neg(a) => {
            if let Some(ga) = accumulate(nodes, grads, *a) {
                ga.iter_mut().zip(g).for_each(|(s, &v)| *s -= v);
            }
        }
        Op::Sigmoid(a) => {
            if let Some(ga) = accumulate(nodes, grads, *a) {
                for (j, slot) in ga.iter_mut().enumerate() {
                    let y = out.data[j];
                    *slot += g[j] * y * (T::one() - y);
                }
            }
        }
        Op::Relu(a) => {
            let av = &nodes[*a].value;
            if let Some(ga) = accumulate(nodes, grads, *a) {
                for ((slot, &x), &d) in ga.iter_mut().zip(&av.data).zip(g) {
                    *slot += if x > T::zero() { d } else { T::zero() };
                }
            }
        }
        Op::SafeLog { a, eps } => {
            let av = &nodes[*a].value;
            if let Some(ga) = accumulate(nodes, grads, *a) {
                for (j, slot) in ga.iter_mut().enumerate() {
                    let x = av.data[j];
                    if x >= *eps {
                        *slot += g[j] / x;
                    }
                }
            }
        }
        Op::AxisMax { a, argmax } => {
            if let Some(ga) = accumulate(nodes, grads, *a) {
                for (j, &src) in argmax.iter().enumerate() {
                    ga[src] += g[j];
                }
            }
        }
        Op::Sum(a) => {
            if let Some(ga) = accumulate(nodes, grads, *a) {
                ga.iter_mut().for_each(|s| *s += g[0]);
            }
        }
        Op::Mean(a) => {
            if let Some(ga) = accumulate(nodes, grads, *a) {
                let n = T::of(ga.len() as f64);
                ga.iter_mut().for_each(|s| *s += g[0] / n);
            }
        }
        Op::Reshape(a) => {
            if let Some(ga) = accumulate(nodes, grads, *a) {
                ga.iter_mut().zip(g).for_each(|(s, &v)| *s += v);
            }
        }
        Op::Conv2d { x, w, b, geom, cols } => {
            let (k_len, n) = (geom.patch_len(), geom.out_pixels());
            let xv = &nodes[*x].value;
            let wv = &nodes[*w].value;
            let unfolded: &[T] = cols.as_deref().unwrap_or(&xv.data);
            if let Some(gw) = accumulate(nodes, grads, *w) {
                // dW (O×K) += dOut (O×N) · colsᵀ
                T::gemm(geom.out_c, n, k_len, g, false, unfolded, true, T::one(), gw);
            }
            if let Some(bid) = b {
                if let Some(gb) = accumulate(nodes, grads, *bid) {
                    for (o, slot) in gb.iter_mut().enumerate() {
                        *slot += g[o * n..(o + 1) * n].iter().copied().sum::<T>();
                    }
                }
            }
            if let Some(gx) = accumulate(nodes, grads, *x) {
                // dCols (K×N) = Wᵀ · dOut
                if geom.is_pointwise() {
                    T::gemm(k_len, geom.out_c, n, &wv.data, true, g, false, T::one(), gx);
                } else {
                    if scratch.len() < k_len * n {
                        scratch.resize(k_len * n, T::zero());
                    }
                    let dcols = &mut scratch[..k_len * n];
                    T::gemm(k_len, geom.out_c, n, &wv.data, true, g, false, T::zero(), dcols);
                    col2im_add(dcols, geom, gx);
                }
            }
        }
        Op::Upsample { x, plan } => {
            if let Some(gx) = accumulate(nodes, grads, *x) {
                plan.backward_add(g, gx);
            }
        }
    }
}

/// Gradients produced by one backward sweep, indexed by node.
pub struct Gradients<T = f64> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of the root with respect to `var`, or `None` when no
    /// gradient flowed to it.
    pub fn get(&self, var: Var<'_, T>) -> Option<Tensor<T>> {
        self.get_id(var.id)
    }

    pub fn get_id(&self, id: usize) -> Option<Tensor<T>> {
        let data = self.grads.get(id)?.as_ref()?.clone();
        Some(Tensor { shape: self.shapes[id].clone(), data })
    }

    /// Gradient of `var`, zeros when none flowed.
    pub fn get_or_zeros(&self, var: Var<'_, T>) -> Tensor<T> {
        self.get(var).unwrap_or_else(|| Tensor::zeros(self.shapes[var.id].clone()))
    }
}

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t, T: Real = f64> {
    tape: &'t Tape<T>,
    id: usize,
}

impl<T: Real> fmt::Debug for Var<'_, T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.value().shape())
            .finish()
    }
}

impl<'t, T: Real> Var<'t, T> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape<T> {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor<T>> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad(self.id)
    }

    /// Value of a one-element var.
    pub fn item(&self) -> Result<T> {
        self.value().item()
    }

    /// Constant copy of this var's value; no gradient flows back through it.
    pub fn detach(&self) -> Var<'t, T> {
        self.tape.constant((*self.value()).clone())
    }

    fn unary(&self, op: Op<T>, f: impl Fn(T) -> T) -> Var<'t, T> {
        let v = self.value();
        let out = Tensor { shape: v.shape.clone(), data: v.data.iter().map(|&x| f(x)).collect() };
        self.tape.push(out, op, self.requires_grad())
    }

    pub fn binary(&self, kind: BinaryOp, other: Var<'t, T>) -> Result<Var<'t, T>> {
        assert!(std::ptr::eq(self.tape, other.tape), "vars belong to different tapes");
        let (a, b) = (self.value(), other.value());
        a.check_same_shape(&b)?;
        let data = a.data.iter().zip(&b.data).map(|(&x, &y)| kind.apply(x, y)).collect();
        let rg = self.requires_grad() || other.requires_grad();
        Ok(self.tape.push(
            Tensor { shape: a.shape.clone(), data },
            Op::Binary { kind, a: self.id, b: other.id },
            rg,
        ))
    }

    pub fn binary_scalar(&self, kind: BinaryOp, s: T) -> Var<'t, T> {
        self.unary(Op::Scalar { kind, a: self.id, s }, |x| kind.apply(x, s))
    }

    pub fn add(&self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(BinaryOp::Add, other)
    }

    pub fn sub(&self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(BinaryOp::Sub, other)
    }

    pub fn mul(&self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(BinaryOp::Mul, other)
    }

    pub fn div(&self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(BinaryOp::Div, other)
    }

    pub fn min(&self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(BinaryOp::Min, other)
    }

    pub fn add_scalar(&self, s: f64) -> Var<'t, T> {
        self.binary_scalar(BinaryOp::Add, T::of(s))
    }

    pub fn sub_scalar(&self, s: f64) -> Var<'t, T> {
        self.binary_scalar(BinaryOp::Sub, T::of(s))
    }

    pub fn mul_scalar(&self, s: f64) -> Var<'t, T> {
        self.binary_scalar(BinaryOp::Mul, T::of(s))
    }

    pub fn div_scalar(&self, s: f64) -> Var<'t, T> {
        self.binary_scalar(BinaryOp::Div, T::of(s))
    }

    pub fn min_scalar(&self, s: f64) -> Var<'t, T> {
        self.binary_scalar(BinaryOp::Min, T::of(s))
    }

    /// `s − self`.
    pub fn rsub_scalar(&self, s: f64) -> Var<'t, T> {
        self.neg().add_scalar(s)
    }

    pub fn abs(&self) -> Var<'t, T> {
        self.unary(Op::Abs(self.id), |x| x.abs())
    }

    pub fn neg(&self) -> Var<'t, T> {
        self.unary(Op::Neg(self.id), |x| -x)
    }

    /// Logistic function. Outputs are clamped into the open interval so that
    /// saturated logits never produce exactly 0 or 1.
    pub fn sigmoid(&self) -> Var<'t, T> {
        let hi = T::one() - T::epsilon() / T::of(2.0);
        let lo = T::min_positive_value();
        self.unary(Op::Sigmoid(self.id), move |x| {
            let y = if x >= T::zero() {
                T::one() / (T::one() + (-x).exp())
            } else {
                let e = x.exp();
                e / (T::one() + e)
            };
            y.max(lo).min(hi)
        })
    }

    /// `log(max(self, eps))`; zero gradient where the clamp is active.
    pub fn safe_log(&self, eps: f64) -> Var<'t, T> {
        let eps = T::of(eps);
        self.unary(Op::SafeLog { a: self.id, eps }, move |x| x.max(eps).ln())
    }

    pub fn relu(&self) -> Var<'t, T> {
        self.unary(Op::Relu(self.id), |x| if x > T::zero() { x } else { T::zero() })
    }

    /// Max of a 2-D map along `axis`. Ties resolve to the lowest index.
    pub fn axis_max(&self, axis: Axis) -> Result<Var<'t, T>> {
        let v = self.value();
        if v.rank() != 2 {
            return Err(TensorError::Rank { expected: 2, shape: v.shape.clone() });
        }
        let (h, w) = (v.shape[0], v.shape[1]);
        let (outer, inner, shape) = match axis {
            Axis::Rows => (w, h, vec![1, w]),
            Axis::Cols => (h, w, vec![h, 1]),
        };
        let index = |o: usize, i: usize| match axis {
            Axis::Rows => i * w + o,
            Axis::Cols => o * w + i,
        };
        let mut data = Vec::with_capacity(outer);
        let mut argmax = Vec::with_capacity(outer);
        for o in 0..outer {
            let mut best = index(o, 0);
            for i in 1..inner {
                let j = index(o, i);
                if v.data[j] > v.data[best] {
                    best = j;
                }
            }
            data.push(v.data[best]);
            argmax.push(best);
        }
        let rg = self.requires_grad();
        Ok(self.tape.push(Tensor { shape, data }, Op::AxisMax { a: self.id, argmax }, rg))
    }

    /// Sum of all elements; zero for an empty tensor.
    pub fn sum(&self) -> Var<'t, T> {
        let total = self.value().data.iter().copied().sum::<T>();
        self.tape.push(Tensor::scalar(total), Op::Sum(self.id), self.requires_grad())
    }

    /// Arithmetic mean; zero for an empty tensor.
    pub fn mean(&self) -> Var<'t, T> {
        let v = self.value();
        let mean = if v.is_empty() {
            T::zero()
        } else {
            v.data.iter().copied().sum::<T>() / T::of(v.len() as f64)
        };
        self.tape.push(Tensor::scalar(mean), Op::Mean(self.id), self.requires_grad())
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Var<'t, T>> {
        let out = (*self.value()).clone().reshape(shape)?;
        Ok(self.tape.push(out, Op::Reshape(self.id), self.requires_grad()))
    }

    /// Cross-correlation of a `C_in×H×W` input with `C_out×C_in×k×k`
    /// weights and an optional `C_out` bias.
    pub fn conv2d(
        &self,
        weight: Var<'t, T>,
        bias: Option<Var<'t, T>>,
        stride: usize,
        pad: usize,
    ) -> Result<Var<'t, T>> {
        let xv = self.value();
        let wv = weight.value();
        if xv.rank() != 3 {
            return Err(TensorError::Rank { expected: 3, shape: xv.shape.clone() });
        }
        if wv.rank() != 4 {
            return Err(TensorError::Rank { expected: 4, shape: wv.shape.clone() });
        }
        let (in_c, in_h, in_w) = (xv.shape[0], xv.shape[1], xv.shape[2]);
        let (out_c, k) = (wv.shape[0], wv.shape[2]);
        if wv.shape[1] != in_c {
            return Err(TensorError::ChannelMismatch { input: in_c, kernel: wv.shape[1] });
        }
        if wv.shape[3] != k || k % 2 == 0 {
            return Err(TensorError::InvalidConv(format!("kernel must be square and odd, got {:?}", wv.shape)));
        }
        if stride == 0 || in_h + 2 * pad < k || in_w + 2 * pad < k {
            return Err(TensorError::InvalidConv(format!(
                "stride {stride}, pad {pad}, kernel {k} on {in_h}×{in_w}"
            )));
        }
        if let Some(b) = bias {
            let bs = b.shape();
            if bs != [out_c] {
                return Err(TensorError::ShapeMismatch { left: bs, right: vec![out_c] });
            }
        }
        let geom = ConvGeom {
            in_c,
            in_h,
            in_w,
            out_c,
            k,
            stride,
            pad,
            out_h: (in_h + 2 * pad - k) / stride + 1,
            out_w: (in_w + 2 * pad - k) / stride + 1,
        };
        let n = geom.out_pixels();
        let cols = if geom.is_pointwise() { None } else { Some(im2col(&xv.data, &geom)) };
        let mut out = vec![T::zero(); out_c * n];
        if let Some(b) = bias {
            let bv = b.value();
            for (o, row) in out.chunks_mut(n).enumerate() {
                row.fill(bv.data[o]);
            }
        }
        let beta = if bias.is_some() { T::one() } else { T::zero() };
        let unfolded = cols.as_deref().unwrap_or(&xv.data);
        T::gemm(out_c, geom.patch_len(), n, &wv.data, false, unfolded, false, beta, &mut out);
        let rg = self.requires_grad()
            || weight.requires_grad()
            || bias.is_some_and(|b| b.requires_grad());
        Ok(self.tape.push(
            Tensor { shape: vec![out_c, geom.out_h, geom.out_w], data: out },
            Op::Conv2d { x: self.id, w: weight.id, b: bias.map(|b| b.id), geom, cols },
            rg,
        ))
    }

    /// Bilinear resize of a `C×h×w` map with half-pixel centres.
    pub fn upsample_bilinear(&self, out_h: usize, out_w: usize) -> Result<Var<'t, T>> {
        let xv = self.value();
        if xv.rank() != 3 {
            return Err(TensorError::Rank { expected: 3, shape: xv.shape.clone() });
        }
        let (c, h, w) = (xv.shape[0], xv.shape[1], xv.shape[2]);
        if out_h < h || out_w < w {
            return Err(TensorError::Downsample { from: (h, w), to: (out_h, out_w) });
        }
        let plan = UpsamplePlan::new(c, h, w, out_h, out_w);
        let data = plan.forward(&xv.data);
        let rg = self.requires_grad();
        Ok(self.tape.push(
            Tensor { shape: vec![c, out_h, out_w], data },
            Op::Upsample { x: self.id, plan },
            rg,
        ))
    }
}
