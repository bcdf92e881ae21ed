//! Forward definitions and adjoint rules for every [`Op`].

use std::ops::{Add, Div, Mul, Neg, Sub};

use super::tape::{Node, Op, Var};
use crate::special;
use crate::tensor::Tensor;

// Named forms of the arithmetic operators, usable in method chains.
#[allow(clippy::should_implement_trait)]
impl<'t> Var<'t> {
    fn unary(self, op: Op, f: impl FnOnce(&Tensor) -> Tensor) -> Var<'t> {
        let value = self.with_value(f);
        let id = self.tape.push(op, [self.id, 0], value);
        Var { tape: self.tape, id }
    }

    fn binary(self, other: Var<'t>, op: Op, f: impl FnOnce(&Tensor, &Tensor) -> Tensor) -> Var<'t> {
        assert!(std::ptr::eq(self.tape, other.tape), "operands live on different tapes");
        let value = {
            let nodes = self.tape.nodes();
            f(&nodes[self.id].value, &nodes[other.id].value)
        };
        let id = self.tape.push(op, [self.id, other.id], value);
        Var { tape: self.tape, id }
    }

    fn elementwise(self, other: Var<'t>, op: Op, f: fn(f64, f64) -> f64) -> Var<'t> {
        self.binary(other, op, |a, b| a.zip_with(b, f).unwrap_or_else(|e| panic!("{op:?}: {e}")))
    }

    pub fn add(self, other: Var<'t>) -> Var<'t> {
        self.elementwise(other, Op::Add, |a, b| a + b)
    }

    pub fn sub(self, other: Var<'t>) -> Var<'t> {
        self.elementwise(other, Op::Sub, |a, b| a - b)
    }

    pub fn mul(self, other: Var<'t>) -> Var<'t> {
        self.elementwise(other, Op::Mul, |a, b| a * b)
    }

    pub fn div(self, other: Var<'t>) -> Var<'t> {
        self.elementwise(other, Op::Div, |a, b| a / b)
    }

    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        self.binary(other, Op::MatMul, |a, b| a.matmul(b).unwrap_or_else(|e| panic!("{e}")))
    }

    /// Swaps the last two axes.
    pub fn t(self) -> Var<'t> {
        self.unary(Op::Transpose, Tensor::transpose)
    }

    pub fn broadcast_to(self, shape: &[usize]) -> Var<'t> {
        self.unary(Op::BroadcastTo, |x| x.broadcast_to(shape).unwrap_or_else(|e| panic!("{e}")))
    }

    pub fn reshape(self, shape: &[usize]) -> Var<'t> {
        self.unary(Op::Reshape, |x| x.reshape(shape.to_vec()).unwrap_or_else(|e| panic!("{e}")))
    }

    pub fn sum(self) -> Var<'t> {
        self.unary(Op::Sum { axis: None }, |x| Tensor::scalar(x.sum()))
    }

    pub fn sum_axis(self, axis: usize) -> Var<'t> {
        self.unary(Op::Sum { axis: Some(axis) }, |x| x.sum_axis(axis))
    }

    pub fn mean(self) -> Var<'t> {
        self.unary(Op::Mean { axis: None }, |x| Tensor::scalar(x.sum() / x.len() as f64))
    }

    pub fn mean_axis(self, axis: usize) -> Var<'t> {
        self.unary(Op::Mean { axis: Some(axis) }, |x| {
            let n = x.shape()[axis] as f64;
            x.sum_axis(axis).map(|v| v / n)
        })
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(Op::Tanh, |x| x.map(f64::tanh))
    }

    pub fn cos(self) -> Var<'t> {
        self.unary(Op::Cos, |x| x.map(f64::cos))
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(Op::Exp, |x| x.map(f64::exp))
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(Op::Log, |x| x.map(f64::ln))
    }

    pub fn square(self) -> Var<'t> {
        self.unary(Op::Square, |x| x.map(|v| v * v))
    }

    /// Square root. The adjoint at exactly 0 is taken as 0.
    pub fn sqrt(self) -> Var<'t> {
        self.unary(Op::Sqrt, |x| x.map(f64::sqrt))
    }

    pub fn neg(self) -> Var<'t> {
        self.unary(Op::Neg, |x| x.map(|v| -v))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary(Op::Scale(c), |x| x.map(|v| c * v))
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.unary(Op::AddScalar(c), |x| x.map(|v| v + c))
    }

    pub fn softplus(self) -> Var<'t> {
        self.unary(Op::Softplus, |x| x.map(special::softplus))
    }

    /// Zeroes everything above the diagonal of the last two axes
    /// (and the diagonal too when `strict`).
    pub fn tril_mask(self, strict: bool) -> Var<'t> {
        self.unary(Op::TrilMask { strict }, |x| apply_tril(x, strict))
    }

    pub fn log_ndtr(self) -> Var<'t> {
        self.unary(Op::LogNdtr, |x| x.map(special::log_norm_cdf))
    }
}

fn apply_tril(x: &Tensor, strict: bool) -> Tensor {
    let shape = x.shape();
    let r = shape.len();
    assert!(r >= 2, "tril_mask needs rank >= 2");
    let (m, n) = (shape[r - 2], shape[r - 1]);
    let mut out = x.clone();
    for (k, v) in out.data_mut().iter_mut().enumerate() {
        let i = (k / n) % m;
        let j = k % n;
        if j > i || (strict && j == i) {
            *v = 0.0;
        }
    }
    out
}

/// Adjoint contributions to each parent of `node`, given its adjoint `g`.
pub(crate) fn backward(node: &Node, nodes: &[Node], g: &Tensor) -> [Option<Tensor>; 2] {
    let pa = || &nodes[node.parents[0]].value;
    let pb = || &nodes[node.parents[1]].value;
    let y = &node.value;
    let zip = |a: &Tensor, b: &Tensor, f: fn(f64, f64) -> f64| a.zip_with(b, f).expect("adjoint shape");
    match node.op {
        Op::Leaf => [None, None],
        Op::Add => [Some(g.sum_to_shape(pa().shape())), Some(g.sum_to_shape(pb().shape()))],
        Op::Sub => [Some(g.sum_to_shape(pa().shape())), Some(g.map(|v| -v).sum_to_shape(pb().shape()))],
        Op::Mul => [
            Some(zip(g, pb(), |g, b| g * b).sum_to_shape(pa().shape())),
            Some(zip(g, pa(), |g, a| g * a).sum_to_shape(pb().shape())),
        ],
        Op::Div => {
            let ga = zip(g, pb(), |g, b| g / b).sum_to_shape(pa().shape());
            // d(a/b)/db = -(a/b)/b = -y/b
            let gy = zip(g, y, |g, y| g * y);
            let gb = zip(&gy, pb(), |gy, b| -gy / b).sum_to_shape(pb().shape());
            [Some(ga), Some(gb)]
        }
        Op::MatMul => {
            let (a, b) = (pa(), pb());
            let ga = g.matmul(&b.transpose()).expect("matmul adjoint");
            let gb = a.transpose().matmul(g).expect("matmul adjoint");
            [Some(reduce_batch(ga, a.shape())), Some(reduce_batch(gb, b.shape()))]
        }
        Op::Transpose => [Some(g.transpose()), None],
        Op::BroadcastTo => [Some(g.sum_to_shape(pa().shape())), None],
        Op::Reshape => [Some(g.reshape(pa().shape().to_vec()).expect("reshape adjoint")), None],
        Op::Sum { axis: None } => [Some(Tensor::full(pa().shape().to_vec(), g.item())), None],
        Op::Sum { axis: Some(ax) } => [Some(g.expand_axis(ax, pa().shape()[ax])), None],
        Op::Mean { axis: None } => {
            let n = pa().len() as f64;
            [Some(Tensor::full(pa().shape().to_vec(), g.item() / n)), None]
        }
        Op::Mean { axis: Some(ax) } => {
            let n = pa().shape()[ax];
            [Some(g.expand_axis(ax, n).map(|v| v / n as f64)), None]
        }
        Op::Tanh => [Some(zip(g, y, |g, y| g * (1.0 - y * y))), None],
        Op::Cos => [Some(zip(g, pa(), |g, x| -g * x.sin())), None],
        Op::Exp => [Some(zip(g, y, |g, y| g * y)), None],
        Op::Log => [Some(zip(g, pa(), |g, x| g / x)), None],
        Op::Square => [Some(zip(g, pa(), |g, x| 2.0 * g * x)), None],
        Op::Sqrt => [Some(zip(g, y, |g, y| if y == 0.0 { 0.0 } else { 0.5 * g / y })), None],
        Op::Neg => [Some(g.map(|v| -v)), None],
        Op::Scale(c) => [Some(g.map(|v| c * v)), None],
        Op::AddScalar(_) => [Some(g.clone()), None],
        Op::Softplus => [Some(zip(g, pa(), |g, x| g * special::sigmoid(x))), None],
        Op::TrilMask { strict } => [Some(apply_tril(g, strict)), None],
        Op::LogNdtr => [Some(zip(g, pa(), |g, x| g * special::inverse_mills(x))), None],
    }
}

/// Sums a batched matmul adjoint over the batch axis when the operand was shared.
fn reduce_batch(grad: Tensor, shape: &[usize]) -> Tensor {
    if grad.shape() == shape {
        return grad;
    }
    grad.sum_axis(0).reshape(shape.to_vec()).expect("batch-shared operand shape")
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        Var::add(self, rhs)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        Var::sub(self, rhs)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        Var::mul(self, rhs)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        Var::div(self, rhs)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        Var::neg(self)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.scale(rhs)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self.add_scalar(rhs)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self.add_scalar(-rhs)
    }
}
