use std::cell::{Ref, RefCell};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub type NodeId = usize;

/// Operation kinds the tape knows how to differentiate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    /// Input or constant; has no parents.
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    MatMul,
    /// Swaps the last two axes.
    Transpose,
    BroadcastTo,
    Reshape,
    /// Sum over one axis, or over everything when `axis` is `None`.
    Sum {
        axis: Option<usize>,
    },
    Mean {
        axis: Option<usize>,
    },
    Tanh,
    Cos,
    Exp,
    Log,
    Square,
    Sqrt,
    Neg,
    Scale(f64),
    AddScalar(f64),
    Softplus,
    /// Keeps the lower triangle of the last two axes; `strict` drops the diagonal.
    TrilMask {
        strict: bool,
    },
    /// `log Φ(x)` of the standard normal CDF.
    LogNdtr,
}

impl Op {
    pub fn arity(&self) -> usize {
        match self {
            Op::Leaf => 0,
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::MatMul => 2,
            _ => 1,
        }
    }
}

pub(crate) struct Node {
    pub(crate) op: Op,
    pub(crate) parents: [NodeId; 2],
    pub(crate) value: Tensor,
}

/// Record of one define-by-run computation.
///
/// Parents always precede their children, so the record is topologically
/// ordered by construction. A tape is single-threaded.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: NodeId,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var({}, {:?})", self.id, self.shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        let id = self.push(Op::Leaf, [0, 0], value);
        Var { tape: self, id }
    }

    /// Same as [`Tape::leaf`]; used for values that are never differentiated.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.leaf(Tensor::scalar(value))
    }

    /// Appends a node with a precomputed forward value.
    pub fn record(&self, op: Op, parents: &[NodeId], value: Tensor) -> Result<NodeId> {
        if parents.len() != op.arity() {
            return Err(Error::Contract(format!("{:?} takes {} parents, got {}", op, op.arity(), parents.len())));
        }
        let len = self.len();
        if let Some(&bad) = parents.iter().find(|&&p| p >= len) {
            return Err(Error::Contract(format!("parent node {bad} is not on the tape")));
        }
        let mut ids = [0; 2];
        ids[..parents.len()].copy_from_slice(parents);
        Ok(self.push(op, ids, value))
    }

    pub(crate) fn push(&self, op: Op, parents: [NodeId; 2], value: Tensor) -> NodeId {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op, parents, value });
        nodes.len() - 1
    }

    pub fn var(&self, id: NodeId) -> Var<'_> {
        assert!(id < self.len(), "node {id} not on tape");
        Var { tape: self, id }
    }

    pub fn value(&self, id: NodeId) -> Tensor {
        self.nodes.borrow()[id].value.clone()
    }

    pub(crate) fn nodes(&self) -> Ref<'_, Vec<Node>> {
        self.nodes.borrow()
    }

    /// Reverse sweep from a scalar seed. The seed's adjoint is 1.
    pub fn backward(&self, seed: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let seed_value = &nodes[seed.id].value;
        if seed_value.len() != 1 {
            return Err(Error::Contract(format!("backward seed must be scalar, got shape {:?}", seed_value.shape())));
        }
        let mut adjoints: Vec<Option<Tensor>> = vec![None; nodes.len()];
        adjoints[seed.id] = Some(Tensor::full(seed_value.shape().to_vec(), 1.0));
        for id in (0..=seed.id).rev() {
            let Some(g) = adjoints[id].take() else { continue };
            let node = &nodes[id];
            let contributions = super::ops::backward(node, &nodes, &g);
            for (k, contrib) in contributions.into_iter().enumerate() {
                let Some(contrib) = contrib else { continue };
                let p = node.parents[k];
                match &mut adjoints[p] {
                    Some(acc) => {
                        for (a, c) in acc.data_mut().iter_mut().zip(contrib.data()) {
                            *a += c;
                        }
                    }
                    slot @ None => *slot = Some(contrib),
                }
            }
            adjoints[id] = Some(g);
        }
        let shapes = nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { adjoints, shapes })
    }
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients {
    adjoints: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Adjoint of `var`; zero when the node does not reach the seed.
    pub fn get(&self, var: Var<'_>) -> Tensor {
        self.get_id(var.id)
    }

    pub fn get_id(&self, id: NodeId) -> Tensor {
        match &self.adjoints[id] {
            Some(t) => t.clone(),
            None => Tensor::zeros(self.shapes[id].clone()),
        }
    }

    pub fn take_id(&mut self, id: NodeId) -> Tensor {
        match self.adjoints[id].take() {
            Some(t) => t,
            None => Tensor::zeros(self.shapes[id].clone()),
        }
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Tensor {
        self.tape.value(self.id)
    }

    /// The single value of a one-element node.
    pub fn item(&self) -> f64 {
        self.tape.nodes()[self.id].value.item()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes()[self.id].value.shape().to_vec()
    }

    pub(crate) fn with_value<R>(&self, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.tape.nodes()[self.id].value)
    }
}
