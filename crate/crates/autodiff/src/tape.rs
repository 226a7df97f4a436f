use std::cell::RefCell;
use std::rc::Rc;

use ndarray::{ArrayD, IxDyn};

use crate::conv::ConvSpec;

/// Operation recorded for a tape node. Parent indices always refer to
/// earlier nodes, so node order is a topological order by construction.
/// Some payloads exist only to make recorded graphs readable in Debug output.
#[derive(Debug, Clone)]
#[allow(dead_code)]
pub(crate) enum Op {
    /// Differentiable input (parameters, network inputs under test).
    Leaf,
    /// Non-differentiable value (data, masks, stop-gradient results).
    Constant,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    AddScalar(usize, f64),
    MulScalar(usize, f64),
    Square(usize),
    Sqrt(usize),
    Exp(usize),
    Ln(usize),
    Abs(usize),
    Relu(usize),
    LeakyRelu(usize, f64),
    Sigmoid(usize),
    Tanh(usize),
    Softplus(usize),
    Powf(usize, f64),
    Clamp(usize, f64, f64),
    SumAll(usize),
    SumAxis(usize, usize),
    Reshape(usize),
    Permute(usize, Vec<usize>),
    BroadcastTo(usize),
    Concat(usize, usize, usize),
    /// (input, axis, start, len)
    Slice(usize, usize, usize, usize),
    /// w[m,k] x[n,k,l] -> [n,m,l]
    MatmulBc(usize, usize),
    /// a[n,m,l] b[n,k,l] -> [m,k]
    Contract(usize, usize),
    Im2col(usize, ConvSpec),
    /// (cols, spec, out_h, out_w)
    Col2im(usize, ConvSpec, usize, usize),
}

impl Op {
    pub(crate) fn parents(&self) -> Vec<usize> {
        use Op::*;
        match self {
            Leaf | Constant => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | Concat(a, b, _) | MatmulBc(a, b)
            | Contract(a, b) => vec![*a, *b],
            Neg(a) | AddScalar(a, _) | MulScalar(a, _) | Square(a) | Sqrt(a) | Exp(a) | Ln(a)
            | Abs(a) | Relu(a) | LeakyRelu(a, _) | Sigmoid(a) | Tanh(a) | Softplus(a)
            | Powf(a, _) | Clamp(a, _, _) | SumAll(a) | SumAxis(a, _) | Reshape(a)
            | Permute(a, _) | BroadcastTo(a) | Slice(a, _, _, _) | Im2col(a, _)
            | Col2im(a, _, _, _) => vec![*a],
        }
    }
}

pub(crate) struct Node {
    pub value: ArrayD<f64>,
    pub op: Op,
}

pub(crate) struct TapeInner {
    pub nodes: Vec<Node>,
}

/// A recording of tensor operations. Cheap to clone (shared handle).
#[derive(Clone)]
pub struct Tape {
    pub(crate) inner: Rc<RefCell<TapeInner>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            inner: Rc::new(RefCell::new(TapeInner { nodes: Vec::new() })),
        }
    }

    pub(crate) fn push(&self, value: ArrayD<f64>, op: Op) -> Var {
        debug_assert!(value.is_standard_layout() || value.ndim() == 0);
        let mut inner = self.inner.borrow_mut();
        inner.nodes.push(Node { value, op });
        Var {
            tape: self.clone(),
            idx: inner.nodes.len() - 1,
        }
    }

    /// Differentiable input node.
    pub fn leaf(&self, value: ArrayD<f64>) -> Var {
        self.push(standardize(value), Op::Leaf)
    }

    /// Non-differentiable value node.
    pub fn constant(&self, value: ArrayD<f64>) -> Var {
        self.push(standardize(value), Op::Constant)
    }

    pub fn scalar(&self, v: f64) -> Var {
        self.constant(ArrayD::from_elem(IxDyn(&[]), v))
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn same_tape(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }
}

fn standardize(value: ArrayD<f64>) -> ArrayD<f64> {
    if value.is_standard_layout() || value.ndim() == 0 {
        value
    } else {
        value.as_standard_layout().into_owned()
    }
}

/// Handle to one tape node.
#[derive(Clone)]
pub struct Var {
    pub(crate) tape: Tape,
    pub(crate) idx: usize,
}

impl Var {
    pub fn tape(&self) -> Tape {
        self.tape.clone()
    }

    pub(crate) fn index(&self) -> usize {
        self.idx
    }

    pub fn value(&self) -> ArrayD<f64> {
        self.tape.inner.borrow().nodes[self.idx].value.clone()
    }

    /// Read the value without cloning the full array.
    pub fn with_value<R>(&self, f: impl FnOnce(&ArrayD<f64>) -> R) -> R {
        f(&self.tape.inner.borrow().nodes[self.idx].value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.inner.borrow().nodes[self.idx].value.shape().to_vec()
    }

    pub fn numel(&self) -> usize {
        self.tape.inner.borrow().nodes[self.idx].value.len()
    }

    /// Value of a single-element tensor.
    pub fn scalar_value(&self) -> f64 {
        let inner = self.tape.inner.borrow();
        let v = &inner.nodes[self.idx].value;
        assert_eq!(v.len(), 1, "scalar_value on tensor with {} elements", v.len());
        *v.iter().next().unwrap()
    }

    /// Cut the gradient path: same value, constant node.
    pub fn detach(&self) -> Var {
        let v = self.value();
        self.tape.constant(v)
    }

    pub(crate) fn assert_same_tape(&self, other: &Var) {
        assert!(
            self.tape.same_tape(&other.tape),
            "operands belong to different tapes"
        );
    }
}
