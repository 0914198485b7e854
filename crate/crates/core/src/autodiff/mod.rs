//! Scalar computation graph with reverse-mode differentiation.
//!
//! [`Graph::gradient`] does not return numbers: it appends the derivative
//! expressions to the same graph and returns their node handles. Those nodes
//! evaluate like any other node and can be differentiated again, which is what
//! Hessian-vector products, trainable gradient penalties and third-order checks
//! are built on.
//!
//! Nodes are stored append-only. A graph is meant to live for one training
//! step (or one analysis) and be dropped wholesale afterwards.

mod grad;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU32, Ordering};

use crate::error::{Error, Result};

pub use grad::{finite_diff_gradient, hvp, hvp_nodes};

static NEXT_GRAPH_TAG: AtomicU32 = AtomicU32::new(1);

/// Handle to a node. Carries the tag of the owning graph so that handles from
/// another graph are rejected instead of silently aliasing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    graph: u32,
    index: u32,
}

impl NodeId {
    pub fn index(self) -> usize {
        self.index as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Op {
    Const,
    Input,
    Add,
    Mul,
    Neg,
    Exp,
    Ln,
    Tanh,
    Relu,
    /// Binary max; the subgradient is 0 for both arguments at a tie.
    Max,
    /// Heaviside step `x > 0`, the derivative of relu. Its own derivative is 0.
    Step,
    PowConst(f64),
    Sum,
    /// `Σ a_i b_i`; parents are `a_0..a_n, b_0..b_n`.
    Dot,
}

pub struct Graph {
    tag: u32,
    ops: Vec<Op>,
    spans: Vec<(u32, u32)>,
    edges: Vec<u32>,
    values: Vec<f64>,
    bound: Vec<bool>,
    names: HashMap<String, NodeId>,
    one: Option<NodeId>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self {
            tag: NEXT_GRAPH_TAG.fetch_add(1, Ordering::Relaxed),
            ops: Vec::new(),
            spans: Vec::new(),
            edges: Vec::new(),
            values: Vec::new(),
            bound: Vec::new(),
            names: HashMap::new(),
            one: None,
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.graph == self.tag && id.index() < self.ops.len()
    }

    pub(crate) fn check(&self, id: NodeId) -> Result<()> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(Error::ForeignNode)
        }
    }

    fn handle(&self, index: usize) -> NodeId {
        NodeId {
            graph: self.tag,
            index: index as u32,
        }
    }

    pub fn op(&self, id: NodeId) -> Op {
        self.ops[id.index()]
    }

    pub fn parents(&self, id: NodeId) -> Vec<NodeId> {
        self.parent_indices(id.index())
            .iter()
            .map(|&p| self.handle(p as usize))
            .collect()
    }

    fn parent_indices(&self, index: usize) -> &[u32] {
        let (start, len) = self.spans[index];
        &self.edges[start as usize..(start + len) as usize]
    }

    /// Cached value from construction time (or the last [`Graph::evaluate`]).
    pub fn value(&self, id: NodeId) -> f64 {
        debug_assert!(self.contains(id), "foreign node");
        self.values[id.index()]
    }

    pub fn values(&self, ids: &[NodeId]) -> Vec<f64> {
        ids.iter().map(|&id| self.value(id)).collect()
    }

    /// Named leaves (inputs and parameters).
    pub fn leaf(&self, name: &str) -> Option<NodeId> {
        self.names.get(name).copied()
    }

    fn push(&mut self, op: Op, parents: &[NodeId], value: f64, bound: bool) -> NodeId {
        let start = self.edges.len() as u32;
        for p in parents {
            debug_assert!(self.contains(*p), "foreign parent node");
            self.edges.push(p.index);
        }
        self.ops.push(op);
        self.spans.push((start, parents.len() as u32));
        self.values.push(value);
        self.bound.push(bound);
        self.handle(self.ops.len() - 1)
    }

    fn push_op(&mut self, op: Op, parents: &[NodeId]) -> NodeId {
        let id = self.push(op, parents, 0.0, true);
        let v = self.compute(id.index());
        self.values[id.index()] = v;
        id
    }

    fn compute(&self, index: usize) -> f64 {
        let ps = self.parent_indices(index);
        let v = |k: usize| self.values[ps[k] as usize];
        match self.ops[index] {
            Op::Const | Op::Input => self.values[index],
            Op::Add => v(0) + v(1),
            Op::Mul => v(0) * v(1),
            Op::Neg => -v(0),
            Op::Exp => v(0).exp(),
            Op::Ln => v(0).ln(),
            Op::Tanh => v(0).tanh(),
            Op::Relu => {
                if v(0) > 0.0 {
                    v(0)
                } else {
                    0.0
                }
            }
            Op::Max => {
                if v(0) >= v(1) {
                    v(0)
                } else {
                    v(1)
                }
            }
            Op::Step => {
                if v(0) > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Op::PowConst(p) => powc(v(0), p),
            Op::Sum => ps.iter().map(|&p| self.values[p as usize]).sum(),
            Op::Dot => {
                let n = ps.len() / 2;
                let mut acc = 0.0;
                for k in 0..n {
                    acc += v(k) * v(n + k);
                }
                acc
            }
        }
    }

    pub fn constant(&mut self, value: f64) -> NodeId {
        self.push(Op::Const, &[], value, true)
    }

    /// The shared constant 1 used by the backward pass.
    pub fn one(&mut self) -> NodeId {
        match self.one {
            Some(id) => id,
            None => {
                let id = self.constant(1.0);
                self.one = Some(id);
                id
            }
        }
    }

    /// Anonymous differentiable leaf with a value.
    pub fn variable(&mut self, value: f64) -> NodeId {
        self.push(Op::Input, &[], value, true)
    }

    /// Named leaf with a value, registered for lookup.
    pub fn named_variable(&mut self, name: &str, value: f64) -> NodeId {
        let id = self.variable(value);
        self.names.insert(name.to_owned(), id);
        id
    }

    /// Named leaf without a value; [`Graph::evaluate`] fails until it is bound.
    pub fn input(&mut self, name: &str) -> NodeId {
        let id = self.push(Op::Input, &[], f64::NAN, false);
        self.names.insert(name.to_owned(), id);
        id
    }

    pub fn bind(&mut self, leaf: NodeId, value: f64) -> Result<()> {
        self.check(leaf)?;
        if self.ops[leaf.index()] != Op::Input {
            return Err(Error::InvalidConfig("only input leaves can be bound".into()));
        }
        self.values[leaf.index()] = value;
        self.bound[leaf.index()] = true;
        Ok(())
    }

    /// Re-evaluates every ancestor of `root` from the current leaf values.
    pub fn evaluate(&mut self, root: NodeId) -> Result<f64> {
        self.check(root)?;
        let r = root.index();
        let mut needed = vec![false; r + 1];
        needed[r] = true;
        for i in (0..=r).rev() {
            if needed[i] {
                let (start, len) = self.spans[i];
                for k in start..start + len {
                    needed[self.edges[k as usize] as usize] = true;
                }
            }
        }
        for i in 0..=r {
            if !needed[i] {
                continue;
            }
            match self.ops[i] {
                Op::Input if !self.bound[i] => {
                    let name = self
                        .names
                        .iter()
                        .find(|(_, id)| id.index() == i)
                        .map(|(n, _)| n.clone())
                        .unwrap_or_else(|| format!("#{i}"));
                    return Err(Error::UnboundInput(name));
                }
                Op::Const | Op::Input => {}
                _ => self.values[i] = self.compute(i),
            }
        }
        Ok(self.values[r])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push_op(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let nb = self.neg(b);
        self.add(a, nb)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push_op(Op::Mul, &[a, b])
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let inv = self.powc(b, -1.0);
        self.mul(a, inv)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.push_op(Op::Neg, &[a])
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.push_op(Op::Exp, &[a])
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        self.push_op(Op::Ln, &[a])
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.push_op(Op::Tanh, &[a])
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.push_op(Op::Relu, &[a])
    }

    pub fn max(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.push_op(Op::Max, &[a, b])
    }

    pub fn step(&mut self, a: NodeId) -> NodeId {
        self.push_op(Op::Step, &[a])
    }

    pub fn powc(&mut self, a: NodeId, p: f64) -> NodeId {
        self.push_op(Op::PowConst(p), &[a])
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        self.mul(a, a)
    }

    /// `c · a` with `c` a constant.
    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let k = self.constant(c);
        self.mul(k, a)
    }

    pub fn sum(&mut self, terms: &[NodeId]) -> NodeId {
        match terms.len() {
            0 => self.constant(0.0),
            1 => terms[0],
            _ => self.push_op(Op::Sum, terms),
        }
    }

    pub fn mean(&mut self, terms: &[NodeId]) -> NodeId {
        let s = self.sum(terms);
        self.scale(s, 1.0 / terms.len().max(1) as f64)
    }

    pub fn dot(&mut self, a: &[NodeId], b: &[NodeId]) -> NodeId {
        assert_eq!(a.len(), b.len(), "dot operands differ in length");
        if a.is_empty() {
            return self.constant(0.0);
        }
        let mut parents = Vec::with_capacity(2 * a.len());
        parents.extend_from_slice(a);
        parents.extend_from_slice(b);
        self.push_op(Op::Dot, &parents)
    }

    /// Dot product against constant coefficients.
    pub fn dot_const(&mut self, a: &[NodeId], coeffs: &[f64]) -> NodeId {
        let c: Vec<NodeId> = coeffs.iter().map(|&x| self.constant(x)).collect();
        self.dot(a, &c)
    }

    /// `Σ w_i x_i + b` as a single node.
    pub fn affine(&mut self, w: &[NodeId], x: &[NodeId], b: NodeId) -> NodeId {
        assert_eq!(w.len(), x.len(), "affine operands differ in length");
        let one = self.one();
        let mut parents = Vec::with_capacity(2 * w.len() + 2);
        parents.extend_from_slice(w);
        parents.push(b);
        parents.extend_from_slice(x);
        parents.push(one);
        self.push_op(Op::Dot, &parents)
    }

    pub fn squared_norm(&mut self, a: &[NodeId]) -> NodeId {
        self.dot(a, a)
    }
}

pub(crate) fn powc(x: f64, p: f64) -> f64 {
    if p.fract() == 0.0 && p.abs() <= 64.0 {
        x.powi(p as i32)
    } else {
        x.powf(p)
    }
}
