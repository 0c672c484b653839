//! Dense row-major `f64` tensors with tape-free reverse-mode differentiation.
//!
//! Every tensor produced by an operator on at least one gradient-tracked
//! input keeps a reference to its parents and a closure that maps the
//! output gradient to parent gradients. [`Tensor::backward`] walks that
//! graph in reverse topological order. Leaf tensors with
//! `requires_grad == true` accumulate into their own grad buffer; nothing
//! else is touched.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

static NEXT_ID: AtomicUsize = AtomicUsize::new(0);

/// Maps the gradient of an op's output to one optional gradient per parent.
pub(crate) type BackwardFn = Box<dyn Fn(&[f64]) -> Vec<Option<Vec<f64>>> + Send + Sync>;

struct GradFn {
    parents: Vec<Tensor>,
    backward: BackwardFn,
}

struct Node {
    id: usize,
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<f64>>>,
    grad_fn: Option<GradFn>,
}

#[derive(Clone)]
pub struct Tensor {
    node: Arc<Node>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.node.shape)
            .field("requires_grad", &self.node.requires_grad)
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn check_finite(op: &'static str, data: &[f64]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(op))
    }
}

impl Tensor {
    fn from_parts(
        shape: Vec<usize>,
        data: Arc<Vec<f64>>,
        requires_grad: bool,
        grad_fn: Option<GradFn>,
    ) -> Self {
        Tensor {
            node: Arc::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                requires_grad,
                grad: Mutex::new(None),
                grad_fn,
            }),
        }
    }

    /// Builds an untracked tensor, rejecting length mismatches and
    /// non-finite values.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(Error::shape(
                "Tensor::new",
                format!(
                    "shape {:?} needs {} values, got {}",
                    shape,
                    numel(shape),
                    data.len()
                ),
            ));
        }
        check_finite("Tensor::new", &data)?;
        Ok(Self::from_parts(
            shape.to_vec(),
            Arc::new(data),
            false,
            None,
        ))
    }

    /// Builds a gradient-tracked leaf.
    pub fn param(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        Ok(Self::new(shape, data)?.into_leaf(true))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::from_parts(
            shape.to_vec(),
            Arc::new(vec![0.0; numel(shape)]),
            false,
            None,
        )
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self::from_parts(
            shape.to_vec(),
            Arc::new(vec![value; numel(shape)]),
            false,
            None,
        )
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Self::new(&[], vec![value])
    }

    /// Fresh leaf sharing this tensor's values, with the given tracking flag.
    pub fn into_leaf(self, requires_grad: bool) -> Self {
        Self::from_parts(
            self.node.shape.clone(),
            self.node.data.clone(),
            requires_grad,
            None,
        )
    }

    /// Untracked copy cut from the graph.
    pub fn detach(&self) -> Self {
        self.clone().into_leaf(false)
    }

    /// Result of an operator. Records the backward closure only when a
    /// parent is tracked.
    pub(crate) fn from_op(
        op: &'static str,
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: &[&Tensor],
        backward: impl Fn(&[f64]) -> Vec<Option<Vec<f64>>> + Send + Sync + 'static,
    ) -> Result<Self> {
        debug_assert_eq!(numel(&shape), data.len(), "{op}");
        check_finite(op, &data)?;
        let tracked = parents.iter().any(|p| p.requires_grad());
        let grad_fn = tracked.then(|| GradFn {
            parents: parents.iter().map(|p| (*p).clone()).collect(),
            backward: Box::new(backward),
        });
        Ok(Self::from_parts(shape, Arc::new(data), tracked, grad_fn))
    }

    /// Same values under a new shape; shares storage.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.numel() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} -> {:?}", self.shape(), shape),
            ));
        }
        let grad_fn = self.requires_grad().then(|| GradFn {
            parents: vec![self.clone()],
            backward: Box::new(|g: &[f64]| vec![Some(g.to_vec())]) as BackwardFn,
        });
        Ok(Self::from_parts(
            shape.to_vec(),
            self.node.data.clone(),
            self.requires_grad(),
            grad_fn,
        ))
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn rank(&self) -> usize {
        self.node.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.node.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.node.data
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.node.data.to_vec()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        match self.data() {
            [v] => Ok(*v),
            _ => Err(Error::shape(
                "item",
                format!("shape {:?} is not a scalar", self.shape()),
            )),
        }
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.node.grad.lock().expect("grad lock").clone()
    }

    pub fn zero_grad(&self) {
        *self.node.grad.lock().expect("grad lock") = None;
    }

    pub fn same_node(&self, other: &Tensor) -> bool {
        Arc::ptr_eq(&self.node, &other.node)
    }

    /// Reverse-mode accumulation from a scalar loss into every reachable
    /// tracked leaf.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss(self.shape().to_vec()));
        }
        if !self.requires_grad() {
            return Ok(());
        }

        // Iterative post-order DFS gives a topological order.
        let mut order: Vec<Tensor> = Vec::new();
        let mut visited: HashMap<usize, ()> = HashMap::new();
        let mut stack: Vec<(Tensor, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if visited.insert(t.node.id, ()).is_some() {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(gf) = &t.node.grad_fn {
                for p in &gf.parents {
                    if p.requires_grad() && !visited.contains_key(&p.node.id) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }

        let mut pending: HashMap<usize, Vec<f64>> = HashMap::new();
        pending.insert(self.node.id, vec![1.0]);
        for t in order.iter().rev() {
            let Some(g) = pending.remove(&t.node.id) else {
                continue;
            };
            match &t.node.grad_fn {
                Some(gf) => {
                    let parent_grads = (gf.backward)(&g);
                    for (p, pg) in gf.parents.iter().zip(parent_grads) {
                        let Some(pg) = pg else { continue };
                        if !p.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(pg.len(), p.numel());
                        match pending.get_mut(&p.node.id) {
                            Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                            None => {
                                pending.insert(p.node.id, pg);
                            }
                        }
                    }
                }
                None => {
                    let mut slot = t.node.grad.lock().expect("grad lock");
                    match slot.as_mut() {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                        None => *slot = Some(g),
                    }
                }
            }
        }
        Ok(())
    }
}
