//! Dense row-major tensors with reverse-mode automatic differentiation.
//!
//! Every operation that consumes a tensor with `requires_grad` records a
//! backward closure together with references to its inputs. The resulting
//! graph is a DAG whose node ids grow with creation order, so a descending id
//! sort is a valid reverse topological order for [`Tensor::backward`].
//!
//! Leaves accumulate gradients additively; interior gradients are transient
//! and released as soon as they have been propagated.

mod gradcheck;
pub mod ops;
mod scalar;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

pub use gradcheck::{fd_check, fd_check_many};
pub use scalar::{matmul, Scalar};

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

type BackwardFn<F> = dyn Fn(&[Tensor<F>], &[F], &[F]) -> Vec<Option<Vec<F>>> + Send + Sync;

/// Recorded backward rule of a taped operation.
pub(crate) struct GradFn<F: Scalar> {
    name: &'static str,
    inputs: Vec<Tensor<F>>,
    backward: Box<BackwardFn<F>>,
}

struct Node<F: Scalar> {
    id: u64,
    shape: Vec<usize>,
    data: Vec<F>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<F>>>,
    grad_fn: Option<GradFn<F>>,
}

/// Shared handle to an immutable value plus its (optional) gradient slot.
pub struct Tensor<F: Scalar = f64> {
    node: Arc<Node<F>>,
}

impl<F: Scalar> Clone for Tensor<F> {
    fn clone(&self) -> Self {
        Tensor {
            node: Arc::clone(&self.node),
        }
    }
}

impl<F: Scalar> fmt::Debug for Tensor<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = f.debug_struct("Tensor");
        s.field("shape", &self.node.shape)
            .field("requires_grad", &self.node.requires_grad);
        if let Some(g) = &self.node.grad_fn {
            s.field("op", &g.name);
        }
        if self.numel() <= 16 {
            s.field("data", &self.node.data);
        }
        s.finish()
    }
}

pub(crate) fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<F: Scalar> Tensor<F> {
    fn build(shape: Vec<usize>, data: Vec<F>, requires_grad: bool, grad_fn: Option<GradFn<F>>) -> Self {
        debug_assert_eq!(numel_of(&shape), data.len());
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

    fn checked(shape: &[usize], data: &[F]) -> Result<()> {
        if shape.contains(&0) {
            return Err(Error::invalid_shape(
                "tensor",
                format!("extents must be positive, got {shape:?}"),
            ));
        }
        if numel_of(shape) != data.len() {
            return Err(Error::invalid_shape(
                "tensor",
                format!(
                    "shape {shape:?} holds {} values, data has {}",
                    numel_of(shape),
                    data.len()
                ),
            ));
        }
        Ok(())
    }

    /// Constant tensor (no gradient tracking).
    pub fn new(shape: &[usize], data: Vec<F>) -> Result<Self> {
        Self::checked(shape, &data)?;
        Ok(Self::build(shape.to_vec(), data, false, None))
    }

    /// Leaf tensor that accumulates a gradient during backward passes.
    pub fn param(shape: &[usize], data: Vec<F>) -> Result<Self> {
        Self::checked(shape, &data)?;
        Ok(Self::build(shape.to_vec(), data, true, None))
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::new(shape, vec![F::zero(); numel_of(shape)])
    }

    pub fn full(shape: &[usize], value: F) -> Result<Self> {
        Self::new(shape, vec![value; numel_of(shape)])
    }

    pub fn scalar(value: F) -> Self {
        Self::build(vec![1], vec![value], false, None)
    }

    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| F::from_f64(v)).collect())
    }

    /// Result of a taped operation. The backward closure is kept only when at
    /// least one input participates in differentiation.
    pub(crate) fn from_op<B>(
        name: &'static str,
        shape: Vec<usize>,
        data: Vec<F>,
        inputs: Vec<Tensor<F>>,
        backward: B,
    ) -> Self
    where
        B: Fn(&[Tensor<F>], &[F], &[F]) -> Vec<Option<Vec<F>>> + Send + Sync + 'static,
    {
        let requires_grad = inputs.iter().any(|t| t.requires_grad());
        let grad_fn = requires_grad.then(|| GradFn {
            name,
            inputs,
            backward: Box::new(backward),
        });
        Self::build(shape, data, requires_grad, grad_fn)
    }

    pub fn shape(&self) -> &[usize] {
        &self.node.shape
    }

    pub fn data(&self) -> &[F] {
        &self.node.data
    }

    pub fn numel(&self) -> usize {
        self.node.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.node.grad_fn.is_none()
    }

    /// Name of the operation that produced this tensor, if taped.
    pub fn op_name(&self) -> Option<&'static str> {
        self.node.grad_fn.as_ref().map(|g| g.name)
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> Result<F> {
        if self.numel() != 1 {
            return Err(Error::NotScalar(self.shape().to_vec()));
        }
        Ok(self.node.data[0])
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.node.data.iter().map(|v| v.as_f64()).collect()
    }

    /// Copy of the accumulated gradient.
    pub fn grad(&self) -> Option<Vec<F>> {
        self.node.grad.lock().expect("grad lock poisoned").clone()
    }

    pub fn take_grad(&self) -> Option<Vec<F>> {
        self.node.grad.lock().expect("grad lock poisoned").take()
    }

    pub fn zero_grad(&self) {
        *self.node.grad.lock().expect("grad lock poisoned") = None;
    }

    /// Same values, cut off from the graph.
    pub fn detach(&self) -> Self {
        Self::build(self.shape().to_vec(), self.data().to_vec(), false, None)
    }

    /// Converts values to another precision as a fresh constant.
    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor::build(
            self.shape().to_vec(),
            self.data().iter().map(|v| G::from_f64(v.as_f64())).collect(),
            false,
            None,
        )
    }

    pub(crate) fn id(&self) -> u64 {
        self.node.id
    }

    /// Reverse-mode sweep from a scalar root. Every reachable leaf with
    /// `requires_grad` gets d(root)/d(leaf) added to its gradient.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::NotScalar(self.shape().to_vec()));
        }
        if !self.requires_grad() {
            return Ok(());
        }

        // Collect the differentiable subgraph.
        let mut order: Vec<Tensor<F>> = Vec::new();
        let mut seen: HashSet<u64> = HashSet::new();
        let mut stack = vec![self.clone()];
        seen.insert(self.id());
        while let Some(t) = stack.pop() {
            if let Some(gf) = &t.node.grad_fn {
                for inp in &gf.inputs {
                    if inp.requires_grad() && seen.insert(inp.id()) {
                        stack.push(inp.clone());
                    }
                }
            }
            order.push(t);
        }
        order.sort_unstable_by_key(|t| std::cmp::Reverse(t.id()));

        let mut pending: HashMap<u64, Vec<F>> = HashMap::new();
        pending.insert(self.id(), vec![F::one()]);

        for t in order {
            let Some(g) = pending.remove(&t.id()) else {
                continue;
            };
            match &t.node.grad_fn {
                None => {
                    let mut slot = t.node.grad.lock().expect("grad lock poisoned");
                    match slot.as_mut() {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += *b),
                        None => *slot = Some(g),
                    }
                }
                Some(gf) => {
                    let grads = (gf.backward)(&gf.inputs, t.data(), &g);
                    debug_assert_eq!(grads.len(), gf.inputs.len(), "{}", gf.name);
                    for (inp, gi) in gf.inputs.iter().zip(grads) {
                        let Some(gi) = gi else { continue };
                        if !inp.requires_grad() {
                            continue;
                        }
                        debug_assert_eq!(gi.len(), inp.numel(), "{}", gf.name);
                        match pending.get_mut(&inp.id()) {
                            Some(acc) => acc.iter_mut().zip(&gi).for_each(|(a, b)| *a += *b),
                            None => {
                                pending.insert(inp.id(), gi);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
