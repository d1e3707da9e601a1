//! Dense n-dimensional tensors with reverse-mode automatic differentiation.
//!
//! Ops record a define-by-run graph: every tensor produced by a
//! differentiable op keeps its parent tensors alive and a closure that
//! pushes gradients back to them. Node ids increase monotonically with
//! creation, so visiting reachable nodes in descending id order is a valid
//! reverse topological order for [`Tensor::backward`].

use std::cell::{Cell, Ref, RefCell};
use std::collections::HashSet;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use super::scalar::Real;

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` with gradient recording disabled on this thread.
///
/// Tensors created inside carry no graph, so inference and validation paths
/// cannot leak gradients into parameters.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let prev = GRAD_ENABLED.with(|g| g.replace(false));
    let out = f();
    GRAD_ENABLED.with(|g| g.set(prev));
    out
}

pub(crate) fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Context handed to an op's backward closure.
pub(crate) struct BackwardCtx<'a, T: Real> {
    /// Gradient of the loss wrt this node's output.
    pub grad_out: &'a [T],
    /// The node's forward output values.
    pub out_data: &'a [T],
    /// The op's input tensors, in the order they were recorded.
    pub parents: &'a [Tensor<T>],
}

type BackwardFn<T> = Box<dyn Fn(&BackwardCtx<'_, T>)>;

pub(crate) struct NodeInner<T: Real> {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<T>>,
    grad: RefCell<Option<Vec<T>>>,
    requires_grad: bool,
    parents: Vec<Tensor<T>>,
    backward: Option<BackwardFn<T>>,
}

/// Dense row-major tensor. Cloning is cheap (shares storage and graph node).
pub struct Tensor<T: Real = f32> {
    inner: Rc<NodeInner<T>>,
}

impl<T: Real> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<T: Real> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.inner.id)
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

pub(crate) fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Real> Tensor<T> {
    /// Leaf tensor from raw data. Panics if `data.len() != product(shape)`.
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Self {
        assert_eq!(
            data.len(),
            numel_of(shape),
            "data length {} does not match shape {:?}",
            data.len(),
            shape
        );
        Tensor {
            inner: Rc::new(NodeInner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape: shape.to_vec(),
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad: false,
                parents: Vec::new(),
                backward: None,
            }),
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::from_vec(shape, vec![T::ZERO; numel_of(shape)])
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::from_vec(shape, vec![T::ONE; numel_of(shape)])
    }

    pub fn scalar(x: T) -> Self {
        Self::from_vec(&[1], vec![x])
    }

    /// Marks a leaf as trainable. Only meaningful on leaves; ops derive
    /// their own flag from their inputs.
    pub fn requires_grad(self) -> Self {
        assert!(
            self.inner.backward.is_none(),
            "requires_grad only applies to leaf tensors"
        );
        Tensor {
            inner: Rc::new(NodeInner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape: self.inner.shape.clone(),
                data: RefCell::new(self.inner.data.borrow().clone()),
                grad: RefCell::new(None),
                requires_grad: true,
                parents: Vec::new(),
                backward: None,
            }),
        }
    }

    /// New op node. `parents` are recorded only while gradients are enabled
    /// and at least one input needs them.
    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<T>,
        parents: Vec<Tensor<T>>,
        backward: BackwardFn<T>,
    ) -> Self {
        debug_assert_eq!(data.len(), numel_of(&shape));
        let track = grad_enabled() && parents.iter().any(|p| p.inner.requires_grad);
        Tensor {
            inner: Rc::new(NodeInner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RefCell::new(data),
                grad: RefCell::new(None),
                requires_grad: track,
                parents: if track { parents } else { Vec::new() },
                backward: if track { Some(backward) } else { None },
            }),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        numel_of(&self.inner.shape)
    }

    pub fn data(&self) -> Ref<'_, Vec<T>> {
        self.inner.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.inner.data.borrow().clone()
    }

    /// Scalar value of a single-element tensor.
    pub fn item(&self) -> T {
        assert_eq!(self.numel(), 1, "item() requires a single-element tensor");
        self.inner.data.borrow()[0]
    }

    pub fn is_leaf(&self) -> bool {
        self.inner.backward.is_none()
    }

    /// Whether this tensor carries a recorded graph (parents to backprop into).
    pub fn has_graph(&self) -> bool {
        !self.inner.parents.is_empty()
    }

    pub fn needs_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub(crate) fn node_id(&self) -> u64 {
        self.inner.id
    }

    /// Accumulated gradient, if backward has reached this tensor.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// Overwrites the stored values in place. Shape must be preserved.
    /// Used by optimizers; never call while a graph referencing this
    /// tensor still needs its forward values.
    pub fn set_data(&self, values: &[T]) {
        let mut data = self.inner.data.borrow_mut();
        assert_eq!(values.len(), data.len());
        data.copy_from_slice(values);
    }

    pub(crate) fn accumulate_grad(&self, delta: &[T]) {
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += *di;
                }
            }
            None => {
                *slot = Some(delta.to_vec());
            }
        }
    }

    /// Leaf copy sharing no graph with the source.
    pub fn detach(&self) -> Tensor<T> {
        Tensor::from_vec(&self.inner.shape, self.to_vec())
    }

    /// Reverse-mode sweep seeded with ones. Call on the (scalar) loss.
    pub fn backward(&self) {
        assert!(
            self.inner.requires_grad,
            "backward() on a tensor with no recorded graph"
        );
        self.accumulate_grad(&vec![T::ONE; self.numel()]);

        // Reachable nodes in descending creation order = reverse topo order.
        let mut stack = vec![Rc::clone(&self.inner)];
        let mut seen: HashSet<u64> = HashSet::new();
        let mut nodes: Vec<Rc<NodeInner<T>>> = Vec::new();
        while let Some(node) = stack.pop() {
            if !seen.insert(node.id) {
                continue;
            }
            for p in &node.parents {
                if p.inner.requires_grad {
                    stack.push(Rc::clone(&p.inner));
                }
            }
            nodes.push(node);
        }
        nodes.sort_by(|a, b| b.id.cmp(&a.id));

        for node in nodes {
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            let grad = node.grad.borrow().clone();
            let Some(grad) = grad else { continue };
            let out_data = node.data.borrow();
            backward(&BackwardCtx {
                grad_out: &grad,
                out_data: &out_data,
                parents: &node.parents,
            });
        }
    }
}
