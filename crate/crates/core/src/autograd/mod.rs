//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! Every backward rule is written in terms of differentiable [`Var`] operations,
//! so gradients can themselves be differentiated (`create_graph = true`). The
//! discriminator gradient penalty depends on this.

mod ops;

use std::cell::Cell;
use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::tensor::{Float, Tensor};

pub use ops::{conv, conv_transpose, conv_weight_grad};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Disables graph recording on this thread until dropped.
pub struct NoGradGuard {
    prev: bool,
}

impl NoGradGuard {
    #[allow(clippy::new_without_default)]
    pub fn new() -> Self {
        NoGradGuard {
            prev: GRAD_ENABLED.with(|g| g.replace(false)),
        }
    }
}

impl Drop for NoGradGuard {
    fn drop(&mut self) {
        GRAD_ENABLED.with(|g| g.set(self.prev));
    }
}

pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let _guard = NoGradGuard::new();
    f()
}

pub(crate) trait Backward<F: Float> {
    /// Gradients for each input given the upstream gradient of the output.
    fn backward(&self, inputs: &[Var<F>], out: &Var<F>, grad: &Var<F>) -> Vec<Option<Var<F>>>;
}

struct Node<F: Float> {
    id: u64,
    value: Tensor<F>,
    requires_grad: bool,
    inputs: Vec<Var<F>>,
    op: Option<Box<dyn Backward<F>>>,
}

/// A tensor-valued node in the computation graph.
#[derive(Clone)]
pub struct Var<F: Float>(Rc<Node<F>>);

impl<F: Float> std::fmt::Debug for Var<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{}({:?})", self.0.id, self.0.value)
    }
}

impl<F: Float> Var<F> {
    fn make(value: Tensor<F>, requires_grad: bool, inputs: Vec<Var<F>>, op: Option<Box<dyn Backward<F>>>) -> Self {
        Var(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            value,
            requires_grad,
            inputs,
            op,
        }))
    }

    pub fn leaf(value: Tensor<F>, requires_grad: bool) -> Self {
        Self::make(value, requires_grad, Vec::new(), None)
    }

    pub fn constant(value: Tensor<F>) -> Self {
        Self::leaf(value, false)
    }

    pub fn scalar(v: F) -> Self {
        Self::constant(Tensor::scalar(v))
    }

    pub(crate) fn from_op(value: Tensor<F>, inputs: Vec<Var<F>>, op: impl Backward<F> + 'static) -> Self {
        if grad_enabled() && inputs.iter().any(|v| v.requires_grad()) {
            Self::make(value, true, inputs, Some(Box::new(op)))
        } else {
            Self::make(value, false, Vec::new(), None)
        }
    }

    pub fn value(&self) -> &Tensor<F> {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.op.is_none()
    }

    pub fn detach(&self) -> Self {
        Self::constant(self.0.value.clone())
    }
}

/// Gradients produced by a backward pass, keyed by node.
pub struct Gradients<F: Float> {
    map: HashMap<u64, Var<F>>,
}

impl<F: Float> Gradients<F> {
    pub fn get(&self, v: &Var<F>) -> Option<&Var<F>> {
        self.map.get(&v.id())
    }

    /// Gradient tensor for `v`, zeros if `v` did not influence the output.
    pub fn tensor(&self, v: &Var<F>) -> Tensor<F> {
        self.map
            .get(&v.id())
            .map(|g| g.value().clone())
            .unwrap_or_else(|| Tensor::zeros(v.shape()))
    }
}

fn run_backward<F: Float>(output: &Var<F>, seed: Var<F>, keep: &[u64], create_graph: bool) -> Gradients<F> {
    let _guard = (!create_graph).then(NoGradGuard::new);
    let mut nodes: BTreeMap<u64, Var<F>> = BTreeMap::new();
    let mut stack = vec![output.clone()];
    while let Some(v) = stack.pop() {
        if !v.requires_grad() || nodes.contains_key(&v.id()) {
            continue;
        }
        stack.extend(v.0.inputs.iter().cloned());
        nodes.insert(v.id(), v);
    }

    let mut pending: HashMap<u64, Var<F>> = HashMap::new();
    let mut done: HashMap<u64, Var<F>> = HashMap::new();
    if output.requires_grad() {
        pending.insert(output.id(), seed);
    }
    // Inputs always carry smaller ids than their outputs, so descending id
    // order is a valid reverse topological order.
    for (id, v) in nodes.iter().rev() {
        let Some(g) = pending.remove(id) else { continue };
        if let Some(op) = &v.0.op {
            let grads = op.backward(&v.0.inputs, v, &g);
            debug_assert_eq!(grads.len(), v.0.inputs.len());
            for (inp, gi) in v.0.inputs.iter().zip(grads) {
                let Some(gi) = gi else { continue };
                if !inp.requires_grad() {
                    continue;
                }
                debug_assert_eq!(gi.shape(), inp.shape(), "gradient shape");
                let acc = match pending.remove(&inp.id()) {
                    Some(prev) => prev.add(&gi),
                    None => gi,
                };
                pending.insert(inp.id(), acc);
            }
            if keep.contains(id) {
                done.insert(*id, g);
            }
        } else {
            done.insert(*id, g);
        }
    }
    Gradients { map: done }
}

/// Backpropagates from `output` (seeded with ones) to every leaf that requires grad.
pub fn backward<F: Float>(output: &Var<F>, create_graph: bool) -> Gradients<F> {
    let seed = Var::constant(Tensor::ones(output.shape()));
    run_backward(output, seed, &[], create_graph)
}

/// Gradients of `output` (seeded with ones) with respect to each of `wrt`.
/// Inputs that do not influence the output receive zeros.
pub fn grad<F: Float>(output: &Var<F>, wrt: &[&Var<F>], create_graph: bool) -> Vec<Var<F>> {
    let seed = Var::constant(Tensor::ones(output.shape()));
    let keep: Vec<u64> = wrt.iter().map(|v| v.id()).collect();
    let g = run_backward(output, seed, &keep, create_graph);
    wrt.iter()
        .map(|v| {
            g.map
                .get(&v.id())
                .cloned()
                .unwrap_or_else(|| Var::constant(Tensor::zeros(v.shape())))
        })
        .collect()
}
