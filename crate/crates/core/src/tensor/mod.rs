//! Dense 4-D tensors with reverse-mode automatic differentiation.
//!
//! Every value in the stack is a `Tensor`: a batch of channel planes in
//! row-major `[N, C, H, W]` layout holding `f64` data, with an optional
//! gradient buffer. Operations run through a [`Graph`], which records a
//! tape of nodes and replays it in exact reverse order on
//! [`Graph::backward`].

mod conv;
mod fd;
mod graph;
mod ops;

pub use fd::finite_difference_check;
pub use graph::Graph;
pub(crate) use graph::Backward;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::Rng;

use crate::error::{Error, Result};

/// Extents of a 4-D tensor: `[batch, channels, height, width]`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Shape(pub [usize; 4]);

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape([n, c, h, w])
    }

    pub fn n(&self) -> usize {
        self.0[0]
    }

    pub fn c(&self) -> usize {
        self.0[1]
    }

    pub fn h(&self) -> usize {
        self.0[2]
    }

    pub fn w(&self) -> usize {
        self.0[3]
    }

    /// Total number of elements.
    pub fn count(&self) -> usize {
        self.0.iter().product()
    }

    /// Spatial extent `H * W`.
    pub fn hw(&self) -> usize {
        self.0[2] * self.0[3]
    }

    pub fn is_scalar(&self) -> bool {
        self.0 == [1, 1, 1, 1]
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}, {}, {}, {}]",
            self.0[0], self.0[1], self.0[2], self.0[3]
        )
    }
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug)]
struct Inner {
    id: u64,
    shape: Shape,
    data: Vec<f64>,
    grad: Mutex<Option<Vec<f64>>>,
    requires_grad: bool,
}

/// A dense `[N, C, H, W]` tensor of `f64` values.
///
/// Cloning is cheap (shared storage). Data is immutable after construction
/// except through [`Tensor::data_mut`], which requires the handle to be
/// unique — the optimizer's in-place update path after the graph of the
/// current step has been dropped.
#[derive(Clone, Debug)]
pub struct Tensor {
    inner: Arc<Inner>,
}

impl Tensor {
    /// Constructor for op outputs (crate-internal).
    pub(crate) fn from_op(shape: Shape, data: Vec<f64>, requires_grad: bool) -> Self {
        Self::new_impl(shape, data, requires_grad)
    }

    fn new_impl(shape: Shape, data: Vec<f64>, requires_grad: bool) -> Self {
        debug_assert_eq!(shape.count(), data.len());
        Tensor {
            inner: Arc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                grad: Mutex::new(None),
                requires_grad,
            }),
        }
    }

    /// Leaf tensor from row-major data. Fails if the length does not match.
    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.count() {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {} ({} elements)",
                data.len(),
                shape,
                shape.count()
            )));
        }
        Ok(Self::new_impl(shape, data, false))
    }

    /// Learnable leaf tensor: identical to [`Tensor::from_vec`] but flagged
    /// so backward accumulates its gradient.
    pub fn param_from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        let t = Self::from_vec(shape, data)?;
        Ok(t.into_requires_grad())
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::new_impl(shape, vec![0.0; shape.count()], false)
    }

    pub fn full(shape: Shape, value: f64) -> Self {
        Self::new_impl(shape, vec![value; shape.count()], false)
    }

    /// Scalar tensor of shape `[1, 1, 1, 1]`.
    pub fn scalar(value: f64) -> Self {
        Self::full(Shape::new(1, 1, 1, 1), value)
    }

    /// I.i.d. normal entries with the given standard deviation.
    pub fn randn<R: Rng>(shape: Shape, std: f64, rng: &mut R) -> Self {
        use rand_distr::{Distribution, Normal};
        let normal = Normal::new(0.0, std).expect("std must be finite and positive");
        let data = (0..shape.count()).map(|_| normal.sample(rng)).collect();
        Self::new_impl(shape, data, false)
    }

    /// I.i.d. uniform entries in `[lo, hi)`.
    pub fn rand_uniform<R: Rng>(shape: Shape, lo: f64, hi: f64, rng: &mut R) -> Self {
        let data = (0..shape.count()).map(|_| rng.gen_range(lo..hi)).collect();
        Self::new_impl(shape, data, false)
    }

    fn into_requires_grad(self) -> Self {
        // Only callable while the handle is unique (constructors).
        let mut inner = Arc::try_unwrap(self.inner).expect("tensor already shared");
        inner.requires_grad = true;
        Tensor {
            inner: Arc::new(inner),
        }
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> Shape {
        self.inner.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.inner.data
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    /// Mutable access for in-place parameter updates. Errors while any graph
    /// or clone still references the tensor, which would otherwise fork the
    /// storage silently.
    pub fn data_mut(&mut self) -> Result<&mut [f64]> {
        match Arc::get_mut(&mut self.inner) {
            Some(inner) => Ok(&mut inner.data),
            None => Err(Error::Usage(
                "cannot mutate a tensor that is still referenced by a graph or clone".into(),
            )),
        }
    }

    /// Copy of the accumulated gradient, if any backward pass reached this
    /// tensor since the last reset.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.lock().expect("grad lock poisoned").clone()
    }

    /// Gradient buffer, treating "never touched" as all zeros.
    pub fn grad_or_zeros(&self) -> Vec<f64> {
        self.grad()
            .unwrap_or_else(|| vec![0.0; self.shape().count()])
    }

    /// Reset the gradient slot. The next backward pass starts from zero.
    pub fn zero_grad(&self) {
        *self.inner.grad.lock().expect("grad lock poisoned") = None;
    }

    pub(crate) fn accumulate_grad(&self, delta: &[f64]) {
        let mut slot = self.inner.grad.lock().expect("grad lock poisoned");
        match slot.as_mut() {
            Some(g) => {
                for (gi, di) in g.iter_mut().zip(delta) {
                    *gi += di;
                }
            }
            None => *slot = Some(delta.to_vec()),
        }
    }

    /// A leaf copy sharing no autodiff state with `self`.
    pub fn detach(&self) -> Tensor {
        Self::new_impl(self.shape(), self.inner.data.clone(), false)
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data().iter().all(|v| v.is_finite())
    }

    /// The single value of a scalar tensor.
    pub fn item(&self) -> Result<f64> {
        if !self.shape().is_scalar() {
            return Err(Error::Usage(format!(
                "item() on non-scalar tensor of shape {}",
                self.shape()
            )));
        }
        Ok(self.inner.data[0])
    }
}
