use std::cell::{Cell, RefCell};
use std::fmt;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{Result, TensorError};

/// Scalar type used for every activation, gradient and parameter value.
pub type Real = f64;

/// Rounds a value to the precision parameters are stored at (32-bit).
///
/// Parameters, optimizer moments and running statistics are kept on the f32
/// grid so that a DRT1 checkpoint reproduces them exactly.
#[inline]
pub fn to_storage(v: Real) -> Real {
    v as f32 as Real
}

/// Shape of a dense NCHW tensor.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape { n, c, h, w }
    }

    /// A per-channel vector, laid out as `(1, len, 1, 1)`.
    pub const fn vector(len: usize) -> Self {
        Shape::new(1, len, 1, 1)
    }

    pub const fn scalar() -> Self {
        Shape::new(1, 1, 1, 1)
    }

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn is_scalar(&self) -> bool {
        *self == Shape::scalar()
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

impl From<(usize, usize, usize, usize)> for Shape {
    fn from((n, c, h, w): (usize, usize, usize, usize)) -> Self {
        Shape::new(n, c, h, w)
    }
}

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
    static ALLOC_TRACKER: RefCell<Option<Arc<AllocTracker>>> = const { RefCell::new(None) };
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// Whether ops executed on this thread record a graph for `backward`.
pub fn is_grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

struct GradModeGuard(bool);

impl Drop for GradModeGuard {
    fn drop(&mut self) {
        GRAD_ENABLED.with(|g| g.set(self.0));
    }
}

/// Runs `f` with graph recording disabled on the current thread.
pub fn no_grad<T>(f: impl FnOnce() -> T) -> T {
    let prev = GRAD_ENABLED.with(|g| g.replace(false));
    let _guard = GradModeGuard(prev);
    f()
}

/// Live/peak element counter for tensor buffers allocated inside a tracking scope.
#[derive(Default, Debug)]
pub struct AllocTracker {
    live: AtomicUsize,
    peak: AtomicUsize,
}

impl AllocTracker {
    fn alloc(&self, n: usize) {
        let live = self.live.fetch_add(n, Ordering::Relaxed) + n;
        self.peak.fetch_max(live, Ordering::Relaxed);
    }

    fn free(&self, n: usize) {
        self.live.fetch_sub(n, Ordering::Relaxed);
    }

    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::Relaxed)
    }
}

struct TrackerGuard(Option<Arc<AllocTracker>>);

impl Drop for TrackerGuard {
    fn drop(&mut self) {
        let prev = self.0.take();
        ALLOC_TRACKER.with(|t| *t.borrow_mut() = prev);
    }
}

/// Runs `f` and reports the peak number of tensor elements that were alive at
/// once among the tensors allocated while `f` ran.
///
/// Tensors created before the call (parameters, inputs) are not counted, and
/// a buffer is charged to the scope it was allocated in even if it is dropped
/// later.
pub fn track_peak_elements<T>(f: impl FnOnce() -> T) -> (T, usize) {
    let tracker = Arc::new(AllocTracker::default());
    let prev = ALLOC_TRACKER.with(|t| t.borrow_mut().replace(tracker.clone()));
    let out = {
        let _guard = TrackerGuard(prev);
        f()
    };
    (out, tracker.peak())
}

struct Buffer {
    values: Vec<Real>,
    tracker: Option<Arc<AllocTracker>>,
}

impl Buffer {
    fn new(values: Vec<Real>) -> Self {
        let tracker = ALLOC_TRACKER.with(|t| t.borrow().clone());
        if let Some(t) = &tracker {
            t.alloc(values.len());
        }
        Buffer { values, tracker }
    }
}

impl Drop for Buffer {
    fn drop(&mut self) {
        if let Some(t) = &self.tracker {
            t.free(self.values.len());
        }
    }
}

/// Per-op reverse rule. `backward` returns one gradient per parent, in the
/// order the parents were recorded; `None` means "no contribution".
pub(crate) trait Backward: Send + Sync {
    fn name(&self) -> &'static str;
    fn backward(&self, out: &Tensor, grad_out: &[Real], parents: &[Tensor]) -> Vec<Option<Vec<Real>>>;
}

pub(crate) struct Node {
    pub(crate) parents: Vec<Tensor>,
    pub(crate) op: Box<dyn Backward>,
}

struct Inner {
    id: u64,
    shape: Shape,
    data: Buffer,
    requires_grad: bool,
    grad: Mutex<Option<Vec<Real>>>,
    node: Option<Node>,
}

/// Immutable dense tensor in row-major NCHW order.
///
/// Cloning is cheap (reference counted). Values are never mutated after
/// construction; gradients accumulate in a side slot on leaves.
#[derive(Clone)]
pub struct Tensor(Arc<Inner>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("op", &self.0.node.as_ref().map(|n| n.op.name()))
            .finish()
    }
}

impl Tensor {
    fn build(shape: Shape, data: Vec<Real>, requires_grad: bool, node: Option<Node>) -> Self {
        debug_assert_eq!(shape.numel(), data.len());
        Tensor(Arc::new(Inner {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data: Buffer::new(data),
            requires_grad,
            grad: Mutex::new(None),
            node,
        }))
    }

    /// Creates a constant (non-differentiable) tensor.
    pub fn from_vec(shape: impl Into<Shape>, data: Vec<Real>) -> Result<Self> {
        let shape = shape.into();
        if shape.numel() != data.len() {
            return Err(TensorError::DataLength { shape, len: data.len() });
        }
        Ok(Tensor::build(shape, data, false, None))
    }

    /// Creates a leaf tensor that collects gradients during `backward`.
    pub fn leaf(shape: impl Into<Shape>, data: Vec<Real>) -> Result<Self> {
        let shape = shape.into();
        if shape.numel() != data.len() {
            return Err(TensorError::DataLength { shape, len: data.len() });
        }
        Ok(Tensor::build(shape, data, true, None))
    }

    pub fn zeros(shape: impl Into<Shape>) -> Self {
        Tensor::full(shape, 0.0)
    }

    pub fn full(shape: impl Into<Shape>, value: Real) -> Self {
        let shape = shape.into();
        Tensor::build(shape, vec![value; shape.numel()], false, None)
    }

    pub fn scalar(value: Real) -> Self {
        Tensor::build(Shape::scalar(), vec![value], false, None)
    }

    /// Result of an op. Records the graph node only when grad mode is on and
    /// some parent requires a gradient.
    pub(crate) fn from_op(shape: Shape, data: Vec<Real>, parents: Vec<Tensor>, op: impl Backward + 'static) -> Self {
        let requires_grad = is_grad_enabled() && parents.iter().any(|p| p.requires_grad());
        let node = requires_grad.then(|| Node { parents, op: Box::new(op) });
        Tensor::build(shape, data, requires_grad, node)
    }

    /// A detached leaf copy of this tensor that requires gradients.
    pub fn to_leaf(&self) -> Tensor {
        Tensor::build(self.shape(), self.data().to_vec(), true, None)
    }

    /// A copy with the graph history dropped.
    pub fn detach(&self) -> Tensor {
        Tensor::build(self.shape(), self.data().to_vec(), false, None)
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn shape(&self) -> Shape {
        self.0.shape
    }

    pub fn numel(&self) -> usize {
        self.0.shape.numel()
    }

    pub fn data(&self) -> &[Real] {
        &self.0.data.values
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.node.is_none()
    }

    pub(crate) fn node(&self) -> Option<&Node> {
        self.0.node.as_ref()
    }

    /// The single value of a `(1, 1, 1, 1)` tensor.
    pub fn item(&self) -> Result<Real> {
        if !self.shape().is_scalar() {
            return Err(TensorError::NotScalar(self.shape()));
        }
        Ok(self.data()[0])
    }

    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> Real {
        let s = self.shape();
        self.data()[((n * s.c + c) * s.h + h) * s.w + w]
    }

    /// Accumulated gradient, if `backward` has reached this leaf.
    pub fn grad(&self) -> Option<Vec<Real>> {
        self.0.grad.lock().unwrap().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().unwrap() = None;
    }

    pub(crate) fn accumulate_grad(&self, g: &[Real]) {
        let mut slot = self.0.grad.lock().unwrap();
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Concatenates tensors along the batch axis. Not differentiable.
    pub fn stack_batch(items: &[Tensor]) -> Result<Tensor> {
        let first = items.first().ok_or(TensorError::Empty("stack_batch"))?.shape();
        let mut data = Vec::with_capacity(first.numel() * items.len());
        let mut n = 0;
        for t in items {
            let s = t.shape();
            if (s.c, s.h, s.w) != (first.c, first.h, first.w) {
                return Err(TensorError::ShapeMismatch { op: "stack_batch", left: first, right: s });
            }
            n += s.n;
            data.extend_from_slice(t.data());
        }
        Tensor::from_vec(Shape::new(n, first.c, first.h, first.w), data)
    }

    /// Splits off batch item `i` as a constant tensor.
    pub fn batch_item(&self, i: usize) -> Result<Tensor> {
        let s = self.shape();
        if i >= s.n {
            return Err(TensorError::Index { axis: "batch", index: i, len: s.n });
        }
        let per = s.c * s.h * s.w;
        Tensor::from_vec(Shape::new(1, s.c, s.h, s.w), self.data()[i * per..(i + 1) * per].to_vec())
    }

    /// Mirrors every plane left-to-right. Not differentiable.
    pub fn flip_horizontal(&self) -> Tensor {
        let s = self.shape();
        let mut data = self.data().to_vec();
        for row in data.chunks_mut(s.w) {
            row.reverse();
        }
        Tensor::build(s, data, false, None)
    }
}
