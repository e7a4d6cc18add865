//! Minimal seeded neural-network toolkit: the layers the displacement
//! estimator needs, with hand-derived backward passes on `ndarray`.
//!
//! Everything is CPU-only and deterministic: layers draw their
//! initialization from a caller-supplied generator, dropout consumes an
//! explicit seed per call, and the optimizer state is keyed by stable
//! parameter names, so a fixed seed reproduces a training trajectory
//! bit-for-bit on a single thread.
//!
//! The pieces:
//! * [`Param`] — one named tensor plus its gradient accumulator.
//! * [`Module`] / [`ParamVisitor`] — uniform traversal of a model's
//!   parameters (optimizer steps, counting, checkpoint I/O) without any
//!   global registry.
//! * [`conv::Conv1d`] / [`conv::Conv2d`] — im2col + GEMM convolutions with
//!   "same"-style zero padding (output length `⌈L/stride⌉`).
//! * [`norm::GroupNorm`] — group normalization (the batch-size-robust
//!   replacement for batch norm).
//! * [`linear::Linear`], [`relu`], [`dropout`] — the head pieces.
//! * [`pool`] — adaptive average/max pooling with floor/ceil bin edges.
//! * [`Adam`], [`PlateauScheduler`] — optimizer and step-size schedule.

pub mod conv;
pub mod linear;
pub mod norm;
pub mod pool;

use std::collections::HashMap;

use ndarray::{ArrayD, Dimension, IxDyn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::Real;

/// One learnable tensor and its gradient accumulator (same shape).
#[derive(Debug, Clone)]
pub struct Param<F> {
    /// Current value.
    pub value: ArrayD<F>,
    /// Accumulated gradient; cleared by [`zero_grads`].
    pub grad: ArrayD<F>,
}

impl<F: Real> Param<F> {
    /// All-zero parameter (biases).
    pub fn zeros(shape: &[usize]) -> Self {
        Param {
            value: ArrayD::zeros(IxDyn(shape)),
            grad: ArrayD::zeros(IxDyn(shape)),
        }
    }

    /// Fan-in-scaled uniform init `U(−1/√fan_in, 1/√fan_in)`.
    pub fn uniform(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let value = ArrayD::from_shape_fn(IxDyn(shape), |_| {
            F::of(rng.random_range(-bound..=bound))
        });
        let grad = ArrayD::zeros(value.raw_dim());
        Param { value, grad }
    }

    /// Number of scalar entries.
    pub fn len(&self) -> usize {
        self.value.len()
    }

    /// Whether the parameter is empty (never the case for real layers).
    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Callback applied to every parameter of a [`Module`], keyed by a stable
/// dotted name.
pub trait ParamVisitor<F> {
    /// Visits one named parameter.
    fn visit(&mut self, name: &str, param: &mut Param<F>);
}

impl<F, G: FnMut(&str, &mut Param<F>)> ParamVisitor<F> for G {
    fn visit(&mut self, name: &str, param: &mut Param<F>) {
        self(name, param)
    }
}

/// Anything holding parameters that can be traversed by name.
pub trait Module<F> {
    /// Visits every parameter as `{prefix}.{local-name}`.
    fn visit_params(&mut self, prefix: &str, visitor: &mut dyn ParamVisitor<F>);
}

/// Total number of scalar parameters in a module.
pub fn param_count<F: Real>(module: &mut dyn Module<F>) -> usize {
    let mut n = 0;
    module.visit_params("", &mut |_: &str, p: &mut Param<F>| n += p.len());
    n
}

/// Clears every gradient accumulator.
pub fn zero_grads<F: Real>(module: &mut dyn Module<F>) {
    module.visit_params("", &mut |_: &str, p: &mut Param<F>| p.grad.fill(F::zero()));
}

/// True when every parameter value is finite (divergence guard).
pub fn all_finite<F: Real>(module: &mut dyn Module<F>) -> bool {
    let mut ok = true;
    module.visit_params("", &mut |_: &str, p: &mut Param<F>| {
        ok &= p.value.iter().all(|v| v.is_finite());
    });
    ok
}

/// Elementwise rectified linear unit.
pub fn relu<F: Real, D: Dimension>(x: &ndarray::Array<F, D>) -> ndarray::Array<F, D> {
    x.mapv(|v| if v > F::zero() { v } else { F::zero() })
}

/// Backward of [`relu`], gated on the forward *output* (`y > 0 ⇔ x > 0`).
pub fn relu_backward<F: Real, D: Dimension>(
    dy: &ndarray::Array<F, D>,
    y: &ndarray::Array<F, D>,
) -> ndarray::Array<F, D> {
    let mut dx = dy.clone();
    ndarray::Zip::from(&mut dx).and(y).for_each(|d, &v| {
        if v <= F::zero() {
            *d = F::zero();
        }
    });
    dx
}

/// Inverted dropout: zeroes entries with probability `p` and scales the
/// survivors by `1/(1−p)`, so the expected activation is unchanged and
/// inference needs no rescaling. Returns the scaled mask for backward.
/// `p = 0` or `training = false` passes the input through with no mask.
pub fn dropout<F: Real, D: Dimension>(
    x: &ndarray::Array<F, D>,
    p: F,
    training: bool,
    seed: u64,
) -> (ndarray::Array<F, D>, Option<ndarray::Array<F, D>>) {
    if !training || p == F::zero() {
        return (x.clone(), None);
    }
    let keep = F::one() - p;
    let scale = F::one() / keep;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pf = p.to_f64_lossy();
    let mask = ndarray::Array::from_shape_fn(x.raw_dim(), |_| {
        if rng.random::<f64>() < pf {
            F::zero()
        } else {
            scale
        }
    });
    (x * &mask, Some(mask))
}

/// Backward of [`dropout`] given the stored scaled mask.
pub fn dropout_backward<F: Real, D: Dimension>(
    dy: &ndarray::Array<F, D>,
    mask: Option<&ndarray::Array<F, D>>,
) -> ndarray::Array<F, D> {
    match mask {
        Some(m) => dy * m,
        None => dy.clone(),
    }
}

/// Adaptive-moment optimizer with name-keyed state, so the same
/// parameters always map to the same moments regardless of visit order.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    /// Learning rate (mutated by the plateau scheduler).
    pub lr: F,
    /// First-moment decay.
    pub beta1: F,
    /// Second-moment decay.
    pub beta2: F,
    /// Denominator floor.
    pub eps: F,
    steps: u64,
    state: HashMap<String, (ArrayD<F>, ArrayD<F>)>,
}

impl<F: Real> Adam<F> {
    /// Optimizer with the standard Adam defaults apart from the learning
    /// rate.
    pub fn new(lr: F) -> Self {
        Adam {
            lr,
            beta1: F::of(0.9),
            beta2: F::of(0.999),
            eps: F::of(1e-8),
            steps: 0,
            state: HashMap::new(),
        }
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update from the accumulated gradients.
    pub fn step(&mut self, module: &mut dyn Module<F>) {
        self.steps += 1;
        let t = F::from_u64(self.steps).unwrap();
        let bc1 = F::one() - self.beta1.powf(t);
        let bc2 = F::one() - self.beta2.powf(t);
        let (lr, b1, b2, eps) = (self.lr, self.beta1, self.beta2, self.eps);
        let state = &mut self.state;
        module.visit_params("", &mut |name: &str, p: &mut Param<F>| {
            let (m, v) = state.entry(name.to_string()).or_insert_with(|| {
                (ArrayD::zeros(p.value.raw_dim()), ArrayD::zeros(p.value.raw_dim()))
            });
            ndarray::Zip::from(&mut p.value)
                .and(&p.grad)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    *m = b1 * *m + (F::one() - b1) * g;
                    *v = b2 * *v + (F::one() - b2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                });
        });
    }
}

/// Learning-rate schedule that multiplies `lr` by `factor` after the
/// monitored metric has failed to improve for `patience` consecutive
/// observations.
#[derive(Debug, Clone)]
pub struct PlateauScheduler<F> {
    /// Multiplier applied on plateau (e.g. 0.1).
    pub factor: F,
    /// How many non-improving observations to tolerate.
    pub patience: usize,
    /// Floor for the learning rate.
    pub min_lr: F,
    best: Option<F>,
    stale: usize,
}

impl<F: Real> PlateauScheduler<F> {
    /// Scheduler with the given decay factor and patience.
    pub fn new(factor: F, patience: usize) -> Self {
        PlateauScheduler {
            factor,
            patience,
            min_lr: F::of(1e-8),
            best: None,
            stale: 0,
        }
    }

    /// Feeds one metric observation (lower is better); decays `lr` in
    /// place and reports whether a decay fired.
    pub fn observe(&mut self, metric: F, lr: &mut F) -> bool {
        let improved = match self.best {
            None => true,
            Some(b) => metric < b,
        };
        if improved {
            self.best = Some(metric);
            self.stale = 0;
            return false;
        }
        self.stale += 1;
        if self.stale > self.patience {
            self.stale = 0;
            let next = *lr * self.factor;
            *lr = if next > self.min_lr { next } else { self.min_lr };
            return true;
        }
        false
    }
}
