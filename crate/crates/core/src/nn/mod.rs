//! A small CPU convolutional network toolkit with hand-written backward passes.
//!
//! Tensors are `(batch, channels, height, width)` in standard layout. Every layer
//! caches what its backward pass needs during a training-mode forward call; `eval`
//! runs without touching any state. Parameter gradients accumulate until
//! [`Module::zero_grad`].

mod conv;
mod layers;
mod norm;
mod optim;
mod state;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{Array4, ArrayD, IxDyn, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub use conv::{Conv2d, ConvTranspose2d};
pub use layers::{GlobalAvgPool, Linear, Relu, Tanh};
pub use norm::BatchNorm2d;
pub use optim::{Optimizer, OptimizerKind, OptimizerState};
pub(crate) use state::write_atomic;
pub use state::{load_state, read_state, save_state, write_state, NamedTensor, StateDict};

/// Floating-point element type of a network.
pub trait Scalar:
    LinalgScalar
    + Float
    + FromPrimitive
    + ScalarOperand
    + Send
    + Sync
    + Debug
    + Default
    + Serialize
    + DeserializeOwned
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + 'static
{
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn of(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

pub type Tensor<T> = Array4<T>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    ConvWeight,
    LinearWeight,
    Bias,
    NormScale,
    NormShift,
    RunningMean,
    RunningVar,
}

impl ParamKind {
    pub fn trainable(self) -> bool {
        !matches!(self, ParamKind::RunningMean | ParamKind::RunningVar)
    }
}

#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub kind: ParamKind,
    pub value: ArrayD<T>,
    pub grad: ArrayD<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, kind: ParamKind, shape: &[usize], fill: T) -> Self {
        Self {
            name: name.into(),
            kind,
            value: ArrayD::from_elem(IxDyn(shape), fill),
            grad: ArrayD::zeros(IxDyn(shape)),
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Anything that owns parameters.
pub trait Module<T: Scalar> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>));

    fn zero_grad(&mut self) {
        self.visit_mut(&mut |p| p.grad.fill(T::zero()));
    }

    /// Number of trainable scalars.
    fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| {
            if p.kind.trainable() {
                n += p.len()
            }
        });
        n
    }

    fn state_dict(&self) -> StateDict<T> {
        let mut out = Vec::new();
        self.visit(&mut |p| out.push(NamedTensor::from_array(&p.name, &p.value)));
        StateDict { tensors: out }
    }

    fn load_state_dict(&mut self, state: &StateDict<T>) -> crate::Result<()> {
        let mut it = state.tensors.iter();
        let mut err = None;
        self.visit_mut(&mut |p| {
            if err.is_some() {
                return;
            }
            match it.next() {
                Some(t) if t.name == p.name && t.shape == p.value.shape() => {
                    p.value = ArrayD::from_shape_vec(IxDyn(&t.shape), t.data.clone())
                        .expect("shape checked");
                }
                Some(t) => {
                    err = Some(format!(
                        "tensor `{}` {:?} does not match parameter `{}` {:?}",
                        t.name,
                        t.shape,
                        p.name,
                        p.value.shape()
                    ))
                }
                None => err = Some(format!("state is missing `{}`", p.name)),
            }
        });
        if err.is_none() && it.next().is_some() {
            err = Some("state has extra tensors".into());
        }
        match err {
            Some(e) => Err(crate::Error::InvalidArgument(e)),
            None => Ok(()),
        }
    }
}

/// Gaussian initialization: convolution and affine weights drawn i.i.d. from
/// `N(mean, std)`, biases and norm offsets zero, norm scales one, running stats reset.
pub fn init_weights<T: Scalar, M: Module<T> + ?Sized>(module: &mut M, mean: f64, std: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(mean, std.max(0.0)).expect("finite std");
    module.visit_mut(&mut |p| match p.kind {
        ParamKind::ConvWeight | ParamKind::LinearWeight => {
            if std == 0.0 {
                p.value.fill(T::of(mean));
            } else {
                p.value.mapv_inplace(|_| T::of(normal.sample(&mut rng)));
            }
        }
        ParamKind::Bias | ParamKind::NormShift | ParamKind::RunningMean => p.value.fill(T::zero()),
        ParamKind::NormScale | ParamKind::RunningVar => p.value.fill(T::one()),
    });
}

/// Per-parameter gradients flattened in visit order, trainable parameters only.
pub fn flat_grads<T: Scalar, M: Module<T> + ?Sized>(module: &M) -> Vec<T> {
    let mut out = Vec::new();
    module.visit(&mut |p| {
        if p.kind.trainable() {
            out.extend(p.grad.iter().copied())
        }
    });
    out
}

pub fn flat_values<T: Scalar, M: Module<T> + ?Sized>(module: &M) -> Vec<T> {
    let mut out = Vec::new();
    module.visit(&mut |p| {
        if p.kind.trainable() {
            out.extend(p.value.iter().copied())
        }
    });
    out
}

/// Adds `delta` to the `index`-th trainable scalar (visit order).
pub fn nudge<T: Scalar, M: Module<T> + ?Sized>(module: &mut M, index: usize, delta: T) {
    let mut seen = 0;
    module.visit_mut(&mut |p| {
        if !p.kind.trainable() {
            return;
        }
        if index >= seen && index < seen + p.len() {
            let slot = p.value.iter_mut().nth(index - seen).expect("in range");
            *slot += delta;
        }
        seen += p.len();
    });
}
