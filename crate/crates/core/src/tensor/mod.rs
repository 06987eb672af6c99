//! Differentiable dense tensors on a reverse-mode tape.
//!
//! The engine covers exactly the layer set the models in this crate need:
//! convolutions (forward, transposed), dense layers, the usual activations,
//! batch normalization, dropout, max pooling and the loss heads. Backward
//! rules are emitted as tape operations, so a gradient is itself a tape
//! value and can be differentiated again — this is what the critic's
//! input-gradient penalty relies on.
//!
//! Element type is generic: tests run `f64` for tight finite-difference
//! tolerances, training runs `f32`.

mod adam;
mod checkpoint;
mod conv;
mod network;
mod tape;

pub use adam::{adam_step_params, AdamConfig};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, CheckpointDescriptor, CheckpointError, NetworkRecord,
};
pub use conv::{conv_output_dims, Padding};
pub use network::{
    accumulate_grads_multi, apply_activation, input_gradient_norm, Activation, ForwardPass, Init,
    Layer, LayerSpec, Mode, Network,
};
pub use tape::{NodeId, Tape};

use std::fmt;

/// Numeric element of a tensor. `f64` in test mode, `f32` in train mode.
pub trait Element:
    num_traits::Float + Default + fmt::Debug + Send + Sync + 'static
{
    fn of_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn of_f32(v: f32) -> Self;
    fn as_f32(self) -> f32;
}

impl Element for f32 {
    fn of_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn of_f32(v: f32) -> Self {
        v
    }
    fn as_f32(self) -> f32 {
        self
    }
}

impl Element for f64 {
    fn of_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn of_f32(v: f32) -> Self {
        v as f64
    }
    fn as_f32(self) -> f32 {
        self as f32
    }
}

/// Number of elements for a shape.
pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// A trainable value with its gradient and Adam state, all one shape.
#[derive(Debug, Clone)]
pub struct Parameter<E: Element> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<E>,
    pub grad: Vec<E>,
    pub adam_m: Vec<E>,
    pub adam_v: Vec<E>,
    pub step_count: u64,
}

impl<E: Element> Parameter<E> {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, value: Vec<E>) -> Self {
        let n = numel(&shape);
        assert_eq!(n, value.len(), "parameter value length must match shape");
        Parameter {
            name: name.into(),
            shape,
            value,
            grad: vec![E::zero(); n],
            adam_m: vec![E::zero(); n],
            adam_v: vec![E::zero(); n],
            step_count: 0,
        }
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grad {
            *g = E::zero();
        }
    }
}

/// Errors raised by tensor and network operations.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorError {
    /// Two shapes that had to agree did not.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// An argument was outside its valid range.
    InvalidArgument { op: &'static str, message: String },
    /// `backward` was called on a non-scalar output.
    NonScalarLoss { shape: Vec<usize> },
    /// A class label exceeded the number of classes.
    LabelOutOfRange { label: usize, classes: usize },
    /// The network contains a layer the input-gradient penalty cannot
    /// differentiate twice.
    UnsupportedLayer { layer: String },
    /// A gradient turned non-finite; the optimizer step was aborted.
    NonFiniteGradient { parameter: String, index: usize },
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch between {lhs:?} and {rhs:?}")
            }
            TensorError::InvalidArgument { op, message } => write!(f, "{op}: {message}"),
            TensorError::NonScalarLoss { shape } => {
                write!(f, "backward requires a scalar loss, got shape {shape:?}")
            }
            TensorError::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} out of range for {classes} classes")
            }
            TensorError::UnsupportedLayer { layer } => {
                write!(f, "layer `{layer}` is not supported for double backprop")
            }
            TensorError::NonFiniteGradient { parameter, index } => write!(
                f,
                "non-finite gradient in parameter `{parameter}` at element {index}; step aborted"
            ),
        }
    }
}

impl std::error::Error for TensorError {}

pub type TensorResult<T> = Result<T, TensorError>;
