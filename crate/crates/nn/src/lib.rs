//! Minimal CPU building blocks for convolutional segmentation networks.
//!
//! Everything is f64 and NCHW. Layers cache what they need during
//! [`Layer::forward_train`] and consume it in [`Layer::backward`], which
//! accumulates parameter gradients into [`Param::grad`] and returns the
//! gradient with respect to the layer input. [`Layer::forward`] is the
//! side-effect-free inference path.

pub mod act;
pub mod conv;
pub mod init;
pub mod norm;
pub mod pool;
pub mod tensor;

pub use act::{sigmoid, Relu};
pub use conv::{Conv2d, ConvTranspose2d};
pub use norm::BatchNorm2d;
pub use pool::{AvgPool2d, MaxPool2d};
pub use tensor::{concat_channels, split_channels, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
}

pub type Result<T> = std::result::Result<T, NnError>;

/// A trainable tensor together with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { value, grad }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(Tensor::zeros(shape))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

pub trait Layer {
    fn forward(&self, x: &Tensor) -> Tensor;

    fn forward_train(&mut self, x: &Tensor) -> Tensor;

    fn backward(&mut self, grad_out: &Tensor) -> Tensor;

    fn visit_params(&mut self, _prefix: &str, _f: &mut dyn FnMut(&str, &mut Param)) {}

    /// Non-trainable state such as normalization running statistics.
    fn visit_buffers(&mut self, _prefix: &str, _f: &mut dyn FnMut(&str, &mut Tensor)) {}

    /// Read-only view of every parameter value and buffer, in a fixed order.
    fn visit_state(&self, _prefix: &str, _f: &mut dyn FnMut(&str, &Tensor)) {}
}

/// Dotted parameter path, e.g. `join("features.conv0", "weight")`.
pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
