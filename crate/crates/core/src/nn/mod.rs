//! Layer primitives with explicit forward and backward passes.

pub mod conv;
pub mod dense;
pub(crate) mod gemm;
pub mod gradcheck;
pub mod lrn;
pub mod optim;
pub mod pool;
pub mod resize;

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

pub use conv::{conv2d_backward, conv2d_forward, conv_output_size};
pub use dense::{fully_connected_backward, fully_connected_forward, relu_backward, relu_forward};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use lrn::{lrn_backward, lrn_forward, LrnParams};
pub use optim::{sgd_momentum_step, OptimizerState};
pub use pool::{maxpool_backward, maxpool_forward, PoolIndices};
pub use resize::{bilinear_plane, bilinear_resize, nearest_plane};

/// Gradient with respect to a layer's input plus one gradient per parameter tensor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerGrads {
    pub input_grad: Tensor,
    pub param_grads: Vec<Tensor>,
}
