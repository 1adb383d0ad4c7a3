use crate::error::{DiscError, Result};
use crate::nn::gemm::{gemm, MatRef};
use crate::nn::LayerGrads;
use crate::tensor::Tensor;

pub fn relu_forward(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Subgradient at exactly zero is zero.
pub fn relu_backward(x: &Tensor, output_grad: &Tensor) -> Result<Tensor> {
    output_grad.expect_shape(x.shape())?;
    let data = x
        .data()
        .iter()
        .zip(output_grad.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

fn fc_dims(x: &Tensor, weights: &Tensor) -> Result<(usize, usize)> {
    let [m, d] = weights.shape()[..] else {
        return Err(DiscError::Shape(format!(
            "fully connected weights must be M×D, got {:?}",
            weights.shape()
        )));
    };
    if x.len() != d {
        return Err(DiscError::Shape(format!(
            "fully connected layer expects {d} inputs, got {}",
            x.len()
        )));
    }
    Ok((m, d))
}

/// `y = W·x + b` on the flattened input.
pub fn fully_connected_forward(x: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (m, d) = fc_dims(x, weights)?;
    bias.expect_shape(&[m])?;
    let mut y = bias.data().to_vec();
    gemm(
        MatRef::new(weights.data(), m, d),
        MatRef::new(x.data(), d, 1),
        1.0,
        &mut y,
    );
    Tensor::new(vec![m], y)
}

/// Gradients of [`fully_connected_forward`]; the input gradient keeps the input's shape.
pub fn fully_connected_backward(
    x: &Tensor,
    weights: &Tensor,
    output_grad: &Tensor,
) -> Result<LayerGrads> {
    let (m, d) = fc_dims(x, weights)?;
    if output_grad.len() != m {
        return Err(DiscError::Shape(format!(
            "fully connected gradient has {} values, expected {m}",
            output_grad.len()
        )));
    }
    let mut dw = vec![0.0; m * d];
    gemm(
        MatRef::new(output_grad.data(), m, 1),
        MatRef::new(x.data(), 1, d),
        0.0,
        &mut dw,
    );
    let mut dx = vec![0.0; d];
    gemm(
        MatRef::new(weights.data(), m, d).t(),
        MatRef::new(output_grad.data(), m, 1),
        0.0,
        &mut dx,
    );
    Ok(LayerGrads {
        input_grad: Tensor::new(x.shape().to_vec(), dx)?,
        param_grads: vec![
            Tensor::new(vec![m, d], dw)?,
            Tensor::new(vec![m], output_grad.data().to_vec())?,
        ],
    })
}
