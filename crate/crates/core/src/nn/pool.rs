use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::conv::conv_output_size;
use crate::tensor::Tensor;

/// Argmax bookkeeping from a max-pooling forward pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolIndices {
    pub input_shape: Vec<usize>,
    /// Flat input index selected for every output element.
    pub argmax: Vec<usize>,
}

/// Max pooling over `C×H×W`. Padded cells never win; ties go to the lowest flat index.
pub fn maxpool_forward(
    x: &Tensor,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Result<(Tensor, PoolIndices)> {
    let (c, h, w) = x.dims3()?;
    let oh = conv_output_size(h, kernel, stride, pad)?;
    let ow = conv_output_size(w, kernel, stride, pad)?;
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    let data = x.data();
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            let y0 = (oy * stride) as isize - pad as isize;
            let ys = y0.max(0) as usize..((y0 + kernel as isize).min(h as isize)) as usize;
            for ox in 0..ow {
                let x0 = (ox * stride) as isize - pad as isize;
                let xs = x0.max(0) as usize..((x0 + kernel as isize).min(w as isize)) as usize;
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = usize::MAX;
                for iy in ys.clone() {
                    for ix in xs.clone() {
                        let idx = base + iy * w + ix;
                        // strict > keeps the earliest (lowest flat index) maximum
                        if data[idx] > best || best_idx == usize::MAX {
                            best = data[idx];
                            best_idx = idx;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    Ok((
        Tensor::new(vec![c, oh, ow], out)?,
        PoolIndices {
            input_shape: x.shape().to_vec(),
            argmax,
        },
    ))
}

/// Routes every output gradient to the input position that won the forward max.
pub fn maxpool_backward(indices: &PoolIndices, output_grad: &Tensor) -> Result<Tensor> {
    if output_grad.len() != indices.argmax.len() {
        return Err(crate::DiscError::Shape(format!(
            "pool gradient has {} values, expected {}",
            output_grad.len(),
            indices.argmax.len()
        )));
    }
    let mut grad = Tensor::zeros(&indices.input_shape);
    let g = grad.data_mut();
    for (&idx, &v) in indices.argmax.iter().zip(output_grad.data()) {
        g[idx] += v;
    }
    Ok(grad)
}
