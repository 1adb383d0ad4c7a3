//! 2-D cross-correlation with zero padding, lowered to GEMM through im2col.

use crate::error::{DiscError, Result};
use crate::nn::gemm::{gemm, MatRef};
use crate::nn::LayerGrads;
use crate::tensor::Tensor;

/// Output side length of a conv or pooling window sweep.
pub fn conv_output_size(input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(DiscError::InvalidArgument("stride must be positive".into()));
    }
    if kernel == 0 || kernel > input + 2 * pad {
        return Err(DiscError::Shape(format!(
            "kernel {kernel} does not fit input {input} with padding {pad}"
        )));
    }
    Ok((input + 2 * pad - kernel) / stride + 1)
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    fn new(input: &Tensor, weights: &Tensor, stride: usize, pad: usize) -> Result<(Self, usize)> {
        let (c, h, w) = input.dims3()?;
        let [k, wc, kh, kw] = weights.shape()[..] else {
            return Err(DiscError::Shape(format!(
                "conv weights must be K×C×kh×kw, got {:?}",
                weights.shape()
            )));
        };
        if wc != c {
            return Err(DiscError::Shape(format!(
                "input has {c} channels but weights expect {wc}"
            )));
        }
        let out_h = conv_output_size(h, kh, stride, pad)?;
        let out_w = conv_output_size(w, kw, stride, pad)?;
        Ok((
            ConvGeometry {
                channels: c,
                height: h,
                width: w,
                kernel_h: kh,
                kernel_w: kw,
                stride,
                pad,
                out_h,
                out_w,
            },
            k,
        ))
    }

    fn patch_len(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }

    fn out_len(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Input coordinate for output position `o` and kernel tap `t`, if inside the image.
    #[inline]
    fn source(&self, o: usize, t: usize, limit: usize) -> Option<usize> {
        let pos = (o * self.stride + t) as isize - self.pad as isize;
        (pos >= 0 && (pos as usize) < limit).then_some(pos as usize)
    }
}

/// Rows are (channel, ky, kx); columns are output positions.
pub(crate) fn im2col(input: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let cols = g.out_len();
    let mut out = vec![0.0; g.patch_len() * cols];
    let plane = g.height * g.width;
    for c in 0..g.channels {
        let src = &input[c * plane..(c + 1) * plane];
        for ky in 0..g.kernel_h {
            for kx in 0..g.kernel_w {
                let row = (c * g.kernel_h + ky) * g.kernel_w + kx;
                let dst = &mut out[row * cols..(row + 1) * cols];
                for oy in 0..g.out_h {
                    let Some(iy) = g.source(oy, ky, g.height) else {
                        continue;
                    };
                    for ox in 0..g.out_w {
                        if let Some(ix) = g.source(ox, kx, g.width) {
                            dst[oy * g.out_w + ox] = src[iy * g.width + ix];
                        }
                    }
                }
            }
        }
    }
    out
}

fn col2im(cols: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let n = g.out_len();
    let plane = g.height * g.width;
    let mut out = vec![0.0; g.channels * plane];
    for c in 0..g.channels {
        let dst = &mut out[c * plane..(c + 1) * plane];
        for ky in 0..g.kernel_h {
            for kx in 0..g.kernel_w {
                let row = (c * g.kernel_h + ky) * g.kernel_w + kx;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..g.out_h {
                    let Some(iy) = g.source(oy, ky, g.height) else {
                        continue;
                    };
                    for ox in 0..g.out_w {
                        if let Some(ix) = g.source(ox, kx, g.width) {
                            dst[iy * g.width + ix] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Cross-correlates a `C×H×W` input with `K×C×kh×kw` weights and adds a per-channel bias.
pub fn conv2d_forward(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    Ok(conv2d_forward_cached(input, weights, bias, stride, pad)?.0)
}

/// Forward pass that also returns the im2col buffer for reuse in the backward pass.
pub(crate) fn conv2d_forward_cached(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<(Tensor, Vec<f64>)> {
    let (g, k) = ConvGeometry::new(input, weights, stride, pad)?;
    bias.expect_shape(&[k])?;
    let cols = im2col(input.data(), &g);
    let n = g.out_len();
    let mut out = vec![0.0; k * n];
    for (row, &b) in out.chunks_mut(n).zip(bias.data()) {
        row.fill(b);
    }
    gemm(
        MatRef::new(weights.data(), k, g.patch_len()),
        MatRef::new(&cols, g.patch_len(), n),
        1.0,
        &mut out,
    );
    Ok((Tensor::new(vec![k, g.out_h, g.out_w], out)?, cols))
}

/// Gradients of [`conv2d_forward`] with respect to input, weights and bias.
pub fn conv2d_backward(
    input: &Tensor,
    weights: &Tensor,
    stride: usize,
    pad: usize,
    output_grad: &Tensor,
) -> Result<LayerGrads> {
    let (g, _) = ConvGeometry::new(input, weights, stride, pad)?;
    let cols = im2col(input.data(), &g);
    conv2d_backward_cached(input, weights, stride, pad, output_grad, &cols, true)
}

pub(crate) fn conv2d_backward_cached(
    input: &Tensor,
    weights: &Tensor,
    stride: usize,
    pad: usize,
    output_grad: &Tensor,
    cols: &[f64],
    need_input_grad: bool,
) -> Result<LayerGrads> {
    let (g, k) = ConvGeometry::new(input, weights, stride, pad)?;
    output_grad.expect_shape(&[k, g.out_h, g.out_w])?;
    let n = g.out_len();
    let p = g.patch_len();
    let dy = MatRef::new(output_grad.data(), k, n);

    let mut dw = vec![0.0; k * p];
    gemm(dy, MatRef::new(cols, p, n).t(), 0.0, &mut dw);
    let db: Vec<f64> = output_grad.data().chunks(n).map(|r| r.iter().sum()).collect();

    let input_grad = if need_input_grad {
        let mut dcols = vec![0.0; p * n];
        gemm(MatRef::new(weights.data(), k, p).t(), dy, 0.0, &mut dcols);
        Tensor::new(input.shape().to_vec(), col2im(&dcols, &g))?
    } else {
        Tensor::zeros(input.shape())
    };
    Ok(LayerGrads {
        input_grad,
        param_grads: vec![
            Tensor::new(weights.shape().to_vec(), dw)?,
            Tensor::new(vec![k], db)?,
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct nested-loop convolution, independent of im2col/GEMM.
    fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Tensor {
        let (c, h, wd) = x.dims3().unwrap();
        let (k, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (wd + 2 * pad - kw) / stride + 1;
        let mut out = vec![0.0; k * oh * ow];
        for o in 0..k {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b.data()[o];
                    for ci in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x.data()[(ci * h + iy as usize) * wd + ix as usize]
                                    * w.data()[((o * c + ci) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    out[(o * oh + oy) * ow + ox] = acc;
                }
            }
        }
        Tensor::new(vec![k, oh, ow], out).unwrap()
    }

    #[test]
    fn single_tap() {
        let x = Tensor::new(vec![1, 1, 1], vec![3.0]).unwrap();
        let w = Tensor::new(vec![1, 1, 1, 1], vec![2.0]).unwrap();
        let b = Tensor::from_vec(vec![1.0]);
        assert_eq!(conv2d_forward(&x, &w, &b, 1, 0).unwrap().data(), &[7.0]);
    }

    #[test]
    fn sum_of_ones() {
        let x = Tensor::full(&[1, 3, 3], 1.0);
        let w = Tensor::full(&[1, 1, 3, 3], 1.0);
        let b = Tensor::from_vec(vec![0.0]);
        let y = conv2d_forward(&x, &w, &b, 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[9.0]);
    }

    #[test]
    fn matches_nested_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random(&[2, 5, 5], &mut rng);
        let w = random(&[3, 2, 3, 3], &mut rng);
        let b = random(&[3], &mut rng);
        let y = conv2d_forward(&x, &w, &b, 2, 1).unwrap();
        let want = naive_conv(&x, &w, &b, 2, 1);
        assert_eq!(y.shape(), &[3, 3, 3]);
        assert!(y.max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let x = Tensor::zeros(&[2, 4, 4]);
        let w = Tensor::zeros(&[1, 3, 3, 3]);
        let b = Tensor::zeros(&[1]);
        assert!(matches!(conv2d_forward(&x, &w, &b, 1, 0), Err(DiscError::Shape(_))));
    }

    #[test]
    fn output_size_floor_formula() {
        for h in 1..20 {
            for k in 1..=7 {
                for s in 1..=4 {
                    for p in 0..3 {
                        match conv_output_size(h, k, s, p) {
                            Ok(o) => assert_eq!(o, (h + 2 * p - k) / s + 1),
                            Err(_) => assert!(k > h + 2 * p),
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn zero_output_grad_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&[2, 4, 4], &mut rng);
        let w = random(&[2, 2, 3, 3], &mut rng);
        let g = conv2d_backward(&x, &w, 1, 1, &Tensor::zeros(&[2, 4, 4])).unwrap();
        assert!(g.input_grad.data().iter().all(|&v| v == 0.0));
        assert!(g.param_grads.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn bias_grad_is_channel_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&[1, 5, 5], &mut rng);
        let w = random(&[2, 1, 3, 3], &mut rng);
        let dy = random(&[2, 3, 3], &mut rng);
        let g = conv2d_backward(&x, &w, 1, 0, &dy).unwrap();
        for k in 0..2 {
            let want: f64 = dy.channel(k).iter().sum();
            assert!((g.param_grads[1].data()[k] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn finite_difference_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random(&[2, 6, 5], &mut rng);
        let w = random(&[3, 2, 3, 2], &mut rng);
        let b = random(&[3], &mut rng);
        let probe = random(&[3, 3, 3], &mut rng);
        let (stride, pad) = (2, 1);
        let g = conv2d_backward(&x, &w, stride, pad, &probe).unwrap();
        let loss = |x: &Tensor, w: &Tensor, b: &Tensor| {
            conv2d_forward(x, w, b, stride, pad).unwrap().dot(&probe)
        };

        let report = grad_check(
            |v| loss(&Tensor::new(x.shape().to_vec(), v.to_vec()).unwrap(), &w, &b),
            x.data(),
            g.input_grad.data(),
            1e-5,
            1e-4,
        );
        assert!(report.passed, "{report:?}");
        let report = grad_check(
            |v| loss(&x, &Tensor::new(w.shape().to_vec(), v.to_vec()).unwrap(), &b),
            w.data(),
            g.param_grads[0].data(),
            1e-5,
            1e-4,
        );
        assert!(report.passed, "{report:?}");
        let report = grad_check(
            |v| loss(&x, &w, &Tensor::from_vec(v.to_vec())),
            b.data(),
            g.param_grads[1].data(),
            1e-5,
            1e-4,
        );
        assert!(report.passed, "{report:?}");
    }
}
