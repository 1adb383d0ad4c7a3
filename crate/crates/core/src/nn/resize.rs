//! Image-plane resampling.

use crate::error::{DiscError, Result};
use crate::tensor::Tensor;

/// Source coordinate pair and blend factor for one output index (half-pixel centres).
#[inline]
fn taps(out: usize, in_len: usize, out_len: usize) -> (usize, usize, f64) {
    let scale = in_len as f64 / out_len as f64;
    let src = ((out as f64 + 0.5) * scale - 0.5).max(0.0);
    let lo = (src.floor() as usize).min(in_len - 1);
    let hi = (lo + 1).min(in_len - 1);
    (lo, hi, src - lo as f64)
}

/// Bilinear resampling of one `h×w` plane with half-pixel (align-corners = false) centres.
pub fn bilinear_plane(src: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let xs: Vec<_> = (0..out_w).map(|x| taps(x, w, out_w)).collect();
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let (y0, y1, fy) = taps(y, h, out_h);
        for &(x0, x1, fx) in &xs {
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Bilinear resize of every channel of a `C×H×W` tensor.
pub fn bilinear_resize(x: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    if out_h == 0 || out_w == 0 {
        return Err(DiscError::InvalidArgument("resize target must be at least 1×1".into()));
    }
    let (c, h, w) = x.dims3()?;
    let mut data = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        data.extend(bilinear_plane(x.channel(ch), h, w, out_h, out_w));
    }
    Tensor::new(vec![c, out_h, out_w], data)
}

/// Nearest-neighbour resampling of one plane (pixel centres).
pub fn nearest_plane<T: Copy>(src: &[T], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<T> {
    let pick = |o: usize, n: usize, out: usize| (((o as f64 + 0.5) * n as f64 / out as f64) as usize).min(n - 1);
    let mut out = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let sy = pick(y, h, out_h);
        for x in 0..out_w {
            out.push(src[sy * w + pick(x, w, out_w)]);
        }
    }
    out
}
