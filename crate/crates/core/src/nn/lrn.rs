//! Cross-channel local response normalization.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::Tensor;

/// `b_c = a_c / (k + alpha * Σ_{c' ∈ window(c)} a_{c'}²)^beta`, window of `size` channels centred on `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrnParams {
    pub size: usize,
    pub k: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LrnParams {
    fn default() -> Self {
        LrnParams {
            size: 5,
            k: 2.0,
            alpha: 1e-4,
            beta: 0.75,
        }
    }
}

impl LrnParams {
    fn window(&self, c: usize, channels: usize) -> std::ops::Range<usize> {
        let half = self.size / 2;
        c.saturating_sub(half)..(c + half + 1).min(channels)
    }
}

/// Per-element `k + alpha * Σ a²` over the channel window.
fn denominators(x: &Tensor, p: &LrnParams) -> Result<Vec<f64>> {
    let (c, h, w) = x.dims3()?;
    let plane = h * w;
    let sq: Vec<f64> = x.data().iter().map(|v| v * v).collect();
    let mut d = vec![p.k; c * plane];
    for ch in 0..c {
        let out = &mut d[ch * plane..(ch + 1) * plane];
        for src in p.window(ch, c) {
            for (o, s) in out.iter_mut().zip(&sq[src * plane..(src + 1) * plane]) {
                *o += p.alpha * s;
            }
        }
    }
    Ok(d)
}

pub fn lrn_forward(x: &Tensor, params: &LrnParams) -> Result<Tensor> {
    let d = denominators(x, params)?;
    let data = x
        .data()
        .iter()
        .zip(&d)
        .map(|(a, d)| a * d.powf(-params.beta))
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

pub fn lrn_backward(x: &Tensor, params: &LrnParams, output_grad: &Tensor) -> Result<Tensor> {
    output_grad.expect_shape(x.shape())?;
    let (c, h, w) = x.dims3()?;
    let plane = h * w;
    let d = denominators(x, params)?;
    let a = x.data();
    let g = output_grad.data();
    // t_i = g_i a_i D_i^{-beta-1}
    let t: Vec<f64> = (0..a.len())
        .map(|i| g[i] * a[i] * d[i].powf(-params.beta - 1.0))
        .collect();
    let scale = 2.0 * params.alpha * params.beta;
    let mut grad: Vec<f64> = (0..a.len()).map(|i| g[i] * d[i].powf(-params.beta)).collect();
    for ch in 0..c {
        // the window relation is symmetric, so the channels whose window holds `ch` are window(ch)
        for src in params.window(ch, c) {
            for p in 0..plane {
                grad[ch * plane + p] -= scale * a[ch * plane + p] * t[src * plane + p];
            }
        }
    }
    Tensor::new(x.shape().to_vec(), grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_when_alpha_is_zero() {
        let p = LrnParams {
            size: 1,
            k: 1.0,
            alpha: 0.0,
            beta: 0.75,
        };
        let x = Tensor::new(vec![1, 2, 2], vec![-1.0, 0.5, 3.0, 7.0]).unwrap();
        assert_eq!(lrn_forward(&x, &p).unwrap(), x);
    }

    #[test]
    fn never_amplifies() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::new(vec![7, 3, 3], (0..63).map(|_| rng.random_range(-20.0..20.0)).collect())
            .unwrap();
        let p = LrnParams {
            k: 1.0,
            alpha: 0.3,
            ..Default::default()
        };
        let y = lrn_forward(&x, &p).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!(b.abs() <= a.abs());
        }
    }

    #[test]
    fn finite_difference_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        // a large alpha makes the cross terms matter
        let p = LrnParams {
            size: 3,
            k: 1.0,
            alpha: 0.2,
            beta: 0.75,
        };
        let x = Tensor::new(vec![6, 2, 3], (0..36).map(|_| rng.random_range(-2.0..2.0)).collect())
            .unwrap();
        let probe: Vec<f64> = (0..36).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = lrn_backward(&x, &p, &Tensor::new(vec![6, 2, 3], probe.clone()).unwrap()).unwrap();
        let report = grad_check(
            |v| {
                let t = Tensor::new(vec![6, 2, 3], v.to_vec()).unwrap();
                lrn_forward(&t, &p).unwrap().data().iter().zip(&probe).map(|(a, b)| a * b).sum()
            },
            x.data(),
            g.data(),
            1e-5,
            1e-4,
        );
        assert!(report.passed, "{report:?}");
    }
}
