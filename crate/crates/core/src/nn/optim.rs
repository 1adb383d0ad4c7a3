use serde::{Deserialize, Serialize};

use crate::error::{DiscError, Result};
use crate::tensor::Tensor;

/// Momentum SGD state; one velocity tensor per parameter tensor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerState {
    pub velocity: Vec<Tensor>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl OptimizerState {
    pub fn new(params: &[Tensor], learning_rate: f64, momentum: f64, weight_decay: f64) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(DiscError::InvalidArgument(format!(
                "learning rate must be non-negative, got {learning_rate}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(DiscError::InvalidArgument(format!(
                "momentum must lie in [0, 1), got {momentum}"
            )));
        }
        if !(weight_decay >= 0.0) {
            return Err(DiscError::InvalidArgument(format!(
                "weight decay must be non-negative, got {weight_decay}"
            )));
        }
        Ok(OptimizerState {
            velocity: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            learning_rate,
            momentum,
            weight_decay,
        })
    }
}

/// `v ← momentum·v − lr·(grad + decay·param)`, then `param ← param + v`.
pub fn sgd_momentum_step(params: &mut [Tensor], grads: &[Tensor], state: &mut OptimizerState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.velocity.len() {
        return Err(DiscError::Shape(format!(
            "{} params, {} grads, {} velocities",
            params.len(),
            grads.len(),
            state.velocity.len()
        )));
    }
    for ((p, g), v) in params.iter().zip(grads).zip(&state.velocity) {
        g.expect_shape(p.shape())?;
        v.expect_shape(p.shape())?;
        g.check_finite("gradient")?;
    }
    let (lr, mu, wd) = (state.learning_rate, state.momentum, state.weight_decay);
    for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut state.velocity) {
        for ((pv, gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vv = mu * *vv - lr * (gv + wd * *pv);
            *pv += *vv;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plain_sgd_without_momentum() {
        let mut p = vec![Tensor::from_vec(vec![1.0, -2.0])];
        let g = vec![Tensor::from_vec(vec![0.5, 4.0])];
        let mut s = OptimizerState::new(&p, 0.1, 0.0, 0.0).unwrap();
        sgd_momentum_step(&mut p, &g, &mut s).unwrap();
        assert!((p[0].data()[0] - 0.95).abs() < 1e-15);
        assert!((p[0].data()[1] + 2.4).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_zero_velocity_is_noop() {
        let mut p = vec![Tensor::from_vec(vec![3.0, 1.5])];
        let mut s = OptimizerState::new(&p, 0.5, 0.9, 0.0).unwrap();
        sgd_momentum_step(&mut p, &[Tensor::zeros(&[2])], &mut s).unwrap();
        assert_eq!(p[0].data(), &[3.0, 1.5]);
    }

    #[test]
    fn two_momentum_steps_by_hand() {
        // p0 = 1, g = 2, lr = 0.1, mu = 0.9, decay = 0.01
        // v1 = -0.1*(2 + 0.01*1) = -0.201;            p1 = 0.799
        // v2 = 0.9*v1 - 0.1*(2 + 0.01*0.799) = -0.1809 - 0.200799 = -0.381699
        // p2 = 0.799 - 0.381699 = 0.417301
        let mut p = vec![Tensor::from_vec(vec![1.0])];
        let g = vec![Tensor::from_vec(vec![2.0])];
        let mut s = OptimizerState::new(&p, 0.1, 0.9, 0.01).unwrap();
        sgd_momentum_step(&mut p, &g, &mut s).unwrap();
        assert!((p[0].data()[0] - 0.799).abs() < 1e-12);
        sgd_momentum_step(&mut p, &g, &mut s).unwrap();
        assert!((s.velocity[0].data()[0] + 0.381699).abs() < 1e-12);
        assert!((p[0].data()[0] - 0.417301).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = vec![Tensor::from_vec(vec![1.0])];
        let mut s = OptimizerState::new(&p, 0.1, 0.9, 0.0).unwrap();
        let err = sgd_momentum_step(&mut p, &[Tensor::from_vec(vec![f64::INFINITY])], &mut s);
        assert!(matches!(err, Err(DiscError::NonFinite(_))));
        assert_eq!(p[0].data(), &[1.0]);
    }

    proptest! {
        #[test]
        fn zero_learning_rate_is_identity(
            vals in prop::collection::vec(-10.0f64..10.0, 1..16),
            seed_grad in -5.0f64..5.0,
            steps in 1usize..5,
        ) {
            let mut p = vec![Tensor::from_vec(vals.clone())];
            let g = vec![Tensor::full(&[vals.len()], seed_grad)];
            let mut s = OptimizerState::new(&p, 0.0, 0.9, 5e-4).unwrap();
            for _ in 0..steps {
                sgd_momentum_step(&mut p, &g, &mut s).unwrap();
            }
            prop_assert_eq!(p[0].data(), &vals[..]);
        }
    }
}
