//! Central finite-difference verification of analytic gradients.

/// Outcome of [`grad_check`].
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_index: Option<usize>,
    pub numeric: Vec<f64>,
    pub passed: bool,
}

/// Relative error `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of the scalar function `f` at `params`.
pub fn grad_check<F>(mut f: F, params: &[f64], analytic: &[f64], epsilon: f64, tolerance: f64) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len(), "one analytic entry per parameter");
    let mut x = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    let mut worst = (0.0f64, None);
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + epsilon;
        let plus = f(&x);
        x[i] = orig - epsilon;
        let minus = f(&x);
        x[i] = orig;
        let n = (plus - minus) / (2.0 * epsilon);
        let err = relative_error(analytic[i], n);
        if err > worst.0 || worst.1.is_none() {
            worst = (err, Some(i));
        }
        numeric.push(n);
    }
    GradCheckReport {
        max_relative_error: worst.0,
        worst_index: worst.1,
        passed: worst.0 < tolerance,
        numeric,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_is_exact() {
        let coeffs = [2.0, -3.5, 0.25];
        let r = grad_check(
            |x| x.iter().zip(&coeffs).map(|(a, b)| a * b).sum(),
            &[1.0, 2.0, 3.0],
            &coeffs,
            1e-5,
            1e-8,
        );
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn quadratic_at_three() {
        let r = grad_check(|x| x[0] * x[0], &[3.0], &[6.0], 1e-5, 1e-6);
        assert!((r.numeric[0] - 6.0).abs() < 1e-6);
        assert!(r.passed);
    }

    #[test]
    fn wrong_gradient_fails() {
        let r = grad_check(|x| x[0] * x[0], &[3.0], &[5.0], 1e-5, 1e-4);
        assert!(!r.passed);
        assert_eq!(r.worst_index, Some(0));
    }
}
