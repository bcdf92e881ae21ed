use std::fmt;

use super::tape::{Tape, Var};
use crate::tensor::Tensor;

/// A non-finite evaluation met while checking gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckFailure {
    pub coordinate: usize,
    pub reason: String,
}

impl fmt::Display for GradCheckFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "gradient check failed at coordinate {}: {}", self.coordinate, self.reason)
    }
}

impl std::error::Error for GradCheckFailure {}

/// Compares reverse-mode gradients of a scalar function with central
/// differences.
///
/// Returns `max_i |g_i - fd_i| / max(1, |g_i|)`.
pub fn grad_check<F>(f: F, point: &Tensor, step: f64) -> Result<f64, GradCheckFailure>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Var<'t>,
{
    let eval = |x: Tensor| -> f64 {
        let tape = Tape::new();
        let v = tape.leaf(x);
        f(&tape, v).item()
    };

    let tape = Tape::new();
    let x = tape.leaf(point.clone());
    let y = f(&tape, x);
    if !y.item().is_finite() {
        return Err(GradCheckFailure { coordinate: 0, reason: format!("f(x) = {}", y.item()) });
    }
    let analytic = tape.backward(y).map_err(|e| GradCheckFailure { coordinate: 0, reason: e.to_string() })?.get(x);

    let mut worst: f64 = 0.0;
    for i in 0..point.len() {
        let mut plus = point.clone();
        plus.data_mut()[i] += step;
        let mut minus = point.clone();
        minus.data_mut()[i] -= step;
        let (fp, fm) = (eval(plus), eval(minus));
        if !fp.is_finite() || !fm.is_finite() {
            return Err(GradCheckFailure { coordinate: i, reason: format!("f(x+h) = {fp}, f(x-h) = {fm}") });
        }
        let fd = (fp - fm) / (2.0 * step);
        let g = analytic.data()[i];
        if !g.is_finite() {
            return Err(GradCheckFailure { coordinate: i, reason: format!("gradient = {g}") });
        }
        worst = worst.max((g - fd).abs() / g.abs().max(1.0));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_form() {
        let a = Tensor::from_shape([3, 3], vec![2.0, 0.5, 0.1, 0.5, 1.0, 0.2, 0.1, 0.2, 3.0]);
        let x0 = Tensor::from_shape([3, 1], vec![0.3, -1.2, 0.7]);
        let err = grad_check(
            |tape, x| {
                let a = tape.constant(a.clone());
                x.t().matmul(a.matmul(x)).sum()
            },
            &x0,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn identity_function() {
        let x0 = Tensor::scalar(0.37);
        let err = grad_check(|_, x| x, &x0, 1e-5).unwrap();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn log_det_through_cholesky_diagonal() {
        // log det(L Lᵀ) = 2 Σ log diag(L); diag(L) = exp(raw diag)
        let raw = Tensor::from_fn2(3, 3, |i, j| 0.1 * (i as f64) - 0.2 * (j as f64) + 0.05);
        let err = grad_check(
            |tape, p| {
                let eye = tape.constant(Tensor::eye(3));
                let l = p.tril_mask(true) + p.exp() * eye;
                let diag = (l * eye).sum_axis(1) + tape.constant(Tensor::vector(vec![0.0; 3]));
                // sum of log of the (positive) diagonal entries, through a masked path
                (diag.ln().sum()).scale(2.0)
            },
            &raw,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn non_finite_reports_coordinate() {
        let x0 = Tensor::vector(vec![1.0, 0.0]);
        let r = grad_check(|_, x| x.ln().sum(), &x0, 1e-5);
        assert!(r.is_err());
    }
}
