use alloc::format;

use super::Tensor;
use crate::{Error, Result};

/// Step used by every gradient check.
pub const GRADCHECK_EPS: f64 = 1e-6;
/// Maximum accepted [`relative_error`] between analytic and numeric gradients.
pub const GRADCHECK_TOL: f64 = 1e-5;

/// `|a - b| / max(1, |a|, |b|)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    libm::fabs(a - b) / f64::max(1.0, f64::max(libm::fabs(a), libm::fabs(b)))
}

/// Central-difference gradient of a scalar function, one coordinate at a time.
pub fn finite_difference_grad<F>(mut f: F, x: &Tensor, eps: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> f64,
{
    if !(eps > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {eps}")));
    }
    let mut probe = x.clone();
    let mut grad = Tensor::from_parts(x.shape().to_vec(), alloc::vec![0.0; x.len()]);
    for j in 0..x.len() {
        let orig = x.data()[j];
        probe.data_mut()[j] = orig + eps;
        let plus = f(&probe);
        probe.data_mut()[j] = orig - eps;
        let minus = f(&probe);
        probe.data_mut()[j] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite {
                stage: format!("finite difference at coordinate {j}"),
                index: j,
            });
        }
        grad.data_mut()[j] = (plus - minus) / (2.0 * eps);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor {
        Tensor::new(&[v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn sum_of_squares() {
        let g = finite_difference_grad(|x| x.data().iter().map(|v| v * v).sum(), &t(&[3.0]), 1e-6)
            .unwrap();
        assert!((g.data()[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let g = finite_difference_grad(|_| 4.2, &t(&[1.0, -2.0, 5.0]), 1e-6).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tanh_at_origin() {
        let g = finite_difference_grad(|x| x.tanh().sum(), &t(&[0.0]), 1e-6).unwrap();
        assert!((g.data()[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn non_finite_reports_coordinate() {
        let err = finite_difference_grad(
            |x| if x.data()[1] > 0.5 { f64::INFINITY } else { 0.0 },
            &t(&[0.0, 0.5]),
            1e-6,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1, .. }));
        assert!(finite_difference_grad(|_| 0.0, &t(&[0.0]), 0.0).is_err());
    }
}
