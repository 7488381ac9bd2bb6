//! Dense tensors, parameters, the deterministic generator and the
//! finite-difference gradient oracle.

mod finite_diff;
mod param;
mod rng;
mod tensor;

pub use finite_diff::{finite_difference_grad, relative_error, GRADCHECK_EPS, GRADCHECK_TOL};
pub use param::{init_parameter, Init, Parameter};
pub use rng::Rng;
pub use tensor::{ElementwiseOp, Operand, Tensor};

/// Inner product with four interleaved partial sums, so the compiler can
/// vectorize it. The summation order is fixed for a given length.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
