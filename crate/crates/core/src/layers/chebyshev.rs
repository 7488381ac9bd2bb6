use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::numerics::{dot, init_parameter, Init, Parameter, Rng};
use crate::{Error, Result, Tensor};

/// `[T_0(x), .., T_order(x)]` from the three-term recurrence.
pub fn chebyshev_basis(x: f64, order: usize) -> Result<Vec<f64>> {
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::OutOfDomain { value: x });
    }
    let mut out = vec![0.0; order + 1];
    fill_basis(x, &mut out);
    Ok(out)
}

fn fill_basis(x: f64, out: &mut [f64]) {
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = x;
    }
    for j in 2..out.len() {
        out[j] = 2.0 * x * out[j - 1] - out[j - 2];
    }
}

/// `dT_i/dx = i * U_{i-1}(x)`, with U the second-kind polynomials. Stays
/// bounded at |x| = 1, unlike the arccos form.
fn fill_basis_derivative(x: f64, out: &mut [f64]) {
    out[0] = 0.0;
    let (mut u_prev, mut u_cur) = (0.0, 1.0); // U_{-1}, U_0
    for i in 1..out.len() {
        out[i] = i as f64 * u_cur;
        let next = 2.0 * x * u_cur - u_prev;
        u_prev = u_cur;
        u_cur = next;
    }
}

/// Channel-mixing KAN layer whose edge functions are Chebyshev expansions of
/// `tanh(x)`:
///
/// `out[o] = sum_j sum_i theta[o, j, i] * T_i(tanh(x[j]))`
///
/// applied independently at every (batch, timestep).
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyKanLayer {
    pub theta: Parameter,
    order: usize,
    in_dim: usize,
    out_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChebyKanGrads {
    pub input: Tensor,
    pub theta: Tensor,
}

impl ChebyKanLayer {
    pub fn new(
        name: &str,
        in_dim: usize,
        out_dim: usize,
        order: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let theta = init_parameter(
            rng,
            format!("{name}.theta"),
            &[out_dim, in_dim, order + 1],
            Init::UniformFanIn(in_dim * (order + 1)),
        )?;
        Ok(Self {
            theta,
            order,
            in_dim,
            out_dim,
        })
    }

    pub fn from_theta(name: impl Into<String>, theta: Tensor) -> Result<Self> {
        let [out_dim, in_dim, basis] = *theta.shape() else {
            return Err(Error::InvalidShape {
                shape: theta.shape().to_vec(),
                reason: "theta must be (out, in, order + 1)".into(),
            });
        };
        Ok(Self {
            theta: Parameter::from_value(name, theta),
            order: basis - 1,
            in_dim,
            out_dim,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize)> {
        let (b, l, c) = x.dims3()?;
        if c != self.in_dim {
            return Err(Error::ShapeMismatch {
                op: "chebyshev kan",
                left: x.shape().to_vec(),
                right: self.theta.shape().to_vec(),
            });
        }
        Ok((b, l))
    }

    /// Coefficients as a row-major (in_dim * (order + 1), out_dim) matrix,
    /// so per-position work runs along the contiguous output axis.
    fn theta_transposed(&self) -> Vec<f64> {
        let row = self.in_dim * (self.order + 1);
        let theta = self.theta.value.data();
        let mut t = vec![0.0; theta.len()];
        for o in 0..self.out_dim {
            for e in 0..row {
                t[e * self.out_dim + o] = theta[o * row + e];
            }
        }
        t
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, l) = self.check_input(x)?;
        let nb = self.order + 1;
        let no = self.out_dim;
        let theta_t = self.theta_transposed();
        let mut basis = vec![0.0; self.in_dim * nb];
        let mut out = vec![0.0; b * l * no];
        for (xs, ys) in x.data().chunks_exact(self.in_dim).zip(out.chunks_exact_mut(no)) {
            for (j, &v) in xs.iter().enumerate() {
                fill_basis(libm::tanh(v), &mut basis[j * nb..(j + 1) * nb]);
            }
            for (e, &p) in basis.iter().enumerate() {
                for (y, w) in ys.iter_mut().zip(&theta_t[e * no..(e + 1) * no]) {
                    *y += p * w;
                }
            }
        }
        Ok(Tensor::from_parts(alloc::vec![b, l, no], out))
    }

    pub fn backward(&self, x: &Tensor, upstream: &Tensor) -> Result<ChebyKanGrads> {
        let (b, l) = self.check_input(x)?;
        if upstream.shape() != [b, l, self.out_dim] {
            return Err(Error::ShapeMismatch {
                op: "chebyshev kan backward",
                left: upstream.shape().to_vec(),
                right: alloc::vec![b, l, self.out_dim],
            });
        }
        let nb = self.order + 1;
        let no = self.out_dim;
        let row = self.in_dim * nb;
        let theta_t = self.theta_transposed();
        let mut grad_theta_t = vec![0.0; theta_t.len()];
        let mut grad_x = vec![0.0; x.len()];
        let mut basis = vec![0.0; row];
        let mut dbasis = vec![0.0; row];
        let mut squashed = vec![0.0; self.in_dim];
        for ((xs, gs), gx) in x
            .data()
            .chunks_exact(self.in_dim)
            .zip(upstream.data().chunks_exact(no))
            .zip(grad_x.chunks_exact_mut(self.in_dim))
        {
            for (j, &v) in xs.iter().enumerate() {
                let u = libm::tanh(v);
                squashed[j] = u;
                fill_basis(u, &mut basis[j * nb..(j + 1) * nb]);
                fill_basis_derivative(u, &mut dbasis[j * nb..(j + 1) * nb]);
            }
            for j in 0..self.in_dim {
                let mut du = 0.0;
                for i in 0..nb {
                    let e = j * nb + i;
                    let w = &theta_t[e * no..(e + 1) * no];
                    let gt = &mut grad_theta_t[e * no..(e + 1) * no];
                    let p = basis[e];
                    for (t, g) in gt.iter_mut().zip(gs) {
                        *t += p * g;
                    }
                    if i > 0 {
                        du += dot(gs, w) * dbasis[e];
                    }
                }
                gx[j] = du * (1.0 - squashed[j] * squashed[j]);
            }
        }
        let mut grad_theta = vec![0.0; grad_theta_t.len()];
        for o in 0..no {
            for e in 0..row {
                grad_theta[o * row + e] = grad_theta_t[e * no + o];
            }
        }
        Ok(ChebyKanGrads {
            input: Tensor::from_parts(x.shape().to_vec(), grad_x),
            theta: Tensor::from_parts(self.theta.shape().to_vec(), grad_theta),
        })
    }
}
