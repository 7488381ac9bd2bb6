use alloc::format;
use alloc::vec;

use crate::numerics::{dot, init_parameter, Init, Parameter, Rng};
use crate::{Error, Result, Tensor};

/// Which axis of a (batch, length, channels) tensor an affine map acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Channel,
    Time,
}

/// Affine map `y = W x + b` along one axis; the other axes pass through.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    pub weight: Parameter,
    pub bias: Parameter,
    axis: Axis,
    in_dim: usize,
    out_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LinearMap {
    pub fn new(name: &str, in_dim: usize, out_dim: usize, axis: Axis, rng: &mut Rng) -> Result<Self> {
        let weight = init_parameter(
            rng,
            format!("{name}.weight"),
            &[out_dim, in_dim],
            Init::UniformFanIn(in_dim),
        )?;
        let bias = init_parameter(rng, format!("{name}.bias"), &[out_dim], Init::UniformFanIn(in_dim))?;
        Ok(Self {
            weight,
            bias,
            axis,
            in_dim,
            out_dim,
        })
    }

    pub fn from_values(name: &str, weight: Tensor, bias: Tensor, axis: Axis) -> Result<Self> {
        let (out_dim, in_dim) = weight.dims2()?;
        if bias.shape() != [out_dim] {
            return Err(Error::ShapeMismatch {
                op: "linear",
                left: weight.shape().to_vec(),
                right: bias.shape().to_vec(),
            });
        }
        Ok(Self {
            weight: Parameter::from_value(format!("{name}.weight"), weight),
            bias: Parameter::from_value(format!("{name}.bias"), bias),
            axis,
            in_dim,
            out_dim,
        })
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    fn check(&self, x: &Tensor) -> Result<(usize, usize, usize)> {
        let dims = x.dims3()?;
        let extent = match self.axis {
            Axis::Channel => dims.2,
            Axis::Time => dims.1,
        };
        if extent != self.in_dim {
            return Err(Error::ShapeMismatch {
                op: "linear",
                left: x.shape().to_vec(),
                right: self.weight.shape().to_vec(),
            });
        }
        Ok(dims)
    }

    fn output_shape(&self, (b, l, c): (usize, usize, usize)) -> [usize; 3] {
        match self.axis {
            Axis::Channel => [b, l, self.out_dim],
            Axis::Time => [b, self.out_dim, c],
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dims = self.check(x)?;
        let (b, l, c) = dims;
        let w = self.weight.value.data();
        let bias = self.bias.value.data();
        let (ni, no) = (self.in_dim, self.out_dim);
        let xs = x.data();
        let mut out = vec![0.0; b * self.output_shape(dims)[1..].iter().product::<usize>()];
        match self.axis {
            Axis::Channel => {
                for (xr, yr) in xs.chunks_exact(ni).zip(out.chunks_exact_mut(no)) {
                    for o in 0..no {
                        let wr = &w[o * ni..(o + 1) * ni];
                        yr[o] = bias[o] + dot(wr, xr);
                    }
                }
            }
            Axis::Time => {
                for bi in 0..b {
                    let xb = &xs[bi * l * c..(bi + 1) * l * c];
                    let yb = &mut out[bi * no * c..(bi + 1) * no * c];
                    for o in 0..no {
                        let yr = &mut yb[o * c..(o + 1) * c];
                        yr.fill(bias[o]);
                        for i in 0..ni {
                            let wv = w[o * ni + i];
                            let xr = &xb[i * c..(i + 1) * c];
                            for ch in 0..c {
                                yr[ch] += wv * xr[ch];
                            }
                        }
                    }
                }
            }
        }
        Ok(Tensor::from_parts(self.output_shape(dims).to_vec(), out))
    }

    pub fn backward(&self, x: &Tensor, upstream: &Tensor) -> Result<LinearGrads> {
        let dims = self.check(x)?;
        let (b, l, c) = dims;
        if upstream.shape() != self.output_shape(dims) {
            return Err(Error::ShapeMismatch {
                op: "linear backward",
                left: upstream.shape().to_vec(),
                right: self.output_shape(dims).to_vec(),
            });
        }
        let w = self.weight.value.data();
        let (ni, no) = (self.in_dim, self.out_dim);
        let xs = x.data();
        let gs = upstream.data();
        let mut gx = vec![0.0; xs.len()];
        let mut gw = vec![0.0; w.len()];
        let mut gb = vec![0.0; no];
        match self.axis {
            Axis::Channel => {
                for ((xr, gr), gxr) in xs
                    .chunks_exact(ni)
                    .zip(gs.chunks_exact(no))
                    .zip(gx.chunks_exact_mut(ni))
                {
                    for o in 0..no {
                        let g = gr[o];
                        gb[o] += g;
                        let wr = &w[o * ni..(o + 1) * ni];
                        let gwr = &mut gw[o * ni..(o + 1) * ni];
                        for i in 0..ni {
                            gwr[i] += g * xr[i];
                            gxr[i] += g * wr[i];
                        }
                    }
                }
            }
            Axis::Time => {
                for bi in 0..b {
                    let xb = &xs[bi * l * c..(bi + 1) * l * c];
                    let gb_in = &gs[bi * no * c..(bi + 1) * no * c];
                    let gxb = &mut gx[bi * l * c..(bi + 1) * l * c];
                    for o in 0..no {
                        let gr = &gb_in[o * c..(o + 1) * c];
                        gb[o] += gr.iter().sum::<f64>();
                        for i in 0..ni {
                            let xr = &xb[i * c..(i + 1) * c];
                            gw[o * ni + i] += dot(gr, xr);
                            let wv = w[o * ni + i];
                            let gxr = &mut gxb[i * c..(i + 1) * c];
                            for ch in 0..c {
                                gxr[ch] += wv * gr[ch];
                            }
                        }
                    }
                }
            }
        }
        Ok(LinearGrads {
            input: Tensor::from_parts(x.shape().to_vec(), gx),
            weight: Tensor::from_parts(self.weight.shape().to_vec(), gw),
            bias: Tensor::from_parts(alloc::vec![no], gb),
        })
    }
}
