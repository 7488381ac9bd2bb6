use alloc::format;
use alloc::vec;

use crate::numerics::{init_parameter, Init, Parameter, Rng};
use crate::{Error, Result, Tensor};

/// One 1-D kernel per channel (groups == channels), stride 1, symmetric
/// zero padding so the length is preserved. Cross-correlation orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthwiseConv {
    pub kernels: Parameter,
    pub bias: Parameter,
    channels: usize,
    kernel_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthwiseConvGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Tensor,
}

impl DepthwiseConv {
    pub fn new(name: &str, channels: usize, kernel_size: usize, rng: &mut Rng) -> Result<Self> {
        if kernel_size % 2 == 0 {
            return Err(Error::Config(format!("kernel size must be odd, got {kernel_size}")));
        }
        let kernels = init_parameter(
            rng,
            format!("{name}.kernel"),
            &[channels, kernel_size],
            Init::UniformFanIn(kernel_size),
        )?;
        let bias = init_parameter(rng, format!("{name}.bias"), &[channels], Init::UniformFanIn(kernel_size))?;
        Ok(Self {
            kernels,
            bias,
            channels,
            kernel_size,
        })
    }

    pub fn from_values(name: &str, kernels: Tensor, bias: Tensor) -> Result<Self> {
        let (channels, kernel_size) = kernels.dims2()?;
        if kernel_size % 2 == 0 || bias.shape() != [channels] {
            return Err(Error::ShapeMismatch {
                op: "depthwise conv",
                left: kernels.shape().to_vec(),
                right: bias.shape().to_vec(),
            });
        }
        Ok(Self {
            kernels: Parameter::from_value(format!("{name}.kernel"), kernels),
            bias: Parameter::from_value(format!("{name}.bias"), bias),
            channels,
            kernel_size,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    fn check(&self, x: &Tensor) -> Result<(usize, usize)> {
        let (b, l, c) = x.dims3()?;
        if c != self.channels {
            return Err(Error::ShapeMismatch {
                op: "depthwise conv",
                left: x.shape().to_vec(),
                right: self.kernels.shape().to_vec(),
            });
        }
        Ok((b, l))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (b, l) = self.check(x)?;
        let d = self.channels;
        let m = self.kernel_size;
        let pad = (m - 1) / 2;
        let k = self.kernels.value.data();
        let bias = self.bias.value.data();
        let xs = x.data();
        let mut out = vec![0.0; xs.len()];
        for bi in 0..b {
            let base = bi * l * d;
            for t in 0..l {
                let y = &mut out[base + t * d..base + (t + 1) * d];
                y.copy_from_slice(bias);
                for tap in 0..m {
                    let src = t + tap;
                    if src < pad || src - pad >= l {
                        continue;
                    }
                    let xr = &xs[base + (src - pad) * d..base + (src - pad + 1) * d];
                    for c in 0..d {
                        y[c] += k[c * m + tap] * xr[c];
                    }
                }
            }
        }
        Ok(Tensor::from_parts(x.shape().to_vec(), out))
    }

    pub fn backward(&self, x: &Tensor, upstream: &Tensor) -> Result<DepthwiseConvGrads> {
        let (b, l) = self.check(x)?;
        if upstream.shape() != x.shape() {
            return Err(Error::ShapeMismatch {
                op: "depthwise conv backward",
                left: upstream.shape().to_vec(),
                right: x.shape().to_vec(),
            });
        }
        let d = self.channels;
        let m = self.kernel_size;
        let pad = (m - 1) / 2;
        let k = self.kernels.value.data();
        let xs = x.data();
        let gs = upstream.data();
        let mut gx = vec![0.0; xs.len()];
        let mut gk = vec![0.0; k.len()];
        let mut gb = vec![0.0; d];
        for bi in 0..b {
            let base = bi * l * d;
            for t in 0..l {
                let g = &gs[base + t * d..base + (t + 1) * d];
                for c in 0..d {
                    gb[c] += g[c];
                }
                for tap in 0..m {
                    let src = t + tap;
                    if src < pad || src - pad >= l {
                        continue;
                    }
                    let off = base + (src - pad) * d;
                    for c in 0..d {
                        gk[c * m + tap] += g[c] * xs[off + c];
                        gx[off + c] += g[c] * k[c * m + tap];
                    }
                }
            }
        }
        Ok(DepthwiseConvGrads {
            input: Tensor::from_parts(x.shape().to_vec(), gx),
            kernels: Tensor::from_parts(self.kernels.shape().to_vec(), gk),
            bias: Tensor::from_parts(alloc::vec![d], gb),
        })
    }
}
