use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::{rfft, RealFft};
use crate::{Error, Result, Tensor};

/// Means of non-overlapping windows of `window` samples. The tail is padded
/// by repeating the last sample, so the output has `ceil(len / window)`
/// entries.
pub fn moving_average_downsample(x: &[f64], window: usize) -> Result<Vec<f64>> {
    if window < 2 {
        return Err(Error::Config(format!("moving-average window must be >= 2, got {window}")));
    }
    if x.is_empty() {
        return Err(Error::Config("cannot downsample an empty sequence".into()));
    }
    let last = x[x.len() - 1];
    let out_len = x.len().div_ceil(window);
    let out = (0..out_len)
        .map(|w| {
            let start = w * window;
            let sum: f64 = (start..start + window)
                .map(|i| if i < x.len() { x[i] } else { last })
                .sum();
            sum / window as f64
        })
        .collect();
    Ok(out)
}

/// Band-limited (trigonometric) interpolation from `in_len` to `out_len`
/// samples by zero-padding the real spectrum.
///
/// The spectrum is scaled by `out_len / in_len` so amplitudes survive, and an
/// even-length input's Nyquist bin is split evenly between the positive and
/// negative frequency, which yields the real minimal-energy interpolant.
/// Equal lengths give the identity.
#[derive(Debug, Clone)]
pub struct FrequencyUpsampler {
    short: RealFft,
    long: RealFft,
}

/// Piecewise-linear interpolation with both endpoints pinned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearInterpUpsampler {
    in_len: usize,
    out_len: usize,
}

fn check_lengths(in_len: usize, out_len: usize) -> Result<()> {
    if in_len == 0 {
        return Err(Error::Config("upsampling needs a non-empty input".into()));
    }
    if out_len < in_len {
        return Err(Error::Config(format!(
            "upsampling target {out_len} is shorter than input {in_len}"
        )));
    }
    Ok(())
}

impl FrequencyUpsampler {
    pub fn new(in_len: usize, out_len: usize) -> Result<Self> {
        check_lengths(in_len, out_len)?;
        Ok(Self {
            short: RealFft::new(in_len),
            long: RealFft::new(out_len),
        })
    }

    pub fn in_len(&self) -> usize {
        self.short.len()
    }

    pub fn out_len(&self) -> usize {
        self.long.len()
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let (n_in, n_out) = (self.in_len(), self.out_len());
        assert_eq!(x.len(), n_in);
        assert_eq!(out.len(), n_out);
        if n_in == n_out {
            out.copy_from_slice(x);
            return;
        }
        let mut spec = Vec::new();
        self.short.forward_into(x, &mut spec);
        let scale = n_out as f64 / n_in as f64;
        let mut padded = vec![Complex64::new(0.0, 0.0); self.long.bins()];
        for (p, c) in padded.iter_mut().zip(&spec) {
            *p = c * scale;
        }
        if n_in % 2 == 0 {
            padded[n_in / 2] *= 0.5;
        }
        self.long.inverse_into(&padded, out);
    }

    /// Transpose of [`apply`](Self::apply): truncate the long spectrum and
    /// invert at the short length. The scaling and Nyquist split cancel
    /// against the two-sided bin counting, so no extra factors appear.
    pub fn adjoint(&self, v: &[f64], out: &mut [f64]) {
        let (n_in, n_out) = (self.in_len(), self.out_len());
        assert_eq!(v.len(), n_out);
        assert_eq!(out.len(), n_in);
        if n_in == n_out {
            out.copy_from_slice(v);
            return;
        }
        let mut spec = Vec::new();
        self.long.forward_into(v, &mut spec);
        spec.truncate(self.short.bins());
        self.short.inverse_into(&spec, out);
    }
}

impl LinearInterpUpsampler {
    pub fn new(in_len: usize, out_len: usize) -> Result<Self> {
        check_lengths(in_len, out_len)?;
        Ok(Self { in_len, out_len })
    }

    pub fn in_len(&self) -> usize {
        self.in_len
    }

    pub fn out_len(&self) -> usize {
        self.out_len
    }

    /// (left index, right index, right weight) for output sample `n`.
    fn stencil(&self, n: usize) -> (usize, usize, f64) {
        if self.out_len == 1 || self.in_len == 1 {
            return (0, 0, 0.0);
        }
        let num = n * (self.in_len - 1);
        let den = self.out_len - 1;
        let i0 = num / den;
        let frac = (num % den) as f64 / den as f64;
        (i0, (i0 + 1).min(self.in_len - 1), frac)
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.in_len);
        assert_eq!(out.len(), self.out_len);
        for (n, o) in out.iter_mut().enumerate() {
            let (i0, i1, w) = self.stencil(n);
            *o = (1.0 - w) * x[i0] + w * x[i1];
        }
    }

    pub fn adjoint(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(v.len(), self.out_len);
        assert_eq!(out.len(), self.in_len);
        out.fill(0.0);
        for (n, &g) in v.iter().enumerate() {
            let (i0, i1, w) = self.stencil(n);
            out[i0] += (1.0 - w) * g;
            out[i1] += w * g;
        }
    }
}

pub fn frequency_upsample(x: &[f64], out_len: usize) -> Result<Vec<f64>> {
    let up = FrequencyUpsampler::new(x.len(), out_len)?;
    let mut out = vec![0.0; out_len];
    up.apply(x, &mut out);
    Ok(out)
}

pub fn linear_interp_upsample(x: &[f64], out_len: usize) -> Result<Vec<f64>> {
    let up = LinearInterpUpsampler::new(x.len(), out_len)?;
    let mut out = vec![0.0; out_len];
    up.apply(x, &mut out);
    Ok(out)
}

/// `x_i - upsample(x_next)` per channel, for (length, channels) tensors.
pub fn band_residual(x_i: &Tensor, x_next: &Tensor) -> Result<Tensor> {
    let (len, ch) = x_i.dims2()?;
    let (next_len, next_ch) = x_next.dims2()?;
    if ch != next_ch || next_len > len {
        return Err(Error::ShapeMismatch {
            op: "band_residual",
            left: x_i.shape().to_vec(),
            right: x_next.shape().to_vec(),
        });
    }
    let up = FrequencyUpsampler::new(next_len, len)?;
    let mut out = x_i.clone();
    let mut col = vec![0.0; next_len];
    let mut col_up = vec![0.0; len];
    for c in 0..ch {
        for t in 0..next_len {
            col[t] = x_next.data()[t * ch + c];
        }
        up.apply(&col, &mut col_up);
        for t in 0..len {
            out.data_mut()[t * ch + c] -= col_up[t];
        }
    }
    Ok(out)
}

/// Number of half-spectrum bins whose amplitude exceeds
/// `threshold_ratio * max amplitude`. An all-zero spectrum counts 0.
pub fn effective_frequency_count(x: &[f64], threshold_ratio: f64) -> usize {
    if x.is_empty() {
        return 0;
    }
    let amps = rfft(x).amplitudes();
    let max = amps.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    amps.iter().filter(|&&a| a > threshold_ratio * max).count()
}
