use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use super::FftPlan;
use crate::{Error, Result};

/// Non-redundant half spectrum of a real sequence: `len/2 + 1` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub coeffs: Vec<Complex64>,
    pub source_length: usize,
}

impl Spectrum {
    pub fn amplitudes(&self) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.norm()).collect()
    }
}

/// Real-input FFT pair for one length.
#[derive(Debug, Clone)]
pub struct RealFft {
    plan: FftPlan,
}

impl RealFft {
    pub fn new(len: usize) -> Self {
        Self {
            plan: FftPlan::new(len),
        }
    }

    pub fn len(&self) -> usize {
        self.plan.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bins(&self) -> usize {
        self.len() / 2 + 1
    }

    /// Writes the `len/2 + 1` unnormalized bins of `x` into `out`.
    pub fn forward_into(&self, x: &[f64], out: &mut Vec<Complex64>) {
        assert_eq!(x.len(), self.len());
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.plan.forward(&mut buf);
        buf.truncate(self.bins());
        // exact zeros for the self-conjugate bins
        buf[0].im = 0.0;
        if self.len() % 2 == 0 {
            let nyq = self.len() / 2;
            buf[nyq].im = 0.0;
        }
        *out = buf;
    }

    /// Inverse with `1/len` normalization. Imaginary parts of the DC and
    /// (even-length) Nyquist bins are ignored.
    pub fn inverse_into(&self, coeffs: &[Complex64], out: &mut [f64]) {
        let n = self.len();
        assert_eq!(coeffs.len(), self.bins());
        assert_eq!(out.len(), n);
        let mut full = vec![Complex64::new(0.0, 0.0); n];
        full[0] = Complex64::new(coeffs[0].re, 0.0);
        for k in 1..coeffs.len() {
            if 2 * k == n {
                full[k] = Complex64::new(coeffs[k].re, 0.0);
            } else {
                full[k] = coeffs[k];
                full[n - k] = coeffs[k].conj();
            }
        }
        self.plan.inverse(&mut full);
        let scale = 1.0 / n as f64;
        for (o, v) in out.iter_mut().zip(&full) {
            *o = v.re * scale;
        }
    }
}

pub fn rfft(x: &[f64]) -> Spectrum {
    let plan = RealFft::new(x.len());
    let mut coeffs = Vec::new();
    plan.forward_into(x, &mut coeffs);
    Spectrum {
        coeffs,
        source_length: x.len(),
    }
}

pub fn irfft(s: &Spectrum, out_length: usize) -> Result<Vec<f64>> {
    if out_length == 0 || s.coeffs.len() != out_length / 2 + 1 {
        return Err(Error::Config(format!(
            "irfft: {} coefficients cannot produce length {out_length} (need {})",
            s.coeffs.len(),
            out_length / 2 + 1
        )));
    }
    let mut out = vec![0.0; out_length];
    RealFft::new(out_length).inverse_into(&s.coeffs, &mut out);
    Ok(out)
}
