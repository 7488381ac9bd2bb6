//! Frequency-domain machinery: real FFT pair, moving-average downsampling,
//! spectral (band-limited) upsampling and its adjoint, band residuals and the
//! effective-frequency counter.

mod fft;
mod real;
mod resample;

pub use fft::FftPlan;
pub use real::{irfft, rfft, RealFft, Spectrum};
pub use resample::{
    band_residual, effective_frequency_count, frequency_upsample, linear_interp_upsample,
    moving_average_downsample, FrequencyUpsampler, LinearInterpUpsampler,
};

pub use num_complex::Complex64;
