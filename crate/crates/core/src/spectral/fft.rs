use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

/// Prime factors above this go through Bluestein instead of a direct
/// O(p^2) butterfly.
const MAX_DIRECT_RADIX: usize = 13;

/// Precomputed forward complex DFT of one length.
///
/// Lengths whose prime factors are all small use recursive mixed-radix
/// decimation in time; anything else is rewritten as a chirp convolution
/// (Bluestein) evaluated with a power-of-two plan.
#[derive(Debug, Clone)]
pub struct FftPlan {
    len: usize,
    factors: Vec<usize>,
    /// `exp(-2*pi*i*j/len)` for `j < len`.
    twiddles: Vec<Complex64>,
    bluestein: Option<Box<Bluestein>>,
}

#[derive(Debug, Clone)]
struct Bluestein {
    chirp: Vec<Complex64>,
    kernel_spectrum: Vec<Complex64>,
    inner: FftPlan,
}

fn prime_factors(mut n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    // radix 4 first keeps the recursion shallow for the common power-of-two tails
    while n % 4 == 0 {
        out.push(4);
        n /= 4;
    }
    let mut p = 2;
    while p * p <= n {
        while n % p == 0 {
            out.push(p);
            n /= p;
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

fn unit_root(j: usize, n: usize) -> Complex64 {
    let angle = -2.0 * PI * (j as f64) / (n as f64);
    Complex64::new(libm::cos(angle), libm::sin(angle))
}

impl FftPlan {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "FFT length must be positive");
        let factors = prime_factors(len);
        let needs_bluestein = factors.iter().any(|&p| p > MAX_DIRECT_RADIX && p != 4);
        if needs_bluestein {
            let conv_len = (2 * len - 1).next_power_of_two();
            let inner = FftPlan::new(conv_len);
            // chirp[n] = exp(-i*pi*n^2/len); n^2 reduced mod 2*len to keep the angle small
            let chirp: Vec<Complex64> = (0..len)
                .map(|n| {
                    let k = (n * n) % (2 * len);
                    let angle = -PI * (k as f64) / (len as f64);
                    Complex64::new(libm::cos(angle), libm::sin(angle))
                })
                .collect();
            let mut kernel = vec![Complex64::new(0.0, 0.0); conv_len];
            kernel[0] = chirp[0].conj();
            for n in 1..len {
                kernel[n] = chirp[n].conj();
                kernel[conv_len - n] = chirp[n].conj();
            }
            inner.forward(&mut kernel);
            return Self {
                len,
                factors: Vec::new(),
                twiddles: Vec::new(),
                bluestein: Some(Box::new(Bluestein {
                    chirp,
                    kernel_spectrum: kernel,
                    inner,
                })),
            };
        }
        let twiddles = (0..len).map(|j| unit_root(j, len)).collect();
        Self {
            len,
            factors,
            twiddles,
            bluestein: None,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// In-place forward DFT, `X[k] = sum_n x[n] exp(-2*pi*i*k*n/len)`.
    pub fn forward(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len, "FFT buffer length");
        if self.len == 1 {
            return;
        }
        if let Some(b) = &self.bluestein {
            b.run(data);
            return;
        }
        let input = data.to_vec();
        let mut scratch = vec![Complex64::new(0.0, 0.0); MAX_DIRECT_RADIX.max(4)];
        self.dit(&input, 1, data, &self.factors, &mut scratch);
    }

    /// In-place unnormalized inverse DFT (positive exponent).
    pub fn inverse(&self, data: &mut [Complex64]) {
        for v in data.iter_mut() {
            *v = v.conj();
        }
        self.forward(data);
        for v in data.iter_mut() {
            *v = v.conj();
        }
    }

    fn dit(
        &self,
        input: &[Complex64],
        stride: usize,
        out: &mut [Complex64],
        factors: &[usize],
        scratch: &mut [Complex64],
    ) {
        let n = out.len();
        if n == 1 {
            out[0] = input[0];
            return;
        }
        let p = factors[0];
        let m = n / p;
        for r in 0..p {
            self.dit(
                &input[r * stride..],
                stride * p,
                &mut out[r * m..(r + 1) * m],
                &factors[1..],
                scratch,
            );
        }
        let step = self.len / n;
        let radix_step = self.len / p;
        for k in 0..m {
            for r in 0..p {
                scratch[r] = out[r * m + k] * self.twiddles[(r * k * step) % self.len];
            }
            match p {
                2 => {
                    let (a, b) = (scratch[0], scratch[1]);
                    out[k] = a + b;
                    out[k + m] = a - b;
                }
                4 => {
                    let (a, b, c, d) = (scratch[0], scratch[1], scratch[2], scratch[3]);
                    let apc = a + c;
                    let amc = a - c;
                    let bpd = b + d;
                    // (b - d) * -i
                    let bmd = b - d;
                    let bmd_rot = Complex64::new(bmd.im, -bmd.re);
                    out[k] = apc + bpd;
                    out[k + m] = amc + bmd_rot;
                    out[k + 2 * m] = apc - bpd;
                    out[k + 3 * m] = amc - bmd_rot;
                }
                _ => {
                    for q in 0..p {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for r in 0..p {
                            acc += scratch[r] * self.twiddles[((r * q) % p) * radix_step];
                        }
                        out[k + q * m] = acc;
                    }
                }
            }
        }
    }
}

impl Bluestein {
    fn run(&self, data: &mut [Complex64]) {
        let n = self.chirp.len();
        let m = self.kernel_spectrum.len();
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for i in 0..n {
            buf[i] = data[i] * self.chirp[i];
        }
        self.inner.forward(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.kernel_spectrum) {
            *b *= k;
        }
        self.inner.inverse(&mut buf);
        let scale = 1.0 / m as f64;
        for i in 0..n {
            data[i] = buf[i] * self.chirp[i] * scale;
        }
    }
}
