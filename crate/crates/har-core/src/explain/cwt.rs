//! Continuous wavelet transform scalograms with the Morlet wavelet,
//! computed by frequency-domain convolution on a zero-padded FFT grid.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::spectrum::{fft, next_pow2};

/// |CWT| magnitudes on a scales x time grid, highest frequency first.
#[derive(Debug, Clone, PartialEq)]
pub struct Scalogram {
    /// Row-major scales x T.
    pub magnitudes: Vec<f64>,
    pub n_scales: usize,
    pub t: usize,
    /// Center frequency of each scale row, in Hz, descending.
    pub freqs_hz: Vec<f64>,
    /// Wavelet scales in seconds, ascending.
    pub scales_s: Vec<f64>,
    pub omega0: f64,
}

impl Scalogram {
    pub fn at(&self, scale: usize, t: usize) -> f64 {
        self.magnitudes[scale * self.t + t]
    }
}

/// Fourier period factor of the Morlet wavelet: the oscillation frequency
/// a given scale responds to most strongly.
fn fourier_factor(omega0: f64) -> f64 {
    4.0 * core::f64::consts::PI / (omega0 + (2.0 + omega0 * omega0).sqrt())
}

/// Morlet CWT at `n_scales` log-spaced scales covering 0.5 Hz to the
/// Nyquist frequency.
pub fn cwt_morlet(series: &[f64], rate: f64, n_scales: usize, omega0: f64) -> Scalogram {
    assert!(series.len() >= 8, "need at least 8 samples");
    assert!(n_scales >= 2);
    let t = series.len();
    let dt = 1.0 / rate;
    let m = next_pow2(2 * t);
    let mut re = vec![0.0f64; m];
    let mut im = vec![0.0f64; m];
    let mean = series.iter().sum::<f64>() / t as f64;
    for (r, &v) in re.iter_mut().zip(series) {
        *r = v - mean;
    }
    fft(&mut re, &mut im, false);

    // Log-spaced analysis frequencies, Nyquist down to 0.5 Hz.
    let f_hi = rate / 2.0;
    let f_lo = 0.5f64;
    let ff = fourier_factor(omega0);
    let mut freqs_hz = Vec::with_capacity(n_scales);
    let mut scales_s = Vec::with_capacity(n_scales);
    for j in 0..n_scales {
        let f = f_hi * (f_lo / f_hi).powf(j as f64 / (n_scales - 1) as f64);
        freqs_hz.push(f);
        scales_s.push(1.0 / (f * ff));
    }

    // Angular frequency of each FFT bin.
    let mut omega = vec![0.0f64; m];
    for (k, w) in omega.iter_mut().enumerate() {
        let kk = if k <= m / 2 { k as f64 } else { k as f64 - m as f64 };
        *w = core::f64::consts::TAU * kk / (m as f64 * dt);
    }

    let norm0 = core::f64::consts::PI.powf(-0.25);
    let mut magnitudes = vec![0.0f64; n_scales * t];
    for (j, &s) in scales_s.iter().enumerate() {
        // Analytic Morlet in the frequency domain (positive bins only).
        let amp = norm0 * (core::f64::consts::TAU * s / dt).sqrt();
        let mut wr = vec![0.0f64; m];
        let mut wi = vec![0.0f64; m];
        for k in 0..m {
            if omega[k] > 0.0 {
                let d = s * omega[k] - omega0;
                let h = amp * (-0.5 * d * d).exp();
                wr[k] = re[k] * h;
                wi[k] = im[k] * h;
            }
        }
        fft(&mut wr, &mut wi, true);
        for i in 0..t {
            magnitudes[j * t + i] = (wr[i] * wr[i] + wi[i] * wi[i]).sqrt();
        }
    }
    Scalogram { magnitudes, n_scales, t, freqs_hz, scales_s, omega0 }
}
