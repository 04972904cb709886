//! Small frequency-domain helpers shared by the feature extractor and the
//! wavelet scalogram: a direct DFT periodogram (bin-exact on the native
//! window length) and an iterative radix-2 FFT used for frequency-domain
//! convolution.


use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

/// Mean-removed power spectrum over the non-negative frequency bins
/// `0..=n/2`. Computed by direct DFT so bins sit exactly at `k * rate / n`
/// for the native series length (no padding).
pub fn periodogram(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let half = n / 2;
    let mut power = Vec::with_capacity(half + 1);
    let step = -core::f64::consts::TAU / n as f64;
    for k in 0..=half {
        let (mut re, mut im) = (0.0f64, 0.0f64);
        let wk = step * k as f64;
        for (t, &v) in series.iter().enumerate() {
            let (s, c) = (wk * t as f64).sin_cos();
            let x = v - mean;
            re += x * c;
            im += x * s;
        }
        power.push(re * re + im * im);
    }
    power
}

/// In-place radix-2 FFT on interleaved complex values. `inverse` applies
/// the conjugate transform and the 1/n scale.
pub fn fft(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    assert!(n.is_power_of_two(), "fft length must be a power of two");
    assert_eq!(n, im.len());
    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2usize;
    while len <= n {
        let ang = sign * core::f64::consts::TAU / len as f64;
        let (wr, wi) = (ang.cos(), ang.sin());
        let mut i = 0usize;
        while i < n {
            let (mut cr, mut ci) = (1.0f64, 0.0f64);
            for k in 0..len / 2 {
                let (ur, ui) = (re[i + k], im[i + k]);
                let (vr, vi) = (
                    re[i + k + len / 2] * cr - im[i + k + len / 2] * ci,
                    re[i + k + len / 2] * ci + im[i + k + len / 2] * cr,
                );
                re[i + k] = ur + vr;
                im[i + k] = ui + vi;
                re[i + k + len / 2] = ur - vr;
                im[i + k + len / 2] = ui - vi;
                let (nr, ni) = (cr * wr - ci * wi, cr * wi + ci * wr);
                cr = nr;
                ci = ni;
            }
            i += len;
        }
        len <<= 1;
    }
    if inverse {
        let scale = 1.0 / n as f64;
        for v in re.iter_mut() {
            *v *= scale;
        }
        for v in im.iter_mut() {
            *v *= scale;
        }
    }
}

/// Smallest power of two not below `n`.
pub fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodogram_peaks_at_tone_bin() {
        let n = 300usize;
        let series: Vec<f64> = (0..n)
            .map(|t| (core::f64::consts::TAU * 2.0 * t as f64 / 30.0).sin())
            .collect();
        let p = periodogram(&series);
        // 2 Hz at 30 Hz over 300 samples is exactly bin 20.
        let peak = (1..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
        assert_eq!(peak, 20);
    }

    #[test]
    fn fft_matches_direct_dft() {
        let n = 64usize;
        let mut re: Vec<f64> = (0..n).map(|i| ((i * 13 % 7) as f64).sin()).collect();
        let mut im = vec![0.0f64; n];
        let input = re.clone();
        fft(&mut re, &mut im, false);
        for k in 0..n {
            let (mut er, mut ei) = (0.0, 0.0);
            for (t, &x) in input.iter().enumerate() {
                let ang = -core::f64::consts::TAU * (k * t) as f64 / n as f64;
                er += x * ang.cos();
                ei += x * ang.sin();
            }
            assert!((re[k] - er).abs() < 1e-9, "bin {k}");
            assert!((im[k] - ei).abs() < 1e-9, "bin {k}");
        }
    }

    #[test]
    fn fft_roundtrip() {
        let n = 128usize;
        let orig: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).cos()).collect();
        let mut re = orig.clone();
        let mut im = vec![0.0f64; n];
        fft(&mut re, &mut im, false);
        fft(&mut re, &mut im, true);
        for (a, b) in re.iter().zip(&orig) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(im.iter().all(|v| v.abs() < 1e-10));
    }
}
