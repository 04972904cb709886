//! Hand-crafted window features for the classical baseline: per-axis
//! moments and ranges, axis correlations, norm statistics, and the two
//! dominant spectral frequencies of the norm.
//!
//! Conventions pinned here so tests and oracles agree: population moments,
//! Fisher excess kurtosis, Pearson correlation with constant axes mapping
//! to 0, MAD as the median absolute deviation around the median, and
//! degenerate spectra mapping to the lowest non-DC bin.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::signal::{euclidean_norm, SignalWindow};
use crate::spectrum::periodogram;

/// Number of scalar features.
pub const FEATURE_COUNT: usize = 20;

/// Column names, in the exact order of [`FeatureVector::to_array`].
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "mean_x", "mean_y", "mean_z", "std_x", "std_y", "std_z", "range_x", "range_y", "range_z",
    "corr_xy", "corr_xz", "corr_yz", "norm_mean", "norm_std", "norm_range", "norm_mad",
    "norm_kurtosis", "norm_skew", "freq_1", "freq_2",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub mean: [f64; 3],
    pub std: [f64; 3],
    pub range: [f64; 3],
    /// Pairwise Pearson correlations (xy, xz, yz).
    pub corr: [f64; 3],
    pub norm_mean: f64,
    pub norm_std: f64,
    pub norm_range: f64,
    pub norm_mad: f64,
    /// Fisher excess kurtosis of the norm series.
    pub norm_kurtosis: f64,
    pub norm_skew: f64,
    /// Top two dominant frequencies of the norm spectrum, in Hz.
    pub freq: [f64; 2],
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.mean[0], self.mean[1], self.mean[2],
            self.std[0], self.std[1], self.std[2],
            self.range[0], self.range[1], self.range[2],
            self.corr[0], self.corr[1], self.corr[2],
            self.norm_mean, self.norm_std, self.norm_range, self.norm_mad,
            self.norm_kurtosis, self.norm_skew,
            self.freq[0], self.freq[1],
        ]
    }
}

fn mean_of(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn population_std(xs: &[f64], mean: f64) -> f64 {
    (xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / xs.len() as f64)
        .max(0.0)
        .sqrt()
}

fn range_of(xs: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in xs {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    hi - lo
}

fn median_of(xs: &mut [f64]) -> f64 {
    xs.sort_unstable_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Pearson correlation; 0 when either side is constant.
fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean_of(a), mean_of(b));
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va.sqrt() * vb.sqrt())
    }
}

/// Top two dominant frequencies of a series, from the mean-removed
/// periodogram. The largest non-DC bin wins; the runner-up must sit in a
/// different bin; magnitude ties break toward the lower frequency. A
/// degenerate (all-zero) spectrum maps both outputs to the lowest non-DC
/// bin so the result stays strictly positive.
pub fn dominant_frequencies(series: &[f64], rate: f64) -> (f64, f64) {
    assert!(series.len() >= 4, "need at least 4 samples for a spectrum");
    let n = series.len();
    let power = periodogram(series);
    let hz = |k: usize| k as f64 * rate / n as f64;
    let mut best = 1usize;
    for k in 2..power.len() {
        if power[k] > power[best] {
            best = k;
        }
    }
    if power[best] <= 0.0 {
        return (hz(1), hz(1));
    }
    let mut second = if best == 1 { 2 } else { 1 };
    for k in 1..power.len() {
        if k != best && power[k] > power[second] {
            second = k;
        }
    }
    (hz(best), hz(second))
}

/// Extract all 20 features from one window.
pub fn extract_features(w: &SignalWindow) -> FeatureVector {
    let axes: [Vec<f64>; 3] = [
        w.channel(0).iter().map(|&v| v as f64).collect(),
        w.channel(1).iter().map(|&v| v as f64).collect(),
        w.channel(2).iter().map(|&v| v as f64).collect(),
    ];
    let mut mean = [0.0; 3];
    let mut std = [0.0; 3];
    let mut range = [0.0; 3];
    for c in 0..3 {
        mean[c] = mean_of(&axes[c]);
        std[c] = population_std(&axes[c], mean[c]);
        range[c] = range_of(&axes[c]);
    }
    let corr = [
        correlation(&axes[0], &axes[1]),
        correlation(&axes[0], &axes[2]),
        correlation(&axes[1], &axes[2]),
    ];

    let norms = euclidean_norm(w);
    let norm_mean = mean_of(&norms);
    let norm_std = population_std(&norms, norm_mean);
    let norm_range = range_of(&norms);
    let mut sorted = norms.clone();
    let med = median_of(&mut sorted);
    let mut devs: Vec<f64> = norms.iter().map(|v| (v - med).abs()).collect();
    let norm_mad = median_of(&mut devs);
    // Standardized central moments; zero when the series is constant.
    let (norm_kurtosis, norm_skew) = if norm_std == 0.0 {
        (0.0, 0.0)
    } else {
        let n = norms.len() as f64;
        let m3 = norms.iter().map(|v| (v - norm_mean).powi(3)).sum::<f64>() / n;
        let m4 = norms.iter().map(|v| (v - norm_mean).powi(4)).sum::<f64>() / n;
        let s2 = norm_std * norm_std;
        (m4 / (s2 * s2) - 3.0, m3 / (s2 * norm_std))
    };
    let (f1, f2) = dominant_frequencies(&norms, w.rate() as f64);
    FeatureVector {
        mean,
        std,
        range,
        corr,
        norm_mean,
        norm_std,
        norm_range,
        norm_mad,
        norm_kurtosis,
        norm_skew,
        freq: [f1, f2],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::signal::SignalWindow;
    use crate::transforms::reverse_time;

    fn window(samples: Vec<f32>) -> SignalWindow {
        SignalWindow::new(samples, 30, 10).unwrap()
    }

    /// Independent scalar-loop oracle, written against the definitions and
    /// deliberately naive: one pass per statistic, no shared helpers with
    /// the implementation beyond the window accessors.
    fn oracle(w: &SignalWindow) -> [f64; FEATURE_COUNT] {
        let t = w.len();
        let axis = |c: usize| -> Vec<f64> { (0..t).map(|i| w.get(c, i) as f64).collect() };
        let mean = |xs: &[f64]| {
            let mut s = 0.0;
            for &x in xs {
                s += x;
            }
            s / xs.len() as f64
        };
        let std = |xs: &[f64]| {
            let m = mean(xs);
            let mut s = 0.0;
            for &x in xs {
                s += (x - m) * (x - m);
            }
            (s / xs.len() as f64).sqrt()
        };
        let range = |xs: &[f64]| {
            let mut lo = xs[0];
            let mut hi = xs[0];
            for &x in xs {
                if x < lo {
                    lo = x;
                }
                if x > hi {
                    hi = x;
                }
            }
            hi - lo
        };
        let corr = |a: &[f64], b: &[f64]| {
            let (ma, mb) = (mean(a), mean(b));
            let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
            for i in 0..a.len() {
                num += (a[i] - ma) * (b[i] - mb);
                da += (a[i] - ma) * (a[i] - ma);
                db += (b[i] - mb) * (b[i] - mb);
            }
            if da == 0.0 || db == 0.0 {
                0.0
            } else {
                num / (da.sqrt() * db.sqrt())
            }
        };
        let median = |xs: &[f64]| {
            let mut v = xs.to_vec();
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = v.len();
            if n % 2 == 1 {
                v[n / 2]
            } else {
                (v[n / 2 - 1] + v[n / 2]) / 2.0
            }
        };
        let (x, y, z) = (axis(0), axis(1), axis(2));
        let norms: Vec<f64> =
            (0..t).map(|i| (x[i] * x[i] + y[i] * y[i] + z[i] * z[i]).sqrt()).collect();
        let nm = mean(&norms);
        let ns = std(&norms);
        let med = median(&norms);
        let devs: Vec<f64> = norms.iter().map(|v| (v - med).abs()).collect();
        let (kurt, skew) = if ns == 0.0 {
            (0.0, 0.0)
        } else {
            let mut m3 = 0.0;
            let mut m4 = 0.0;
            for &v in &norms {
                let d = v - nm;
                m3 += d * d * d;
                m4 += d * d * d * d;
            }
            m3 /= t as f64;
            m4 /= t as f64;
            (m4 / (ns * ns * ns * ns) - 3.0, m3 / (ns * ns * ns))
        };
        // Spectrum oracle: direct DFT of the mean-removed norm series.
        let rate = w.rate() as f64;
        let mut mags: Vec<f64> = Vec::new();
        for k in 0..=t / 2 {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, &v) in norms.iter().enumerate() {
                let ang = -core::f64::consts::TAU * (k as f64) * (i as f64) / t as f64;
                re += (v - nm) * ang.cos();
                im += (v - nm) * ang.sin();
            }
            mags.push(re * re + im * im);
        }
        let mut best = 1;
        for k in 2..mags.len() {
            if mags[k] > mags[best] {
                best = k;
            }
        }
        let (f1, f2) = if mags[best] <= 0.0 {
            (rate / t as f64, rate / t as f64)
        } else {
            let mut second = if best == 1 { 2 } else { 1 };
            for k in 1..mags.len() {
                if k != best && mags[k] > mags[second] {
                    second = k;
                }
            }
            (best as f64 * rate / t as f64, second as f64 * rate / t as f64)
        };
        [
            mean(&x), mean(&y), mean(&z),
            std(&x), std(&y), std(&z),
            range(&x), range(&y), range(&z),
            corr(&x, &y), corr(&x, &z), corr(&y, &z),
            nm, ns, range(&norms), median(&devs), kurt, skew, f1, f2,
        ]
    }

    #[test]
    fn all_zero_window_degenerates_cleanly() {
        let f = extract_features(&window(vec![0.0; 3 * 300]));
        assert_eq!(f.mean, [0.0; 3]);
        assert_eq!(f.std, [0.0; 3]);
        assert_eq!(f.range, [0.0; 3]);
        assert_eq!(f.corr, [0.0; 3]);
        assert_eq!(f.norm_mad, 0.0);
        assert_eq!(f.norm_kurtosis, 0.0);
        // Lowest non-DC bin: rate / T = 30 / 300 = 0.1 Hz.
        assert!((f.freq[0] - 0.1).abs() < 1e-12);
        assert!((f.freq[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn affine_axes_correlate_perfectly() {
        let mut s = vec![0.0f32; 3 * 300];
        for i in 0..300 {
            let v = ((i as f64) * 0.21).sin() as f32;
            s[i] = v;
            s[300 + i] = 2.0 * v + 0.5;
            s[600 + i] = 0.1;
        }
        let f = extract_features(&window(s));
        assert!((f.corr[0] - 1.0).abs() < 1e-9);
        assert_eq!(f.corr[1], 0.0); // z constant
    }

    #[test]
    fn features_match_scalar_oracle_on_random_windows() {
        let mut rng = Rng::new(77);
        for _ in 0..100 {
            let samples: Vec<f32> =
                (0..3 * 300).map(|_| (rng.next_f64() * 2.0 - 1.0) as f32).collect();
            let w = window(samples);
            let got = extract_features(&w).to_array();
            let want = oracle(&w);
            for (i, (g, e)) in got.iter().zip(&want).enumerate() {
                assert!(
                    (g - e).abs() < 1e-9,
                    "feature {} ({}) differs: {} vs {}",
                    i,
                    FEATURE_NAMES[i],
                    g,
                    e
                );
            }
        }
    }

    #[test]
    fn dominant_frequency_single_tone() {
        let series: Vec<f64> = (0..300)
            .map(|t| (core::f64::consts::TAU * 2.0 * t as f64 / 30.0).sin())
            .collect();
        let (f1, _) = dominant_frequencies(&series, 30.0);
        assert_eq!(f1, 2.0);
    }

    #[test]
    fn dominant_frequency_two_tones_ordered_by_power() {
        let series: Vec<f64> = (0..300)
            .map(|t| {
                let t = t as f64 / 30.0;
                (core::f64::consts::TAU * 2.0 * t).sin()
                    + 0.4 * (core::f64::consts::TAU * 5.0 * t).sin()
            })
            .collect();
        let (f1, f2) = dominant_frequencies(&series, 30.0);
        assert_eq!((f1, f2), (2.0, 5.0));
    }

    #[test]
    fn constant_series_maps_to_lowest_bin() {
        let series = vec![3.25f64; 300];
        let (f1, f2) = dominant_frequencies(&series, 30.0);
        assert!((f1 - 0.1).abs() < 1e-12);
        assert_eq!(f1, f2);
    }

    #[test]
    fn time_reversal_leaves_moment_features_unchanged() {
        let mut rng = Rng::new(5);
        let samples: Vec<f32> =
            (0..3 * 300).map(|_| (rng.next_f64() * 2.0 - 1.0) as f32).collect();
        let w = window(samples);
        let a = extract_features(&w).to_array();
        let b = extract_features(&reverse_time(&w)).to_array();
        // All fields except the two frequencies are order-free; the spectrum
        // magnitudes are reversal-invariant too, so frequencies also match.
        for i in 0..FEATURE_COUNT {
            assert!((a[i] - b[i]).abs() < 1e-9, "feature {i}");
        }
    }

    #[test]
    fn correlations_invariant_under_positive_affine_maps() {
        let mut rng = Rng::new(6);
        let base: Vec<f32> =
            (0..3 * 300).map(|_| (rng.next_f64() * 2.0 - 1.0) as f32).collect();
        let w = window(base.clone());
        let mut scaled = base;
        for i in 0..300 {
            scaled[i] = scaled[i] * 3.0 + 1.0;
            scaled[300 + i] = scaled[300 + i] * 0.25 - 2.0;
        }
        let w2 = window(scaled);
        let (a, b) = (extract_features(&w), extract_features(&w2));
        // The affine map itself rounds through f32 storage, so the match is
        // limited by input precision rather than the correlation math.
        for c in 0..3 {
            assert!((a.corr[c] - b.corr[c]).abs() < 1e-5);
        }
    }
}
