//! Canonical accelerometer representations: fixed-length tri-axial windows,
//! variable-length recordings, and the window store they are collected in.
//!
//! All sample data is channel-major `f32` in units of g; statistics are
//! computed in `f64`. The canonical grid is 30 Hz / 10 s windows (T = 300),
//! but nothing below hard-codes those numbers.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

/// Tri-axial data always has exactly three channels (a_x, a_y, a_z).
pub const CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum SignalError {
    /// A sample was NaN or infinite; carries (channel, timestep).
    NonFinite { channel: usize, timestep: usize },
    BadShape { expected: usize, got: usize },
    BadRate,
    /// rate × duration must be an integer number of samples.
    FractionalWindow,
    EmptyRecording,
    UnknownSubject,
    EmptyDay,
    LabelMismatch,
}

impl fmt::Display for SignalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SignalError::NonFinite { channel, timestep } => {
                write!(f, "non-finite sample at channel {channel}, timestep {timestep}")
            }
            SignalError::BadShape { expected, got } => {
                write!(f, "expected {expected} samples, got {got}")
            }
            SignalError::BadRate => write!(f, "sampling rate must be positive"),
            SignalError::FractionalWindow => {
                write!(f, "rate x duration must be an integer sample count")
            }
            SignalError::EmptyRecording => write!(f, "recording must hold at least 2 samples"),
            SignalError::UnknownSubject => write!(f, "subject/day not present in store"),
            SignalError::EmptyDay => write!(f, "no windows for the requested subject/day"),
            SignalError::LabelMismatch => {
                write!(f, "label presence must match the store's labelled flag")
            }
        }
    }
}

/// A fixed-length tri-axial acceleration frame, the universal unit of input.
///
/// Invariants: exactly `rate * duration_s` timesteps per channel, three
/// channels, every sample finite.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalWindow {
    samples: Vec<f32>, // channel-major: [x0..xT, y0..yT, z0..zT]
    rate: u32,
    duration_s: u32,
}

impl SignalWindow {
    pub fn new(samples: Vec<f32>, rate: u32, duration_s: u32) -> Result<Self, SignalError> {
        if rate == 0 || duration_s == 0 {
            return Err(SignalError::BadRate);
        }
        let t = (rate * duration_s) as usize;
        if samples.len() != CHANNELS * t {
            return Err(SignalError::BadShape { expected: CHANNELS * t, got: samples.len() });
        }
        for (i, &v) in samples.iter().enumerate() {
            if !v.is_finite() {
                return Err(SignalError::NonFinite { channel: i / t, timestep: i % t });
            }
        }
        Ok(SignalWindow { samples, rate, duration_s })
    }

    /// Number of timesteps per channel.
    pub fn len(&self) -> usize {
        (self.rate * self.duration_s) as usize
    }

    pub fn is_empty(&self) -> bool {
        false // T >= 1 by construction
    }

    pub fn rate(&self) -> u32 {
        self.rate
    }

    pub fn duration_s(&self) -> u32 {
        self.duration_s
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let t = self.len();
        &self.samples[c * t..(c + 1) * t]
    }

    #[inline]
    pub fn get(&self, c: usize, t: usize) -> f32 {
        self.samples[c * self.len() + t]
    }

    /// Rebuild a window of the same geometry from raw samples, re-checking
    /// the invariants.
    pub fn like(&self, samples: Vec<f32>) -> Result<Self, SignalError> {
        SignalWindow::new(samples, self.rate, self.duration_s)
    }
}

/// A variable-length recording for one subject-day before windowing.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecording {
    samples: Vec<f32>, // channel-major, CHANNELS x n
    rate: f64,
    pub subject_id: String,
    pub day_index: u16,
}

impl RawRecording {
    pub fn new(
        samples: Vec<f32>,
        rate: f64,
        subject_id: String,
        day_index: u16,
    ) -> Result<Self, SignalError> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(SignalError::BadRate);
        }
        if samples.len() < 2 * CHANNELS || samples.len() % CHANNELS != 0 {
            return Err(SignalError::EmptyRecording);
        }
        Ok(RawRecording { samples, rate, subject_id, day_index })
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.samples.len() / CHANNELS
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.len();
        &self.samples[c * n..(c + 1) * n]
    }
}

/// One stored window with its provenance and sampling weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowRecord {
    pub window: SignalWindow,
    pub subject_id: String,
    pub day_index: u16,
    /// Class id; present iff the store is labelled.
    pub label: Option<i32>,
    /// Movement intensity, `window_intensity` of the window. Never negative.
    pub intensity: f32,
}

/// In-memory collection of windows indexed by subject and day.
///
/// The on-disk codec for this type lives in the companion IO crate; the
/// core only guarantees the in-memory invariants (uniform geometry, label
/// presence matching `labelled`, non-negative intensities).
#[derive(Debug, Clone)]
pub struct WindowStore {
    records: Vec<WindowRecord>,
    rate: u32,
    duration_s: u32,
    labelled: bool,
    by_subject_day: BTreeMap<(String, u16), Vec<usize>>,
    subjects: Vec<String>,
}

impl WindowStore {
    pub fn new(records: Vec<WindowRecord>, labelled: bool) -> Result<Self, SignalError> {
        let (rate, duration_s) = match records.first() {
            Some(r) => (r.window.rate(), r.window.duration_s()),
            None => (0, 0),
        };
        let mut by_subject_day: BTreeMap<(String, u16), Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            if r.window.rate() != rate || r.window.duration_s() != duration_s {
                return Err(SignalError::BadShape {
                    expected: (rate * duration_s) as usize,
                    got: r.window.len(),
                });
            }
            if r.label.is_some() != labelled {
                return Err(SignalError::LabelMismatch);
            }
            by_subject_day.entry((r.subject_id.clone(), r.day_index)).or_default().push(i);
        }
        let mut subjects: Vec<String> =
            by_subject_day.keys().map(|(s, _)| s.clone()).collect();
        subjects.dedup();
        Ok(WindowStore { records, rate, duration_s, labelled, by_subject_day, subjects })
    }

    pub fn records(&self) -> &[WindowRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn rate(&self) -> u32 {
        self.rate
    }

    pub fn duration_s(&self) -> u32 {
        self.duration_s
    }

    pub fn labelled(&self) -> bool {
        self.labelled
    }

    /// Sorted unique subject ids.
    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    /// Sorted day indices for one subject.
    pub fn days(&self, subject: &str) -> Vec<u16> {
        self.by_subject_day
            .range((String::from(subject), 0)..=(String::from(subject), u16::MAX))
            .map(|((_, d), _)| *d)
            .collect()
    }

    /// Record indices for one subject-day.
    pub fn indices(&self, subject: &str, day: u16) -> Result<&[usize], SignalError> {
        self.by_subject_day
            .get(&(String::from(subject), day))
            .map(|v| v.as_slice())
            .ok_or(SignalError::UnknownSubject)
    }

    /// All record indices belonging to one subject, across days.
    pub fn subject_indices(&self, subject: &str) -> Vec<usize> {
        self.days(subject)
            .iter()
            .flat_map(|&d| self.indices(subject, d).unwrap().iter().copied())
            .collect()
    }

    /// Sorted unique class ids; empty for unlabelled stores.
    pub fn classes(&self) -> Vec<i32> {
        let mut cs: Vec<i32> = self.records.iter().filter_map(|r| r.label).collect();
        cs.sort_unstable();
        cs.dedup();
        cs
    }
}

/// Linear resampling onto a uniform grid anchored at t = 0.
///
/// Output sample `i` lives at source position `i * rate / target_rate`
/// and is the linear interpolation of the two bracketing input samples
/// (clamped at the ends, which preserves both endpoints). Resampling to
/// the recording's own rate is a bit-identical copy.
pub fn resample_linear(
    rec: &RawRecording,
    target_rate: f64,
) -> Result<RawRecording, SignalError> {
    if !(target_rate > 0.0) || !target_rate.is_finite() {
        return Err(SignalError::BadRate);
    }
    for c in 0..CHANNELS {
        for (t, &v) in rec.channel(c).iter().enumerate() {
            if !v.is_finite() {
                return Err(SignalError::NonFinite { channel: c, timestep: t });
            }
        }
    }
    if target_rate == rec.rate() {
        return Ok(rec.clone());
    }
    let n = rec.len();
    let m = ((n as f64) * target_rate / rec.rate()).round() as usize;
    let m = m.max(2);
    let step = rec.rate() / target_rate;
    let mut out = vec![0.0f32; CHANNELS * m];
    for c in 0..CHANNELS {
        let src = rec.channel(c);
        for i in 0..m {
            let p = (i as f64 * step).min((n - 1) as f64);
            let lo = p.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = p - lo as f64;
            out[c * m + i] =
                ((1.0 - frac) * src[lo] as f64 + frac * src[hi] as f64) as f32;
        }
    }
    RawRecording::new(out, target_rate, rec.subject_id.clone(), rec.day_index)
}

/// Cut a recording into consecutive non-overlapping windows, dropping the
/// trailing remainder. A recording shorter than one window yields an empty
/// list.
pub fn segment_windows(
    rec: &RawRecording,
    duration_s: u32,
) -> Result<Vec<SignalWindow>, SignalError> {
    let samples_f = rec.rate() * duration_s as f64;
    let t = samples_f.round() as usize;
    if t == 0 || (samples_f - t as f64).abs() > 1e-9 {
        return Err(SignalError::FractionalWindow);
    }
    let count = rec.len() / t;
    let mut windows = Vec::with_capacity(count);
    for w in 0..count {
        let mut samples = Vec::with_capacity(CHANNELS * t);
        for c in 0..CHANNELS {
            samples.extend_from_slice(&rec.channel(c)[w * t..(w + 1) * t]);
        }
        windows.push(SignalWindow::new(samples, rec.rate() as u32, duration_s)?);
    }
    Ok(windows)
}

/// Per-timestep Euclidean norm of the three axes.
pub fn euclidean_norm(w: &SignalWindow) -> Vec<f64> {
    let (x, y, z) = (w.channel(0), w.channel(1), w.channel(2));
    x.iter()
        .zip(y)
        .zip(z)
        .map(|((&a, &b), &c)| {
            let (a, b, c) = (a as f64, b as f64, c as f64);
            (a * a + b * b + c * c).sqrt()
        })
        .collect()
}

/// Movement intensity: population standard deviation of the norm series.
/// Rotation-invariant because the vector norm is.
pub fn window_intensity(w: &SignalWindow) -> f64 {
    let norms = euclidean_norm(w);
    // A constant norm series is exactly zero-intensity; skipping the moment
    // arithmetic avoids summation rounding that would make it 1e-16-ish.
    if norms.windows(2).all(|p| p[0] == p[1]) {
        return 0.0;
    }
    let n = norms.len() as f64;
    let mean = norms.iter().sum::<f64>() / n;
    let var = norms.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    var.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn ramp_recording(n: usize, rate: f64) -> RawRecording {
        let mut s = Vec::with_capacity(3 * n);
        for _ in 0..3 {
            for i in 0..n {
                s.push(i as f32 / (n - 1) as f32);
            }
        }
        RawRecording::new(s, rate, String::from("s0"), 0).unwrap()
    }

    fn random_window(rng: &mut Rng) -> SignalWindow {
        let samples: Vec<f32> =
            (0..3 * 300).map(|_| (rng.next_f64() * 4.0 - 2.0) as f32).collect();
        SignalWindow::new(samples, 30, 10).unwrap()
    }

    #[test]
    fn window_invariants_enforced() {
        assert!(SignalWindow::new(vec![0.0; 3 * 300], 30, 10).is_ok());
        assert!(matches!(
            SignalWindow::new(vec![0.0; 3 * 299], 30, 10),
            Err(SignalError::BadShape { .. })
        ));
        let mut bad = vec![0.0f32; 3 * 300];
        bad[317] = f32::NAN;
        assert_eq!(
            SignalWindow::new(bad, 30, 10),
            Err(SignalError::NonFinite { channel: 1, timestep: 17 })
        );
    }

    #[test]
    fn resample_constant_stays_constant() {
        let rec =
            RawRecording::new(vec![1.0; 3 * 200], 100.0, String::from("s"), 0).unwrap();
        let out = resample_linear(&rec, 30.0).unwrap();
        assert_eq!(out.len(), 60);
        assert!(out.channel(0).iter().all(|&v| v == 1.0));
        assert!(out.channel(2).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn resample_identity_is_bit_exact() {
        let rec = ramp_recording(101, 100.0);
        let out = resample_linear(&rec, 100.0).unwrap();
        assert_eq!(out, rec);
    }

    #[test]
    fn resample_ramp_matches_analytic_line() {
        // 0..1 over 1 s at 100 Hz; the resampled value at output index i
        // must sit on the line v(t) = t (t in units of the source span).
        let n = 100;
        let rec = ramp_recording(n, 100.0);
        let out = resample_linear(&rec, 30.0).unwrap();
        assert_eq!(out.len(), 30);
        for (i, &v) in out.channel(1).iter().enumerate() {
            let p = (i as f64 * 100.0 / 30.0).min((n - 1) as f64);
            let expect = p / (n - 1) as f64;
            assert!((v as f64 - expect).abs() < 1e-6, "i={i} v={v} expect={expect}");
        }
    }

    #[test]
    fn resample_idempotent_at_fixed_rate() {
        let rec = ramp_recording(997, 87.0);
        let once = resample_linear(&rec, 30.0).unwrap();
        let twice = resample_linear(&once, 30.0).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn resample_rejects_non_finite_with_location() {
        let mut s = vec![0.0f32; 3 * 50];
        s[2 * 50 + 7] = f32::INFINITY;
        let rec = RawRecording::new(s, 50.0, String::from("s"), 0).unwrap();
        assert_eq!(
            resample_linear(&rec, 30.0),
            Err(SignalError::NonFinite { channel: 2, timestep: 7 })
        );
    }

    #[test]
    fn segmentation_counts() {
        let mk = |n: usize| {
            RawRecording::new(vec![0.25; 3 * n], 30.0, String::from("s"), 0).unwrap()
        };
        assert_eq!(segment_windows(&mk(3000), 10).unwrap().len(), 10);
        assert_eq!(segment_windows(&mk(3050), 10).unwrap().len(), 10);
        assert_eq!(segment_windows(&mk(299), 10).unwrap().len(), 0);
    }

    #[test]
    fn segmentation_preserves_prefix() {
        let n = 3050;
        let mut s = Vec::with_capacity(3 * n);
        for c in 0..3 {
            for i in 0..n {
                s.push((c * n + i) as f32);
            }
        }
        let rec = RawRecording::new(s, 30.0, String::from("s"), 0).unwrap();
        let windows = segment_windows(&rec, 10).unwrap();
        for c in 0..3 {
            let rebuilt: Vec<f32> =
                windows.iter().flat_map(|w| w.channel(c).iter().copied()).collect();
            assert_eq!(&rebuilt[..], &rec.channel(c)[..3000]);
        }
    }

    #[test]
    fn norm_pythagorean_triple() {
        let t = 300usize;
        let mut s = vec![0.0f32; 3 * t];
        s[..t].fill(3.0);
        s[t..2 * t].fill(4.0);
        let w = SignalWindow::new(s, 30, 10).unwrap();
        assert!(euclidean_norm(&w).iter().all(|&v| (v - 5.0).abs() < 1e-12));
    }

    #[test]
    fn norm_matches_scalar_loop() {
        let mut rng = Rng::new(11);
        let w = random_window(&mut rng);
        let norms = euclidean_norm(&w);
        for t in 0..w.len() {
            let brute = ((w.get(0, t) as f64).powi(2)
                + (w.get(1, t) as f64).powi(2)
                + (w.get(2, t) as f64).powi(2))
            .sqrt();
            assert!((norms[t] - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn intensity_of_constant_is_zero() {
        let w = SignalWindow::new(vec![0.7; 3 * 300], 30, 10).unwrap();
        assert_eq!(window_intensity(&w), 0.0);
    }

    #[test]
    fn intensity_two_point_alternation() {
        // Norm series alternates 0, 2 -> mean 1, population std 1.
        let t = 300usize;
        let mut s = vec![0.0f32; 3 * t];
        for i in (1..t).step_by(2) {
            s[i] = 2.0; // x channel only, so norm is |x|
        }
        let w = SignalWindow::new(s, 30, 10).unwrap();
        assert!((window_intensity(&w) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn intensity_matches_two_pass_oracle() {
        let mut rng = Rng::new(23);
        for _ in 0..20 {
            let w = random_window(&mut rng);
            let norms = euclidean_norm(&w);
            let mean = norms.iter().sum::<f64>() / norms.len() as f64;
            let var =
                norms.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / norms.len() as f64;
            assert!((window_intensity(&w) - var.sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn intensity_rotation_invariant() {
        let mut rng = Rng::new(31);
        let w = random_window(&mut rng);
        let base = window_intensity(&w);
        // Rotate by an arbitrary axis-angle rotation.
        let axis = rng.unit_vector();
        let angle = rng.next_f64() * core::f64::consts::TAU;
        let r = crate::transforms::rotation_matrix(axis, angle);
        let t = w.len();
        let mut out = vec![0.0f32; 3 * t];
        for i in 0..t {
            let v = [w.get(0, i) as f64, w.get(1, i) as f64, w.get(2, i) as f64];
            for row in 0..3 {
                out[row * t + i] =
                    (r[row][0] * v[0] + r[row][1] * v[1] + r[row][2] * v[2]) as f32;
            }
        }
        let rotated = w.like(out).unwrap();
        assert!((window_intensity(&rotated) - base).abs() < 1e-9);
    }

    #[test]
    fn store_indexing_and_labels() {
        let w = SignalWindow::new(vec![0.0; 3 * 300], 30, 10).unwrap();
        let rec = |s: &str, d: u16, label| WindowRecord {
            window: w.clone(),
            subject_id: String::from(s),
            day_index: d,
            label,
            intensity: 0.0,
        };
        let store = WindowStore::new(
            vec![rec("b", 0, Some(1)), rec("a", 1, Some(0)), rec("a", 0, Some(2))],
            true,
        )
        .unwrap();
        assert_eq!(store.subjects(), &[String::from("a"), String::from("b")]);
        assert_eq!(store.days("a"), vec![0, 1]);
        assert_eq!(store.indices("a", 1).unwrap(), &[1]);
        assert_eq!(store.classes(), vec![0, 1, 2]);
        assert!(WindowStore::new(vec![rec("a", 0, None)], true).is_err());
    }
}
