//! Pretext transformations and orientation augmentation.
//!
//! Three label-generating transforms — time reversal, chunk permutation,
//! and smooth time warping — plus the random axis-swap/rotation used to
//! make the learned features orientation-invariant. All of them operate on
//! whole windows, share chunk boundaries and warp paths across channels,
//! and never touch metadata.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use crate::rng::Rng;
use crate::signal::{SignalWindow, CHANNELS};

/// Which transformations were applied to a window; all-false means raw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PretextLabel {
    pub aot_applied: bool,
    pub permutation_applied: bool,
    pub tw_applied: bool,
}

impl PretextLabel {
    pub fn flag(&self, task: usize) -> bool {
        match task {
            0 => self.aot_applied,
            1 => self.permutation_applied,
            2 => self.tw_applied,
            _ => panic!("task index out of range"),
        }
    }
}

/// Task index order used everywhere a per-task array appears.
pub const TASK_NAMES: [&str; 3] = ["aot", "permutation", "tw"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformConfig {
    pub n_chunks: usize,
    pub min_chunk_len: usize,
    pub tw_knots: usize,
    pub tw_sigma: f64,
    pub apply_prob: f64,
}

impl Default for TransformConfig {
    fn default() -> Self {
        TransformConfig {
            n_chunks: 4,
            min_chunk_len: 10,
            tw_knots: 4,
            tw_sigma: 0.2,
            apply_prob: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransformError {
    /// Chunked permutation cannot be both feasible and non-identity.
    InfeasibleChunks { n_chunks: usize, min_chunk_len: usize, window_len: usize },
    BadConfig(&'static str),
}

impl fmt::Display for TransformError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransformError::InfeasibleChunks { n_chunks, min_chunk_len, window_len } => write!(
                f,
                "cannot cut {window_len} timesteps into {n_chunks} chunks of at least {min_chunk_len}"
            ),
            TransformError::BadConfig(msg) => write!(f, "invalid transform config: {msg}"),
        }
    }
}

impl TransformConfig {
    /// Check feasibility against a window length.
    pub fn validate(&self, window_len: usize) -> Result<(), TransformError> {
        if self.n_chunks < 2 {
            // A single chunk admits only the identity ordering, which the
            // permutation task must never emit.
            return Err(TransformError::InfeasibleChunks {
                n_chunks: self.n_chunks,
                min_chunk_len: self.min_chunk_len,
                window_len,
            });
        }
        if self.n_chunks * self.min_chunk_len > window_len {
            return Err(TransformError::InfeasibleChunks {
                n_chunks: self.n_chunks,
                min_chunk_len: self.min_chunk_len,
                window_len,
            });
        }
        if self.min_chunk_len == 0 {
            return Err(TransformError::BadConfig("min_chunk_len must be positive"));
        }
        if !(self.tw_sigma > 0.0 && self.tw_sigma <= 0.5) {
            return Err(TransformError::BadConfig("tw_sigma must lie in (0, 0.5]"));
        }
        if !(0.0..=1.0).contains(&self.apply_prob) {
            return Err(TransformError::BadConfig("apply_prob must lie in [0, 1]"));
        }
        if self.tw_knots == 0 {
            return Err(TransformError::BadConfig("tw_knots must be positive"));
        }
        Ok(())
    }
}

/// Arrow-of-time transform: flip the signal along the time axis.
pub fn reverse_time(w: &SignalWindow) -> SignalWindow {
    let t = w.len();
    let mut out = Vec::with_capacity(CHANNELS * t);
    for c in 0..CHANNELS {
        out.extend(w.channel(c).iter().rev().copied());
    }
    w.like(out).expect("reversal preserves shape and finiteness")
}

/// Draw chunk lengths uniformly among all compositions of `t` into
/// `n_chunks` parts of at least `min_len` (stars-and-bars over the slack).
fn chunk_lengths(t: usize, n_chunks: usize, min_len: usize, rng: &mut Rng) -> Vec<usize> {
    let slack = t - n_chunks * min_len;
    // Choose n_chunks-1 distinct bar positions in [1, slack + n_chunks - 1].
    let m = slack + n_chunks - 1;
    let mut bars: Vec<usize> = Vec::with_capacity(n_chunks - 1);
    while bars.len() < n_chunks - 1 {
        let b = rng.below(m as u64) as usize + 1;
        if !bars.contains(&b) {
            bars.push(b);
        }
    }
    bars.sort_unstable();
    // Gaps between consecutive bars (and the two ends) are the slack each
    // chunk receives on top of min_len.
    let mut lengths = Vec::with_capacity(n_chunks);
    let mut prev = 0usize;
    for &b in &bars {
        lengths.push(min_len + (b - prev - 1));
        prev = b;
    }
    lengths.push(min_len + (m - prev));
    debug_assert_eq!(lengths.iter().sum::<usize>(), t);
    lengths
}

/// Permutation transform: cut the window into contiguous chunks and emit
/// them in a shuffled, guaranteed non-identity order. Boundaries and order
/// are shared across channels, so the per-channel sample multiset is
/// preserved exactly.
pub fn permute_chunks(
    w: &SignalWindow,
    cfg: &TransformConfig,
    rng: &mut Rng,
) -> Result<SignalWindow, TransformError> {
    let t = w.len();
    cfg.validate(t)?;
    let lengths = chunk_lengths(t, cfg.n_chunks, cfg.min_chunk_len, rng);
    let mut starts = Vec::with_capacity(cfg.n_chunks);
    let mut acc = 0usize;
    for &l in &lengths {
        starts.push(acc);
        acc += l;
    }
    let mut order: Vec<usize> = (0..cfg.n_chunks).collect();
    loop {
        rng.shuffle(&mut order);
        if order.iter().enumerate().any(|(i, &o)| i != o) {
            break;
        }
    }
    let mut out = Vec::with_capacity(CHANNELS * t);
    for c in 0..CHANNELS {
        let src = w.channel(c);
        for &k in &order {
            out.extend_from_slice(&src[starts[k]..starts[k] + lengths[k]]);
        }
    }
    Ok(w.like(out).expect("permutation preserves shape and finiteness"))
}

/// Natural cubic spline through `(xs, ys)`; returns second derivatives.
fn spline_second_derivatives(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut m = vec![0.0f64; n];
    if n < 3 {
        return m;
    }
    let mut u = vec![0.0f64; n - 1];
    for i in 1..n - 1 {
        let sig = (xs[i] - xs[i - 1]) / (xs[i + 1] - xs[i - 1]);
        let p = sig * m[i - 1] + 2.0;
        m[i] = (sig - 1.0) / p;
        u[i] = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i])
            - (ys[i] - ys[i - 1]) / (xs[i] - xs[i - 1]);
        u[i] = (6.0 * u[i] / (xs[i + 1] - xs[i - 1]) - sig * u[i - 1]) / p;
    }
    for i in (0..n - 1).rev() {
        m[i] = m[i] * m[i + 1] + u[i];
    }
    m
}

fn spline_eval(xs: &[f64], ys: &[f64], m: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let mut lo = 0usize;
    let mut hi = n - 1;
    while hi - lo > 1 {
        let mid = (hi + lo) / 2;
        if xs[mid] > x {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let h = xs[hi] - xs[lo];
    let a = (xs[hi] - x) / h;
    let b = (x - xs[lo]) / h;
    a * ys[lo] + b * ys[hi] + ((a * a * a - a) * m[lo] + (b * b * b - b) * m[hi]) * h * h / 6.0
}

/// The monotone warp path for one draw: per-timestep source positions
/// spanning exactly `[0, t-1]`.
pub fn warp_path(t: usize, cfg: &TransformConfig, rng: &mut Rng) -> Vec<f64> {
    let k = cfg.tw_knots + 2;
    let xs: Vec<f64> = (0..k).map(|i| i as f64 * (t - 1) as f64 / (k - 1) as f64).collect();
    let ys: Vec<f64> = (0..k)
        .map(|_| (1.0 + cfg.tw_sigma * rng.normal()).clamp(0.2, 2.0))
        .collect();
    let m = spline_second_derivatives(&xs, &ys);
    // Per-timestep speed; the spline can overshoot below the knot clamp, so
    // floor it at a small positive value to keep the path strictly monotone.
    let speed: Vec<f64> =
        (0..t).map(|i| spline_eval(&xs, &ys, &m, i as f64).max(0.05)).collect();
    let mut path = Vec::with_capacity(t);
    path.push(0.0f64);
    for i in 1..t {
        let prev = *path.last().unwrap();
        path.push(prev + 0.5 * (speed[i - 1] + speed[i]));
    }
    let total = *path.last().unwrap();
    let scale = (t - 1) as f64 / total;
    for p in path.iter_mut() {
        *p *= scale;
    }
    path
}

/// Time-warp transform: resample every channel along one smooth monotone
/// warp path built from normally perturbed speeds at evenly spaced knots.
pub fn time_warp(
    w: &SignalWindow,
    cfg: &TransformConfig,
    rng: &mut Rng,
) -> Result<SignalWindow, TransformError> {
    let t = w.len();
    cfg.validate(t)?;
    let path = warp_path(t, cfg, rng);
    let mut out = Vec::with_capacity(CHANNELS * t);
    for c in 0..CHANNELS {
        let src = w.channel(c);
        for &p in &path {
            let lo = (p.floor() as usize).min(t - 1);
            let hi = (lo + 1).min(t - 1);
            let frac = p - lo as f64;
            out.push(((1.0 - frac) * src[lo] as f64 + frac * src[hi] as f64) as f32);
        }
    }
    Ok(w.like(out).expect("warping preserves shape and finiteness"))
}

/// Rodrigues rotation matrix for a unit axis and angle.
pub fn rotation_matrix(axis: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
    let (s, c) = (angle.sin(), angle.cos());
    let t = 1.0 - c;
    let [x, y, z] = axis;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

/// Draw the orientation-augmentation matrix `R = P * S * Q`: a random axis
/// permutation, a random diagonal sign flip, and a uniform 3D rotation.
pub fn random_orientation(rng: &mut Rng) -> [[f64; 3]; 3] {
    let mut perm = [0usize, 1, 2];
    rng.shuffle(&mut perm);
    let signs = [
        if rng.below(2) == 0 { 1.0 } else { -1.0 },
        if rng.below(2) == 0 { 1.0 } else { -1.0 },
        if rng.below(2) == 0 { 1.0 } else { -1.0 },
    ];
    let q = rotation_matrix(rng.unit_vector(), rng.next_f64() * core::f64::consts::TAU);
    // rows of R: row i of P*S*Q picks (signed) row perm[i] of Q.
    let mut r = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = signs[perm[i]] * q[perm[i]][j];
        }
    }
    r
}

/// Apply a random orientation change to every timestep of a window.
pub fn random_rotation(w: &SignalWindow, rng: &mut Rng) -> SignalWindow {
    let r = random_orientation(rng);
    apply_orientation(w, &r)
}

/// Apply a fixed 3x3 orientation matrix to a window.
pub fn apply_orientation(w: &SignalWindow, r: &[[f64; 3]; 3]) -> SignalWindow {
    let t = w.len();
    let mut out = vec![0.0f32; CHANNELS * t];
    let (x, y, z) = (w.channel(0), w.channel(1), w.channel(2));
    for i in 0..t {
        let v = [x[i] as f64, y[i] as f64, z[i] as f64];
        for row in 0..3 {
            out[row * t + i] =
                (r[row][0] * v[0] + r[row][1] * v[1] + r[row][2] * v[2]) as f32;
        }
    }
    w.like(out).expect("rotation preserves shape and finiteness")
}

/// Apply each pretext transform independently with probability
/// `cfg.apply_prob`, in the fixed order permutation -> time-warp ->
/// reversal, and record which fired.
pub fn apply_pretext(
    w: &SignalWindow,
    cfg: &TransformConfig,
    rng: &mut Rng,
) -> Result<(SignalWindow, PretextLabel), TransformError> {
    cfg.validate(w.len())?;
    let mut label = PretextLabel::default();
    let mut out = w.clone();
    if rng.next_f64() < cfg.apply_prob {
        out = permute_chunks(&out, cfg, rng)?;
        label.permutation_applied = true;
    }
    if rng.next_f64() < cfg.apply_prob {
        out = time_warp(&out, cfg, rng)?;
        label.tw_applied = true;
    }
    if rng.next_f64() < cfg.apply_prob {
        out = reverse_time(&out);
        label.aot_applied = true;
    }
    Ok((out, label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::window_intensity;

    fn window_from_fn(f: impl Fn(usize, usize) -> f32) -> SignalWindow {
        let t = 300usize;
        let mut s = Vec::with_capacity(3 * t);
        for c in 0..3 {
            for i in 0..t {
                s.push(f(c, i));
            }
        }
        SignalWindow::new(s, 30, 10).unwrap()
    }

    fn random_window(rng: &mut Rng) -> SignalWindow {
        let samples: Vec<f32> = (0..3 * 300)
            .map(|i| ((i as f64 * 0.13).sin() + rng.next_f64() * 0.2 - 0.1) as f32)
            .collect();
        SignalWindow::new(samples, 30, 10).unwrap()
    }

    #[test]
    fn reversal_reverses_and_involutes() {
        let w = window_from_fn(|_, i| (i % 3) as f32 + 1.0);
        let r = reverse_time(&w);
        for c in 0..3 {
            assert_eq!(r.get(c, 0), w.get(c, 299));
            assert_eq!(r.get(c, 299), w.get(c, 0));
        }
        assert_eq!(reverse_time(&r), w);
    }

    #[test]
    fn reversal_fixes_palindromes() {
        let w = window_from_fn(|_, i| {
            let i = i.min(299 - i);
            i as f32
        });
        assert_eq!(reverse_time(&w), w);
    }

    #[test]
    fn permutation_rejects_single_chunk() {
        let w = window_from_fn(|_, i| i as f32);
        let cfg = TransformConfig { n_chunks: 1, ..Default::default() };
        let mut rng = Rng::new(0);
        assert!(matches!(
            permute_chunks(&w, &cfg, &mut rng),
            Err(TransformError::InfeasibleChunks { .. })
        ));
    }

    #[test]
    fn permutation_chunk_lengths_are_valid() {
        let cfg = TransformConfig::default();
        let mut rng = Rng::new(17);
        for _ in 0..2000 {
            let lengths = chunk_lengths(300, cfg.n_chunks, cfg.min_chunk_len, &mut rng);
            assert_eq!(lengths.len(), 4);
            assert_eq!(lengths.iter().sum::<usize>(), 300);
            assert!(lengths.iter().all(|&l| l >= 10), "{lengths:?}");
        }
    }

    #[test]
    fn permutation_preserves_multiset_and_is_not_identity() {
        let mut rng = Rng::new(7);
        let w = random_window(&mut rng);
        let cfg = TransformConfig::default();
        for _ in 0..200 {
            let p = permute_chunks(&w, &cfg, &mut rng).unwrap();
            assert_ne!(p.samples(), w.samples(), "identity permutation emitted");
            for c in 0..3 {
                let mut a: Vec<f32> = w.channel(c).to_vec();
                let mut b: Vec<f32> = p.channel(c).to_vec();
                a.sort_by(f32::total_cmp);
                b.sort_by(f32::total_cmp);
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn warp_path_monotone_and_endpoint_anchored() {
        let cfg = TransformConfig::default();
        let mut rng = Rng::new(4);
        for _ in 0..1000 {
            let path = warp_path(300, &cfg, &mut rng);
            assert_eq!(path[0], 0.0);
            assert!((path[299] - 299.0).abs() < 1e-9);
            for t in 1..300 {
                assert!(path[t] > path[t - 1], "path not strictly increasing at {t}");
            }
        }
    }

    #[test]
    fn warp_near_identity_at_vanishing_sigma() {
        let w = window_from_fn(|c, i| ((i as f32) * 0.07 + c as f32).sin());
        let cfg = TransformConfig { tw_sigma: 1e-12, ..Default::default() };
        let mut rng = Rng::new(2);
        let out = time_warp(&w, &cfg, &mut rng).unwrap();
        for c in 0..3 {
            for t in 0..300 {
                assert!((out.get(c, t) - w.get(c, t)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn warp_of_constant_is_bit_exact() {
        let w = window_from_fn(|c, _| c as f32 + 0.5);
        let mut rng = Rng::new(3);
        let out = time_warp(&w, &TransformConfig::default(), &mut rng).unwrap();
        assert_eq!(out, w);
    }

    #[test]
    fn warp_preserves_endpoints_and_bounds() {
        let mut rng = Rng::new(12);
        let w = random_window(&mut rng);
        let cfg = TransformConfig::default();
        for _ in 0..50 {
            let out = time_warp(&w, &cfg, &mut rng).unwrap();
            assert_eq!(out.len(), w.len());
            for c in 0..3 {
                assert!((out.get(c, 0) - w.get(c, 0)).abs() < 1e-6);
                assert!((out.get(c, 299) - w.get(c, 299)).abs() < 1e-6);
                let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
                for &v in w.channel(c) {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                for &v in out.channel(c) {
                    assert!(v >= lo && v <= hi, "interpolation escaped input range");
                }
            }
        }
    }

    #[test]
    fn rotation_preserves_norms_and_is_orthogonal() {
        let mut rng = Rng::new(21);
        let w = random_window(&mut rng);
        for _ in 0..100 {
            let r = random_orientation(&mut rng);
            // R^T R == I within 1e-9 and |det| == 1.
            for i in 0..3 {
                for j in 0..3 {
                    let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-9);
                }
            }
            let det = r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
                - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
                + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
            assert!((det.abs() - 1.0).abs() < 1e-9);
            let rotated = apply_orientation(&w, &r);
            let before = crate::signal::euclidean_norm(&w);
            let after = crate::signal::euclidean_norm(&rotated);
            for (a, b) in before.iter().zip(&after) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn identity_orientation_is_identity() {
        let mut rng = Rng::new(5);
        let w = random_window(&mut rng);
        let id = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(apply_orientation(&w, &id), w);
    }

    #[test]
    fn rotation_preserves_intensity() {
        let mut rng = Rng::new(6);
        let w = random_window(&mut rng);
        let base = window_intensity(&w);
        for _ in 0..20 {
            let out = random_rotation(&w, &mut rng);
            assert!((window_intensity(&out) - base).abs() < 1e-6);
        }
    }

    #[test]
    fn apply_pretext_edge_probabilities() {
        let mut rng = Rng::new(8);
        let w = random_window(&mut rng);
        let never = TransformConfig { apply_prob: 0.0, ..Default::default() };
        let (out, label) = apply_pretext(&w, &never, &mut rng).unwrap();
        assert_eq!(out, w);
        assert_eq!(label, PretextLabel::default());
        let always = TransformConfig { apply_prob: 1.0, ..Default::default() };
        let (_, label) = apply_pretext(&w, &always, &mut rng).unwrap();
        assert!(label.aot_applied && label.permutation_applied && label.tw_applied);
    }

    #[test]
    fn apply_pretext_flag_rates_are_balanced() {
        let mut rng = Rng::new(9);
        let w = window_from_fn(|c, i| ((i as f32) * 0.05 + c as f32).sin());
        let cfg = TransformConfig::default();
        let mut counts = [0usize; 3];
        let n = 10_000;
        for _ in 0..n {
            let (_, label) = apply_pretext(&w, &cfg, &mut rng).unwrap();
            for (t, c) in counts.iter_mut().enumerate() {
                if label.flag(t) {
                    *c += 1;
                }
            }
        }
        for &c in &counts {
            let rate = c as f64 / n as f64;
            assert!((0.48..=0.52).contains(&rate), "rate {rate}");
        }
    }
}
