//! Layer primitives with explicit forward and reverse passes.
//!
//! Layers do not own their parameters; they carry indices into the
//! network's parameter (and buffer) tables so the optimizer, checkpoints,
//! and gradient checks can treat parameters as one flat list. All shapes
//! are `[n, c, t]` for sequence tensors and `[n, d]` for feature tensors.

use alloc::vec;
use alloc::vec::Vec;

use super::scalar::Scalar;
use super::tensor::Tensor;
use super::util::{for_each_sample, map_index, map_ranges};

/// 1D convolution without bias (the surrounding batch norms carry shifts).
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    /// Index of the `[cout, cin, k]` weight tensor.
    pub w: usize,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv1d {
    pub fn out_len(&self, tin: usize) -> usize {
        (tin + 2 * self.pad - self.k) / self.stride + 1
    }

    pub fn forward<F: Scalar>(&self, w: &Tensor<F>, x: &Tensor<F>) -> Tensor<F> {
        let (n, cin, tin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        debug_assert_eq!(cin, self.cin);
        let tout = self.out_len(tin);
        let mut y = Tensor::zeros(&[n, self.cout, tout]);
        let wd = w.data();
        let xd = x.data();
        for_each_sample(y.data_mut(), n, |s, ys| {
            let xs = &xd[s * cin * tin..(s + 1) * cin * tin];
            self.forward_one(wd, xs, ys, tin, tout);
        });
        y
    }

    fn forward_one<F: Scalar>(&self, w: &[F], xs: &[F], ys: &mut [F], tin: usize, tout: usize) {
        for co in 0..self.cout {
            let yrow = &mut ys[co * tout..(co + 1) * tout];
            for ci in 0..self.cin {
                let xrow = &xs[ci * tin..(ci + 1) * tin];
                let wrow = &w[(co * self.cin + ci) * self.k..(co * self.cin + ci + 1) * self.k];
                for (k, &wv) in wrow.iter().enumerate() {
                    let off = k as isize - self.pad as isize;
                    if self.stride == 1 {
                        let t0 = (-off).max(0) as usize;
                        let t1 = (tin as isize - off).clamp(0, tout as isize) as usize;
                        if t0 >= t1 {
                            continue;
                        }
                        let src = &xrow[(t0 as isize + off) as usize..(t1 as isize + off) as usize];
                        for (yv, &xv) in yrow[t0..t1].iter_mut().zip(src) {
                            *yv = *yv + wv * xv;
                        }
                    } else {
                        for (t, yv) in yrow.iter_mut().enumerate() {
                            let xi = (t * self.stride) as isize + off;
                            if xi >= 0 && (xi as usize) < tin {
                                *yv = *yv + wv * xrow[xi as usize];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Reverse pass. Accumulates the weight gradient into `dw` (when given)
    /// and returns the input gradient (when requested).
    pub fn backward<F: Scalar>(
        &self,
        w: &Tensor<F>,
        x: &Tensor<F>,
        dy: &Tensor<F>,
        mut dw: Option<&mut Tensor<F>>,
        want_dx: bool,
    ) -> Option<Tensor<F>> {
        let (n, cin, tin) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let tout = dy.shape()[2];
        let xd = x.data();
        let dyd = dy.data();

        if let Some(dw) = dw.as_deref_mut() {
            // Chunked over samples with a fixed chunk layout, reduced in
            // order, so sums do not depend on the thread count.
            let partials = map_ranges(n, |s0, s1| {
                let mut part = vec![F::zero(); dw.numel()];
                for s in s0..s1 {
                    let xs = &xd[s * cin * tin..(s + 1) * cin * tin];
                    let dys = &dyd[s * self.cout * tout..(s + 1) * self.cout * tout];
                    self.accumulate_dw(&mut part, xs, dys, tin, tout);
                }
                part
            });
            let dwd = dw.data_mut();
            for part in partials {
                for (d, p) in dwd.iter_mut().zip(part) {
                    *d = *d + p;
                }
            }
        }

        if !want_dx {
            return None;
        }
        let mut dx = Tensor::zeros(&[n, cin, tin]);
        let wd = w.data();
        for_each_sample(dx.data_mut(), n, |s, dxs| {
            let dys = &dyd[s * self.cout * tout..(s + 1) * self.cout * tout];
            for co in 0..self.cout {
                let dyrow = &dys[co * tout..(co + 1) * tout];
                for ci in 0..self.cin {
                    let dxrow = &mut dxs[ci * tin..(ci + 1) * tin];
                    let wrow =
                        &wd[(co * self.cin + ci) * self.k..(co * self.cin + ci + 1) * self.k];
                    for (k, &wv) in wrow.iter().enumerate() {
                        let off = k as isize - self.pad as isize;
                        if self.stride == 1 {
                            let t0 = (-off).max(0) as usize;
                            let t1 = (tin as isize - off).clamp(0, tout as isize) as usize;
                            if t0 >= t1 {
                                continue;
                            }
                            let dst =
                                &mut dxrow[(t0 as isize + off) as usize..(t1 as isize + off) as usize];
                            for (dv, &gy) in dst.iter_mut().zip(&dyrow[t0..t1]) {
                                *dv = *dv + wv * gy;
                            }
                        } else {
                            for (t, &gy) in dyrow.iter().enumerate() {
                                let xi = (t * self.stride) as isize + off;
                                if xi >= 0 && (xi as usize) < tin {
                                    dxrow[xi as usize] = dxrow[xi as usize] + wv * gy;
                                }
                            }
                        }
                    }
                }
            }
        });
        Some(dx)
    }

    fn accumulate_dw<F: Scalar>(&self, dw: &mut [F], xs: &[F], dys: &[F], tin: usize, tout: usize) {
        for co in 0..self.cout {
            let dyrow = &dys[co * tout..(co + 1) * tout];
            for ci in 0..self.cin {
                let xrow = &xs[ci * tin..(ci + 1) * tin];
                let base = (co * self.cin + ci) * self.k;
                for k in 0..self.k {
                    let off = k as isize - self.pad as isize;
                    let mut acc = F::zero();
                    if self.stride == 1 {
                        let t0 = (-off).max(0) as usize;
                        let t1 = (tin as isize - off).clamp(0, tout as isize) as usize;
                        if t0 < t1 {
                            let src =
                                &xrow[(t0 as isize + off) as usize..(t1 as isize + off) as usize];
                            // Eight independent accumulators so the strict
                            // FP reduction still vectorizes; the summation
                            // order is fixed by construction.
                            let dys = &dyrow[t0..t1];
                            let mut lanes = [F::zero(); 8];
                            let chunks = dys.len() / 8;
                            for c in 0..chunks {
                                let a = &dys[c * 8..c * 8 + 8];
                                let b = &src[c * 8..c * 8 + 8];
                                for l in 0..8 {
                                    lanes[l] = lanes[l] + a[l] * b[l];
                                }
                            }
                            for i in chunks * 8..dys.len() {
                                lanes[0] = lanes[0] + dys[i] * src[i];
                            }
                            let s01 = lanes[0] + lanes[1];
                            let s23 = lanes[2] + lanes[3];
                            let s45 = lanes[4] + lanes[5];
                            let s67 = lanes[6] + lanes[7];
                            acc = (s01 + s23) + (s45 + s67);
                        }
                    } else {
                        for (t, &gy) in dyrow.iter().enumerate() {
                            let xi = (t * self.stride) as isize + off;
                            if xi >= 0 && (xi as usize) < tin {
                                acc = acc + gy * xrow[xi as usize];
                            }
                        }
                    }
                    dw[base + k] = dw[base + k] + acc;
                }
            }
        }
    }
}

/// Batch normalization over `(n, t)` per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: usize,
    pub beta: usize,
    /// Buffer indices for the running statistics.
    pub rmean: usize,
    pub rvar: usize,
    pub ch: usize,
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel statistics the forward pass normalized with; needed by the
/// reverse pass and by the running-stat update.
#[derive(Debug, Clone)]
pub struct BnStats<F> {
    pub mean: Vec<F>,
    pub var: Vec<F>,
    /// True when the stats were computed from the batch (training mode).
    pub from_batch: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

impl BatchNorm {
    /// Normalize; in train mode the statistics come from the batch, in eval
    /// mode from the running buffers. Buffers are never written here — the
    /// training loop applies updates explicitly.
    pub fn forward<F: Scalar>(
        &self,
        params: &[Tensor<F>],
        buffers: &[Tensor<F>],
        x: &Tensor<F>,
        mode: Mode,
    ) -> (Tensor<F>, BnStats<F>) {
        let (n, c, t) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        debug_assert_eq!(c, self.ch);
        let xd = x.data();
        let stats = match mode {
            Mode::Train => {
                let count = F::of_f64((n * t) as f64);
                let pairs = map_index(c, |ci| {
                    let mut sum = F::zero();
                    let mut sq = F::zero();
                    for s in 0..n {
                        let row = &xd[(s * c + ci) * t..(s * c + ci + 1) * t];
                        for &v in row {
                            sum = sum + v;
                            sq = sq + v * v;
                        }
                    }
                    let mean = sum / count;
                    let var = (sq / count - mean * mean).max(F::zero());
                    (mean, var)
                });
                BnStats {
                    mean: pairs.iter().map(|p| p.0).collect(),
                    var: pairs.iter().map(|p| p.1).collect(),
                    from_batch: true,
                }
            }
            Mode::Eval => BnStats {
                mean: buffers[self.rmean].data().to_vec(),
                var: buffers[self.rvar].data().to_vec(),
                from_batch: false,
            },
        };
        let gamma = params[self.gamma].data();
        let beta = params[self.beta].data();
        let eps = F::of_f64(BN_EPS);
        let mut scale = Vec::with_capacity(c);
        let mut shift = Vec::with_capacity(c);
        for ci in 0..c {
            let ivar = F::one() / (stats.var[ci] + eps).sqrt();
            scale.push(gamma[ci] * ivar);
            shift.push(beta[ci] - gamma[ci] * ivar * stats.mean[ci]);
        }
        let mut y = Tensor::zeros(&[n, c, t]);
        for_each_sample(y.data_mut(), n, |s, ys| {
            let xs = &xd[s * c * t..(s + 1) * c * t];
            for ci in 0..c {
                let (a, b) = (scale[ci], shift[ci]);
                for (yv, &xv) in ys[ci * t..(ci + 1) * t].iter_mut().zip(&xs[ci * t..(ci + 1) * t])
                {
                    *yv = a * xv + b;
                }
            }
        });
        (y, stats)
    }

    /// Reverse pass matching the statistics mode used in the forward pass.
    pub fn backward<F: Scalar>(
        &self,
        params: &[Tensor<F>],
        x: &Tensor<F>,
        stats: &BnStats<F>,
        dy: &Tensor<F>,
        grads: Option<&mut [Tensor<F>]>,
    ) -> Tensor<F> {
        let (n, c, t) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let count = F::of_f64((n * t) as f64);
        let eps = F::of_f64(BN_EPS);
        let gamma = params[self.gamma].data();
        let xd = x.data();
        let dyd = dy.data();
        // Per-channel reductions, each sequential over (n, t).
        let sums = map_index(c, |ci| {
            let mean = stats.mean[ci];
            let ivar = F::one() / (stats.var[ci] + eps).sqrt();
            let mut dsum = F::zero();
            let mut dxhat_sum = F::zero();
            for s in 0..n {
                let xrow = &xd[(s * c + ci) * t..(s * c + ci + 1) * t];
                let dyrow = &dyd[(s * c + ci) * t..(s * c + ci + 1) * t];
                for (&xv, &gy) in xrow.iter().zip(dyrow) {
                    dsum = dsum + gy;
                    dxhat_sum = dxhat_sum + gy * (xv - mean) * ivar;
                }
            }
            (dsum, dxhat_sum)
        });
        if let Some(grads) = grads {
            for ci in 0..c {
                let (dsum, dxhat) = sums[ci];
                grads[self.beta].data_mut()[ci] = grads[self.beta].data_mut()[ci] + dsum;
                grads[self.gamma].data_mut()[ci] = grads[self.gamma].data_mut()[ci] + dxhat;
            }
        }
        let mut dx = Tensor::zeros(&[n, c, t]);
        let dxd = dx.data_mut();
        for_each_sample(dxd, n, |s, dxs| {
            for ci in 0..c {
                let mean = stats.mean[ci];
                let ivar = F::one() / (stats.var[ci] + eps).sqrt();
                let g = gamma[ci];
                let xrow = &xd[(s * c + ci) * t..(s * c + ci + 1) * t];
                let dyrow = &dyd[(s * c + ci) * t..(s * c + ci + 1) * t];
                let dst = &mut dxs[ci * t..(ci + 1) * t];
                if stats.from_batch {
                    let (dsum, dxhat_sum) = sums[ci];
                    for i in 0..t {
                        let xhat = (xrow[i] - mean) * ivar;
                        let term = dyrow[i] * count - dsum - xhat * dxhat_sum;
                        dst[i] = g * ivar / count * term;
                    }
                } else {
                    // Eval-mode statistics are constants: plain affine pass.
                    for i in 0..t {
                        dst[i] = dyrow[i] * g * ivar;
                    }
                }
            }
        });
        dx
    }

    /// Fold this layer's batch statistics into the running buffers.
    pub fn update_running<F: Scalar>(&self, buffers: &mut [Tensor<F>], stats: &BnStats<F>) {
        debug_assert!(stats.from_batch);
        let m = F::of_f64(BN_MOMENTUM);
        let keep = F::one() - m;
        for (r, &b) in buffers[self.rmean].data_mut().iter_mut().zip(&stats.mean) {
            *r = keep * *r + m * b;
        }
        for (r, &b) in buffers[self.rvar].data_mut().iter_mut().zip(&stats.var) {
            *r = keep * *r + m * b;
        }
    }
}

/// Rectifier over any tensor; the backward mask comes from the output.
pub fn relu<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    let mut y = x.clone();
    for v in y.data_mut() {
        if *v < F::zero() {
            *v = F::zero();
        }
    }
    y
}

/// Standard rule: pass gradient where the unit was active. Guided
/// backpropagation additionally zeroes negative upstream gradients.
pub fn relu_backward<F: Scalar>(y: &Tensor<F>, dy: &Tensor<F>, guided: bool) -> Tensor<F> {
    let mut dx = dy.clone();
    for (dv, &yv) in dx.data_mut().iter_mut().zip(y.data()) {
        if yv <= F::zero() || (guided && *dv < F::zero()) {
            *dv = F::zero();
        }
    }
    dx
}

/// Global average pooling over time: `[n, c, t] -> [n, c]`.
pub fn gap<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    let (n, c, t) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let inv = F::one() / F::of_f64(t as f64);
    let mut y = Tensor::zeros(&[n, c]);
    let xd = x.data();
    for s in 0..n {
        for ci in 0..c {
            let row = &xd[(s * c + ci) * t..(s * c + ci + 1) * t];
            let mut acc = F::zero();
            for &v in row {
                acc = acc + v;
            }
            y.data_mut()[s * c + ci] = acc * inv;
        }
    }
    y
}

pub fn gap_backward<F: Scalar>(dy: &Tensor<F>, t: usize) -> Tensor<F> {
    let (n, c) = (dy.shape()[0], dy.shape()[1]);
    let inv = F::one() / F::of_f64(t as f64);
    let mut dx = Tensor::zeros(&[n, c, t]);
    let dxd = dx.data_mut();
    for s in 0..n {
        for ci in 0..c {
            let g = dy.data()[s * c + ci] * inv;
            for v in &mut dxd[(s * c + ci) * t..(s * c + ci + 1) * t] {
                *v = g;
            }
        }
    }
    dx
}

/// Fully connected layer with bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
    pub inp: usize,
    pub out: usize,
}

impl Linear {
    pub fn forward<F: Scalar>(&self, params: &[Tensor<F>], x: &Tensor<F>) -> Tensor<F> {
        let n = x.shape()[0];
        debug_assert_eq!(x.shape()[1], self.inp);
        let w = params[self.w].data();
        let b = params[self.b].data();
        let mut y = Tensor::zeros(&[n, self.out]);
        let xd = x.data();
        for_each_sample(y.data_mut(), n, |s, ys| {
            let xs = &xd[s * self.inp..(s + 1) * self.inp];
            for (o, yv) in ys.iter_mut().enumerate() {
                let wrow = &w[o * self.inp..(o + 1) * self.inp];
                let mut acc = b[o];
                for (&wv, &xv) in wrow.iter().zip(xs) {
                    acc = acc + wv * xv;
                }
                *yv = acc;
            }
        });
        y
    }

    pub fn backward<F: Scalar>(
        &self,
        params: &[Tensor<F>],
        x: &Tensor<F>,
        dy: &Tensor<F>,
        grads: Option<&mut [Tensor<F>]>,
        want_dx: bool,
    ) -> Option<Tensor<F>> {
        let n = x.shape()[0];
        let xd = x.data();
        let dyd = dy.data();
        if let Some(grads) = grads {
            // Parallel over output units; each accumulates over the batch
            // sequentially, so the reduction order is fixed.
            let rows = map_index(self.out, |o| {
                let mut wrow = vec![F::zero(); self.inp];
                let mut db = F::zero();
                for s in 0..n {
                    let g = dyd[s * self.out + o];
                    db = db + g;
                    let xs = &xd[s * self.inp..(s + 1) * self.inp];
                    for (wv, &xv) in wrow.iter_mut().zip(xs) {
                        *wv = *wv + g * xv;
                    }
                }
                (wrow, db)
            });
            for (o, (wrow, db)) in rows.into_iter().enumerate() {
                let dst = &mut grads[self.w].data_mut()[o * self.inp..(o + 1) * self.inp];
                for (d, v) in dst.iter_mut().zip(wrow) {
                    *d = *d + v;
                }
                grads[self.b].data_mut()[o] = grads[self.b].data_mut()[o] + db;
            }
        }
        if !want_dx {
            return None;
        }
        let w = params[self.w].data();
        let mut dx = Tensor::zeros(&[n, self.inp]);
        for_each_sample(dx.data_mut(), n, |s, dxs| {
            let dys = &dyd[s * self.out..(s + 1) * self.out];
            for (o, &g) in dys.iter().enumerate() {
                let wrow = &w[o * self.inp..(o + 1) * self.inp];
                for (dv, &wv) in dxs.iter_mut().zip(wrow) {
                    *dv = *dv + g * wv;
                }
            }
        });
        Some(dx)
    }
}
