//! The 1D pre-activation residual trunk and its heads.
//!
//! Layer table: a stem convolution, `n_stages` stages of pre-activation
//! blocks (BN -> ReLU -> conv, two convolutions per block, stride-2 entry
//! convolutions after the first stage, 1x1 projection shortcuts where the
//! shape changes), then a final BN -> ReLU -> projection convolution to
//! `feature_dim` channels and global average pooling. With the full
//! configuration that is 18 weighted convolutions (16 block convolutions,
//! the stem, and the final projection; shortcut projections are not
//! counted) and about 9.4M trainable parameters.
//!
//! Parameters live in one flat indexed table so the optimizer, checkpoint
//! codec, and gradient checker can address them uniformly; layers store
//! indices into that table.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

// Pulls in float math on builds without std.
#[allow(unused_imports)]
use num_traits::Float;

use crate::rng::Rng;
use crate::signal::SignalWindow;
use crate::transforms::TASK_NAMES;

use super::layers::{gap, gap_backward, relu, relu_backward, BatchNorm, BnStats, Conv1d, Linear, Mode};
use super::scalar::Scalar;
use super::tensor::Tensor;

pub const PRETEXT_TASKS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    /// Channel count of the first stage; stages double from here.
    pub width_base: usize,
    pub n_stages: usize,
    pub blocks_per_stage: usize,
    /// Channel count after the final projection == feature vector size.
    pub feature_dim: usize,
    pub kernel_size: usize,
    pub input_t: usize,
    /// Output classes of the downstream head.
    pub n_classes: usize,
}

impl NetConfig {
    /// Full-scale configuration (~9.4M parameters, 1024-d features).
    pub fn full(n_classes: usize) -> Self {
        NetConfig {
            width_base: 64,
            n_stages: 4,
            blocks_per_stage: 2,
            feature_dim: 1024,
            kernel_size: 5,
            input_t: 300,
            n_classes,
        }
    }

    /// Desk-scale configuration used by all fast experiments (~155k
    /// parameters, 64-d features).
    pub fn tiny(n_classes: usize) -> Self {
        NetConfig {
            width_base: 8,
            n_stages: 4,
            blocks_per_stage: 2,
            feature_dim: 64,
            kernel_size: 5,
            input_t: 300,
            n_classes,
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.kernel_size % 2 == 0 || self.kernel_size == 0 {
            return Err(NeuralError::BadConfig("kernel_size must be odd"));
        }
        if self.width_base == 0
            || self.n_stages == 0
            || self.blocks_per_stage == 0
            || self.feature_dim == 0
            || self.input_t == 0
            || self.n_classes < 2
        {
            return Err(NeuralError::BadConfig(
                "width/stages/blocks/feature_dim/input_t must be positive; n_classes >= 2",
            ));
        }
        // Every stage after the first halves T; the tail must stay nonempty.
        if self.input_t >> (self.n_stages - 1) == 0 {
            return Err(NeuralError::BadConfig("input_t too short for the stage count"));
        }
        Ok(())
    }

    /// Total trainable parameter count — a pure function of the config.
    pub fn param_count(&self) -> usize {
        build_arch(self).metas.iter().map(|m| m.shape.iter().product::<usize>()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NeuralError {
    BadConfig(&'static str),
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    LabelOutOfRange { label: usize, limit: usize },
    /// Non-finite gradient; carries the offending tensor's name.
    NonFiniteGradient(String),
    CheckpointMismatch(String),
}

impl fmt::Display for NeuralError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NeuralError::BadConfig(m) => write!(f, "invalid network config: {m}"),
            NeuralError::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected:?}, got {got:?}")
            }
            NeuralError::LabelOutOfRange { label, limit } => {
                write!(f, "label {label} out of range (limit {limit})")
            }
            NeuralError::NonFiniteGradient(name) => {
                write!(f, "non-finite gradient in tensor '{name}'")
            }
            NeuralError::CheckpointMismatch(m) => write!(f, "checkpoint mismatch: {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamMeta {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub bn_a: BatchNorm,
    pub conv1: Conv1d,
    pub bn_b: BatchNorm,
    pub conv2: Conv1d,
    pub proj: Option<Conv1d>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arch {
    pub stem: Conv1d,
    pub blocks: Vec<Block>,
    pub final_bn: BatchNorm,
    pub final_proj: Conv1d,
    pub pretext_heads: Vec<Linear>,
    pub down_fc: Linear,
    pub down_out: Linear,
    pub metas: Vec<ParamMeta>,
    pub buffer_metas: Vec<ParamMeta>,
    /// Params at indices `>= first_head_param` belong to the heads.
    pub first_head_param: usize,
}

struct Registry {
    metas: Vec<ParamMeta>,
    buffer_metas: Vec<ParamMeta>,
}

impl Registry {
    fn param(&mut self, name: String, shape: &[usize]) -> usize {
        self.metas.push(ParamMeta { name, shape: shape.to_vec() });
        self.metas.len() - 1
    }
    fn buffer(&mut self, name: String, shape: &[usize]) -> usize {
        self.buffer_metas.push(ParamMeta { name, shape: shape.to_vec() });
        self.buffer_metas.len() - 1
    }
    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, stride: usize) -> Conv1d {
        let w = self.param(format!("{name}.w"), &[cout, cin, k]);
        Conv1d { w, cin, cout, k, stride, pad: k / 2 }
    }
    fn bn(&mut self, name: &str, ch: usize) -> BatchNorm {
        let gamma = self.param(format!("{name}.gamma"), &[ch]);
        let beta = self.param(format!("{name}.beta"), &[ch]);
        let rmean = self.buffer(format!("{name}.running_mean"), &[ch]);
        let rvar = self.buffer(format!("{name}.running_var"), &[ch]);
        BatchNorm { gamma, beta, rmean, rvar, ch }
    }
    fn linear(&mut self, name: &str, inp: usize, out: usize) -> Linear {
        let w = self.param(format!("{name}.w"), &[out, inp]);
        let b = self.param(format!("{name}.b"), &[out]);
        Linear { w, b, inp, out }
    }
}

/// Build the layer wiring and parameter layout for a config.
pub fn build_arch(cfg: &NetConfig) -> Arch {
    let mut reg = Registry { metas: Vec::new(), buffer_metas: Vec::new() };
    let k = cfg.kernel_size;
    let stem = reg.conv("stem", 3, cfg.width_base, k, 1);
    let mut blocks = Vec::new();
    let mut ch_in = cfg.width_base;
    for s in 0..cfg.n_stages {
        let ch_out = cfg.width_base << s;
        for b in 0..cfg.blocks_per_stage {
            let stride = if s > 0 && b == 0 { 2 } else { 1 };
            let name = format!("s{s}.b{b}");
            let bn_a = reg.bn(&format!("{name}.bn_a"), ch_in);
            let conv1 = reg.conv(&format!("{name}.conv1"), ch_in, ch_out, k, stride);
            let bn_b = reg.bn(&format!("{name}.bn_b"), ch_out);
            let conv2 = reg.conv(&format!("{name}.conv2"), ch_out, ch_out, k, 1);
            let proj = if stride != 1 || ch_in != ch_out {
                Some(reg.conv(&format!("{name}.proj"), ch_in, ch_out, 1, stride))
            } else {
                None
            };
            blocks.push(Block { bn_a, conv1, bn_b, conv2, proj });
            ch_in = ch_out;
        }
    }
    let final_bn = reg.bn("final_bn", ch_in);
    let final_proj = reg.conv("final_proj", ch_in, cfg.feature_dim, k, 1);
    let first_head_param = reg.metas.len();
    let pretext_heads = TASK_NAMES
        .iter()
        .map(|t| reg.linear(&format!("head.{t}"), cfg.feature_dim, 2))
        .collect();
    let down_fc = reg.linear("head.fc", cfg.feature_dim, 512);
    let down_out = reg.linear("head.out", 512, cfg.n_classes);
    Arch {
        stem,
        blocks,
        final_bn,
        final_proj,
        pretext_heads,
        down_fc,
        down_out,
        metas: reg.metas,
        buffer_metas: reg.buffer_metas,
        first_head_param,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<F> {
    pub cfg: NetConfig,
    pub arch: Arch,
    pub params: Vec<Tensor<F>>,
    pub buffers: Vec<Tensor<F>>,
    pub seed: u64,
}

impl<F: Scalar> Network<F> {
    /// He-normal initialization for convolution and linear weights, unit
    /// scale / zero shift for batch norms. Draws happen in f64 and round to
    /// the working precision, so builds agree across precisions.
    pub fn build(cfg: NetConfig, seed: u64) -> Result<Self, NeuralError> {
        cfg.validate()?;
        let arch = build_arch(&cfg);
        let mut rng = Rng::stream(seed, 0x4e45_5457); // params stream
        let mut params = Vec::with_capacity(arch.metas.len());
        for meta in &arch.metas {
            let numel: usize = meta.shape.iter().product();
            let mut t = Tensor::<F>::zeros(&meta.shape);
            if meta.name.ends_with(".gamma") {
                t.fill(F::one());
            } else if meta.name.ends_with(".beta") || meta.name.ends_with(".b") {
                // stays zero
            } else {
                // Weight tensor: fan-in is everything but the leading dim.
                let fan_in = numel / meta.shape[0];
                let std = (2.0 / fan_in as f64).sqrt();
                for v in t.data_mut() {
                    *v = F::of_f64(rng.normal() * std);
                }
            }
            params.push(t);
        }
        let mut buffers = Vec::with_capacity(arch.buffer_metas.len());
        for meta in &arch.buffer_metas {
            let mut t = Tensor::<F>::zeros(&meta.shape);
            if meta.name.ends_with(".running_var") {
                t.fill(F::one());
            }
            buffers.push(t);
        }
        Ok(Network { cfg, arch, params, buffers, seed })
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Convert the network to another working precision.
    pub fn cast<G: Scalar>(&self) -> Network<G> {
        Network {
            cfg: self.cfg,
            arch: self.arch.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
            buffers: self.buffers.iter().map(Tensor::cast).collect(),
            seed: self.seed,
        }
    }

    pub fn zero_grads(&self) -> Vec<Tensor<F>> {
        self.arch.metas.iter().map(|m| Tensor::zeros(&m.shape)).collect()
    }

    /// All batch-norm layers in forward order (used to apply stat updates).
    pub fn bns(&self) -> Vec<&BatchNorm> {
        let mut out: Vec<&BatchNorm> = Vec::new();
        for b in &self.arch.blocks {
            out.push(&b.bn_a);
            out.push(&b.bn_b);
        }
        out.push(&self.arch.final_bn);
        out
    }

    /// Convert windows into an `[n, 3, t]` input batch.
    pub fn batch_from_windows(windows: &[SignalWindow]) -> Tensor<F> {
        let t = windows[0].len();
        let mut data = Vec::with_capacity(windows.len() * 3 * t);
        for w in windows {
            for &v in w.samples() {
                data.push(F::of_f32(v));
            }
        }
        Tensor::from_vec(data, &[windows.len(), 3, t])
    }

    fn check_input(&self, x: &Tensor<F>) -> Result<(), NeuralError> {
        if x.shape().len() != 3 || x.shape()[1] != 3 || x.shape()[2] != self.cfg.input_t {
            return Err(NeuralError::ShapeMismatch {
                expected: vec![x.shape().first().copied().unwrap_or(0), 3, self.cfg.input_t],
                got: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    fn block_forward(&self, blk: &Block, x: Tensor<F>, mode: Mode) -> (Tensor<F>, BlockCache<F>) {
        let (bn_a_out, bn_a_stats) = blk.bn_a.forward(&self.params, &self.buffers, &x, mode);
        let a = relu(&bn_a_out);
        let h1 = blk.conv1.forward(&self.params[blk.conv1.w], &a);
        let (bn_b_out, bn_b_stats) = blk.bn_b.forward(&self.params, &self.buffers, &h1, mode);
        let a2 = relu(&bn_b_out);
        let mut out = blk.conv2.forward(&self.params[blk.conv2.w], &a2);
        match &blk.proj {
            Some(p) => {
                let skip = p.forward(&self.params[p.w], &a);
                for (o, &s) in out.data_mut().iter_mut().zip(skip.data()) {
                    *o = *o + s;
                }
            }
            None => {
                for (o, &s) in out.data_mut().iter_mut().zip(x.data()) {
                    *o = *o + s;
                }
            }
        }
        (out, BlockCache { x_in: x, a, h1, a2, bn_a_stats, bn_b_stats })
    }

    /// Trunk forward pass with every activation the reverse pass needs.
    pub fn trunk_forward(&self, x: &Tensor<F>, mode: Mode) -> Result<TrunkForward<F>, NeuralError> {
        self.check_input(x)?;
        let stem_out = self.arch.stem.forward(&self.params[self.arch.stem.w], x);
        let mut cur = stem_out;
        let mut blocks = Vec::with_capacity(self.arch.blocks.len());
        for blk in &self.arch.blocks {
            let (out, cache) = self.block_forward(blk, cur, mode);
            blocks.push(cache);
            cur = out;
        }
        let (bn_out, final_stats) =
            self.arch.final_bn.forward(&self.params, &self.buffers, &cur, mode);
        let final_act = relu(&bn_out);
        let proj_out = self.arch.final_proj.forward(&self.params[self.arch.final_proj.w], &final_act);
        let feats = gap(&proj_out);
        Ok(TrunkForward {
            input: x.clone(),
            blocks,
            pre_final: cur,
            final_stats,
            final_act,
            proj_t: proj_out.shape()[2],
            feats,
        })
    }

    /// Reverse pass from a feature-vector gradient. Accumulates parameter
    /// gradients when `grads` is given and returns the input gradient when
    /// `want_dx` is set.
    pub fn trunk_backward(
        &self,
        fwd: &TrunkForward<F>,
        dfeats: &Tensor<F>,
        mut grads: Option<&mut Vec<Tensor<F>>>,
        want_dx: bool,
        guided: bool,
    ) -> Option<Tensor<F>> {
        let d_proj_out = gap_backward(dfeats, fwd.proj_t);
        let fp = &self.arch.final_proj;
        let mut d_final_act = fp
            .backward(
                &self.params[fp.w],
                &fwd.final_act,
                &d_proj_out,
                grads.as_deref_mut().map(|g| &mut g[fp.w]),
                true,
            )
            .expect("dx requested");
        d_final_act = relu_backward(&fwd.final_act, &d_final_act, guided);
        let mut d = self.arch.final_bn.backward(
            &self.params,
            &fwd.pre_final,
            &fwd.final_stats,
            &d_final_act,
            grads.as_deref_mut().map(|g| g.as_mut_slice()),
        );
        for (blk, cache) in self.arch.blocks.iter().zip(&fwd.blocks).rev() {
            d = self.block_backward(blk, cache, &d, grads.as_deref_mut(), guided);
        }
        // Stem.
        let stem = &self.arch.stem;
        stem.backward(
            &self.params[stem.w],
            &fwd.input,
            &d,
            grads.as_deref_mut().map(|g| &mut g[stem.w]),
            want_dx,
        )
    }

    fn block_backward(
        &self,
        blk: &Block,
        cache: &BlockCache<F>,
        d_out: &Tensor<F>,
        mut grads: Option<&mut Vec<Tensor<F>>>,
        guided: bool,
    ) -> Tensor<F> {
        let conv2 = &blk.conv2;
        let d_a2 = conv2
            .backward(
                &self.params[conv2.w],
                &cache.a2,
                d_out,
                grads.as_deref_mut().map(|g| &mut g[conv2.w]),
                true,
            )
            .expect("dx requested");
        let d_bnb_out = relu_backward(&cache.a2, &d_a2, guided);
        let d_h1 = blk.bn_b.backward(
            &self.params,
            &cache.h1,
            &cache.bn_b_stats,
            &d_bnb_out,
            grads.as_deref_mut().map(|g| g.as_mut_slice()),
        );
        let conv1 = &blk.conv1;
        let mut d_a = conv1
            .backward(
                &self.params[conv1.w],
                &cache.a,
                &d_h1,
                grads.as_deref_mut().map(|g| &mut g[conv1.w]),
                true,
            )
            .expect("dx requested");
        if let Some(p) = &blk.proj {
            let d_a_proj = p
                .backward(
                    &self.params[p.w],
                    &cache.a,
                    d_out,
                    grads.as_deref_mut().map(|g| &mut g[p.w]),
                    true,
                )
                .expect("dx requested");
            for (a, &b) in d_a.data_mut().iter_mut().zip(d_a_proj.data()) {
                *a = *a + b;
            }
        }
        let d_bna_out = relu_backward(&cache.a, &d_a, guided);
        let mut dx = blk.bn_a.backward(
            &self.params,
            &cache.x_in,
            &cache.bn_a_stats,
            &d_bna_out,
            grads.as_deref_mut().map(|g| g.as_mut_slice()),
        );
        if blk.proj.is_none() {
            for (a, &b) in dx.data_mut().iter_mut().zip(d_out.data()) {
                *a = *a + b;
            }
        }
        dx
    }

    /// Eval- or train-mode forward producing features and every head's
    /// logits. Does not touch running statistics; see
    /// [`Network::forward_update`] for the stat-updating variant.
    pub fn forward(&self, x: &Tensor<F>, mode: Mode) -> Result<ForwardOut<F>, NeuralError> {
        let fwd = self.trunk_forward(x, mode)?;
        Ok(self.heads_from_features(fwd.feats))
    }

    /// Train-mode forward that folds the batch statistics into the running
    /// buffers, as a training step would.
    pub fn forward_update(&mut self, x: &Tensor<F>) -> Result<ForwardOut<F>, NeuralError> {
        let fwd = self.trunk_forward(x, Mode::Train)?;
        let stats: Vec<BnStats<F>> = collect_bn_stats(&fwd);
        self.apply_bn_updates(&stats);
        Ok(self.heads_from_features(fwd.feats))
    }

    fn heads_from_features(&self, feats: Tensor<F>) -> ForwardOut<F> {
        let pretext_logits: Vec<Tensor<F>> = self
            .arch
            .pretext_heads
            .iter()
            .map(|h| h.forward(&self.params, &feats))
            .collect();
        let hidden = relu(&self.arch.down_fc.forward(&self.params, &feats));
        let downstream_logits = self.arch.down_out.forward(&self.params, &hidden);
        ForwardOut { features: feats, pretext_logits, downstream_logits }
    }

    /// Fold a forward pass's batch statistics into the running buffers.
    /// `stats` must align with [`Network::bns`] order.
    pub fn apply_bn_updates(&mut self, stats: &[BnStats<F>]) {
        let bns: Vec<BatchNorm> = self.bns().into_iter().cloned().collect();
        debug_assert_eq!(bns.len(), stats.len());
        for (bn, st) in bns.iter().zip(stats) {
            if st.from_batch {
                bn.update_running(&mut self.buffers, st);
            }
        }
    }
}

/// Batch-stat snapshot in [`Network::bns`] order.
pub fn collect_bn_stats<F: Scalar>(fwd: &TrunkForward<F>) -> Vec<BnStats<F>> {
    let mut stats = Vec::with_capacity(fwd.blocks.len() * 2 + 1);
    for c in &fwd.blocks {
        stats.push(c.bn_a_stats.clone());
        stats.push(c.bn_b_stats.clone());
    }
    stats.push(fwd.final_stats.clone());
    stats
}

#[derive(Debug, Clone)]
pub struct BlockCache<F> {
    pub x_in: Tensor<F>,
    pub a: Tensor<F>,
    pub h1: Tensor<F>,
    pub a2: Tensor<F>,
    pub bn_a_stats: BnStats<F>,
    pub bn_b_stats: BnStats<F>,
}

#[derive(Debug, Clone)]
pub struct TrunkForward<F> {
    pub input: Tensor<F>,
    pub blocks: Vec<BlockCache<F>>,
    pub pre_final: Tensor<F>,
    pub final_stats: BnStats<F>,
    pub final_act: Tensor<F>,
    pub proj_t: usize,
    pub feats: Tensor<F>,
}

#[derive(Debug, Clone)]
pub struct ForwardOut<F> {
    pub features: Tensor<F>,
    pub pretext_logits: Vec<Tensor<F>>,
    pub downstream_logits: Tensor<F>,
}
