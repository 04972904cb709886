//! Layer-wise relevance propagation over the residual trunk.
//!
//! The eval-mode network is canonized before propagation: every batch norm
//! that directly follows a convolution (the mid-block norm) is folded into
//! that convolution exactly; the remaining norms sit after residual sums
//! and are handled as standalone diagonal affine layers under the same
//! linear rules. Residual junctions split relevance in proportion to each
//! branch's contribution. Rules per depth follow the composite scheme:
//! gamma for the shallowest stage, an increasing epsilon ladder for the
//! middle stages, and the basic rule for the classifier.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::neural::layers::{BatchNorm, Conv1d, Linear, Mode, BN_EPS};
use crate::neural::resnet::{NeuralError, Network};
use crate::neural::scalar::Scalar;
use crate::neural::tensor::Tensor;
use crate::signal::SignalWindow;

/// Which output the map explains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExplainTarget {
    /// One of the pretext heads (task index).
    Pretext(usize),
    Downstream,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrpMode {
    Zero,
    Epsilon(f64),
    Composite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrpConfig {
    pub mode: LrpMode,
    /// Positive-weight boost for the shallow stage under the composite rule.
    pub gamma: f64,
    /// Epsilon ladder for the middle stages, ascending.
    pub epsilons: [f64; 3],
}

impl Default for LrpConfig {
    fn default() -> Self {
        LrpConfig { mode: LrpMode::Composite, gamma: 0.25, epsilons: [1e-9, 1e-3, 10.0] }
    }
}

/// Per-input relevance scores for one window and one explained output.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceMap {
    /// Channel-major C x T, aligned to the input window.
    pub scores: Vec<f64>,
    pub channels: usize,
    pub t: usize,
    pub target: ExplainTarget,
    pub class: usize,
    pub method: String,
    /// Value of the explained logit f(x).
    pub output_value: f64,
}

impl RelevanceMap {
    pub fn total(&self) -> f64 {
        self.scores.iter().sum()
    }

    /// Relevance per timestep, summed over channels.
    pub fn per_timestep(&self) -> Vec<f64> {
        let mut out = alloc::vec![0.0f64; self.t];
        for c in 0..self.channels {
            for (o, &v) in out.iter_mut().zip(&self.scores[c * self.t..(c + 1) * self.t]) {
                *o += v;
            }
        }
        out
    }
}

/// Relevance totals after each propagation step, output first, input
/// last. `sum` is the signed total; `abs` the total absolute mass (the
/// epsilon rules bound the next signed total by the current absolute
/// mass).
#[derive(Debug, Clone, PartialEq)]
pub struct LrpLayerSum {
    pub name: String,
    pub sum: f64,
    pub abs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrpTrace {
    pub layer_sums: Vec<LrpLayerSum>,
}

#[derive(Debug, Clone, Copy)]
enum Rule {
    Zero,
    Eps(f64),
    Gamma(f64),
}

#[inline]
fn stabilize<F: Scalar>(z: F, rule: Rule) -> F {
    let eps = match rule {
        Rule::Zero | Rule::Gamma(_) => F::of_f64(1e-12),
        Rule::Eps(e) => F::of_f64(e),
    };
    if z >= F::zero() {
        z + eps
    } else {
        z - eps
    }
}

/// Positive-boosted copy of a weight tensor under the gamma rule.
fn gamma_weights<F: Scalar>(w: &Tensor<F>, rule: Rule) -> Option<Tensor<F>> {
    match rule {
        Rule::Gamma(g) => {
            let g = F::of_f64(g);
            let mut out = w.clone();
            for v in out.data_mut() {
                if *v > F::zero() {
                    *v = *v + g * *v;
                }
            }
            Some(out)
        }
        _ => None,
    }
}

fn gamma_bias<F: Scalar>(b: &[F], rule: Rule) -> Vec<F> {
    match rule {
        Rule::Gamma(g) => {
            let g = F::of_f64(g);
            b.iter().map(|&v| if v > F::zero() { v + g * v } else { v }).collect()
        }
        _ => b.to_vec(),
    }
}

/// Linear-rule relevance through a convolution with an optional folded
/// per-channel bias: z = conv(x) + b, s = R/stab(z), R_in = x .* conv^T(s).
fn conv_relevance<F: Scalar>(
    conv: &Conv1d,
    w: &Tensor<F>,
    bias: Option<&[F]>,
    x: &Tensor<F>,
    r_out: &Tensor<F>,
    rule: Rule,
) -> Tensor<F> {
    let wmod = gamma_weights(w, rule);
    let weff = wmod.as_ref().unwrap_or(w);
    let beff: Option<Vec<F>> = bias.map(|b| gamma_bias(b, rule));
    let mut z = conv.forward(weff, x);
    if let Some(b) = &beff {
        let (c, t) = (z.shape()[1], z.shape()[2]);
        for ci in 0..c {
            for v in &mut z.data_mut()[ci * t..(ci + 1) * t] {
                *v = *v + b[ci];
            }
        }
    }
    let mut s = r_out.clone();
    for (sv, &zv) in s.data_mut().iter_mut().zip(z.data()) {
        *sv = *sv / stabilize(zv, rule);
    }
    let c = conv.backward(weff, x, &s, None, true).expect("dx requested");
    let mut r_in = x.clone();
    for (rv, &cv) in r_in.data_mut().iter_mut().zip(c.data()) {
        *rv = *rv * cv;
    }
    r_in
}

/// Diagonal affine relevance (standalone eval-mode batch norm):
/// z_i = a_c x_i + b_c per channel.
fn diag_relevance<F: Scalar>(
    scale: &[F],
    shift: &[F],
    x: &Tensor<F>,
    r_out: &Tensor<F>,
    rule: Rule,
) -> Tensor<F> {
    let a = gamma_bias(scale, rule); // same positive-boost as weights
    let b = gamma_bias(shift, rule);
    let (c, t) = (x.shape()[1], x.shape()[2]);
    let mut r_in = x.clone();
    for ci in 0..c {
        for i in 0..t {
            let idx = ci * t + i;
            let xv = x.data()[idx];
            let z = a[ci] * xv + b[ci];
            r_in.data_mut()[idx] = xv * a[ci] * r_out.data()[idx] / stabilize(z, rule);
        }
    }
    r_in
}

fn linear_relevance<F: Scalar>(
    lin: &Linear,
    params: &[Tensor<F>],
    x: &Tensor<F>,
    r_out: &Tensor<F>,
    rule: Rule,
) -> Tensor<F> {
    let w = &params[lin.w];
    let b = params[lin.b].data();
    let wmod = gamma_weights(w, rule);
    let weff = wmod.as_ref().unwrap_or(w);
    let beff = gamma_bias(b, rule);
    let n = x.shape()[0];
    let mut r_in = Tensor::zeros(x.shape());
    for s in 0..n {
        let xs = &x.data()[s * lin.inp..(s + 1) * lin.inp];
        for o in 0..lin.out {
            let wrow = &weff.data()[o * lin.inp..(o + 1) * lin.inp];
            let mut z = beff[o];
            for (&wv, &xv) in wrow.iter().zip(xs) {
                z = z + wv * xv;
            }
            let sv = r_out.data()[s * lin.out + o] / stabilize(z, rule);
            for (i, &wv) in wrow.iter().enumerate() {
                let idx = s * lin.inp + i;
                r_in.data_mut()[idx] = r_in.data_mut()[idx] + xs[i] * wv * sv;
            }
        }
    }
    r_in
}

/// Residual junction: split according to each branch's contribution.
fn sum_split<F: Scalar>(
    branch: &Tensor<F>,
    skip: &Tensor<F>,
    r_out: &Tensor<F>,
    rule: Rule,
) -> (Tensor<F>, Tensor<F>) {
    let mut r_branch = branch.clone();
    let mut r_skip = skip.clone();
    for i in 0..r_out.numel() {
        let total = branch.data()[i] + skip.data()[i];
        let s = r_out.data()[i] / stabilize(total, rule);
        r_branch.data_mut()[i] = branch.data()[i] * s;
        r_skip.data_mut()[i] = skip.data()[i] * s;
    }
    (r_branch, r_skip)
}

/// Eval-mode scale/shift of a batch norm.
fn bn_affine<F: Scalar>(
    bn: &BatchNorm,
    params: &[Tensor<F>],
    buffers: &[Tensor<F>],
) -> (Vec<F>, Vec<F>) {
    let gamma = params[bn.gamma].data();
    let beta = params[bn.beta].data();
    let rmean = buffers[bn.rmean].data();
    let rvar = buffers[bn.rvar].data();
    let eps = F::of_f64(BN_EPS);
    let mut scale = Vec::with_capacity(bn.ch);
    let mut shift = Vec::with_capacity(bn.ch);
    for c in 0..bn.ch {
        let a = gamma[c] / (rvar[c] + eps).sqrt();
        scale.push(a);
        shift.push(beta[c] - a * rmean[c]);
    }
    (scale, shift)
}

/// Fold a following batch norm into a convolution's weights/bias (exact in
/// eval mode).
fn fold_conv_bn<F: Scalar>(
    w: &Tensor<F>,
    conv: &Conv1d,
    scale: &[F],
    shift: &[F],
) -> (Tensor<F>, Vec<F>) {
    let mut folded = w.clone();
    let per_out = conv.cin * conv.k;
    for o in 0..conv.cout {
        for v in &mut folded.data_mut()[o * per_out..(o + 1) * per_out] {
            *v = *v * scale[o];
        }
    }
    (folded, shift.to_vec())
}

struct RuleMap {
    cfg: LrpConfig,
    n_stages: usize,
}

impl RuleMap {
    fn classifier(&self) -> Rule {
        match self.cfg.mode {
            LrpMode::Zero => Rule::Zero,
            LrpMode::Epsilon(e) => Rule::Eps(e),
            LrpMode::Composite => Rule::Zero,
        }
    }
    fn deep(&self) -> Rule {
        match self.cfg.mode {
            LrpMode::Zero => Rule::Zero,
            LrpMode::Epsilon(e) => Rule::Eps(e),
            LrpMode::Composite => Rule::Eps(self.cfg.epsilons[2]),
        }
    }
    fn stage(&self, s: usize) -> Rule {
        match self.cfg.mode {
            LrpMode::Zero => Rule::Zero,
            LrpMode::Epsilon(e) => Rule::Eps(e),
            LrpMode::Composite => {
                if s == 0 {
                    Rule::Gamma(self.cfg.gamma)
                } else {
                    let span = (self.n_stages - 1).max(1);
                    let idx = ((s - 1) * self.cfg.epsilons.len() / span)
                        .min(self.cfg.epsilons.len() - 1);
                    Rule::Eps(self.cfg.epsilons[idx])
                }
            }
        }
    }
    fn stem(&self) -> Rule {
        self.stage(0)
    }
}

/// Propagate relevance for one window from the chosen head and class back
/// to the inputs. Returns the map and the per-layer conservation trace.
pub fn lrp<F: Scalar>(
    net: &Network<F>,
    window: &SignalWindow,
    target: ExplainTarget,
    class: usize,
    cfg: &LrpConfig,
) -> Result<(RelevanceMap, LrpTrace), NeuralError> {
    let x = Network::<F>::batch_from_windows(core::slice::from_ref(window));
    let fwd = net.trunk_forward(&x, Mode::Eval)?;
    let rules = RuleMap { cfg: *cfg, n_stages: net.cfg.n_stages };
    let mut trace: Vec<LrpLayerSum> = Vec::new();

    // Head: relevance starts at the explained logit's value.
    let (mut r, fx): (Tensor<F>, f64) = match target {
        ExplainTarget::Pretext(task) => {
            let head = &net.arch.pretext_heads[task];
            let logits = head.forward(&net.params, &fwd.feats);
            if class >= 2 {
                return Err(NeuralError::LabelOutOfRange { label: class, limit: 2 });
            }
            let fx = logits.data()[class].as_f64();
            let mut r_out = Tensor::zeros(&[1, 2]);
            r_out.data_mut()[class] = logits.data()[class];
            let r = linear_relevance(head, &net.params, &fwd.feats, &r_out, rules.classifier());
            (r, fx)
        }
        ExplainTarget::Downstream => {
            let hidden_pre = net.arch.down_fc.forward(&net.params, &fwd.feats);
            let hidden = crate::neural::layers::relu(&hidden_pre);
            let logits = net.arch.down_out.forward(&net.params, &hidden);
            if class >= net.cfg.n_classes {
                return Err(NeuralError::LabelOutOfRange {
                    label: class,
                    limit: net.cfg.n_classes,
                });
            }
            let fx = logits.data()[class].as_f64();
            let mut r_out = Tensor::zeros(&[1, net.cfg.n_classes]);
            r_out.data_mut()[class] = logits.data()[class];
            let r_hidden = linear_relevance(
                &net.arch.down_out,
                &net.params,
                &hidden,
                &r_out,
                rules.classifier(),
            );
            // ReLU passes relevance unchanged; the fc layer sees its
            // post-activation input.
            let r = linear_relevance(
                &net.arch.down_fc,
                &net.params,
                &fwd.feats,
                &r_hidden,
                rules.classifier(),
            );
            (r, fx)
        }
    };
    trace.push(layer_sum("head", &r));

    // Global average pooling: z-rule over the time axis.
    {
        let proj_out =
            net.arch.final_proj.forward(&net.params[net.arch.final_proj.w], &fwd.final_act);
        let (c, t) = (proj_out.shape()[1], proj_out.shape()[2]);
        let mut r_time = Tensor::zeros(&[1, c, t]);
        let inv_t = F::of_f64(1.0 / t as f64);
        for ci in 0..c {
            let z = fwd.feats.data()[ci];
            let s = r.data()[ci] / stabilize(z, rules.deep());
            for i in 0..t {
                r_time.data_mut()[ci * t + i] = proj_out.data()[ci * t + i] * inv_t * s;
            }
        }
        r = r_time;
    }
    trace.push(layer_sum("gap", &r));

    // Final projection convolution.
    r = conv_relevance(
        &net.arch.final_proj,
        &net.params[net.arch.final_proj.w],
        None,
        &fwd.final_act,
        &r,
        rules.deep(),
    );
    trace.push(layer_sum("final_proj", &r));

    // Final batch norm (standalone diagonal affine; ReLU passes through).
    {
        let (scale, shift) = bn_affine(&net.arch.final_bn, &net.params, &net.buffers);
        r = diag_relevance(&scale, &shift, &fwd.pre_final, &r, rules.deep());
    }
    trace.push(layer_sum("final_bn", &r));

    // Blocks in reverse.
    let bps = net.cfg.blocks_per_stage;
    for (bi, (blk, cache)) in net.arch.blocks.iter().zip(&fwd.blocks).enumerate().rev() {
        let stage = bi / bps;
        let rule = rules.stage(stage);
        let v = blk.conv2.forward(&net.params[blk.conv2.w], &cache.a2);
        let skip = match &blk.proj {
            Some(p) => p.forward(&net.params[p.w], &cache.a),
            None => cache.x_in.clone(),
        };
        let (r_v, r_skip) = sum_split(&v, &skip, &r, rule);
        // conv2 (no following norm).
        let r_a2 = conv_relevance(&blk.conv2, &net.params[blk.conv2.w], None, &cache.a2, &r_v, rule);
        // conv1 with its following norm folded in (exact in eval mode).
        let (scale_b, shift_b) = bn_affine(&blk.bn_b, &net.params, &net.buffers);
        let (w1, b1) = fold_conv_bn(&net.params[blk.conv1.w], &blk.conv1, &scale_b, &shift_b);
        let mut r_a = conv_relevance(&blk.conv1, &w1, Some(&b1), &cache.a, &r_a2, rule);
        let mut r_u_skip: Option<Tensor<F>> = None;
        match &blk.proj {
            Some(p) => {
                let r_a_proj =
                    conv_relevance(p, &net.params[p.w], None, &cache.a, &r_skip, rule);
                for (a, &b) in r_a.data_mut().iter_mut().zip(r_a_proj.data()) {
                    *a = *a + b;
                }
            }
            None => r_u_skip = Some(r_skip),
        }
        // Entry norm as a diagonal affine (ReLU passes through).
        let (scale_a, shift_a) = bn_affine(&blk.bn_a, &net.params, &net.buffers);
        let mut r_u = diag_relevance(&scale_a, &shift_a, &cache.x_in, &r_a, rule);
        if let Some(rs) = r_u_skip {
            for (a, &b) in r_u.data_mut().iter_mut().zip(rs.data()) {
                *a = *a + b;
            }
        }
        r = r_u;
        trace.push(layer_sum(&format!("s{}.b{}", stage, bi % bps), &r));
    }

    // Stem convolution down to the raw inputs.
    r = conv_relevance(
        &net.arch.stem,
        &net.params[net.arch.stem.w],
        None,
        &fwd.input,
        &r,
        rules.stem(),
    );
    trace.push(layer_sum("stem", &r));

    let method = match cfg.mode {
        LrpMode::Zero => String::from("lrp-0"),
        LrpMode::Epsilon(_) => String::from("lrp-eps"),
        LrpMode::Composite => String::from("lrp-cmp"),
    };
    let map = RelevanceMap {
        scores: r.data().iter().map(|v| v.as_f64()).collect(),
        channels: 3,
        t: window.len(),
        target,
        class,
        method,
        output_value: fx,
    };
    Ok((map, LrpTrace { layer_sums: trace }))
}

fn layer_sum<F: Scalar>(name: &str, t: &Tensor<F>) -> LrpLayerSum {
    let mut sum = 0.0f64;
    let mut abs = 0.0f64;
    for v in t.data() {
        let v = v.as_f64();
        sum += v;
        abs += v.abs();
    }
    LrpLayerSum { name: String::from(name), sum, abs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::resnet::NetConfig;
    use crate::rng::Rng;

    fn random_window(seed: u64) -> SignalWindow {
        let mut rng = Rng::new(seed);
        let samples: Vec<f32> = (0..3 * 300)
            .map(|i| ((i as f64 * 0.11).sin() * 0.6 + rng.next_f64() * 0.4 - 0.2) as f32)
            .collect();
        SignalWindow::new(samples, 30, 10).unwrap()
    }

    #[test]
    fn single_linear_layer_closed_form() {
        // R_i = w_i * x_i for LRP-0 on y = w . x (zero bias).
        let params = vec![
            Tensor::from_vec(vec![0.5f64, -0.25, 1.5], &[1, 3]),
            Tensor::from_vec(vec![0.0f64], &[1]),
        ];
        let lin = Linear { w: 0, b: 1, inp: 3, out: 1 };
        let x = Tensor::from_vec(vec![2.0f64, 4.0, -1.0], &[1, 3]);
        let y = lin.forward(&params, &x);
        let mut r_out = Tensor::zeros(&[1, 1]);
        r_out.data_mut()[0] = y.data()[0];
        let r = linear_relevance(&lin, &params, &x, &r_out, Rule::Zero);
        let expect = [0.5 * 2.0, -0.25 * 4.0, 1.5 * -1.0];
        for (a, e) in r.data().iter().zip(expect) {
            assert!((a - e).abs() < 1e-9);
        }
    }

    #[test]
    fn conservation_on_bias_free_net() {
        // A freshly initialized network is bias-free in eval mode: BN
        // shifts and running means are zero and head biases are zero.
        let net = Network::<f64>::build(NetConfig::tiny(2), 31).unwrap();
        let w = random_window(5);
        for task in 0..3 {
            let (map, trace) =
                lrp(&net, &w, ExplainTarget::Pretext(task), 0, &LrpConfig {
                    mode: LrpMode::Zero,
                    ..Default::default()
                })
                .unwrap();
            let fx = map.output_value;
            assert!(fx.abs() > 1e-6, "degenerate logit");
            for layer in &trace.layer_sums {
                let rel = (layer.sum - fx).abs() / fx.abs();
                assert!(
                    rel < 1e-4,
                    "layer {}: sum {} vs f(x) {fx} (rel {rel})",
                    layer.name,
                    layer.sum
                );
            }
            let rel = (map.total() - fx).abs() / fx.abs();
            assert!(rel < 1e-4, "input sum {} vs {}", map.total(), fx);
        }
    }

    #[test]
    fn zero_input_gives_zero_relevance() {
        let net = Network::<f64>::build(NetConfig::tiny(2), 8).unwrap();
        let w = SignalWindow::new(vec![0.0f32; 3 * 300], 30, 10).unwrap();
        let (map, _) = lrp(&net, &w, ExplainTarget::Pretext(0), 1, &LrpConfig::default()).unwrap();
        assert!(map.scores.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn epsilon_rule_absorbs_relevance() {
        let net = Network::<f64>::build(NetConfig::tiny(2), 13).unwrap();
        let w = random_window(7);
        for eps in [1e-9, 1e-3, 10.0] {
            let (_, trace) = lrp(
                &net,
                &w,
                ExplainTarget::Pretext(1),
                0,
                &LrpConfig { mode: LrpMode::Epsilon(eps), ..Default::default() },
            )
            .unwrap();
            // Per-unit absorption: each unit's redistributed mass shrinks
            // by |z|/(|z|+eps), so the next signed total is bounded by the
            // current absolute mass (sign cancellation means the tighter
            // signed-by-signed bound does not hold in general).
            for pair in trace.layer_sums.windows(2) {
                let (prev, next) = (&pair[0], &pair[1]);
                assert!(
                    next.sum.abs() <= prev.abs + 1e-6,
                    "eps {eps}: |{}| ({}) exceeds absolute inflow of {} ({})",
                    next.name,
                    next.sum,
                    prev.name,
                    prev.abs
                );
            }
        }
    }

    #[test]
    fn composite_runs_on_downstream_head() {
        let net = Network::<f64>::build(NetConfig::tiny(4), 21).unwrap();
        let w = random_window(9);
        let (map, _) =
            lrp(&net, &w, ExplainTarget::Downstream, 2, &LrpConfig::default()).unwrap();
        assert_eq!(map.scores.len(), 3 * 300);
        assert!(map.scores.iter().all(|v| v.is_finite()));
        assert!(lrp(&net, &w, ExplainTarget::Downstream, 9, &LrpConfig::default()).is_err());
    }
}
