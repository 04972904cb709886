//! Attribution faithfulness by cumulative masking: noise out timesteps in
//! an attribution-defined order and watch per-task accuracy collapse. The
//! faster the drop, the more faithful the attribution.

#[allow(unused_imports)]
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::neural::resnet::{NeuralError, Network, PRETEXT_TASKS};
use crate::neural::tensor::Tensor;
use crate::rng::Rng;
use crate::signal::{window_intensity, SignalWindow};
use crate::transforms::PretextLabel;

use super::gradients::{guided_backprop, saliency};
use super::lrp::{lrp, ExplainTarget, LrpConfig, LrpMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskOrder {
    /// Most relevant timestep first, per the chosen attribution method.
    Relevance,
    Random,
    TemporalForward,
    TemporalReverse,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttributionMethod {
    LrpCmp,
    Lrp0,
    LrpEpsilon(f64),
    Saliency,
    GuidedBackprop,
}

/// Accuracy per mask fraction per pretext task.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskCurve {
    pub fractions: Vec<f64>,
    pub per_task_accuracy: Vec<[f64; PRETEXT_TASKS]>,
}

impl MaskCurve {
    /// Trapezoidal area under one task's accuracy-vs-fraction curve.
    pub fn auc(&self, task: usize) -> f64 {
        let mut area = 0.0;
        for i in 1..self.fractions.len() {
            let df = self.fractions[i] - self.fractions[i - 1];
            area += 0.5 * df
                * (self.per_task_accuracy[i][task] + self.per_task_accuracy[i - 1][task]);
        }
        area
    }
}

/// Pointwise mean of two curves (used to report the temporal orders as one
/// forward/reverse average).
pub fn mean_curve(a: &MaskCurve, b: &MaskCurve) -> MaskCurve {
    let per_task_accuracy = a
        .per_task_accuracy
        .iter()
        .zip(&b.per_task_accuracy)
        .map(|(x, y)| {
            let mut m = [0.0; PRETEXT_TASKS];
            for t in 0..PRETEXT_TASKS {
                m[t] = 0.5 * (x[t] + y[t]);
            }
            m
        })
        .collect();
    MaskCurve { fractions: a.fractions.clone(), per_task_accuracy }
}

/// The guard threshold below which a model is treated as untrained.
pub const CHANCE_GUARD: f64 = 0.6;

fn relevance_order(
    net64: &Network<f64>,
    window: &SignalWindow,
    method: AttributionMethod,
) -> Result<Vec<usize>, NeuralError> {
    // Explain the arrow-of-time head's predicted class.
    let x = Network::<f64>::batch_from_windows(core::slice::from_ref(window));
    let out = net64.forward(&x, crate::neural::layers::Mode::Eval)?;
    let row = out.pretext_logits[0].row(0);
    let class = usize::from(row[1] > row[0]);
    let per_t = match method {
        AttributionMethod::LrpCmp => {
            lrp(net64, window, ExplainTarget::Pretext(0), class, &LrpConfig::default())?
                .0
                .per_timestep()
        }
        AttributionMethod::Lrp0 => {
            let cfg = LrpConfig { mode: LrpMode::Zero, ..Default::default() };
            lrp(net64, window, ExplainTarget::Pretext(0), class, &cfg)?.0.per_timestep()
        }
        AttributionMethod::LrpEpsilon(e) => {
            let cfg = LrpConfig { mode: LrpMode::Epsilon(e), ..Default::default() };
            lrp(net64, window, ExplainTarget::Pretext(0), class, &cfg)?.0.per_timestep()
        }
        AttributionMethod::Saliency => {
            saliency(net64, window, ExplainTarget::Pretext(0), class)?.per_timestep()
        }
        AttributionMethod::GuidedBackprop => {
            guided_backprop(net64, window, ExplainTarget::Pretext(0), class)?.per_timestep()
        }
    };
    let mut order: Vec<usize> = (0..per_t.len()).collect();
    order.sort_by(|&a, &b| per_t[b].total_cmp(&per_t[a]).then(a.cmp(&b)));
    Ok(order)
}

/// Cumulative-masking degradation curve: at each fraction the first
/// `round(f * T)` timesteps of the order are replaced (all channels) by
/// Gaussian noise scaled to the window's own norm standard deviation.
pub fn mask_faithfulness(
    net: &Network<f32>,
    eval: &[(SignalWindow, PretextLabel)],
    method: AttributionMethod,
    order: MaskOrder,
    noise_scale: f64,
    seed: u64,
) -> Result<MaskCurve, NeuralError> {
    if eval.is_empty() {
        return Err(NeuralError::BadConfig("empty evaluation set"));
    }
    let t_len = eval[0].0.len();
    // Chance-level guard: reject untrained models outright.
    let unmasked = batch_accuracy(net, eval.iter().map(|(w, l)| (w.clone(), *l)).collect())?;
    let mean_acc = unmasked.iter().sum::<f64>() / PRETEXT_TASKS as f64;
    if mean_acc < CHANCE_GUARD {
        return Err(NeuralError::BadConfig(
            "model accuracy is at chance level; train before masking",
        ));
    }
    let net64: Network<f64> = net.cast();
    let root = Rng::stream(seed, 0x4d41_534b);
    // Per-window masking order and pre-drawn noise (cumulative masking
    // reuses the same noise across fractions).
    let mut orders: Vec<Vec<usize>> = Vec::with_capacity(eval.len());
    let mut noises: Vec<Vec<f32>> = Vec::with_capacity(eval.len());
    for (wi, (window, _)) in eval.iter().enumerate() {
        let mut wrng = root.fork(wi as u64);
        let order_vec = match order {
            MaskOrder::Relevance => relevance_order(&net64, window, method)?,
            MaskOrder::Random => {
                let mut v: Vec<usize> = (0..t_len).collect();
                wrng.shuffle(&mut v);
                v
            }
            MaskOrder::TemporalForward => (0..t_len).collect(),
            MaskOrder::TemporalReverse => (0..t_len).rev().collect(),
        };
        let sigma = noise_scale * window_intensity(window);
        let noise: Vec<f32> =
            (0..3 * t_len).map(|_| (wrng.normal() * sigma) as f32).collect();
        orders.push(order_vec);
        noises.push(noise);
    }
    let fractions: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
    let mut per_task_accuracy = Vec::with_capacity(fractions.len());
    for &frac in &fractions {
        let k = ((frac * t_len as f64).round() as usize).min(t_len);
        let masked: Vec<(SignalWindow, PretextLabel)> = eval
            .iter()
            .enumerate()
            .map(|(wi, (window, label))| {
                let mut samples = window.samples().to_vec();
                for &t in orders[wi].iter().take(k) {
                    for c in 0..3 {
                        samples[c * t_len + t] = noises[wi][c * t_len + t];
                    }
                }
                (window.like(samples).expect("masking preserves shape"), *label)
            })
            .collect();
        per_task_accuracy.push(batch_accuracy(net, masked)?);
    }
    Ok(MaskCurve { fractions, per_task_accuracy })
}

fn batch_accuracy(
    net: &Network<f32>,
    items: Vec<(SignalWindow, PretextLabel)>,
) -> Result<[f64; PRETEXT_TASKS], NeuralError> {
    let mut batches = Vec::new();
    for chunk in items.chunks(256) {
        let windows: Vec<SignalWindow> = chunk.iter().map(|(w, _)| w.clone()).collect();
        let labels: Vec<PretextLabel> = chunk.iter().map(|(_, l)| *l).collect();
        batches.push((Network::<f32>::batch_from_windows(&windows), labels));
    }
    let tensors: Vec<(Tensor<f32>, Vec<PretextLabel>)> = batches;
    net.per_task_accuracy(&tensors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::resnet::NetConfig;

    #[test]
    fn untrained_model_is_rejected() {
        let net = Network::<f32>::build(NetConfig::tiny(2), 3).unwrap();
        let mut rng = Rng::new(1);
        let eval: Vec<(SignalWindow, PretextLabel)> = (0..8)
            .map(|_| {
                let samples: Vec<f32> =
                    (0..3 * 300).map(|_| rng.next_f32() - 0.5).collect();
                (
                    SignalWindow::new(samples, 30, 10).unwrap(),
                    PretextLabel {
                        aot_applied: rng.below(2) == 1,
                        permutation_applied: rng.below(2) == 1,
                        tw_applied: rng.below(2) == 1,
                    },
                )
            })
            .collect();
        let err = mask_faithfulness(
            &net,
            &eval,
            AttributionMethod::Saliency,
            MaskOrder::Random,
            1.0,
            7,
        )
        .unwrap_err();
        assert!(matches!(err, NeuralError::BadConfig(_)));
    }

    #[test]
    fn auc_of_constant_curve() {
        let curve = MaskCurve {
            fractions: vec![0.0, 0.5, 1.0],
            per_task_accuracy: vec![[0.8; 3], [0.8; 3], [0.8; 3]],
        };
        assert!((curve.auc(0) - 0.8).abs() < 1e-12);
        let other = MaskCurve {
            fractions: vec![0.0, 0.5, 1.0],
            per_task_accuracy: vec![[0.6; 3], [0.6; 3], [0.6; 3]],
        };
        let mean = mean_curve(&curve, &other);
        assert!((mean.auc(2) - 0.7).abs() < 1e-12);
    }
}
