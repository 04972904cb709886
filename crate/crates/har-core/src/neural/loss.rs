//! Softmax cross-entropy for the pretext heads and the downstream head,
//! plus the combined loss/gradient entry points used by the training
//! loops. Multi-task losses weigh every active head equally.

use alloc::vec::Vec;

// Pulls in float math on builds without std.
#[allow(unused_imports)]
use num_traits::Float;

use crate::transforms::PretextLabel;

use super::layers::{relu, relu_backward, Mode};
use super::resnet::{collect_bn_stats, NetConfig, NeuralError, Network, PRETEXT_TASKS};
use super::scalar::Scalar;
use super::tensor::Tensor;

/// Row-wise softmax.
pub fn softmax_rows<F: Scalar>(logits: &Tensor<F>) -> Tensor<F> {
    let (n, c) = (logits.shape()[0], logits.shape()[1]);
    let mut out = logits.clone();
    for i in 0..n {
        let row = &mut out.data_mut()[i * c..(i + 1) * c];
        let mut mx = row[0];
        for &v in row.iter() {
            if v > mx {
                mx = v;
            }
        }
        let mut sum = F::zero();
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            sum = sum + *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    out
}

/// Mean cross-entropy over rows plus the logit gradient of that mean and
/// the number of argmax-correct rows.
pub fn cross_entropy<F: Scalar>(
    logits: &Tensor<F>,
    labels: &[usize],
) -> Result<(f64, Tensor<F>, usize), NeuralError> {
    let (n, c) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != n {
        return Err(NeuralError::ShapeMismatch {
            expected: alloc::vec![n],
            got: alloc::vec![labels.len()],
        });
    }
    for &l in labels {
        if l >= c {
            return Err(NeuralError::LabelOutOfRange { label: l, limit: c });
        }
    }
    let probs = softmax_rows(logits);
    let mut dlogits = probs.clone();
    let invn = F::one() / F::of_f64(n as f64);
    let mut loss = 0.0f64;
    let mut correct = 0usize;
    for (i, &l) in labels.iter().enumerate() {
        let row = probs.row(i);
        loss -= row[l].as_f64().max(1e-300).ln();
        let mut best = 0usize;
        for (j, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = j;
            }
        }
        if best == l {
            correct += 1;
        }
        let drow = &mut dlogits.data_mut()[i * c..(i + 1) * c];
        drow[l] = drow[l] - F::one();
        for v in drow.iter_mut() {
            *v = *v * invn;
        }
    }
    Ok((loss / n as f64, dlogits, correct))
}

/// Output of one loss/gradient evaluation.
#[derive(Debug)]
pub struct StepOut<F: Scalar> {
    pub loss: f64,
    /// One entry per pretext head (NaN when the head was inactive).
    pub per_task_loss: [f64; PRETEXT_TASKS],
    pub per_task_correct: [usize; PRETEXT_TASKS],
    pub grads: Vec<Tensor<F>>,
    /// Batch statistics in [`Network::bns`] order (empty for eval-mode trunks).
    pub bn_stats: Vec<super::layers::BnStats<F>>,
}

impl<F: Scalar> Network<F> {
    /// Multi-task pretext loss: unweighted mean over active heads of each
    /// head's mean cross-entropy, with gradients for every trainable
    /// parameter. The trunk runs in train mode.
    pub fn loss_and_grad_pretext(
        &self,
        x: &Tensor<F>,
        labels: &[PretextLabel],
        active: [bool; PRETEXT_TASKS],
    ) -> Result<StepOut<F>, NeuralError> {
        let n_active = active.iter().filter(|&&a| a).count();
        if n_active == 0 {
            return Err(NeuralError::BadConfig("at least one pretext head must be active"));
        }
        let fwd = self.trunk_forward(x, Mode::Train)?;
        let mut grads = self.zero_grads();
        let mut dfeats = Tensor::zeros(fwd.feats.shape());
        let scale = F::of_f64(1.0 / n_active as f64);
        let mut loss = 0.0f64;
        let mut per_task_loss = [f64::NAN; PRETEXT_TASKS];
        let mut per_task_correct = [0usize; PRETEXT_TASKS];
        for (t, head) in self.arch.pretext_heads.iter().enumerate() {
            if !active[t] {
                continue;
            }
            let task_labels: Vec<usize> =
                labels.iter().map(|l| usize::from(l.flag(t))).collect();
            let logits = head.forward(&self.params, &fwd.feats);
            let (l, mut dlogits, correct) = cross_entropy(&logits, &task_labels)?;
            per_task_loss[t] = l;
            per_task_correct[t] = correct;
            loss += l / n_active as f64;
            for v in dlogits.data_mut() {
                *v = *v * scale;
            }
            let dfe = head
                .backward(&self.params, &fwd.feats, &dlogits, Some(&mut grads), true)
                .expect("dx requested");
            for (a, &b) in dfeats.data_mut().iter_mut().zip(dfe.data()) {
                *a = *a + b;
            }
        }
        self.trunk_backward(&fwd, &dfeats, Some(&mut grads), false, false);
        Ok(StepOut {
            loss,
            per_task_loss,
            per_task_correct,
            grads,
            bn_stats: collect_bn_stats(&fwd),
        })
    }

    /// Downstream classification loss. `head_only` freezes the trunk: it
    /// runs in eval mode (running statistics, no trunk gradients), so every
    /// trunk parameter and buffer stays bit-identical.
    pub fn loss_and_grad_downstream(
        &self,
        x: &Tensor<F>,
        labels: &[usize],
        head_only: bool,
    ) -> Result<(f64, usize, StepOut<F>), NeuralError> {
        let mode = if head_only { Mode::Eval } else { Mode::Train };
        let fwd = self.trunk_forward(x, mode)?;
        let mut grads = self.zero_grads();
        let hidden_pre = self.arch.down_fc.forward(&self.params, &fwd.feats);
        let hidden = relu(&hidden_pre);
        let logits = self.arch.down_out.forward(&self.params, &hidden);
        let (loss, dlogits, correct) = cross_entropy(&logits, labels)?;
        let dhidden = self
            .arch
            .down_out
            .backward(&self.params, &hidden, &dlogits, Some(&mut grads), true)
            .expect("dx requested");
        let dhidden_pre = relu_backward(&hidden, &dhidden, false);
        let dfeats = self
            .arch
            .down_fc
            .backward(&self.params, &fwd.feats, &dhidden_pre, Some(&mut grads), !head_only)
            .unwrap_or_else(|| Tensor::zeros(fwd.feats.shape()));
        let bn_stats = if head_only {
            Vec::new()
        } else {
            self.trunk_backward(&fwd, &dfeats, Some(&mut grads), false, false);
            collect_bn_stats(&fwd)
        };
        Ok((
            loss,
            correct,
            StepOut {
                loss,
                per_task_loss: [f64::NAN; PRETEXT_TASKS],
                per_task_correct: [0; PRETEXT_TASKS],
                grads,
                bn_stats,
            },
        ))
    }

    /// Fraction of argmax-correct binary predictions per pretext task.
    pub fn per_task_accuracy(
        &self,
        batches: &[(Tensor<F>, Vec<PretextLabel>)],
    ) -> Result<[f64; PRETEXT_TASKS], NeuralError> {
        let mut correct = [0usize; PRETEXT_TASKS];
        let mut total = 0usize;
        for (x, labels) in batches {
            let out = self.forward(x, Mode::Eval)?;
            total += labels.len();
            for t in 0..PRETEXT_TASKS {
                let logits = &out.pretext_logits[t];
                for (i, l) in labels.iter().enumerate() {
                    let row = logits.row(i);
                    let pred = usize::from(row[1] > row[0]);
                    if pred == usize::from(l.flag(t)) {
                        correct[t] += 1;
                    }
                }
            }
        }
        if total == 0 {
            return Err(NeuralError::BadConfig("empty evaluation set"));
        }
        Ok([
            correct[0] as f64 / total as f64,
            correct[1] as f64 / total as f64,
            correct[2] as f64 / total as f64,
        ])
    }
}

/// Mean test loss for one pretext head on an eval batch (no gradients).
pub fn pretext_eval_loss<F: Scalar>(
    net: &Network<F>,
    x: &Tensor<F>,
    labels: &[PretextLabel],
) -> Result<[f64; PRETEXT_TASKS], NeuralError> {
    let out = net.forward(x, Mode::Eval)?;
    let mut losses = [0.0f64; PRETEXT_TASKS];
    for t in 0..PRETEXT_TASKS {
        let task_labels: Vec<usize> = labels.iter().map(|l| usize::from(l.flag(t))).collect();
        let (l, _, _) = cross_entropy(&out.pretext_logits[t], &task_labels)?;
        losses[t] = l;
    }
    Ok(losses)
}

/// Helper shared by schedulers and tests.
pub fn argmax_row<F: Scalar>(row: &[F]) -> usize {
    let mut best = 0usize;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[allow(unused)]
fn _cfg_marker(_: &NetConfig) {}
