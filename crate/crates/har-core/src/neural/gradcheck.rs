//! Central-difference verification of the reverse pass, the numerical
//! correctness gate for the whole network stack. Runs at f64; the f32
//! training path shares every line of layer code through the scalar
//! abstraction.

use alloc::string::String;
use alloc::vec::Vec;

use crate::rng::Rng;
use crate::transforms::PretextLabel;

use super::layers::Mode;
use super::loss::cross_entropy;
use super::resnet::{NetConfig, NeuralError, Network};
use super::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// (tensor name, max relative error over sampled coordinates).
    pub per_tensor: Vec<(String, f64)>,
    pub overall: f64,
}

impl GradCheckReport {
    /// Tensors whose error exceeds a tolerance.
    pub fn flagged(&self, tol: f64) -> Vec<&str> {
        self.per_tensor
            .iter()
            .filter(|(_, e)| *e > tol)
            .map(|(n, _)| n.as_str())
            .collect()
    }
}

const COORDS_PER_TENSOR: usize = 32;

fn pretext_loss_value(net: &Network<f64>, x: &Tensor<f64>, labels: &[PretextLabel]) -> f64 {
    let fwd = net.trunk_forward(x, Mode::Train).unwrap();
    let mut total = 0.0;
    for (t, head) in net.arch.pretext_heads.iter().enumerate() {
        let task_labels: Vec<usize> = labels.iter().map(|l| usize::from(l.flag(t))).collect();
        let logits = head.forward(&net.params, &fwd.feats);
        let (l, _, _) = cross_entropy(&logits, &task_labels).unwrap();
        total += l / net.arch.pretext_heads.len() as f64;
    }
    total
}

fn downstream_loss_value(net: &Network<f64>, x: &Tensor<f64>, labels: &[usize]) -> f64 {
    let fwd = net.trunk_forward(x, Mode::Train).unwrap();
    let hidden = super::layers::relu(&net.arch.down_fc.forward(&net.params, &fwd.feats));
    let logits = net.arch.down_out.forward(&net.params, &hidden);
    cross_entropy(&logits, labels).unwrap().0
}

/// Compare analytic gradients against central differences on a fresh
/// network; at least 32 coordinates per tensor (all of them for small
/// tensors). Intended for the tiny config at 64-bit precision.
pub fn gradient_check(
    cfg: &NetConfig,
    batch_size: usize,
    eps: f64,
    seed: u64,
) -> Result<GradCheckReport, NeuralError> {
    gradient_check_inner(cfg, batch_size, eps, seed, None)
}

/// Negative-control variant: the named tensor's analytic gradient is
/// corrupted before comparison, so the report must flag exactly it.
pub fn gradient_check_corrupted(
    cfg: &NetConfig,
    batch_size: usize,
    eps: f64,
    seed: u64,
    corrupt: &str,
) -> Result<GradCheckReport, NeuralError> {
    gradient_check_inner(cfg, batch_size, eps, seed, Some(corrupt))
}

fn gradient_check_inner(
    cfg: &NetConfig,
    batch_size: usize,
    eps: f64,
    seed: u64,
    corrupt: Option<&str>,
) -> Result<GradCheckReport, NeuralError> {
    let mut net = Network::<f64>::build(*cfg, seed)?;
    let mut rng = Rng::stream(seed, 0x6772_6164);
    let n = batch_size.max(2);
    let data: Vec<f64> =
        (0..n * 3 * cfg.input_t).map(|_| rng.normal() * 0.5).collect();
    let x = Tensor::from_vec(data, &[n, 3, cfg.input_t]);
    let pretext_labels: Vec<PretextLabel> = (0..n)
        .map(|_| PretextLabel {
            aot_applied: rng.below(2) == 1,
            permutation_applied: rng.below(2) == 1,
            tw_applied: rng.below(2) == 1,
        })
        .collect();
    let class_labels: Vec<usize> =
        (0..n).map(|_| rng.below(cfg.n_classes as u64) as usize).collect();

    let pretext_step = net.loss_and_grad_pretext(&x, &pretext_labels, [true, true, true])?;
    let (_, _, down_step) = net.loss_and_grad_downstream(&x, &class_labels, false)?;

    let metas = net.arch.metas.clone();
    let mut per_tensor = Vec::with_capacity(metas.len());
    let mut overall = 0.0f64;
    for (i, meta) in metas.iter().enumerate() {
        let is_down_head = meta.name.starts_with("head.fc") || meta.name.starts_with("head.out");
        let analytic = if is_down_head { &down_step.grads[i] } else { &pretext_step.grads[i] };
        let numel = analytic.numel();
        let n_coords = numel.min(COORDS_PER_TENSOR);
        // Distinct coordinates via partial shuffle.
        let mut coords: Vec<usize> = (0..numel).collect();
        for c in 0..n_coords {
            let j = c + rng.below((numel - c) as u64) as usize;
            coords.swap(c, j);
        }
        let mut max_err = 0.0f64;
        for &coord in coords.iter().take(n_coords) {
            let theta = net.params[i].data()[coord];
            let h = eps * theta.abs().max(1.0);
            net.params[i].data_mut()[coord] = theta + h;
            let plus = if is_down_head {
                downstream_loss_value(&net, &x, &class_labels)
            } else {
                pretext_loss_value(&net, &x, &pretext_labels)
            };
            net.params[i].data_mut()[coord] = theta - h;
            let minus = if is_down_head {
                downstream_loss_value(&net, &x, &class_labels)
            } else {
                pretext_loss_value(&net, &x, &pretext_labels)
            };
            net.params[i].data_mut()[coord] = theta;
            let fd = (plus - minus) / (2.0 * h);
            let mut a = analytic.data()[coord];
            if corrupt == Some(meta.name.as_str()) {
                a = a * 1.5 + 0.1;
            }
            let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            max_err = max_err.max(err);
        }
        overall = overall.max(max_err);
        per_tensor.push((meta.name.clone(), max_err));
    }
    Ok(GradCheckReport { per_tensor, overall })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::layers::Linear;

    /// A single linear layer has an exact analytic gradient; the check
    /// over it must sit at finite-difference noise level.
    #[test]
    fn linear_only_gradient_is_exact() {
        let params = vec![
            Tensor::from_vec(
                (0..6).map(|i| ((i * 7) as f64 * 0.31).sin() * 0.5).collect(),
                &[2, 3],
            ),
            Tensor::from_vec(vec![0.1, -0.2], &[2]),
        ];
        let lin = Linear { w: 0, b: 1, inp: 3, out: 2 };
        let x = Tensor::from_vec(vec![0.4, -1.1, 0.7, 0.2, 0.9, -0.3], &[2, 3]);
        let labels = [0usize, 1];
        let loss = |params: &[Tensor<f64>]| {
            let logits = lin.forward(params, &x);
            cross_entropy(&logits, &labels).unwrap().0
        };
        let logits = lin.forward(&params, &x);
        let (_, dlogits, _) = cross_entropy(&logits, &labels).unwrap();
        let mut grads = vec![Tensor::zeros(&[2, 3]), Tensor::zeros(&[2])];
        lin.backward(&params, &x, &dlogits, Some(&mut grads), false);
        let h = 1e-6;
        let mut max_rel = 0.0f64;
        for p in 0..2 {
            for c in 0..params[p].numel() {
                let mut pp = params.clone();
                pp[p].data_mut()[c] += h;
                let mut pm = params.clone();
                pm[p].data_mut()[c] -= h;
                let fd = (loss(&pp) - loss(&pm)) / (2.0 * h);
                let a = grads[p].data()[c];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                max_rel = max_rel.max(rel);
            }
        }
        assert!(max_rel < 1e-8, "max rel {max_rel}");
    }

    /// Full tiny-network check on a short input (the acceptance suite runs
    /// the spec-size variant; this keeps the unit suite fast).
    #[test]
    fn tiny_network_gradients_match_finite_differences() {
        let cfg = NetConfig { input_t: 64, ..NetConfig::tiny(3) };
        let report = gradient_check(&cfg, 2, 1e-5, 11).unwrap();
        assert!(report.overall < 1e-4, "overall {}", report.overall);
    }

    #[test]
    fn corrupted_tensor_is_flagged() {
        let cfg = NetConfig { input_t: 64, ..NetConfig::tiny(3) };
        let report = gradient_check_corrupted(&cfg, 2, 1e-5, 11, "s1.b0.conv1.w").unwrap();
        let flagged = report.flagged(1e-3);
        assert_eq!(flagged, vec!["s1.b0.conv1.w"]);
    }
}
