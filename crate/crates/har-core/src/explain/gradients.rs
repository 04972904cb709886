//! Gradient-based attribution: saliency maps, guided backpropagation, and
//! integrated gradients. All run against the eval-mode network, so the
//! maps are deterministic functions of (parameters, input).

use alloc::string::String;
#[allow(unused_imports)]
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::neural::layers::{relu, relu_backward, Mode};
use crate::neural::resnet::{NeuralError, Network};
use crate::neural::scalar::Scalar;
use crate::neural::tensor::Tensor;
use crate::signal::SignalWindow;

use super::lrp::{ExplainTarget, RelevanceMap};

/// Value of the explained logit and its gradient with respect to the
/// input. `guided` masks negative upstream gradients at every ReLU.
pub fn logit_input_gradient<F: Scalar>(
    net: &Network<F>,
    x: &Tensor<F>,
    target: ExplainTarget,
    class: usize,
    guided: bool,
) -> Result<(f64, Tensor<F>), NeuralError> {
    let fwd = net.trunk_forward(x, Mode::Eval)?;
    let (fx, dfeats) = match target {
        ExplainTarget::Pretext(task) => {
            let head = &net.arch.pretext_heads[task];
            if class >= 2 {
                return Err(NeuralError::LabelOutOfRange { label: class, limit: 2 });
            }
            let logits = head.forward(&net.params, &fwd.feats);
            let mut dlogits = Tensor::zeros(logits.shape());
            dlogits.data_mut()[class] = F::one();
            let dfeats = head
                .backward(&net.params, &fwd.feats, &dlogits, None, true)
                .expect("dx requested");
            (logits.data()[class].as_f64(), dfeats)
        }
        ExplainTarget::Downstream => {
            if class >= net.cfg.n_classes {
                return Err(NeuralError::LabelOutOfRange {
                    label: class,
                    limit: net.cfg.n_classes,
                });
            }
            let hidden = relu(&net.arch.down_fc.forward(&net.params, &fwd.feats));
            let logits = net.arch.down_out.forward(&net.params, &hidden);
            let mut dlogits = Tensor::zeros(logits.shape());
            dlogits.data_mut()[class] = F::one();
            let dhidden = net
                .arch
                .down_out
                .backward(&net.params, &hidden, &dlogits, None, true)
                .expect("dx requested");
            let dhidden = relu_backward(&hidden, &dhidden, guided);
            let dfeats = net
                .arch
                .down_fc
                .backward(&net.params, &fwd.feats, &dhidden, None, true)
                .expect("dx requested");
            (logits.data()[class].as_f64(), dfeats)
        }
    };
    let dx = net
        .trunk_backward(&fwd, &dfeats, None, true, guided)
        .expect("dx requested");
    Ok((fx, dx))
}

fn map_from<F: Scalar>(
    scores: &Tensor<F>,
    window: &SignalWindow,
    target: ExplainTarget,
    class: usize,
    method: &str,
    fx: f64,
) -> RelevanceMap {
    RelevanceMap {
        scores: scores.data().iter().map(|v| v.as_f64()).collect(),
        channels: 3,
        t: window.len(),
        target,
        class,
        method: String::from(method),
        output_value: fx,
    }
}

/// |d logit / d x| per input coordinate.
pub fn saliency<F: Scalar>(
    net: &Network<F>,
    window: &SignalWindow,
    target: ExplainTarget,
    class: usize,
) -> Result<RelevanceMap, NeuralError> {
    let x = Network::<F>::batch_from_windows(core::slice::from_ref(window));
    let (fx, mut dx) = logit_input_gradient(net, &x, target, class, false)?;
    for v in dx.data_mut() {
        *v = v.abs();
    }
    Ok(map_from(&dx, window, target, class, "saliency", fx))
}

/// Signed gradient with the guided ReLU rule.
pub fn guided_backprop<F: Scalar>(
    net: &Network<F>,
    window: &SignalWindow,
    target: ExplainTarget,
    class: usize,
) -> Result<RelevanceMap, NeuralError> {
    let x = Network::<F>::batch_from_windows(core::slice::from_ref(window));
    let (fx, dx) = logit_input_gradient(net, &x, target, class, true)?;
    Ok(map_from(&dx, window, target, class, "gbp", fx))
}

/// Midpoint-Riemann path integral of a gradient function from `baseline`
/// to `x`: exact for linear functions at any step count.
pub fn path_integrate<F: Scalar>(
    x: &Tensor<F>,
    baseline: &Tensor<F>,
    steps: usize,
    mut grad: impl FnMut(&Tensor<F>) -> Tensor<F>,
) -> Tensor<F> {
    let mut acc = Tensor::<F>::zeros(x.shape());
    for k in 0..steps {
        let alpha = F::of_f64((k as f64 + 0.5) / steps as f64);
        let mut point = baseline.clone();
        for (p, (&xv, &bv)) in point.data_mut().iter_mut().zip(x.data().iter().zip(baseline.data()))
        {
            *p = bv + alpha * (xv - bv);
        }
        let g = grad(&point);
        for (a, &gv) in acc.data_mut().iter_mut().zip(g.data()) {
            *a = *a + gv;
        }
    }
    let inv = F::of_f64(1.0 / steps as f64);
    for (a, (&xv, &bv)) in acc.data_mut().iter_mut().zip(x.data().iter().zip(baseline.data())) {
        *a = *a * inv * (xv - bv);
    }
    acc
}

/// Integrated gradients against a baseline window (zero window when not
/// given). Completeness: the scores sum to f(x) - f(baseline) up to the
/// Riemann discretization error.
pub fn integrated_gradients<F: Scalar>(
    net: &Network<F>,
    window: &SignalWindow,
    target: ExplainTarget,
    class: usize,
    steps: usize,
    baseline: Option<&SignalWindow>,
) -> Result<RelevanceMap, NeuralError> {
    if steps < 1 {
        return Err(NeuralError::BadConfig("integrated gradients needs at least 1 step"));
    }
    let x = Network::<F>::batch_from_windows(core::slice::from_ref(window));
    let base = match baseline {
        Some(b) => Network::<F>::batch_from_windows(core::slice::from_ref(b)),
        None => Tensor::zeros(x.shape()),
    };
    let (fx, _) = logit_input_gradient(net, &x, target, class, false)?;
    let scores = path_integrate(&x, &base, steps, |point| {
        logit_input_gradient(net, point, target, class, false)
            .expect("shape fixed")
            .1
    });
    Ok(map_from(&scores, window, target, class, "ig", fx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::layers::Linear;
    use crate::neural::resnet::NetConfig;
    use crate::rng::Rng;

    fn random_window(seed: u64) -> SignalWindow {
        let mut rng = Rng::new(seed);
        let samples: Vec<f32> = (0..3 * 300)
            .map(|i| ((i as f64 * 0.17).sin() * 0.5 + rng.next_f64() * 0.2) as f32)
            .collect();
        SignalWindow::new(samples, 30, 10).unwrap()
    }

    #[test]
    fn saliency_matches_finite_difference_and_is_nonnegative() {
        let net = Network::<f64>::build(NetConfig::tiny(2), 17).unwrap();
        let w = random_window(3);
        let map = saliency(&net, &w, ExplainTarget::Pretext(0), 1).unwrap();
        assert!(map.scores.iter().all(|&v| v >= 0.0));
        let x = Network::<f64>::batch_from_windows(core::slice::from_ref(&w));
        let (_, dx) = logit_input_gradient(&net, &x, ExplainTarget::Pretext(0), 1, false).unwrap();
        // h must stay below the ReLU kink-crossing scale of input
        // perturbations; the gradient itself is exact between kinks.
        let h = 1e-6;
        let mut rng = Rng::new(9);
        for _ in 0..12 {
            let i = rng.below(x.numel() as u64) as usize;
            let mut xp = x.clone();
            xp.data_mut()[i] += h;
            let mut xm = x.clone();
            xm.data_mut()[i] -= h;
            let (fp, _) =
                logit_input_gradient(&net, &xp, ExplainTarget::Pretext(0), 1, false).unwrap();
            let (fm, _) =
                logit_input_gradient(&net, &xm, ExplainTarget::Pretext(0), 1, false).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let a = dx.data()[i];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            assert!(rel < 1e-4, "coord {i}: {a} vs {fd}");
        }
    }

    #[test]
    fn guided_rule_drops_negative_gradient_paths() {
        // Two hidden units y = w2 . relu(w1 x) with x = 1: the unit with a
        // negative output weight carries a negative upstream gradient, so
        // guided backprop zeroes it while the plain gradient keeps it.
        let params = vec![
            Tensor::from_vec(vec![1.0f64, -1.0], &[2, 1]), // w1
            Tensor::from_vec(vec![0.0f64, 0.0], &[2]),
            Tensor::from_vec(vec![-1.0f64, 1.0], &[1, 2]), // w2
            Tensor::from_vec(vec![0.0f64], &[1]),
        ];
        let l1 = Linear { w: 0, b: 1, inp: 1, out: 2 };
        let l2 = Linear { w: 2, b: 3, inp: 2, out: 1 };
        let x = Tensor::from_vec(vec![1.0f64], &[1, 1]);
        let h = relu(&l1.forward(&params, &x));
        let dy = Tensor::from_vec(vec![1.0f64], &[1, 1]);
        let dh = l2.backward(&params, &h, &dy, None, true).unwrap();
        let plain = l1
            .backward(&params, &x, &relu_backward(&h, &dh, false), None, true)
            .unwrap();
        let guided = l1
            .backward(&params, &x, &relu_backward(&h, &dh, true), None, true)
            .unwrap();
        assert_eq!(plain.data()[0], -1.0);
        assert_eq!(guided.data()[0], 0.0);
    }

    #[test]
    fn guided_equals_plain_without_relu_involvement() {
        // All-negative pre-activations: both maps are zero.
        let net = Network::<f64>::build(NetConfig::tiny(2), 4).unwrap();
        let w = SignalWindow::new(vec![0.0f32; 3 * 300], 30, 10).unwrap();
        let g = guided_backprop(&net, &w, ExplainTarget::Pretext(2), 0).unwrap();
        let s = saliency(&net, &w, ExplainTarget::Pretext(2), 0).unwrap();
        // Zero input through a bias-free net: every activation is zero, so
        // both attributions vanish... except via BN identity paths, where
        // gradients can still flow; the two maps must then agree in
        // magnitude because no negative upstream gradient is dropped at a
        // *zero* activation (the mask already zeroes those units).
        for (a, b) in g.scores.iter().zip(&s.scores) {
            assert!(a.abs() <= b.abs() + 1e-12);
        }
    }

    #[test]
    fn path_integral_is_exact_for_linear_functions() {
        // f(x) = w . x -> IG_i = w_i (x_i - b_i) for any number of steps.
        let w = [0.7f64, -1.3, 0.2];
        let x = Tensor::from_vec(vec![1.0f64, 2.0, -0.5], &[1, 3]);
        let base = Tensor::from_vec(vec![0.5f64, 0.0, 0.5], &[1, 3]);
        for steps in [1usize, 3, 16] {
            let scores = path_integrate(&x, &base, steps, |_| {
                Tensor::from_vec(w.to_vec(), &[1, 3])
            });
            for i in 0..3 {
                let expect = w[i] * (x.data()[i] - base.data()[i]);
                assert!((scores.data()[i] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn integrated_gradients_completeness_and_zero_baseline() {
        let net = Network::<f64>::build(NetConfig::tiny(2), 23).unwrap();
        let w = random_window(6);
        let map =
            integrated_gradients(&net, &w, ExplainTarget::Pretext(0), 0, 256, None).unwrap();
        let zero = SignalWindow::new(vec![0.0f32; 3 * 300], 30, 10).unwrap();
        let x0 = Network::<f64>::batch_from_windows(core::slice::from_ref(&zero));
        let (f0, _) = logit_input_gradient(&net, &x0, ExplainTarget::Pretext(0), 0, false).unwrap();
        let gap = (map.scores.iter().sum::<f64>() - (map.output_value - f0)).abs();
        let denom = (map.output_value - f0).abs().max(1e-9);
        assert!(gap / denom < 0.01, "completeness gap {}", gap / denom);
        // Baseline equal to the input integrates to zero.
        let self_map =
            integrated_gradients(&net, &w, ExplainTarget::Pretext(0), 0, 8, Some(&w)).unwrap();
        assert!(self_map.scores.iter().all(|&v| v == 0.0));
        assert!(integrated_gradients(&net, &w, ExplainTarget::Pretext(0), 0, 0, None).is_err());
    }
}
