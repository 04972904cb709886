//! Weighted window sampling, pretext batch construction, and the
//! multi-task pre-training loop.
//!
//! Batches are drawn per iteration: a handful of subjects, one day each,
//! then windows in proportion to movement intensity (weighted sampling).
//! Every window gets a random orientation change and the three pretext
//! transforms applied independently; the loop trains all task heads with
//! an equal-weight cross-entropy and early-stops on held-out-subject
//! accuracy.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use crate::neural::adam::{adam_step, AdamState};
use crate::neural::checkpoint::NetworkCheckpoint;
use crate::neural::loss::pretext_eval_loss;
use crate::neural::resnet::{NetConfig, NeuralError, Network, PRETEXT_TASKS};
use crate::neural::schedule::lr_schedule;
use crate::neural::tensor::Tensor;
use crate::rng::Rng;
use crate::signal::{SignalError, SignalWindow, WindowStore};
use crate::transforms::{
    apply_pretext, random_rotation, PretextLabel, TransformConfig, TransformError, TASK_NAMES,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub subjects_per_iter: usize,
    pub windows_per_subject: usize,
    /// Lower bound on sampling weight so no window has zero probability.
    pub intensity_floor: f64,
    pub weighted: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            subjects_per_iter: 4,
            windows_per_subject: 1500,
            intensity_floor: 1e-4,
            weighted: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PretextBatch {
    pub windows: Vec<SignalWindow>,
    pub labels: Vec<PretextLabel>,
    /// (subject, day, store record index) per row.
    pub provenance: Vec<(String, u16, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SslError {
    TooFewSubjects,
    EmptyStore,
    Signal(SignalError),
    Transform(TransformError),
    Neural(NeuralError),
}

impl fmt::Display for SslError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SslError::TooFewSubjects => write!(f, "need at least 2 subjects for an 8:2 split"),
            SslError::EmptyStore => write!(f, "window store is empty"),
            SslError::Signal(e) => write!(f, "{e}"),
            SslError::Transform(e) => write!(f, "{e}"),
            SslError::Neural(e) => write!(f, "{e}"),
        }
    }
}

impl From<SignalError> for SslError {
    fn from(e: SignalError) -> Self {
        SslError::Signal(e)
    }
}
impl From<TransformError> for SslError {
    fn from(e: TransformError) -> Self {
        SslError::Transform(e)
    }
}
impl From<NeuralError> for SslError {
    fn from(e: NeuralError) -> Self {
        SslError::Neural(e)
    }
}

/// Draw `k` window indices for one subject-day, with replacement, with
/// probability proportional to `max(intensity, floor)`; uniform when
/// weighting is off.
pub fn weighted_sample(
    store: &WindowStore,
    subject: &str,
    day: u16,
    k: usize,
    cfg: &SamplerConfig,
    rng: &mut Rng,
) -> Result<Vec<usize>, SslError> {
    let indices = store.indices(subject, day)?;
    if indices.is_empty() {
        return Err(SslError::Signal(SignalError::EmptyDay));
    }
    let mut cumulative = Vec::with_capacity(indices.len());
    let mut total = 0.0f64;
    for &i in indices {
        let w = if cfg.weighted {
            (store.records()[i].intensity as f64).max(cfg.intensity_floor)
        } else {
            1.0
        };
        total += w;
        cumulative.push(total);
    }
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let u = rng.next_f64() * total;
        let pos = cumulative.partition_point(|&c| c <= u).min(indices.len() - 1);
        out.push(indices[pos]);
    }
    Ok(out)
}

fn build_batch_from_subjects(
    store: &WindowStore,
    subjects: &[String],
    cfg: &SamplerConfig,
    tcfg: &TransformConfig,
    rng: &mut Rng,
) -> Result<PretextBatch, SslError> {
    if subjects.is_empty() {
        return Err(SslError::EmptyStore);
    }
    let mut pool: Vec<String> = subjects.to_vec();
    rng.shuffle(&mut pool);
    pool.truncate(cfg.subjects_per_iter.min(pool.len()));
    let mut windows = Vec::new();
    let mut labels = Vec::new();
    let mut provenance = Vec::new();
    for subject in &pool {
        let days = store.days(subject);
        if days.is_empty() {
            continue;
        }
        let day = days[rng.below(days.len() as u64) as usize];
        let picks = weighted_sample(store, subject, day, cfg.windows_per_subject, cfg, rng)?;
        for idx in picks {
            let raw = &store.records()[idx].window;
            let rotated = random_rotation(raw, rng);
            let (transformed, label) = apply_pretext(&rotated, tcfg, rng)?;
            windows.push(transformed);
            labels.push(label);
            provenance.push((subject.clone(), day, idx));
        }
    }
    if windows.is_empty() {
        return Err(SslError::EmptyStore);
    }
    Ok(PretextBatch { windows, labels, provenance })
}

/// One training batch over the whole store (see the pre-training loop for
/// the split-aware variant).
pub fn build_pretext_batch(
    store: &WindowStore,
    cfg: &SamplerConfig,
    tcfg: &TransformConfig,
    rng: &mut Rng,
) -> Result<PretextBatch, SslError> {
    build_batch_from_subjects(store, store.subjects(), cfg, tcfg, rng)
}

/// Deterministic 8:2 subject split.
pub fn subject_split(
    subjects: &[String],
    seed: u64,
) -> Result<(Vec<String>, Vec<String>), SslError> {
    if subjects.len() < 2 {
        return Err(SslError::TooFewSubjects);
    }
    let mut pool = subjects.to_vec();
    let mut rng = Rng::stream(seed, 0x5354_4c49); // split stream
    rng.shuffle(&mut pool);
    let n_test = ((pool.len() as f64 * 0.2).round() as usize).clamp(1, pool.len() - 1);
    let test = pool.split_off(pool.len() - n_test);
    Ok((pool, test))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainOpts {
    pub epochs: usize,
    pub seed: u64,
    pub base_lr: f64,
    /// Early-stopping patience on mean held-out accuracy; None trains the
    /// full budget (used by fixed-budget ablations).
    pub patience: Option<usize>,
    pub eval_windows_per_subject: usize,
    /// Which pretext heads participate in the loss.
    pub active_tasks: [bool; PRETEXT_TASKS],
}

impl Default for PretrainOpts {
    fn default() -> Self {
        PretrainOpts {
            epochs: 30,
            seed: 0,
            base_lr: 1e-3,
            patience: Some(5),
            eval_windows_per_subject: 128,
            active_tasks: [true; PRETEXT_TASKS],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub task: &'static str,
    pub split: &'static str,
    pub accuracy: f64,
    pub loss: f64,
    pub lr: f64,
}

/// Fixed evaluation batches for the held-out subjects: windows chosen by
/// weighted sampling (the evaluation pipeline does not vary with the
/// training-sampler ablation), transformed once with a dedicated stream.
pub fn build_eval_batches(
    store: &WindowStore,
    subjects: &[String],
    per_subject: usize,
    tcfg: &TransformConfig,
    seed: u64,
) -> Result<Vec<(Vec<SignalWindow>, Vec<PretextLabel>)>, SslError> {
    let mut rng = Rng::stream(seed, 0x4556_414c); // eval stream
    let eval_cfg = SamplerConfig { weighted: true, ..SamplerConfig::default() };
    let mut windows = Vec::new();
    let mut labels = Vec::new();
    for subject in subjects {
        let days = store.days(subject);
        for j in 0..per_subject {
            let day = days[j % days.len()];
            let idx = weighted_sample(store, subject, day, 1, &eval_cfg, &mut rng)?[0];
            let rotated = random_rotation(&store.records()[idx].window, &mut rng);
            let (transformed, label) = apply_pretext(&rotated, tcfg, &mut rng)?;
            windows.push(transformed);
            labels.push(label);
        }
    }
    // Chunk to bound forward-pass memory.
    let mut batches = Vec::new();
    let chunk = 256usize;
    let mut i = 0usize;
    while i < windows.len() {
        let j = (i + chunk).min(windows.len());
        batches.push((windows[i..j].to_vec(), labels[i..j].to_vec()));
        i = j;
    }
    Ok(batches)
}

/// Multi-task self-supervised pre-training. Subjects are split 8:2 into
/// train/held-out sets; each epoch runs `ceil(train windows / batch size)`
/// weighted-sampled batches; history carries per-epoch per-task accuracy
/// and loss for both splits; the best checkpoint by mean held-out accuracy
/// is returned.
pub fn pretrain(
    store: &WindowStore,
    net_cfg: &NetConfig,
    scfg: &SamplerConfig,
    tcfg: &TransformConfig,
    opts: &PretrainOpts,
) -> Result<(NetworkCheckpoint, Vec<HistoryRow>), SslError> {
    if store.is_empty() {
        return Err(SslError::EmptyStore);
    }
    let (train_subjects, test_subjects) = subject_split(store.subjects(), opts.seed)?;
    for t in &test_subjects {
        assert!(!train_subjects.contains(t), "subject split leak: {t}");
    }
    let mut net = Network::<f32>::build(*net_cfg, opts.seed)?;
    let mut adam = AdamState::new(&net);
    if opts.epochs == 0 {
        return Ok((NetworkCheckpoint::from_network(&net, Some(&adam)), Vec::new()));
    }
    let eval_batches: Vec<(Tensor<f32>, Vec<PretextLabel>)> = build_eval_batches(
        store,
        &test_subjects,
        opts.eval_windows_per_subject,
        tcfg,
        opts.seed,
    )?
    .into_iter()
    .map(|(ws, ls)| (Network::<f32>::batch_from_windows(&ws), ls))
    .collect();

    let train_window_count: usize =
        train_subjects.iter().map(|s| store.subject_indices(s).len()).sum();
    let batch_size =
        scfg.subjects_per_iter.min(train_subjects.len()) * scfg.windows_per_subject;
    let n_iter = train_window_count.div_ceil(batch_size).max(1);
    let root = Rng::stream(opts.seed, 0x5052_4554); // pretrain stream

    let mut history = Vec::new();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best: Option<(Vec<Tensor<f32>>, Vec<Tensor<f32>>, AdamState<f32>)> = None;
    let mut since_best = 0usize;
    for epoch in 0..opts.epochs {
        let mut train_loss = [0.0f64; PRETEXT_TASKS];
        let mut train_correct = [0usize; PRETEXT_TASKS];
        let mut train_total = 0usize;
        let mut lr = opts.base_lr;
        for it in 0..n_iter {
            lr = lr_schedule(epoch as f64 + it as f64 / n_iter as f64, opts.base_lr, batch_size);
            let mut brng = root.fork(1 + (epoch * n_iter + it) as u64);
            let batch = build_batch_from_subjects(store, &train_subjects, scfg, tcfg, &mut brng)?;
            let x = Network::<f32>::batch_from_windows(&batch.windows);
            let step = net.loss_and_grad_pretext(&x, &batch.labels, opts.active_tasks)?;
            net.apply_bn_updates(&step.bn_stats);
            adam_step(&mut net, &mut adam, &step.grads, lr, None)?;
            for t in 0..PRETEXT_TASKS {
                if opts.active_tasks[t] {
                    train_loss[t] += step.per_task_loss[t];
                    train_correct[t] += step.per_task_correct[t];
                }
            }
            train_total += batch.labels.len();
        }
        // Held-out evaluation on the fixed batches.
        let accs = net.per_task_accuracy(&eval_batches)?;
        let mut test_loss = [0.0f64; PRETEXT_TASKS];
        for (x, ls) in &eval_batches {
            let l = pretext_eval_loss(&net, x, ls)?;
            for t in 0..PRETEXT_TASKS {
                test_loss[t] += l[t] * ls.len() as f64;
            }
        }
        let eval_total: usize = eval_batches.iter().map(|(_, l)| l.len()).sum();
        for t in 0..PRETEXT_TASKS {
            if !opts.active_tasks[t] {
                continue;
            }
            history.push(HistoryRow {
                epoch,
                task: TASK_NAMES[t],
                split: "train",
                accuracy: train_correct[t] as f64 / train_total.max(1) as f64,
                loss: train_loss[t] / n_iter as f64,
                lr,
            });
            history.push(HistoryRow {
                epoch,
                task: TASK_NAMES[t],
                split: "test",
                accuracy: accs[t],
                loss: test_loss[t] / eval_total.max(1) as f64,
                lr,
            });
        }
        let mean_acc = {
            let (mut sum, mut n) = (0.0, 0);
            for t in 0..PRETEXT_TASKS {
                if opts.active_tasks[t] {
                    sum += accs[t];
                    n += 1;
                }
            }
            sum / n as f64
        };
        if mean_acc > best_acc {
            best_acc = mean_acc;
            best = Some((net.params.clone(), net.buffers.clone(), adam.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if opts.patience.is_some_and(|p| since_best >= p) {
                break;
            }
        }
    }
    if let Some((params, buffers, state)) = best {
        net.params = params;
        net.buffers = buffers;
        adam = state;
    }
    Ok((NetworkCheckpoint::from_network(&net, Some(&adam)), history))
}

/// Per-task held-out accuracy of a network over window batches.
pub fn per_task_accuracy(
    net: &Network<f32>,
    batches: &[(Vec<SignalWindow>, Vec<PretextLabel>)],
) -> Result<[f64; PRETEXT_TASKS], SslError> {
    let tensors: Vec<(Tensor<f32>, Vec<PretextLabel>)> = batches
        .iter()
        .map(|(ws, ls)| (Network::<f32>::batch_from_windows(ws), ls.clone()))
        .collect();
    Ok(net.per_task_accuracy(&tensors)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::WindowRecord;

    fn make_store(n_subjects: usize, days: u16, windows_per_day: usize) -> WindowStore {
        let mut rng = Rng::new(77);
        let mut records = Vec::new();
        for s in 0..n_subjects {
            for d in 0..days {
                for _ in 0..windows_per_day {
                    let samples: Vec<f32> = (0..3 * 300)
                        .map(|i| ((i as f64 * 0.21).sin() + rng.next_f64() * 0.3) as f32)
                        .collect();
                    let window = SignalWindow::new(samples, 30, 10).unwrap();
                    let intensity = crate::signal::window_intensity(&window) as f32;
                    records.push(WindowRecord {
                        window,
                        subject_id: alloc::format!("subj{s:02}"),
                        day_index: d,
                        label: None,
                        intensity,
                    });
                }
            }
        }
        WindowStore::new(records, false).unwrap()
    }

    fn store_with_intensities(vals: &[f32]) -> WindowStore {
        let records = vals
            .iter()
            .map(|&v| {
                let samples = alloc::vec![0.0f32; 3 * 300];
                WindowRecord {
                    window: SignalWindow::new(samples, 30, 10).unwrap(),
                    subject_id: String::from("a"),
                    day_index: 0,
                    label: None,
                    intensity: v,
                }
            })
            .collect();
        WindowStore::new(records, false).unwrap()
    }

    #[test]
    fn uniform_intensities_sample_uniformly() {
        let store = store_with_intensities(&[0.5, 0.5, 0.5, 0.5]);
        let cfg = SamplerConfig::default();
        let mut rng = Rng::new(1);
        let mut counts = [0u32; 4];
        let draws = 100_000usize;
        let picks = weighted_sample(&store, "a", 0, draws, &cfg, &mut rng).unwrap();
        for p in picks {
            counts[p] += 1;
        }
        // 3 sigma binomial band around draws/4.
        let expect = draws as f64 / 4.0;
        let sigma = (draws as f64 * 0.25 * 0.75).sqrt();
        for &c in &counts {
            assert!((c as f64 - expect).abs() < 3.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn three_to_one_intensity_ratio() {
        let store = store_with_intensities(&[3.0, 1.0]);
        let cfg = SamplerConfig::default();
        let mut rng = Rng::new(2);
        let draws = 100_000usize;
        let picks = weighted_sample(&store, "a", 0, draws, &cfg, &mut rng).unwrap();
        let first = picks.iter().filter(|&&p| p == 0).count() as f64 / draws as f64;
        assert!((0.74..=0.76).contains(&first), "rate {first}");
    }

    #[test]
    fn zero_intensities_fall_back_to_floor() {
        let store = store_with_intensities(&[0.0, 0.0, 0.0]);
        let cfg = SamplerConfig::default();
        let mut rng = Rng::new(3);
        let picks = weighted_sample(&store, "a", 0, 30_000, &cfg, &mut rng).unwrap();
        let mut counts = [0u32; 3];
        for p in picks {
            counts[p] += 1;
        }
        for &c in &counts {
            assert!((8_000..12_000).contains(&c), "count {c}");
        }
    }

    #[test]
    fn batch_of_one() {
        let store = make_store(1, 1, 1);
        let cfg =
            SamplerConfig { subjects_per_iter: 1, windows_per_subject: 1, ..Default::default() };
        let tcfg = TransformConfig::default();
        let mut rng = Rng::new(4);
        let batch = build_pretext_batch(&store, &cfg, &tcfg, &mut rng).unwrap();
        assert_eq!(batch.windows.len(), 1);
        assert_eq!(batch.labels.len(), 1);
    }

    #[test]
    fn batch_size_is_subjects_times_windows() {
        let store = make_store(5, 2, 8);
        let cfg =
            SamplerConfig { subjects_per_iter: 4, windows_per_subject: 6, ..Default::default() };
        let tcfg = TransformConfig::default();
        let mut rng = Rng::new(5);
        let batch = build_pretext_batch(&store, &cfg, &tcfg, &mut rng).unwrap();
        assert_eq!(batch.windows.len(), 24);
        // Provenance must reference real records of the right subject/day.
        for (subject, day, idx) in &batch.provenance {
            let rec = &store.records()[*idx];
            assert_eq!(&rec.subject_id, subject);
            assert_eq!(rec.day_index, *day);
        }
    }

    #[test]
    fn split_is_subject_disjoint_and_deterministic() {
        let store = make_store(10, 1, 2);
        let (tr1, te1) = subject_split(store.subjects(), 9).unwrap();
        let (tr2, te2) = subject_split(store.subjects(), 9).unwrap();
        assert_eq!((&tr1, &te1), (&tr2, &te2));
        assert_eq!(te1.len(), 2);
        for t in &te1 {
            assert!(!tr1.contains(t));
        }
        assert!(subject_split(&store.subjects()[..1], 9).is_err());
    }

    #[test]
    fn zero_epochs_returns_initialized_checkpoint() {
        let store = make_store(3, 1, 4);
        let cfg = NetConfig { input_t: 300, ..NetConfig::tiny(2) };
        let opts = PretrainOpts { epochs: 0, ..Default::default() };
        let (ckpt, history) = pretrain(
            &store,
            &cfg,
            &SamplerConfig { subjects_per_iter: 2, windows_per_subject: 2, ..Default::default() },
            &TransformConfig::default(),
            &opts,
        )
        .unwrap();
        assert!(history.is_empty());
        let fresh = Network::<f32>::build(cfg, opts.seed).unwrap();
        let fresh_ckpt = NetworkCheckpoint::from_network(&fresh, Some(&AdamState::new(&fresh)));
        assert_eq!(ckpt.params, fresh_ckpt.params);
    }

    #[test]
    fn one_epoch_runs_and_is_deterministic() {
        let store = make_store(4, 1, 6);
        let cfg = NetConfig { input_t: 300, ..NetConfig::tiny(2) };
        let scfg =
            SamplerConfig { subjects_per_iter: 2, windows_per_subject: 4, ..Default::default() };
        let opts = PretrainOpts { epochs: 1, eval_windows_per_subject: 4, ..Default::default() };
        let (c1, h1) = pretrain(&store, &cfg, &scfg, &TransformConfig::default(), &opts).unwrap();
        let (c2, h2) = pretrain(&store, &cfg, &scfg, &TransformConfig::default(), &opts).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(c1, c2);
        assert_eq!(h1.len(), 6); // 3 tasks x 2 splits
    }

    #[test]
    fn label_balance_over_epoch() {
        let store = make_store(4, 1, 10);
        let scfg =
            SamplerConfig { subjects_per_iter: 4, windows_per_subject: 50, ..Default::default() };
        let tcfg = TransformConfig::default();
        let mut rng = Rng::new(12);
        let mut pos = [0usize; PRETEXT_TASKS];
        let mut total = 0usize;
        for _ in 0..10 {
            let b = build_pretext_batch(&store, &scfg, &tcfg, &mut rng).unwrap();
            for l in &b.labels {
                for t in 0..PRETEXT_TASKS {
                    if l.flag(t) {
                        pos[t] += 1;
                    }
                }
            }
            total += b.labels.len();
        }
        for &p in &pos {
            let rate = p as f64 / total as f64;
            assert!((0.45..=0.55).contains(&rate), "positive rate {rate}");
        }
    }
}
