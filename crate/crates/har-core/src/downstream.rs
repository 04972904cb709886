//! Downstream evaluation: subject-wise cross-validation, fine-tuning and
//! from-scratch training protocols, the transfer-learning baseline, and
//! the F1/kappa metrics everything reports.
//!
//! Subject disjointness between train/val/test is a hard invariant; plans
//! switch from leave-one-subject-out to five-fold subject-wise at ten
//! subjects, and small datasets are pruned to the classes every subject
//! performs.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use crate::features::extract_features;
use crate::forest::{forest_predict, train_forest, ForestConfig, ForestError, ForestModel};
use crate::neural::adam::{adam_step, AdamState};
use crate::neural::checkpoint::NetworkCheckpoint;
use crate::neural::layers::Mode;
use crate::neural::resnet::{NetConfig, NeuralError, Network};
use crate::neural::schedule::lr_schedule;
use crate::neural::tensor::Tensor;
use crate::rng::Rng;
use crate::signal::{SignalError, WindowStore};
use crate::ssl::subject_split;

#[derive(Debug, Clone, PartialEq)]
pub enum DownstreamError {
    Unlabelled,
    TooFewSubjects,
    /// A fold ended up with fewer than two classes.
    DegenerateFold { fold: usize, classes: usize },
    EmptyInput,
    Signal(SignalError),
    Neural(NeuralError),
    Forest(ForestError),
}

impl fmt::Display for DownstreamError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DownstreamError::Unlabelled => write!(f, "dataset must be labelled"),
            DownstreamError::TooFewSubjects => write!(f, "need at least 2 subjects"),
            DownstreamError::DegenerateFold { fold, classes } => {
                write!(f, "fold {fold} has {classes} classes; at least 2 required")
            }
            DownstreamError::EmptyInput => write!(f, "empty input"),
            DownstreamError::Signal(e) => write!(f, "{e}"),
            DownstreamError::Neural(e) => write!(f, "{e}"),
            DownstreamError::Forest(e) => write!(f, "{e}"),
        }
    }
}

impl From<SignalError> for DownstreamError {
    fn from(e: SignalError) -> Self {
        DownstreamError::Signal(e)
    }
}
impl From<NeuralError> for DownstreamError {
    fn from(e: NeuralError) -> Self {
        DownstreamError::Neural(e)
    }
}
impl From<ForestError> for DownstreamError {
    fn from(e: ForestError) -> Self {
        DownstreamError::Forest(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvMode {
    /// Leave one subject out; used below ten subjects.
    Loso,
    /// Five subject-wise folds.
    KFold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvFold {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvPlan {
    pub mode: CvMode,
    pub folds: Vec<CvFold>,
    /// Class ids used by every fold (post pruning for small datasets).
    pub classes: Vec<i32>,
}

pub const LOSO_SUBJECT_LIMIT: usize = 10;
pub const KFOLDS: usize = 5;

/// Build the cross-validation plan for a labelled store.
pub fn make_cv_plan(store: &WindowStore, seed: u64) -> Result<CvPlan, DownstreamError> {
    if !store.labelled() {
        return Err(DownstreamError::Unlabelled);
    }
    let subjects = store.subjects().to_vec();
    if subjects.len() < 2 {
        return Err(DownstreamError::TooFewSubjects);
    }
    if subjects.len() < LOSO_SUBJECT_LIMIT {
        // Keep only classes every subject performs.
        let mut classes = store.classes();
        classes.retain(|&c| {
            subjects.iter().all(|s| {
                store
                    .subject_indices(s)
                    .iter()
                    .any(|&i| store.records()[i].label == Some(c))
            })
        });
        if classes.len() < 2 {
            return Err(DownstreamError::DegenerateFold { fold: 0, classes: classes.len() });
        }
        let mut folds = Vec::with_capacity(subjects.len());
        for (fi, test_subject) in subjects.iter().enumerate() {
            let mut rest: Vec<String> =
                subjects.iter().filter(|s| *s != test_subject).cloned().collect();
            let mut rng = Rng::stream(seed, 0x4356_4c4f).fork(fi as u64);
            rng.shuffle(&mut rest);
            // Approximate 7:1 train:val among the remaining subjects.
            let n_val = if rest.len() >= 2 {
                ((rest.len() as f64 / 8.0).round() as usize).clamp(1, rest.len() - 1)
            } else {
                0
            };
            let val = rest.split_off(rest.len() - n_val);
            let mut train = rest;
            train.sort_unstable();
            let mut val = val;
            val.sort_unstable();
            folds.push(CvFold { train, val, test: vec![test_subject.clone()] });
        }
        let plan = CvPlan { mode: CvMode::Loso, folds, classes };
        check_plan(&plan)?;
        Ok(plan)
    } else {
        let classes = store.classes();
        let mut pool = subjects.clone();
        let mut rng = Rng::stream(seed, 0x4356_4b46);
        rng.shuffle(&mut pool);
        let mut groups: Vec<Vec<String>> = vec![Vec::new(); KFOLDS];
        for (i, s) in pool.iter().enumerate() {
            groups[i % KFOLDS].push(s.clone());
        }
        let mut folds = Vec::with_capacity(KFOLDS);
        for (fi, test) in groups.iter().enumerate() {
            let mut rest: Vec<String> =
                pool.iter().filter(|s| !test.contains(s)).cloned().collect();
            let mut frng = Rng::stream(seed, 0x4356_4b46).fork(1000 + fi as u64);
            frng.shuffle(&mut rest);
            let n_val = ((rest.len() as f64 / 8.0).round() as usize).clamp(1, rest.len() - 1);
            let val = rest.split_off(rest.len() - n_val);
            let mut train = rest;
            train.sort_unstable();
            let mut val = val;
            val.sort_unstable();
            let mut test = test.clone();
            test.sort_unstable();
            folds.push(CvFold { train, val, test });
        }
        let plan = CvPlan { mode: CvMode::KFold, folds, classes };
        check_plan(&plan)?;
        Ok(plan)
    }
}

fn check_plan(plan: &CvPlan) -> Result<(), DownstreamError> {
    for (fi, fold) in plan.folds.iter().enumerate() {
        for s in &fold.train {
            assert!(!fold.val.contains(s) && !fold.test.contains(s), "fold {fi} overlap: {s}");
        }
        for s in &fold.val {
            assert!(!fold.test.contains(s), "fold {fi} overlap: {s}");
        }
        if plan.classes.len() < 2 {
            return Err(DownstreamError::DegenerateFold { fold: fi, classes: plan.classes.len() });
        }
    }
    Ok(())
}

/// Map a store label to its dense class index, skipping pruned classes.
fn class_index(classes: &[i32], label: i32) -> Option<usize> {
    classes.iter().position(|&c| c == label)
}

/// Record indices and dense labels for a set of subjects (pruned-class
/// windows are dropped).
fn gather(
    store: &WindowStore,
    subjects: &[String],
    classes: &[i32],
) -> (Vec<usize>, Vec<usize>) {
    let mut idxs = Vec::new();
    let mut labels = Vec::new();
    for s in subjects {
        for i in store.subject_indices(s) {
            if let Some(l) = store.records()[i].label.and_then(|l| class_index(classes, l)) {
                idxs.push(i);
                labels.push(l);
            }
        }
    }
    (idxs, labels)
}

const PREDICT_CHUNK: usize = 256;

/// Argmax class predictions of the downstream head over store records.
pub fn predict(net: &Network<f32>, store: &WindowStore, idxs: &[usize]) -> Vec<usize> {
    let mut preds = Vec::with_capacity(idxs.len());
    for chunk in idxs.chunks(PREDICT_CHUNK) {
        let windows: Vec<_> =
            chunk.iter().map(|&i| store.records()[i].window.clone()).collect();
        let x = Network::<f32>::batch_from_windows(&windows);
        let out = net.forward(&x, Mode::Eval).expect("shape checked upstream");
        for r in 0..chunk.len() {
            let row = out.downstream_logits.row(r);
            let mut best = 0usize;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            preds.push(best);
        }
    }
    preds
}

/// Trunk feature vectors for store records.
pub fn embed(net: &Network<f32>, store: &WindowStore, idxs: &[usize]) -> Vec<Vec<f32>> {
    let mut out = Vec::with_capacity(idxs.len());
    for chunk in idxs.chunks(PREDICT_CHUNK) {
        let windows: Vec<_> =
            chunk.iter().map(|&i| store.records()[i].window.clone()).collect();
        let x = Network::<f32>::batch_from_windows(&windows);
        let fwd = net.forward(&x, Mode::Eval).expect("shape checked upstream");
        let d = fwd.features.shape()[1];
        for r in 0..chunk.len() {
            out.push(fwd.features.data()[r * d..(r + 1) * d].to_vec());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinetuneMode {
    AllLayers,
    HeadOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainCfg {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub base_lr: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainCfg {
    fn default() -> Self {
        TrainCfg { batch_size: 64, max_epochs: 30, base_lr: 1e-3, patience: 5, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub ckpt: NetworkCheckpoint,
    pub classes: Vec<i32>,
    /// (epoch, mean train loss, validation macro-F1) per epoch.
    pub curve: Vec<(usize, f64, f64)>,
}

fn supervised_loop(
    mut net: Network<f32>,
    store: &WindowStore,
    train_subjects: &[String],
    val_subjects: &[String],
    classes: &[i32],
    head_only: bool,
    cfg: &TrainCfg,
) -> Result<TrainResult, DownstreamError> {
    let (train_idx, train_labels) = gather(store, train_subjects, classes);
    if train_idx.is_empty() {
        return Err(DownstreamError::EmptyInput);
    }
    {
        let mut seen = vec![false; classes.len()];
        for &l in &train_labels {
            seen[l] = true;
        }
        if seen.iter().filter(|&&s| s).count() < 2 {
            return Err(DownstreamError::DegenerateFold { fold: 0, classes: 1 });
        }
    }
    // Early stopping watches validation subjects when there are any; tiny
    // LOSO datasets without spare subjects fall back to the training split.
    let (val_idx, val_labels) = if val_subjects.is_empty() {
        (train_idx.clone(), train_labels.clone())
    } else {
        gather(store, val_subjects, classes)
    };
    let mut adam = AdamState::new(&net);
    let mask: Option<Vec<bool>> = if head_only {
        Some(
            net.arch
                .metas
                .iter()
                .map(|m| m.name.starts_with("head.fc") || m.name.starts_with("head.out"))
                .collect(),
        )
    } else {
        None
    };
    let root = Rng::stream(cfg.seed, 0x4446_4e54);
    let mut order: Vec<usize> = (0..train_idx.len()).collect();
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best: Option<(Vec<Tensor<f32>>, Vec<Tensor<f32>>)> = None;
    let mut since_best = 0usize;
    let mut curve = Vec::new();
    for epoch in 0..cfg.max_epochs {
        let mut erng = root.fork(epoch as u64 + 1);
        erng.shuffle(&mut order);
        let mut epoch_loss = 0.0f64;
        let mut n_batches = 0usize;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let lr = lr_schedule(
                epoch as f64 + bi as f64 * cfg.batch_size as f64 / train_idx.len() as f64,
                cfg.base_lr,
                cfg.batch_size,
            );
            let windows: Vec<_> =
                chunk.iter().map(|&o| store.records()[train_idx[o]].window.clone()).collect();
            let labels: Vec<usize> = chunk.iter().map(|&o| train_labels[o]).collect();
            let x = Network::<f32>::batch_from_windows(&windows);
            let (loss, _, step) = net.loss_and_grad_downstream(&x, &labels, head_only)?;
            if !head_only {
                net.apply_bn_updates(&step.bn_stats);
            }
            adam_step(&mut net, &mut adam, &step.grads, lr, mask.as_deref())?;
            epoch_loss += loss;
            n_batches += 1;
        }
        let preds = predict(&net, store, &val_idx);
        let f1 = macro_f1(&val_labels, &preds, classes.len());
        curve.push((epoch, epoch_loss / n_batches.max(1) as f64, f1));
        if f1 > best_f1 {
            best_f1 = f1;
            best = Some((net.params.clone(), net.buffers.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    if let Some((params, buffers)) = best {
        net.params = params;
        net.buffers = buffers;
    }
    Ok(TrainResult {
        ckpt: NetworkCheckpoint::from_network(&net, None),
        classes: classes.to_vec(),
        curve,
    })
}

/// Fine-tune a pre-trained trunk on one fold: attach a fresh FC-512 +
/// softmax head and either train everything or freeze the trunk (which
/// then runs in eval mode and stays bit-identical).
pub fn finetune(
    ckpt: &NetworkCheckpoint,
    store: &WindowStore,
    fold: &CvFold,
    classes: &[i32],
    mode: FinetuneMode,
    cfg: &TrainCfg,
) -> Result<TrainResult, DownstreamError> {
    let net_cfg = NetConfig { n_classes: classes.len(), input_t: ckpt.cfg.input_t, ..ckpt.cfg };
    let fresh = Network::<f32>::build(net_cfg, cfg.seed)?;
    let mut target = NetworkCheckpoint::from_network(&fresh, None);
    target.load_trunk_from(ckpt)?;
    let net: Network<f32> = target.to_network()?;
    supervised_loop(
        net,
        store,
        &fold.train,
        &fold.val,
        classes,
        mode == FinetuneMode::HeadOnly,
        cfg,
    )
}

/// Same protocol as fine-tuning all layers, from a fresh initialization.
pub fn train_scratch(
    store: &WindowStore,
    fold: &CvFold,
    classes: &[i32],
    net_cfg: &NetConfig,
    cfg: &TrainCfg,
) -> Result<TrainResult, DownstreamError> {
    let net_cfg = NetConfig { n_classes: classes.len(), ..*net_cfg };
    let net = Network::<f32>::build(net_cfg, cfg.seed)?;
    supervised_loop(net, store, &fold.train, &fold.val, classes, false, cfg)
}

/// Supervised pre-training on a labelled source dataset: train trunk and
/// head on all source classes (subjects split 8:2 for early stopping) and
/// return the checkpoint; the source head is discarded when the trunk is
/// loaded for fine-tuning.
pub fn supervised_pretrain(
    store: &WindowStore,
    net_cfg: &NetConfig,
    cfg: &TrainCfg,
) -> Result<NetworkCheckpoint, DownstreamError> {
    if !store.labelled() {
        return Err(DownstreamError::Unlabelled);
    }
    let (train_subjects, val_subjects) =
        subject_split(store.subjects(), cfg.seed).map_err(|_| DownstreamError::TooFewSubjects)?;
    let classes = store.classes();
    if classes.len() < 2 {
        return Err(DownstreamError::DegenerateFold { fold: 0, classes: classes.len() });
    }
    let net_cfg = NetConfig { n_classes: classes.len(), ..*net_cfg };
    let net = Network::<f32>::build(net_cfg, cfg.seed)?;
    let result =
        supervised_loop(net, store, &train_subjects, &val_subjects, &classes, false, cfg)?;
    Ok(result.ckpt)
}

/// Unweighted mean of per-class F1. Per-class F1 is 0 when precision and
/// recall are both 0; classes absent from both truth and prediction are
/// excluded from the mean.
pub fn macro_f1(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> f64 {
    assert!(!y_true.is_empty() && y_true.len() == y_pred.len(), "empty or mismatched inputs");
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fnn = vec![0usize; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fnn[t] += 1;
        }
    }
    let mut sum = 0.0f64;
    let mut counted = 0usize;
    for c in 0..n_classes {
        if tp[c] + fp[c] + fnn[c] == 0 {
            continue; // absent from both sides
        }
        counted += 1;
        let denom = 2 * tp[c] + fp[c] + fnn[c];
        if denom > 0 {
            sum += 2.0 * tp[c] as f64 / denom as f64;
        }
    }
    if counted == 0 {
        0.0
    } else {
        sum / counted as f64
    }
}

/// Agreement corrected for marginal chance agreement; 0 when the expected
/// agreement is already 1.
pub fn cohen_kappa(y_true: &[usize], y_pred: &[usize]) -> f64 {
    assert!(!y_true.is_empty() && y_true.len() == y_pred.len(), "empty or mismatched inputs");
    let n_classes = y_true.iter().chain(y_pred).copied().max().unwrap() + 1;
    let n = y_true.len() as f64;
    let mut row = vec![0.0f64; n_classes];
    let mut col = vec![0.0f64; n_classes];
    let mut agree = 0.0f64;
    for (&t, &p) in y_true.iter().zip(y_pred) {
        row[t] += 1.0;
        col[p] += 1.0;
        if t == p {
            agree += 1.0;
        }
    }
    let po = agree / n;
    let pe: f64 = row.iter().zip(&col).map(|(r, c)| (r / n) * (c / n)).sum();
    if (1.0 - pe).abs() < 1e-15 {
        0.0
    } else {
        (po - pe) / (1.0 - pe)
    }
}

pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0usize; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        m[t][p] += 1;
    }
    m
}

/// One fold's evaluation: the two metrics per test subject plus the fold
/// confusion matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldEval {
    pub per_subject: Vec<(String, f64, f64)>,
    pub confusion: Vec<Vec<usize>>,
}

/// Evaluate a trained network on a fold's test subjects.
pub fn evaluate(
    net: &Network<f32>,
    store: &WindowStore,
    fold: &CvFold,
    classes: &[i32],
) -> Result<FoldEval, DownstreamError> {
    if fold.test.is_empty() {
        return Err(DownstreamError::EmptyInput);
    }
    let mut per_subject = Vec::new();
    let mut confusion = vec![vec![0usize; classes.len()]; classes.len()];
    for s in &fold.test {
        let (idxs, labels) = gather(store, core::slice::from_ref(s), classes);
        if idxs.is_empty() {
            continue;
        }
        let preds = predict(net, store, &idxs);
        per_subject.push((
            s.clone(),
            macro_f1(&labels, &preds, classes.len()),
            cohen_kappa(&labels, &preds),
        ));
        for (t, p) in labels.iter().zip(&preds) {
            confusion[*t][*p] += 1;
        }
    }
    Ok(FoldEval { per_subject, confusion })
}

/// Evaluate a forest the same way (identical report schema).
pub fn evaluate_forest(
    model: &ForestModel,
    store: &WindowStore,
    fold: &CvFold,
    classes: &[i32],
) -> Result<FoldEval, DownstreamError> {
    let mut per_subject = Vec::new();
    let mut confusion = vec![vec![0usize; classes.len()]; classes.len()];
    for s in &fold.test {
        let (idxs, labels) = gather(store, core::slice::from_ref(s), classes);
        if idxs.is_empty() {
            continue;
        }
        let rows: Vec<[f64; 20]> = idxs
            .iter()
            .map(|&i| extract_features(&store.records()[i].window).to_array())
            .collect();
        let preds = forest_predict(model, &rows)?;
        per_subject.push((
            s.clone(),
            macro_f1(&labels, &preds, classes.len()),
            cohen_kappa(&labels, &preds),
        ));
        for (t, p) in labels.iter().zip(&preds) {
            confusion[*t][*p] += 1;
        }
    }
    Ok(FoldEval { per_subject, confusion })
}

/// Train the forest baseline for one fold (train and val subjects both
/// feed the trees; the forest has no early stopping to tune).
pub fn train_fold_forest(
    store: &WindowStore,
    fold: &CvFold,
    classes: &[i32],
    seed: u64,
) -> Result<ForestModel, DownstreamError> {
    let mut subjects = fold.train.clone();
    subjects.extend(fold.val.iter().cloned());
    let (idxs, labels) = gather(store, &subjects, classes);
    let rows: Vec<[f64; 20]> = idxs
        .iter()
        .map(|&i| extract_features(&store.records()[i].window).to_array())
        .collect();
    let mut rng = Rng::stream(seed, 0x464f_5253);
    Ok(train_forest(&rows, &labels, &ForestConfig::default(), &mut rng)?)
}

/// Mean and population standard deviation of per-subject scores across
/// folds.
pub fn summarize(per_subject: &[(String, f64, f64)]) -> (f64, f64, f64, f64) {
    let n = per_subject.len() as f64;
    let mean_f1 = per_subject.iter().map(|r| r.1).sum::<f64>() / n;
    let mean_k = per_subject.iter().map(|r| r.2).sum::<f64>() / n;
    let sd_f1 =
        (per_subject.iter().map(|r| (r.1 - mean_f1).powi(2)).sum::<f64>() / n).sqrt();
    let sd_k = (per_subject.iter().map(|r| (r.2 - mean_k).powi(2)).sum::<f64>() / n).sqrt();
    (mean_f1, sd_f1, mean_k, sd_k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationPoint {
    pub subject_count: usize,
    pub family: &'static str,
    pub mean_f1: f64,
    pub sd_f1: f64,
}

/// Labelled-volume ablation: restrict each fold's training subjects to
/// nested seeded subsets of the requested sizes and score fine-tuning,
/// training from scratch, and the forest on the unchanged test subjects.
pub fn label_volume_ablation(
    store: &WindowStore,
    ckpt: &NetworkCheckpoint,
    subject_counts: &[usize],
    cfg: &TrainCfg,
) -> Result<Vec<AblationPoint>, DownstreamError> {
    let plan = make_cv_plan(store, cfg.seed)?;
    let mut out = Vec::new();
    for &count in subject_counts {
        let mut scores: [Vec<(String, f64, f64)>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for (fi, fold) in plan.folds.iter().enumerate() {
            let mut pool = fold.train.clone();
            let mut rng = Rng::stream(cfg.seed, 0x4142_4c54).fork(fi as u64);
            rng.shuffle(&mut pool);
            pool.truncate(count.min(pool.len()));
            let sub_fold =
                CvFold { train: pool, val: fold.val.clone(), test: fold.test.clone() };
            let ft = finetune(ckpt, store, &sub_fold, &plan.classes, FinetuneMode::AllLayers, cfg)?;
            let ft_net: Network<f32> = ft.ckpt.to_network()?;
            scores[0].extend(evaluate(&ft_net, store, &sub_fold, &plan.classes)?.per_subject);
            let sc = train_scratch(store, &sub_fold, &plan.classes, &ckpt.cfg, cfg)?;
            let sc_net: Network<f32> = sc.ckpt.to_network()?;
            scores[1].extend(evaluate(&sc_net, store, &sub_fold, &plan.classes)?.per_subject);
            let forest = train_fold_forest(store, &sub_fold, &plan.classes, cfg.seed)?;
            scores[2]
                .extend(evaluate_forest(&forest, store, &sub_fold, &plan.classes)?.per_subject);
        }
        for (family, rows) in ["finetune", "scratch", "forest"].iter().zip(&scores) {
            let (mean_f1, sd_f1, _, _) = summarize(rows);
            out.push(AblationPoint { subject_count: count, family, mean_f1, sd_f1 });
        }
    }
    Ok(out)
}
