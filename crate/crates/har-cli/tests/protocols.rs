//! Protocol-level integration tests on synthetic corpora: transfer
//! learning directionality, the labelled-volume ablation surface, and the
//! paper-scale batch geometry.

use har_core::downstream::{
    evaluate, finetune, label_volume_ablation, supervised_pretrain, train_scratch, CvFold,
    FinetuneMode, TrainCfg,
};
use har_core::neural::{NetConfig, Network};
use har_core::rng::Rng;
use har_core::signal::{WindowRecord, WindowStore};
use har_core::ssl::{build_pretext_batch, SamplerConfig};
use har_core::transforms::TransformConfig;
use har_cli::synth::{generate, SynthSpec};

fn corpus(seed: u64, subjects: usize, windows: usize) -> WindowStore {
    generate(&SynthSpec {
        n_subjects: subjects,
        days_per_subject: 1,
        windows_per_day: windows,
        static_fraction: 0.2,
        labelled: true,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn mean_f1(ckpt: &har_core::neural::checkpoint::NetworkCheckpoint, store: &WindowStore, fold: &CvFold, classes: &[i32]) -> f64 {
    let net: Network<f32> = ckpt.to_network().unwrap();
    let ev = evaluate(&net, store, fold, classes).unwrap();
    ev.per_subject.iter().map(|r| r.1).sum::<f64>() / ev.per_subject.len() as f64
}

/// Supervised pre-training on a matching source helps a 1-subject target;
/// the checkpoint loads into fine-tuning without shape fuss.
#[test]
fn transfer_from_matching_source_beats_scratch_on_one_subject() {
    let source = corpus(31, 6, 64);
    let target = corpus(32, 4, 24);
    let classes = target.classes();
    let cfg = TrainCfg { max_epochs: 10, batch_size: 64, seed: 3, ..Default::default() };
    let source_ckpt = supervised_pretrain(&source, &NetConfig::tiny(2), &cfg).unwrap();
    let subjects = target.subjects().to_vec();
    let fold = CvFold {
        train: vec![subjects[0].clone()],
        val: vec![subjects[1].clone()],
        test: subjects[2..4].to_vec(),
    };
    let ft = finetune(&source_ckpt, &target, &fold, &classes, FinetuneMode::HeadOnly, &cfg)
        .unwrap();
    let sc = train_scratch(&target, &fold, &classes, &NetConfig::tiny(2), &cfg).unwrap();
    let (f_ft, f_sc) = (
        mean_f1(&ft.ckpt, &target, &fold, &classes),
        mean_f1(&sc.ckpt, &target, &fold, &classes),
    );
    assert!(
        f_ft >= f_sc,
        "head-only transfer ({f_ft:.3}) below scratch ({f_sc:.3}) on a 1-subject target"
    );
}

/// A source with labels shuffled independently of the signal teaches the
/// trunk nothing: transfer gain stays within +-0.05 of zero (mean over 5
/// seeds) on an easy target where both recipes saturate.
#[test]
fn random_label_source_gives_no_transfer_gain() {
    let source_base = corpus(41, 6, 48);
    let target = corpus(42, 6, 48);
    let classes = target.classes();
    let subjects = target.subjects().to_vec();
    let fold = CvFold {
        train: subjects[0..3].to_vec(),
        val: vec![subjects[3].clone()],
        test: subjects[4..6].to_vec(),
    };
    let mut gaps = Vec::new();
    for seed in 0..5u64 {
        // Shuffle source labels against windows.
        let mut rng = Rng::stream(41, 99).fork(seed);
        let n_classes = source_base.classes().len() as u64;
        let records: Vec<WindowRecord> = source_base
            .records()
            .iter()
            .map(|r| WindowRecord { label: Some(rng.below(n_classes) as i32), ..r.clone() })
            .collect();
        let source = WindowStore::new(records, true).unwrap();
        let cfg = TrainCfg { max_epochs: 8, batch_size: 64, seed, ..Default::default() };
        let source_ckpt = supervised_pretrain(&source, &NetConfig::tiny(2), &cfg).unwrap();
        let ft =
            finetune(&source_ckpt, &target, &fold, &classes, FinetuneMode::AllLayers, &cfg)
                .unwrap();
        let sc = train_scratch(&target, &fold, &classes, &NetConfig::tiny(2), &cfg).unwrap();
        gaps.push(
            mean_f1(&ft.ckpt, &target, &fold, &classes)
                - mean_f1(&sc.ckpt, &target, &fold, &classes),
        );
    }
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    assert!(
        mean_gap.abs() <= 0.05,
        "random-label transfer gain {mean_gap:.3} outside +-0.05 (per-seed {gaps:?})"
    );
}

/// The ablation surface is defined at every requested count, and the
/// full-count point agrees with the plain protocol within seed noise.
#[test]
fn label_volume_ablation_surface() {
    let store = corpus(51, 4, 32);
    let cfg = TrainCfg { max_epochs: 8, batch_size: 64, seed: 7, ..Default::default() };
    let base = Network::<f32>::build(NetConfig::tiny(2), 7).unwrap();
    let ckpt = har_core::neural::checkpoint::NetworkCheckpoint::from_network(&base, None);
    let counts = [1usize, 2];
    let points = label_volume_ablation(&store, &ckpt, &counts, &cfg).unwrap();
    // Defined at every count for every family, no silent skips.
    assert_eq!(points.len(), counts.len() * 3);
    for &count in &counts {
        for family in ["finetune", "scratch", "forest"] {
            let p = points
                .iter()
                .find(|p| p.subject_count == count && p.family == family)
                .unwrap_or_else(|| panic!("missing point {family}@{count}"));
            assert!(p.mean_f1.is_finite() && p.sd_f1 >= 0.0);
        }
    }
    // LOSO over 4 subjects leaves 2 train subjects after the val split, so
    // count=2 is the full-data limit; it must be near the plain protocol.
    let plan = har_core::downstream::make_cv_plan(&store, 7).unwrap();
    let mut plain = Vec::new();
    for fold in &plan.folds {
        let r = finetune(&ckpt, &store, fold, &plan.classes, FinetuneMode::AllLayers, &cfg)
            .unwrap();
        plain.push(mean_f1(&r.ckpt, &store, fold, &plan.classes));
    }
    let plain_mean = plain.iter().sum::<f64>() / plain.len() as f64;
    let full_point = points
        .iter()
        .find(|p| p.subject_count == 2 && p.family == "finetune")
        .unwrap();
    assert!(
        (full_point.mean_f1 - plain_mean).abs() < 0.15,
        "full-count ablation {:.3} vs plain protocol {:.3}",
        full_point.mean_f1,
        plain_mean
    );
}

/// Paper-scale batch geometry: four subjects x 1500 windows = 6000 rows.
#[test]
fn pretext_batch_paper_scale() {
    let store = generate(&SynthSpec {
        n_subjects: 4,
        days_per_subject: 1,
        windows_per_day: 1500,
        static_fraction: 0.5,
        labelled: false,
        seed: 61,
        ..Default::default()
    })
    .unwrap();
    let cfg = SamplerConfig::default(); // 4 x 1500
    let mut rng = Rng::new(1);
    let batch = build_pretext_batch(&store, &cfg, &TransformConfig::default(), &mut rng).unwrap();
    assert_eq!(batch.windows.len(), 6000);
    assert_eq!(batch.labels.len(), 6000);
    for (subject, day, idx) in batch.provenance.iter().step_by(577) {
        let rec = &store.records()[*idx];
        assert_eq!(&rec.subject_id, subject);
        assert_eq!(rec.day_index, *day);
    }
}
