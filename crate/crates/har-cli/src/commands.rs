//! The experiment commands. Every command reads a `RunConfig`, writes its
//! outputs (CSV first, figures second) into the `out` directory together
//! with the fully resolved configuration, and is reproducible from
//! (config, seed, inputs) alone.

use std::path::{Path, PathBuf};

use har_core::downstream::{
    self, evaluate, evaluate_forest, finetune, label_volume_ablation, make_cv_plan,
    supervised_pretrain, train_fold_forest, train_scratch, CvFold, CvPlan, FinetuneMode,
    TrainCfg,
};
use har_core::explain::cwt::cwt_morlet;
use har_core::explain::gradients::{guided_backprop, integrated_gradients, saliency};
use har_core::explain::lrp::{lrp, ExplainTarget, LrpConfig, LrpMode, RelevanceMap};
use har_core::explain::masking::{
    mask_faithfulness, mean_curve, AttributionMethod, MaskCurve, MaskOrder,
};
use har_core::features::extract_features;
use har_core::neural::checkpoint::NetworkCheckpoint;
use har_core::neural::{Mode, NetConfig, Network};
use har_core::rng::Rng;
use har_core::signal::{euclidean_norm, SignalWindow, WindowStore};
use har_core::ssl::{
    self, build_eval_batches, pretrain, PretrainOpts, SamplerConfig,
};
use har_core::transforms::{
    permute_chunks, reverse_time, time_warp, PretextLabel, TransformConfig, TASK_NAMES,
};

use crate::config::RunConfig;
use crate::csvio;
use crate::error::CliError;
use crate::store_io::{ingest_file, read_store, write_store};
use crate::svg::panel_svg;
use crate::synth::{classes_to_string, default_classes_v1, generate, parse_classes, SynthSpec};
use crate::ckpt_io;

fn out_dir(cfg: &mut RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.require_path("out")?;
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::io(&format!("creating {}", dir.display()), e))?;
    Ok(dir)
}

fn finalize(cfg: &RunConfig, dir: &Path, command: &str) -> Result<(), CliError> {
    cfg.finish()?;
    csvio::write_text(&dir.join("config.resolved"), &cfg.resolved_text(command))
}

fn load_store(cfg: &mut RunConfig, key: &str) -> Result<WindowStore, CliError> {
    let path = cfg.require_path(key)?;
    read_store(&path)
}

fn net_config(cfg: &mut RunConfig, n_classes: usize) -> Result<NetConfig, CliError> {
    let preset = cfg.get_str("net.preset", "tiny");
    let mut net = match preset.as_str() {
        "tiny" => NetConfig::tiny(n_classes),
        "full" => NetConfig::full(n_classes),
        other => return Err(CliError::config(format!("net.preset '{other}' (tiny|full)"))),
    };
    net.width_base = cfg.get_usize("net.width_base", net.width_base)?;
    net.feature_dim = cfg.get_usize("net.feature_dim", net.feature_dim)?;
    net.kernel_size = cfg.get_usize("net.kernel_size", net.kernel_size)?;
    net.input_t = cfg.get_usize("net.input_t", net.input_t)?;
    Ok(net)
}

fn sampler_config(cfg: &mut RunConfig) -> Result<SamplerConfig, CliError> {
    Ok(SamplerConfig {
        subjects_per_iter: cfg.get_usize("sampler.subjects_per_iter", 4)?,
        windows_per_subject: cfg.get_usize("sampler.windows_per_subject", 1500)?,
        intensity_floor: cfg.get_f64("sampler.intensity_floor", 1e-4)?,
        weighted: cfg.get_bool("sampler.weighted", true)?,
    })
}

fn transform_config(cfg: &mut RunConfig) -> Result<TransformConfig, CliError> {
    Ok(TransformConfig {
        n_chunks: cfg.get_usize("transform.n_chunks", 4)?,
        min_chunk_len: cfg.get_usize("transform.min_chunk_len", 10)?,
        tw_knots: cfg.get_usize("transform.tw_knots", 4)?,
        tw_sigma: cfg.get_f64("transform.tw_sigma", 0.2)?,
        apply_prob: cfg.get_f64("transform.apply_prob", 0.5)?,
    })
}

fn train_cfg(cfg: &mut RunConfig, seed: u64) -> Result<TrainCfg, CliError> {
    Ok(TrainCfg {
        batch_size: cfg.get_usize("batch", 64)?,
        max_epochs: cfg.get_usize("epochs", 30)?,
        base_lr: cfg.get_f64("lr", 1e-3)?,
        patience: cfg.get_usize("patience", 5)?,
        seed,
    })
}

pub fn cmd_synth(cfg: &mut RunConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let classes_text = cfg.get_str("classes", &classes_to_string(&default_classes_v1()));
    let spec = SynthSpec {
        n_subjects: cfg.get_usize("subjects", 20)?,
        days_per_subject: cfg.get_u64("days", 1)? as u16,
        windows_per_day: cfg.get_usize("windows_per_day", 100)?,
        classes: parse_classes(&classes_text)?,
        static_fraction: cfg.get_f64("static_fraction", 0.0)?,
        static_noise_std: cfg.get_f64("static_noise", 0.004)?,
        gain_jitter: cfg.get_f64("gain_jitter", 0.25)?,
        envelope_shape: cfg.get_f64("envelope_shape", 0.22)?,
        am_depth: cfg.get_f64("am_depth", 0.5)?,
        envelope_floor: cfg.get_f64("envelope_floor", 0.35)?,
        amplitude: cfg.get_f64("amplitude", 0.5)?,
        labelled: cfg.get_bool("labelled", true)?,
        seed: cfg.get_u64("seed", 0)?,
    };
    let store = generate(&spec)?;
    write_store(&store, &dir.join("store.harw"))?;
    finalize(cfg, &dir, "synth")?;
    println!(
        "wrote {} windows ({} subjects) to {}",
        store.len(),
        store.subjects().len(),
        dir.join("store.harw").display()
    );
    Ok(())
}

pub fn cmd_ingest(cfg: &mut RunConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let _seed = cfg.get_u64("seed", 0)?;
    let inputs = cfg.require_str("inputs")?;
    let rate = cfg.get_f64("rate", 100.0)?;
    let target_rate = cfg.get_f64("target_rate", 30.0)?;
    let duration = cfg.get_u64("duration", 10)? as u32;
    let labelled = cfg.get_bool("labelled", false)?;
    let mut records = Vec::new();
    for path in inputs.split(';').filter(|p| !p.trim().is_empty()) {
        records.extend(ingest_file(Path::new(path.trim()), rate, target_rate, duration, labelled)?);
    }
    if records.is_empty() {
        return Err(CliError::invariant("no windows survived ingestion"));
    }
    let store =
        WindowStore::new(records, labelled).map_err(|e| CliError::invariant(e.to_string()))?;
    write_store(&store, &dir.join("store.harw"))?;
    finalize(cfg, &dir, "ingest")?;
    println!("ingested {} windows to {}", store.len(), dir.join("store.harw").display());
    Ok(())
}

fn parse_tasks(text: &str) -> Result<[bool; 3], CliError> {
    let mut active = [false; 3];
    for part in text.split(',').filter(|p| !p.trim().is_empty()) {
        let t = TASK_NAMES
            .iter()
            .position(|n| *n == part.trim())
            .ok_or_else(|| CliError::config(format!("unknown task '{part}'")))?;
        active[t] = true;
    }
    if active.iter().all(|&a| !a) {
        return Err(CliError::config("at least one task required"));
    }
    Ok(active)
}

pub fn cmd_pretrain(cfg: &mut RunConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let store = load_store(cfg, "store")?;
    let seed = cfg.get_u64("seed", 0)?;
    let net = net_config(cfg, 2)?;
    let sampler = sampler_config(cfg)?;
    let transform = transform_config(cfg)?;
    let patience_text = cfg.get_str("patience", "5");
    let patience = if patience_text == "none" {
        None
    } else {
        Some(patience_text.parse::<usize>().map_err(|_| {
            CliError::config(format!("patience '{patience_text}' (integer or 'none')"))
        })?)
    };
    let opts = PretrainOpts {
        epochs: cfg.get_usize("epochs", 30)?,
        seed,
        base_lr: cfg.get_f64("lr", 1e-3)?,
        patience,
        eval_windows_per_subject: cfg.get_usize("eval_windows", 128)?,
        active_tasks: parse_tasks(&cfg.get_str("tasks", "aot,permutation,tw"))?,
    };
    finalize(cfg, &dir, "pretrain")?;
    let (ckpt, history) = pretrain(&store, &net, &sampler, &transform, &opts)?;
    ckpt_io::write_checkpoint(&ckpt, &dir.join("checkpoint.harc"))?;
    csvio::write_text(&dir.join("history.csv"), &csvio::history_csv(&history))?;
    if let Some(last) = history.iter().filter(|r| r.split == "test").next_back() {
        println!(
            "pretrained {} epochs; final test accuracy sample: {} {}",
            history.last().map(|r| r.epoch + 1).unwrap_or(0),
            last.task,
            last.accuracy
        );
    } else {
        println!("pretrained 0 epochs (initialized checkpoint written)");
    }
    Ok(())
}

fn dataset_name(cfg: &mut RunConfig, store_key: &str) -> String {
    let fallback = PathBuf::from(cfg.get_str(store_key, ""))
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| String::from("dataset"));
    cfg.get_str("dataset", &fallback)
}

/// Run per-fold training via `train`, evaluate on test subjects, and emit
/// the eval + confusion CSVs.
fn run_cv<Train>(
    dir: &Path,
    dataset: &str,
    plan: &CvPlan,
    mut train: Train,
) -> Result<f64, CliError>
where
    Train: FnMut(usize, &CvFold) -> Result<FoldOutcome, CliError>,
{
    let mut rows = Vec::new();
    let mut confusions = Vec::new();
    for (fi, fold) in plan.folds.iter().enumerate() {
        let outcome = train(fi, fold)?;
        for (subject, f1, kappa) in outcome.per_subject {
            rows.push((fi, subject, f1, kappa));
        }
        confusions.push((fi, outcome.confusion));
        if fi == 0 {
            if let Some(model) = &outcome.model {
                crate::ckpt_io::write_checkpoint(model, &dir.join("model_fold0.harc"))?;
            }
        }
    }
    csvio::write_text(&dir.join("eval.csv"), &csvio::eval_csv(dataset, &rows))?;
    csvio::write_text(
        &dir.join("confusion.csv"),
        &csvio::confusion_csv(&plan.classes, &confusions),
    )?;
    let mean = rows.iter().map(|r| r.2).sum::<f64>() / rows.len().max(1) as f64;
    Ok(mean)
}

struct FoldOutcome {
    per_subject: Vec<(String, f64, f64)>,
    confusion: Vec<Vec<usize>>,
    /// Trained model of this fold (fold 0's is written to disk so `eval`
    /// has a consumable artifact).
    model: Option<NetworkCheckpoint>,
}

pub fn cmd_finetune(cfg: &mut RunConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let store = load_store(cfg, "store")?;
    let ckpt = ckpt_io::read_checkpoint(&cfg.require_path("ckpt")?)?;
    let seed = cfg.get_u64("seed", 0)?;
    let mode = match cfg.get_str("mode", "all").as_str() {
        "all" => FinetuneMode::AllLayers,
        "head" => FinetuneMode::HeadOnly,
        other => return Err(CliError::config(format!("mode '{other}' (all|head)"))),
    };
    let tc = train_cfg(cfg, seed)?;
    let dataset = dataset_name(cfg, "store");
    finalize(cfg, &dir, "finetune")?;
    let plan = make_cv_plan(&store, seed)?;
    let mean = run_cv(&dir, &dataset, &plan, |_fi, fold| {
        let result = finetune(&ckpt, &store, fold, &plan.classes, mode, &tc)?;
        let net: Network<f32> = result.ckpt.to_network()?;
        let ev = evaluate(&net, &store, fold, &plan.classes)?;
        Ok(FoldOutcome {
            per_subject: ev.per_subject,
            confusion: ev.confusion,
            model: Some(result.ckpt),
        })
    })?;
    println!("finetune ({dataset}): mean subject F1 {mean:.4}");
    Ok(())
}

pub fn cmd_scratch(cfg: &mut RunConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let store = load_store(cfg, "store")?;
    let seed = cfg.get_u64("seed", 0)?;
    let net_cfg = net_config(cfg, 2)?;
    let tc = train_cfg(cfg, seed)?;
    let dataset = dataset_name(cfg, "store");
    finalize(cfg, &dir, "scratch")?;
    let plan = make_cv_plan(&store, seed)?;
    let mean = run_cv(&dir, &dataset, &plan, |_fi, fold| {
        let result = train_scratch(&store, fold, &plan.classes, &net_cfg, &tc)?;
        let net: Network<f32> = result.ckpt.to_network()?;
        let ev = evaluate(&net, &store, fold, &plan.classes)?;
        Ok(FoldOutcome {
            per_subject: ev.per_subject,
            confusion: ev.confusion,
            model: Some(result.ckpt),
        })
    })?;
    println!("scratch ({dataset}): mean subject F1 {mean:.4}");
    Ok(())
}

pub fn cmd_transfer(cfg: &mut RunConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let source = load_store(cfg, "source")?;
    let target = load_store(cfg, "store")?;
    let seed = cfg.get_u64("seed", 0)?;
    let net_cfg = net_config(cfg, 2)?;
    let mode = match cfg.get_str("mode", "all").as_str() {
        "all" => FinetuneMode::AllLayers,
        "head" => FinetuneMode::HeadOnly,
        other => return Err(CliError::config(format!("mode '{other}' (all|head)"))),
    };
    let tc = train_cfg(cfg, seed)?;
    let dataset = dataset_name(cfg, "store");
    finalize(cfg, &dir, "transfer")?;
    let source_ckpt = supervised_pretrain(&source, &net_cfg, &tc)?;
    ckpt_io::write_checkpoint(&source_ckpt, &dir.join("source_checkpoint.harc"))?;
    let plan = make_cv_plan(&target, seed)?;
    let mean = run_cv(&dir, &dataset, &plan, |_fi, fold| {
        let result = finetune(&source_ckpt, &target, fold, &plan.classes, mode, &tc)?;
        let net: Network<f32> = result.ckpt.to_network()?;
        let ev = evaluate(&net, &target, fold, &plan.classes)?;
        Ok(FoldOutcome {
            per_subject: ev.per_subject,
            confusion: ev.confusion,
            model: Some(result.ckpt),
        })
    })?;
    println!("transfer ({dataset}): mean subject F1 {mean:.4}");
    Ok(())
}

pub fn cmd_rf(cfg: &mut RunConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let store = load_store(cfg, "store")?;
    let seed = cfg.get_u64("seed", 0)?;
    let export_features = cfg.get_bool("export_features", false)?;
    let dataset = dataset_name(cfg, "store");
    finalize(cfg, &dir, "rf")?;
    let plan = make_cv_plan(&store, seed)?;
    if export_features {
        let rows: Vec<_> = store
            .records()
            .iter()
            .map(|r| (r.subject_id.clone(), r.day_index, r.label, extract_features(&r.window)))
            .collect();
        csvio::write_text(&dir.join("features.csv"), &csvio::features_csv(&rows))?;
    }
    let mean = run_cv(&dir, &dataset, &plan, |fi, fold| {
        let model = train_fold_forest(&store, fold, &plan.classes, seed ^ fi as u64)?;
        let ev = evaluate_forest(&model, &store, fold, &plan.classes)?;
        Ok(FoldOutcome { per_subject: ev.per_subject, confusion: ev.confusion, model: None })
    })?;
    println!("random forest ({dataset}): mean subject F1 {mean:.4}");
    Ok(())
}

pub fn cmd_eval(cfg: &mut RunConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let store = load_store(cfg, "store")?;
    let ckpt = ckpt_io::read_checkpoint(&cfg.require_path("ckpt")?)?;
    let _seed = cfg.get_u64("seed", 0)?;
    let dataset = dataset_name(cfg, "store");
    finalize(cfg, &dir, "eval")?;
    let classes = store.classes();
    if classes.len() != ckpt.cfg.n_classes {
        return Err(CliError::invariant(format!(
            "store has {} classes but the checkpoint head has {}",
            classes.len(),
            ckpt.cfg.n_classes
        )));
    }
    let net: Network<f32> = ckpt.to_network()?;
    let mut rows = Vec::new();
    for (si, subject) in store.subjects().iter().enumerate() {
        let fold = CvFold { train: vec![], val: vec![], test: vec![subject.clone()] };
        let ev = evaluate(&net, &store, &fold, &classes)?;
        for (subject, f1, kappa) in ev.per_subject {
            rows.push((si, subject, f1, kappa));
        }
    }
    csvio::write_text(&dir.join("eval.csv"), &csvio::eval_csv(&dataset, &rows))?;
    let mean = rows.iter().map(|r| r.2).sum::<f64>() / rows.len().max(1) as f64;
    println!("eval ({dataset}): mean subject F1 {mean:.4}");
    Ok(())
}

fn parse_target(text: &str) -> Result<ExplainTarget, CliError> {
    match text {
        "aot" => Ok(ExplainTarget::Pretext(0)),
        "permutation" => Ok(ExplainTarget::Pretext(1)),
        "tw" => Ok(ExplainTarget::Pretext(2)),
        "downstream" => Ok(ExplainTarget::Downstream),
        other => Err(CliError::config(format!(
            "target '{other}' (aot|permutation|tw|downstream)"
        ))),
    }
}

pub fn cmd_explain(cfg: &mut RunConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let store = load_store(cfg, "store")?;
    let ckpt = ckpt_io::read_checkpoint(&cfg.require_path("ckpt")?)?;
    let seed = cfg.get_u64("seed", 0)?;
    let window_idx = cfg.get_usize("window", 0)?;
    let method = cfg.get_str("method", "lrp-cmp");
    let target = parse_target(&cfg.get_str("target", "aot"))?;
    let class_text = cfg.get_str("class", "auto");
    let transform = cfg.get_str("transform", "raw");
    let tcfg = transform_config(cfg)?;
    let n_scales = cfg.get_usize("scales", 48)?;
    let omega0 = cfg.get_f64("omega0", 6.0)?;
    let gamma = cfg.get_f64("lrp.gamma", 0.25)?;
    let ig_steps = cfg.get_usize("ig.steps", 256)?;
    finalize(cfg, &dir, "explain")?;
    if window_idx >= store.len() {
        return Err(CliError::invariant(format!(
            "window {window_idx} out of range ({} windows)",
            store.len()
        )));
    }
    let mut window = store.records()[window_idx].window.clone();
    let mut rng = Rng::stream(seed, 0x4558_504c);
    match transform.as_str() {
        "raw" => {}
        "aot" => window = reverse_time(&window),
        "permutation" => window = permute_chunks(&window, &tcfg, &mut rng)?,
        "tw" => window = time_warp(&window, &tcfg, &mut rng)?,
        "all" => {
            window = permute_chunks(&window, &tcfg, &mut rng)?;
            window = time_warp(&window, &tcfg, &mut rng)?;
            window = reverse_time(&window);
        }
        other => {
            return Err(CliError::config(format!(
                "transform '{other}' (raw|aot|permutation|tw|all)"
            )))
        }
    }
    let net: Network<f64> = ckpt.to_network()?;
    let class = match class_text.as_str() {
        "auto" => {
            let x = Network::<f64>::batch_from_windows(std::slice::from_ref(&window));
            let out = net.forward(&x, Mode::Eval)?;
            match target {
                ExplainTarget::Pretext(t) => {
                    let row = out.pretext_logits[t].row(0);
                    usize::from(row[1] > row[0])
                }
                ExplainTarget::Downstream => {
                    let row = out.downstream_logits.row(0);
                    har_core::neural::loss::argmax_row(row)
                }
            }
        }
        text => text
            .parse::<usize>()
            .map_err(|_| CliError::config(format!("class '{text}' (auto or index)")))?,
    };
    let map: RelevanceMap = match method.as_str() {
        "lrp-cmp" => {
            let lcfg = LrpConfig { mode: LrpMode::Composite, gamma, ..Default::default() };
            lrp(&net, &window, target, class, &lcfg)?.0
        }
        "lrp-0" => {
            let lcfg = LrpConfig { mode: LrpMode::Zero, gamma, ..Default::default() };
            lrp(&net, &window, target, class, &lcfg)?.0
        }
        "lrp-eps" => {
            let eps = cfg.get_f64("lrp.epsilon", 1e-3)?;
            let lcfg = LrpConfig { mode: LrpMode::Epsilon(eps), gamma, ..Default::default() };
            lrp(&net, &window, target, class, &lcfg)?.0
        }
        "saliency" => saliency(&net, &window, target, class)?,
        "gbp" => guided_backprop(&net, &window, target, class)?,
        "ig" => integrated_gradients(&net, &window, target, class, ig_steps, None)?,
        other => {
            return Err(CliError::config(format!(
                "method '{other}' (lrp-cmp|lrp-0|lrp-eps|saliency|gbp|ig)"
            )))
        }
    };
    let norms = euclidean_norm(&window);
    let scalogram = cwt_morlet(&norms, store.rate() as f64, n_scales, omega0);
    csvio::write_text(&dir.join("relevance.csv"), &csvio::relevance_csv(&map))?;
    csvio::write_text(&dir.join("scalogram.csv"), &csvio::scalogram_csv(&scalogram))?;
    csvio::write_text(&dir.join("panel.svg"), &panel_svg(&window, &scalogram, &map))?;
    println!(
        "explained window {window_idx} ({}) f(x) = {:.4}; relevance sum {:.4}",
        map.method,
        map.output_value,
        map.total()
    );
    Ok(())
}

fn parse_method(text: &str) -> Result<AttributionMethod, CliError> {
    match text {
        "lrp-cmp" => Ok(AttributionMethod::LrpCmp),
        "lrp-0" => Ok(AttributionMethod::Lrp0),
        "lrp-eps" => Ok(AttributionMethod::LrpEpsilon(1e-3)),
        "saliency" => Ok(AttributionMethod::Saliency),
        "gbp" => Ok(AttributionMethod::GuidedBackprop),
        other => Err(CliError::config(format!(
            "method '{other}' (lrp-cmp|lrp-0|lrp-eps|saliency|gbp)"
        ))),
    }
}

/// Labelled evaluation windows for masking: held-out subjects of the
/// pre-training split by default, transformed once.
pub fn masking_eval_set(
    store: &WindowStore,
    split: &str,
    per_subject: usize,
    tcfg: &TransformConfig,
    seed: u64,
) -> Result<Vec<(SignalWindow, PretextLabel)>, CliError> {
    let subjects: Vec<String> = match split {
        "test" => ssl::subject_split(store.subjects(), seed)
            .map_err(CliError::from)?
            .1,
        "all" => store.subjects().to_vec(),
        other => return Err(CliError::config(format!("split '{other}' (test|all)"))),
    };
    let batches = build_eval_batches(store, &subjects, per_subject, tcfg, seed)?;
    Ok(batches
        .into_iter()
        .flat_map(|(ws, ls)| ws.into_iter().zip(ls))
        .collect())
}

pub fn cmd_mask(cfg: &mut RunConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let store = load_store(cfg, "store")?;
    let ckpt = ckpt_io::read_checkpoint(&cfg.require_path("ckpt")?)?;
    let seed = cfg.get_u64("seed", 0)?;
    let method_text = cfg.get_str("method", "lrp-cmp");
    let method = parse_method(&method_text)?;
    let split = cfg.get_str("split", "test");
    let per_subject = cfg.get_usize("eval_windows", 64)?;
    let noise_scale = cfg.get_f64("noise_scale", 1.0)?;
    let tcfg = transform_config(cfg)?;
    finalize(cfg, &dir, "mask")?;
    let eval = masking_eval_set(&store, &split, per_subject, &tcfg, seed)?;
    let net: Network<f32> = ckpt.to_network()?;
    let run = |order: MaskOrder| -> Result<MaskCurve, CliError> {
        Ok(mask_faithfulness(&net, &eval, method, order, noise_scale, seed)?)
    };
    let relevance = run(MaskOrder::Relevance)?;
    let random = run(MaskOrder::Random)?;
    let fwd = run(MaskOrder::TemporalForward)?;
    let rev = run(MaskOrder::TemporalReverse)?;
    let temporal = mean_curve(&fwd, &rev);
    let curves: Vec<(&str, &str, &MaskCurve)> = vec![
        ("relevance", &method_text, &relevance),
        ("random", &method_text, &random),
        ("temporal-forward", &method_text, &fwd),
        ("temporal-reverse", &method_text, &rev),
        ("temporal-mean", &method_text, &temporal),
    ];
    csvio::write_text(&dir.join("mask.csv"), &csvio::mask_csv(&curves))?;
    let mut auc_rows = Vec::new();
    for (order, method, curve) in &curves {
        for (task, name) in TASK_NAMES.iter().enumerate() {
            auc_rows.push((*order, *method, *name, curve.auc(task)));
        }
    }
    csvio::write_text(&dir.join("mask_auc.csv"), &csvio::mask_auc_csv(&auc_rows))?;
    println!(
        "masking AoT AUC: relevance {:.4}, random {:.4}, temporal-mean {:.4}",
        relevance.auc(0),
        random.auc(0),
        temporal.auc(0)
    );
    Ok(())
}

pub fn cmd_ablate(cfg: &mut RunConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let store = load_store(cfg, "store")?;
    let ckpt = ckpt_io::read_checkpoint(&cfg.require_path("ckpt")?)?;
    let seed = cfg.get_u64("seed", 0)?;
    let counts = cfg.get_usize_list("counts", "1,2,4")?;
    let tc = train_cfg(cfg, seed)?;
    finalize(cfg, &dir, "ablate")?;
    // Guard against budgets beyond the store (full-scale counts are legal
    // syntax but cannot run at desk scale).
    let max_train = store.subjects().len().saturating_sub(1);
    if let Some(&too_big) = counts.iter().find(|&&c| c > max_train) {
        return Err(CliError::invariant(format!(
            "requested {too_big} labelled subjects but at most {max_train} are available per fold"
        )));
    }
    let points = label_volume_ablation(&store, &ckpt, &counts, &tc)?;
    csvio::write_text(&dir.join("ablation.csv"), &csvio::ablation_csv(&points))?;
    for p in &points {
        println!(
            "count {:>3} {:>8}: F1 {:.4} +- {:.4}",
            p.subject_count, p.family, p.mean_f1, p.sd_f1
        );
    }
    Ok(())
}

pub fn cmd_export_embeddings(cfg: &mut RunConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let store = load_store(cfg, "store")?;
    let ckpt = ckpt_io::read_checkpoint(&cfg.require_path("ckpt")?)?;
    let _seed = cfg.get_u64("seed", 0)?;
    finalize(cfg, &dir, "export-embeddings")?;
    let net: Network<f32> = ckpt.to_network()?;
    let idxs: Vec<usize> = (0..store.len()).collect();
    let feats = downstream::embed(&net, &store, &idxs);
    let rows: Vec<_> = store
        .records()
        .iter()
        .zip(feats)
        .map(|(r, f)| (r.subject_id.clone(), r.day_index, r.label, f))
        .collect();
    csvio::write_text(&dir.join("embeddings.csv"), &csvio::embeddings_csv(&rows))?;
    println!("exported {} embedding rows", rows.len());
    Ok(())
}
