//! CSV emitters. All writers produce fully deterministic text (stable row
//! order, shortest-roundtrip float formatting) so reruns are byte-equal.

use std::path::Path;

use har_core::downstream::AblationPoint;
use har_core::explain::cwt::Scalogram;
use har_core::explain::lrp::RelevanceMap;
use har_core::explain::masking::MaskCurve;
use har_core::features::{FeatureVector, FEATURE_NAMES};
use har_core::ssl::HistoryRow;

use crate::error::CliError;

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::io(&format!("writing {}", path.display()), e))
}

pub fn history_csv(rows: &[HistoryRow]) -> String {
    let mut out = String::from("epoch,task,split,accuracy,loss,lr\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.epoch, r.task, r.split, r.accuracy, r.loss, r.lr
        ));
    }
    out
}

/// Per-subject evaluation rows plus mean/sd summary rows, one schema for
/// every model family.
pub fn eval_csv(dataset: &str, rows: &[(usize, String, f64, f64)]) -> String {
    let mut out = String::from("dataset,fold,subject,f1,kappa\n");
    for (fold, subject, f1, kappa) in rows {
        out.push_str(&format!("{dataset},{fold},{subject},{f1},{kappa}\n"));
    }
    let n = rows.len() as f64;
    if n > 0.0 {
        let mean_f1 = rows.iter().map(|r| r.2).sum::<f64>() / n;
        let mean_k = rows.iter().map(|r| r.3).sum::<f64>() / n;
        let sd_f1 = (rows.iter().map(|r| (r.2 - mean_f1).powi(2)).sum::<f64>() / n).sqrt();
        let sd_k = (rows.iter().map(|r| (r.3 - mean_k).powi(2)).sum::<f64>() / n).sqrt();
        out.push_str(&format!("{dataset},summary,mean,{mean_f1},{mean_k}\n"));
        out.push_str(&format!("{dataset},summary,sd,{sd_f1},{sd_k}\n"));
    }
    out
}

pub fn confusion_csv(classes: &[i32], folds: &[(usize, Vec<Vec<usize>>)]) -> String {
    let mut out = String::from("fold,true_class,pred_class,count\n");
    for (fold, matrix) in folds {
        for (ti, row) in matrix.iter().enumerate() {
            for (pi, &count) in row.iter().enumerate() {
                out.push_str(&format!("{fold},{},{},{count}\n", classes[ti], classes[pi]));
            }
        }
    }
    out
}

pub fn features_csv(rows: &[(String, u16, Option<i32>, FeatureVector)]) -> String {
    let mut out = String::from("subject,day,label,");
    out.push_str(&FEATURE_NAMES.join(","));
    out.push('\n');
    for (subject, day, label, fv) in rows {
        let label = label.map(|l| l.to_string()).unwrap_or_else(|| String::from("-1"));
        out.push_str(&format!("{subject},{day},{label}"));
        for v in fv.to_array() {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// Long-format relevance: one row per (t, channel).
pub fn relevance_csv(map: &RelevanceMap) -> String {
    let mut out = format!(
        "# method={} class={} output={}\nt,channel,value\n",
        map.method, map.class, map.output_value
    );
    for t in 0..map.t {
        for c in 0..map.channels {
            out.push_str(&format!("{t},{c},{}\n", map.scores[c * map.t + t]));
        }
    }
    out
}

/// Long-format scalogram: one row per (t, scale).
pub fn scalogram_csv(s: &Scalogram) -> String {
    let mut out = String::from("t,scale_hz,value\n");
    for t in 0..s.t {
        for j in 0..s.n_scales {
            out.push_str(&format!("{t},{},{}\n", s.freqs_hz[j], s.at(j, t)));
        }
    }
    out
}

pub fn embeddings_csv(rows: &[(String, u16, Option<i32>, Vec<f32>)]) -> String {
    let dim = rows.first().map(|r| r.3.len()).unwrap_or(0);
    let mut out = String::from("subject,day,label");
    for i in 0..dim {
        out.push_str(&format!(",f{i}"));
    }
    out.push('\n');
    for (subject, day, label, feats) in rows {
        let label = label.map(|l| l.to_string()).unwrap_or_else(|| String::from("-1"));
        out.push_str(&format!("{subject},{day},{label}"));
        for v in feats {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

pub fn mask_csv(curves: &[(&str, &str, &MaskCurve)]) -> String {
    let mut out = String::from("order,method,task,fraction,accuracy\n");
    for (order, method, curve) in curves {
        for (fi, &frac) in curve.fractions.iter().enumerate() {
            for (task, name) in har_core::transforms::TASK_NAMES.iter().enumerate() {
                out.push_str(&format!(
                    "{order},{method},{name},{frac},{}\n",
                    curve.per_task_accuracy[fi][task]
                ));
            }
        }
    }
    out
}

pub fn mask_auc_csv(rows: &[(&str, &str, &str, f64)]) -> String {
    let mut out = String::from("order,method,task,auc\n");
    for (order, method, task, auc) in rows {
        out.push_str(&format!("{order},{method},{task},{auc}\n"));
    }
    out
}

pub fn ablation_csv(points: &[AblationPoint]) -> String {
    let mut out = String::from("subject_count,family,mean_f1,sd_f1\n");
    for p in points {
        out.push_str(&format!("{},{},{},{}\n", p.subject_count, p.family, p.mean_f1, p.sd_f1));
    }
    out
}
