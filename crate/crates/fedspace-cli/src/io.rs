//! File IO: MNIST ingestion, model checkpoints, run outputs, and the
//! run log (the only place timestamps are allowed to appear).

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use fedspace_core::data::{self, LabeledDataset};
use fedspace_core::experiment::Summary;
use fedspace_core::meta::{BoundReport, MetaTrace};
use fedspace_core::nn::{Head, MlpModel};

use crate::config::CliError;

pub fn write_text(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, content)?;
    Ok(())
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))
}

/// Appends a timestamped line to the run log.
pub fn append_log(dir: &Path, line: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    let ts = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let path = dir.join("run.log");
    let mut existing = fs::read_to_string(&path).unwrap_or_default();
    existing.push_str(&format!("[{ts}] {line}\n"));
    fs::write(&path, existing)?;
    Ok(())
}

/// Loads an MNIST-format pair of IDX files (decompressed).
pub fn load_mnist(
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    classes: usize,
) -> Result<LabeledDataset, CliError> {
    let image_bytes = fs::read(images.as_ref()).map_err(|e| {
        CliError::config(format!("cannot read {}: {e}", images.as_ref().display()))
    })?;
    let label_bytes = fs::read(labels.as_ref()).map_err(|e| {
        CliError::config(format!("cannot read {}: {e}", labels.as_ref().display()))
    })?;
    let parsed_images = data::parse_idx_images(&image_bytes)?;
    let parsed_labels = data::parse_idx_labels(&label_bytes)?;
    Ok(data::dataset_from_idx(&parsed_images, &parsed_labels, classes)?)
}

/// Flat model checkpoint: `{"layers":[…],"params":[…]}`, parameters in
/// layer order, row-major weights then biases per layer.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub layers: Vec<usize>,
    pub params: Vec<f64>,
}

pub fn checkpoint_json(model: &MlpModel) -> String {
    let cp = Checkpoint {
        layers: model.layer_sizes().to_vec(),
        params: model.to_flat_params(),
    };
    serde_json::to_string(&cp).expect("checkpoint serializes")
}

pub fn load_checkpoint(json: &str, head: Head) -> Result<MlpModel, CliError> {
    let cp: Checkpoint = serde_json::from_str(json)
        .map_err(|e| CliError::config(format!("bad checkpoint: {e}")))?;
    MlpModel::from_flat_params(&cp.layers, head, &cp.params)
        .map_err(|e| CliError::config(e.to_string()))
}

/// Summary JSON mirroring the accuracy-table metrics.
pub fn summary_json(algorithm: &str, summary: &Summary) -> String {
    let value = serde_json::json!({
        "algorithm": algorithm,
        "final_epoch": summary.final_epoch,
        "acc": nan_to_null(summary.acc),
        "max_min": nan_to_null(summary.max_min),
        "dev": nan_to_null(summary.dev),
        "dev_window": summary.dev_window,
        "dev_window_truncated": summary.dev_window_truncated,
        "top5": summary.top5,
        "per_device_acc": summary.per_device_acc,
        "mean_distill_loss_final": summary.mean_distill_loss_final,
        "total_bytes": summary.total_bytes,
    });
    serde_json::to_string_pretty(&value).expect("summary serializes")
}

/// Bound-constant report JSON; NaNs become nulls so the file stays valid.
pub fn bound_report_json(report: &BoundReport) -> String {
    let value = serde_json::json!({
        "c1": nan_to_null(report.c1),
        "c2": nan_to_null(report.c2),
        "l_m": nan_to_null(report.l_m),
        "kappa2": report.kappa2,
        "lambda2": report.lambda2,
        "epsilon": report.epsilon,
        "eps_valid": report.eps_valid,
        "limit_disagreement": nan_to_null(report.limit_disagreement),
        "limit_best_gap": nan_to_null(report.limit_best_gap),
    });
    serde_json::to_string_pretty(&value).expect("report serializes")
}

/// Function-space run summary.
pub fn meta_summary_json(trace: &MetaTrace, report: &BoundReport) -> String {
    let last = trace.epochs.saturating_sub(1);
    let value = serde_json::json!({
        "algorithm": "meta",
        "epochs": trace.epochs,
        "d_t_final": trace.d_t.get(last),
        "loss_best_final": trace.loss_best.get(last),
        "gap_final": trace.loss_best.get(last).map(|b| b - trace.target_loss),
        "eps_valid": trace.eps_valid,
        "kappa2": trace.kappa2,
        "lambda2": trace.lambda2,
        "l_m": nan_to_null(trace.l_m),
        "c1": nan_to_null(trace.c1),
        "kl_clamp_total": trace.kl_clamps.iter().sum::<usize>(),
        "limit_disagreement": nan_to_null(report.limit_disagreement),
        "limit_best_gap": nan_to_null(report.limit_best_gap),
    });
    serde_json::to_string_pretty(&value).expect("summary serializes")
}

fn nan_to_null(v: f64) -> Option<f64> {
    if v.is_finite() {
        Some(v)
    } else {
        None
    }
}

/// Telemetry lines `{"epoch":…,"device":…,"outputs_digest":…}`.
pub fn digests_jsonl(digests: &[(usize, usize, u64)]) -> String {
    let mut out = String::new();
    for (epoch, device, digest) in digests {
        out.push_str(&format!(
            "{{\"epoch\":{epoch},\"device\":{device},\"outputs_digest\":{digest}}}\n"
        ));
    }
    out
}
