//! AUROC evaluation: the exact Mann-Whitney estimator, the ROC point sweep
//! for figures, the hash-based train/eval split, and the evaluation CSV
//! writers.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CruxError, Result};

fn check_scores(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(CruxError::DimensionMismatch {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(CruxError::OutOfRange("scores must be finite".into()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(CruxError::SingleClass);
    }
    Ok((positives, negatives))
}

/// AUROC via the Mann-Whitney rank-sum estimator: over all
/// (positive, negative) pairs, credit 1 when the positive scores higher and
/// 0.5 on ties. O(N log N).
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (positives, negatives) = check_scores(scores, labels)?;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());

    // Rank sum over positives with average ranks for ties (1-based).
    let mut rank_sum = 0.0;
    let mut i = 0usize;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum += avg_rank;
            }
        }
        i = j + 1;
    }

    let p = positives as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

/// ROC curve points plus the trapezoidal area under them.
#[derive(Debug, Clone, Serialize)]
pub struct RocCurve {
    /// (fpr, tpr) pairs from (0,0) to (1,1), both coordinates non-decreasing.
    pub points: Vec<(f64, f64)>,
    pub auroc: f64,
}

/// Threshold sweep over distinct score values, descending. Ties are grouped
/// so the trapezoidal area equals the Mann-Whitney estimator.
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    let (positives, negatives) = check_scores(scores, labels)?;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = vec![(0.0, 0.0)];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0usize;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if labels[idx] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
        i = j + 1;
    }

    let mut area = 0.0;
    for pair in points.windows(2) {
        let (x1, y1) = pair[0];
        let (x2, y2) = pair[1];
        area += (x2 - x1) * (y1 + y2) / 2.0;
    }
    Ok(RocCurve { points, auroc: area })
}

/// Stable 64-bit hash of (seed, id) for the train/eval split. SHA-256 based
/// so splits are identical across platforms and releases.
pub fn stable_id_hash(seed: u64, id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(id.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// True when the record id falls in the training fraction of the split.
pub fn is_train_record(id: &str, seed: u64, train_fraction: f64) -> bool {
    let h = stable_id_hash(seed, id);
    (h as f64 / u64::MAX as f64) < train_fraction
}

/// One per-record evaluation output row.
#[derive(Debug, Clone, Serialize)]
pub struct EvalRow {
    pub record_id: String,
    pub method_name: String,
    pub score: f64,
    pub label: u8,
}

/// One summary row per (method, dataset).
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub method_name: String,
    pub dataset: String,
    pub auroc: f64,
}

pub fn write_eval_rows(path: &Path, rows: &[EvalRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| CruxError::ConfigInvalid(format!("csv write: {e}")))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| CruxError::ConfigInvalid(format!("csv write: {e}")))?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_roc(path: &Path, method_name: &str, curve: &RocCurve) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "method_name,fpr,tpr")?;
    for (fpr, tpr) in &curve.points {
        writeln!(file, "{method_name},{fpr},{tpr}")?;
    }
    file.flush()?;
    Ok(())
}
