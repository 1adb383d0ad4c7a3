//! Saliency evaluation: PR curves over 256 thresholds, adaptive-threshold F-measure and MAE.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{DiscError, Result};
use crate::grid::{Mask, SaliencyMap};

pub const BETA2: f64 = 0.3;

/// Salient where `S >= t`.
pub fn binarize(map: &SaliencyMap, t: f64) -> Mask {
    map.map(|&s| f64::from(s) >= t)
}

/// Precision and recall of `pred` against `gt`.
///
/// An empty prediction scores precision 0, except that an empty prediction of an
/// empty ground truth scores (1, 1). Recall of an empty ground truth is 1.
pub fn precision_recall(pred: &Mask, gt: &Mask) -> Result<(f64, f64)> {
    pred.same_dims(gt)?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    if tp + fp == 0 {
        return Ok(if tp + fn_ == 0 { (1.0, 1.0) } else { (0.0, 0.0) });
    }
    let p = tp as f64 / (tp + fp) as f64;
    let r = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
    Ok((p, r))
}

/// Twice the mean value of the map; not clamped to 255.
pub fn adaptive_threshold(map: &SaliencyMap) -> f64 {
    let sum: f64 = map.data().iter().map(|&v| f64::from(v)).sum();
    2.0 * sum / map.len() as f64
}

pub fn f_measure(p: f64, r: f64, beta2: f64) -> f64 {
    let den = beta2 * p + r;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + beta2) * p * r / den
    }
}

/// Mean `|S/255 - gt|`; `gt` is nearest-resized to the map when sizes differ.
pub fn mae(map: &SaliencyMap, gt: &Mask) -> f64 {
    let gt = align(gt, map);
    let sum: f64 = map
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&s, &g)| (f64::from(s) / 255.0 - if g { 1.0 } else { 0.0 }).abs())
        .sum();
    sum / map.len() as f64
}

fn align(gt: &Mask, map: &SaliencyMap) -> Mask {
    if gt.dims() == map.dims() {
        gt.clone()
    } else {
        gt.resize_nearest(map.height(), map.width())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: u8,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScores {
    pub id: String,
    pub precision: f64,
    pub recall: f64,
    /// Diagnostic only; the aggregate F uses mean precision and recall.
    pub f_measure: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_image: Vec<ImageScores>,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub mae: f64,
    pub pr_curve: Vec<PrPoint>,
    pub config: serde_json::Value,
}

/// Scores each map against its mask. Masks are nearest-resized to map resolution.
pub fn evaluate(ids: &[String], maps: &[SaliencyMap], gts: &[Mask], config: serde_json::Value) -> Result<EvalReport> {
    if maps.len() != gts.len() || ids.len() != maps.len() {
        return Err(DiscError::InvalidArgument(format!(
            "{} ids, {} maps and {} masks",
            ids.len(),
            maps.len(),
            gts.len()
        )));
    }
    if maps.is_empty() {
        return Err(DiscError::InvalidArgument("nothing to evaluate".into()));
    }
    let n = maps.len() as f64;
    let mut curve_p = [0.0; 256];
    let mut curve_r = [0.0; 256];
    let mut per_image = Vec::with_capacity(maps.len());
    for ((id, map), gt) in ids.iter().zip(maps).zip(gts) {
        let gt = align(gt, map);
        for t in 0..256 {
            let (p, r) = precision_recall(&binarize(map, t as f64), &gt)?;
            curve_p[t] += p;
            curve_r[t] += r;
        }
        let (p, r) = precision_recall(&binarize(map, adaptive_threshold(map)), &gt)?;
        per_image.push(ImageScores {
            id: id.clone(),
            precision: p,
            recall: r,
            f_measure: f_measure(p, r, BETA2),
            mae: mae(map, &gt),
        });
    }
    let mean = |f: fn(&ImageScores) -> f64| per_image.iter().map(f).sum::<f64>() / n;
    let (precision, recall, mae) = (mean(|s| s.precision), mean(|s| s.recall), mean(|s| s.mae));
    let pr_curve = (0..256)
        .map(|t| PrPoint {
            threshold: t as u8,
            precision: curve_p[t] / n,
            recall: curve_r[t] / n,
        })
        .collect();
    Ok(EvalReport {
        per_image,
        precision,
        recall,
        f_measure: f_measure(precision, recall, BETA2),
        mae,
        pr_curve,
        config,
    })
}

impl EvalReport {
    pub fn pr_csv(&self) -> String {
        let mut s = String::from("threshold,precision,recall\n");
        for p in &self.pr_curve {
            let _ = writeln!(s, "{},{},{}", p.threshold, p.precision, p.recall);
        }
        s
    }

    /// Writes the JSON report and, next to it, `<stem>_pr.csv`.
    pub fn write(&self, json_path: &Path) -> Result<()> {
        if let Some(dir) = json_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| DiscError::io(dir, e))?;
        }
        let json = serde_json::to_string_pretty(self)?;
        fs::write(json_path, json).map_err(|e| DiscError::io(json_path, e))?;
        let csv = pr_csv_path(json_path);
        fs::write(&csv, self.pr_csv()).map_err(|e| DiscError::io(&csv, e))
    }
}

pub fn pr_csv_path(json_path: &Path) -> std::path::PathBuf {
    let stem = json_path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    json_path.with_file_name(format!("{stem}_pr.csv"))
}
