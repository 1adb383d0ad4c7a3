//! Per-pixel classification losses for the embedded output classifiers.

use serde::{Deserialize, Serialize};

use crate::error::{DiscError, Result};
use crate::grid::Grid;

/// Per-pixel labels in {−1, +1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMap(Grid<f64>);

impl LabelMap {
    pub fn new(grid: Grid<f64>) -> Result<Self> {
        check_pm1(grid.data())?;
        Ok(LabelMap(grid))
    }

    pub fn grid(&self) -> &Grid<f64> {
        &self.0
    }

    pub fn values(&self) -> &[f64] {
        self.0.data()
    }
}

fn check_pm1(labels: &[f64]) -> Result<()> {
    match labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
        Some(y) => Err(DiscError::InvalidArgument(format!("label {y} is not ±1"))),
        None => Ok(()),
    }
}

fn check_len(scores: &[f64], labels: &[f64]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(DiscError::Shape(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    SquaredHinge,
    CrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub c_reg: f64,
    pub variant: LossVariant,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            c_reg: 1.0,
            variant: LossVariant::SquaredHinge,
        }
    }
}

impl LossConfig {
    /// Loss and score gradient against ±1 labels, summed over pixels.
    pub fn evaluate(&self, scores: &[f64], labels: &LabelMap) -> Result<(f64, Vec<f64>)> {
        if !(self.c_reg > 0.0) {
            return Err(DiscError::InvalidArgument("c_reg must be positive".into()));
        }
        match self.variant {
            LossVariant::SquaredHinge => squared_hinge(scores, labels.values(), self.c_reg),
            LossVariant::CrossEntropy => {
                let y01: Vec<f64> = labels.values().iter().map(|&y| (y + 1.0) / 2.0).collect();
                let (l, mut g) = sigmoid_cross_entropy(scores, &y01)?;
                g.iter_mut().for_each(|v| *v *= self.c_reg);
                Ok((self.c_reg * l, g))
            }
        }
    }

    /// Maps a raw score to the signed scale where ±1 are the class extremes.
    pub fn signed_score(&self, s: f64) -> f64 {
        match self.variant {
            LossVariant::SquaredHinge => s,
            LossVariant::CrossEntropy => 2.0 * sigmoid(s) - 1.0,
        }
    }
}

/// `c·Σ max(1 − y·s, 0)²` and its gradient `−2c·y·max(1 − y·s, 0)`.
pub fn squared_hinge(scores: &[f64], labels: &[f64], c_reg: f64) -> Result<(f64, Vec<f64>)> {
    check_len(scores, labels)?;
    check_pm1(labels)?;
    let mut loss = 0.0;
    let grad = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| {
            let margin = (1.0 - y * s).max(0.0);
            loss += margin * margin;
            -2.0 * c_reg * y * margin
        })
        .collect();
    Ok((c_reg * loss, grad))
}

pub fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `−Σ [y·log σ(s) + (1−y)·log(1−σ(s))]` with gradient `σ(s) − y`.
pub fn sigmoid_cross_entropy(scores: &[f64], labels01: &[f64]) -> Result<(f64, Vec<f64>)> {
    check_len(scores, labels01)?;
    if let Some(y) = labels01.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(DiscError::InvalidArgument(format!("label {y} is not 0 or 1")));
    }
    let mut loss = 0.0;
    let grad = scores
        .iter()
        .zip(labels01)
        .map(|(&s, &y)| {
            loss += s.max(0.0) - s * y + (-s.abs()).exp().ln_1p();
            sigmoid(s) - y
        })
        .collect();
    Ok((loss, grad))
}
