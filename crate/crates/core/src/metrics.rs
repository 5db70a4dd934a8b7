//! Ranking and calibration metrics.

use std::fmt;

use crate::error::{FcnError, Result};
use crate::objective::{bce, CLIP_EPSILON};

/// Mann-Whitney AUC with average ranks for ties.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(FcnError::Shape {
            op: "auc",
            left: format!("{} scores", scores.len()),
            right: format!("{} labels", labels.len()),
        });
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 {
        return Err(FcnError::DegenerateClass { class: "negative" });
    }
    if neg == 0 {
        return Err(FcnError::DegenerateClass { class: "positive" });
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(FcnError::NonFinite(format!("auc score {s}")));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));

    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let avg = (i + 1 + j) as f64 / 2.0;
        let tied_pos = order[i..j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum += avg * tied_pos as f64;
        i = j;
    }
    let p = pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * neg as f64))
}

/// Mean clipped cross-entropy; same contract as [`bce`].
pub fn logloss(scores: &[f64], labels: &[u8], clip_epsilon: f64) -> Result<f64> {
    bce(scores, labels, clip_epsilon)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub auc: f64,
    pub logloss: f64,
    pub n: usize,
    pub positives: usize,
}

impl fmt::Display for EvalResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "auc={:.6} logloss={:.6} n={}", self.auc, self.logloss, self.n)
    }
}

/// Collects scores shard by shard; the rank pass happens once in
/// [`ScoreBuffer::finish`].
#[derive(Debug, Clone, Default)]
pub struct ScoreBuffer {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl ScoreBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn extend(&mut self, scores: &[f64], labels: &[u8]) {
        self.scores.extend_from_slice(scores);
        self.labels.extend_from_slice(labels);
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn logloss(&self) -> Result<f64> {
        logloss(&self.scores, &self.labels, CLIP_EPSILON)
    }

    pub fn finish(&self) -> Result<EvalResult> {
        let logloss = self.logloss()?;
        Ok(EvalResult {
            auc: auc(&self.scores, &self.labels)?,
            logloss,
            n: self.scores.len(),
            positives: self.labels.iter().filter(|&&y| y == 1).count(),
        })
    }
}
