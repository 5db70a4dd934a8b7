//! Cross-entropy losses on the fused and per-branch predictions.
//!
//! The composite loss adds each branch's own cross-entropy, weighted by how
//! much worse that branch does than the fused prediction:
//!
//! ```text
//! L_tri = L + w_D·L_D + w_S·L_S,   w_X = max(0, L_X − L)
//! ```
//!
//! The weights are treated as constants when differentiating.

use std::sync::{Arc, OnceLock};

use crate::error::{FcnError, Result};
use crate::registry::{Named, Registry};

pub const CLIP_EPSILON: f64 = 1e-7;

fn clip(p: f64, eps: f64) -> f64 {
    p.clamp(eps, 1.0 - eps)
}

fn check_lengths(op: &'static str, preds: &[f64], labels: &[u8]) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(FcnError::Shape {
            op,
            left: format!("{} predictions", preds.len()),
            right: format!("{} labels", labels.len()),
        });
    }
    if preds.is_empty() {
        return Err(FcnError::Data(format!("{op}: empty batch")));
    }
    Ok(())
}

/// Mean binary cross-entropy with predictions clipped to `[eps, 1 − eps]`.
pub fn bce(preds: &[f64], labels: &[u8], clip_epsilon: f64) -> Result<f64> {
    check_lengths("bce", preds, labels)?;
    let mut sum = 0.0;
    for (&p, &y) in preds.iter().zip(labels) {
        if !p.is_finite() {
            return Err(FcnError::NonFinite(format!("bce prediction {p}")));
        }
        let p = clip(p, clip_epsilon);
        sum -= if y == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(sum / preds.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriLossReport {
    pub primary_loss: f64,
    pub deep_loss: f64,
    pub shallow_loss: f64,
    pub w_deep: f64,
    pub w_shallow: f64,
    pub total: f64,
    pub n: usize,
}

pub fn tri_bce(y: &[f64], y_deep: &[f64], y_shallow: &[f64], labels: &[u8], clip_epsilon: f64) -> Result<TriLossReport> {
    let primary_loss = bce(y, labels, clip_epsilon)?;
    let deep_loss = bce(y_deep, labels, clip_epsilon)?;
    let shallow_loss = bce(y_shallow, labels, clip_epsilon)?;
    let w_deep = (deep_loss - primary_loss).max(0.0);
    let w_shallow = (shallow_loss - primary_loss).max(0.0);
    Ok(TriLossReport {
        primary_loss,
        deep_loss,
        shallow_loss,
        w_deep,
        w_shallow,
        total: primary_loss + w_deep * deep_loss + w_shallow * shallow_loss,
        n: labels.len(),
    })
}

/// `(∂L_tri/∂ŷ_D, ∂L_tri/∂ŷ_S)` per sample, with the report's weights held
/// fixed. Denominators use the clipped predictions.
pub fn tri_bce_grads(
    y: &[f64],
    y_deep: &[f64],
    y_shallow: &[f64],
    labels: &[u8],
    report: &TriLossReport,
    clip_epsilon: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = labels.len() as f64;
    let mut d_deep = Vec::with_capacity(labels.len());
    let mut d_shallow = Vec::with_capacity(labels.len());
    for i in 0..labels.len() {
        let p = clip(y[i], clip_epsilon);
        let pd = clip(y_deep[i], clip_epsilon);
        let ps = clip(y_shallow[i], clip_epsilon);
        if labels[i] == 1 {
            d_deep.push(-(0.5 / p + report.w_deep / pd) / n);
            d_shallow.push(-(0.5 / p + report.w_shallow / ps) / n);
        } else {
            d_deep.push((0.5 / (1.0 - p) + report.w_deep / (1.0 - pd)) / n);
            d_shallow.push((0.5 / (1.0 - p) + report.w_shallow / (1.0 - ps)) / n);
        }
    }
    (d_deep, d_shallow)
}

/// What the optimizer minimizes.
pub trait TrainingObjective: Named + Send + Sync {
    fn loss(&self, y: &[f64], y_deep: &[f64], y_shallow: &[f64], labels: &[u8]) -> Result<TriLossReport>;

    fn grads(
        &self,
        y: &[f64],
        y_deep: &[f64],
        y_shallow: &[f64],
        labels: &[u8],
        report: &TriLossReport,
    ) -> (Vec<f64>, Vec<f64>);
}

/// The adaptive three-term loss.
pub struct TriBce;

impl Named for TriBce {
    fn name(&self) -> &'static str {
        "tri"
    }
}

impl TrainingObjective for TriBce {
    fn loss(&self, y: &[f64], y_deep: &[f64], y_shallow: &[f64], labels: &[u8]) -> Result<TriLossReport> {
        tri_bce(y, y_deep, y_shallow, labels, CLIP_EPSILON)
    }

    fn grads(
        &self,
        y: &[f64],
        y_deep: &[f64],
        y_shallow: &[f64],
        labels: &[u8],
        report: &TriLossReport,
    ) -> (Vec<f64>, Vec<f64>) {
        tri_bce_grads(y, y_deep, y_shallow, labels, report, CLIP_EPSILON)
    }
}

/// Cross-entropy of the fused prediction only. Branch losses are still
/// reported, but their weights are zero.
pub struct PlainBce;

impl Named for PlainBce {
    fn name(&self) -> &'static str {
        "plain"
    }
}

impl TrainingObjective for PlainBce {
    fn loss(&self, y: &[f64], y_deep: &[f64], y_shallow: &[f64], labels: &[u8]) -> Result<TriLossReport> {
        let r = tri_bce(y, y_deep, y_shallow, labels, CLIP_EPSILON)?;
        Ok(TriLossReport {
            w_deep: 0.0,
            w_shallow: 0.0,
            total: r.primary_loss,
            ..r
        })
    }

    fn grads(
        &self,
        y: &[f64],
        y_deep: &[f64],
        y_shallow: &[f64],
        labels: &[u8],
        report: &TriLossReport,
    ) -> (Vec<f64>, Vec<f64>) {
        let unweighted = TriLossReport {
            w_deep: 0.0,
            w_shallow: 0.0,
            ..*report
        };
        tri_bce_grads(y, y_deep, y_shallow, labels, &unweighted, CLIP_EPSILON)
    }
}

pub fn objectives() -> &'static Registry<dyn TrainingObjective> {
    static REG: OnceLock<Registry<dyn TrainingObjective>> = OnceLock::new();
    REG.get_or_init(|| {
        Registry::<dyn TrainingObjective>::new("loss")
            .with(Arc::new(TriBce))
            .with(Arc::new(PlainBce))
    })
}
