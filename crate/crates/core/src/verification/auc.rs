//! Exhaustive pairwise AUC.

use crate::error::{FcnError, Result};

pub const MAX_ORACLE_ROWS: usize = 5000;

/// Fraction of (positive, negative) pairs ordered correctly, ties counting
/// one half. Quadratic in `n`.
pub fn pairwise_auc_oracle(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(FcnError::Shape {
            op: "pairwise_auc_oracle",
            left: format!("{} scores", scores.len()),
            right: format!("{} labels", labels.len()),
        });
    }
    if scores.len() > MAX_ORACLE_ROWS {
        return Err(FcnError::Data(format!(
            "pairwise oracle is limited to {MAX_ORACLE_ROWS} rows, got {}",
            scores.len()
        )));
    }
    let pos: Vec<f64> = (0..scores.len()).filter(|&i| labels[i] == 1).map(|i| scores[i]).collect();
    let neg: Vec<f64> = (0..scores.len()).filter(|&i| labels[i] != 1).map(|i| scores[i]).collect();
    if pos.is_empty() {
        return Err(FcnError::DegenerateClass { class: "negative" });
    }
    if neg.is_empty() {
        return Err(FcnError::DegenerateClass { class: "positive" });
    }
    // counted in halves so the sum is an exact integer
    let mut halves: u64 = 0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                halves += 2;
            } else if p == n {
                halves += 1;
            }
        }
    }
    Ok(halves as f64 / (2.0 * pos.len() as f64 * neg.len() as f64))
}
