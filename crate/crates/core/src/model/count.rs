use crate::error::Result;

use super::ModelConfig;

/// Trainable parameter counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCount {
    pub embedding: usize,
    /// `W` and `b` plus LayerNorm gain and bias, per cross layer.
    pub per_layer: usize,
    pub ecn_cross: usize,
    pub lcn_cross: usize,
    pub heads: usize,
}

impl ParamCount {
    /// Everything except the embedding tables.
    pub fn non_embedding(&self) -> usize {
        self.ecn_cross + self.lcn_cross + self.heads
    }

    /// Exponential stack alone with its single head.
    pub fn ecn_only(&self) -> usize {
        self.ecn_cross + self.heads / 2
    }

    pub fn total(&self) -> usize {
        self.embedding + self.non_embedding()
    }
}

/// Closed-form counts: each cross layer holds `D²/2 + D/2` for `W, b` and `D`
/// for gain and bias; the heads hold `2(D + 1)`.
pub fn param_count(config: &ModelConfig, vocab_sizes: &[usize]) -> Result<ParamCount> {
    config.validate()?;
    let width = config.width(vocab_sizes.len());
    let per_layer = width * width / 2 + width / 2 + width;
    Ok(ParamCount {
        embedding: vocab_sizes.iter().map(|s| s * config.d).sum(),
        per_layer,
        ecn_cross: per_layer * config.ecn_depth,
        lcn_cross: per_layer * config.lcn_depth,
        heads: 2 * (width + 1),
    })
}
