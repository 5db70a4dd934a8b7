//! The fusing cross network: embedding reshape, the two cross stacks, the
//! self mask, the fused heads, the hand-written backward pass, parameter
//! accounting, checkpoints and field-wise inspection.

mod checkpoint;
mod count;
mod inspect;
pub mod mask;
mod network;
mod params;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use count::{param_count, ParamCount};
pub use inspect::{field_importance, FieldImportance};
pub use mask::{masks, self_mask, MaskStats, SelfMask};
pub use network::{
    backward, cross_layer_forward, embed_reshape, forward, head_logits_from_x1, Dropout, ForwardOutput,
    ForwardTrace, LayerTrace, SampleTrace,
};
pub use params::{CrossLayerParams, Gradients, HeadParams, ModelParams};

use crate::error::{FcnError, Result};
use crate::registry::Handle;

/// Which cross stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Exponential stack: each layer multiplies its own input, doubling the
    /// interaction order.
    Deep,
    /// Linear stack: each layer multiplies the first-order input, adding one
    /// to the interaction order.
    Shallow,
}

impl Branch {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "ecn" | "deep" => Ok(Branch::Deep),
            "lcn" | "shallow" => Ok(Branch::Shallow),
            other => Err(FcnError::Config(format!("unknown branch `{other}` (expected ecn or lcn)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Branch::Deep => "ecn",
            Branch::Shallow => "lcn",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Embedding width per field; must be even so it splits into two views.
    pub d: usize,
    pub lcn_depth: usize,
    pub ecn_depth: usize,
    pub mask: Handle<dyn SelfMask>,
    pub dropout_rate: f64,
    pub ln_epsilon: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 16,
            lcn_depth: 2,
            ecn_depth: 3,
            mask: masks().get("paper").expect("paper mask is registered"),
            dropout_rate: 0.1,
            ln_epsilon: 1e-5,
            seed: 42,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 || !self.d.is_multiple_of(2) {
            return Err(FcnError::Config(format!("d must be even and >= 2, got {}", self.d)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(FcnError::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if !(self.ln_epsilon > 0.0) {
            return Err(FcnError::Config(format!(
                "ln_epsilon must be positive, got {}",
                self.ln_epsilon
            )));
        }
        Ok(())
    }

    /// `D = fields · d`.
    pub fn width(&self, fields: usize) -> usize {
        fields * self.d
    }

    pub fn with_mask(mut self, name: &str) -> Result<Self> {
        self.mask = masks().get(name)?;
        Ok(self)
    }
}
