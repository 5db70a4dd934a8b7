//! Fusing cross network (FCN) for click-through-rate prediction.
//!
//! Two explicit cross stacks share a reshaped embedding input: a linear stack
//! whose interaction order grows by one per layer and an exponential stack
//! whose order doubles per layer. Each layer gates half of its cross vector
//! through a LayerNorm-driven self mask. The two sigmoid heads are averaged and
//! trained with an adaptive three-term cross-entropy. Gradients are derived by
//! hand and audited against finite differences in [`verification`].

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod features;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod objective;
pub mod registry;
pub mod training;
pub mod verification;

pub use error::{FcnError, Result};
