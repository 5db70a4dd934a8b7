//! Self-mask strategies applied to the cross vector.
//!
//! `paper` gates `c` by `max(0, LayerNorm(c))`, which zeroes roughly half of
//! the entries for a symmetric `c`. `no_ln` drops the normalization and gates
//! by `max(0, c)`. `identity` passes `c` through and exists for the
//! interaction-order probe.

use std::sync::{Arc, OnceLock};

use crate::error::{FcnError, Result};
use crate::registry::{Handle, Named, Registry};

/// Per-call statistics kept for the backward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MaskStats {
    pub mean: f64,
    /// Denominator actually used: `max(std, ln_epsilon)`.
    pub std: f64,
    /// True when the population std fell below `ln_epsilon`.
    pub clamped: bool,
    pub normalized: Vec<f64>,
    /// Which ReLU gates were open.
    pub active: Vec<bool>,
    /// ReLU output multiplying `c`.
    pub gate: Vec<f64>,
}

pub trait SelfMask: Named + Send + Sync {
    /// Persistent code used by checkpoints.
    fn code(&self) -> u32;

    /// Writes `Mask(c)` into `out` and returns the statistics backward needs.
    fn forward(&self, c: &[f64], gain: &[f64], bias: &[f64], eps: f64, out: &mut [f64]) -> MaskStats;

    /// Accumulates gradients of `Mask(c)` given `d_out` into `d_c`, `d_gain`
    /// and `d_bias`.
    #[allow(clippy::too_many_arguments)]
    fn backward(
        &self,
        c: &[f64],
        gain: &[f64],
        stats: &MaskStats,
        d_out: &[f64],
        d_c: &mut [f64],
        d_gain: &mut [f64],
        d_bias: &mut [f64],
    );
}

pub struct LayerNormMask;

impl Named for LayerNormMask {
    fn name(&self) -> &'static str {
        "paper"
    }
}

impl SelfMask for LayerNormMask {
    fn code(&self) -> u32 {
        0
    }

    fn forward(&self, c: &[f64], gain: &[f64], bias: &[f64], eps: f64, out: &mut [f64]) -> MaskStats {
        let n = c.len() as f64;
        let mean = c.iter().sum::<f64>() / n;
        let var = c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let raw_std = var.sqrt();
        let clamped = raw_std < eps;
        let std = if clamped { eps } else { raw_std };
        let mut normalized = Vec::with_capacity(c.len());
        let mut active = Vec::with_capacity(c.len());
        let mut gate = Vec::with_capacity(c.len());
        for i in 0..c.len() {
            let norm = (c[i] - mean) / std;
            let z = gain[i] * norm + bias[i];
            let open = z > 0.0;
            let g = if open { z } else { 0.0 };
            out[i] = c[i] * g;
            normalized.push(norm);
            active.push(open);
            gate.push(g);
        }
        MaskStats {
            mean,
            std,
            clamped,
            normalized,
            active,
            gate,
        }
    }

    fn backward(
        &self,
        c: &[f64],
        gain: &[f64],
        stats: &MaskStats,
        d_out: &[f64],
        d_c: &mut [f64],
        d_gain: &mut [f64],
        d_bias: &mut [f64],
    ) {
        let h = c.len();
        let mut d_norm = vec![0.0; h];
        for i in 0..h {
            if !stats.active[i] {
                continue;
            }
            // m = c · relu(z), z = g·norm + beta
            d_c[i] += d_out[i] * stats.gate[i];
            let dz = d_out[i] * c[i];
            d_gain[i] += dz * stats.normalized[i];
            d_bias[i] += dz;
            d_norm[i] = dz * gain[i];
        }
        let n = h as f64;
        let mean_dn = d_norm.iter().sum::<f64>() / n;
        if stats.clamped {
            for i in 0..h {
                d_c[i] += (d_norm[i] - mean_dn) / stats.std;
            }
        } else {
            let mean_dn_n = d_norm
                .iter()
                .zip(&stats.normalized)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n;
            for i in 0..h {
                d_c[i] += (d_norm[i] - mean_dn - stats.normalized[i] * mean_dn_n) / stats.std;
            }
        }
    }
}

pub struct ReluMask;

impl Named for ReluMask {
    fn name(&self) -> &'static str {
        "no_ln"
    }
}

impl SelfMask for ReluMask {
    fn code(&self) -> u32 {
        1
    }

    fn forward(&self, c: &[f64], _gain: &[f64], _bias: &[f64], _eps: f64, out: &mut [f64]) -> MaskStats {
        let active: Vec<bool> = c.iter().map(|&v| v > 0.0).collect();
        let gate: Vec<f64> = c.iter().map(|&v| v.max(0.0)).collect();
        for i in 0..c.len() {
            out[i] = c[i] * gate[i];
        }
        MaskStats {
            active,
            gate,
            ..MaskStats::default()
        }
    }

    fn backward(
        &self,
        c: &[f64],
        _gain: &[f64],
        stats: &MaskStats,
        d_out: &[f64],
        d_c: &mut [f64],
        _d_gain: &mut [f64],
        _d_bias: &mut [f64],
    ) {
        for i in 0..c.len() {
            if stats.active[i] {
                d_c[i] += d_out[i] * 2.0 * c[i];
            }
        }
    }
}

pub struct IdentityMask;

impl Named for IdentityMask {
    fn name(&self) -> &'static str {
        "identity"
    }
}

impl SelfMask for IdentityMask {
    fn code(&self) -> u32 {
        2
    }

    fn forward(&self, c: &[f64], _gain: &[f64], _bias: &[f64], _eps: f64, out: &mut [f64]) -> MaskStats {
        out.copy_from_slice(c);
        MaskStats::default()
    }

    fn backward(
        &self,
        _c: &[f64],
        _gain: &[f64],
        _stats: &MaskStats,
        d_out: &[f64],
        d_c: &mut [f64],
        _d_gain: &mut [f64],
        _d_bias: &mut [f64],
    ) {
        for (dc, d) in d_c.iter_mut().zip(d_out) {
            *dc += d;
        }
    }
}

pub fn masks() -> &'static Registry<dyn SelfMask> {
    static REG: OnceLock<Registry<dyn SelfMask>> = OnceLock::new();
    REG.get_or_init(|| {
        Registry::<dyn SelfMask>::new("mask mode")
            .with(Arc::new(LayerNormMask))
            .with(Arc::new(ReluMask))
            .with(Arc::new(IdentityMask))
    })
}

pub fn mask_by_code(code: u32) -> Result<Handle<dyn SelfMask>> {
    masks()
        .iter()
        .find(|m| m.code() == code)
        .map(|m| Handle(Arc::clone(m)))
        .ok_or_else(|| FcnError::Malformed(format!("unknown mask mode code {code}")))
}

/// Applies `mask` to `c`, returning the masked vector and its statistics.
pub fn self_mask(
    c: &[f64],
    gain: &[f64],
    bias: &[f64],
    mask: &dyn SelfMask,
    ln_epsilon: f64,
) -> (Vec<f64>, MaskStats) {
    let mut out = vec![0.0; c.len()];
    let stats = mask.forward(c, gain, bias, ln_epsilon, &mut out);
    (out, stats)
}
