//! A deliberately plain second implementation of the forward pass, written
//! from the defining formulas with explicit index loops. The oracles evaluate
//! losses and polynomials through this path so that they never reuse the
//! code they audit.

use crate::model::{CrossLayerParams, ModelParams};
use crate::numerics::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskRule {
    LayerNorm,
    Relu,
    Identity,
}

impl MaskRule {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "paper" => Some(MaskRule::LayerNorm),
            "no_ln" => Some(MaskRule::Relu),
            "identity" => Some(MaskRule::Identity),
            _ => None,
        }
    }
}

/// Records every branch decision taken during a forward pass: ReLU gates and
/// whether the LayerNorm std was clamped. Two evaluations with equal patterns
/// lie on the same smooth piece of the network.
pub type Pattern = Vec<bool>;

pub fn mask(rule: MaskRule, c: &[f64], gain: &[f64], beta: &[f64], eps: f64, pattern: &mut Pattern) -> Vec<f64> {
    let n = c.len();
    match rule {
        MaskRule::Identity => c.to_vec(),
        MaskRule::Relu => {
            let mut out = vec![0.0; n];
            for i in 0..n {
                let open = c[i] > 0.0;
                pattern.push(open);
                if open {
                    out[i] = c[i] * c[i];
                }
            }
            out
        }
        MaskRule::LayerNorm => {
            // shifted by c[0] so that a constant vector has an exact mean
            let mut shift = 0.0;
            for &v in c {
                shift += v - c[0];
            }
            let mean = c[0] + shift / n as f64;
            let mut var = 0.0;
            for &v in c {
                var += (v - mean) * (v - mean);
            }
            var /= n as f64;
            let sd = var.sqrt();
            let clamped = sd < eps;
            pattern.push(clamped);
            let denom = if clamped { eps } else { sd };
            let mut out = vec![0.0; n];
            for i in 0..n {
                let z = gain[i] * (c[i] - mean) / denom + beta[i];
                pattern.push(z > 0.0);
                if z > 0.0 {
                    out[i] = c[i] * z;
                }
            }
            out
        }
    }
}

pub fn first_order(ids: &[u32], params: &ModelParams) -> Vec<f64> {
    let f = params.embeddings.len();
    let d = params.embeddings[0].cols();
    let half = d / 2;
    let mut x = vec![0.0; f * d];
    for i in 0..f {
        for j in 0..half {
            x[i * half + j] = params.embeddings[i].get(ids[i] as usize, j);
            x[f * half + i * half + j] = params.embeddings[i].get(ids[i] as usize, half + j);
        }
    }
    x
}

fn layer(
    x: &[f64],
    anchor: &[f64],
    p: &CrossLayerParams,
    rule: MaskRule,
    eps: f64,
    pattern: &mut Pattern,
) -> Vec<f64> {
    let width = x.len();
    let half = width / 2;
    let mut c = vec![0.0; half];
    for i in 0..half {
        let mut s = p.b[i];
        for j in 0..width {
            s += p.w.get(i, j) * x[j];
        }
        c[i] = s;
    }
    let m = mask(rule, &c, &p.gain, &p.beta, eps, pattern);
    let mut out = vec![0.0; width];
    for k in 0..width {
        let gate = if k < half { c[k] } else { m[k - half] };
        out[k] = anchor[k] * gate + x[k];
    }
    out
}

/// Output of the exponential stack (each layer gates its own input).
pub fn deep_stack(x1: &[f64], layers: &[CrossLayerParams], rule: MaskRule, eps: f64, pattern: &mut Pattern) -> Vec<f64> {
    let mut x = x1.to_vec();
    for p in layers {
        let anchor = x.clone();
        x = layer(&x, &anchor, p, rule, eps, pattern);
    }
    x
}

/// Output of the linear stack (every layer gates the first-order input).
pub fn shallow_stack(
    x1: &[f64],
    layers: &[CrossLayerParams],
    rule: MaskRule,
    eps: f64,
    pattern: &mut Pattern,
) -> Vec<f64> {
    let mut x = x1.to_vec();
    for p in layers {
        x = layer(&x, x1, p, rule, eps, pattern);
    }
    x
}

fn affine(w: &[f64], b: f64, x: &[f64]) -> f64 {
    let mut s = b;
    for i in 0..x.len() {
        s += w[i] * x[i];
    }
    s
}

/// Head logits `(deep, shallow)` from a first-order vector.
pub fn logits(x1: &[f64], params: &ModelParams, rule: MaskRule, eps: f64, pattern: &mut Pattern) -> (f64, f64) {
    let xd = deep_stack(x1, &params.ecn_layers, rule, eps, pattern);
    let xs = shallow_stack(x1, &params.lcn_layers, rule, eps, pattern);
    (
        affine(&params.heads.w_deep, params.heads.b_deep, &xd),
        affine(&params.heads.w_shallow, params.heads.b_shallow, &xs),
    )
}

/// `(ŷ_D, ŷ_S)` for one row.
pub fn predict(ids: &[u32], params: &ModelParams, rule: MaskRule, eps: f64, pattern: &mut Pattern) -> (f64, f64) {
    let x1 = first_order(ids, params);
    let (zd, zs) = logits(&x1, params, rule, eps, pattern);
    (sigmoid(zd), sigmoid(zs))
}

fn xent(p: f64, y: u8) -> f64 {
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Composite loss with the branch weights held at `(w_deep, w_shallow)`.
pub fn frozen_tri_loss(
    rows: &[Vec<u32>],
    labels: &[u8],
    params: &ModelParams,
    rule: MaskRule,
    eps: f64,
    weights: (f64, f64),
    pattern: &mut Pattern,
) -> f64 {
    let (mut l, mut ld, mut ls) = (0.0, 0.0, 0.0);
    for (ids, &y) in rows.iter().zip(labels) {
        let (pd, ps) = predict(ids, params, rule, eps, pattern);
        l += xent(0.5 * (pd + ps), y);
        ld += xent(pd, y);
        ls += xent(ps, y);
    }
    let n = rows.len() as f64;
    (l + weights.0 * ld + weights.1 * ls) / n
}
