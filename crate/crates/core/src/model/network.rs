//! Forward and backward passes.
//!
//! Per sample, with `H = D/2`:
//!
//! ```text
//! c     = W·x_in + b                      (H)
//! gate  = [c || Mask(c)] ⊙ dropout        (D)
//! x_out = anchor ⊙ gate + x_in            (D)
//! ```
//!
//! The deep stack uses `anchor = x_in`, the shallow stack `anchor = x_1`.
//! Heads are `σ(w·x + b)` on each stack's output and the fused prediction is
//! their mean.

use crate::error::{FcnError, Result};
use crate::features::EncodedBatch;
use crate::numerics::{dot, sigmoid, Rng};

use super::mask::{MaskStats, SelfMask};
use super::params::{CrossLayerParams, Gradients, ModelParams};
use super::{Branch, ModelConfig};

/// Inverted dropout on the gate, active only in training mode.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut Rng,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub x_in: Vec<f64>,
    pub c: Vec<f64>,
    pub masked: Vec<f64>,
    pub stats: MaskStats,
    /// Surviving gate entries; `None` when dropout was off.
    pub keep: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleTrace {
    pub ids: Vec<u32>,
    pub x1: Vec<f64>,
    pub ecn: Vec<LayerTrace>,
    pub lcn: Vec<LayerTrace>,
    pub x_ecn: Vec<f64>,
    pub x_lcn: Vec<f64>,
    pub logit_deep: f64,
    pub logit_shallow: f64,
    pub y_deep: f64,
    pub y_shallow: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub dropout_rate: f64,
    pub samples: Vec<SampleTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub y: Vec<f64>,
    pub y_deep: Vec<f64>,
    pub y_shallow: Vec<f64>,
    /// Present iff the forward ran in training mode.
    pub trace: Option<ForwardTrace>,
}

/// Looks up each field's embedding and lays the halves out as
/// `[e_1a, …, e_fa, e_1b, …, e_fb]`.
pub fn embed_reshape(ids: &[u32], params: &ModelParams) -> Result<Vec<f64>> {
    let f = params.num_fields();
    if ids.len() != f {
        return Err(FcnError::Shape {
            op: "embed_reshape",
            left: format!("{f} fields"),
            right: format!("{} ids", ids.len()),
        });
    }
    let d = params.embedding_dim();
    let half = d / 2;
    let width = f * d;
    let mut x = vec![0.0; width];
    for (i, (&id, table)) in ids.iter().zip(&params.embeddings).enumerate() {
        if id as usize >= table.rows() {
            return Err(FcnError::IdOutOfRange {
                field: i,
                id,
                size: table.rows(),
            });
        }
        let e = table.row(id as usize);
        x[i * half..(i + 1) * half].copy_from_slice(&e[..half]);
        x[width / 2 + i * half..width / 2 + (i + 1) * half].copy_from_slice(&e[half..]);
    }
    Ok(x)
}

/// Scatters a gradient on `x_1` back onto embedding rows.
fn scatter_reshape(ids: &[u32], dx1: &[f64], d: usize, grads: &mut Gradients) {
    let half = d / 2;
    let width = dx1.len();
    for (i, &id) in ids.iter().enumerate() {
        let row = grads.embedding_row(i, id, d);
        for j in 0..half {
            row[j] += dx1[i * half + j];
            row[half + j] += dx1[width / 2 + i * half + j];
        }
    }
}

pub fn cross_layer_forward(
    x_in: &[f64],
    anchor: &[f64],
    layer: &CrossLayerParams,
    mask: &dyn SelfMask,
    ln_epsilon: f64,
    dropout: Option<&mut Dropout<'_>>,
) -> Result<(Vec<f64>, LayerTrace)> {
    let width = x_in.len();
    if anchor.len() != width || layer.w.cols() != width || layer.w.rows() * 2 != width {
        return Err(FcnError::Shape {
            op: "cross_layer_forward",
            left: format!("weight {}x{}", layer.w.rows(), layer.w.cols()),
            right: format!("input {} / anchor {}", width, anchor.len()),
        });
    }
    Ok(layer_forward(x_in, anchor, layer, mask, ln_epsilon, dropout))
}

fn layer_forward(
    x_in: &[f64],
    anchor: &[f64],
    layer: &CrossLayerParams,
    mask: &dyn SelfMask,
    ln_epsilon: f64,
    dropout: Option<&mut Dropout<'_>>,
) -> (Vec<f64>, LayerTrace) {
    let width = x_in.len();
    let half = width / 2;
    let mut c = vec![0.0; half];
    layer.w.matvec_into(x_in, &mut c);
    for (ci, bi) in c.iter_mut().zip(&layer.b) {
        *ci += bi;
    }
    let mut masked = vec![0.0; half];
    let stats = mask.forward(&c, &layer.gain, &layer.beta, ln_epsilon, &mut masked);

    let (keep, scale) = match dropout {
        Some(dp) if dp.rate > 0.0 => {
            let keep: Vec<bool> = (0..width).map(|_| !dp.rng.bernoulli(dp.rate)).collect();
            (Some(keep), 1.0 / (1.0 - dp.rate))
        }
        _ => (None, 1.0),
    };
    let mut x_out = x_in.to_vec();
    for i in 0..width {
        let g = if i < half { c[i] } else { masked[i - half] };
        let g = match &keep {
            Some(k) if !k[i] => 0.0,
            Some(_) => g * scale,
            None => g,
        };
        x_out[i] += anchor[i] * g;
    }
    let trace = LayerTrace {
        x_in: x_in.to_vec(),
        c,
        masked,
        stats,
        keep,
    };
    (x_out, trace)
}

/// Runs one stack from `x1`, returning its output and per-layer traces.
fn run_branch(
    x1: &[f64],
    layers: &[CrossLayerParams],
    branch: Branch,
    config: &ModelConfig,
    mut dropout: Option<&mut Dropout<'_>>,
) -> (Vec<f64>, Vec<LayerTrace>) {
    let mut x = x1.to_vec();
    let mut traces = Vec::with_capacity(layers.len());
    for layer in layers {
        let anchor: &[f64] = match branch {
            Branch::Deep => &x,
            Branch::Shallow => x1,
        };
        let (next, t) = layer_forward(&x, anchor, layer, &*config.mask, config.ln_epsilon, dropout.as_deref_mut());
        traces.push(t);
        x = next;
    }
    (x, traces)
}

pub(crate) fn branch_traces(
    x1: &[f64],
    params: &ModelParams,
    config: &ModelConfig,
    branch: Branch,
) -> Vec<LayerTrace> {
    let layers = match branch {
        Branch::Deep => &params.ecn_layers,
        Branch::Shallow => &params.lcn_layers,
    };
    run_branch(x1, layers, branch, config, None).1
}

fn sample_forward(
    ids: &[u32],
    params: &ModelParams,
    config: &ModelConfig,
    mut dropout: Option<&mut Dropout<'_>>,
) -> Result<SampleTrace> {
    let x1 = embed_reshape(ids, params)?;
    let (x_ecn, ecn) = run_branch(&x1, &params.ecn_layers, Branch::Deep, config, dropout.as_deref_mut());
    let (x_lcn, lcn) = run_branch(&x1, &params.lcn_layers, Branch::Shallow, config, dropout);
    let logit_deep = dot(&params.heads.w_deep, &x_ecn) + params.heads.b_deep;
    let logit_shallow = dot(&params.heads.w_shallow, &x_lcn) + params.heads.b_shallow;
    let y_deep = sigmoid(logit_deep);
    let y_shallow = sigmoid(logit_shallow);
    Ok(SampleTrace {
        ids: ids.to_vec(),
        x1,
        ecn,
        lcn,
        x_ecn,
        x_lcn,
        logit_deep,
        logit_shallow,
        y_deep,
        y_shallow,
        y: (y_deep + y_shallow) / 2.0,
    })
}

/// Head pre-activations `(deep, shallow)` for a given first-order input,
/// without dropout.
pub fn head_logits_from_x1(x1: &[f64], params: &ModelParams, config: &ModelConfig) -> Result<(f64, f64)> {
    if x1.len() != params.width() {
        return Err(FcnError::Shape {
            op: "head_logits_from_x1",
            left: format!("model width {}", params.width()),
            right: format!("input of length {}", x1.len()),
        });
    }
    let (x_ecn, _) = run_branch(x1, &params.ecn_layers, Branch::Deep, config, None);
    let (x_lcn, _) = run_branch(x1, &params.lcn_layers, Branch::Shallow, config, None);
    Ok((
        dot(&params.heads.w_deep, &x_ecn) + params.heads.b_deep,
        dot(&params.heads.w_shallow, &x_lcn) + params.heads.b_shallow,
    ))
}

/// Predictions for every row. Training mode applies dropout (drawing from
/// `rng`) and keeps the trace needed by [`backward`].
pub fn forward(
    batch: &EncodedBatch,
    params: &ModelParams,
    config: &ModelConfig,
    training: bool,
    rng: &mut Rng,
) -> Result<ForwardOutput> {
    if batch.fields != params.num_fields() {
        return Err(FcnError::Shape {
            op: "forward",
            left: format!("model with {} fields", params.num_fields()),
            right: format!("batch with {} fields", batch.fields),
        });
    }
    let mut out = ForwardOutput {
        y: Vec::with_capacity(batch.n),
        y_deep: Vec::with_capacity(batch.n),
        y_shallow: Vec::with_capacity(batch.n),
        trace: None,
    };
    let mut samples = Vec::new();
    let mut dropout = Dropout {
        rate: config.dropout_rate,
        rng,
    };
    for r in 0..batch.n {
        let dp = training.then_some(&mut dropout);
        let s = sample_forward(batch.row(r), params, config, dp)?;
        out.y.push(s.y);
        out.y_deep.push(s.y_deep);
        out.y_shallow.push(s.y_shallow);
        if training {
            samples.push(s);
        }
    }
    if training {
        out.trace = Some(ForwardTrace {
            dropout_rate: config.dropout_rate,
            samples,
        });
    }
    Ok(out)
}

/// Gradient through one layer. Adds `∂/∂anchor` into `d_anchor` and returns
/// `∂/∂x_in` from the residual and `W·x_in` paths only.
#[allow(clippy::too_many_arguments)]
fn layer_backward(
    t: &LayerTrace,
    p: &CrossLayerParams,
    g: &mut CrossLayerParams,
    mask: &dyn SelfMask,
    rate: f64,
    anchor: &[f64],
    dx_out: &[f64],
    d_anchor: &mut [f64],
) -> Vec<f64> {
    let width = dx_out.len();
    let half = width / 2;
    let scale = if t.keep.is_some() { 1.0 / (1.0 - rate) } else { 1.0 };
    let mut d_gate = vec![0.0; width];
    for i in 0..width {
        let k = match &t.keep {
            Some(keep) if !keep[i] => 0.0,
            _ => scale,
        };
        let raw = if i < half { t.c[i] } else { t.masked[i - half] };
        d_anchor[i] += dx_out[i] * raw * k;
        d_gate[i] = dx_out[i] * anchor[i] * k;
    }
    let (d_c_direct, d_masked) = d_gate.split_at(half);
    let mut d_c = d_c_direct.to_vec();
    mask.backward(&t.c, &p.gain, &t.stats, d_masked, &mut d_c, &mut g.gain, &mut g.beta);

    g.w.add_outer(&d_c, &t.x_in);
    for (gb, dc) in g.b.iter_mut().zip(&d_c) {
        *gb += dc;
    }
    let mut dx_in = dx_out.to_vec();
    p.w.add_matvec_t(&d_c, &mut dx_in);
    dx_in
}

/// Exact gradients of a loss given `∂L/∂ŷ_D` and `∂L/∂ŷ_S` per sample.
pub fn backward(
    trace: Option<&ForwardTrace>,
    params: &ModelParams,
    config: &ModelConfig,
    d_deep: &[f64],
    d_shallow: &[f64],
) -> Result<Gradients> {
    let trace = trace.ok_or(FcnError::MissingTrace)?;
    let n = trace.samples.len();
    if d_deep.len() != n || d_shallow.len() != n {
        return Err(FcnError::Shape {
            op: "backward",
            left: format!("trace of {n} samples"),
            right: format!("loss gradients of {} / {}", d_deep.len(), d_shallow.len()),
        });
    }
    let mask = &*config.mask;
    let rate = trace.dropout_rate;
    let d = params.embedding_dim();
    let width = params.width();
    let mut grads = Gradients::zeros_like(params);

    for (s, (&dyd, &dys)) in trace.samples.iter().zip(d_deep.iter().zip(d_shallow)) {
        let mut dx1 = vec![0.0; width];

        // deep head and exponential stack
        let dl = dyd * s.y_deep * (1.0 - s.y_deep);
        for (gw, x) in grads.heads.w_deep.iter_mut().zip(&s.x_ecn) {
            *gw += dl * x;
        }
        grads.heads.b_deep += dl;
        let mut dx: Vec<f64> = params.heads.w_deep.iter().map(|w| dl * w).collect();
        for l in (0..s.ecn.len()).rev() {
            let t = &s.ecn[l];
            let mut d_anchor = vec![0.0; width];
            let mut dx_in = layer_backward(
                t,
                &params.ecn_layers[l],
                &mut grads.ecn_layers[l],
                mask,
                rate,
                &t.x_in,
                &dx,
                &mut d_anchor,
            );
            for (a, b) in dx_in.iter_mut().zip(&d_anchor) {
                *a += b;
            }
            dx = dx_in;
        }
        for (a, b) in dx1.iter_mut().zip(&dx) {
            *a += b;
        }

        // shallow head and linear stack; x1 is the anchor of every layer
        let dl = dys * s.y_shallow * (1.0 - s.y_shallow);
        for (gw, x) in grads.heads.w_shallow.iter_mut().zip(&s.x_lcn) {
            *gw += dl * x;
        }
        grads.heads.b_shallow += dl;
        let mut dx: Vec<f64> = params.heads.w_shallow.iter().map(|w| dl * w).collect();
        for l in (0..s.lcn.len()).rev() {
            dx = layer_backward(
                &s.lcn[l],
                &params.lcn_layers[l],
                &mut grads.lcn_layers[l],
                mask,
                rate,
                &s.x1,
                &dx,
                &mut dx1,
            );
        }
        for (a, b) in dx1.iter_mut().zip(&dx) {
            *a += b;
        }

        scatter_reshape(&s.ids, &dx1, d, &mut grads);
    }
    Ok(grads)
}
