//! Finite-difference audit of the hand-written backward pass.

use crate::error::{FcnError, Result};
use crate::features::EncodedBatch;
use crate::model::{backward, forward, ForwardTrace, Gradients, ModelConfig, ModelParams};
use crate::numerics::{Rng, Stream};
use crate::objective::{tri_bce, tri_bce_grads, CLIP_EPSILON};

use super::reference::{frozen_tri_loss, MaskRule, Pattern};

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const LOGISTIC_TOLERANCE: f64 = 1e-8;
/// Denominator floor of the relative error. Central differences at `h = 1e-5`
/// carry about 1e-11 of truncation and rounding error, so gradients smaller
/// than this are judged on absolute error instead.
pub const REL_FLOOR: f64 = 1e-2;
const ROWS: usize = 4;
const VOCAB: usize = 3;
const ATTEMPTS: u64 = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCase {
    pub fields: usize,
    pub d: usize,
    pub lcn_depth: usize,
    pub ecn_depth: usize,
    pub mask: &'static str,
    pub seed: u64,
}

impl GradCase {
    pub fn label(&self) -> String {
        format!(
            "f={} d={} lcn={} ecn={} mask={} seed={}",
            self.fields, self.d, self.lcn_depth, self.ecn_depth, self.mask, self.seed
        )
    }

    /// The tighter bound applies when both stacks are empty.
    pub fn tolerance(&self) -> f64 {
        if self.lcn_depth == 0 && self.ecn_depth == 0 {
            LOGISTIC_TOLERANCE
        } else {
            GRAD_TOLERANCE
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradResult {
    pub case: GradCase,
    pub max_rel_error: f64,
    pub worst_tensor: String,
    pub checked: usize,
    /// Coordinates left out because a step of `±h` crossed a ReLU or clamp
    /// boundary even after redrawing the point.
    pub skipped: usize,
    pub redraws: u64,
}

impl GradResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.case.tolerance()
    }
}

/// `f ∈ {2,3}`, `d ∈ {2,4}`, both depths in `0..=3`, all mask modes, three
/// seeds starting at `base_seed`.
pub fn audit_grid(base_seed: u64) -> Vec<GradCase> {
    let mut cases = Vec::new();
    for mask in ["paper", "no_ln", "identity"] {
        for lcn_depth in 0..=3 {
            for ecn_depth in 0..=3 {
                for fields in [2, 3] {
                    for d in [2, 4] {
                        for seed in base_seed..base_seed + 3 {
                            cases.push(GradCase {
                                fields,
                                d,
                                lcn_depth,
                                ecn_depth,
                                mask,
                                seed,
                            });
                        }
                    }
                }
            }
        }
    }
    cases
}

/// Signature of the gradient routine under audit.
pub type GradientSource<'a> = dyn Fn(&ForwardTrace, &ModelParams, &ModelConfig, &[f64], &[f64]) -> Result<Gradients> + 'a;

pub fn grad_audit(cases: &[GradCase]) -> Result<Vec<GradResult>> {
    grad_audit_with(cases, &|t, p, c, dd, ds| backward(Some(t), p, c, dd, ds))
}

/// Audits an arbitrary gradient routine; used to confirm that corrupted
/// gradients are caught.
pub fn grad_audit_with(cases: &[GradCase], source: &GradientSource<'_>) -> Result<Vec<GradResult>> {
    cases.iter().map(|c| audit_case(c, source)).collect()
}

struct Point {
    config: ModelConfig,
    params: ModelParams,
    rows: Vec<Vec<u32>>,
    labels: Vec<u8>,
}

fn draw_point(case: &GradCase, attempt: u64) -> Result<Point> {
    let seed = case.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (attempt << 32) ^ attempt;
    let config = ModelConfig {
        d: case.d,
        lcn_depth: case.lcn_depth,
        ecn_depth: case.ecn_depth,
        dropout_rate: 0.0,
        seed,
        ..ModelConfig::default()
    }
    .with_mask(case.mask)?;
    let mut params = ModelParams::init(&config, &vec![VOCAB; case.fields])?;
    let mut rng = Rng::stream(seed, Stream::Verify);
    for layer in params.lcn_layers.iter_mut().chain(params.ecn_layers.iter_mut()) {
        for v in layer.b.iter_mut().chain(layer.beta.iter_mut()) {
            *v = 0.5 * rng.normal();
        }
        for v in layer.gain.iter_mut() {
            *v = 1.0 + 0.5 * rng.normal();
        }
    }
    params.heads.b_deep = 0.2 * rng.normal();
    params.heads.b_shallow = 0.2 * rng.normal();
    let rows = (0..ROWS)
        .map(|_| (0..case.fields).map(|_| rng.below(VOCAB) as u32).collect())
        .collect();
    let labels = (0..ROWS).map(|r| (r % 2) as u8).collect();
    Ok(Point {
        config,
        params,
        rows,
        labels,
    })
}

fn flatten(params: &ModelParams) -> (Vec<f64>, Vec<(String, usize)>) {
    let mut flat = Vec::new();
    let mut spans = Vec::new();
    for (name, t) in params.tensors() {
        spans.push((name, t.len()));
        flat.extend_from_slice(t);
    }
    (flat, spans)
}

fn unflatten(params: &mut ModelParams, flat: &[f64]) {
    let mut at = 0;
    for t in params.tensors_mut() {
        t.copy_from_slice(&flat[at..at + t.len()]);
        at += t.len();
    }
}

fn audit_case(case: &GradCase, source: &GradientSource<'_>) -> Result<GradResult> {
    let rule = MaskRule::from_name(case.mask)
        .ok_or_else(|| FcnError::Config(format!("no reference rule for mask `{}`", case.mask)))?;
    for attempt in 0..ATTEMPTS {
        let last = attempt + 1 == ATTEMPTS;
        let pt = draw_point(case, attempt)?;
        let eps = pt.config.ln_epsilon;

        let batch = EncodedBatch {
            n: pt.rows.len(),
            fields: case.fields,
            ids: pt.rows.concat(),
            labels: pt.labels.clone(),
        };
        let out = forward(&batch, &pt.params, &pt.config, true, &mut Rng::new(0))?;
        let report = tri_bce(&out.y, &out.y_deep, &out.y_shallow, &pt.labels, CLIP_EPSILON)?;
        let (dd, ds) = tri_bce_grads(&out.y, &out.y_deep, &out.y_shallow, &pt.labels, &report, CLIP_EPSILON);
        let trace = out.trace.as_ref().ok_or(FcnError::MissingTrace)?;
        let analytic = source(trace, &pt.params, &pt.config, &dd, &ds)?.to_dense(&pt.params).concat();
        let weights = (report.w_deep, report.w_shallow);

        let (x0, spans) = flatten(&pt.params);
        let mut base = Pattern::new();
        frozen_tri_loss(&pt.rows, &pt.labels, &pt.params, rule, eps, weights, &mut base);

        let mut scratch = pt.params.clone();
        let mut x = x0.clone();
        let mut eval = |x: &[f64]| {
            unflatten(&mut scratch, x);
            let mut pat = Pattern::new();
            let v = frozen_tri_loss(&pt.rows, &pt.labels, &scratch, rule, eps, weights, &mut pat);
            (v, pat)
        };

        let mut kinks = Vec::new();
        let mut worst = (0.0f64, String::new());
        let mut checked = 0;
        let mut offset = 0;
        for (name, len) in &spans {
            for i in offset..offset + len {
                x[i] = x0[i] + FD_STEP;
                let (up, p_up) = eval(&x);
                x[i] = x0[i] - FD_STEP;
                let (down, p_down) = eval(&x);
                x[i] = x0[i];
                if p_up != base || p_down != base {
                    kinks.push(i);
                    continue;
                }
                let numeric = (up - down) / (2.0 * FD_STEP);
                let a = analytic[i];
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
                checked += 1;
                if err > worst.0 || err.is_nan() {
                    worst = (if err.is_nan() { f64::INFINITY } else { err }, name.clone());
                }
            }
            offset += len;
        }
        if !kinks.is_empty() && !last {
            continue;
        }
        return Ok(GradResult {
            case: case.clone(),
            max_rel_error: worst.0,
            worst_tensor: worst.1,
            checked,
            skipped: kinks.len(),
            redraws: attempt,
        });
    }
    unreachable!("the final attempt always returns")
}
