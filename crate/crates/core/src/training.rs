//! Adam, the epoch loop and validation-driven early stopping.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use crate::error::{FcnError, Result};
use crate::features::EncodedBatch;
use crate::metrics::{EvalResult, ScoreBuffer};
use crate::model::{backward, forward, Gradients, ModelConfig, ModelParams};
use crate::numerics::{Rng, Stream};
use crate::objective::{objectives, TrainingObjective, TriLossReport};
use crate::registry::Handle;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub loss: Handle<dyn TrainingObjective>,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 4096,
            max_epochs: 20,
            patience: 2,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            loss: objectives().get("tri").expect("tri objective is registered"),
            shuffle_seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(FcnError::Config(format!("lr must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(FcnError::Config("batch_size must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(FcnError::Config("patience must be at least 1".into()));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(FcnError::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        Ok(())
    }
}

/// Adam moments. Cross-layer and head moments are dense; embedding moments
/// exist only for rows that have received a gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub t: u64,
    dense_m: Vec<Vec<f64>>,
    dense_v: Vec<Vec<f64>>,
    rows: BTreeMap<(usize, u32), (Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let mut p = params.clone();
        let shapes: Vec<usize> = p.dense_tensors_mut().iter().map(|t| t.len()).collect();
        Self {
            t: 0,
            dense_m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            dense_v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            rows: BTreeMap::new(),
        }
    }

    /// Embedding rows with materialized moments.
    pub fn touched_rows(&self) -> usize {
        self.rows.len()
    }
}

fn adam_update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], cfg: &TrainConfig, bc1: f64, bc2: f64) {
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    for i in 0..p.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
    }
}

/// One bias-corrected Adam step. Embedding rows absent from `grads` are left
/// untouched, moments included.
pub fn adam_step(params: &mut ModelParams, grads: &Gradients, state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    let dense = grads.dense_tensors();
    if dense.len() != state.dense_m.len() || dense.iter().zip(&state.dense_m).any(|((_, g), m)| g.len() != m.len()) {
        return Err(FcnError::Shape {
            op: "adam_step",
            left: format!("{} optimizer tensors", state.dense_m.len()),
            right: format!("{} gradient tensors", dense.len()),
        });
    }
    for (name, g) in &dense {
        if let Some(v) = g.iter().find(|v| !v.is_finite()) {
            return Err(FcnError::NonFinite(format!("gradient of {name} contains {v}")));
        }
    }
    let d = params.embedding_dim();
    for (&(field, id), g) in &grads.embeddings {
        if g.len() != d {
            return Err(FcnError::Shape {
                op: "adam_step",
                left: format!("embedding dim {d}"),
                right: format!("gradient row of {}", g.len()),
            });
        }
        if let Some(v) = g.iter().find(|v| !v.is_finite()) {
            return Err(FcnError::NonFinite(format!("gradient of embedding[{field}] row {id} contains {v}")));
        }
    }

    state.t += 1;
    let bc1 = 1.0 - cfg.adam_beta1.powf(state.t as f64);
    let bc2 = 1.0 - cfg.adam_beta2.powf(state.t as f64);

    let targets = params.dense_tensors_mut();
    for (((p, (_, g)), m), v) in targets
        .into_iter()
        .zip(&dense)
        .zip(state.dense_m.iter_mut())
        .zip(state.dense_v.iter_mut())
    {
        adam_update(p, g, m, v, cfg, bc1, bc2);
    }
    for (&(field, id), g) in &grads.embeddings {
        let (m, v) = state
            .rows
            .entry((field, id))
            .or_insert_with(|| (vec![0.0; d], vec![0.0; d]));
        adam_update(params.embeddings[field].row_mut(id as usize), g, m, v, cfg, bc1, bc2);
    }
    Ok(())
}

/// Validation-AUC early stopping. A strictly higher AUC is an improvement;
/// an equal AUC with lower logloss replaces the best snapshot but does not
/// reset the patience counter.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    best: Option<(usize, f64, f64)>,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopVerdict {
    /// The epoch just observed is the new best snapshot.
    pub is_best: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            stale: 0,
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|b| b.0)
    }

    pub fn observe(&mut self, epoch: usize, auc: f64, logloss: f64) -> StopVerdict {
        let (is_best, improved) = match self.best {
            None => (true, true),
            Some((_, best_auc, best_ll)) => {
                if auc > best_auc {
                    (true, true)
                } else {
                    (auc == best_auc && logloss < best_ll, false)
                }
            }
        };
        if is_best {
            self.best = Some((epoch, auc, logloss));
        }
        if improved {
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        StopVerdict {
            is_best,
            stop: self.stale >= self.patience,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    /// Sample-weighted means over the epoch's batches.
    pub train: TriLossReport,
    pub valid: EvalResult,
    pub secs: f64,
}

impl fmt::Display for EpochReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.train;
        write!(
            f,
            "epoch={} L_tri={:.6} L={:.6} L_D={:.6} L_S={:.6} w_D={:.6} w_S={:.6} val_auc={:.6} val_logloss={:.6} secs={:.3}",
            self.epoch,
            t.total,
            t.primary_loss,
            t.deep_loss,
            t.shallow_loss,
            t.w_deep,
            t.w_shallow,
            self.valid.auc,
            self.valid.logloss,
            self.secs
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub reports: Vec<EpochReport>,
    /// `None` when no epoch ran.
    pub best_epoch: Option<usize>,
}

fn require_labels(name: &str, data: &EncodedBatch) -> Result<()> {
    if data.n == 0 {
        return Err(FcnError::Data(format!("{name} set is empty")));
    }
    if !data.has_labels() {
        return Err(FcnError::Data(format!("{name} set has no labels")));
    }
    Ok(())
}

/// Forward, loss, backward and one Adam step on a batch.
pub fn train_step(
    batch: &EncodedBatch,
    params: &mut ModelParams,
    state: &mut AdamState,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    dropout_rng: &mut Rng,
) -> Result<TriLossReport> {
    let out = forward(batch, params, model_config, true, dropout_rng)?;
    let objective = &train_config.loss;
    let report = objective.loss(&out.y, &out.y_deep, &out.y_shallow, &batch.labels)?;
    let (d_deep, d_shallow) = objective.grads(&out.y, &out.y_deep, &out.y_shallow, &batch.labels, &report);
    let grads = backward(out.trace.as_ref(), params, model_config, &d_deep, &d_shallow)?;
    adam_step(params, &grads, state, train_config)?;
    Ok(report)
}

/// Trains from seeded initial parameters. `on_epoch` sees each report as
/// soon as the epoch is evaluated.
pub fn train(
    train_set: &EncodedBatch,
    valid_set: &EncodedBatch,
    vocab_sizes: &[usize],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    on_epoch: impl FnMut(&EpochReport),
) -> Result<TrainOutcome> {
    let params = ModelParams::init(model_config, vocab_sizes)?;
    train_from(params, train_set, valid_set, model_config, train_config, on_epoch)
}

pub fn train_from(
    mut params: ModelParams,
    train_set: &EncodedBatch,
    valid_set: &EncodedBatch,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<TrainOutcome> {
    model_config.validate()?;
    train_config.validate()?;
    require_labels("training", train_set)?;
    require_labels("validation", valid_set)?;
    match valid_set.positives() {
        0 => return Err(FcnError::DegenerateClass { class: "negative" }),
        p if p == valid_set.n => return Err(FcnError::DegenerateClass { class: "positive" }),
        _ => {}
    }

    let mut state = AdamState::new(&params);
    let mut shuffle_rng = Rng::stream(train_config.shuffle_seed, Stream::Shuffle);
    let mut dropout_rng = Rng::stream(model_config.seed, Stream::Dropout);
    let mut stopping = EarlyStopping::new(train_config.patience);
    let mut best = params.clone();
    let mut reports = Vec::new();
    let mut order: Vec<usize> = (0..train_set.n).collect();

    for epoch in 1..=train_config.max_epochs {
        let started = Instant::now();
        shuffle_rng.shuffle(&mut order);
        let mut sums = [0.0; 6];
        for rows in order.chunks(train_config.batch_size) {
            let batch = train_set.subset(rows);
            let r = train_step(&batch, &mut params, &mut state, model_config, train_config, &mut dropout_rng)?;
            let w = r.n as f64;
            for (s, v) in sums
                .iter_mut()
                .zip([r.primary_loss, r.deep_loss, r.shallow_loss, r.w_deep, r.w_shallow, r.total])
            {
                *s += w * v;
            }
        }
        let n = train_set.n as f64;
        let train_means = TriLossReport {
            primary_loss: sums[0] / n,
            deep_loss: sums[1] / n,
            shallow_loss: sums[2] / n,
            w_deep: sums[3] / n,
            w_shallow: sums[4] / n,
            total: sums[5] / n,
            n: train_set.n,
        };
        let valid = evaluate(valid_set, &params, model_config)?;
        let report = EpochReport {
            epoch,
            train: train_means,
            valid,
            secs: started.elapsed().as_secs_f64(),
        };
        on_epoch(&report);
        reports.push(report);

        let verdict = stopping.observe(epoch, valid.auc, valid.logloss);
        if verdict.is_best {
            best.clone_from(&params);
        }
        if verdict.stop {
            break;
        }
    }
    Ok(TrainOutcome {
        params: best,
        reports,
        best_epoch: stopping.best_epoch(),
    })
}

/// Inference-mode predictions for every row, collected with their labels.
pub fn score(data: &EncodedBatch, params: &ModelParams, config: &ModelConfig, batch_size: usize) -> Result<ScoreBuffer> {
    let mut buf = ScoreBuffer::new();
    let mut unused = Rng::stream(config.seed, Stream::Dropout);
    let rows: Vec<usize> = (0..data.n).collect();
    for chunk in rows.chunks(batch_size.max(1)) {
        let part = data.subset(chunk);
        let out = forward(&part, params, config, false, &mut unused)?;
        buf.extend(&out.y, &part.labels);
    }
    Ok(buf)
}

/// AUC and logloss of the fused prediction, without dropout.
pub fn evaluate(data: &EncodedBatch, params: &ModelParams, config: &ModelConfig) -> Result<EvalResult> {
    require_labels("evaluation", data)?;
    score(data, params, config, 4096)?.finish()
}
