use std::collections::BTreeMap;

use crate::error::{FcnError, Result};
use crate::numerics::{init_params, DenseMatrix, InitScheme, Rng, Stream};

use super::ModelConfig;

/// One cross layer: `c = W·x + b` and the LayerNorm gain/bias of its mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossLayerParams {
    /// `(D/2) × D`.
    pub w: DenseMatrix,
    pub b: Vec<f64>,
    pub gain: Vec<f64>,
    pub beta: Vec<f64>,
}

impl CrossLayerParams {
    pub fn zeros(width: usize) -> Self {
        let half = width / 2;
        Self {
            w: DenseMatrix::zeros(half, width),
            b: vec![0.0; half],
            gain: vec![0.0; half],
            beta: vec![0.0; half],
        }
    }

    fn init(width: usize, rng: &mut Rng) -> Self {
        let half = width / 2;
        Self {
            w: init_params(half, width, InitScheme::UniformFan, rng),
            b: vec![0.0; half],
            gain: vec![1.0; half],
            beta: vec![0.0; half],
        }
    }

    fn add_scaled(&mut self, other: &Self, alpha: f64) {
        axpy(self.w.data_mut(), other.w.data(), alpha);
        axpy(&mut self.b, &other.b, alpha);
        axpy(&mut self.gain, &other.gain, alpha);
        axpy(&mut self.beta, &other.beta, alpha);
    }
}

/// The two logistic heads: deep reads the exponential stack, shallow the
/// linear stack.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub w_deep: Vec<f64>,
    pub b_deep: f64,
    pub w_shallow: Vec<f64>,
    pub b_shallow: f64,
}

impl HeadParams {
    pub fn zeros(width: usize) -> Self {
        Self {
            w_deep: vec![0.0; width],
            b_deep: 0.0,
            w_shallow: vec![0.0; width],
            b_shallow: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// One table per field, `vocab_size × d`; row `id` is that id's embedding.
    pub embeddings: Vec<DenseMatrix>,
    pub lcn_layers: Vec<CrossLayerParams>,
    pub ecn_layers: Vec<CrossLayerParams>,
    pub heads: HeadParams,
}

impl ModelParams {
    /// Seeded initialization: embeddings and cross/head weights uniform in
    /// `±1/sqrt(fan_in)`, biases zero, LayerNorm gain one.
    pub fn init(config: &ModelConfig, vocab_sizes: &[usize]) -> Result<Self> {
        config.validate()?;
        if vocab_sizes.is_empty() || vocab_sizes.contains(&0) {
            return Err(FcnError::Config(format!(
                "every field needs a non-empty vocabulary, got sizes {vocab_sizes:?}"
            )));
        }
        let width = config.width(vocab_sizes.len());
        let mut rng = Rng::stream(config.seed, Stream::Init);
        let embeddings = vocab_sizes
            .iter()
            .map(|&s| init_params(s, config.d, InitScheme::UniformFan, &mut rng))
            .collect();
        let lcn_layers = (0..config.lcn_depth)
            .map(|_| CrossLayerParams::init(width, &mut rng))
            .collect();
        let ecn_layers = (0..config.ecn_depth)
            .map(|_| CrossLayerParams::init(width, &mut rng))
            .collect();
        let w_deep = init_params(1, width, InitScheme::UniformFan, &mut rng);
        let w_shallow = init_params(1, width, InitScheme::UniformFan, &mut rng);
        Ok(Self {
            embeddings,
            lcn_layers,
            ecn_layers,
            heads: HeadParams {
                w_deep: w_deep.data().to_vec(),
                b_deep: 0.0,
                w_shallow: w_shallow.data().to_vec(),
                b_shallow: 0.0,
            },
        })
    }

    pub fn num_fields(&self) -> usize {
        self.embeddings.len()
    }

    pub fn embedding_dim(&self) -> usize {
        self.embeddings.first().map_or(0, DenseMatrix::cols)
    }

    pub fn width(&self) -> usize {
        self.num_fields() * self.embedding_dim()
    }

    pub fn vocab_sizes(&self) -> Vec<usize> {
        self.embeddings.iter().map(DenseMatrix::rows).collect()
    }

    /// `self += alpha · grads`.
    pub fn add_scaled(&mut self, grads: &Gradients, alpha: f64) {
        for (&(field, id), g) in &grads.embeddings {
            axpy(self.embeddings[field].row_mut(id as usize), g, alpha);
        }
        for (p, g) in self.lcn_layers.iter_mut().zip(&grads.lcn_layers) {
            p.add_scaled(g, alpha);
        }
        for (p, g) in self.ecn_layers.iter_mut().zip(&grads.ecn_layers) {
            p.add_scaled(g, alpha);
        }
        axpy(&mut self.heads.w_deep, &grads.heads.w_deep, alpha);
        self.heads.b_deep += alpha * grads.heads.b_deep;
        axpy(&mut self.heads.w_shallow, &grads.heads.w_shallow, alpha);
        self.heads.b_shallow += alpha * grads.heads.b_shallow;
    }

    /// Every dense tensor in checkpoint order with a stable name.
    pub fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (i, e) in self.embeddings.iter().enumerate() {
            out.push((format!("embedding[{i}]"), e.data()));
        }
        for (branch, layers) in [("lcn", &self.lcn_layers), ("ecn", &self.ecn_layers)] {
            for (l, p) in layers.iter().enumerate() {
                out.push((format!("{branch}[{l}].w"), p.w.data()));
                out.push((format!("{branch}[{l}].b"), &p.b));
                out.push((format!("{branch}[{l}].gain"), &p.gain));
                out.push((format!("{branch}[{l}].beta"), &p.beta));
            }
        }
        out.push(("head.w_deep".into(), &self.heads.w_deep));
        out.push(("head.b_deep".into(), std::slice::from_ref(&self.heads.b_deep)));
        out.push(("head.w_shallow".into(), &self.heads.w_shallow));
        out.push(("head.b_shallow".into(), std::slice::from_ref(&self.heads.b_shallow)));
        out
    }

    /// Mutable view of [`ModelParams::tensors`], same order.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for e in &mut self.embeddings {
            out.push(e.data_mut());
        }
        for layers in [&mut self.lcn_layers, &mut self.ecn_layers] {
            for p in layers.iter_mut() {
                out.push(p.w.data_mut());
                out.push(&mut p.b);
                out.push(&mut p.gain);
                out.push(&mut p.beta);
            }
        }
        out.push(&mut self.heads.w_deep);
        out.push(std::slice::from_mut(&mut self.heads.b_deep));
        out.push(&mut self.heads.w_shallow);
        out.push(std::slice::from_mut(&mut self.heads.b_shallow));
        out
    }

    /// [`ModelParams::tensors_mut`] without the embedding tables.
    pub fn dense_tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let f = self.num_fields();
        let mut all = self.tensors_mut();
        all.drain(..f);
        all
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// Gradient of a scalar loss with respect to [`ModelParams`]. Embedding rows
/// are sparse: only rows touched by the batch appear.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embeddings: BTreeMap<(usize, u32), Vec<f64>>,
    pub lcn_layers: Vec<CrossLayerParams>,
    pub ecn_layers: Vec<CrossLayerParams>,
    pub heads: HeadParams,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        let width = params.width();
        Self {
            embeddings: BTreeMap::new(),
            lcn_layers: params.lcn_layers.iter().map(|_| CrossLayerParams::zeros(width)).collect(),
            ecn_layers: params.ecn_layers.iter().map(|_| CrossLayerParams::zeros(width)).collect(),
            heads: HeadParams::zeros(width),
        }
    }

    pub fn embedding_row(&mut self, field: usize, id: u32, dim: usize) -> &mut Vec<f64> {
        self.embeddings
            .entry((field, id))
            .or_insert_with(|| vec![0.0; dim])
    }

    /// Accumulates `other` into `self`.
    pub fn merge(&mut self, other: &Gradients) {
        for (key, g) in &other.embeddings {
            let row = self.embedding_row(key.0, key.1, g.len());
            axpy(row, g, 1.0);
        }
        for (a, b) in self.lcn_layers.iter_mut().zip(&other.lcn_layers) {
            a.add_scaled(b, 1.0);
        }
        for (a, b) in self.ecn_layers.iter_mut().zip(&other.ecn_layers) {
            a.add_scaled(b, 1.0);
        }
        axpy(&mut self.heads.w_deep, &other.heads.w_deep, 1.0);
        self.heads.b_deep += other.heads.b_deep;
        axpy(&mut self.heads.w_shallow, &other.heads.w_shallow, 1.0);
        self.heads.b_shallow += other.heads.b_shallow;
    }

    /// Dense tensors in the same order as [`ModelParams::tensors`];
    /// embedding tables are materialized with zeros for untouched rows.
    pub fn to_dense(&self, params: &ModelParams) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for (i, e) in params.embeddings.iter().enumerate() {
            let mut t = vec![0.0; e.rows() * e.cols()];
            for (&(field, id), g) in self.embeddings.range((i, 0)..=(i, u32::MAX)) {
                debug_assert_eq!(field, i);
                let start = id as usize * e.cols();
                t[start..start + e.cols()].copy_from_slice(g);
            }
            out.push(t);
        }
        for layers in [&self.lcn_layers, &self.ecn_layers] {
            for p in layers {
                out.push(p.w.data().to_vec());
                out.push(p.b.clone());
                out.push(p.gain.clone());
                out.push(p.beta.clone());
            }
        }
        out.push(self.heads.w_deep.clone());
        out.push(vec![self.heads.b_deep]);
        out.push(self.heads.w_shallow.clone());
        out.push(vec![self.heads.b_shallow]);
        out
    }

    /// Cross-layer and head gradients with stable names, in the order of
    /// [`ModelParams::dense_tensors_mut`].
    pub fn dense_tensors(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = Vec::new();
        for (branch, layers) in [("lcn", &self.lcn_layers), ("ecn", &self.ecn_layers)] {
            for (l, p) in layers.iter().enumerate() {
                out.push((format!("{branch}[{l}].w"), p.w.data()));
                out.push((format!("{branch}[{l}].b"), &p.b));
                out.push((format!("{branch}[{l}].gain"), &p.gain));
                out.push((format!("{branch}[{l}].beta"), &p.beta));
            }
        }
        out.push(("head.w_deep".into(), &self.heads.w_deep));
        out.push(("head.b_deep".into(), std::slice::from_ref(&self.heads.b_deep)));
        out.push(("head.w_shallow".into(), &self.heads.w_shallow));
        out.push(("head.b_shallow".into(), std::slice::from_ref(&self.heads.b_shallow)));
        out
    }

    pub fn is_zero(&self) -> bool {
        let layer_zero = |p: &CrossLayerParams| {
            p.w.data().iter().chain(&p.b).chain(&p.gain).chain(&p.beta).all(|&v| v == 0.0)
        };
        self.embeddings.values().all(|g| g.iter().all(|&v| v == 0.0))
            && self.lcn_layers.iter().all(layer_zero)
            && self.ecn_layers.iter().all(layer_zero)
            && self.heads.w_deep.iter().chain(&self.heads.w_shallow).all(|&v| v == 0.0)
            && self.heads.b_deep == 0.0
            && self.heads.b_shallow == 0.0
    }
}

fn axpy(y: &mut [f64], x: &[f64], alpha: f64) {
    for (a, b) in y.iter_mut().zip(x) {
        *a += alpha * b;
    }
}
