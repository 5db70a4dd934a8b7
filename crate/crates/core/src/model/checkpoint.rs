//! Self-describing binary checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic      "FCNCKPT1"
//! version    u32
//! length     u64, total file size including the checksum
//! config     fields u32, d u32, lcn_depth u32, ecn_depth u32, mask code u32,
//!            dropout f64, ln_epsilon f64, seed u64
//! schema     discretizer code u32, then per field:
//!            name (u32 len + UTF-8), kind u8, min_count u32,
//!            vocab size u32, tokens in id order (u32 len + UTF-8 each)
//! tensors    per tensor: rank u32, dims u32 × rank, payload f32 × product(dims)
//! crc32      u32 over every preceding byte
//! ```
//!
//! Tensor order: embedding tables, shallow layers (w, b, gain, beta), deep
//! layers, then `w_deep, b_deep, w_shallow, b_shallow`. Head biases are rank 0.

use std::path::Path;

use crate::error::{FcnError, Result};
use crate::features::{discretizer_by_code, FeatureSchema, FieldKind, FieldSpec, Vocab};
use crate::numerics::DenseMatrix;

use super::mask::mask_by_code;
use super::params::{CrossLayerParams, HeadParams, ModelParams};
use super::ModelConfig;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FCNCKPT1";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }

    fn tensor(&mut self, dims: &[usize], data: &[f64]) {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        self.u32(dims.len());
        for &d in dims {
            self.u32(d);
        }
        for &v in data {
            self.0.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let left = self.buf.len() - self.pos;
        if n > left {
            return Err(FcnError::Truncated {
                offset: self.pos,
                needed: n - left,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| FcnError::Malformed(format!("invalid UTF-8 string at offset {}", self.pos - n)))
    }

    fn tensor(&mut self, expect: &[usize], name: &str) -> Result<Vec<f64>> {
        let rank = self.u32()?;
        let mut dims = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            dims.push(self.u32()?);
        }
        if dims != expect {
            return Err(FcnError::Malformed(format!(
                "tensor {name}: stored dims {dims:?}, expected {expect:?}"
            )));
        }
        let count: usize = dims.iter().product();
        let bytes = self.take(count * 4)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect())
    }
}

pub fn write_checkpoint(params: &ModelParams, config: &ModelConfig, schema: &FeatureSchema) -> Result<Vec<u8>> {
    if params.vocab_sizes() != schema.sizes() || params.embedding_dim() != config.d {
        return Err(FcnError::Shape {
            op: "write_checkpoint",
            left: format!("params with vocab sizes {:?}, d={}", params.vocab_sizes(), params.embedding_dim()),
            right: format!("schema sizes {:?}, config d={}", schema.sizes(), config.d),
        });
    }
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION as usize);
    let length_at = w.0.len();
    w.u64(0);

    w.u32(schema.num_fields());
    w.u32(config.d);
    w.u32(config.lcn_depth);
    w.u32(config.ecn_depth);
    w.u32(config.mask.code() as usize);
    w.f64(config.dropout_rate);
    w.f64(config.ln_epsilon);
    w.u64(config.seed);

    w.u32(schema.discretizer.code() as usize);
    for (spec, vocab) in schema.fields.iter().zip(&schema.vocabs) {
        w.str(&spec.name);
        w.u8(spec.kind.code());
        w.u32(spec.min_count as usize);
        w.u32(vocab.size());
        for tok in vocab.tokens() {
            w.str(tok);
        }
    }

    let width = params.width();
    let half = width / 2;
    for e in &params.embeddings {
        w.tensor(&[e.rows(), e.cols()], e.data());
    }
    for layer in params.lcn_layers.iter().chain(&params.ecn_layers) {
        w.tensor(&[half, width], layer.w.data());
        w.tensor(&[half], &layer.b);
        w.tensor(&[half], &layer.gain);
        w.tensor(&[half], &layer.beta);
    }
    w.tensor(&[width], &params.heads.w_deep);
    w.tensor(&[], &[params.heads.b_deep]);
    w.tensor(&[width], &params.heads.w_shallow);
    w.tensor(&[], &[params.heads.b_shallow]);

    let total = (w.0.len() + 4) as u64;
    w.0[length_at..length_at + 8].copy_from_slice(&total.to_le_bytes());
    let crc = crc32fast::hash(&w.0);
    w.0.extend_from_slice(&crc.to_le_bytes());
    Ok(w.0)
}

fn parse_body(r: &mut Reader<'_>) -> Result<(ModelParams, ModelConfig, FeatureSchema)> {
    let fields = r.u32()?;
    let d = r.u32()?;
    let lcn_depth = r.u32()?;
    let ecn_depth = r.u32()?;
    let mask = mask_by_code(r.u32()? as u32)?;
    let dropout_rate = r.f64()?;
    let ln_epsilon = r.f64()?;
    let seed = r.u64()?;
    let config = ModelConfig {
        d,
        lcn_depth,
        ecn_depth,
        mask,
        dropout_rate,
        ln_epsilon,
        seed,
    };
    config
        .validate()
        .map_err(|e| FcnError::Malformed(format!("stored config is invalid: {e}")))?;
    if fields == 0 {
        return Err(FcnError::Malformed("checkpoint declares zero fields".into()));
    }

    let discretizer = discretizer_by_code(r.u32()? as u32)?;
    let mut specs = Vec::with_capacity(fields.min(1 << 16));
    let mut vocabs = Vec::with_capacity(fields.min(1 << 16));
    for _ in 0..fields {
        let name = r.str()?;
        let kind = FieldKind::from_code(r.u8()?)?;
        let min_count = r.u32()? as u32;
        let size = r.u32()?;
        let mut tokens = Vec::with_capacity(size.min(1 << 20));
        for _ in 0..size {
            tokens.push(r.str()?);
        }
        specs.push(FieldSpec { name, kind, min_count });
        vocabs.push(Vocab::from_tokens(tokens)?);
    }
    let schema = FeatureSchema {
        fields: specs,
        vocabs,
        discretizer,
    };

    let width = fields * d;
    let half = width / 2;
    let mut embeddings = Vec::with_capacity(fields);
    for (i, vocab) in schema.vocabs.iter().enumerate() {
        let data = r.tensor(&[vocab.size(), d], &format!("embedding[{i}]"))?;
        embeddings.push(DenseMatrix::from_vec(vocab.size(), d, data)?);
    }
    let mut read_layers = |count: usize, branch: &str| -> Result<Vec<CrossLayerParams>> {
        (0..count)
            .map(|l| {
                let w = r.tensor(&[half, width], &format!("{branch}[{l}].w"))?;
                Ok(CrossLayerParams {
                    w: DenseMatrix::from_vec(half, width, w)?,
                    b: r.tensor(&[half], &format!("{branch}[{l}].b"))?,
                    gain: r.tensor(&[half], &format!("{branch}[{l}].gain"))?,
                    beta: r.tensor(&[half], &format!("{branch}[{l}].beta"))?,
                })
            })
            .collect()
    };
    let lcn_layers = read_layers(lcn_depth, "lcn")?;
    let ecn_layers = read_layers(ecn_depth, "ecn")?;
    let heads = HeadParams {
        w_deep: r.tensor(&[width], "head.w_deep")?,
        b_deep: r.tensor(&[], "head.b_deep")?[0],
        w_shallow: r.tensor(&[width], "head.w_shallow")?,
        b_shallow: r.tensor(&[], "head.b_shallow")?[0],
    };
    let params = ModelParams {
        embeddings,
        lcn_layers,
        ecn_layers,
        heads,
    };
    Ok((params, config, schema))
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<(ModelParams, ModelConfig, FeatureSchema)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if bytes.len() < CHECKPOINT_MAGIC.len() {
        if CHECKPOINT_MAGIC.starts_with(bytes) {
            return Err(FcnError::Truncated {
                offset: bytes.len(),
                needed: CHECKPOINT_MAGIC.len() - bytes.len(),
            });
        }
        return Err(FcnError::BadMagic);
    }
    if r.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
        return Err(FcnError::BadMagic);
    }
    let version = r.u32()? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(FcnError::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let declared = r.u64()?;
    let len = bytes.len() as u64;
    if len < declared {
        return Err(FcnError::Truncated {
            offset: bytes.len(),
            needed: (declared - len) as usize,
        });
    }
    if len > declared {
        return Err(FcnError::Malformed(format!(
            "{} bytes after the declared end of the file",
            len - declared
        )));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(FcnError::Crc { stored, computed });
    }
    let mut r = Reader { buf: body, pos: r.pos };
    let parsed = parse_body(&mut r)?;
    if r.pos != body.len() {
        return Err(FcnError::Malformed(format!(
            "{} unparsed bytes before the checksum",
            body.len() - r.pos
        )));
    }
    Ok(parsed)
}

pub fn save_checkpoint(
    params: &ModelParams,
    config: &ModelConfig,
    schema: &FeatureSchema,
    path: &Path,
) -> Result<()> {
    let bytes = write_checkpoint(params, config, schema)?;
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, ModelConfig, FeatureSchema)> {
    let bytes = std::fs::read(path)
        .map_err(|e| FcnError::Data(format!("cannot read checkpoint {}: {e}", path.display())))?;
    read_checkpoint(&bytes)
}
