#![allow(clippy::needless_range_loop)]

use std::path::PathBuf;

use fcn_core::features::{discretizers, EncodedBatch, FeatureSchema, FieldSpec, Vocab};
use fcn_core::model::{
    backward, cross_layer_forward, embed_reshape, field_importance, forward, masks, param_count, read_checkpoint,
    self_mask, write_checkpoint, Branch, CrossLayerParams, Gradients, HeadParams, ModelConfig, ModelParams,
    CHECKPOINT_MAGIC,
};
use fcn_core::numerics::{finite_diff_grad, sigmoid, DenseMatrix, DenseVector, Rng};
use fcn_core::FcnError;
use proptest::prelude::*;

fn config(d: usize, lcn: usize, ecn: usize, mask: &str) -> ModelConfig {
    ModelConfig {
        d,
        lcn_depth: lcn,
        ecn_depth: ecn,
        dropout_rate: 0.0,
        ..ModelConfig::default()
    }
    .with_mask(mask)
    .unwrap()
}

fn zero_params(sizes: &[usize], cfg: &ModelConfig) -> ModelParams {
    let width = cfg.width(sizes.len());
    ModelParams {
        embeddings: sizes.iter().map(|&s| DenseMatrix::zeros(s, cfg.d)).collect(),
        lcn_layers: (0..cfg.lcn_depth).map(|_| CrossLayerParams::zeros(width)).collect(),
        ecn_layers: (0..cfg.ecn_depth).map(|_| CrossLayerParams::zeros(width)).collect(),
        heads: HeadParams::zeros(width),
    }
}

/// Initialized params with every bias, gain and LayerNorm offset jittered so
/// no quantity sits at a symmetric special point.
fn generic_params(sizes: &[usize], cfg: &ModelConfig, seed: u64) -> ModelParams {
    let mut p = ModelParams::init(cfg, sizes).unwrap();
    let mut rng = Rng::new(seed);
    for layer in p.lcn_layers.iter_mut().chain(p.ecn_layers.iter_mut()) {
        for v in layer.b.iter_mut().chain(layer.beta.iter_mut()) {
            *v = 0.3 * rng.normal();
        }
        for v in layer.gain.iter_mut() {
            *v = 1.0 + 0.3 * rng.normal();
        }
    }
    p.heads.b_deep = 0.1;
    p.heads.b_shallow = -0.2;
    p
}

fn random_batch(sizes: &[usize], n: usize, rng: &mut Rng) -> EncodedBatch {
    let mut ids = Vec::with_capacity(n * sizes.len());
    for _ in 0..n {
        for &s in sizes {
            ids.push(rng.below(s) as u32);
        }
    }
    let labels = (0..n).map(|_| rng.below(2) as u8).collect();
    EncodedBatch {
        n,
        fields: sizes.len(),
        ids,
        labels,
    }
}

fn flatten(p: &ModelParams) -> Vec<f64> {
    p.tensors().into_iter().flat_map(|(_, t)| t.to_vec()).collect()
}

fn unflatten(p: &mut ModelParams, flat: &[f64]) {
    let mut at = 0;
    for t in p.tensors_mut() {
        t.copy_from_slice(&flat[at..at + t.len()]);
        at += t.len();
    }
}

#[test]
fn embed_reshape_interleaves_views() {
    let cfg = config(4, 0, 0, "paper");
    let mut p = zero_params(&[1, 1], &cfg);
    p.embeddings[0].row_mut(0).copy_from_slice(&[1.0, 2.0, 3.0, 4.0]);
    p.embeddings[1].row_mut(0).copy_from_slice(&[5.0, 6.0, 7.0, 8.0]);
    let x = embed_reshape(&[0, 0], &p).unwrap();
    assert_eq!(x, vec![1.0, 2.0, 5.0, 6.0, 3.0, 4.0, 7.0, 8.0]);
}

#[test]
fn embed_reshape_single_field_is_identity() {
    let cfg = config(4, 0, 0, "paper");
    let mut p = zero_params(&[2], &cfg);
    p.embeddings[0].row_mut(1).copy_from_slice(&[9.0, 8.0, 7.0, 6.0]);
    assert_eq!(embed_reshape(&[1], &p).unwrap(), vec![9.0, 8.0, 7.0, 6.0]);
    assert_eq!(embed_reshape(&[0], &p).unwrap(), vec![0.0; 4]);
}

#[test]
fn embed_reshape_rejects_bad_ids() {
    let cfg = config(2, 0, 0, "paper");
    let p = zero_params(&[3, 2], &cfg);
    assert!(matches!(
        embed_reshape(&[0, 2], &p),
        Err(FcnError::IdOutOfRange { field: 1, id: 2, size: 2 })
    ));
    assert!(matches!(embed_reshape(&[0], &p), Err(FcnError::Shape { .. })));
}

#[test]
fn self_mask_constant_input_closes_gate() {
    let paper = masks().get("paper").unwrap();
    let (m, stats) = self_mask(&[1.0; 4], &[1.0; 4], &[0.0; 4], &*paper, 1e-5);
    assert_eq!(m, vec![0.0; 4]);
    assert!(stats.clamped);
}

#[test]
fn self_mask_two_entries() {
    // mean 0, population std 1, gate (1, 0)
    let paper = masks().get("paper").unwrap();
    let (m, stats) = self_mask(&[1.0, -1.0], &[1.0; 2], &[0.0; 2], &*paper, 1e-5);
    assert_eq!(m, vec![1.0, 0.0]);
    assert_eq!(stats.mean, 0.0);
    assert_eq!(stats.std, 1.0);
}

#[test]
fn self_mask_other_modes() {
    let c = [2.0, -3.0, 0.5];
    let (m, _) = self_mask(&c, &[1.0; 3], &[0.0; 3], &*masks().get("no_ln").unwrap(), 1e-5);
    assert_eq!(m, vec![4.0, 0.0, 0.25]);
    let (m, _) = self_mask(&c, &[1.0; 3], &[0.0; 3], &*masks().get("identity").unwrap(), 1e-5);
    assert_eq!(m, c.to_vec());
}

#[test]
fn self_mask_zeroes_about_half_of_normal_input() {
    let paper = masks().get("paper").unwrap();
    let mut rng = Rng::new(7);
    let c: Vec<f64> = (0..1000).map(|_| rng.normal()).collect();
    let (m, _) = self_mask(&c, &[1.0; 1000], &[0.0; 1000], &*paper, 1e-5);
    let zeros = m.iter().filter(|&&v| v == 0.0).count() as f64 / 1000.0;
    assert!((0.45..=0.55).contains(&zeros), "zero fraction {zeros}");
}

#[test]
fn cross_layer_hand_examples() {
    let layer = CrossLayerParams {
        w: DenseMatrix::from_rows(&[vec![0.5, 0.5]]).unwrap(),
        b: vec![0.0],
        gain: vec![1.0],
        beta: vec![0.0],
    };
    let x = [1.0, 2.0];
    let identity = masks().get("identity").unwrap();
    let (out, t) = cross_layer_forward(&x, &x, &layer, &*identity, 1e-5, None).unwrap();
    assert_eq!(t.c, vec![1.5]);
    assert_eq!(out, vec![2.5, 5.0]);

    let paper = masks().get("paper").unwrap();
    let (out, t) = cross_layer_forward(&x, &x, &layer, &*paper, 1e-5, None).unwrap();
    assert_eq!(t.masked, vec![0.0]);
    assert_eq!(out, vec![2.5, 2.0]);
}

#[test]
fn cross_layer_rejects_shape_mismatch() {
    let layer = CrossLayerParams::zeros(4);
    let paper = masks().get("paper").unwrap();
    let r = cross_layer_forward(&[1.0; 6], &[1.0; 6], &layer, &*paper, 1e-5, None);
    assert!(matches!(r, Err(FcnError::Shape { .. })));
}

#[test]
fn dropout_scales_survivors() {
    let layer = CrossLayerParams {
        w: DenseMatrix::filled(4, 8, 0.1),
        b: vec![0.2; 4],
        gain: vec![1.0; 4],
        beta: vec![0.0; 4],
    };
    let x: Vec<f64> = (1..=8).map(|v| v as f64).collect();
    let identity = masks().get("identity").unwrap();
    let (plain, _) = cross_layer_forward(&x, &x, &layer, &*identity, 1e-5, None).unwrap();
    let mut rng = Rng::new(3);
    let mut dp = fcn_core::model::Dropout { rate: 0.5, rng: &mut rng };
    let (out, t) = cross_layer_forward(&x, &x, &layer, &*identity, 1e-5, Some(&mut dp)).unwrap();
    let keep = t.keep.unwrap();
    for i in 0..8 {
        let delta = plain[i] - x[i];
        let expect = if keep[i] { x[i] + 2.0 * delta } else { x[i] };
        assert!((out[i] - expect).abs() < 1e-12);
    }
}

#[test]
fn zero_params_predict_one_half() {
    let cfg = config(4, 2, 3, "paper");
    let p = zero_params(&[3, 5], &cfg);
    let batch = random_batch(&[3, 5], 7, &mut Rng::new(1));
    let out = forward(&batch, &p, &cfg, false, &mut Rng::new(2)).unwrap();
    assert!(out.trace.is_none());
    for i in 0..7 {
        assert_eq!((out.y[i], out.y_deep[i], out.y_shallow[i]), (0.5, 0.5, 0.5));
    }
}

#[test]
fn depth_zero_is_logistic_regression_on_x1() {
    let cfg = config(4, 0, 0, "paper");
    let sizes = [4, 6, 3];
    let p = generic_params(&sizes, &cfg, 5);
    let batch = random_batch(&sizes, 5, &mut Rng::new(9));
    let out = forward(&batch, &p, &cfg, true, &mut Rng::new(0)).unwrap();
    let trace = out.trace.as_ref().unwrap();
    for r in 0..batch.n {
        let x1 = embed_reshape(batch.row(r), &p).unwrap();
        let zd: f64 = x1.iter().zip(&p.heads.w_deep).map(|(a, b)| a * b).sum::<f64>() + p.heads.b_deep;
        assert!((out.y_deep[r] - sigmoid(zd)).abs() < 1e-15);
    }

    let d_deep: Vec<f64> = (0..batch.n).map(|i| 0.3 - 0.1 * i as f64).collect();
    let d_shallow = vec![0.0; batch.n];
    let g = backward(Some(trace), &p, &cfg, &d_deep, &d_shallow).unwrap();
    let mut expect = vec![0.0; p.width()];
    for r in 0..batch.n {
        let x1 = embed_reshape(batch.row(r), &p).unwrap();
        let yd = out.y_deep[r];
        for (e, x) in expect.iter_mut().zip(&x1) {
            *e += d_deep[r] * yd * (1.0 - yd) * x;
        }
    }
    for (a, b) in g.heads.w_deep.iter().zip(&expect) {
        assert!((a - b).abs() < 1e-14);
    }
    assert!(g.heads.w_shallow.iter().all(|&v| v == 0.0));
}

#[test]
fn zero_loss_gradient_gives_zero_gradients() {
    let cfg = config(4, 2, 2, "paper");
    let sizes = [3, 3];
    let p = generic_params(&sizes, &cfg, 1);
    let batch = random_batch(&sizes, 4, &mut Rng::new(2));
    let out = forward(&batch, &p, &cfg, true, &mut Rng::new(3)).unwrap();
    let g = backward(out.trace.as_ref(), &p, &cfg, &[0.0; 4], &[0.0; 4]).unwrap();
    assert!(g.is_zero());

    let mut q = p.clone();
    q.add_scaled(&g, 1.0);
    assert_eq!(p, q);
}

#[test]
fn backward_requires_trace() {
    let cfg = config(2, 1, 1, "paper");
    let p = zero_params(&[2], &cfg);
    assert!(matches!(
        backward(None, &p, &cfg, &[], &[]),
        Err(FcnError::MissingTrace)
    ));
}

/// Checks the hand backward against central differences of the linear
/// functional `Σ a_r·ŷ_D,r + b_r·ŷ_S,r`, whose gradient wrt the heads is
/// exactly `(a, b)`.
fn assert_matches_finite_differences(sizes: &[usize], cfg: &ModelConfig, seed: u64, tol: f64) {
    let p = generic_params(sizes, cfg, seed);
    let mut rng = Rng::new(seed + 100);
    let batch = random_batch(sizes, 3, &mut rng);
    let a: Vec<f64> = (0..batch.n).map(|_| rng.normal()).collect();
    let b: Vec<f64> = (0..batch.n).map(|_| rng.normal()).collect();

    let out = forward(&batch, &p, cfg, true, &mut Rng::new(0)).unwrap();
    let g = backward(out.trace.as_ref(), &p, cfg, &a, &b).unwrap();
    let analytic: Vec<f64> = g.to_dense(&p).concat();

    let x0 = DenseVector(flatten(&p));
    let mut scratch = p.clone();
    let numeric = finite_diff_grad(
        |x| {
            unflatten(&mut scratch, &x.0);
            let o = forward(&batch, &scratch, cfg, false, &mut Rng::new(0)).unwrap();
            (0..batch.n).map(|r| a[r] * o.y_deep[r] + b[r] * o.y_shallow[r]).sum()
        },
        &x0,
        1e-5,
    )
    .unwrap();

    for (i, (an, nu)) in analytic.iter().zip(&numeric.0).enumerate() {
        let rel = (an - nu).abs() / an.abs().max(nu.abs()).max(1e-6);
        assert!(rel < tol, "coordinate {i}: analytic {an}, numeric {nu}, rel {rel}");
    }
}

#[test]
fn backward_matches_finite_differences_paper_mask() {
    assert_matches_finite_differences(&[4, 3, 5], &config(4, 2, 2, "paper"), 11, 1e-4);
}

#[test]
fn backward_matches_finite_differences_other_masks() {
    assert_matches_finite_differences(&[3, 4], &config(2, 3, 1, "no_ln"), 12, 1e-4);
    assert_matches_finite_differences(&[3, 4], &config(4, 1, 3, "identity"), 13, 1e-4);
}

#[test]
fn backward_replays_dropout() {
    let mut cfg = config(4, 2, 2, "paper");
    cfg.dropout_rate = 0.3;
    let sizes = [3, 4];
    let p = generic_params(&sizes, &cfg, 21);
    let batch = random_batch(&sizes, 2, &mut Rng::new(22));
    let out = forward(&batch, &p, &cfg, true, &mut Rng::new(23)).unwrap();
    let a = [0.7, -0.4];
    let b = [-0.2, 0.9];
    let g = backward(out.trace.as_ref(), &p, &cfg, &a, &b).unwrap();
    let analytic = g.to_dense(&p).concat();

    // Same dropout draws for every evaluation: re-seed the stream each call.
    let x0 = DenseVector(flatten(&p));
    let mut scratch = p.clone();
    let numeric = finite_diff_grad(
        |x| {
            unflatten(&mut scratch, &x.0);
            let o = forward(&batch, &scratch, &cfg, true, &mut Rng::new(23)).unwrap();
            (0..2).map(|r| a[r] * o.y_deep[r] + b[r] * o.y_shallow[r]).sum()
        },
        &x0,
        1e-5,
    )
    .unwrap();
    for (an, nu) in analytic.iter().zip(&numeric.0) {
        let rel = (an - nu).abs() / an.abs().max(nu.abs()).max(1e-6);
        assert!(rel < 1e-4, "analytic {an}, numeric {nu}");
    }
}

#[test]
fn forward_backward_is_deterministic() {
    let mut cfg = config(4, 2, 3, "paper");
    cfg.dropout_rate = 0.1;
    let sizes = [5, 5, 5];
    let p = ModelParams::init(&cfg, &sizes).unwrap();
    let batch = random_batch(&sizes, 16, &mut Rng::new(4));
    let run = || {
        let out = forward(&batch, &p, &cfg, true, &mut Rng::new(77)).unwrap();
        let g = backward(out.trace.as_ref(), &p, &cfg, &out.y_deep, &out.y_shallow).unwrap();
        (out, g)
    };
    let (o1, g1) = run();
    let (o2, g2) = run();
    assert_eq!(o1, o2);
    assert_eq!(g1, g2);
    assert_eq!(ModelParams::init(&cfg, &sizes).unwrap(), p);
}

#[test]
fn param_count_worked_example() {
    let cfg = config(4, 3, 3, "paper");
    let c = param_count(&cfg, &[10, 20, 30, 40]).unwrap();
    assert_eq!(c.per_layer, 152);
    assert_eq!(c.heads, 34);
    assert_eq!(c.non_embedding(), 946);
    assert_eq!(c.embedding, 4 * 100);

    let c = param_count(&config(4, 0, 0, "paper"), &[10, 20, 30, 40]).unwrap();
    assert_eq!(c.non_embedding(), 2 * (16 + 1));
}

#[test]
fn param_count_scales_quadratically() {
    // Leading term D²L/2 for ECN only, D²L for both stacks of depth L.
    for (f, d, l) in [(8, 16, 3), (20, 16, 4), (39, 16, 2)] {
        let width = (f * d) as f64;
        let ecn = param_count(&config(d, 0, l, "paper"), &vec![5; f]).unwrap();
        let fcn = param_count(&config(d, l, l, "paper"), &vec![5; f]).unwrap();
        let lead = width * width * l as f64;
        let ecn_ratio = ecn.ecn_only() as f64 / (lead / 2.0);
        let fcn_ratio = fcn.non_embedding() as f64 / lead;
        assert!((1.0..1.05).contains(&ecn_ratio), "{ecn_ratio}");
        assert!((1.0..1.05).contains(&fcn_ratio), "{fcn_ratio}");
    }
}

fn tiny_schema(sizes: &[usize]) -> FeatureSchema {
    FeatureSchema {
        fields: (0..sizes.len()).map(|i| FieldSpec::categorical(format!("f{i}"), 1)).collect(),
        vocabs: sizes
            .iter()
            .map(|&s| {
                let tokens = std::iter::once("OOV".to_string()).chain((1..s).map(|t| format!("tok{t}")));
                Vocab::from_tokens(tokens.collect()).unwrap()
            })
            .collect(),
        discretizer: discretizers().get("lnsq").unwrap(),
    }
}

fn to_f32_precision(p: &ModelParams) -> ModelParams {
    let mut q = p.clone();
    for t in q.tensors_mut() {
        for v in t.iter_mut() {
            *v = *v as f32 as f64;
        }
    }
    q
}

#[test]
fn checkpoint_round_trip() {
    let mut cfg = config(4, 2, 1, "no_ln");
    cfg.dropout_rate = 0.25;
    cfg.seed = 1234;
    let sizes = [3, 5, 2];
    let schema = tiny_schema(&sizes);
    let p = generic_params(&sizes, &cfg, 8);
    let bytes = write_checkpoint(&p, &cfg, &schema).unwrap();
    let (p2, cfg2, schema2) = read_checkpoint(&bytes).unwrap();
    assert_eq!(p2, to_f32_precision(&p));
    assert_eq!(cfg2, cfg);
    assert_eq!(schema2, schema);
    assert_eq!(write_checkpoint(&p2, &cfg2, &schema2).unwrap(), bytes);
}

#[test]
fn checkpoint_detects_truncation_at_every_length() {
    let cfg = config(2, 1, 1, "paper");
    let sizes = [2, 3];
    let bytes = write_checkpoint(&generic_params(&sizes, &cfg, 3), &cfg, &tiny_schema(&sizes)).unwrap();
    for len in 0..bytes.len() {
        match read_checkpoint(&bytes[..len]) {
            Err(FcnError::Truncated { .. }) => {}
            other => panic!("prefix of {len} bytes: {other:?}"),
        }
    }
}

#[test]
fn checkpoint_rejects_corruption() {
    let cfg = config(2, 1, 1, "paper");
    let sizes = [2, 3];
    let bytes = write_checkpoint(&generic_params(&sizes, &cfg, 3), &cfg, &tiny_schema(&sizes)).unwrap();

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(read_checkpoint(&bad), Err(FcnError::BadMagic)));

    let mut bad = bytes.clone();
    bad[8] = 2;
    assert!(matches!(
        read_checkpoint(&bad),
        Err(FcnError::VersionMismatch { found: 2, expected: 1 })
    ));

    // every byte after magic, version and length is covered by the checksum
    for at in 20..bytes.len() {
        let mut bad = bytes.clone();
        bad[at] ^= 0x40;
        assert!(matches!(read_checkpoint(&bad), Err(FcnError::Crc { .. })), "flip at {at}");
    }

    let mut bad = bytes.clone();
    bad.push(0);
    assert!(read_checkpoint(&bad).is_err());
}

fn golden_fixture() -> (ModelParams, ModelConfig, FeatureSchema) {
    // Values are exact in f32 so the fixture survives the round trip.
    let cfg = config(2, 1, 1, "paper");
    let sizes = [2, 3];
    let mut p = zero_params(&sizes, &cfg);
    let mut v = 0.0;
    for t in p.tensors_mut() {
        for x in t.iter_mut() {
            v += 0.125;
            *x = if (v * 8.0) as i64 % 3 == 0 { -v } else { v };
        }
    }
    (p, cfg, tiny_schema(&sizes))
}

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden.fcnckpt")
}

#[test]
fn checkpoint_golden_file_is_stable() {
    let (p, cfg, schema) = golden_fixture();
    let bytes = write_checkpoint(&p, &cfg, &schema).unwrap();
    if std::env::var_os("FCN_BLESS").is_some() {
        std::fs::write(golden_path(), &bytes).unwrap();
    }
    let golden = std::fs::read(golden_path()).expect("golden checkpoint is committed");
    assert_eq!(&golden[..8], CHECKPOINT_MAGIC);
    assert_eq!(golden, bytes);
    let (p2, cfg2, schema2) = read_checkpoint(&golden).unwrap();
    assert_eq!((p2, cfg2, schema2), (p, cfg, schema));
}

#[test]
fn inspect_uniform_weights() {
    let cfg = config(4, 0, 1, "paper");
    let sizes = [3, 3, 3];
    let mut p = generic_params(&sizes, &cfg, 2);
    p.ecn_layers[0].w = DenseMatrix::filled(6, 12, 1.0);
    let batch = random_batch(&sizes, 5, &mut Rng::new(1));
    let fi = field_importance(&p, &cfg, &batch, 0, Branch::Deep).unwrap();
    assert_eq!(fi.pair_matrix.shape(), (3, 3));
    let expect = (16.0f64 / 2.0).sqrt();
    assert!(fi.pair_matrix.data().iter().all(|&v| (v - expect).abs() < 1e-12));
}

#[test]
fn inspect_identity_mask_has_no_sparsity() {
    let cfg = config(4, 2, 0, "identity");
    let sizes = [4, 4];
    let p = generic_params(&sizes, &cfg, 6);
    let batch = random_batch(&sizes, 20, &mut Rng::new(2));
    let fi = field_importance(&p, &cfg, &batch, 1, Branch::Shallow).unwrap();
    assert_eq!(fi.mask_sparsity, vec![0.0, 0.0]);
    assert!(fi.cross_strengths.iter().all(|&v| v > 0.0));
}

#[test]
fn inspect_block_zeroed_weight() {
    // f = 2, d = 2: x = [e_1a, e_2a, e_1b, e_2b], c = (c_1, c_2).
    let cfg = config(2, 1, 0, "paper");
    let sizes = [2, 2];
    let mut p = generic_params(&sizes, &cfg, 4);
    p.lcn_layers[0].w = DenseMatrix::from_rows(&[vec![1.0, 0.0, 2.0, 0.0], vec![3.0, 4.0, 5.0, 6.0]]).unwrap();
    let batch = random_batch(&sizes, 3, &mut Rng::new(3));
    let fi = field_importance(&p, &cfg, &batch, 0, Branch::Shallow).unwrap();
    assert_eq!(fi.pair_matrix.get(0, 1), 0.0);
    assert!((fi.pair_matrix.get(0, 0) - 5f64.sqrt()).abs() < 1e-12);
    assert!((fi.pair_matrix.get(1, 0) - 34f64.sqrt()).abs() < 1e-12);
    assert!((fi.pair_matrix.get(1, 1) - 52f64.sqrt()).abs() < 1e-12);
}

#[test]
fn inspect_rejects_missing_layer() {
    let cfg = config(2, 1, 2, "paper");
    let p = zero_params(&[2], &cfg);
    let batch = random_batch(&[2], 2, &mut Rng::new(0));
    assert!(matches!(
        field_importance(&p, &cfg, &batch, 1, Branch::Shallow),
        Err(FcnError::Index(_))
    ));
    assert!(field_importance(&p, &cfg, &batch, 1, Branch::Deep).is_ok());
}

#[test]
fn config_validation() {
    let mut cfg = ModelConfig::default();
    assert!(cfg.validate().is_ok());
    cfg.d = 3;
    assert!(cfg.validate().is_err());
    let cfg = ModelConfig {
        dropout_rate: 1.0,
        ..ModelConfig::default()
    };
    assert!(cfg.validate().is_err());
    assert!(ModelConfig::default().with_mask("topk").is_err());
    assert_eq!(Branch::parse("ecn").unwrap(), Branch::Deep);
    assert_eq!(Branch::parse("shallow").unwrap(), Branch::Shallow);
}

#[test]
fn gradients_merge_accumulates() {
    let cfg = config(2, 1, 1, "paper");
    let p = zero_params(&[3], &cfg);
    let mut a = Gradients::zeros_like(&p);
    a.embedding_row(0, 2, 2)[1] = 1.5;
    a.heads.b_deep = 1.0;
    let mut b = a.clone();
    b.merge(&a);
    assert_eq!(b.embeddings[&(0, 2)], vec![0.0, 3.0]);
    assert_eq!(b.heads.b_deep, 2.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dead_layer_is_identity(x in prop::collection::vec(-5.0f64..5.0, 6), anchor in prop::collection::vec(-5.0f64..5.0, 6)) {
        let layer = CrossLayerParams { gain: vec![1.0; 3], ..CrossLayerParams::zeros(6) };
        for name in ["paper", "no_ln", "identity"] {
            let m = masks().get(name).unwrap();
            let (out, _) = cross_layer_forward(&x, &anchor, &layer, &*m, 1e-5, None).unwrap();
            prop_assert_eq!(&out, &x);
        }
    }

    #[test]
    fn outputs_in_unit_interval_and_fused(seed in 0u64..1000, depth in 0usize..3) {
        let cfg = config(4, depth, depth, "paper");
        let sizes = [3, 4];
        let p = generic_params(&sizes, &cfg, seed);
        let batch = random_batch(&sizes, 8, &mut Rng::new(seed));
        let out = forward(&batch, &p, &cfg, false, &mut Rng::new(seed)).unwrap();
        for r in 0..batch.n {
            for v in [out.y[r], out.y_deep[r], out.y_shallow[r]] {
                prop_assert!(v > 0.0 && v < 1.0);
            }
            prop_assert_eq!(out.y[r], (out.y_deep[r] + out.y_shallow[r]) / 2.0);
        }
    }

    #[test]
    fn mask_sparsity_near_half(seed in 0u64..10_000) {
        let paper = masks().get("paper").unwrap();
        let mut rng = Rng::new(seed);
        let c: Vec<f64> = (0..1024).map(|_| rng.normal()).collect();
        let (m, _) = self_mask(&c, &[1.0; 1024], &[0.0; 1024], &*paper, 1e-5);
        let zeros = m.iter().filter(|&&v| v == 0.0).count() as f64 / 1024.0;
        prop_assert!((0.45..=0.55).contains(&zeros));
    }
}
