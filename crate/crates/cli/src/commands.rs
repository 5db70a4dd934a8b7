use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use fcn_core::features::{
    build_schema, discretizers, encode, encode_unlabeled, infer_field_specs, split_indices, synth_interaction_data,
    EncodedBatch, FeatureSchema, RawTable, SynthConfig,
};
use fcn_core::model::{field_importance, forward, load_checkpoint, save_checkpoint, Branch, ModelConfig, ModelParams};
use fcn_core::numerics::{DenseMatrix, Rng, Stream};
use fcn_core::training::{score, train};
use fcn_core::verification::{render, suites};
use fcn_core::FcnError;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

const SPLIT: [f64; 3] = [0.8, 0.1, 0.1];
const INFERENCE_BATCH: usize = 4096;

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)
        .map_err(|e| FcnError::Data(format!("cannot create {}: {e}", dir.display())).into())
}

fn read_table(path: &Path) -> CliResult<RawTable> {
    RawTable::read_csv(path).map_err(|e| FcnError::Data(format!("{}: {e}", path.display())).into())
}

pub struct SynthArgs {
    pub out: PathBuf,
    pub fields: usize,
    pub cardinality: usize,
    pub order: usize,
    pub rows: usize,
    pub seed: u64,
}

pub fn synth(args: &SynthArgs) -> CliResult<()> {
    let cfg = SynthConfig::new(args.fields, args.cardinality, args.order, args.rows);
    let (table, truth) = synth_interaction_data(&cfg, &mut Rng::stream(args.seed, Stream::Synth))?;
    let parts = split_indices(table.rows.len(), SPLIT, &mut Rng::stream(args.seed, Stream::Split))?;
    create_dir(&args.out)?;
    for (name, idx) in ["train", "valid", "test"].iter().zip(&parts) {
        let path = args.out.join(format!("{name}.csv"));
        table.subset(idx).write_csv(&path)?;
        println!("wrote {} rows to {}", idx.len(), path.display());
    }
    let sidecar = args.out.join("latents.txt");
    fs::write(&sidecar, truth.describe()).map_err(FcnError::from)?;
    println!("wrote latent assignments to {}", sidecar.display());
    Ok(())
}

pub fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            RunConfig::parse(&text)
        }
    }
}

pub fn train_cmd(config: Option<&Path>, train_path: &Path, valid_path: &Path, out: &Path) -> CliResult<()> {
    let cfg = load_config(config)?;
    print!("{}", cfg.echo());
    let model_config = cfg.model_config()?;
    let train_config = cfg.train_config()?;

    let train_table = read_table(train_path)?;
    let specs = infer_field_specs(&train_table, &cfg.numeric_fields, cfg.min_count);
    for name in &cfg.numeric_fields {
        if !specs.iter().any(|s| &s.name == name) {
            return Err(CliError::Usage(format!("numeric field `{name}` is not a column of the training data")));
        }
    }
    let schema = build_schema(&train_table, &specs, discretizers().get(&cfg.discretize)?)?;
    let train_set = encode(&train_table, &schema)?;
    let valid_set = encode(&read_table(valid_path)?, &schema)?;
    println!(
        "fields={} train_rows={} valid_rows={} vocab_sizes={:?}",
        schema.num_fields(),
        train_set.n,
        valid_set.n,
        schema.sizes()
    );

    let outcome = train(&train_set, &valid_set, &schema.sizes(), &model_config, &train_config, |r| {
        println!("{r}");
    })?;
    save_checkpoint(&outcome.params, &model_config, &schema, out)?;
    match outcome.best_epoch {
        Some(e) => println!("best_epoch={e} checkpoint={}", out.display()),
        None => println!("no epochs run; checkpoint={} holds the initial parameters", out.display()),
    }
    Ok(())
}

fn load_labeled(checkpoint: &Path, data: &Path) -> CliResult<(ModelParams, ModelConfig, EncodedBatch)> {
    let (params, config, schema) = load_checkpoint(checkpoint)?;
    let batch = encode(&read_table(data)?, &schema)?;
    Ok((params, config, batch))
}

pub fn eval(checkpoint: &Path, data: &Path) -> CliResult<()> {
    let (params, config, batch) = load_labeled(checkpoint, data)?;
    let scores = score(&batch, &params, &config, INFERENCE_BATCH)?;
    match scores.finish() {
        Ok(r) => {
            println!("{r}");
            Ok(())
        }
        Err(e @ FcnError::DegenerateClass { .. }) => {
            println!("logloss={:.6} n={}", scores.logloss()?, scores.len());
            Err(e.into())
        }
        Err(e) => Err(e.into()),
    }
}

/// Fused, deep and shallow predictions for every row, in input order.
pub fn predictions(params: &ModelParams, config: &ModelConfig, batch: &EncodedBatch) -> CliResult<Vec<[f64; 3]>> {
    let mut out = Vec::with_capacity(batch.n);
    let mut unused = Rng::stream(config.seed, Stream::Dropout);
    let rows: Vec<usize> = (0..batch.n).collect();
    for chunk in rows.chunks(INFERENCE_BATCH) {
        let part = batch.subset(chunk);
        let f = forward(&part, params, config, false, &mut unused)?;
        for i in 0..part.n {
            out.push([f.y[i], f.y_deep[i], f.y_shallow[i]]);
        }
    }
    Ok(out)
}

pub fn predict(checkpoint: &Path, input: &Path, output: &Path) -> CliResult<()> {
    let (params, config, schema) = load_checkpoint(checkpoint)?;
    let batch = encode_unlabeled(&read_table(input)?, &schema)?;
    let rows = predictions(&params, &config, &batch)?;
    let mut w = csv::Writer::from_path(output).map_err(FcnError::from)?;
    w.write_record(["y_hat", "y_hat_deep", "y_hat_shallow"]).map_err(FcnError::from)?;
    for r in &rows {
        w.write_record(r.iter().map(|v| v.to_string())).map_err(FcnError::from)?;
    }
    w.flush().map_err(FcnError::from)?;
    println!("wrote {} predictions to {}", rows.len(), output.display());
    Ok(())
}

fn write_vector(path: &Path, schema: &FeatureSchema, column: &str, values: &[f64]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(FcnError::from)?;
    w.write_record(["field", column]).map_err(FcnError::from)?;
    for (spec, v) in schema.fields.iter().zip(values) {
        w.write_record([spec.name.clone(), v.to_string()]).map_err(FcnError::from)?;
    }
    w.flush().map_err(FcnError::from)?;
    Ok(())
}

fn write_matrix(path: &Path, schema: &FeatureSchema, m: &DenseMatrix) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(FcnError::from)?;
    let mut header = vec!["field".to_string()];
    header.extend(schema.fields.iter().map(|f| f.name.clone()));
    w.write_record(&header).map_err(FcnError::from)?;
    for (i, spec) in schema.fields.iter().enumerate() {
        let mut row = vec![spec.name.clone()];
        row.extend(m.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(FcnError::from)?;
    }
    w.flush().map_err(FcnError::from)?;
    Ok(())
}

pub fn inspect(checkpoint: &Path, data: &Path, layer: usize, branch: &str, out: &Path) -> CliResult<()> {
    let branch = Branch::parse(branch)?;
    let (params, config, schema) = load_checkpoint(checkpoint)?;
    let batch = encode_unlabeled(&read_table(data)?, &schema)?;
    let fi = field_importance(&params, &config, &batch, layer, branch)?;
    create_dir(out)?;
    let files = [
        ("cross_strength.csv", out.join("cross_strength.csv")),
        ("mask_sparsity.csv", out.join("mask_sparsity.csv")),
        ("pair_importance.csv", out.join("pair_importance.csv")),
    ];
    write_vector(&files[0].1, &schema, "cross_strength", &fi.cross_strengths)?;
    write_vector(&files[1].1, &schema, "mask_sparsity", &fi.mask_sparsity)?;
    write_matrix(&files[2].1, &schema, &fi.pair_matrix)?;
    for (name, _) in &files {
        println!("wrote {}", out.join(name).display());
    }
    Ok(())
}

pub fn verify(suite: &str, seed: u64) -> CliResult<()> {
    let selected: Vec<_> = if suite == "all" {
        suites().iter().cloned().collect()
    } else {
        vec![suites().get(suite).map_err(|e| CliError::Usage(e.to_string()))?.0]
    };
    let mut reports = Vec::new();
    for s in selected {
        reports.push(s.run(seed)?);
    }
    print!("{}", render(&reports));
    let _ = std::io::stdout().flush();
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.suite).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(format!("failed suites: {}", failed.join(", "))))
    }
}
