//! Tabular ingestion: numeric discretization, min-count vocabularies with an
//! OOV id, label parsing, splits, and a synthetic parity workload whose signal
//! lives only in interactions of a chosen order.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::{Arc, OnceLock};

use crate::error::{FcnError, Result};
use crate::numerics::Rng;
use crate::registry::{Handle, Named, Registry};

pub const LABEL_COLUMN: &str = "label";
pub const OOV_ID: u32 = 0;
pub const OOV_TOKEN: &str = "OOV";

/// Maps a raw numeric value to a categorical token.
pub trait Discretizer: Named + Send + Sync {
    /// Persistent code used by checkpoints.
    fn code(&self) -> u32;

    /// Token for a finite `x`; the caller handles non-finite input.
    fn bucket(&self, x: f64) -> String;
}

/// `floor(ln(x)^2)` for `x > 2`, else `"1"`.
pub struct LnSquared;

impl Named for LnSquared {
    fn name(&self) -> &'static str {
        "lnsq"
    }
}

impl Discretizer for LnSquared {
    fn code(&self) -> u32 {
        0
    }

    fn bucket(&self, x: f64) -> String {
        if x > 2.0 {
            let l = x.ln();
            format!("{}", (l * l).floor() as i64)
        } else {
            "1".to_string()
        }
    }
}

/// `floor(log2(x))` for `x > 2`, else `"1"`.
pub struct Log2;

impl Named for Log2 {
    fn name(&self) -> &'static str {
        "log2"
    }
}

impl Discretizer for Log2 {
    fn code(&self) -> u32 {
        1
    }

    fn bucket(&self, x: f64) -> String {
        if x > 2.0 {
            format!("{}", x.log2().floor() as i64)
        } else {
            "1".to_string()
        }
    }
}

pub fn discretizers() -> &'static Registry<dyn Discretizer> {
    static REG: OnceLock<Registry<dyn Discretizer>> = OnceLock::new();
    REG.get_or_init(|| {
        Registry::<dyn Discretizer>::new("discretizer")
            .with(Arc::new(LnSquared))
            .with(Arc::new(Log2))
    })
}

pub fn discretizer_by_code(code: u32) -> Result<Handle<dyn Discretizer>> {
    discretizers()
        .iter()
        .find(|d| d.code() == code)
        .map(|d| Handle(Arc::clone(d)))
        .ok_or_else(|| FcnError::Malformed(format!("unknown discretizer code {code}")))
}

/// Token for a numeric value under the default `lnsq` reading; `None` means OOV.
pub fn discretize_numeric(x: f64) -> Option<String> {
    x.is_finite().then(|| LnSquared.bucket(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Categorical,
    Numeric,
}

impl FieldKind {
    pub fn code(self) -> u8 {
        match self {
            FieldKind::Categorical => 0,
            FieldKind::Numeric => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(FieldKind::Categorical),
            1 => Ok(FieldKind::Numeric),
            other => Err(FcnError::Malformed(format!("unknown field kind code {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    /// Tokens seen fewer times than this map to OOV.
    pub min_count: u32,
}

impl FieldSpec {
    pub fn categorical(name: impl Into<String>, min_count: u32) -> Self {
        Self {
            name: name.into(),
            kind: FieldKind::Categorical,
            min_count,
        }
    }

    pub fn numeric(name: impl Into<String>, min_count: u32) -> Self {
        Self {
            name: name.into(),
            kind: FieldKind::Numeric,
            min_count,
        }
    }
}

/// Token ↔ id table for one field. Id 0 is always OOV.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    fn empty() -> Self {
        Self {
            tokens: vec![OOV_TOKEN.to_string()],
            index: HashMap::new(),
        }
    }

    /// Rebuilds a vocabulary from tokens in id order; entry 0 is the OOV slot.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(FcnError::Malformed("vocabulary without an OOV slot".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, tok) in tokens.iter().enumerate().skip(1) {
            if index.insert(tok.clone(), id as u32).is_some() {
                return Err(FcnError::Malformed(format!("duplicate vocabulary token `{tok}`")));
            }
        }
        Ok(Self { tokens, index })
    }

    fn push(&mut self, token: &str) {
        let id = self.tokens.len() as u32;
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(OOV_ID)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    pub fields: Vec<FieldSpec>,
    pub vocabs: Vec<Vocab>,
    pub discretizer: Handle<dyn Discretizer>,
}

impl FeatureSchema {
    pub fn num_fields(&self) -> usize {
        self.fields.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.vocabs.iter().map(Vocab::size).collect()
    }

    /// Token a raw cell contributes to field `i` (before vocabulary lookup).
    fn token<'a>(&self, i: usize, raw: &'a str) -> Option<std::borrow::Cow<'a, str>> {
        match self.fields[i].kind {
            FieldKind::Categorical => Some(std::borrow::Cow::Borrowed(raw)),
            FieldKind::Numeric => raw
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(|x| std::borrow::Cow::Owned(self.discretizer.bucket(x))),
        }
    }

    fn id(&self, i: usize, raw: &str) -> u32 {
        self.token(i, raw).map_or(OOV_ID, |t| self.vocabs[i].id(&t))
    }
}

/// A CSV table held as strings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let header = rdr.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec?.iter().map(str::to_string).collect());
        }
        Ok(Self { header, rows })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| FcnError::Data(format!("cannot open {}: {e}", path.display())))?;
        Self::from_reader(std::io::BufReader::new(file))
    }

    pub fn to_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.to_writer(std::io::BufWriter::new(file))
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            header: self.header.clone(),
            rows: rows.iter().map(|&r| self.rows[r].clone()).collect(),
        }
    }

    /// Column index of every schema field, failing on the first one absent.
    fn field_columns(&self, fields: &[FieldSpec]) -> Result<Vec<usize>> {
        fields
            .iter()
            .map(|f| {
                self.column(&f.name).ok_or_else(|| {
                    FcnError::Data(format!("field `{}` is not a column of the input", f.name))
                })
            })
            .collect()
    }
}

/// Builds per-field vocabularies: tokens seen at least `min_count` times get
/// ids 1, 2, ... in first-seen order; everything else is OOV (id 0).
pub fn build_schema(
    table: &RawTable,
    specs: &[FieldSpec],
    discretizer: Handle<dyn Discretizer>,
) -> Result<FeatureSchema> {
    if table.rows.is_empty() {
        return Err(FcnError::Data("cannot build a schema from zero records".into()));
    }
    for (i, spec) in specs.iter().enumerate() {
        if spec.min_count == 0 {
            return Err(FcnError::Config(format!("field `{}`: min_count must be >= 1", spec.name)));
        }
        if specs[..i].iter().any(|s| s.name == spec.name) {
            return Err(FcnError::Config(format!("duplicate field name `{}`", spec.name)));
        }
    }
    let columns = table.field_columns(specs)?;
    let mut schema = FeatureSchema {
        fields: specs.to_vec(),
        vocabs: vec![Vocab::empty(); specs.len()],
        discretizer,
    };

    let mut order: Vec<Vec<String>> = vec![Vec::new(); specs.len()];
    let mut counts: Vec<HashMap<String, u32>> = vec![HashMap::new(); specs.len()];
    for (r, row) in table.rows.iter().enumerate() {
        for (i, &col) in columns.iter().enumerate() {
            let raw = row.get(col).ok_or_else(|| FcnError::MissingField {
                record: r,
                field: specs[i].name.clone(),
            })?;
            let Some(tok) = schema.token(i, raw) else {
                continue;
            };
            match counts[i].get_mut(tok.as_ref()) {
                Some(c) => *c += 1,
                None => {
                    counts[i].insert(tok.to_string(), 1);
                    order[i].push(tok.into_owned());
                }
            }
        }
    }
    for (i, spec) in specs.iter().enumerate() {
        for tok in &order[i] {
            if counts[i][tok] >= spec.min_count {
                schema.vocabs[i].push(tok);
            }
        }
    }
    Ok(schema)
}

/// Integer-encoded rows: `ids` is row-major `n × fields`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBatch {
    pub n: usize,
    pub fields: usize,
    pub ids: Vec<u32>,
    /// Empty for unlabeled input, otherwise one 0/1 entry per row.
    pub labels: Vec<u8>,
}

impl EncodedBatch {
    pub fn row(&self, r: usize) -> &[u32] {
        &self.ids[r * self.fields..(r + 1) * self.fields]
    }

    pub fn has_labels(&self) -> bool {
        self.labels.len() == self.n
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        let mut ids = Vec::with_capacity(rows.len() * self.fields);
        for &r in rows {
            ids.extend_from_slice(self.row(r));
        }
        let labels = if self.has_labels() {
            rows.iter().map(|&r| self.labels[r]).collect()
        } else {
            Vec::new()
        };
        Self {
            n: rows.len(),
            fields: self.fields,
            ids,
            labels,
        }
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }
}

fn encode_inner(table: &RawTable, schema: &FeatureSchema, labels: bool) -> Result<EncodedBatch> {
    let columns = table.field_columns(&schema.fields)?;
    let label_col = if labels {
        Some(table.column(LABEL_COLUMN).ok_or_else(|| {
            FcnError::Data(format!("input has no `{LABEL_COLUMN}` column"))
        })?)
    } else {
        None
    };
    let f = schema.num_fields();
    let mut ids = Vec::with_capacity(table.rows.len() * f);
    let mut ys = Vec::with_capacity(if labels { table.rows.len() } else { 0 });
    for (r, row) in table.rows.iter().enumerate() {
        for (i, &col) in columns.iter().enumerate() {
            let raw = row.get(col).ok_or_else(|| FcnError::MissingField {
                record: r,
                field: schema.fields[i].name.clone(),
            })?;
            ids.push(schema.id(i, raw));
        }
        if let Some(lc) = label_col {
            let raw = row.get(lc).map(|s| s.trim()).unwrap_or("");
            let y = match raw {
                "1" => 1,
                "0" => 0,
                other => {
                    return Err(FcnError::BadLabel {
                        // header is line 1
                        line: r + 2,
                        value: other.to_string(),
                    })
                }
            };
            ys.push(y);
        }
    }
    Ok(EncodedBatch {
        n: table.rows.len(),
        fields: f,
        ids,
        labels: ys,
    })
}

/// Encodes feature ids and the `label` column.
pub fn encode(table: &RawTable, schema: &FeatureSchema) -> Result<EncodedBatch> {
    encode_inner(table, schema, true)
}

/// Encodes feature ids only; any label column is ignored.
pub fn encode_unlabeled(table: &RawTable, schema: &FeatureSchema) -> Result<EncodedBatch> {
    encode_inner(table, schema, false)
}

/// Row counts for a three-way split: the first two are rounded, the last
/// takes the remainder.
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> Result<[usize; 3]> {
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|&f| !(f > 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(FcnError::Config(format!(
            "split fractions must be positive and sum to 1, got {fractions:?}"
        )));
    }
    let a = (n as f64 * fractions[0]).round() as usize;
    let b = ((n as f64 * fractions[1]).round() as usize).min(n.saturating_sub(a));
    let sizes = [a, b, n - a - b];
    if let Some(i) = sizes.iter().position(|&s| s == 0) {
        return Err(FcnError::Data(format!(
            "split {i} would be empty ({n} rows, fractions {fractions:?})"
        )));
    }
    Ok(sizes)
}

/// Shuffles row indices and cuts them into train/valid/test; each part keeps
/// ascending row order.
pub fn split_indices(n: usize, fractions: [f64; 3], rng: &mut Rng) -> Result<[Vec<usize>; 3]> {
    let [a, b, _] = split_sizes(n, fractions)?;
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    let mut parts = [idx[..a].to_vec(), idx[a..a + b].to_vec(), idx[a + b..].to_vec()];
    for p in &mut parts {
        p.sort_unstable();
    }
    Ok(parts)
}

pub fn split(
    batch: &EncodedBatch,
    fractions: [f64; 3],
    rng: &mut Rng,
) -> Result<(EncodedBatch, EncodedBatch, EncodedBatch)> {
    let [a, b, c] = split_indices(batch.n, fractions, rng)?;
    Ok((batch.subset(&a), batch.subset(&b), batch.subset(&c)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub fields: usize,
    pub cardinality: usize,
    /// Number of leading fields whose latent product decides the label.
    pub order: usize,
    pub rows: usize,
    pub label_noise: f64,
}

impl SynthConfig {
    pub fn new(fields: usize, cardinality: usize, order: usize, rows: usize) -> Self {
        Self {
            fields,
            cardinality,
            order,
            rows,
            label_noise: 0.05,
        }
    }
}

/// Latent ±1 value of every category, per field.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTruth {
    pub order: usize,
    pub label_noise: f64,
    pub latents: Vec<Vec<i8>>,
}

impl SynthTruth {
    pub fn describe(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# label = 1 iff the product of latents of fields f0..f{} is +1", self.order - 1);
        let _ = writeln!(s, "order={} label_noise={}", self.order, self.label_noise);
        for (i, field) in self.latents.iter().enumerate() {
            let signal = if i < self.order { "signal" } else { "noise" };
            let vals: Vec<String> = field
                .iter()
                .enumerate()
                .map(|(c, &z)| format!("c{c}:{z:+}"))
                .collect();
            let _ = writeln!(s, "f{i} {signal} {}", vals.join(" "));
        }
        s
    }
}

/// Parity workload. Every category carries a latent sign; each row draws a
/// sign uniformly per field and then a category with that sign, so signs are
/// independent fair coins and no interaction of order below `order` carries
/// label signal.
pub fn synth_interaction_data(cfg: &SynthConfig, rng: &mut Rng) -> Result<(RawTable, SynthTruth)> {
    if cfg.order < 1 || cfg.order > cfg.fields {
        return Err(FcnError::Config(format!(
            "interaction order must lie in [1, {}], got {}",
            cfg.fields, cfg.order
        )));
    }
    if cfg.cardinality < 2 {
        return Err(FcnError::Config("cardinality must be >= 2".into()));
    }
    let mut latents = Vec::with_capacity(cfg.fields);
    let mut by_sign: Vec<[Vec<usize>; 2]> = Vec::with_capacity(cfg.fields);
    for _ in 0..cfg.fields {
        let mut z: Vec<i8> = (0..cfg.cardinality)
            .map(|c| if c < cfg.cardinality / 2 { 1 } else { -1 })
            .collect();
        rng.shuffle(&mut z);
        let pos = (0..cfg.cardinality).filter(|&c| z[c] > 0).collect();
        let neg = (0..cfg.cardinality).filter(|&c| z[c] < 0).collect();
        latents.push(z);
        by_sign.push([pos, neg]);
    }

    let mut header = vec![LABEL_COLUMN.to_string()];
    header.extend((0..cfg.fields).map(|i| format!("f{i}")));
    let mut rows = Vec::with_capacity(cfg.rows);
    for _ in 0..cfg.rows {
        let mut row = Vec::with_capacity(cfg.fields + 1);
        row.push(String::new());
        let mut parity = 1i8;
        for (i, groups) in by_sign.iter().enumerate() {
            let negative = rng.bernoulli(0.5);
            let group = &groups[negative as usize];
            let cat = group[rng.below(group.len())];
            if i < cfg.order {
                parity *= latents[i][cat];
            }
            row.push(format!("c{cat}"));
        }
        let mut label = parity > 0;
        if rng.bernoulli(cfg.label_noise) {
            label = !label;
        }
        row[0] = if label { "1" } else { "0" }.to_string();
        rows.push(row);
    }
    let truth = SynthTruth {
        order: cfg.order,
        label_noise: cfg.label_noise,
        latents,
    };
    Ok((RawTable { header, rows }, truth))
}

/// Categorical specs for every non-label column, with `numeric` names marked
/// as numeric.
pub fn infer_field_specs(table: &RawTable, numeric: &[String], min_count: u32) -> Vec<FieldSpec> {
    table
        .header
        .iter()
        .filter(|h| h.as_str() != LABEL_COLUMN)
        .map(|h| {
            if numeric.iter().any(|n| n == h) {
                FieldSpec::numeric(h.clone(), min_count)
            } else {
                FieldSpec::categorical(h.clone(), min_count)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    use crate::numerics::Rng;

    fn lnsq() -> Handle<dyn Discretizer> {
        discretizers().get("lnsq").unwrap()
    }

    fn table(header: &[&str], rows: &[&[&str]]) -> RawTable {
        RawTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: rows
                .iter()
                .map(|r| r.iter().map(|s| s.to_string()).collect())
                .collect(),
        }
    }

    #[test]
    fn discretize_examples() {
        assert_eq!(discretize_numeric(2.0).unwrap(), "1");
        assert_eq!(discretize_numeric(100.0).unwrap(), "21");
        assert_eq!(discretize_numeric(3.0).unwrap(), "1");
        assert_eq!(discretize_numeric(-5.0).unwrap(), "1");
        assert!(discretize_numeric(f64::NAN).is_none());
        assert!(discretize_numeric(f64::INFINITY).is_none());
        assert_eq!(Log2.bucket(100.0), "6");
        assert_eq!(Log2.bucket(2.0), "1");
    }

    #[test]
    fn min_count_threshold() {
        let mut rows: Vec<Vec<&str>> = vec![vec!["0", "rare"]; 9];
        rows.extend(vec![vec!["1", "common"]; 10]);
        let rows: Vec<&[&str]> = rows.iter().map(|r| r.as_slice()).collect();
        let t = table(&["label", "a"], &rows);
        let schema = build_schema(&t, &[FieldSpec::categorical("a", 10)], lnsq()).unwrap();
        assert_eq!(schema.vocabs[0].id("rare"), OOV_ID);
        assert_eq!(schema.vocabs[0].id("common"), 1);
        assert_eq!(schema.sizes(), vec![2]);
    }

    #[test]
    fn fields_have_independent_vocabularies() {
        let t = table(&["label", "a", "b"], &[&["0", "x", "y"], &["1", "y", "x"]]);
        let specs = [FieldSpec::categorical("a", 1), FieldSpec::categorical("b", 1)];
        let schema = build_schema(&t, &specs, lnsq()).unwrap();
        assert_eq!(schema.vocabs[0].id("x"), 1);
        assert_eq!(schema.vocabs[1].id("x"), 2);
        assert_eq!(schema.vocabs[1].id("y"), 1);
    }

    #[test]
    fn encode_known_unseen_and_numeric() {
        let t = table(
            &["label", "a", "n"],
            &[&["1", "x", "100"], &["0", "y", "3"], &["1", "x", ""]],
        );
        let specs = [FieldSpec::categorical("a", 1), FieldSpec::numeric("n", 1)];
        let schema = build_schema(&t, &specs, lnsq()).unwrap();
        assert_eq!(schema.vocabs[1].tokens(), &["OOV", "21", "1"]);
        let probe = table(&["a", "label", "n"], &[&["zzz", "0", "101"], &["y", "1", "nan"]]);
        let b = encode(&probe, &schema).unwrap();
        assert_eq!(b.ids, vec![0, 1, 2, 0]);
        assert_eq!(b.labels, vec![0, 1]);
    }

    #[test]
    fn build_schema_reports_record_with_missing_field() {
        let t = table(&["label", "a", "b"], &[&["0", "x", "y"], &["1", "x"]]);
        let specs = [FieldSpec::categorical("a", 1), FieldSpec::categorical("b", 1)];
        match build_schema(&t, &specs, lnsq()) {
            Err(FcnError::MissingField { record, field }) => {
                assert_eq!(record, 1);
                assert_eq!(field, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(build_schema(&RawTable::default(), &specs, lnsq()).is_err());
    }

    #[test]
    fn bad_label_reports_line() {
        let t = table(&["label", "a"], &[&["1", "x"], &["yes", "x"]]);
        let schema = build_schema(&t, &[FieldSpec::categorical("a", 1)], lnsq()).unwrap();
        match encode(&t, &schema) {
            Err(FcnError::BadLabel { line, value }) => {
                assert_eq!(line, 3);
                assert_eq!(value, "yes");
            }
            other => panic!("unexpected {other:?}"),
        }
        let b = encode_unlabeled(&t, &schema).unwrap();
        assert!(!b.has_labels());
    }

    #[test]
    fn csv_roundtrip_with_quoting() {
        let text = "label,a\n1,\"x,y\"\n0,\"say \"\"hi\"\"\"\n";
        let t = RawTable::from_reader(text.as_bytes()).unwrap();
        assert_eq!(t.rows[0][1], "x,y");
        assert_eq!(t.rows[1][1], "say \"hi\"");
        let mut out = Vec::new();
        t.to_writer(&mut out).unwrap();
        assert_eq!(RawTable::from_reader(out.as_slice()).unwrap(), t);
    }

    #[test]
    fn split_examples() {
        let batch = EncodedBatch {
            n: 100,
            fields: 1,
            ids: (0..100).collect(),
            labels: vec![0; 100],
        };
        let (a, b, c) = split(&batch, [0.8, 0.1, 0.1], &mut Rng::new(3)).unwrap();
        assert_eq!((a.n, b.n, c.n), (80, 10, 10));
        let again = split(&batch, [0.8, 0.1, 0.1], &mut Rng::new(3)).unwrap();
        assert_eq!((a.clone(), b.clone(), c.clone()), again);
        let mut all: Vec<u32> = a.ids.iter().chain(&b.ids).chain(&c.ids).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<u32>>());

        assert!(split(&batch.subset(&[0, 1]), [0.8, 0.1, 0.1], &mut Rng::new(0)).is_err());
        assert!(split(&batch, [0.5, 0.5, 0.5], &mut Rng::new(0)).is_err());
    }

    fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    }

    #[test]
    fn synth_parity_has_balanced_labels_and_no_marginal_signal() {
        let cfg = SynthConfig::new(8, 10, 4, 50_000);
        let (t, truth) = synth_interaction_data(&cfg, &mut Rng::new(11)).unwrap();
        assert_eq!(t.rows.len(), 50_000);
        let ys: Vec<f64> = t.rows.iter().map(|r| r[0].parse().unwrap()).collect();
        let rate = ys.iter().sum::<f64>() / ys.len() as f64;
        assert!((rate - 0.5).abs() < 0.02, "positive rate {rate}");
        for field in 0..cfg.fields {
            for cat in 0..cfg.cardinality {
                let tok = format!("c{cat}");
                let xs: Vec<f64> = t
                    .rows
                    .iter()
                    .map(|r| if r[field + 1] == tok { 1.0 } else { 0.0 })
                    .collect();
                let corr = correlation(&xs, &ys);
                assert!(corr.abs() < 0.03, "field {field} cat {cat}: {corr}");
            }
        }
        assert!(truth.describe().contains("f3 signal"));
        assert!(truth.describe().contains("f4 noise"));
    }

    #[test]
    fn synth_first_order_is_deterministic_in_one_field() {
        let cfg = SynthConfig {
            label_noise: 0.0,
            ..SynthConfig::new(3, 4, 1, 200)
        };
        let (t, truth) = synth_interaction_data(&cfg, &mut Rng::new(5)).unwrap();
        for r in &t.rows {
            let cat: usize = r[1][1..].parse().unwrap();
            let expect = if truth.latents[0][cat] > 0 { "1" } else { "0" };
            assert_eq!(r[0], expect);
        }
        let (again, _) = synth_interaction_data(&cfg, &mut Rng::new(5)).unwrap();
        assert_eq!(t, again);
        assert!(synth_interaction_data(&SynthConfig::new(3, 4, 4, 10), &mut Rng::new(0)).is_err());
        assert!(synth_interaction_data(&SynthConfig::new(3, 1, 2, 10), &mut Rng::new(0)).is_err());
    }

    proptest! {
        #[test]
        fn encode_stays_in_range_and_is_lossless_at_min_count_one(
            cells in prop::collection::vec(prop::collection::vec(0u8..6, 3), 1..40),
            min_count in 1u32..4,
        ) {
            let rows: Vec<Vec<String>> = cells
                .iter()
                .map(|r| {
                    let mut v = vec!["0".to_string()];
                    v.extend(r.iter().map(|c| format!("t{c}")));
                    v
                })
                .collect();
            let t = RawTable { header: vec!["label".into(), "a".into(), "b".into(), "c".into()], rows };
            let specs: Vec<FieldSpec> =
                ["a", "b", "c"].iter().map(|n| FieldSpec::categorical(*n, min_count)).collect();
            let schema = build_schema(&t, &specs, lnsq()).unwrap();
            let b = encode(&t, &schema).unwrap();
            let sizes = schema.sizes();
            for r in 0..b.n {
                for (i, &id) in b.row(r).iter().enumerate() {
                    prop_assert!((id as usize) < sizes[i]);
                }
            }
            if min_count == 1 {
                for i in 0..3 {
                    for r1 in 0..b.n {
                        for r2 in 0..b.n {
                            let same_tok = t.rows[r1][i + 1] == t.rows[r2][i + 1];
                            prop_assert_eq!(same_tok, b.row(r1)[i] == b.row(r2)[i]);
                        }
                    }
                }
            }

            // Re-encoding the schema's own token table reproduces the ids.
            let width = sizes.iter().copied().max().unwrap();
            let decode_rows: Vec<Vec<String>> = (1..width)
                .map(|id| {
                    let mut v = vec!["1".to_string()];
                    for vocab in &schema.vocabs {
                        v.push(vocab.tokens().get(id).cloned().unwrap_or_else(|| "never-seen".into()));
                    }
                    v
                })
                .collect();
            let dt = RawTable { header: t.header.clone(), rows: decode_rows };
            let db = encode(&dt, &schema).unwrap();
            for (k, id) in (1..width).enumerate() {
                for (i, vocab) in schema.vocabs.iter().enumerate() {
                    let expect = if id < vocab.size() { id as u32 } else { OOV_ID };
                    prop_assert_eq!(db.row(k)[i], expect);
                }
            }
        }
    }
}
