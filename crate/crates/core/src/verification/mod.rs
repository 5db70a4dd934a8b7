//! Independent oracles for the model's mathematical claims, grouped into
//! named suites that report a plain-text table.

pub mod auc;
pub mod census;
pub mod degree;
pub mod grad;
pub mod reference;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use crate::error::Result;
use crate::metrics;
use crate::model::{masks, self_mask};
use crate::numerics::{Rng, Stream};
use crate::registry::{Named, Registry};

pub use auc::pairwise_auc_oracle;
pub use census::{mask_census, CensusStats};
pub use degree::{degree_probe, MeasuredDegree};
pub use grad::{audit_grid, grad_audit, grad_audit_with, GradCase, GradResult};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: String,
    pub limit: String,
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, measured: impl Into<String>, limit: impl Into<String>, pass: bool) -> Self {
        Self {
            name: name.into(),
            measured: measured.into(),
            limit: limit.into(),
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub checks: Vec<Check>,
    pub secs: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Renders reports as one aligned table with a PASS/FAIL column.
pub fn render(reports: &[SuiteReport]) -> String {
    let mut rows = vec![[
        "suite".to_string(),
        "check".to_string(),
        "measured".to_string(),
        "limit".to_string(),
        "status".to_string(),
    ]];
    for r in reports {
        for c in &r.checks {
            rows.push([
                r.suite.to_string(),
                c.name.clone(),
                c.measured.clone(),
                c.limit.clone(),
                if c.pass { "PASS" } else { "FAIL" }.to_string(),
            ]);
        }
    }
    let mut widths = [0usize; 5];
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    for r in reports {
        let _ = writeln!(
            out,
            "{}: {} in {:.2}s",
            r.suite,
            if r.passed() { "PASS" } else { "FAIL" },
            r.secs
        );
    }
    out
}

pub trait Suite: Named + Send + Sync {
    fn checks(&self, seed: u64) -> Result<Vec<Check>>;

    fn run(&self, seed: u64) -> Result<SuiteReport> {
        let start = Instant::now();
        let checks = self.checks(seed)?;
        Ok(SuiteReport {
            suite: self.name(),
            checks,
            secs: start.elapsed().as_secs_f64(),
        })
    }
}

pub fn suites() -> &'static Registry<dyn Suite> {
    static REG: OnceLock<Registry<dyn Suite>> = OnceLock::new();
    REG.get_or_init(|| {
        Registry::<dyn Suite>::new("verification suite")
            .with(Arc::new(GradSuite))
            .with(Arc::new(DegreeSuite))
            .with(Arc::new(AucSuite))
            .with(Arc::new(MaskSuite))
    })
}

pub struct GradSuite;

impl Named for GradSuite {
    fn name(&self) -> &'static str {
        "grad"
    }
}

impl Suite for GradSuite {
    fn checks(&self, seed: u64) -> Result<Vec<Check>> {
        let results = grad_audit(&audit_grid(seed))?;
        let mut groups: BTreeMap<(usize, &str, usize, usize), Vec<&GradResult>> = BTreeMap::new();
        for r in &results {
            let order = ["paper", "no_ln", "identity"].iter().position(|m| *m == r.case.mask).unwrap_or(3);
            groups.entry((order, r.case.mask, r.case.lcn_depth, r.case.ecn_depth)).or_default().push(r);
        }
        let mut checks = Vec::new();
        for ((_, mask, lcn, ecn), rs) in groups {
            let worst = rs
                .iter()
                .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
                .expect("groups are non-empty");
            let skipped: usize = rs.iter().map(|r| r.skipped).sum();
            let checked: usize = rs.iter().map(|r| r.checked).sum();
            let mut measured = format!("{:.2e} in {} ({checked} coords", worst.max_rel_error, worst.worst_tensor);
            if skipped > 0 {
                let _ = write!(measured, ", {skipped} at kinks");
            }
            measured.push(')');
            checks.push(Check::new(
                format!("mask={mask} lcn={lcn} ecn={ecn}"),
                measured,
                format!("< {:.0e}", worst.case.tolerance()),
                rs.iter().all(|r| r.passed()),
            ));
        }
        Ok(checks)
    }
}

pub struct DegreeSuite;

impl Named for DegreeSuite {
    fn name(&self) -> &'static str {
        "degree"
    }
}

/// Directions tried per configuration.
pub const DIRECTIONS: usize = 5;

impl Suite for DegreeSuite {
    fn checks(&self, seed: u64) -> Result<Vec<Check>> {
        let mut rng = Rng::stream(seed, Stream::Verify);
        let mut cases: Vec<(String, usize, usize, usize, bool)> = Vec::new();
        for l in 1..=4 {
            cases.push((format!("ecn depth {l}"), l, 0, 1 << l, true));
        }
        for l in 1..=3 {
            cases.push((format!("lcn depth {l}"), 0, l, l + 1, false));
        }
        cases.push(("depth 0 (ecn)".into(), 0, 0, 1, true));
        cases.push(("depth 0 (lcn)".into(), 0, 0, 1, false));

        let mut checks = Vec::new();
        for (name, ecn, lcn, expected, deep) in cases {
            let (params, _) = degree::probe_params(ecn, lcn, &mut rng)?;
            let mut seen = Vec::with_capacity(DIRECTIONS);
            for _ in 0..DIRECTIONS {
                let direction: Vec<f64> = (0..params.width()).map(|_| rng.normal()).collect();
                let m = degree::probe_direction(&params, &direction)?;
                seen.push(if deep { m.ecn } else { m.lcn });
            }
            seen.dedup();
            let measured = seen.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",");
            checks.push(Check::new(
                name,
                format!("{measured} over {DIRECTIONS} directions"),
                format!("= {expected}"),
                seen == [expected],
            ));
        }
        Ok(checks)
    }
}

pub struct AucSuite;

impl Named for AucSuite {
    fn name(&self) -> &'static str {
        "auc"
    }
}

pub const AUC_BATCHES: usize = 200;
pub const AUC_MAX_ROWS: usize = 2000;
const AUC_TOLERANCE: f64 = 1e-12;

/// Random scores and labels with both classes present; every other batch
/// is quantized so that ties occur.
pub fn random_auc_batch(rng: &mut Rng, max_rows: usize, ties: bool) -> (Vec<f64>, Vec<u8>) {
    let n = 2 + rng.below(max_rows - 1);
    let rate = rng.uniform_range(0.05, 0.95);
    let mut labels: Vec<u8> = (0..n).map(|_| rng.bernoulli(rate) as u8).collect();
    labels[0] = 0;
    labels[1] = 1;
    let scores = (0..n)
        .map(|_| {
            let s = rng.uniform();
            if ties {
                (s * 20.0).floor() / 20.0
            } else {
                s
            }
        })
        .collect();
    (scores, labels)
}

impl Suite for AucSuite {
    fn checks(&self, seed: u64) -> Result<Vec<Check>> {
        let mut rng = Rng::stream(seed, Stream::Verify);
        let mut worst = 0.0f64;
        let mut worst_reverse = 0.0f64;
        for b in 0..AUC_BATCHES {
            let (scores, labels) = random_auc_batch(&mut rng, AUC_MAX_ROWS, b % 2 == 0);
            let fast = metrics::auc(&scores, &labels)?;
            worst = worst.max((fast - pairwise_auc_oracle(&scores, &labels)?).abs());
            if b % 2 == 1 {
                let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
                let rev = pairwise_auc_oracle(&flipped, &labels)?;
                worst_reverse = worst_reverse.max((rev - (1.0 - fast)).abs());
            }
        }
        let hand_scores = [0.1, 0.4, 0.35, 0.8];
        let hand_labels = [0, 0, 1, 1];
        let hand = metrics::auc(&hand_scores, &hand_labels)?;
        let hand_oracle = pairwise_auc_oracle(&hand_scores, &hand_labels)?;
        let tie = pairwise_auc_oracle(&[0.5, 0.5], &[0, 1])?;
        let tie_fast = metrics::auc(&[0.5, 0.5], &[0, 1])?;
        Ok(vec![
            Check::new(
                format!("rank vs pairwise, {AUC_BATCHES} batches n<={AUC_MAX_ROWS}"),
                format!("{worst:.1e}"),
                format!("<= {AUC_TOLERANCE:.0e}"),
                worst <= AUC_TOLERANCE,
            ),
            Check::new(
                "hand example",
                format!("{hand} / {hand_oracle}"),
                "= 0.75",
                hand == 0.75 && hand_oracle == 0.75,
            ),
            Check::new(
                "reversed scores give 1 - auc",
                format!("{worst_reverse:.1e}"),
                format!("<= {AUC_TOLERANCE:.0e}"),
                worst_reverse <= AUC_TOLERANCE,
            ),
            Check::new(
                "cross-class tie",
                format!("{tie} / {tie_fast}"),
                "= 0.5",
                tie == 0.5 && tie_fast == 0.5,
            ),
        ])
    }
}

pub struct MaskSuite;

impl Named for MaskSuite {
    fn name(&self) -> &'static str {
        "mask"
    }
}

pub const CENSUS_DIM: usize = 1024;
pub const CENSUS_TRIALS: usize = 1000;

impl Suite for MaskSuite {
    fn checks(&self, seed: u64) -> Result<Vec<Check>> {
        let mut rng = Rng::stream(seed, Stream::Verify);
        let normal = mask_census(CENSUS_DIM, CENSUS_TRIALS, &mut rng)?;
        let constant = census::constant_census(CENSUS_DIM, 20, &mut rng)?;
        let shifted = census::shifted_census(CENSUS_DIM, 100, 1.0, 10.0, &mut rng)?;

        let mut agreement = 0.0f64;
        for name in masks().names() {
            let Some(rule) = reference::MaskRule::from_name(name) else {
                continue;
            };
            let strategy = masks().get(name)?;
            for _ in 0..50 {
                let dim = 2 + rng.below(64);
                let c: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
                let gain: Vec<f64> = (0..dim).map(|_| 1.0 + 0.5 * rng.normal()).collect();
                let beta: Vec<f64> = (0..dim).map(|_| 0.5 * rng.normal()).collect();
                let (model_out, _) = self_mask(&c, &gain, &beta, &*strategy, 1e-5);
                let ref_out = reference::mask(rule, &c, &gain, &beta, 1e-5, &mut reference::Pattern::new());
                for (a, b) in model_out.iter().zip(&ref_out) {
                    agreement = agreement.max((a - b).abs());
                }
            }
        }
        Ok(vec![
            Check::new(
                format!("zero fraction, dim {CENSUS_DIM} x {CENSUS_TRIALS} normals"),
                format!("mean {:.4} std {:.4}", normal.mean, normal.std),
                "in [0.45, 0.55]",
                (0.45..=0.55).contains(&normal.mean),
            ),
            Check::new("constant input", format!("{:.4}", constant.mean), "= 1", constant.mean == 1.0),
            Check::new("shift +10", format!("{:.4}", shifted.mean), "< 0.01", shifted.mean < 0.01),
            Check::new(
                "reference vs model mask",
                format!("{agreement:.1e}"),
                "<= 1e-12",
                agreement <= 1e-12,
            ),
        ])
    }
}
