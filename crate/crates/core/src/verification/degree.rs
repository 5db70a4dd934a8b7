//! Interaction-order probe: with the identity mask and zero biases each head
//! logit is a polynomial in the scale `t` of the first-order input, and its
//! degree is read off from vanishing forward differences.
//!
//! The grid is centered, `t ∈ [−s, s]`. On a one-sided grid starting at zero
//! the top-order difference of a degree-16 polynomial is about `p!/(p+2)^p`
//! of the largest sampled value, below any usable vanishing threshold.

use crate::error::{FcnError, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::numerics::Rng;

use super::reference::{logits, MaskRule, Pattern};

/// A difference sequence vanishes when every entry is at most this fraction
/// of the largest sampled value.
pub const VANISH_RELATIVE: f64 = 1e-6;
const FIELDS: usize = 3;
const DIM: usize = 4;
const SHRINK: f64 = 0.1;
pub const GROWTH: f64 = 10.0;
const WIDENINGS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasuredDegree {
    pub ecn: usize,
    pub lcn: usize,
}

/// Smallest `k` whose `k`-th forward difference vanishes, minus one. `None`
/// when even the last difference is non-negligible.
pub fn measured_degree(values: &[f64]) -> Option<usize> {
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Some(0);
    }
    let mut diff = values.to_vec();
    for k in 1..values.len() {
        diff = diff.windows(2).map(|w| w[1] - w[0]).collect();
        if diff.iter().all(|v| v.abs() <= VANISH_RELATIVE * scale) {
            return Some(k - 1);
        }
    }
    None
}

/// Random cross weights and heads, identity mask, zero biases.
pub fn probe_params(ecn_depth: usize, lcn_depth: usize, rng: &mut Rng) -> Result<(ModelParams, ModelConfig)> {
    let config = ModelConfig {
        d: DIM,
        lcn_depth,
        ecn_depth,
        dropout_rate: 0.0,
        seed: rng.next_u64(),
        ..ModelConfig::default()
    }
    .with_mask("identity")?;
    let params = ModelParams::init(&config, &[2; FIELDS])?;
    Ok((params, config))
}

fn grid_values(params: &ModelParams, direction: &[f64], points: usize, span: f64) -> (Vec<f64>, Vec<f64>) {
    let mut deep = Vec::with_capacity(points);
    let mut shallow = Vec::with_capacity(points);
    for k in 0..points {
        let t = span * (-1.0 + 2.0 * k as f64 / (points - 1) as f64);
        let x: Vec<f64> = direction.iter().map(|v| t * v).collect();
        let (zd, zs) = logits(&x, params, MaskRule::Identity, 1e-5, &mut Pattern::new());
        deep.push(zd);
        shallow.push(zs);
    }
    (deep, shallow)
}

/// Degree of each head along `t·direction`, on a grid of `2^L + 3` points
/// with `L` the deeper of the two stacks.
///
/// Near `t = 0` a high-order coefficient can sit below the vanishing
/// threshold relative to the low-order terms, so the grid is widened by
/// [`GROWTH`] while values stay finite and the highest degree seen is kept.
/// If the first grid overflows it is shrunk once before giving up.
pub fn probe_direction(params: &ModelParams, direction: &[f64]) -> Result<MeasuredDegree> {
    let depth = params.ecn_layers.len().max(params.lcn_layers.len());
    let points = (1usize << depth) + 3;
    let mut span = 1.0;
    let mut best: Option<MeasuredDegree> = None;
    for step in 0..WIDENINGS {
        let (deep, shallow) = grid_values(params, direction, points, span);
        if !deep.iter().chain(&shallow).all(|v| v.is_finite()) {
            if best.is_some() {
                break;
            }
            if step == 0 {
                span *= SHRINK;
                let (deep, shallow) = grid_values(params, direction, points, span);
                if deep.iter().chain(&shallow).all(|v| v.is_finite()) {
                    return measure_pair(&deep, &shallow, points);
                }
            }
            return Err(FcnError::NonFinite(format!(
                "probe values overflow on a grid of half-width {span}"
            )));
        }
        let m = measure_pair(&deep, &shallow, points)?;
        best = Some(match best {
            Some(b) => MeasuredDegree {
                ecn: b.ecn.max(m.ecn),
                lcn: b.lcn.max(m.lcn),
            },
            None => m,
        });
        span *= GROWTH;
    }
    Ok(best.expect("the first grid either measured or returned"))
}

fn measure_pair(deep: &[f64], shallow: &[f64], points: usize) -> Result<MeasuredDegree> {
    let measure = |v: &[f64], branch: &str| {
        measured_degree(v)
            .ok_or_else(|| FcnError::Data(format!("{branch} degree exceeds what {points} grid points resolve")))
    };
    Ok(MeasuredDegree {
        ecn: measure(deep, "ecn")?,
        lcn: measure(shallow, "lcn")?,
    })
}

/// Fresh random model and direction, measured once.
pub fn degree_probe(ecn_depth: usize, lcn_depth: usize, rng: &mut Rng) -> Result<MeasuredDegree> {
    let (params, _) = probe_params(ecn_depth, lcn_depth, rng)?;
    let direction: Vec<f64> = (0..params.width()).map(|_| rng.normal()).collect();
    probe_direction(&params, &direction)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn differences_identify_polynomial_degree() {
        let grid: Vec<f64> = (0..10).map(|k| -1.0 + 2.0 * k as f64 / 9.0).collect();
        let cubic: Vec<f64> = grid.iter().map(|t| 2.0 * t * t * t - t + 0.5).collect();
        assert_eq!(measured_degree(&cubic), Some(3));
        assert_eq!(measured_degree(&[3.0; 5]), Some(0));
        assert_eq!(measured_degree(&[0.0; 5]), Some(0));
        let exp: Vec<f64> = grid.iter().map(|t| t.exp()).collect();
        assert_eq!(measured_degree(&exp[..4]), None);
    }

    #[test]
    fn degree_sixteen_is_resolved() {
        let n = 19;
        let grid: Vec<f64> = (0..n).map(|k| -1.0 + 2.0 * k as f64 / (n - 1) as f64).collect();
        let p: Vec<f64> = grid.iter().map(|t| t.powi(16) + 3.0 * t.powi(3) - 1.0).collect();
        assert_eq!(measured_degree(&p), Some(16));
    }

    #[test]
    fn depth_zero_is_linear() {
        let mut rng = Rng::new(1);
        assert_eq!(degree_probe(0, 0, &mut rng).unwrap(), MeasuredDegree { ecn: 1, lcn: 1 });
    }

    #[test]
    fn persistent_overflow_is_an_error() {
        let mut rng = Rng::new(2);
        let (params, _) = probe_params(1, 1, &mut rng).unwrap();
        let huge: Vec<f64> = (0..params.width()).map(|_| 1e200).collect();
        assert!(probe_direction(&params, &huge).is_err());
    }
}
