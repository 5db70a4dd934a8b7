//! Zero-fraction census of the LayerNorm self mask on random inputs.

use crate::error::{FcnError, Result};
use crate::numerics::Rng;

use super::reference::{mask, MaskRule, Pattern};

pub const MIN_CENSUS_DIM: usize = 64;
const LN_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CensusStats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub trials: usize,
}

/// Zero fraction of the masked vector, gain 1 and shift 0, over `trials`
/// standard-normal inputs of length `dim`.
pub fn mask_census(dim: usize, trials: usize, rng: &mut Rng) -> Result<CensusStats> {
    shifted_census(dim, trials, 1.0, 0.0, rng)
}

/// Census with a uniform gain and shift.
pub fn shifted_census(dim: usize, trials: usize, gain: f64, beta: f64, rng: &mut Rng) -> Result<CensusStats> {
    let gain = vec![gain; dim];
    let beta = vec![beta; dim];
    census_with(dim, trials, |rng| (0..dim).map(|_| rng.normal()).collect(), &gain, &beta, rng)
}

/// Census over constant input vectors; every gate is closed by the clamp.
pub fn constant_census(dim: usize, trials: usize, rng: &mut Rng) -> Result<CensusStats> {
    let ones = vec![1.0; dim];
    let zeros = vec![0.0; dim];
    census_with(dim, trials, |rng| vec![rng.normal(); dim], &ones, &zeros, rng)
}

fn census_with(
    dim: usize,
    trials: usize,
    mut draw: impl FnMut(&mut Rng) -> Vec<f64>,
    gain: &[f64],
    beta: &[f64],
    rng: &mut Rng,
) -> Result<CensusStats> {
    if dim < MIN_CENSUS_DIM {
        return Err(FcnError::Config(format!("census dim must be at least {MIN_CENSUS_DIM}, got {dim}")));
    }
    if trials == 0 {
        return Err(FcnError::Config("census needs at least one trial".into()));
    }
    let mut fractions = Vec::with_capacity(trials);
    for _ in 0..trials {
        let c = draw(rng);
        let out = mask(MaskRule::LayerNorm, &c, gain, beta, LN_EPSILON, &mut Pattern::new());
        fractions.push(out.iter().filter(|v| **v == 0.0).count() as f64 / dim as f64);
    }
    let n = trials as f64;
    let mean = fractions.iter().sum::<f64>() / n;
    let var = fractions.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / n;
    Ok(CensusStats {
        mean,
        std: var.sqrt(),
        min: fractions.iter().copied().fold(f64::INFINITY, f64::min),
        max: fractions.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        trials,
    })
}
