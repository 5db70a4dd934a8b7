//! Field-wise views of one cross layer.

use crate::error::{FcnError, Result};
use crate::features::EncodedBatch;
use crate::numerics::DenseMatrix;

use super::network::{branch_traces, embed_reshape};
use super::params::ModelParams;
use super::{Branch, ModelConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct FieldImportance {
    /// Mean norm of field `i`'s slice of `c`.
    pub cross_strengths: Vec<f64>,
    /// Mean zero fraction of field `i`'s slice of `Mask(c)`.
    pub mask_sparsity: Vec<f64>,
    /// `pair_matrix[i][j]`: Frobenius norm of the block of `W` mapping field
    /// `j`'s inputs to field `i`'s outputs.
    pub pair_matrix: DenseMatrix,
}

/// Column indices of field `j` in the reshaped input: its first half sits in
/// the leading `D/2` block, its second half in the trailing one.
fn field_columns(j: usize, d: usize, width: usize) -> impl Iterator<Item = usize> {
    let half = d / 2;
    (j * half..(j + 1) * half).chain(width / 2 + j * half..width / 2 + (j + 1) * half)
}

pub fn field_importance(
    params: &ModelParams,
    config: &ModelConfig,
    batch: &EncodedBatch,
    layer_index: usize,
    branch: Branch,
) -> Result<FieldImportance> {
    let layers = match branch {
        Branch::Deep => &params.ecn_layers,
        Branch::Shallow => &params.lcn_layers,
    };
    let Some(layer) = layers.get(layer_index) else {
        return Err(FcnError::Index(format!(
            "layer {layer_index} out of range for {} stack of depth {}",
            branch.name(),
            layers.len()
        )));
    };
    if batch.n == 0 {
        return Err(FcnError::Data("field importance needs at least one row".into()));
    }
    let f = params.num_fields();
    let d = params.embedding_dim();
    let width = params.width();
    let seg = d / 2;

    let mut cross_strengths = vec![0.0; f];
    let mut mask_sparsity = vec![0.0; f];
    for r in 0..batch.n {
        let x1 = embed_reshape(batch.row(r), params)?;
        let traces = branch_traces(&x1, params, config, branch);
        let t = &traces[layer_index];
        for i in 0..f {
            let c = &t.c[i * seg..(i + 1) * seg];
            cross_strengths[i] += c.iter().map(|v| v * v).sum::<f64>().sqrt();
            let m = &t.masked[i * seg..(i + 1) * seg];
            mask_sparsity[i] += m.iter().filter(|&&v| v == 0.0).count() as f64 / seg as f64;
        }
    }
    let n = batch.n as f64;
    cross_strengths.iter_mut().for_each(|v| *v /= n);
    mask_sparsity.iter_mut().for_each(|v| *v /= n);

    let mut pair_matrix = DenseMatrix::zeros(f, f);
    for i in 0..f {
        for j in 0..f {
            let mut sq = 0.0;
            for row in i * seg..(i + 1) * seg {
                let w = layer.w.row(row);
                sq += field_columns(j, d, width).map(|c| w[c] * w[c]).sum::<f64>();
            }
            pair_matrix.set(i, j, sq.sqrt());
        }
    }
    Ok(FieldImportance {
        cross_strengths,
        mask_sparsity,
        pair_matrix,
    })
}
