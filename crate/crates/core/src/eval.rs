//! Reconstruction metrics: vertex MSE (same connectivity only), Hausdorff,
//! Chamfer and the squared varifold distance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discrepancy::{chamfer_distance, hausdorff_distance, varifold_distance_sq, VarifoldConfig};
use crate::error::{Error, Result};
use crate::mesh::TriMesh;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMetrics {
    /// Absent when the two meshes do not share connectivity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    pub hausdorff: f64,
    pub chamfer: f64,
    pub varifold_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub cases: Vec<PairMetrics>,
    /// Means over all cases; `mse` averages only the cases that have it.
    pub mean: PairMetrics,
}

/// `(1/V)·Σ‖vᵢ − v̂ᵢ‖²`, or `None` when connectivity differs.
pub fn vertex_mse(output: &TriMesh, truth: &TriMesh) -> Option<f64> {
    if !output.same_connectivity(truth) {
        return None;
    }
    let total: f64 = output
        .vertices()
        .iter()
        .zip(truth.vertices())
        .map(|(a, b)| (a - b).norm_squared())
        .sum();
    Some(total / output.vertex_count() as f64)
}

pub fn pair_metrics(output: &TriMesh, truth: &TriMesh, cfg: &VarifoldConfig) -> Result<PairMetrics> {
    Ok(PairMetrics {
        mse: vertex_mse(output, truth),
        hausdorff: hausdorff_distance(output, truth)?,
        chamfer: chamfer_distance(output.vertices(), truth.vertices())?,
        varifold_sq: varifold_distance_sq(output, truth, cfg)?,
    })
}

pub fn eval_reconstruction(
    outputs: &[TriMesh],
    ground_truth: &[TriMesh],
    cfg: &VarifoldConfig,
) -> Result<EvalRecord> {
    if outputs.len() != ground_truth.len() {
        return Err(Error::DimensionMismatch {
            expected: ground_truth.len(),
            found: outputs.len(),
        });
    }
    if outputs.is_empty() {
        return Err(Error::Empty("evaluation pairs"));
    }
    let cases = outputs
        .par_iter()
        .zip(ground_truth)
        .map(|(o, t)| pair_metrics(o, t, cfg))
        .collect::<Result<Vec<_>>>()?;
    let n = cases.len() as f64;
    let with_mse: Vec<f64> = cases.iter().filter_map(|c| c.mse).collect();
    let mean = PairMetrics {
        mse: (!with_mse.is_empty()).then(|| with_mse.iter().sum::<f64>() / with_mse.len() as f64),
        hausdorff: cases.iter().map(|c| c.hausdorff).sum::<f64>() / n,
        chamfer: cases.iter().map(|c| c.chamfer).sum::<f64>() / n,
        varifold_sq: cases.iter().map(|c| c.varifold_sq).sum::<f64>() / n,
    };
    Ok(EvalRecord { cases, mean })
}
