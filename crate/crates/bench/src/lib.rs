//! Shared fixtures for the benchmarks.

use besa_core::basis::{build_basis, motion_tangents, shape_tangents};
use besa_core::synthetic::{body_dataset, BodyConfig};
use besa_core::Basis;
use nalgebra::DVector;

/// Pose 8, shape 4 on the synthetic body template.
pub fn desk_basis() -> Basis {
    let data = body_dataset(&BodyConfig::default());
    let motion = motion_tangents(&data.motion_sequences, &data.template).expect("synthetic motion");
    let shape = shape_tangents(&data.shape_paths, &data.template).expect("synthetic shapes");
    build_basis(&motion, &shape, 8, 4, &data.template, false).expect("desk basis").0
}

/// A deterministic code with entries of size `scale`.
pub fn code(dim: usize, scale: f64, phase: f64) -> DVector<f64> {
    DVector::from_fn(dim, |i, _| scale * ((i as f64 + 1.0) * 1.7 + phase).sin())
}
