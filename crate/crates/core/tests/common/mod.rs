#![allow(dead_code)]

use besa_core::basis::{build_basis, motion_tangents, shape_tangents};
use besa_core::latent::Basis;
use besa_core::synthetic::{body_dataset, BodyConfig};
use nalgebra::DVector;
use rand::Rng;

/// Pose 8, shape 4 on the 402-vertex synthetic template.
pub fn desk_basis() -> Basis {
    let data = body_dataset(&BodyConfig::default());
    let motion = motion_tangents(&data.motion_sequences, &data.template).unwrap();
    let shape = shape_tangents(&data.shape_paths, &data.template).unwrap();
    build_basis(&motion, &shape, 8, 4, &data.template, false).unwrap().0
}

/// A random code whose largest vertex displacement is `fraction` of the
/// template's bounding-box diagonal.
pub fn scaled_code(basis: &Basis, rng: &mut impl Rng, fraction: f64) -> DVector<f64> {
    let raw = DVector::from_fn(basis.dim(), |_, _| rng.random_range(-1.0..1.0));
    let field = basis.combine(&raw).unwrap();
    let largest = field.iter().map(|v| v.norm()).fold(0.0, f64::max);
    raw * (fraction * basis.template().bbox_diagonal() / largest)
}
