//! Correspondence-free similarity measures between meshes: the varifold
//! kernel distance (with its vertex gradient), Chamfer and Hausdorff.

mod pointwise;
mod sum;
mod varifold;

pub use pointwise::{chamfer_distance, hausdorff_distance, point_triangle_distance};
pub use sum::CompensatedSum;
pub use varifold::{
    varifold_distance_sq, varifold_gradient, VarifoldConfig, VarifoldTarget,
};
