use nalgebra::{Matrix2, Matrix3x2};

use super::frame::face_frames;
use crate::error::Result;
use crate::mesh::{DeformationField, TriMesh};

/// Per-face orthogonal decomposition `dh = dh_m + dh_+ + dh_⊥ + dh_0`.
#[derive(Debug, Clone)]
pub struct SplitDifferential {
    /// Traceless, self-adjoint tangential part (shear).
    pub shear: Vec<Matrix3x2<f64>>,
    /// Pure-trace tangential part (stretch).
    pub stretch: Vec<Matrix3x2<f64>>,
    /// Normal part (bend).
    pub bend: Vec<Matrix3x2<f64>>,
    /// Anti-self-adjoint tangential part (infinitesimal in-plane rotation).
    pub skew: Vec<Matrix3x2<f64>>,
}

/// Splits the differential of `h` on every face of `mesh`.
///
/// With `A = g⁻¹ dqᵀ dh` and `b = nᵀ dh`: `dh_⊥ = n b`, and the tangential
/// part `dq A` splits into `g`-self-adjoint traceless, trace and
/// anti-self-adjoint pieces. Writing `B = dqᵀ dh`, those are
/// `g⁻¹ sym(B) − (tr A / 2) I`, `(tr A / 2) I` and `g⁻¹ skew(B)`. All four
/// parts are pairwise orthogonal under `tr(g⁻¹ Xᵀ Y)`.
pub fn split_differential(mesh: &TriMesh, h: &DeformationField) -> Result<SplitDifferential> {
    mesh.check_field(h)?;
    let frames = face_frames(mesh)?;
    let mut out = SplitDifferential {
        shear: Vec::with_capacity(frames.len()),
        stretch: Vec::with_capacity(frames.len()),
        bend: Vec::with_capacity(frames.len()),
        skew: Vec::with_capacity(frames.len()),
    };
    for face in &frames {
        let dh = face.differential(h.as_slice());
        let b = face.e.transpose() * dh;
        let a = face.ginv * b;
        let half_trace = 0.5 * a.trace();
        let sym = face.ginv * (b + b.transpose()) * 0.5;
        let skew = face.ginv * (b - b.transpose()) * 0.5;
        out.shear.push(face.e * (sym - Matrix2::identity() * half_trace));
        out.stretch.push(face.e * half_trace);
        out.bend.push(face.normal * (face.normal.transpose() * dh));
        out.skew.push(face.e * skew);
    }
    Ok(out)
}
