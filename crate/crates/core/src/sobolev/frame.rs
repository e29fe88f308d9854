use nalgebra::{Matrix2, Matrix3x2, Vector3};

use crate::error::Result;
use crate::mesh::{face_geometry, TriMesh};

/// Faces with area below this (but above the degeneracy threshold) invert
/// their first fundamental form with an eigenvalue cutoff.
pub const NEAR_DEGENERATE_AREA: f64 = 1e-9;
const EIGEN_CUTOFF: f64 = 1e-9;

#[derive(Debug, Clone)]
pub(crate) struct FaceFrame {
    pub idx: [usize; 3],
    pub e: Matrix3x2<f64>,
    pub ginv: Matrix2<f64>,
    /// Symmetric square root of `ginv`; `e * sqrt_ginv` has orthonormal columns.
    pub sqrt_ginv: Matrix2<f64>,
    pub normal: Vector3<f64>,
    pub area: f64,
}

impl FaceFrame {
    pub fn differential(&self, field: &[Vector3<f64>]) -> Matrix3x2<f64> {
        let [i0, i1, i2] = self.idx;
        Matrix3x2::from_columns(&[field[i1] - field[i0], field[i2] - field[i0]])
    }

    /// Adds the vertex covector of a face covector `c` (dual to `differential`).
    pub fn scatter(&self, c: &Matrix3x2<f64>, out: &mut [Vector3<f64>]) {
        let [i0, i1, i2] = self.idx;
        let c0 = c.column(0).into_owned();
        let c1 = c.column(1).into_owned();
        out[i1] += c0;
        out[i2] += c1;
        out[i0] -= c0 + c1;
    }
}

/// `(g⁻¹, g^{-1/2})`, or their eigenvalue-truncated pseudo-inverse versions.
fn inverse_and_root(g: &Matrix2<f64>, area: f64) -> (Matrix2<f64>, Matrix2<f64>) {
    if area >= NEAR_DEGENERATE_AREA {
        let det = g.determinant();
        let ginv = Matrix2::new(g[(1, 1)], -g[(0, 1)], -g[(1, 0)], g[(0, 0)]) / det;
        // sqrt of a 2×2 SPD matrix: (M + √det M · I) / √(tr M + 2√det M)
        let s = (1.0 / det).sqrt();
        let t = (ginv.trace() + 2.0 * s).sqrt();
        let root = (ginv + Matrix2::identity() * s) / t;
        return (ginv, root);
    }
    let eig = g.symmetric_eigen();
    let mut ginv = Matrix2::zeros();
    let mut root = Matrix2::zeros();
    for i in 0..2 {
        let lambda = eig.eigenvalues[i];
        if lambda > EIGEN_CUTOFF {
            let u = eig.eigenvectors.column(i);
            let outer = u * u.transpose();
            ginv += outer / lambda;
            root += outer / lambda.sqrt();
        }
    }
    (ginv, root)
}

pub(crate) fn face_frames(mesh: &TriMesh) -> Result<Vec<FaceFrame>> {
    let geo = face_geometry(mesh)?;
    Ok(mesh
        .faces()
        .iter()
        .zip(geo)
        .map(|(&idx, f)| {
            let (ginv, sqrt_ginv) = inverse_and_root(&f.g, f.area);
            FaceFrame {
                idx,
                e: f.dq,
                ginv,
                sqrt_ginv,
                normal: f.normal,
                area: f.area,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_squares_to_inverse() {
        let g = Matrix2::new(2.0, 0.7, 0.7, 1.3);
        let (ginv, root) = inverse_and_root(&g, 1.0);
        assert!((root * root - ginv).norm() < 1e-14);
        assert!((ginv * g - Matrix2::identity()).norm() < 1e-14);
    }

    #[test]
    fn pseudo_inverse_drops_small_eigenvalue() {
        let g = Matrix2::new(1.0, 0.0, 0.0, 1e-12);
        let (ginv, root) = inverse_and_root(&g, 5e-7 * 1e-6);
        assert!((ginv - Matrix2::new(1.0, 0.0, 0.0, 0.0)).norm() < 1e-12);
        assert!((root * root - ginv).norm() < 1e-12);
    }
}
