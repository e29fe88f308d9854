use nalgebra::{Matrix2, Matrix3x2, Vector3};

use super::{Point3, TriMesh};
use crate::error::{Error, Result};

/// Faces with area at or below this are rejected by every metric computation.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Per-face differential-geometric quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceGeometry {
    pub barycenter: Point3,
    /// Unit normal following the face winding.
    pub normal: Vector3<f64>,
    pub area: f64,
    /// Embedded edges `[v1 - v0, v2 - v0]`.
    pub dq: Matrix3x2<f64>,
    /// First fundamental form `dqᵀ dq`.
    pub g: Matrix2<f64>,
}

impl FaceGeometry {
    pub fn from_corners(v0: &Point3, v1: &Point3, v2: &Point3) -> Option<Self> {
        let e1 = v1 - v0;
        let e2 = v2 - v0;
        let cross = e1.cross(&e2);
        let double_area = cross.norm();
        let area = 0.5 * double_area;
        if !(area > DEGENERATE_AREA) {
            return None;
        }
        let dq = Matrix3x2::from_columns(&[e1, e2]);
        Some(Self {
            barycenter: (v0 + v1 + v2) / 3.0,
            normal: cross / double_area,
            area,
            dq,
            g: dq.transpose() * dq,
        })
    }
}

pub fn face_geometry(mesh: &TriMesh) -> Result<Vec<FaceGeometry>> {
    let v = mesh.vertices();
    mesh.faces()
        .iter()
        .enumerate()
        .map(|(face, &[a, b, c])| {
            FaceGeometry::from_corners(&v[a], &v[b], &v[c]).ok_or_else(|| Error::DegenerateFace {
                face,
                area: 0.5 * (v[b] - v[a]).cross(&(v[c] - v[a])).norm(),
            })
        })
        .collect()
}

/// Barycentric lumped vertex masses: one third of each incident face area.
pub fn vertex_masses(mesh: &TriMesh, faces: &[FaceGeometry]) -> Vec<f64> {
    let mut mass = vec![0.0; mesh.vertex_count()];
    for (tri, geo) in mesh.faces().iter().zip(faces) {
        for &i in tri {
            mass[i] += geo.area / 3.0;
        }
    }
    mass
}
