use nalgebra::Vector3;

use super::{face_geometry, vertex_masses, DeformationField, Point3, TriMesh};
use crate::error::Result;

/// Cotangent Laplacian with barycentric lumped mass:
/// `(Δh)_v = (1/M_v) Σ_{u~v} ½(cot α_uv + cot β_uv)(h_u − h_v)`.
#[derive(Debug, Clone)]
pub struct CotanLaplacian {
    faces: Vec<[usize; 3]>,
    /// ½·cot of the interior angle at each corner; corner `i` is opposite edge `(i+1, i+2)`.
    half_cot: Vec<[f64; 3]>,
    mass: Vec<f64>,
}

/// `cot` of the angle at `c` in triangle `(a, b, c)`.
pub(crate) fn corner_cot(a: &Point3, b: &Point3, c: &Point3) -> f64 {
    let p = a - c;
    let q = b - c;
    p.dot(&q) / p.cross(&q).norm()
}

impl CotanLaplacian {
    pub fn new(mesh: &TriMesh) -> Result<Self> {
        let geo = face_geometry(mesh)?;
        let v = mesh.vertices();
        let half_cot = mesh
            .faces()
            .iter()
            .map(|&[i0, i1, i2]| {
                [
                    0.5 * corner_cot(&v[i1], &v[i2], &v[i0]),
                    0.5 * corner_cot(&v[i2], &v[i0], &v[i1]),
                    0.5 * corner_cot(&v[i0], &v[i1], &v[i2]),
                ]
            })
            .collect();
        Ok(Self {
            faces: mesh.faces().to_vec(),
            half_cot,
            mass: vertex_masses(mesh, &geo),
        })
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn half_cot(&self) -> &[[f64; 3]] {
        &self.half_cot
    }

    /// Unnormalized `(L h)_v = Σ_u w_uv (h_u − h_v)`; symmetric in the flat inner product.
    pub fn stiffness_apply(&self, field: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        let mut out = vec![Vector3::zeros(); self.mass.len()];
        for (tri, w) in self.faces.iter().zip(&self.half_cot) {
            for corner in 0..3 {
                let a = tri[(corner + 1) % 3];
                let b = tri[(corner + 2) % 3];
                let d = (field[b] - field[a]) * w[corner];
                out[a] += d;
                out[b] -= d;
            }
        }
        out
    }

    pub fn apply(&self, field: &[Vector3<f64>]) -> DeformationField {
        let mut out = self.stiffness_apply(field);
        for (o, m) in out.iter_mut().zip(&self.mass) {
            *o /= *m;
        }
        out.into()
    }
}

pub fn laplacian_apply(mesh: &TriMesh, field: &DeformationField) -> Result<DeformationField> {
    mesh.check_field(field)?;
    Ok(CotanLaplacian::new(mesh)?.apply(field.as_slice()))
}
