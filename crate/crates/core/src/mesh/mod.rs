//! Triangle meshes, per-face geometry, the cotangent Laplacian and mesh IO.

mod field;
mod geometry;
pub mod io;
mod laplacian;

use std::sync::Arc;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub use field::DeformationField;
pub use geometry::{face_geometry, vertex_masses, FaceGeometry, DEGENERATE_AREA};
pub use laplacian::{laplacian_apply, CotanLaplacian};

pub type Point3 = Vector3<f64>;

/// Vertex positions plus an immutable, shareable face list.
///
/// Meshes produced from one another with [`TriMesh::with_vertices`] share the
/// same connectivity allocation.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Point3>,
    faces: Arc<Vec<[usize; 3]>>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        if faces.is_empty() {
            return Err(Error::NoFaces);
        }
        let vertex_count = vertices.len();
        for (face, tri) in faces.iter().enumerate() {
            if let Some(&index) = tri.iter().find(|&&i| i >= vertex_count) {
                return Err(Error::IndexOutOfRange {
                    face,
                    index,
                    vertex_count,
                });
            }
        }
        Ok(Self {
            vertices,
            faces: Arc::new(faces),
        })
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// New positions on the same connectivity.
    pub fn with_vertices(&self, vertices: Vec<Point3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::ConnectivityMismatch {
                expected: self.vertices.len(),
                found: vertices.len(),
            });
        }
        Ok(Self {
            vertices,
            faces: Arc::clone(&self.faces),
        })
    }

    /// True when both meshes have the same vertex count and face list.
    pub fn same_connectivity(&self, other: &TriMesh) -> bool {
        self.vertices.len() == other.vertices.len()
            && (Arc::ptr_eq(&self.faces, &other.faces) || self.faces == other.faces)
    }

    pub fn check_field(&self, field: &DeformationField) -> Result<()> {
        if field.len() != self.vertices.len() {
            return Err(Error::ConnectivityMismatch {
                expected: self.vertices.len(),
                found: field.len(),
            });
        }
        Ok(())
    }

    /// Vertices displaced by `field`.
    pub fn displaced(&self, field: &DeformationField) -> Result<Self> {
        self.check_field(field)?;
        let vertices = self
            .vertices
            .iter()
            .zip(field.iter())
            .map(|(v, d)| v + d)
            .collect();
        self.with_vertices(vertices)
    }

    pub fn map_vertices(&self, f: impl Fn(&Point3) -> Point3) -> Self {
        Self {
            vertices: self.vertices.iter().map(f).collect(),
            faces: Arc::clone(&self.faces),
        }
    }

    /// Same vertices, every face with reversed winding.
    pub fn flipped(&self) -> Self {
        Self {
            vertices: self.vertices.clone(),
            faces: Arc::new(self.faces.iter().map(|&[a, b, c]| [a, c, b]).collect()),
        }
    }

    /// 1-to-4 midpoint subdivision. Shared edges get a single midpoint vertex.
    pub fn subdivide(&self) -> Self {
        let mut vertices = self.vertices.clone();
        let mut midpoints = std::collections::HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point3>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                vertices.push((vertices[a] + vertices[b]) * 0.5);
                vertices.len() - 1
            })
        };
        let mut faces = Vec::with_capacity(self.faces.len() * 4);
        for &[a, b, c] in self.faces.iter() {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            faces.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        Self {
            vertices,
            faces: Arc::new(faces),
        }
    }

    pub fn total_area(&self) -> Result<f64> {
        Ok(face_geometry(self)?.iter().map(|f| f.area).sum())
    }

    /// Length of the axis-aligned bounding box diagonal.
    pub fn bbox_diagonal(&self) -> f64 {
        let mut lo = Point3::repeat(f64::INFINITY);
        let mut hi = Point3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (hi - lo).norm()
    }
}

impl PartialEq for TriMesh {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices && self.faces == other.faces
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_triangle() -> TriMesh {
        TriMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    #[test]
    fn rejects_out_of_range_index() {
        let err = TriMesh::new(vec![Point3::zeros(); 3], vec![[0, 1, 9]]).unwrap_err();
        assert!(matches!(
            err,
            Error::IndexOutOfRange {
                face: 0,
                index: 9,
                vertex_count: 3
            }
        ));
    }

    #[test]
    fn rejects_empty_face_list() {
        assert!(matches!(
            TriMesh::new(vec![Point3::zeros(); 3], vec![]),
            Err(Error::NoFaces)
        ));
    }

    #[test]
    fn subdivision_preserves_area() {
        let mesh = unit_triangle();
        let fine = mesh.subdivide();
        assert_eq!(fine.face_count(), 4);
        assert_eq!(fine.vertex_count(), 6);
        assert!((fine.total_area().unwrap() - 0.5).abs() < 1e-15);
        let finer = fine.subdivide();
        assert_eq!(finer.vertex_count(), 15);
    }

    #[test]
    fn with_vertices_checks_count() {
        let mesh = unit_triangle();
        assert!(mesh.with_vertices(vec![Point3::zeros(); 2]).is_err());
        let moved = mesh.with_vertices(vec![Point3::zeros(); 3]).unwrap();
        assert!(moved.same_connectivity(&mesh));
    }
}
