//! The six-parameter split second-order Sobolev metric
//!
//! ```text
//! G_q(h, k) = Σ_v M_v a0⟨h_v, k_v⟩
//!           + Σ_f a_f [a1 ⟨dh_m, dk_m⟩ + b1 ⟨dh_+, dk_+⟩ + c1 ⟨dh_⊥, dk_⊥⟩ + d1 ⟨dh_0, dk_0⟩]
//!           + Σ_v M_v a2⟨(Δh)_v, (Δk)_v⟩
//! ```
//!
//! with one-form pairing `⟨X, Y⟩ = tr(g⁻¹ Xᵀ Y)` on each face and the
//! differential split into shear (`m`), stretch (`+`), bend (`⊥`) and the
//! residual skew part (`0`).

mod footpoint;
mod frame;
mod split;

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3x2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{CotanLaplacian, DeformationField, TriMesh};

pub use footpoint::{h2_inner_footpoint_grad, VertexMap};
pub use frame::NEAR_DEGENERATE_AREA;
pub use split::{split_differential, SplitDifferential};

use frame::FaceFrame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    pub a0: f64,
    pub a1: f64,
    pub b1: f64,
    pub c1: f64,
    pub d1: f64,
    pub a2: f64,
}

impl Default for MetricParams {
    /// Nearly isometric deformations with some room for stretch and shear,
    /// lightly regularized by the second-order term.
    fn default() -> Self {
        Self::new(1.0, 1000.0, 100.0, 1.0, 1.0, 1.0).expect("valid defaults")
    }
}

impl MetricParams {
    pub fn new(a0: f64, a1: f64, b1: f64, c1: f64, d1: f64, a2: f64) -> Result<Self> {
        let p = Self { a0, a1, b1, c1, d1, a2 };
        let values = p.as_array();
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "metric coefficients must be finite and nonnegative, got {values:?}"
            )));
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidArgument(
                "at least one metric coefficient must be positive".into(),
            ));
        }
        Ok(p)
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.a0, self.a1, self.b1, self.c1, self.d1, self.a2]
    }
}

impl FromStr for MetricParams {
    type Err = Error;

    /// Parses `a0,a1,b1,c1,d1,a2`.
    fn from_str(s: &str) -> Result<Self> {
        let values: Vec<f64> = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidArgument(format!("bad metric coefficient {t:?}")))
            })
            .collect::<Result<_>>()?;
        match values.as_slice() {
            &[a0, a1, b1, c1, d1, a2] => Self::new(a0, a1, b1, c1, d1, a2),
            _ => Err(Error::InvalidArgument(format!(
                "expected 6 comma-separated metric coefficients, got {}",
                values.len()
            ))),
        }
    }
}

impl fmt::Display for MetricParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a0, a1, b1, c1, d1, a2] = self.as_array();
        write!(f, "{a0},{a1},{b1},{c1},{d1},{a2}")
    }
}

/// The metric frozen at one footpoint mesh: per-face frames, the cotangent
/// Laplacian and lumped masses.
#[derive(Debug, Clone)]
pub struct H2Metric {
    params: MetricParams,
    faces: Vec<FaceFrame>,
    laplacian: CotanLaplacian,
    vertex_count: usize,
}

/// Frame-invariant coordinates of one face differential; the metric pairs
/// these with a plain weighted dot product, which keeps it exactly symmetric.
struct Features {
    /// Traceless symmetric part.
    shear: [f64; 2],
    stretch: f64,
    bend: [f64; 2],
    skew: f64,
}

impl H2Metric {
    pub fn new(mesh: &TriMesh, params: MetricParams) -> Result<Self> {
        let faces = frame::face_frames(mesh)?;
        let laplacian = CotanLaplacian::new(mesh)?;
        Ok(Self {
            params,
            faces,
            laplacian,
            vertex_count: mesh.vertex_count(),
        })
    }

    pub fn params(&self) -> &MetricParams {
        &self.params
    }

    pub fn masses(&self) -> &[f64] {
        self.laplacian.mass()
    }

    fn check(&self, h: &DeformationField) -> Result<()> {
        if h.len() != self.vertex_count {
            return Err(Error::ConnectivityMismatch {
                expected: self.vertex_count,
                found: h.len(),
            });
        }
        Ok(())
    }

    fn features(face: &FaceFrame, dh: &Matrix3x2<f64>) -> Features {
        // Differential expressed in an orthonormal tangent frame.
        let d = dh * face.sqrt_ginv;
        let z = face.sqrt_ginv * face.e.transpose() * d;
        let b = face.normal.transpose() * d;
        Features {
            shear: [0.5 * (z[(0, 0)] - z[(1, 1)]), 0.5 * (z[(0, 1)] + z[(1, 0)])],
            stretch: 0.5 * (z[(0, 0)] + z[(1, 1)]),
            bend: [b[0], b[1]],
            skew: 0.5 * (z[(0, 1)] - z[(1, 0)]),
        }
    }

    pub fn inner(&self, h: &DeformationField, k: &DeformationField) -> Result<f64> {
        self.check(h)?;
        self.check(k)?;
        let p = &self.params;
        let mut zeroth = 0.0;
        let mut second = 0.0;
        if p.a0 != 0.0 {
            for ((hv, kv), m) in h.iter().zip(k.iter()).zip(self.masses()) {
                zeroth += m * hv.dot(kv);
            }
        }
        if p.a2 != 0.0 {
            let lh = self.laplacian.apply(h.as_slice());
            let lk = self.laplacian.apply(k.as_slice());
            for ((x, y), m) in lh.iter().zip(lk.iter()).zip(self.masses()) {
                second += m * x.dot(y);
            }
        }
        let mut first = 0.0;
        if p.a1 != 0.0 || p.b1 != 0.0 || p.c1 != 0.0 || p.d1 != 0.0 {
            for face in &self.faces {
                let fh = Self::features(face, &face.differential(h.as_slice()));
                let fk = Self::features(face, &face.differential(k.as_slice()));
                let shear = 2.0 * (fh.shear[0] * fk.shear[0] + fh.shear[1] * fk.shear[1]);
                let stretch = 2.0 * fh.stretch * fk.stretch;
                let bend = fh.bend[0] * fk.bend[0] + fh.bend[1] * fk.bend[1];
                let skew = 2.0 * fh.skew * fk.skew;
                first += face.area
                    * (p.a1 * shear + p.b1 * stretch + p.c1 * bend + p.d1 * skew);
            }
        }
        Ok(p.a0 * zeroth + first + p.a2 * second)
    }

    /// The covector of `G(h, ·)`: `G(h, k) = Σ_v ⟨apply(h)_v, k_v⟩` for every `k`.
    pub fn apply(&self, h: &DeformationField) -> Result<DeformationField> {
        self.check(h)?;
        let p = &self.params;
        let mut out: Vec<Vector3<f64>> = h
            .iter()
            .zip(self.masses())
            .map(|(hv, m)| hv * (p.a0 * m))
            .collect();
        if p.a2 != 0.0 {
            let lap_h = self.laplacian.apply(h.as_slice());
            let back = self.laplacian.stiffness_apply(lap_h.as_slice());
            for (o, b) in out.iter_mut().zip(back) {
                *o += b * p.a2;
            }
        }
        for face in &self.faces {
            let dh = face.differential(h.as_slice());
            let ginv = &face.ginv;
            let e = &face.e;
            let b = e.transpose() * dh;
            let sym = (b + b.transpose()) * 0.5;
            let skew = (b - b.transpose()) * 0.5;
            let tau = (ginv * b).trace();
            let eg = e * ginv;
            let cov = eg * sym * ginv * p.a1
                + eg * (0.5 * tau * (p.b1 - p.a1))
                + face.normal * (face.normal.transpose() * dh * ginv) * p.c1
                + eg * skew * ginv * p.d1;
            face.scatter(&(cov * face.area), &mut out);
        }
        Ok(out.into())
    }

    /// Gradient of `q ↦ G_q(h, k)` with respect to the footpoint's vertex
    /// positions, with `h` and `k` held fixed as vertex arrays.
    pub fn vertex_gradient(
        &self,
        mesh: &TriMesh,
        h: &DeformationField,
        k: &DeformationField,
    ) -> Result<Vec<Vector3<f64>>> {
        self.check(h)?;
        self.check(k)?;
        Ok(footpoint::vertex_gradient(self, mesh, h, k))
    }
}

pub fn h2_inner(
    mesh: &TriMesh,
    h: &DeformationField,
    k: &DeformationField,
    params: &MetricParams,
) -> Result<f64> {
    H2Metric::new(mesh, *params)?.inner(h, k)
}

pub fn h2_apply(mesh: &TriMesh, h: &DeformationField, params: &MetricParams) -> Result<DeformationField> {
    H2Metric::new(mesh, *params)?.apply(h)
}

pub fn h2_inner_vertex_grad(
    mesh: &TriMesh,
    h: &DeformationField,
    k: &DeformationField,
    params: &MetricParams,
) -> Result<Vec<Vector3<f64>>> {
    H2Metric::new(mesh, *params)?.vertex_gradient(mesh, h, k)
}
