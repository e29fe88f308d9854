//! Derivative of `G_q(h, k)` with respect to the footpoint `q`.
//!
//! Fields `h`, `k` are held fixed as vertex arrays, so each face differential
//! is constant and only the embedding enters: the edge matrix `E`, `g = EᵀE`,
//! `g⁻¹`, the area, the unit normal, the cotangent weights and the lumped
//! masses. Face-local gradients are taken with respect to `E = [e1, e2]` and
//! scattered as `∂v1 = ∂e1`, `∂v2 = ∂e2`, `∂v0 = −∂e1 − ∂e2`.

use nalgebra::{Matrix2, Matrix3, Matrix3x2, Vector3};

use super::frame::FaceFrame;
use super::{H2Metric, MetricParams};
use crate::error::{Error, Result};
use crate::mesh::{DeformationField, Point3, TriMesh};

/// A differentiable map from a parameter vector to the vertex positions of a
/// fixed connectivity.
pub trait VertexMap {
    fn parameter_count(&self) -> usize;

    fn mesh_at(&self, theta: &[f64]) -> Result<TriMesh>;

    /// Vector-Jacobian product: `Σ_v ⟨∂q_v/∂θ_i, vertex_grad_v⟩` for each `i`.
    fn pullback(&self, theta: &[f64], vertex_grad: &[Vector3<f64>]) -> Result<Vec<f64>>;
}

/// `∂/∂θ_i G_{q(θ)}(h, k)` for every parameter.
pub fn h2_inner_footpoint_grad<M: VertexMap + ?Sized>(
    map: &M,
    theta: &[f64],
    h: &DeformationField,
    k: &DeformationField,
    params: &MetricParams,
) -> Result<Vec<f64>> {
    if theta.len() != map.parameter_count() {
        return Err(Error::DimensionMismatch {
            expected: map.parameter_count(),
            found: theta.len(),
        });
    }
    let mesh = map.mesh_at(theta)?;
    let grad = H2Metric::new(&mesh, *params)?.vertex_gradient(&mesh, h, k)?;
    map.pullback(theta, &grad)
}

fn sym(m: &Matrix2<f64>) -> Matrix2<f64> {
    (m + m.transpose()) * 0.5
}

fn skew(m: &Matrix2<f64>) -> Matrix2<f64> {
    (m - m.transpose()) * 0.5
}

/// Gradient with respect to `E` of the `g⁻¹`-dependence of a scalar whose
/// differential through `g⁻¹` is `tr(d(g⁻¹) M)`.
fn through_ginv(face: &FaceFrame, m: &Matrix2<f64>) -> Matrix3x2<f64> {
    let g = &face.ginv;
    face.e * sym(&(g * m * g)) * -2.0
}

/// Gradient of `cot` of the angle at `c` in triangle `(a, b, c)` with respect to `(a, b, c)`.
fn cot_gradient(a: &Point3, b: &Point3, c: &Point3) -> [Vector3<f64>; 3] {
    let p = a - c;
    let q = b - c;
    let cr = p.cross(&q);
    let s = cr.norm();
    let d = p.dot(&q);
    let s3 = s * s * s;
    let gp = q / s - q.cross(&cr) * (d / s3);
    let gq = p / s - cr.cross(&p) * (d / s3);
    [gp, gq, -(gp + gq)]
}

pub(super) fn vertex_gradient(
    metric: &H2Metric,
    mesh: &TriMesh,
    h: &DeformationField,
    k: &DeformationField,
) -> Vec<Vector3<f64>> {
    let p = metric.params;
    let mut out = vec![Vector3::zeros(); metric.vertex_count];
    let (lap_h, lap_k) = if p.a2 != 0.0 {
        (
            metric.laplacian.apply(h.as_slice()),
            metric.laplacian.apply(k.as_slice()),
        )
    } else {
        (
            DeformationField::zeros(metric.vertex_count),
            DeformationField::zeros(metric.vertex_count),
        )
    };
    let positions = mesh.vertices();
    let first_order = p.a1 != 0.0 || p.b1 != 0.0 || p.c1 != 0.0 || p.d1 != 0.0;

    for face in &metric.faces {
        let [i0, i1, i2] = face.idx;
        let e = &face.e;
        let g = &face.ginv;
        let area_grad = e * g * face.area;

        let mut area_coef = 0.0;
        if p.a0 != 0.0 {
            area_coef += p.a0 * (h[i0].dot(&k[i0]) + h[i1].dot(&k[i1]) + h[i2].dot(&k[i2])) / 3.0;
        }
        if p.a2 != 0.0 {
            area_coef -= p.a2
                * (lap_h[i0].dot(&lap_k[i0]) + lap_h[i1].dot(&lap_k[i1]) + lap_h[i2].dot(&lap_k[i2]))
                / 3.0;
        }

        let mut grad_e = Matrix3x2::zeros();
        if first_order {
            let dh = face.differential(h.as_slice());
            let dk = face.differential(k.as_slice());
            let bh = e.transpose() * dh;
            let bk = e.transpose() * dk;
            let (sh, sk) = (sym(&bh), sym(&bk));
            let (wh, wk) = (skew(&bh), skew(&bk));

            let tau_h = (g * sh).trace();
            let tau_k = (g * sk).trace();
            let d_tau_h = through_ginv(face, &sh) + dh * g;
            let d_tau_k = through_ginv(face, &sk) + dk * g;
            let stretch = 0.5 * tau_h * tau_k;
            let d_stretch = (d_tau_h * tau_k + d_tau_k * tau_h) * 0.5;

            let q_sym = (g * sh * g * sk).trace();
            let d_q_sym = through_ginv(face, &(sh * g * sk + sk * g * sh))
                + dh * sym(&(g * sk * g))
                + dk * sym(&(g * sh * g));
            let shear = q_sym - stretch;
            let d_shear = d_q_sym - d_stretch;

            let q_skew = (g * wh * g * wk).trace();
            let d_q_skew = through_ginv(face, &(wh * g * wk + wk * g * wh))
                + dh * skew(&(g * wk * g))
                + dk * skew(&(g * wh * g));
            let skew_term = -q_skew;
            let d_skew = -d_q_skew;

            // bend = nᵀ K g⁻¹ Hᵀ n
            let n = &face.normal;
            let kgh: Matrix3<f64> = dk * g * dh.transpose();
            let ns = (kgh + kgh.transpose()) * 0.5;
            let bend = (n.transpose() * kgh * n)[0];
            let mut d_bend = through_ginv(face, &(dh.transpose() * n * n.transpose() * dk));
            let w = (ns * n - n * (n.dot(&(ns * n)))) * (2.0 / (2.0 * face.area));
            let e1 = e.column(0).into_owned();
            let e2 = e.column(1).into_owned();
            let mut col0 = d_bend.column(0).into_owned();
            let mut col1 = d_bend.column(1).into_owned();
            col0 += e2.cross(&w);
            col1 += w.cross(&e1);
            d_bend.set_column(0, &col0);
            d_bend.set_column(1, &col1);

            let phi = p.a1 * shear + p.b1 * stretch + p.c1 * bend + p.d1 * skew_term;
            let d_phi = d_shear * p.a1 + d_stretch * p.b1 + d_bend * p.c1 + d_skew * p.d1;
            area_coef += phi;
            grad_e += d_phi * face.area;
        }
        grad_e += area_grad * area_coef;
        face.scatter(&grad_e, &mut out);

        if p.a2 != 0.0 {
            for corner in 0..3 {
                let c = face.idx[corner];
                let a = face.idx[(corner + 1) % 3];
                let b = face.idx[(corner + 2) % 3];
                let coef = p.a2
                    * ((h[b] - h[a]).dot(&(lap_k[a] - lap_k[b]))
                        + (k[b] - k[a]).dot(&(lap_h[a] - lap_h[b])));
                let [ga, gb, gc] = cot_gradient(&positions[a], &positions[b], &positions[c]);
                out[a] += ga * (0.5 * coef);
                out[b] += gb * (0.5 * coef);
                out[c] += gc * (0.5 * coef);
            }
        }
    }
    out
}
