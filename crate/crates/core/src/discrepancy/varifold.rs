//! Discrete varifold distance with the Gaussian-position × squared-cosine
//! orientation kernel `k(x, n, x', n') = exp(−|x − x'|²/σ²) (n·n')²`.
//!
//! Each face contributes a Dirac at its barycenter weighted by its area:
//!
//! ```text
//! d² = Σᵢⱼ k(xᵢ,nᵢ,xⱼ,nⱼ) aᵢaⱼ − 2 Σᵢⱼ k(xᵢ,nᵢ,x'ⱼ,n'ⱼ) aᵢa'ⱼ + Σᵢⱼ k(x'ᵢ,n'ᵢ,x'ⱼ,n'ⱼ) a'ᵢa'ⱼ
//! ```
//!
//! Double sums run over row tiles in parallel; every tile is accumulated with
//! compensated summation and tiles are reduced in index order, so the result
//! does not depend on the thread count.

use std::cmp::Ordering;

use nalgebra::Vector3;
use rayon::prelude::*;

use super::sum::CompensatedSum;
use crate::error::{Error, Result};
use crate::mesh::{face_geometry, Point3, TriMesh};

const TILE: usize = 32;

/// Pairs with `|x − y|²/σ²` above this are dropped; `exp(−40) ≈ 4e-18`.
const KERNEL_CUTOFF: f64 = 40.0;

/// Tolerance, relative to the summed self terms, below which a negative squared
/// distance is treated as rounding and clamped to zero.
const NEGATIVE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VarifoldConfig {
    pub sigma: f64,
}

impl VarifoldConfig {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "varifold sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self { sigma })
    }

    fn inv_sigma_sq(&self) -> f64 {
        1.0 / (self.sigma * self.sigma)
    }
}

/// Face barycenters, unit normals and areas of one mesh.
#[derive(Debug, Clone)]
struct FaceMeasure {
    centers: Vec<Point3>,
    normals: Vec<Vector3<f64>>,
    areas: Vec<f64>,
}

impl FaceMeasure {
    fn new(mesh: &TriMesh) -> Result<Self> {
        let geo = face_geometry(mesh)?;
        Ok(Self {
            centers: geo.iter().map(|f| f.barycenter).collect(),
            normals: geo.iter().map(|f| f.normal).collect(),
            areas: geo.iter().map(|f| f.area).collect(),
        })
    }

    fn len(&self) -> usize {
        self.areas.len()
    }

    #[inline]
    fn weight(&self, i: usize, other: &FaceMeasure, j: usize, inv_s2: f64) -> f64 {
        let t = (self.centers[i] - other.centers[j]).norm_squared() * inv_s2;
        if t > KERNEL_CUTOFF {
            return 0.0;
        }
        let c = self.normals[i].dot(&other.normals[j]);
        (-t).exp() * c * c * self.areas[i] * other.areas[j]
    }
}

/// `Σᵢ Σⱼ k(i, j) aᵢ a'ⱼ` over rows of `a` and columns of `b`.
fn cross_sum(a: &FaceMeasure, b: &FaceMeasure, inv_s2: f64) -> f64 {
    let rows: Vec<usize> = (0..a.len()).collect();
    let tiles: Vec<CompensatedSum> = rows
        .par_chunks(TILE)
        .map(|tile| {
            let mut acc = CompensatedSum::default();
            for &i in tile {
                for j in 0..b.len() {
                    acc.add(a.weight(i, b, j, inv_s2));
                }
            }
            acc
        })
        .collect();
    reduce(&tiles)
}

/// Symmetric self term: diagonal plus twice the strict upper triangle.
fn self_sum(a: &FaceMeasure, inv_s2: f64) -> f64 {
    let rows: Vec<usize> = (0..a.len()).collect();
    let tiles: Vec<CompensatedSum> = rows
        .par_chunks(TILE)
        .map(|tile| {
            let mut acc = CompensatedSum::default();
            for &i in tile {
                acc.add(a.areas[i] * a.areas[i]);
                for j in i + 1..a.len() {
                    acc.add(2.0 * a.weight(i, a, j, inv_s2));
                }
            }
            acc
        })
        .collect();
    reduce(&tiles)
}

fn reduce(tiles: &[CompensatedSum]) -> f64 {
    let mut total = CompensatedSum::default();
    for t in tiles {
        total.merge(t);
    }
    total.value()
}

/// Total order on meshes used to fix the orientation of the cross term.
fn canonical_order(a: &TriMesh, b: &TriMesh) -> Ordering {
    a.face_count()
        .cmp(&b.face_count())
        .then(a.vertex_count().cmp(&b.vertex_count()))
        .then_with(|| {
            let bits = |m: &TriMesh| {
                m.vertices()
                    .iter()
                    .flat_map(|v| [v.x.to_bits(), v.y.to_bits(), v.z.to_bits()])
                    .collect::<Vec<u64>>()
            };
            bits(a).cmp(&bits(b))
        })
        .then_with(|| a.faces().cmp(b.faces()))
}

fn combine(self_a: f64, self_b: f64, cross: f64) -> Result<f64> {
    let selfs = self_a + self_b;
    let value = selfs - 2.0 * cross;
    if value >= 0.0 {
        Ok(value)
    } else if -value <= NEGATIVE_TOLERANCE * selfs {
        Ok(0.0)
    } else {
        Err(Error::InternalConsistency(format!(
            "squared varifold distance {value:e} is negative beyond rounding (self terms {selfs:e})"
        )))
    }
}

pub fn varifold_distance_sq(a: &TriMesh, b: &TriMesh, cfg: &VarifoldConfig) -> Result<f64> {
    let inv_s2 = cfg.inv_sigma_sq();
    let ma = FaceMeasure::new(a)?;
    let mb = FaceMeasure::new(b)?;
    let cross = match canonical_order(a, b) {
        Ordering::Greater => cross_sum(&mb, &ma, inv_s2),
        _ => cross_sum(&ma, &mb, inv_s2),
    };
    combine(self_sum(&ma, inv_s2), self_sum(&mb, inv_s2), cross)
}

/// Gradient contributions of one face pair with respect to the first face's
/// barycenter and unnormalized normal `ν = (v1−v0)×(v2−v0)`, for the pair term
/// `exp(−|x−x'|²/σ²) (ν·ν')² / (4|ν||ν'|)`.
#[inline]
fn pair_gradient(
    x: &Point3,
    nu: &Vector3<f64>,
    rho: f64,
    y: &Point3,
    mu: &Vector3<f64>,
    rho_y: f64,
    inv_s2: f64,
) -> (Vector3<f64>, Vector3<f64>) {
    let r = x - y;
    let t = r.norm_squared() * inv_s2;
    if t > KERNEL_CUTOFF {
        return (Vector3::zeros(), Vector3::zeros());
    }
    let e = (-t).exp();
    let p = nu.dot(mu);
    let scale = e / (4.0 * rho * rho_y);
    let d_x = r * (-2.0 * inv_s2 * scale * p * p);
    let d_nu = (mu * (2.0 * p) - nu * (p * p / (rho * rho))) * scale;
    (d_x, d_nu)
}

#[derive(Debug, Clone)]
struct RawFaces {
    centers: Vec<Point3>,
    nus: Vec<Vector3<f64>>,
    rhos: Vec<f64>,
}

impl RawFaces {
    fn new(mesh: &TriMesh) -> Result<Self> {
        let geo = face_geometry(mesh)?;
        let nus: Vec<Vector3<f64>> = geo.iter().map(|f| f.normal * (2.0 * f.area)).collect();
        Ok(Self {
            centers: geo.iter().map(|f| f.barycenter).collect(),
            rhos: geo.iter().map(|f| 2.0 * f.area).collect(),
            nus,
        })
    }

    /// Per-face (∂/∂x, ∂/∂ν) of `Σᵢ Σⱼ pair(i, j)` with respect to faces `i` of `self`.
    fn face_gradients(&self, other: &RawFaces, inv_s2: f64) -> Vec<(Vector3<f64>, Vector3<f64>)> {
        (0..self.centers.len())
            .into_par_iter()
            .with_min_len(TILE)
            .map(|i| {
                let mut gx = Vector3::zeros();
                let mut gn = Vector3::zeros();
                for j in 0..other.centers.len() {
                    let (dx, dn) = pair_gradient(
                        &self.centers[i],
                        &self.nus[i],
                        self.rhos[i],
                        &other.centers[j],
                        &other.nus[j],
                        other.rhos[j],
                        inv_s2,
                    );
                    gx += dx;
                    gn += dn;
                }
                (gx, gn)
            })
            .collect()
    }
}

/// Chains face-level gradients to vertices: `x = (v0+v1+v2)/3`, `ν = e1 × e2`.
fn scatter_to_vertices(
    mesh: &TriMesh,
    face_grads: &[(Vector3<f64>, Vector3<f64>)],
    weight: f64,
    out: &mut [Vector3<f64>],
) {
    let v = mesh.vertices();
    for (&[i0, i1, i2], (gx, gn)) in mesh.faces().iter().zip(face_grads) {
        let e1 = v[i1] - v[i0];
        let e2 = v[i2] - v[i0];
        let g1 = e2.cross(gn);
        let g2 = gn.cross(&e1);
        let third = gx / 3.0;
        out[i0] += (third - g1 - g2) * weight;
        out[i1] += (third + g1) * weight;
        out[i2] += (third + g2) * weight;
    }
}

/// Exact gradient of `varifold_distance_sq(a, b)` with respect to the vertices of `a`.
pub fn varifold_gradient(
    a: &TriMesh,
    b: &TriMesh,
    cfg: &VarifoldConfig,
) -> Result<Vec<Vector3<f64>>> {
    let target = VarifoldTarget::new(b, *cfg)?;
    Ok(target.evaluate(a, true)?.1.unwrap())
}

/// A fixed target mesh with its self term cached, for repeated evaluation of
/// `d²(·, target)` and its gradient during optimization.
#[derive(Debug, Clone)]
pub struct VarifoldTarget {
    cfg: VarifoldConfig,
    measure: FaceMeasure,
    raw: RawFaces,
    self_term: f64,
}

impl VarifoldTarget {
    pub fn new(mesh: &TriMesh, cfg: VarifoldConfig) -> Result<Self> {
        let measure = FaceMeasure::new(mesh)?;
        let self_term = self_sum(&measure, cfg.inv_sigma_sq());
        Ok(Self {
            cfg,
            measure,
            raw: RawFaces::new(mesh)?,
            self_term,
        })
    }

    pub fn config(&self) -> &VarifoldConfig {
        &self.cfg
    }

    /// Squared distance from `mesh` to the target and, if requested, its vertex gradient.
    pub fn evaluate(
        &self,
        mesh: &TriMesh,
        with_gradient: bool,
    ) -> Result<(f64, Option<Vec<Vector3<f64>>>)> {
        let inv_s2 = self.cfg.inv_sigma_sq();
        let measure = FaceMeasure::new(mesh)?;
        let value = combine(
            self_sum(&measure, inv_s2),
            self.self_term,
            cross_sum(&measure, &self.measure, inv_s2),
        )?;
        if !with_gradient {
            return Ok((value, None));
        }
        let raw = RawFaces::new(mesh)?;
        let mut grad = vec![Vector3::zeros(); mesh.vertex_count()];
        // The self term is symmetric, so each face appears in both slots.
        scatter_to_vertices(mesh, &raw.face_gradients(&raw, inv_s2), 2.0, &mut grad);
        scatter_to_vertices(mesh, &raw.face_gradients(&self.raw, inv_s2), -2.0, &mut grad);
        Ok((value, Some(grad)))
    }
}

#[cfg(test)]
mod tests {
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::synthetic::{icosphere, random_closed_mesh, random_soup};

    fn unit_triangle(offset: Vector3<f64>) -> TriMesh {
        TriMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0) + offset,
                Point3::new(1.0, 0.0, 0.0) + offset,
                Point3::new(0.0, 1.0, 0.0) + offset,
            ],
            vec![[0, 1, 2]],
        )
        .unwrap()
    }

    /// Direct evaluation of the three double sums with no shared code.
    fn naive(a: &TriMesh, b: &TriMesh, sigma: f64) -> f64 {
        let faces = |m: &TriMesh| -> Vec<(Point3, Vector3<f64>, f64)> {
            m.faces()
                .iter()
                .map(|&[i, j, k]| {
                    let (p, q, r) = (m.vertices()[i], m.vertices()[j], m.vertices()[k]);
                    let c = (q - p).cross(&(r - p));
                    ((p + q + r) / 3.0, c.normalize(), c.norm() / 2.0)
                })
                .collect()
        };
        let term = |x: &[(Point3, Vector3<f64>, f64)], y: &[(Point3, Vector3<f64>, f64)]| {
            let mut s = 0.0;
            for (xi, ni, ai) in x {
                for (yj, nj, aj) in y {
                    s += (-(xi - yj).norm_squared() / (sigma * sigma)).exp()
                        * ni.dot(nj).powi(2)
                        * ai
                        * aj;
                }
            }
            s
        };
        let (fa, fb) = (faces(a), faces(b));
        term(&fa, &fa) - 2.0 * term(&fa, &fb) + term(&fb, &fb)
    }

    #[test]
    fn identical_meshes_have_zero_distance() {
        let mesh = icosphere(2, 1.0);
        let cfg = VarifoldConfig::new(0.4).unwrap();
        let area = mesh.total_area().unwrap();
        assert!(varifold_distance_sq(&mesh, &mesh, &cfg).unwrap() <= 1e-10 * area * area);
        let g = varifold_gradient(&mesh, &mesh, &cfg).unwrap();
        let norm = g.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
        assert!(norm <= 1e-8 * area * area);
    }

    #[test]
    fn far_apart_triangles() {
        let a = unit_triangle(Vector3::zeros());
        let b = unit_triangle(Vector3::new(10.0, 0.0, 0.0));
        let cfg = VarifoldConfig::new(0.025).unwrap();
        let d = varifold_distance_sq(&a, &b, &cfg).unwrap();
        assert!((d - naive(&a, &b, 0.025)).abs() < 1e-12);
        assert!((d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn orientation_blind() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_closed_mesh(&mut rng, 60, 0.05);
        let b = random_closed_mesh(&mut rng, 80, 0.05);
        let cfg = VarifoldConfig::new(0.4).unwrap();
        let d = varifold_distance_sq(&a, &b, &cfg).unwrap();
        let d_flip = varifold_distance_sq(&a, &b.flipped(), &cfg).unwrap();
        assert!((d - d_flip).abs() <= 1e-12 * d);
    }

    #[test]
    fn exactly_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let faces = rng.random_range(3..30);
            let a = random_soup(&mut rng, faces, 2.0);
            let faces = rng.random_range(3..30);
            let b = random_soup(&mut rng, faces, 2.0);
            let cfg = VarifoldConfig::new(0.7).unwrap();
            assert_eq!(
                varifold_distance_sq(&a, &b, &cfg).unwrap().to_bits(),
                varifold_distance_sq(&b, &a, &cfg).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn matches_naive_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let faces = rng.random_range(1..20);
            let a = random_soup(&mut rng, faces, 1.5);
            let faces = rng.random_range(1..20);
            let b = random_soup(&mut rng, faces, 1.5);
            let sigma = rng.random_range(0.1..1.0);
            let ours = varifold_distance_sq(&a, &b, &VarifoldConfig::new(sigma).unwrap()).unwrap();
            let reference = naive(&a, &b, sigma);
            assert!((ours - reference).abs() <= 1e-12 * reference.abs().max(1e-300));
        }
    }

    #[test]
    fn rigid_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_closed_mesh(&mut rng, 50, 0.1);
        let b = random_closed_mesh(&mut rng, 70, 0.1);
        let cfg = VarifoldConfig::new(0.5).unwrap();
        let d = varifold_distance_sq(&a, &b, &cfg).unwrap();
        let rot = Rotation3::from_euler_angles(0.4, 1.0, -2.2);
        let t = Vector3::new(1.0, -3.0, 2.0);
        let moved = |m: &TriMesh| m.map_vertices(|p| rot * p + t);
        let d2 = varifold_distance_sq(&moved(&a), &moved(&b), &cfg).unwrap();
        assert!((d - d2).abs() <= 1e-10 * d);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = random_soup(&mut rng, 6, 1.0);
        let b = random_soup(&mut rng, 4, 1.0);
        let cfg = VarifoldConfig::new(0.4).unwrap();
        let grad = varifold_gradient(&a, &b, &cfg).unwrap();
        let h = 1e-5;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..a.vertex_count() {
            for k in 0..3 {
                let shifted = |s: f64| {
                    let mut v = a.vertices().to_vec();
                    v[i][k] += s;
                    varifold_distance_sq(&a.with_vertices(v).unwrap(), &b, &cfg).unwrap()
                };
                let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                num += (fd - grad[i][k]).powi(2);
                den += grad[i][k].powi(2);
            }
        }
        assert!((num / den).sqrt() < 1e-5, "relative error {}", (num / den).sqrt());
    }

    #[test]
    fn far_target_gradient_is_self_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_soup(&mut rng, 5, 1.0);
        let b = random_soup(&mut rng, 5, 1.0).map_vertices(|p| p + Vector3::new(100.0, 0.0, 0.0));
        let empty_far = random_soup(&mut rng, 1, 0.1).map_vertices(|p| p + Vector3::new(0.0, 1e3, 0.0));
        let cfg = VarifoldConfig::new(0.4).unwrap();
        let g = varifold_gradient(&a, &b, &cfg).unwrap();
        let g_self = varifold_gradient(&a, &empty_far, &cfg).unwrap();
        for (x, y) in g.iter().zip(&g_self) {
            assert!((x - y).norm() <= 1e-12);
        }
    }

    #[test]
    fn rejects_bad_sigma() {
        assert!(VarifoldConfig::new(0.0).is_err());
        assert!(VarifoldConfig::new(f64::NAN).is_err());
    }

    #[test]
    fn target_cache_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_closed_mesh(&mut rng, 40, 0.1);
        let b = random_closed_mesh(&mut rng, 60, 0.1);
        let cfg = VarifoldConfig::new(0.3).unwrap();
        let target = VarifoldTarget::new(&b, cfg).unwrap();
        let (v, _) = target.evaluate(&a, false).unwrap();
        let d = varifold_distance_sq(&a, &b, &cfg).unwrap();
        assert!((v - d).abs() <= 1e-12 * d);
    }
}
