//! Mesh primitives and a small synthetic "body" dataset used by the examples,
//! the benches and the test suites.
//!
//! The dataset stands in for registered scan sequences: a 402-vertex
//! ellipsoidal template, smooth articulated motions of its upper half, and
//! curved paths between body-type variations at a fixed pose.

use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::mesh::{io::write_mesh, Point3, TriMesh};

/// Subdivided icosahedron projected onto a sphere.
pub fn icosphere(levels: usize, radius: f64) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Point3::from(*p).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..levels {
        let mut cache = HashMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point3>| {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = vertices.into_iter().map(|v| v * radius).collect();
    TriMesh::new(vertices, faces).expect("icosphere is valid")
}

/// Closed UV ellipsoid with `slices * (stacks - 1) + 2` vertices, outward normals.
pub fn uv_ellipsoid(slices: usize, stacks: usize, radii: Vector3<f64>) -> TriMesh {
    assert!(slices >= 3 && stacks >= 2);
    let mut vertices = vec![Point3::new(0.0, 0.0, radii.z)];
    for i in 1..stacks {
        let phi = PI * i as f64 / stacks as f64;
        for j in 0..slices {
            let theta = 2.0 * PI * j as f64 / slices as f64;
            vertices.push(Point3::new(
                radii.x * phi.sin() * theta.cos(),
                radii.y * phi.sin() * theta.sin(),
                radii.z * phi.cos(),
            ));
        }
    }
    vertices.push(Point3::new(0.0, 0.0, -radii.z));
    let south = vertices.len() - 1;
    let ring = |i: usize, j: usize| 1 + (i - 1) * slices + (j % slices);
    let mut faces = Vec::new();
    for j in 0..slices {
        faces.push([0, ring(1, j), ring(1, j + 1)]);
    }
    for i in 1..stacks - 1 {
        for j in 0..slices {
            let (a, b) = (ring(i, j), ring(i, j + 1));
            let (c, d) = (ring(i + 1, j), ring(i + 1, j + 1));
            faces.push([a, c, d]);
            faces.push([a, d, b]);
        }
    }
    for j in 0..slices {
        faces.push([south, ring(stacks - 1, j + 1), ring(stacks - 1, j)]);
    }
    TriMesh::new(vertices, faces).expect("ellipsoid is valid")
}

/// Planar `nx × ny` grid in z = 0 with deterministic in-plane jitter on interior vertices.
pub fn flat_grid(nx: usize, ny: usize, spacing: f64, jitter: f64) -> TriMesh {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut vertices = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            let interior = i > 0 && i < nx && j > 0 && j < ny;
            let (dx, dy) = if interior {
                (
                    rng.random_range(-jitter..=jitter),
                    rng.random_range(-jitter..=jitter),
                )
            } else {
                (0.0, 0.0)
            };
            vertices.push(Point3::new(
                (i as f64 + dx) * spacing,
                (j as f64 + dy) * spacing,
                0.0,
            ));
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut faces = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            faces.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            faces.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    TriMesh::new(vertices, faces).expect("grid is valid")
}

/// Vertices on edges used by exactly one face.
pub fn boundary_vertices(mesh: &TriMesh) -> HashSet<usize> {
    let mut count: HashMap<(usize, usize), usize> = HashMap::new();
    for tri in mesh.faces() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    count
        .into_iter()
        .filter(|&(_, c)| c == 1)
        .flat_map(|((a, b), _)| [a, b])
        .collect()
}

/// A closed ellipsoid with roughly `target_vertices` vertices and random radial noise.
pub fn random_closed_mesh(rng: &mut impl Rng, target_vertices: usize, noise: f64) -> TriMesh {
    let slices = ((target_vertices as f64 / 2.0).sqrt().round() as usize).max(4);
    let stacks = ((target_vertices - 2) / slices + 1).max(3);
    let radii = Vector3::new(
        rng.random_range(0.6..1.2),
        rng.random_range(0.6..1.2),
        rng.random_range(0.8..1.6),
    );
    let base = uv_ellipsoid(slices, stacks, radii);
    let rot = Rotation3::from_euler_angles(
        rng.random_range(-PI..PI),
        rng.random_range(-PI..PI),
        rng.random_range(-PI..PI),
    );
    let shift = Vector3::new(
        rng.random_range(-0.2..0.2),
        rng.random_range(-0.2..0.2),
        rng.random_range(-0.2..0.2),
    );
    let vertices = base
        .vertices()
        .iter()
        .map(|p| rot * (p * (1.0 + noise * rng.random_range(-1.0..1.0))) + shift)
        .collect();
    base.with_vertices(vertices).unwrap()
}

/// Open triangle soup of `faces` random triangles inside a box of side `extent`.
pub fn random_soup(rng: &mut impl Rng, faces: usize, extent: f64) -> TriMesh {
    let mut vertices = Vec::with_capacity(3 * faces);
    let mut tris = Vec::with_capacity(faces);
    for f in 0..faces {
        let center = Point3::new(
            rng.random_range(0.0..extent),
            rng.random_range(0.0..extent),
            rng.random_range(0.0..extent),
        );
        for _ in 0..3 {
            vertices.push(
                center
                    + Vector3::new(
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                        rng.random_range(-0.5..0.5),
                    ),
            );
        }
        tris.push([3 * f, 3 * f + 1, 3 * f + 2]);
    }
    TriMesh::new(vertices, tris).unwrap()
}

/// Connected random sheet: a jittered grid lifted by a smooth random height field.
pub fn random_sheet(rng: &mut impl Rng, nx: usize, ny: usize) -> TriMesh {
    let grid = flat_grid(nx, ny, 1.0 / nx.max(ny) as f64, 0.2);
    let (a, b, c) = (
        rng.random_range(-0.5..0.5),
        rng.random_range(-0.5..0.5),
        rng.random_range(0.5..3.0),
    );
    grid.map_vertices(|p| Point3::new(p.x, p.y, a * (c * p.x).sin() + b * (c * p.y).cos()))
}

/// The 402-vertex template of the synthetic body dataset.
pub fn body_template() -> TriMesh {
    uv_ellipsoid(20, 21, Vector3::new(0.3, 0.2, 0.9))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyConfig {
    pub sequences: usize,
    pub frames: usize,
    pub shape_paths: usize,
    pub path_frames: usize,
    pub pose_modes: usize,
    pub shape_modes: usize,
    pub seed: u64,
}

impl Default for BodyConfig {
    fn default() -> Self {
        Self {
            sequences: 20,
            frames: 12,
            shape_paths: 30,
            path_frames: 4,
            pose_modes: 160,
            shape_modes: 50,
            seed: 0,
        }
    }
}

/// A smooth field `a·sin(w·p + φ)` on the template.
#[derive(Debug, Clone)]
struct Wave {
    amplitude: Vector3<f64>,
    frequency: Vector3<f64>,
    phase: f64,
}

impl Wave {
    fn random(rng: &mut impl Rng, amplitude: f64) -> Self {
        let mut unit = || rng.random_range(-1.0..1.0);
        let a = Vector3::new(unit(), unit(), unit()) * amplitude;
        let w = Vector3::new(unit(), unit(), unit()) * 4.0;
        Self {
            amplitude: a,
            frequency: w,
            phase: rng.random_range(0.0..2.0 * PI),
        }
    }

    fn at(&self, p: &Point3) -> Vector3<f64> {
        self.amplitude * (self.frequency.dot(p) + self.phase).sin()
    }
}

/// Pose and body-type parametrization of the synthetic template.
///
/// Pose coordinates 0 and 1 drive a forward bend and a twist of the upper
/// half; the rest weight smooth wave fields. Shape coordinates 0..3 scale the
/// axes; the rest weight wave fields.
#[derive(Debug, Clone)]
pub struct BodyModel {
    template: TriMesh,
    pose_waves: Vec<Wave>,
    shape_waves: Vec<Wave>,
}

impl BodyModel {
    pub fn new(pose_modes: usize, shape_modes: usize, rng: &mut impl Rng) -> Self {
        let pose_waves = (0..pose_modes.saturating_sub(2))
            .map(|_| Wave::random(rng, 0.02))
            .collect();
        let shape_waves = (0..shape_modes.saturating_sub(3))
            .map(|_| Wave::random(rng, 0.03))
            .collect();
        Self {
            template: body_template(),
            pose_waves,
            shape_waves,
        }
    }

    pub fn template(&self) -> &TriMesh {
        &self.template
    }

    pub fn pose_dim(&self) -> usize {
        self.pose_waves.len() + 2
    }

    pub fn shape_dim(&self) -> usize {
        self.shape_waves.len() + 3
    }

    pub fn mesh(&self, pose: &[f64], shape: &[f64]) -> TriMesh {
        assert_eq!(pose.len(), self.pose_dim());
        assert_eq!(shape.len(), self.shape_dim());
        self.template.map_vertices(|p0| {
            let scale = Vector3::new(shape[0].exp(), shape[1].exp(), shape[2].exp());
            let mut p = p0.component_mul(&scale);
            for (c, w) in shape[3..].iter().zip(&self.shape_waves) {
                p += w.at(p0) * *c;
            }
            for (c, w) in pose[2..].iter().zip(&self.pose_waves) {
                p += w.at(p0) * *c;
            }
            // Smooth weight rising from the waist to the top.
            let s = ((p0.z / 0.9 + 0.2) / 1.2).clamp(0.0, 1.0);
            let weight = s * s * (3.0 - 2.0 * s);
            let bend = Rotation3::from_axis_angle(&Vector3::x_axis(), pose[0] * weight);
            let twist = Rotation3::from_axis_angle(&Vector3::z_axis(), pose[1] * weight);
            twist * (bend * p)
        })
    }
}

/// Registered motion sequences and same-pose body-type paths on one template.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub template: TriMesh,
    pub motion_sequences: Vec<Vec<TriMesh>>,
    pub shape_paths: Vec<Vec<TriMesh>>,
}

pub fn body_dataset(cfg: &BodyConfig) -> SyntheticDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = BodyModel::new(cfg.pose_modes, cfg.shape_modes, &mut rng);
    let (np, ns) = (model.pose_dim(), model.shape_dim());
    let random_shape = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..ns)
            .map(|i| rng.random_range(-1.0..1.0) * if i < 3 { 0.1 } else { 0.4 })
            .collect()
    };
    let motion_sequences = (0..cfg.sequences)
        .map(|_| {
            let shape = random_shape(&mut rng);
            let tracks: Vec<(f64, f64, f64)> = (0..np)
                .map(|i| {
                    let amp = if i < 2 { 0.4 } else { 0.3 };
                    (
                        rng.random_range(-amp..amp),
                        rng.random_range(0.5..2.0),
                        rng.random_range(0.0..2.0 * PI),
                    )
                })
                .collect();
            (0..cfg.frames)
                .map(|f| {
                    let t = f as f64 / cfg.frames.max(2) as f64;
                    let pose: Vec<f64> = tracks
                        .iter()
                        .map(|(a, w, phase)| a * (2.0 * PI * w * t + phase).sin())
                        .collect();
                    model.mesh(&pose, &shape)
                })
                .collect()
        })
        .collect();
    let shape_paths = (0..cfg.shape_paths)
        .map(|_| {
            let pose: Vec<f64> = (0..np).map(|_| rng.random_range(-0.1..0.1)).collect();
            let from = random_shape(&mut rng);
            let to = random_shape(&mut rng);
            let bow = random_shape(&mut rng);
            (0..cfg.path_frames)
                .map(|f| {
                    let t = f as f64 / (cfg.path_frames - 1).max(1) as f64;
                    let shape: Vec<f64> = (0..ns)
                        .map(|i| from[i] + t * (to[i] - from[i]) + t * (1.0 - t) * bow[i])
                        .collect();
                    model.mesh(&pose, &shape)
                })
                .collect()
        })
        .collect();
    SyntheticDataset {
        template: model.template().clone(),
        motion_sequences,
        shape_paths,
    }
}

impl SyntheticDataset {
    /// Writes `template.obj`, `motion/seq_SSS/frame_FFFF.obj` and
    /// `shape/path_SSS/frame_FFFF.obj` under `dir`.
    pub fn write_to(&self, dir: &std::path::Path) -> Result<()> {
        let create = |p: &std::path::Path| {
            std::fs::create_dir_all(p).map_err(|e| crate::Error::io(p, e))
        };
        create(dir)?;
        write_mesh(&dir.join("template.obj"), &self.template)?;
        for (kind, prefix, groups) in [
            ("motion", "seq", &self.motion_sequences),
            ("shape", "path", &self.shape_paths),
        ] {
            for (s, frames) in groups.iter().enumerate() {
                let sub = dir.join(kind).join(format!("{prefix}_{s:03}"));
                create(&sub)?;
                for (f, mesh) in frames.iter().enumerate() {
                    write_mesh(&sub.join(format!("frame_{f:04}.obj")), mesh)?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::face_geometry;

    #[test]
    fn ellipsoid_counts_and_orientation() {
        let mesh = uv_ellipsoid(20, 21, Vector3::new(0.3, 0.2, 0.9));
        assert_eq!(mesh.vertex_count(), 402);
        assert_eq!(mesh.face_count(), 800);
        let volume: f64 = mesh
            .faces()
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| mesh.vertices()[i]);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum();
        assert!(volume > 0.0);
        assert!(boundary_vertices(&mesh).is_empty());
    }

    #[test]
    fn body_model_at_rest_is_template() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = BodyModel::new(10, 6, &mut rng);
        let mesh = model.mesh(&vec![0.0; model.pose_dim()], &vec![0.0; model.shape_dim()]);
        assert_eq!(&mesh, model.template());
    }

    #[test]
    fn dataset_is_valid_and_deterministic() {
        let cfg = BodyConfig {
            sequences: 3,
            frames: 5,
            shape_paths: 2,
            path_frames: 3,
            ..Default::default()
        };
        let a = body_dataset(&cfg);
        let b = body_dataset(&cfg);
        assert_eq!(a.motion_sequences, b.motion_sequences);
        assert_eq!(a.shape_paths.len(), 2);
        for mesh in a.motion_sequences.iter().chain(&a.shape_paths).flatten() {
            assert!(mesh.same_connectivity(&a.template));
            face_geometry(mesh).unwrap();
        }
    }

    #[test]
    fn dataset_round_trips_through_files() {
        let cfg = BodyConfig {
            sequences: 1,
            frames: 2,
            shape_paths: 1,
            path_frames: 2,
            ..Default::default()
        };
        let data = body_dataset(&cfg);
        let dir = tempfile::tempdir().unwrap();
        data.write_to(dir.path()).unwrap();
        let back = crate::mesh::io::read_mesh(&dir.path().join("motion/seq_000/frame_0001.obj")).unwrap();
        assert_eq!(back, data.motion_sequences[0][1]);
    }
}
