//! Deformation bases from tangent vectors of registered mesh sequences.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::Basis;
use crate::mesh::{DeformationField, TriMesh};

/// A finite-difference velocity on the template connectivity.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentSample {
    pub field: DeformationField,
    pub sequence: usize,
    /// Index of the first frame of the difference.
    pub time: usize,
}

impl TangentSample {
    pub fn scaled(mut self, factor: f64) -> Self {
        self.field = &self.field * factor;
        self
    }
}

/// `frame_{t+1} − frame_t` for every consecutive pair of every sequence.
pub fn motion_tangents(sequences: &[Vec<TriMesh>], template: &TriMesh) -> Result<Vec<TangentSample>> {
    let per_sequence: Vec<Vec<TangentSample>> = sequences
        .par_iter()
        .enumerate()
        .map(|(s, frames)| sequence_tangents(s, frames, template))
        .collect::<Result<_>>()?;
    Ok(per_sequence.into_iter().flatten().collect())
}

/// Tangents of same-pose cross-identity geodesic paths; the mechanics are
/// those of [`motion_tangents`].
pub fn shape_tangents(paths: &[Vec<TriMesh>], template: &TriMesh) -> Result<Vec<TangentSample>> {
    motion_tangents(paths, template)
}

fn sequence_tangents(sequence: usize, frames: &[TriMesh], template: &TriMesh) -> Result<Vec<TangentSample>> {
    if frames.len() < 2 {
        return Err(Error::Sequence {
            sequence,
            frame: frames.len(),
            source: Box::new(Error::InvalidArgument("a sequence needs at least 2 frames".into())),
        });
    }
    for (frame, mesh) in frames.iter().enumerate() {
        if !mesh.same_connectivity(template) {
            return Err(Error::Sequence {
                sequence,
                frame,
                source: Box::new(Error::ConnectivityMismatch {
                    expected: template.vertex_count(),
                    found: mesh.vertex_count(),
                }),
            });
        }
    }
    Ok(frames
        .windows(2)
        .enumerate()
        .map(|(time, w)| TangentSample {
            field: w[1]
                .vertices()
                .iter()
                .zip(w[0].vertices())
                .map(|(b, a)| b - a)
                .collect::<Vec<_>>()
                .into(),
            sequence,
            time,
        })
        .collect())
}

/// Principal components of a sample set.
#[derive(Debug, Clone)]
pub struct PcaBasis {
    /// Orthonormal in the flat `ℝ^{3V}` inner product.
    pub components: Vec<DeformationField>,
    /// Every singular value of the (centered) sample matrix, nonincreasing.
    pub singular_values: Vec<f64>,
    pub mean: Option<DeformationField>,
}

impl PcaBasis {
    /// Squared singular values.
    pub fn explained_variance(&self) -> Vec<f64> {
        self.singular_values.iter().map(|s| s * s).collect()
    }

    /// Sum of squared singular values beyond the kept components.
    pub fn residual_variance(&self) -> f64 {
        self.singular_values[self.components.len()..]
            .iter()
            .map(|s| s * s)
            .sum()
    }
}

/// Top `count` left singular vectors of the `3V × N` sample matrix. Each
/// component's largest-magnitude entry is made positive.
pub fn pca_basis(samples: &[TangentSample], count: usize, center: bool) -> Result<PcaBasis> {
    let first = samples.first().ok_or(Error::Empty("tangent samples"))?;
    let rows = 3 * first.field.len();
    for s in samples {
        if s.field.len() != first.field.len() {
            return Err(Error::ConnectivityMismatch {
                expected: first.field.len(),
                found: s.field.len(),
            });
        }
    }
    let limit = samples.len().min(rows);
    if count == 0 || count > limit {
        return Err(Error::InvalidArgument(format!(
            "component count {count} must be in 1..={limit}"
        )));
    }
    let mut data = DMatrix::from_vec(
        rows,
        samples.len(),
        samples.iter().flat_map(|s| s.field.to_flat()).collect(),
    );
    let mean = center.then(|| {
        let m = data.column_mean();
        for mut c in data.column_iter_mut() {
            c -= &m;
        }
        DeformationField::from_flat(m.as_slice())
    });
    if data.iter().all(|x| *x == 0.0) {
        return Err(Error::InvalidArgument("all tangent samples are zero".into()));
    }
    let (singular_values, directions) = principal_directions(&data, count);
    let components = directions
        .into_iter()
        .map(|mut c| {
            fix_sign(&mut c);
            DeformationField::from_flat(c.as_slice())
        })
        .collect();
    Ok(PcaBasis {
        components,
        singular_values,
        mean,
    })
}

/// All singular values (nonincreasing) and the top `count` left singular
/// vectors of `data`, via the eigendecomposition of the smaller Gram matrix.
fn principal_directions(data: &DMatrix<f64>, count: usize) -> (Vec<f64>, Vec<DVector<f64>>) {
    let (rows, cols) = data.shape();
    let wide = cols > rows;
    let gram = if wide {
        data * data.transpose()
    } else {
        data.tr_mul(data)
    };
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let singular_values: Vec<f64> = order
        .iter()
        .map(|&j| eig.eigenvalues[j].max(0.0).sqrt())
        .collect();
    let top: Vec<DVector<f64>> = order[..count]
        .iter()
        .zip(&singular_values)
        .map(|(&j, &s)| {
            let v = eig.eigenvectors.column(j);
            if wide || s == 0.0 {
                v.into_owned()
            } else {
                data * v / s
            }
        })
        .collect();
    if wide {
        return (singular_values, top);
    }
    // Restore exact orthonormality lost to rounding in `A v / σ`.
    let q = DMatrix::from_columns(&top).qr().q();
    let directions = top
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let c = q.column(j).into_owned();
            if c.dot(t) < 0.0 {
                -c
            } else {
                c
            }
        })
        .collect();
    (singular_values, directions)
}

fn fix_sign(c: &mut DVector<f64>) {
    let (mut best, mut index) = (0.0, 0);
    for (i, x) in c.iter().enumerate() {
        if x.abs() > best {
            best = x.abs();
            index = i;
        }
    }
    if c[index] < 0.0 {
        c.neg_mut();
    }
}

/// What [`build_basis`] computed alongside the basis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildReport {
    pub pose_singular_values: Vec<f64>,
    pub shape_singular_values: Vec<f64>,
    pub motion_samples: usize,
    pub shape_samples: usize,
    /// Smallest eigenvalue of the normalized Gram matrix of all fields.
    pub independence: f64,
}

pub fn build_basis(
    motion: &[TangentSample],
    shape: &[TangentSample],
    n: usize,
    m: usize,
    template: &TriMesh,
    center: bool,
) -> Result<(Basis, BuildReport)> {
    let pose = pca_basis(motion, n, center)?;
    let body = pca_basis(shape, m, center)?;
    let basis = Basis::new(template.clone(), pose.components, body.components)?;
    let report = BuildReport {
        pose_singular_values: pose.singular_values,
        shape_singular_values: body.singular_values,
        motion_samples: motion.len(),
        shape_samples: shape.len(),
        independence: basis.independence(),
    };
    Ok((basis, report))
}
