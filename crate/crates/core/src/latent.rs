//! The basis-restricted latent model: decode map, pullback metric and the
//! discrete path energy.

use nalgebra::{DMatrix, DVector, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{DeformationField, TriMesh};
use crate::sobolev::{H2Metric, MetricParams, VertexMap};

/// Smallest admissible eigenvalue of the normalized basis Gram matrix.
const INDEPENDENCE_FLOOR: f64 = 1e-10;

/// A template mesh with pose and shape deformation fields.
///
/// Fields are stored as the columns of a `3V × (n + m)` matrix, pose block
/// first.
#[derive(Debug, Clone)]
pub struct Basis {
    template: TriMesh,
    matrix: DMatrix<f64>,
    pose_count: usize,
}

impl Basis {
    pub fn new(
        template: TriMesh,
        pose: Vec<DeformationField>,
        shape: Vec<DeformationField>,
    ) -> Result<Self> {
        let rows = 3 * template.vertex_count();
        let pose_count = pose.len();
        let mut columns = Vec::with_capacity(rows * (pose.len() + shape.len()));
        for field in pose.iter().chain(&shape) {
            template.check_field(field)?;
            columns.extend(field.to_flat());
        }
        let matrix = DMatrix::from_vec(rows, pose.len() + shape.len(), columns);
        Self::from_matrix(template, matrix, pose_count)
    }

    /// From a `3V × (n + m)` column matrix, pose block first.
    pub fn from_matrix(template: TriMesh, matrix: DMatrix<f64>, pose_count: usize) -> Result<Self> {
        if matrix.nrows() != 3 * template.vertex_count() {
            return Err(Error::ConnectivityMismatch {
                expected: template.vertex_count(),
                found: matrix.nrows() / 3,
            });
        }
        if matrix.ncols() == 0 {
            return Err(Error::Empty("basis fields"));
        }
        if pose_count > matrix.ncols() {
            return Err(Error::InvalidArgument(format!(
                "pose count {pose_count} exceeds {} fields",
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("basis field entries".into()));
        }
        check_independence(&matrix, pose_count)?;
        Ok(Self {
            template,
            matrix,
            pose_count,
        })
    }

    /// Smallest eigenvalue of the Gram matrix of the unit-normalized fields.
    pub fn independence(&self) -> f64 {
        independence(&self.matrix).0
    }

    pub fn template(&self) -> &TriMesh {
        &self.template
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn pose_count(&self) -> usize {
        self.pose_count
    }

    pub fn shape_count(&self) -> usize {
        self.matrix.ncols() - self.pose_count
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn vertex_count(&self) -> usize {
        self.template.vertex_count()
    }

    /// Basis field `i` in combined (pose-first) indexing.
    pub fn field(&self, i: usize) -> DeformationField {
        DeformationField::from_flat(self.matrix.column(i).as_slice())
    }

    pub fn pose_fields(&self) -> Vec<DeformationField> {
        (0..self.pose_count).map(|i| self.field(i)).collect()
    }

    pub fn shape_fields(&self) -> Vec<DeformationField> {
        (self.pose_count..self.dim()).map(|i| self.field(i)).collect()
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: len,
            });
        }
        Ok(())
    }

    /// The deformation field `Σ βᵢ bᵢ`.
    pub fn combine(&self, beta: &DVector<f64>) -> Result<DeformationField> {
        self.check_dim(beta.len())?;
        Ok(DeformationField::from_flat((&self.matrix * beta).as_slice()))
    }

    /// `Mᵀ c` for a vertex covector `c`.
    pub fn project(&self, covector: &[Vector3<f64>]) -> DVector<f64> {
        let flat = DVector::from_iterator(
            3 * covector.len(),
            covector.iter().flat_map(|v| [v.x, v.y, v.z]),
        );
        self.matrix.tr_mul(&flat)
    }

    pub fn decode_vector(&self, alpha: &DVector<f64>) -> Result<TriMesh> {
        let field = self.combine(alpha)?;
        self.template.displaced(&field)
    }

    pub fn decode(&self, code: &LatentCode) -> Result<TriMesh> {
        self.decode_vector(&self.vector(code)?)
    }

    /// The flat vector of a code, checked against this basis's block sizes.
    pub fn vector(&self, code: &LatentCode) -> Result<DVector<f64>> {
        if code.pose.len() != self.pose_count {
            return Err(Error::DimensionMismatch {
                expected: self.pose_count,
                found: code.pose.len(),
            });
        }
        if code.shape.len() != self.shape_count() {
            return Err(Error::DimensionMismatch {
                expected: self.shape_count(),
                found: code.shape.len(),
            });
        }
        Ok(code.to_vector())
    }

    pub fn code(&self, alpha: &DVector<f64>) -> Result<LatentCode> {
        self.check_dim(alpha.len())?;
        Ok(LatentCode::from_vector(alpha, self.pose_count))
    }

    pub fn zero_code(&self) -> LatentCode {
        LatentCode {
            pose: vec![0.0; self.pose_count],
            shape: vec![0.0; self.shape_count()],
        }
    }

    /// The pullback metric frozen at footpoint `alpha`.
    pub fn metric_at(&self, alpha: &DVector<f64>, params: &MetricParams) -> Result<PullbackMetric<'_>> {
        let mesh = self.decode_vector(alpha)?;
        let metric = H2Metric::new(&mesh, *params)?;
        Ok(PullbackMetric {
            basis: self,
            mesh,
            metric,
        })
    }
}

impl VertexMap for Basis {
    fn parameter_count(&self) -> usize {
        self.dim()
    }

    fn mesh_at(&self, theta: &[f64]) -> Result<TriMesh> {
        self.decode_vector(&DVector::from_column_slice(theta))
    }

    fn pullback(&self, _theta: &[f64], vertex_grad: &[Vector3<f64>]) -> Result<Vec<f64>> {
        if vertex_grad.len() != self.vertex_count() {
            return Err(Error::ConnectivityMismatch {
                expected: self.vertex_count(),
                found: vertex_grad.len(),
            });
        }
        Ok(self.project(vertex_grad).as_slice().to_vec())
    }
}

/// Smallest eigenvalue of the column-normalized Gram matrix, with the
/// normalized Gram matrix itself.
fn independence(matrix: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
    let gram = matrix.tr_mul(matrix);
    let d = gram.nrows();
    let scale: Vec<f64> = (0..d).map(|i| gram[(i, i)].sqrt()).collect();
    if scale.iter().any(|&s| s == 0.0) {
        return (0.0, gram);
    }
    let corr = DMatrix::from_fn(d, d, |i, j| gram[(i, j)] / (scale[i] * scale[j]));
    let min_eigenvalue = SymmetricEigen::new(corr.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    (min_eigenvalue, corr)
}

fn check_independence(matrix: &DMatrix<f64>, pose_count: usize) -> Result<()> {
    let (min_eigenvalue, corr) = independence(matrix);
    let d = corr.nrows();
    if min_eigenvalue >= INDEPENDENCE_FLOOR {
        return Ok(());
    }
    let mut pairs = Vec::new();
    for i in 0..pose_count {
        for j in pose_count..d {
            if corr[(i, j)].abs() > 1.0 - 1e-6 {
                pairs.push((i, j - pose_count));
            }
        }
    }
    Err(Error::RankDeficient {
        min_eigenvalue,
        pairs,
    })
}

/// Coefficients over the pose and shape blocks of a basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentCode {
    pub pose: Vec<f64>,
    pub shape: Vec<f64>,
}

impl LatentCode {
    pub fn new(pose: Vec<f64>, shape: Vec<f64>) -> Result<Self> {
        if pose.iter().chain(&shape).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("latent code entries".into()));
        }
        Ok(Self { pose, shape })
    }

    pub fn from_vector(alpha: &DVector<f64>, pose_count: usize) -> Self {
        let s = alpha.as_slice();
        Self {
            pose: s[..pose_count].to_vec(),
            shape: s[pose_count..].to_vec(),
        }
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.pose.iter().chain(&self.shape).copied(),
        )
    }

    pub fn dim(&self) -> usize {
        self.pose.len() + self.shape.len()
    }
}

/// Codes at the evenly spaced times `0, 1/T, …, 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPath {
    pub codes: Vec<LatentCode>,
}

impl LatentPath {
    pub fn new(codes: Vec<LatentCode>) -> Result<Self> {
        if codes.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "a path needs at least 2 codes, got {}",
                codes.len()
            )));
        }
        let (n, m) = (codes[0].pose.len(), codes[0].shape.len());
        for code in &codes {
            if code.pose.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: code.pose.len(),
                });
            }
            if code.shape.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    found: code.shape.len(),
                });
            }
        }
        Ok(Self { codes })
    }

    pub fn from_vectors(vectors: &[DVector<f64>], pose_count: usize) -> Result<Self> {
        Self::new(
            vectors
                .iter()
                .map(|v| LatentCode::from_vector(v, pose_count))
                .collect(),
        )
    }

    pub fn vectors(&self) -> Vec<DVector<f64>> {
        self.codes.iter().map(LatentCode::to_vector).collect()
    }

    /// Number of time steps `T`.
    pub fn steps(&self) -> usize {
        self.codes.len() - 1
    }

    pub fn start(&self) -> &LatentCode {
        &self.codes[0]
    }

    pub fn end(&self) -> &LatentCode {
        &self.codes[self.codes.len() - 1]
    }

    /// The time-1 velocity `T·(α₁ − α₀)`.
    pub fn initial_velocity(&self) -> DVector<f64> {
        (self.codes[1].to_vector() - self.codes[0].to_vector()) * self.steps() as f64
    }

    pub fn reversed(&self) -> Self {
        Self {
            codes: self.codes.iter().rev().cloned().collect(),
        }
    }
}

/// `Ḡ_α` at a fixed footpoint: the surface metric on `decode(α)` restricted
/// to the span of the basis.
pub struct PullbackMetric<'a> {
    basis: &'a Basis,
    mesh: TriMesh,
    metric: H2Metric,
}

impl PullbackMetric<'_> {
    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn inner(&self, beta: &DVector<f64>, eta: &DVector<f64>) -> Result<f64> {
        let h = self.basis.combine(beta)?;
        let k = self.basis.combine(eta)?;
        self.metric.inner(&h, &k)
    }

    /// `Ḡ_α(β, ·)` as a vector: `Mᵀ G M β`.
    pub fn apply(&self, beta: &DVector<f64>) -> Result<DVector<f64>> {
        let h = self.basis.combine(beta)?;
        Ok(self.basis.project(self.metric.apply(&h)?.as_slice()))
    }

    /// Gradient of `α ↦ Ḡ_α(β, η)` at this footpoint.
    pub fn footpoint_grad(&self, beta: &DVector<f64>, eta: &DVector<f64>) -> Result<DVector<f64>> {
        let h = self.basis.combine(beta)?;
        let k = self.basis.combine(eta)?;
        let g = self.metric.vertex_gradient(&self.mesh, &h, &k)?;
        Ok(self.basis.project(&g))
    }

    /// The full `d × d` matrix of `Ḡ_α` in the basis.
    pub fn gram(&self) -> Result<DMatrix<f64>> {
        let d = self.basis.dim();
        let columns: Vec<DVector<f64>> = (0..d)
            .into_par_iter()
            .map(|i| self.apply(&DVector::from_fn(d, |j, _| if i == j { 1.0 } else { 0.0 })))
            .collect::<Result<_>>()?;
        let g = DMatrix::from_columns(&columns);
        Ok((&g + g.transpose()) * 0.5)
    }
}

pub fn decode(basis: &Basis, alpha: &LatentCode) -> Result<TriMesh> {
    basis.decode(alpha)
}

/// `Ḡ_α(β, η)`.
pub fn pullback_inner(
    basis: &Basis,
    alpha: &LatentCode,
    beta: &LatentCode,
    eta: &LatentCode,
    params: &MetricParams,
) -> Result<f64> {
    let (b, e) = (basis.vector(beta)?, basis.vector(eta)?);
    basis.metric_at(&basis.vector(alpha)?, params)?.inner(&b, &e)
}

/// Gradient of `α ↦ Ḡ_α(β, β)`.
pub fn pullback_footpoint_grad(
    basis: &Basis,
    alpha: &LatentCode,
    beta: &LatentCode,
    params: &MetricParams,
) -> Result<DVector<f64>> {
    let b = basis.vector(beta)?;
    basis.metric_at(&basis.vector(alpha)?, params)?.footpoint_grad(&b, &b)
}

/// Value and per-code gradient of the discrete path energy. Gradients of
/// codes not marked free are zero.
#[derive(Debug, Clone)]
pub struct PathEnergy {
    pub value: f64,
    pub gradient: Vec<DVector<f64>>,
}

/// `E = T·Σ_t Ḡ_{α_t}(α_{t+1} − α_t, α_{t+1} − α_t)` over flat code vectors.
///
/// `free[t]` selects the codes whose gradient is wanted.
pub fn path_energy_vectors(
    basis: &Basis,
    codes: &[DVector<f64>],
    params: &MetricParams,
    free: &[bool],
    with_gradient: bool,
) -> Result<PathEnergy> {
    if codes.len() < 2 {
        return Err(Error::InvalidArgument("a path needs at least 2 codes".into()));
    }
    if free.len() != codes.len() {
        return Err(Error::DimensionMismatch {
            expected: codes.len(),
            found: free.len(),
        });
    }
    let steps = codes.len() - 1;
    let t = steps as f64;
    let d = basis.dim();
    // Per segment: value, Ḡ(Δ, ·) and the footpoint gradient if needed.
    let segments: Vec<(f64, DVector<f64>, Option<DVector<f64>>)> = (0..steps)
        .into_par_iter()
        .map(|s| {
            let delta = &codes[s + 1] - &codes[s];
            let wrap = |e: Error| Error::DegeneratePath {
                time: s,
                source: Box::new(e),
            };
            let metric = basis.metric_at(&codes[s], params).map_err(wrap)?;
            let applied = metric.apply(&delta)?;
            let value = delta.dot(&applied);
            let foot = if with_gradient && free[s] {
                Some(metric.footpoint_grad(&delta, &delta)?)
            } else {
                None
            };
            Ok((value, applied, foot))
        })
        .collect::<Result<_>>()?;
    let value = t * segments.iter().map(|s| s.0).sum::<f64>();
    let mut gradient = vec![DVector::zeros(d); codes.len()];
    if with_gradient {
        for (s, (_, applied, foot)) in segments.iter().enumerate() {
            if free[s] {
                let g = &mut gradient[s];
                if let Some(f) = foot {
                    *g += f * t;
                }
                *g -= applied * (2.0 * t);
            }
            if free[s + 1] {
                gradient[s + 1] += applied * (2.0 * t);
            }
        }
    }
    Ok(PathEnergy { value, gradient })
}

pub fn path_energy(
    basis: &Basis,
    path: &LatentPath,
    params: &MetricParams,
    free: &[bool],
) -> Result<PathEnergy> {
    for code in &path.codes {
        basis.vector(code)?;
    }
    path_energy_vectors(basis, &path.vectors(), params, free, true)
}

/// The straight line `α₀ + (t/T)(α₁ − α₀)`.
pub fn linear_interpolate(from: &LatentCode, to: &LatentCode, steps: usize) -> Result<LatentPath> {
    if steps == 0 {
        return Err(Error::InvalidArgument("step count must be at least 1".into()));
    }
    if from.pose.len() != to.pose.len() {
        return Err(Error::DimensionMismatch {
            expected: from.pose.len(),
            found: to.pose.len(),
        });
    }
    if from.shape.len() != to.shape.len() {
        return Err(Error::DimensionMismatch {
            expected: from.shape.len(),
            found: to.shape.len(),
        });
    }
    let (a, b) = (from.to_vector(), to.to_vector());
    let codes = (0..=steps)
        .map(|i| {
            let s = i as f64 / steps as f64;
            LatentCode::from_vector(&(&a + (&b - &a) * s), from.pose.len())
        })
        .collect();
    LatentPath::new(codes)
}
