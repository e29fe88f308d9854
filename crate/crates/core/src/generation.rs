//! Pose/shape disentanglement: motion transfer by block substitution and
//! random generation from Gaussian mixtures over initial velocities.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesic::solve_ivp;
use crate::latent::{Basis, LatentCode, LatentPath};
use crate::mesh::TriMesh;
use crate::sobolev::MetricParams;

/// Smallest covariance eigenvalue kept by fitting and model construction.
pub const COVARIANCE_FLOOR: f64 = 1e-8;
pub const DEFAULT_POSE_COMPONENTS: usize = 10;
pub const DEFAULT_SHAPE_COMPONENTS: usize = 6;

const MAX_EM_ITER: usize = 500;
const EM_REL_TOL: f64 = 1e-8;

/// Replaces the shape block of every code with `target_shape`.
pub fn transfer_motion(path: &LatentPath, target_shape: &[f64]) -> Result<LatentPath> {
    let m = path.start().shape.len();
    if target_shape.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            found: target_shape.len(),
        });
    }
    LatentPath::new(
        path.codes
            .iter()
            .map(|c| LatentCode {
                pose: c.pose.clone(),
                shape: target_shape.to_vec(),
            })
            .collect(),
    )
}

/// Initial velocities `T·(α₁ − α₀)` of the given paths, split into pose and shape blocks.
pub fn velocity_samples(paths: &[LatentPath]) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    paths
        .iter()
        .map(|path| {
            let v = path.initial_velocity();
            let n = path.start().pose.len();
            (
                DVector::from_column_slice(&v.as_slice()[..n]),
                DVector::from_column_slice(&v.as_slice()[n..]),
            )
        })
        .unzip()
}

/// Gaussian mixture with full covariances, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
struct Component {
    log_weight: f64,
    mean: DVector<f64>,
    /// Lower Cholesky factor of the covariance.
    chol: DMatrix<f64>,
    log_det: f64,
}

impl Component {
    fn log_density(&self, x: &DVector<f64>) -> f64 {
        let d = x.len() as f64;
        let z = self
            .chol
            .solve_lower_triangular(&(x - &self.mean))
            .expect("cholesky factor has a positive diagonal");
        -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + self.log_det + z.norm_squared())
    }
}

/// Symmetrizes and raises every eigenvalue to at least the floor.
fn regularize(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new((cov + cov.transpose()) * 0.5);
    let vals = eig.eigenvalues.map(|v| v.max(COVARIANCE_FLOOR));
    let out = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    (&out + out.transpose()) * 0.5
}

impl GmmModel {
    /// Validates shapes and weights. Covariances that are not symmetric with
    /// eigenvalues at or above the floor are symmetrized and clamped; valid ones
    /// are kept bit for bit.
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, covariances: Vec<Vec<f64>>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("mixture components"));
        }
        if means.len() != weights.len() || covariances.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: weights.len(),
                found: if means.len() != weights.len() { means.len() } else { covariances.len() },
            });
        }
        let d = means[0].len();
        if d == 0 {
            return Err(Error::Empty("mixture dimension"));
        }
        for (mu, cov) in means.iter().zip(&covariances) {
            if mu.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: mu.len() });
            }
            if cov.len() != d * d {
                return Err(Error::DimensionMismatch { expected: d * d, found: cov.len() });
            }
        }
        let all = weights.iter().chain(means.iter().flatten()).chain(covariances.iter().flatten());
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mixture parameters".into()));
        }
        if weights.iter().any(|&w| w < 0.0) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("mixture weights must lie on the simplex".into()));
        }
        let covariances = covariances
            .into_iter()
            .map(|c| {
                let m = DMatrix::from_row_slice(d, d, &c);
                let valid = m == m.transpose()
                    && SymmetricEigen::new(m.clone()).eigenvalues.min() >= COVARIANCE_FLOOR * (1.0 - 1e-9);
                if valid {
                    c
                } else {
                    regularize(&m).transpose().as_slice().to_vec()
                }
            })
            .collect();
        Ok(Self {
            weights,
            means,
            covariances,
        })
    }

    pub fn component_count(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn mean(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.means[k])
    }

    pub fn covariance(&self, k: usize) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim(), self.dim(), &self.covariances[k])
    }

    fn components(&self) -> Result<Vec<Component>> {
        (0..self.component_count())
            .map(|k| {
                let chol = self
                    .covariance(k)
                    .cholesky()
                    .ok_or_else(|| Error::InvalidArgument(format!("covariance {k} is not positive definite")))?
                    .l();
                let log_det = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
                Ok(Component {
                    log_weight: self.weights[k].ln(),
                    mean: self.mean(k),
                    chol,
                    log_det,
                })
            })
            .collect()
    }

    /// Total log-likelihood of the samples.
    pub fn log_likelihood(&self, samples: &[DVector<f64>]) -> Result<f64> {
        let comps = self.components()?;
        for x in samples {
            if x.len() != self.dim() {
                return Err(Error::DimensionMismatch { expected: self.dim(), found: x.len() });
            }
        }
        Ok(samples.iter().map(|x| responsibilities(&comps, x).0).sum())
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Result<DVector<f64>> {
        let comps = self.components()?;
        Ok(draw(&comps, &self.weights, rng))
    }
}

fn draw(comps: &[Component], weights: &[f64], rng: &mut impl Rng) -> DVector<f64> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut k = comps.len() - 1;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            k = i;
            break;
        }
    }
    let d = comps[k].mean.len();
    let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    &comps[k].mean + &comps[k].chol * z
}

/// Log-density of `x` and its posterior component probabilities.
fn responsibilities(comps: &[Component], x: &DVector<f64>) -> (f64, Vec<f64>) {
    let logs: Vec<f64> = comps.iter().map(|c| c.log_weight + c.log_density(x)).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total = top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
    (total, logs.iter().map(|l| (l - total).exp()).collect())
}

/// A fitted mixture with its EM trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Total log-likelihood after each E-step.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn kmeans_pp(samples: &[DVector<f64>], k: usize, rng: &mut impl Rng) -> Vec<DVector<f64>> {
    let mut centers = vec![samples[rng.random_range(0..samples.len())].clone()];
    let mut dist: Vec<f64> = samples.iter().map(|x| (x - &centers[0]).norm_squared()).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = dist.iter().rposition(|&d| d > 0.0).unwrap_or(0);
            for (i, d) in dist.iter().enumerate() {
                acc += d;
                if u < acc && *d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..samples.len())
        };
        let c = samples[pick].clone();
        for (d, x) in dist.iter_mut().zip(samples) {
            *d = d.min((x - &c).norm_squared());
        }
        centers.push(c);
    }
    centers
}

/// Weighted maximum-likelihood update; an empty component keeps its previous parameters.
fn m_step(samples: &[DVector<f64>], resp: &[Vec<f64>], previous: Option<&[Component]>) -> Vec<Component> {
    let n = samples.len() as f64;
    let d = samples[0].len();
    let k = resp[0].len();
    (0..k)
        .map(|j| {
            let nk: f64 = resp.iter().map(|r| r[j]).sum();
            if nk <= 0.0 {
                let mut c = previous.expect("initial assignment covers every component")[j].clone();
                c.log_weight = f64::NEG_INFINITY;
                return c;
            }
            let mean = samples
                .iter()
                .zip(resp)
                .fold(DVector::zeros(d), |acc, (x, r)| acc + x * r[j])
                / nk;
            let cov = samples.iter().zip(resp).fold(DMatrix::zeros(d, d), |acc, (x, r)| {
                let dx = x - &mean;
                acc + &dx * dx.transpose() * r[j]
            }) / nk;
            let chol = regularize(&cov).cholesky().expect("floored covariance is positive definite").l();
            let log_det = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
            Component {
                log_weight: (nk / n).ln(),
                mean,
                chol,
                log_det,
            }
        })
        .collect()
}

/// EM for a `k`-component full-covariance mixture, initialized by k-means++
/// seeding and a hard nearest-center assignment.
pub fn fit_gmm(samples: &[DVector<f64>], k: usize, seed: u64) -> Result<GmmFit> {
    if samples.is_empty() {
        return Err(Error::Empty("mixture samples"));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("component count must be at least 1".into()));
    }
    if samples.len() < k {
        return Err(Error::InvalidArgument(format!(
            "{} samples cannot support {k} components",
            samples.len()
        )));
    }
    let d = samples[0].len();
    if d == 0 {
        return Err(Error::Empty("sample dimension"));
    }
    for x in samples {
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mixture samples".into()));
        }
    }
    if samples.iter().all(|x| x == &samples[0]) {
        return Err(Error::InvalidArgument("all samples are identical".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = kmeans_pp(samples, k, &mut rng);
    let resp: Vec<Vec<f64>> = samples
        .iter()
        .map(|x| {
            let nearest = (0..k)
                .min_by(|&a, &b| {
                    (x - &centers[a]).norm_squared().total_cmp(&(x - &centers[b]).norm_squared())
                })
                .expect("k is positive");
            (0..k).map(|j| if j == nearest { 1.0 } else { 0.0 }).collect()
        })
        .collect();
    // Components a hard assignment leaves empty start at their seed center.
    let seeded: Vec<Component> = centers
        .iter()
        .map(|c| Component {
            log_weight: f64::NEG_INFINITY,
            mean: c.clone(),
            chol: DMatrix::identity(d, d) * COVARIANCE_FLOOR.sqrt(),
            log_det: d as f64 * COVARIANCE_FLOOR.ln(),
        })
        .collect();
    let mut comps = m_step(samples, &resp, Some(&seeded));

    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_EM_ITER {
        let (ll, resp): (Vec<f64>, Vec<Vec<f64>>) =
            samples.iter().map(|x| responsibilities(&comps, x)).unzip();
        let ll: f64 = ll.iter().sum();
        if let Some(&prev) = history.last() {
            if ll - prev < EM_REL_TOL * f64::abs(prev) {
                history.push(ll);
                converged = true;
                break;
            }
        }
        history.push(ll);
        iterations += 1;
        comps = m_step(samples, &resp, Some(&comps));
    }
    if !converged {
        let ll = samples.iter().map(|x| responsibilities(&comps, x).0).sum();
        history.push(ll);
    }

    let model = GmmModel {
        weights: comps.iter().map(|c| c.log_weight.exp()).collect(),
        means: comps.iter().map(|c| c.mean.as_slice().to_vec()).collect(),
        covariances: comps
            .iter()
            .map(|c| {
                let cov = &c.chol * c.chol.transpose();
                ((&cov + cov.transpose()) * 0.5).as_slice().to_vec()
            })
            .collect(),
    };
    let total: f64 = model.weights.iter().sum();
    let model = GmmModel {
        weights: model.weights.iter().map(|w| w / total).collect(),
        ..model
    };
    Ok(GmmFit {
        model,
        log_likelihood: history,
        iterations,
        converged,
    })
}

/// Draws a pose and a shape velocity from their mixtures with one seeded stream.
pub fn sample_velocity(pose: &GmmModel, shape: &GmmModel, seed: u64) -> Result<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bp = pose.sample(&mut rng)?;
    let bs = shape.sample(&mut rng)?;
    Ok(DVector::from_iterator(
        bp.len() + bs.len(),
        bp.iter().chain(bs.iter()).copied(),
    ))
}

/// A random shape: the endpoint of the geodesic from the template with a
/// velocity drawn from the mixtures.
pub fn sample_shape(
    basis: &Basis,
    pose: &GmmModel,
    shape: &GmmModel,
    steps: usize,
    params: &MetricParams,
    seed: u64,
) -> Result<TriMesh> {
    if pose.dim() != basis.pose_count() {
        return Err(Error::DimensionMismatch { expected: basis.pose_count(), found: pose.dim() });
    }
    if shape.dim() != basis.shape_count() {
        return Err(Error::DimensionMismatch { expected: basis.shape_count(), found: shape.dim() });
    }
    let velocity = sample_velocity(pose, shape, seed)?;
    let attach = |e: Error| Error::Generation {
        velocity: velocity.as_slice().to_vec(),
        source: Box::new(e),
    };
    let (path, _) = solve_ivp(basis, &DVector::zeros(basis.dim()), &velocity, steps, params)
        .map_err(attach)?;
    basis.decode(path.end()).map_err(attach)
}
