//! Geodesics in the latent space: the relaxed boundary value problem
//! (interpolation and scan registration) and geodesic shooting
//! (extrapolation).

use std::time::Instant;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discrepancy::{VarifoldConfig, VarifoldTarget};
use crate::error::{Error, Result};
use crate::latent::{path_energy_vectors, Basis, LatentCode, LatentPath};
use crate::mesh::TriMesh;
use crate::optim::{minimize_preconditioned, MinimizeOptions, OptimizerReport, StageReport, Termination};
use crate::sobolev::MetricParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub lambda: f64,
    pub sigma: f64,
}

/// Multiresolution schedule: each stage increases the data weight and
/// sharpens the varifold kernel, warm-started from the previous stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub stages: Vec<Stage>,
    /// Path time steps `T`.
    pub steps: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self::geometric((0.4, 0.025), (1e2, 1e8), 5, 10).expect("default schedule is valid")
    }
}

impl ScheduleConfig {
    /// `count` stages with σ and λ interpolated geometrically between the given endpoints.
    pub fn geometric(sigma: (f64, f64), lambda: (f64, f64), count: usize, steps: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidArgument("a schedule needs at least one stage".into()));
        }
        let interp = |(a, b): (f64, f64), i: usize| {
            if count == 1 {
                b
            } else {
                a * (b / a).powf(i as f64 / (count - 1) as f64)
            }
        };
        let cfg = Self {
            stages: (0..count)
                .map(|i| Stage {
                    lambda: interp(lambda, i),
                    sigma: interp(sigma, i),
                })
                .collect(),
            steps,
            max_iter: 500,
            grad_tol: 1e-6,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::InvalidArgument("a schedule needs at least one stage".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidArgument("path step count must be at least 1".into()));
        }
        for s in &self.stages {
            if !(s.lambda > 0.0 && s.lambda.is_finite() && s.sigma > 0.0 && s.sigma.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "stage weights must be positive and finite, got λ = {}, σ = {}",
                    s.lambda, s.sigma
                )));
            }
        }
        for w in self.stages.windows(2) {
            if w[1].lambda < w[0].lambda || w[1].sigma > w[0].sigma {
                return Err(Error::InvalidArgument(
                    "λ must be nondecreasing and σ nonincreasing across stages".into(),
                ));
            }
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::InvalidArgument("gradient tolerance must be nonnegative".into()));
        }
        Ok(())
    }

    fn options(&self) -> MinimizeOptions {
        MinimizeOptions {
            max_iter: self.max_iter,
            grad_tol: self.grad_tol,
            ..Default::default()
        }
    }
}

/// Which endpoints carry a varifold data term, and whether the start code
/// is held fixed.
struct Problem<'a> {
    basis: &'a Basis,
    params: MetricParams,
    steps: usize,
    start_target: Option<&'a TriMesh>,
    end_target: &'a TriMesh,
    /// Free codes, in path order.
    free: Vec<bool>,
}

impl Problem<'_> {
    fn free_count(&self) -> usize {
        self.free.iter().filter(|f| **f).count()
    }

    fn codes(&self, x: &DVector<f64>) -> Vec<DVector<f64>> {
        let d = self.basis.dim();
        let mut k = 0;
        self.free
            .iter()
            .map(|&f| {
                if f {
                    k += 1;
                    x.rows((k - 1) * d, d).into_owned()
                } else {
                    DVector::zeros(d)
                }
            })
            .collect()
    }

    fn objective(
        &self,
        x: &DVector<f64>,
        lambda: f64,
        targets: &[(usize, VarifoldTarget)],
    ) -> Result<(f64, DVector<f64>)> {
        let codes = self.codes(x);
        let energy = path_energy_vectors(self.basis, &codes, &self.params, &self.free, true)?;
        let mut value = energy.value;
        let mut grads = energy.gradient;
        let data: Vec<(usize, f64, DVector<f64>)> = targets
            .par_iter()
            .map(|(t, target)| {
                let mesh = self.basis.decode_vector(&codes[*t]).map_err(|e| Error::DegeneratePath {
                    time: *t,
                    source: Box::new(e),
                })?;
                let (v, g) = target.evaluate(&mesh, true)?;
                Ok((*t, v, self.basis.project(&g.expect("gradient requested"))))
            })
            .collect::<Result<_>>()?;
        for (t, v, g) in data {
            value += lambda * v;
            grads[t] += g * lambda;
        }
        let d = self.basis.dim();
        let mut flat = DVector::zeros(self.free_count() * d);
        let mut k = 0;
        for (g, f) in grads.iter().zip(&self.free) {
            if *f {
                flat.rows_mut(k * d, d).copy_from(g);
                k += 1;
            }
        }
        Ok((value, flat))
    }

    /// Hessian model for the current path: the path energy with footpoints
    /// frozen plus finite-difference Hessians of the data terms, factored.
    fn preconditioner(
        &self,
        x: &DVector<f64>,
        lambda: f64,
        targets: &[(usize, VarifoldTarget)],
    ) -> Result<Cholesky<f64, Dyn>> {
        let d = self.basis.dim();
        let codes = self.codes(x);
        let mut slot = vec![None; self.free.len()];
        let mut k = 0;
        for (t, f) in self.free.iter().enumerate() {
            if *f {
                slot[t] = Some(k);
                k += 1;
            }
        }
        let n = k * d;
        let mut h = DMatrix::zeros(n, n);
        let grams: Vec<DMatrix<f64>> = (0..self.steps)
            .into_par_iter()
            .map(|s| self.basis.metric_at(&codes[s], &self.params)?.gram())
            .collect::<Result<_>>()?;
        let scale = 2.0 * self.steps as f64;
        for (s, g) in grams.iter().enumerate() {
            for (a, sa) in [(s, 1.0), (s + 1, -1.0)] {
                for (b, sb) in [(s, 1.0), (s + 1, -1.0)] {
                    if let (Some(i), Some(j)) = (slot[a], slot[b]) {
                        let mut block = h.view_mut((i * d, j * d), (d, d));
                        block += g * (scale * sa * sb);
                    }
                }
            }
        }
        for (t, target) in targets {
            let Some(i) = slot[*t] else { continue };
            let data = self.data_hessian(&codes[*t], target)?;
            let mut block = h.view_mut((i * d, i * d), (d, d));
            block += data * lambda;
        }
        let largest = h.diagonal().amax().max(f64::MIN_POSITIVE);
        let mut ridge = 1e-12 * largest;
        loop {
            let mut m = h.clone();
            for i in 0..n {
                m[(i, i)] += ridge;
            }
            if let Some(ch) = m.cholesky() {
                return Ok(ch);
            }
            ridge *= 100.0;
            if ridge > largest {
                return Err(Error::InternalConsistency("preconditioner is not positive definite".into()));
            }
        }
    }

    /// Central-difference Hessian of a data term in latent coordinates,
    /// projected onto the positive semidefinite cone.
    fn data_hessian(&self, alpha: &DVector<f64>, target: &VarifoldTarget) -> Result<DMatrix<f64>> {
        let d = self.basis.dim();
        let step = 1e-5 * alpha.amax().max(1.0);
        let grad = |a: &DVector<f64>| -> Result<DVector<f64>> {
            let mesh = self.basis.decode_vector(a)?;
            let (_, g) = target.evaluate(&mesh, true)?;
            Ok(self.basis.project(&g.expect("gradient requested")))
        };
        let base = grad(alpha)?;
        let columns: Vec<DVector<f64>> = (0..d)
            .into_par_iter()
            .map(|i| {
                let mut plus = alpha.clone();
                plus[i] += step;
                Ok((grad(&plus)? - &base) / step)
            })
            .collect::<Result<_>>()?;
        let m = DMatrix::from_columns(&columns);
        let eig = SymmetricEigen::new((&m + m.transpose()) * 0.5);
        let clamped = eig.eigenvalues.map(|v| v.max(0.0));
        Ok(&eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose())
    }

    fn solve(&self, sched: &ScheduleConfig) -> Result<(Vec<DVector<f64>>, OptimizerReport)> {
        sched.validate()?;
        let clock = Instant::now();
        let mut x = DVector::zeros(self.free_count() * self.basis.dim());
        let mut report = OptimizerReport::default();
        for stage in &sched.stages {
            let cfg = VarifoldConfig::new(stage.sigma)?;
            let mut targets = vec![(self.steps, VarifoldTarget::new(self.end_target, cfg)?)];
            if let Some(q0) = self.start_target {
                targets.push((0, VarifoldTarget::new(q0, cfg)?));
            }
            let result = self.preconditioner(&x, stage.lambda, &targets).and_then(|ch| {
                let apply = |g: &DVector<f64>| ch.solve(g);
                minimize_preconditioned(
                    |x| self.objective(x, stage.lambda, &targets),
                    x.clone(),
                    &sched.options(),
                    Some(&apply),
                )
            });
            match result {
                Ok((next, mut r)) => {
                    r.lambda = Some(stage.lambda);
                    r.sigma = Some(stage.sigma);
                    report.stages.push(r);
                    x = next;
                }
                Err(e) => {
                    report.stages.push(StageReport {
                        iterations: 0,
                        evaluations: 1,
                        objective: f64::NAN,
                        gradient_norm: f64::NAN,
                        converged: false,
                        termination: Termination::LineSearchFailure,
                        objective_history: Vec::new(),
                        lambda: Some(stage.lambda),
                        sigma: Some(stage.sigma),
                        diagnostic: Some(e.to_string()),
                        aborted: true,
                    });
                    break;
                }
            }
        }
        report.wall_time_secs = clock.elapsed().as_secs_f64();
        Ok((self.codes(&x), report))
    }
}

/// Relaxed geodesic between two arbitrary meshes: path energy plus varifold
/// data terms on both endpoints, over all `T + 1` codes.
pub fn solve_bvp(
    basis: &Basis,
    q0: &TriMesh,
    q1: &TriMesh,
    params: &MetricParams,
    sched: &ScheduleConfig,
) -> Result<(LatentPath, OptimizerReport)> {
    let problem = Problem {
        basis,
        params: *params,
        steps: sched.steps,
        start_target: Some(q0),
        end_target: q1,
        free: vec![true; sched.steps + 1],
    };
    let (codes, report) = problem.solve(sched)?;
    Ok((LatentPath::from_vectors(&codes, basis.pose_count())?, report))
}

#[derive(Debug, Clone)]
pub struct Retrieval {
    pub code: LatentCode,
    pub mesh: TriMesh,
    /// The geodesic from the template, `α₀ = 0`.
    pub path: LatentPath,
    pub report: OptimizerReport,
}

/// Latent code of a scan: the endpoint of a one-sided relaxed geodesic from
/// the template.
pub fn retrieve_latent(
    basis: &Basis,
    target: &TriMesh,
    params: &MetricParams,
    sched: &ScheduleConfig,
) -> Result<Retrieval> {
    let mut free = vec![true; sched.steps + 1];
    free[0] = false;
    let problem = Problem {
        basis,
        params: *params,
        steps: sched.steps,
        start_target: None,
        end_target: target,
        free,
    };
    let (codes, report) = problem.solve(sched)?;
    let path = LatentPath::from_vectors(&codes, basis.pose_count())?;
    let end = &codes[codes.len() - 1];
    Ok(Retrieval {
        code: basis.code(end)?,
        mesh: basis.decode_vector(end)?,
        path,
        report,
    })
}

/// One discrete shooting step and its least-squares diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IvpStep {
    pub code: Vec<f64>,
    pub residual: f64,
    /// Residual at the forward-Euler guess `α₁ + (α₁ − α₀)`.
    pub initial_residual: f64,
    pub iterations: usize,
}

/// Relative residual required of every shooting step.
pub const IVP_RESIDUAL_TOL: f64 = 1e-6;
const IVP_MAX_ITER: usize = 100;

/// Solves the discrete geodesic equation for `α₂` given `α₀, α₁`:
/// `Φ(α₂) = 2Ḡ_{α₀}(β₀, ·) − 2Ḡ_{α₁}(β̃, ·) + D_αḠ_{α₁}(β̃, β̃) = 0` with
/// `β₀ = α₁ − α₀`, `β̃ = α₂ − α₁`, by Levenberg–Marquardt.
pub fn ivp_step(
    basis: &Basis,
    alpha0: &DVector<f64>,
    alpha1: &DVector<f64>,
    params: &MetricParams,
) -> Result<IvpStep> {
    let d = basis.dim();
    if alpha0.len() != d || alpha1.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: if alpha0.len() != d { alpha0.len() } else { alpha1.len() },
        });
    }
    let beta0 = alpha1 - alpha0;
    let m0 = basis.metric_at(alpha0, params)?;
    let m1 = basis.metric_at(alpha1, params)?;
    let c = m0.apply(&beta0)? * 2.0;
    let g1 = m1.gram()?;
    let units: Vec<DVector<f64>> = (0..d)
        .map(|l| DVector::from_fn(d, |i, _| if i == l { 1.0 } else { 0.0 }))
        .collect();
    let residual = |b: &DVector<f64>| -> Result<DVector<f64>> {
        Ok(&c - &g1 * b * 2.0 + m1.footpoint_grad(b, b)?)
    };
    let jacobian = |b: &DVector<f64>| -> Result<DMatrix<f64>> {
        let cols: Vec<DVector<f64>> = units
            .par_iter()
            .map(|e| m1.footpoint_grad(b, e))
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_columns(&cols) * 2.0 - &g1 * 2.0)
    };
    // Rounding floor: the residual cannot resolve below the size of its terms.
    let scale = c.norm() + (&g1 * &beta0).norm() * 2.0;
    let mut b = beta0.clone();
    let mut phi = residual(&b)?;
    let initial_residual = phi.norm();
    let target = (IVP_RESIDUAL_TOL * initial_residual).max(1e-14 * scale);
    let mut mu = 1e-3;
    let mut iterations = 0;
    while phi.norm() > 1e-3 * target && iterations < IVP_MAX_ITER {
        iterations += 1;
        let j = jacobian(&b)?;
        let jtj = j.tr_mul(&j);
        let rhs = -j.tr_mul(&phi);
        let mut improved = false;
        for _ in 0..30 {
            let mut damped = jtj.clone();
            for i in 0..d {
                damped[(i, i)] += mu * jtj[(i, i)].max(1e-300);
            }
            let Some(step) = damped.cholesky().map(|ch| ch.solve(&rhs)) else {
                mu *= 10.0;
                continue;
            };
            let trial = &b + &step;
            let trial_phi = residual(&trial)?;
            if trial_phi.norm() < phi.norm() {
                b = trial;
                phi = trial_phi;
                mu = (mu * 0.1).max(1e-12);
                improved = true;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let residual = phi.norm();
    if residual > target {
        return Err(Error::LeastSquares { residual, target });
    }
    Ok(IvpStep {
        code: (alpha1 + b).as_slice().to_vec(),
        residual,
        initial_residual,
        iterations,
    })
}

/// Geodesic shooting: `α¹ = α⁰ + β/N`, then `N − 1` discrete steps.
pub fn solve_ivp(
    basis: &Basis,
    alpha0: &DVector<f64>,
    velocity: &DVector<f64>,
    steps: usize,
    params: &MetricParams,
) -> Result<(LatentPath, Vec<IvpStep>)> {
    if steps == 0 {
        return Err(Error::InvalidArgument("step count must be at least 1".into()));
    }
    if alpha0.len() != basis.dim() || velocity.len() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            found: if alpha0.len() != basis.dim() { alpha0.len() } else { velocity.len() },
        });
    }
    let mut codes = vec![alpha0.clone(), alpha0 + velocity / steps as f64];
    let mut reports = Vec::with_capacity(steps.saturating_sub(1));
    for step in 1..steps {
        let (a0, a1) = (&codes[step - 1], &codes[step]);
        match ivp_step(basis, a0, a1, params) {
            Ok(r) => {
                codes.push(DVector::from_column_slice(&r.code));
                reports.push(r);
            }
            Err(e) => {
                return Err(Error::Shooting {
                    step,
                    partial: codes.iter().map(|c| c.as_slice().to_vec()).collect(),
                    source: Box::new(e),
                })
            }
        }
    }
    Ok((LatentPath::from_vectors(&codes, basis.pose_count())?, reports))
}

/// `√Ḡ_α(β, β)`.
pub fn pullback_norm(
    basis: &Basis,
    alpha: &DVector<f64>,
    beta: &DVector<f64>,
    params: &MetricParams,
) -> Result<f64> {
    Ok(basis.metric_at(alpha, params)?.inner(beta, beta)?.max(0.0).sqrt())
}

/// Riemannian length of the piecewise-linear path, each segment measured at its left footpoint.
pub fn path_length(basis: &Basis, codes: &[DVector<f64>], params: &MetricParams) -> Result<f64> {
    codes
        .par_windows(2)
        .map(|w| pullback_norm(basis, &w[0], &(&w[1] - &w[0]), params))
        .sum()
}
