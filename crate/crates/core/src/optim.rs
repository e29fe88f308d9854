//! Limited-memory BFGS with a strong Wolfe line search.

use std::collections::VecDeque;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    pub max_iter: usize,
    /// Stop when `‖∇f‖ ≤ grad_tol · max(‖∇f(x₀)‖, 1)`.
    pub grad_tol: f64,
    /// Stop when an accepted step decreases `f` by less than `f_tol · max(|f|, 1)`; 0 disables.
    pub f_tol: f64,
    pub memory: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-6,
            f_tol: 1e-15,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    ObjectiveStalled,
    IterationLimit,
    LineSearchFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub iterations: usize,
    pub evaluations: usize,
    pub objective: f64,
    pub gradient_norm: f64,
    pub converged: bool,
    pub termination: Termination,
    /// Objective at the start point and at every accepted iterate.
    pub objective_history: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Last objective error seen at a rejected trial point.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    /// The stage could not run; later stages were skipped.
    #[serde(default)]
    pub aborted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizerReport {
    pub stages: Vec<StageReport>,
    pub wall_time_secs: f64,
}

impl OptimizerReport {
    pub fn converged(&self) -> bool {
        self.stages.iter().all(|s| s.converged)
    }

    pub fn aborted(&self) -> bool {
        self.stages.iter().any(|s| s.aborted)
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.stages.last().map(|s| s.objective)
    }
}

struct Point {
    x: DVector<f64>,
    f: f64,
    g: DVector<f64>,
}

struct Evaluator<'a, F> {
    objective: &'a mut F,
    count: usize,
    diagnostic: Option<String>,
}

impl<F> Evaluator<'_, F>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    /// Trial-point failures (degenerate meshes, overflow) count as `+∞`.
    fn eval(&mut self, x: DVector<f64>) -> Option<Point> {
        self.count += 1;
        match (self.objective)(&x) {
            Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => Some(Point { x, f, g }),
            Ok(_) => {
                self.diagnostic = Some("non-finite objective at trial point".into());
                None
            }
            Err(e) => {
                self.diagnostic = Some(e.to_string());
                None
            }
        }
    }
}

/// Minimizes `objective`, which returns value and gradient. Fails only if the
/// objective is not finite at `x0`; every other stop is reported.
pub fn minimize<F>(objective: F, x0: DVector<f64>, opts: &MinimizeOptions) -> Result<(DVector<f64>, StageReport)>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    minimize_preconditioned(objective, x0, opts, None)
}

/// [`minimize`] with `precondition(g) ≈ H⁻¹g` as the initial inverse Hessian
/// of the two-loop recursion.
pub fn minimize_preconditioned<F>(
    mut objective: F,
    x0: DVector<f64>,
    opts: &MinimizeOptions,
    precondition: Option<&dyn Fn(&DVector<f64>) -> DVector<f64>>,
) -> Result<(DVector<f64>, StageReport)>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    let (f0, g0) = objective(&x0)?;
    if !f0.is_finite() || g0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("objective {f0} at the initial point")));
    }
    let mut ev = Evaluator {
        objective: &mut objective,
        count: 1,
        diagnostic: None,
    };
    let mut cur = Point { x: x0, f: f0, g: g0 };
    let tol = opts.grad_tol * cur.g.norm().max(1.0);
    let mut history: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;
    let mut objective_history = vec![cur.f];
    let termination = loop {
        if cur.g.norm() <= tol {
            break Termination::GradientTolerance;
        }
        if iterations >= opts.max_iter {
            break Termination::IterationLimit;
        }
        let mut dir = two_loop(&cur.g, &history, precondition);
        let mut slope = cur.g.dot(&dir);
        if slope >= 0.0 || !slope.is_finite() {
            history.clear();
            dir = -&cur.g;
            slope = -cur.g.norm_squared();
        }
        let first = if history.is_empty() && precondition.is_none() {
            (1.0 / dir.norm()).min(1.0)
        } else {
            1.0
        };
        let Some(next) = line_search(&mut ev, &cur, &dir, slope, first) else {
            if !history.is_empty() {
                // Retry once along steepest descent with fresh curvature.
                history.clear();
                continue;
            }
            break Termination::LineSearchFailure;
        };
        iterations += 1;
        let s = &next.x - &cur.x;
        let y = &next.g - &cur.g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if history.len() == opts.memory.max(1) {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let df = cur.f - next.f;
        cur = next;
        objective_history.push(cur.f);
        if opts.f_tol > 0.0 && df < opts.f_tol * cur.f.abs().max(1.0) {
            break Termination::ObjectiveStalled;
        }
    };
    let report = StageReport {
        iterations,
        evaluations: ev.count,
        objective: cur.f,
        gradient_norm: cur.g.norm(),
        converged: matches!(
            termination,
            Termination::GradientTolerance | Termination::ObjectiveStalled
        ),
        termination,
        objective_history,
        lambda: None,
        sigma: None,
        diagnostic: ev.diagnostic,
        aborted: false,
    };
    Ok((cur.x, report))
}

fn two_loop(
    g: &DVector<f64>,
    history: &VecDeque<(DVector<f64>, DVector<f64>, f64)>,
    precondition: Option<&dyn Fn(&DVector<f64>) -> DVector<f64>>,
) -> DVector<f64> {
    let mut q = g.clone();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * s.dot(&q);
        q.axpy(-a, y, 1.0);
        alphas.push(a);
    }
    match precondition {
        Some(p) => q = p(&q),
        None => {
            if let Some((s, y, _)) = history.back() {
                q *= s.dot(y) / y.norm_squared();
            }
        }
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * y.dot(&q);
        q.axpy(a - b, s, 1.0);
    }
    -q
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LINE_EVALS: usize = 40;
/// Relative objective change treated as rounding noise.
pub const ROUNDING_BAND: f64 = 1e-12;

/// Strong Wolfe line search with bracketing and cubic-interpolating zoom.
fn line_search<F>(
    ev: &mut Evaluator<'_, F>,
    start: &Point,
    dir: &DVector<f64>,
    slope0: f64,
    first: f64,
) -> Option<Point>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    let at = |ev: &mut Evaluator<'_, F>, t: f64| {
        ev.eval(&start.x + dir * t).map(|p| {
            let slope = p.g.dot(dir);
            (t, p, slope)
        })
    };
    let mut prev: (f64, f64, f64) = (0.0, start.f, slope0);
    let mut prev_point: Option<Point> = None;
    let mut t = first;
    let mut best: Option<Point> = None;
    for i in 0..MAX_LINE_EVALS {
        let Some((t_cur, p, slope)) = at(ev, t) else {
            // Infeasible trial: shrink towards the last feasible point.
            t = prev.0 + 0.5 * (t - prev.0);
            if (t - prev.0).abs() < 1e-20 {
                return best;
            }
            continue;
        };
        if p.f > start.f + C1 * t_cur * slope0 || (i > 0 && p.f >= prev.1) {
            let lo = (prev.0, prev.1, prev.2, prev_point);
            return zoom(ev, start, dir, slope0, lo, (t_cur, p.f, slope, Some(p)), &at).or(best);
        }
        if slope.abs() <= -C2 * slope0 || approximately_wolfe(start.f, slope0, p.f, slope) {
            return Some(p);
        }
        if p.f < start.f + C1 * t_cur * slope0 {
            best = Some(Point { x: p.x.clone(), f: p.f, g: p.g.clone() });
        }
        if slope >= 0.0 {
            let hi = (prev.0, prev.1, prev.2, prev_point);
            return zoom(ev, start, dir, slope0, (t_cur, p.f, slope, Some(p)), hi, &at).or(best);
        }
        prev = (t_cur, p.f, slope);
        prev_point = Some(p);
        t = t_cur * 2.0;
    }
    best
}

type Bracket = (f64, f64, f64, Option<Point>);

fn zoom<F, A>(
    ev: &mut Evaluator<'_, F>,
    start: &Point,
    _dir: &DVector<f64>,
    slope0: f64,
    mut lo: Bracket,
    mut hi: Bracket,
    at: &A,
) -> Option<Point>
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
    A: Fn(&mut Evaluator<'_, F>, f64) -> Option<(f64, Point, f64)>,
{
    for _ in 0..MAX_LINE_EVALS {
        let (a, b) = (lo.0.min(hi.0), lo.0.max(hi.0));
        if b - a <= 1e-16 * b.max(1e-300) {
            break;
        }
        let t = cubic_min(lo.0, lo.1, lo.2, hi.0, hi.1, hi.2)
            .filter(|t| *t > a + 0.1 * (b - a) && *t < b - 0.1 * (b - a))
            .unwrap_or(0.5 * (a + b));
        let Some((t, p, slope)) = at(ev, t) else {
            hi = (t, f64::INFINITY, f64::NAN, None);
            continue;
        };
        if approximately_wolfe(start.f, slope0, p.f, slope) {
            return Some(p);
        }
        if p.f > start.f + C1 * t * slope0 || p.f >= lo.1 {
            hi = (t, p.f, slope, Some(p));
        } else {
            if slope.abs() <= -C2 * slope0 {
                return Some(p);
            }
            if slope * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (t, p.f, slope, Some(p));
        }
    }
    // Fall back to the best sufficient-decrease point found.
    lo.3.filter(|p| p.f < start.f + C1 * lo.0 * slope0 && lo.0 > 0.0)
}

/// Wolfe conditions in derivative form, for steps whose decrease is below
/// the rounding level of `f`.
fn approximately_wolfe(f0: f64, slope0: f64, f: f64, slope: f64) -> bool {
    f <= f0 + ROUNDING_BAND * f0.abs() && slope <= (2.0 * C1 - 1.0) * slope0 && slope >= C2 * slope0
}

/// Minimizer of the cubic through two points with slopes, if it exists.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> Option<f64> {
    if !(fa.is_finite() && fb.is_finite() && da.is_finite() && db.is_finite()) {
        return None;
    }
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if disc < 0.0 {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    t.is_finite().then_some(t)
}

#[cfg(test)]
mod tests {
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn tight() -> MinimizeOptions {
        MinimizeOptions {
            max_iter: 1000,
            grad_tol: 1e-12,
            f_tol: 0.0,
            memory: 10,
        }
    }

    #[test]
    fn convex_quadratic_matches_linear_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = DMatrix::from_fn(20, 20, |_, _| rng.random_range(-1.0..1.0));
        let q = &a * a.transpose() + DMatrix::identity(20, 20);
        let b = DVector::from_fn(20, |_, _| rng.random_range(-1.0..1.0));
        let exact = q.clone().cholesky().unwrap().solve(&b);
        let (x, report) = minimize(
            |x| Ok((0.5 * x.dot(&(&q * x)) - b.dot(x), &q * x - &b)),
            DVector::zeros(20),
            &tight(),
        )
        .unwrap();
        assert!((x - exact).norm() < 1e-8, "{report:?}");
        assert!(report.converged);
    }

    #[test]
    fn exact_preconditioner_solves_quadratic_in_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = DMatrix::from_fn(30, 30, |_, _| rng.random_range(-1.0..1.0));
        let q = &a * a.transpose() * 1e4 + DMatrix::identity(30, 30);
        let b = DVector::from_fn(30, |_, _| rng.random_range(-1.0..1.0));
        let chol = q.clone().cholesky().unwrap();
        let solve = |g: &DVector<f64>| chol.solve(g);
        let (x, report) = minimize_preconditioned(
            |x| Ok((0.5 * x.dot(&(&q * x)) - b.dot(x), &q * x - &b)),
            DVector::zeros(30),
            &tight(),
            Some(&solve),
        )
        .unwrap();
        assert!(report.iterations <= 2, "{report:?}");
        assert!((&q * x - &b).norm() < 1e-8);
    }

    #[test]
    fn zero_gradient_start_returns_immediately() {
        let x0 = DVector::from_vec(vec![1.0, 2.0]);
        let (x, report) = minimize(
            |x| Ok(((x[0] - 1.0).powi(2), DVector::from_vec(vec![2.0 * (x[0] - 1.0), 0.0]))),
            x0.clone(),
            &MinimizeOptions::default(),
        )
        .unwrap();
        assert_eq!(x, x0);
        assert_eq!(report.iterations, 0);
        assert_eq!(report.termination, Termination::GradientTolerance);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &DVector<f64>| {
            let (a, b) = (x[0], x[1]);
            let v = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = DVector::from_vec(vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ]);
            Ok((v, g))
        };
        let (x, report) = minimize(f, DVector::from_vec(vec![-1.2, 1.0]), &tight()).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6, "{x} {report:?}");
        let (_, g) = f(&x).unwrap();
        assert!(g.norm() < 1e-6);
    }

    #[test]
    fn accepted_objective_is_monotone() {
        let f = |x: &DVector<f64>| {
            let v: f64 = x.iter().enumerate().map(|(i, t)| (i as f64 + 1.0) * t.powi(4) + t * t).sum();
            let g = DVector::from_fn(x.len(), |i, _| 4.0 * (i as f64 + 1.0) * x[i].powi(3) + 2.0 * x[i]);
            Ok((v, g))
        };
        let (_, report) = minimize(f, DVector::from_element(8, 1.5), &MinimizeOptions::default()).unwrap();
        assert_eq!(report.objective_history.len(), report.iterations + 1);
        for w in report.objective_history.windows(2) {
            assert!(w[1] <= w[0] + ROUNDING_BAND * w[0].abs());
        }
        assert!(report.converged);
    }

    #[test]
    fn infeasible_region_is_avoided() {
        // Undefined for x ≥ 1; the minimizer of the barrier problem is interior.
        let f = |x: &DVector<f64>| {
            if x[0] >= 1.0 {
                return Err(Error::NonFinite("outside domain".into()));
            }
            Ok((-(1.0 - x[0]).ln() - 2.0 * x[0], DVector::from_vec(vec![1.0 / (1.0 - x[0]) - 2.0])))
        };
        let (x, report) = minimize(f, DVector::from_vec(vec![-3.0]), &tight()).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-8, "{x} {report:?}");
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let r = minimize(|_| Ok((f64::NAN, DVector::zeros(1))), DVector::zeros(1), &tight());
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
