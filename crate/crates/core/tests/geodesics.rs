mod common;

use besa_core::discrepancy::{varifold_distance_sq, VarifoldConfig};
use besa_core::geodesic::{
    ivp_step, path_length, pullback_norm, retrieve_latent, solve_bvp, solve_ivp, ScheduleConfig,
    IVP_RESIDUAL_TOL,
};
use besa_core::latent::{linear_interpolate, path_energy};
use besa_core::sobolev::MetricParams;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn template_to_template_stays_at_zero() {
    let basis = common::desk_basis();
    let p = MetricParams::default();
    let t = basis.template().clone();
    let (path, report) = solve_bvp(&basis, &t, &t, &p, &ScheduleConfig::default()).unwrap();
    let free = vec![true; path.codes.len()];
    let energy = path_energy(&basis, &path, &p, &free).unwrap().value;
    assert!(energy < 1e-8, "energy {energy}");
    let largest = path.vectors().iter().map(|c| c.amax()).fold(0.0, f64::max);
    assert!(largest < 1e-4, "largest coefficient {largest}");
    assert_eq!(report.stages.len(), 5);
}

#[test]
fn retrieval_recovers_known_code() {
    let basis = common::desk_basis();
    let p = MetricParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let truth = common::scaled_code(&basis, &mut rng, 0.05);
    let target = basis.decode_vector(&truth).unwrap();
    let r = retrieve_latent(&basis, &target, &p, &ScheduleConfig::default()).unwrap();
    let found = r.code.to_vector();
    let zero = DVector::zeros(basis.dim());
    let err = pullback_norm(&basis, &zero, &(&found - &truth), &p).unwrap()
        / pullback_norm(&basis, &zero, &truth, &p).unwrap();
    assert!(err < 0.05, "relative code error {err}");
    let area = target.total_area().unwrap();
    let residual = varifold_distance_sq(&r.mesh, &target, &VarifoldConfig::new(0.025).unwrap()).unwrap();
    assert!(residual < 1e-4 * area * area, "residual {residual}");
    assert!(r.path.start().to_vector().iter().all(|&v| v == 0.0));
    for stage in &r.report.stages {
        for w in stage.objective_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-300);
        }
    }
}

#[test]
fn geodesic_beats_linear_and_shoots_back() {
    let basis = common::desk_basis();
    let p = MetricParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = common::scaled_code(&basis, &mut rng, 0.2);
    let b = common::scaled_code(&basis, &mut rng, 0.2);
    let q0 = basis.decode_vector(&a).unwrap();
    let q1 = basis.decode_vector(&b).unwrap();
    let (path, _) = solve_bvp(&basis, &q0, &q1, &p, &ScheduleConfig::default()).unwrap();
    let free = vec![true; path.codes.len()];
    let energy = path_energy(&basis, &path, &p, &free).unwrap().value;
    let lin = linear_interpolate(path.start(), path.end(), path.steps()).unwrap();
    let baseline = path_energy(&basis, &lin, &p, &free).unwrap().value;
    assert!(energy <= baseline, "{energy} > {baseline}");

    let codes = path.vectors();
    let length = path_length(&basis, &codes, &p).unwrap();
    let (shot, steps) =
        solve_ivp(&basis, &codes[0], &path.initial_velocity(), path.steps(), &p).unwrap();
    for s in &steps {
        assert!(s.residual <= IVP_RESIDUAL_TOL * s.initial_residual, "{s:?}");
    }
    let end = shot.end().to_vector();
    let last = &codes[path.steps()];
    let miss = pullback_norm(&basis, last, &(&end - last), &p).unwrap();
    assert!(miss < 0.1 * length, "miss {miss} vs length {length}");

    // One step from the geodesic's first two codes lands near its third.
    let step = ivp_step(&basis, &codes[0], &codes[1], &p).unwrap();
    let next = DVector::from_column_slice(&step.code);
    let err = pullback_norm(&basis, &codes[2], &(&next - &codes[2]), &p).unwrap();
    let size = pullback_norm(&basis, &codes[1], &(&codes[2] - &codes[1]), &p).unwrap();
    assert!(err < 0.1 * size, "{err} vs step {size}");
}

#[test]
fn zero_velocity_is_stationary() {
    let basis = common::desk_basis();
    let p = MetricParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = common::scaled_code(&basis, &mut rng, 0.1);
    let (path, _) = solve_ivp(&basis, &a, &DVector::zeros(basis.dim()), 4, &p).unwrap();
    for c in path.vectors() {
        assert!((&c - &a).amax() < 1e-8);
    }
    let step = ivp_step(&basis, &a, &a, &p).unwrap();
    assert!((DVector::from_column_slice(&step.code) - &a).amax() < 1e-8);
}

#[test]
fn shooting_converges_under_refinement() {
    let basis = common::desk_basis();
    let p = MetricParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = common::scaled_code(&basis, &mut rng, 0.1);
    let v = common::scaled_code(&basis, &mut rng, 0.15);
    let (coarse, _) = solve_ivp(&basis, &a, &v, 10, &p).unwrap();
    let (fine, _) = solve_ivp(&basis, &a, &v, 20, &p).unwrap();
    let (ce, fe) = (coarse.end().to_vector(), fine.end().to_vector());
    let moved = pullback_norm(&basis, &fe, &(&ce - &fe), &p).unwrap();
    let size = pullback_norm(&basis, &a, &v, &p).unwrap();
    assert!(moved < 0.05 * size, "{moved} vs {size}");
}

#[test]
fn shooting_rejects_bad_input() {
    let basis = common::desk_basis();
    let p = MetricParams::default();
    let a = DVector::zeros(basis.dim());
    assert!(solve_ivp(&basis, &a, &a, 0, &p).is_err());
    assert!(solve_ivp(&basis, &DVector::zeros(3), &a, 2, &p).is_err());
}
