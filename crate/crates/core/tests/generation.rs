mod common;

use besa_core::generation::{fit_gmm, sample_shape, sample_velocity, GmmModel, COVARIANCE_FLOOR};
use besa_core::sobolev::MetricParams;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn zero_model(d: usize) -> GmmModel {
    GmmModel::new(vec![1.0], vec![vec![0.0; d]], vec![vec![0.0; d * d]]).unwrap()
}

#[test]
fn floor_only_mixtures_stay_near_template() {
    let basis = common::desk_basis();
    let p = MetricParams::default();
    let (pose, shape) = (zero_model(basis.pose_count()), zero_model(basis.shape_count()));
    for seed in 0..3 {
        let mesh = sample_shape(&basis, &pose, &shape, 5, &p, seed).unwrap();
        let v = sample_velocity(&pose, &shape, seed).unwrap();
        // Orthonormal columns: the field norm equals the coefficient norm.
        let bound = 1.5 * v.norm() + 1e-12;
        let dev = mesh
            .vertices()
            .iter()
            .zip(basis.template().vertices())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(dev <= bound, "{dev} > {bound}");
        assert!(v.amax() < 10.0 * COVARIANCE_FLOOR.sqrt());
    }
}

#[test]
fn fitted_generation_is_deterministic() {
    let basis = common::desk_basis();
    let p = MetricParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let vels: Vec<DVector<f64>> = (0..12).map(|_| common::scaled_code(&basis, &mut rng, 0.05)).collect();
    let n = basis.pose_count();
    let pose: Vec<DVector<f64>> = vels.iter().map(|v| v.rows(0, n).into_owned()).collect();
    let shape: Vec<DVector<f64>> = vels.iter().map(|v| v.rows(n, basis.shape_count()).into_owned()).collect();
    let gp = fit_gmm(&pose, 2, 1).unwrap().model;
    let gs = fit_gmm(&shape, 2, 1).unwrap().model;
    let a = sample_shape(&basis, &gp, &gs, 4, &p, 17).unwrap();
    let b = sample_shape(&basis, &gp, &gs, 4, &p, 17).unwrap();
    let bits = |m: &besa_core::TriMesh| {
        m.vertices().iter().flat_map(|v| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>()).collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
    assert!(sample_shape(&basis, &gs, &gp, 4, &p, 17).is_err());
}
