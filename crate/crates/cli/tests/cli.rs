use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use besa_core::container::read_basis;
use besa_core::mesh::io::{read_mesh, write_mesh};
use besa_core::synthetic::{body_dataset, icosphere, BodyConfig};
use besa_core::{Basis, LatentCode, LatentPath};
use nalgebra::DVector;
use serde_json::Value;

fn besa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_besa")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap()
}

/// A desk-scale basis built through the CLI, shared by every test.
fn fixture() -> (&'static Path, &'static Path) {
    static DIR: OnceLock<(tempfile::TempDir, PathBuf, PathBuf)> = OnceLock::new();
    let (_, root, basis) = DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        body_dataset(&BodyConfig::default()).write_to(&root.join("data")).unwrap();
        let basis = root.join("b.besa");
        let data = root.join("data");
        stdout_json(&besa(&[
            "build-basis",
            "--template", s(&data.join("template.obj")),
            "--motion", s(&data.join("motion")),
            "--shape", s(&data.join("shape")),
            "--pose-count", "8",
            "--shape-count", "4",
            "--out", s(&basis),
        ]));
        (dir, root, basis)
    });
    (root, basis)
}

fn load(basis: &Path) -> Basis {
    read_basis(basis).unwrap()
}

fn write_code(path: &Path, code: &LatentCode) {
    std::fs::write(path, serde_json::to_string(code).unwrap()).unwrap();
}

#[test]
fn distance_of_a_mesh_to_itself() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.obj");
    write_mesh(&a, &icosphere(2, 1.0)).unwrap();
    let v = stdout_json(&besa(&["distance", s(&a), s(&a), "--sigma", "0.4"]));
    assert_eq!(v["hausdorff"], 0.0);
    assert_eq!(v["chamfer"], 0.0);
    assert!(v["varifold_sq"].as_f64().unwrap().abs() < 1e-12);
    assert_eq!(v["mse"], 0.0);
}

#[test]
fn usage_errors_exit_one_with_json() {
    let out = besa(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["kind"], "usage");
    let out = besa(&["distance", "/nonexistent/a.obj", "/nonexistent/b.obj"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_json(&out)["message"].as_str().unwrap().contains("nonexistent"));
    let out = besa(&["retrieve", "--basis", "x.besa", "--target", "t.obj", "--metric", "1,2,3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(besa(&["--help"]).status.success());
}

#[test]
fn build_basis_writes_a_loadable_container() {
    let (_, basis) = fixture();
    let b = load(basis);
    assert_eq!((b.pose_count(), b.shape_count(), b.vertex_count()), (8, 4, 402));
}

#[test]
fn linear_interpolation_midpoint() {
    let (root, basis) = fixture();
    let b = load(basis);
    let dir = root.join("linear");
    std::fs::create_dir_all(&dir).unwrap();
    let zero = b.zero_code();
    let mut e1 = b.zero_code();
    e1.pose[0] = 0.3;
    write_code(&dir.join("zero.json"), &zero);
    write_code(&dir.join("e1.json"), &e1);
    let v = stdout_json(&besa(&[
        "interpolate", "--basis", s(basis), "--mode", "linear", "--steps", "2",
        "--from", s(&dir.join("zero.json")), "--to", s(&dir.join("e1.json")), "--out", s(&dir),
    ]));
    assert_eq!(v["frames"].as_array().unwrap().len(), 3);
    let mid = read_mesh(&dir.join("frame_0001.obj")).unwrap();
    let mut half = b.zero_code();
    half.pose[0] = 0.15;
    let expect = b.decode(&half).unwrap();
    for (p, q) in mid.vertices().iter().zip(expect.vertices()) {
        assert!((p - q).norm() < 1e-12);
    }
    let path: LatentPath = serde_json::from_str(&std::fs::read_to_string(dir.join("path.json")).unwrap()).unwrap();
    assert_eq!(path.steps(), 2);
}

#[test]
fn linear_mode_rejects_mesh_endpoints() {
    let (root, basis) = fixture();
    let t = root.join("data").join("template.obj");
    let out = besa(&[
        "interpolate", "--basis", s(basis), "--mode", "linear", "--from", s(&t), "--to", s(&t),
        "--out", s(&root.join("rejected")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn retrieve_recovers_a_decoded_code() {
    let (root, basis) = fixture();
    let b = load(basis);
    let dir = root.join("retrieve");
    std::fs::create_dir_all(&dir).unwrap();
    let truth = LatentCode::new(vec![0.02, -0.015, 0.01, 0.0, 0.0, 0.0, 0.0, 0.0], vec![0.01, 0.0, -0.01, 0.0]).unwrap();
    let target = dir.join("synthetic.obj");
    write_mesh(&target, &b.decode(&truth).unwrap()).unwrap();
    let v = stdout_json(&besa(&["retrieve", "--target", s(&target), "--basis", s(basis), "--out", s(&dir)]));
    let found: LatentCode = serde_json::from_value(v["code"].clone()).unwrap();
    let p = besa_core::MetricParams::default();
    let zero = DVector::zeros(b.dim());
    let t = truth.to_vector();
    let err = besa_core::geodesic::pullback_norm(&b, &zero, &(found.to_vector() - &t), &p).unwrap()
        / besa_core::geodesic::pullback_norm(&b, &zero, &t, &p).unwrap();
    assert!(err < 0.05, "relative error {err}");
    for f in ["code.json", "reconstruction.obj", "path.json", "velocity.json"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    read_mesh(&dir.join("reconstruction.obj")).unwrap();
}

#[test]
fn extrapolate_transfer_and_generate() {
    let (root, basis) = fixture();
    let b = load(basis);
    let dir = root.join("chain");
    std::fs::create_dir_all(&dir).unwrap();
    let start = LatentCode::new(vec![0.01; 8], vec![0.0; 4]).unwrap();
    let vel = LatentCode::new(vec![0.05, -0.03, 0.0, 0.02, 0.0, 0.0, 0.0, 0.0], vec![0.02, 0.0, 0.0, 0.01]).unwrap();
    write_code(&dir.join("start.json"), &start);
    write_code(&dir.join("vel.json"), &vel);
    let shot = dir.join("shot");
    let v = stdout_json(&besa(&[
        "extrapolate", "--basis", s(basis), "--code", s(&dir.join("start.json")),
        "--velocity", s(&dir.join("vel.json")), "--steps", "4", "--out", s(&shot),
    ]));
    assert_eq!(v["frames"].as_array().unwrap().len(), 5);
    for step in v["steps"].as_array().unwrap() {
        assert!(step["residual"].as_f64().unwrap() <= 1e-6 * step["initial_residual"].as_f64().unwrap());
    }

    let target = LatentCode::new(vec![0.0; 8], vec![0.03, -0.02, 0.01, 0.0]).unwrap();
    write_code(&dir.join("target.json"), &target);
    let moved = dir.join("moved");
    stdout_json(&besa(&[
        "transfer", "--basis", s(basis), "--path", s(&shot.join("path.json")),
        "--target", s(&dir.join("target.json")), "--out", s(&moved),
    ]));
    let read = |p: &Path| -> LatentPath { serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap() };
    let (before, after) = (read(&shot.join("path.json")), read(&moved.join("path.json")));
    for (x, y) in before.codes.iter().zip(&after.codes) {
        assert_eq!(x.pose, y.pose);
        assert_eq!(y.shape, target.shape);
    }
    assert!(moved.join("frame_0004.obj").is_file());

    let other = besa_core::latent::linear_interpolate(
        &b.zero_code(),
        &LatentCode::new(vec![-0.02, 0.01, 0.03, 0.0, 0.01, 0.0, 0.0, 0.0], vec![0.0, 0.02, 0.0, 0.0]).unwrap(),
        4,
    )
    .unwrap();
    std::fs::write(dir.join("other.json"), serde_json::to_string(&other).unwrap()).unwrap();
    let gen = |seed: &str, out: &Path| {
        stdout_json(&besa(&[
            "generate", "--basis", s(basis), "--paths", s(&shot.join("path.json")), s(&dir.join("other.json")),
            "--pose-components", "1", "--shape-components", "1", "--seed", seed, "--steps", "4",
            "--gmm-out", s(&dir.join("gmm")), "--out", s(out),
        ]))
    };
    gen("3", &dir.join("g1.obj"));
    gen("3", &dir.join("g2.obj"));
    let same = |a: &str, b: &str| std::fs::read(dir.join(a)).unwrap() == std::fs::read(dir.join(b)).unwrap();
    assert!(same("g1.obj", "g2.obj"));
    let g = read_mesh(&dir.join("g1.obj")).unwrap();
    assert!(g.same_connectivity(b.template()));
    stdout_json(&besa(&[
        "generate", "--basis", s(basis), "--pose-gmm", s(&dir.join("gmm/pose_gmm.json")),
        "--shape-gmm", s(&dir.join("gmm/shape_gmm.json")), "--seed", "3", "--steps", "4", "--out", s(&dir.join("g3.obj")),
    ]));
    assert!(same("g1.obj", "g3.obj"));
}

#[test]
fn eval_pairs_by_file_name() {
    let dir = tempfile::tempdir().unwrap();
    let (out, truth) = (dir.path().join("out"), dir.path().join("truth"));
    std::fs::create_dir_all(&out).unwrap();
    std::fs::create_dir_all(&truth).unwrap();
    let m = icosphere(1, 1.0);
    write_mesh(&truth.join("a.obj"), &m).unwrap();
    write_mesh(&truth.join("b.obj"), &m).unwrap();
    write_mesh(&out.join("a.obj"), &m).unwrap();
    write_mesh(&out.join("b.obj"), &m.subdivide()).unwrap();
    let record = dir.path().join("record.json");
    let v = stdout_json(&besa(&["eval", "--outputs", s(&out), "--truth", s(&truth), "--out", s(&record)]));
    let cases = v["record"]["cases"].as_array().unwrap();
    assert_eq!(cases[0]["mse"], 0.0);
    assert!(cases[1].get("mse").is_none());
    assert!(record.is_file());
    std::fs::remove_file(truth.join("b.obj")).unwrap();
    assert_eq!(besa(&["eval", "--outputs", s(&out), "--truth", s(&truth)]).status.code(), Some(1));
}
