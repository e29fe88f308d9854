use std::fs;
use std::path::{Path, PathBuf};

use besa_core::basis::{build_basis, motion_tangents, shape_tangents};
use besa_core::container::{read_basis, write_basis};
use besa_core::discrepancy::VarifoldConfig;
use besa_core::eval::{eval_reconstruction, pair_metrics};
use besa_core::generation::{fit_gmm, sample_shape, sample_velocity, transfer_motion, velocity_samples, GmmModel};
use besa_core::geodesic::{retrieve_latent, solve_bvp, solve_ivp};
use besa_core::latent::{linear_interpolate, path_energy};
use besa_core::mesh::io::{read_mesh, write_mesh};
use besa_core::optim::OptimizerReport;
use besa_core::{Basis, Error, LatentCode, LatentPath, TriMesh};
use nalgebra::DVector;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::*;
use crate::failure::Failure;

type Outcome = Result<Value, Failure>;

pub fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::BuildBasis(a) => build(a),
        Command::Retrieve(a) => retrieve(a),
        Command::Interpolate(a) => interpolate(a),
        Command::Extrapolate(a) => extrapolate(a),
        Command::Transfer(a) => transfer(a),
        Command::Generate(a) => generate(a),
        Command::Distance(a) => distance(a),
        Command::Eval(a) => eval(a),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    fs::write(path, text + "\n").map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::usage(format!("{}: {e}", dir.display())))
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn is_mesh(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("obj") || e.eq_ignore_ascii_case("ply"))
}

/// Sorted entries of `dir` that satisfy `keep`.
fn sorted_entries(dir: &Path, keep: impl Fn(&Path) -> bool) -> Result<Vec<PathBuf>, Failure> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Failure::usage(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| keep(p))
        .collect();
    out.sort();
    Ok(out)
}

/// One sequence per subdirectory, frames in lexicographic order.
fn load_sequences(dir: &Path) -> Result<Vec<Vec<TriMesh>>, Failure> {
    sorted_entries(dir, Path::is_dir)?
        .iter()
        .map(|seq| {
            sorted_entries(seq, is_mesh)?
                .iter()
                .map(|f| read_mesh(f).map_err(Failure::from))
                .collect()
        })
        .collect()
}

fn check_code(basis: &Basis, code: &LatentCode) -> Result<DVector<f64>, Failure> {
    Ok(basis.vector(code)?)
}

fn write_frames(dir: &Path, basis: &Basis, path: &LatentPath) -> Result<Vec<String>, Failure> {
    ensure_dir(dir)?;
    path.codes
        .iter()
        .enumerate()
        .map(|(t, c)| {
            let name = format!("frame_{t:04}.obj");
            write_mesh(&dir.join(&name), &basis.decode(c)?)?;
            Ok(name)
        })
        .collect()
}

fn velocity_code(basis: &Basis, path: &LatentPath) -> LatentCode {
    LatentCode::from_vector(&path.initial_velocity(), basis.pose_count())
}

/// Artifacts are kept, but an aborted stage turns the run into a numerical failure.
fn check_report(report: &OptimizerReport) -> Result<(), Failure> {
    if report.aborted() {
        let msg = report
            .stages
            .iter()
            .find_map(|s| s.diagnostic.clone())
            .unwrap_or_else(|| "optimization stage aborted".into());
        return Err(Failure::numerical(msg, Some(report.clone())));
    }
    Ok(())
}

fn build(a: BuildBasisArgs) -> Outcome {
    if !(a.velocity_scale.is_finite() && a.velocity_scale > 0.0) {
        return Err(Failure::usage("velocity scale must be positive"));
    }
    let template = read_mesh(&a.template)?;
    let motion = load_sequences(&a.motion)?;
    let shape = load_sequences(&a.shape)?;
    let scale = |s: Vec<besa_core::basis::TangentSample>| -> Vec<_> {
        s.into_iter().map(|t| t.scaled(a.velocity_scale)).collect()
    };
    let motion = scale(motion_tangents(&motion, &template)?);
    let shape = scale(shape_tangents(&shape, &template)?);
    let (basis, report) = build_basis(&motion, &shape, a.pose_count, a.shape_count, &template, a.center)?;
    write_basis(&a.out, &basis)?;
    Ok(json!({ "basis": a.out, "report": report }))
}

fn retrieve(a: RetrieveArgs) -> Outcome {
    let basis = read_basis(&a.basis)?;
    let target = read_mesh(&a.target)?;
    let sched = a.schedule.config()?;
    let r = retrieve_latent(&basis, &target, &a.metric.metric, &sched)?;
    ensure_dir(&a.out)?;
    write_json(&a.out.join("code.json"), &r.code)?;
    write_mesh(&a.out.join("reconstruction.obj"), &r.mesh)?;
    write_json(&a.out.join("path.json"), &r.path)?;
    write_json(&a.out.join("velocity.json"), &velocity_code(&basis, &r.path))?;
    check_report(&r.report)?;
    Ok(json!({ "code": r.code, "report": r.report }))
}

enum Endpoint {
    Code(LatentCode),
    Mesh(TriMesh),
}

fn endpoint(path: &Path) -> Result<Endpoint, Failure> {
    if is_json(path) {
        Ok(Endpoint::Code(read_json(path)?))
    } else {
        Ok(Endpoint::Mesh(read_mesh(path)?))
    }
}

fn interpolate(a: InterpolateArgs) -> Outcome {
    let basis = read_basis(&a.basis)?;
    let params = a.metric.metric;
    let (from, to) = (endpoint(&a.from)?, endpoint(&a.to)?);
    let (path, report) = match a.mode {
        Mode::Linear => {
            let (Endpoint::Code(f), Endpoint::Code(t)) = (from, to) else {
                return Err(Failure::usage("linear mode needs code endpoints (.json)"));
            };
            check_code(&basis, &f)?;
            check_code(&basis, &t)?;
            (linear_interpolate(&f, &t, a.schedule.steps)?, None)
        }
        Mode::Geodesic => {
            let mesh = |e: Endpoint| -> Result<TriMesh, Failure> {
                match e {
                    Endpoint::Code(c) => Ok(basis.decode(&c)?),
                    Endpoint::Mesh(m) => Ok(m),
                }
            };
            let (q0, q1) = (mesh(from)?, mesh(to)?);
            let (path, report) = solve_bvp(&basis, &q0, &q1, &params, &a.schedule.config()?)?;
            (path, Some(report))
        }
    };
    let frames = write_frames(&a.out, &basis, &path)?;
    write_json(&a.out.join("path.json"), &path)?;
    write_json(&a.out.join("velocity.json"), &velocity_code(&basis, &path))?;
    if let Some(r) = &report {
        check_report(r)?;
    }
    let free = vec![true; path.codes.len()];
    let energy = path_energy(&basis, &path, &params, &free)?.value;
    Ok(json!({ "frames": frames, "energy": energy, "report": report }))
}

fn extrapolate(a: ExtrapolateArgs) -> Outcome {
    let basis = read_basis(&a.basis)?;
    let start = check_code(&basis, &read_json(&a.code)?)?;
    let velocity = check_code(&basis, &read_json(&a.velocity)?)?;
    let (path, steps) = solve_ivp(&basis, &start, &velocity, a.steps, &a.metric.metric)?;
    let frames = write_frames(&a.out, &basis, &path)?;
    write_json(&a.out.join("path.json"), &path)?;
    Ok(json!({ "frames": frames, "steps": steps }))
}

fn transfer(a: TransferArgs) -> Outcome {
    let basis = read_basis(&a.basis)?;
    let path: LatentPath = read_json(&a.path)?;
    let path = LatentPath::new(path.codes)?;
    for c in &path.codes {
        check_code(&basis, c)?;
    }
    let target: LatentCode = read_json(&a.target)?;
    let out = transfer_motion(&path, &target.shape)?;
    let frames = write_frames(&a.out, &basis, &out)?;
    write_json(&a.out.join("path.json"), &out)?;
    Ok(json!({ "frames": frames }))
}

fn generate(a: GenerateArgs) -> Outcome {
    let basis = read_basis(&a.basis)?;
    let (pose, shape): (GmmModel, GmmModel) = match (&a.pose_gmm, &a.shape_gmm) {
        (Some(p), Some(s)) => {
            let load = |f: &Path| -> Result<GmmModel, Failure> {
                let g: GmmModel = read_json(f)?;
                Ok(GmmModel::new(g.weights, g.means, g.covariances)?)
            };
            (load(p)?, load(s)?)
        }
        _ => {
            if a.paths.is_empty() {
                return Err(Failure::usage("either --pose-gmm/--shape-gmm or --paths is required"));
            }
            let paths = a
                .paths
                .iter()
                .map(|f| {
                    let p: LatentPath = read_json(f)?;
                    let p = LatentPath::new(p.codes)?;
                    check_code(&basis, p.start())?;
                    Ok(p)
                })
                .collect::<Result<Vec<_>, Failure>>()?;
            let (pv, sv) = velocity_samples(&paths);
            let pose = fit_gmm(&pv, a.pose_components, a.fit_seed)?.model;
            let shape = fit_gmm(&sv, a.shape_components, a.fit_seed)?.model;
            if let Some(dir) = &a.gmm_out {
                ensure_dir(dir)?;
                write_json(&dir.join("pose_gmm.json"), &pose)?;
                write_json(&dir.join("shape_gmm.json"), &shape)?;
            }
            (pose, shape)
        }
    };
    let mesh = sample_shape(&basis, &pose, &shape, a.steps, &a.metric.metric, a.seed)?;
    write_mesh(&a.out, &mesh)?;
    let velocity = sample_velocity(&pose, &shape, a.seed)?;
    Ok(json!({
        "mesh": a.out,
        "velocity": LatentCode::from_vector(&velocity, basis.pose_count()),
    }))
}

fn distance(a: DistanceArgs) -> Outcome {
    let cfg = VarifoldConfig::new(a.sigma)?;
    let m = pair_metrics(&read_mesh(&a.a)?, &read_mesh(&a.b)?, &cfg)?;
    Ok(serde_json::to_value(m).map_err(Error::from)?)
}

fn eval(a: EvalArgs) -> Outcome {
    let cfg = VarifoldConfig::new(a.sigma)?;
    let files = sorted_entries(&a.outputs, is_mesh)?;
    if files.is_empty() {
        return Err(Failure::usage(format!("no meshes in {}", a.outputs.display())));
    }
    let mut outputs = Vec::with_capacity(files.len());
    let mut truth = Vec::with_capacity(files.len());
    let mut names = Vec::with_capacity(files.len());
    for f in &files {
        let name = f.file_name().expect("entries have names");
        let t = a.truth.join(name);
        if !t.is_file() {
            return Err(Failure::usage(format!("no ground truth for {}", name.to_string_lossy())));
        }
        outputs.push(read_mesh(f)?);
        truth.push(read_mesh(&t)?);
        names.push(name.to_string_lossy().into_owned());
    }
    let record = eval_reconstruction(&outputs, &truth, &cfg)?;
    let value = json!({ "names": names, "record": record });
    if let Some(out) = &a.out {
        write_json(out, &value)?;
    }
    Ok(value)
}
