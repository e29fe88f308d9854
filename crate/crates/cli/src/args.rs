use std::path::PathBuf;

use besa_core::geodesic::ScheduleConfig;
use besa_core::MetricParams;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "besa", version, about = "Basis-restricted elastic shape analysis of triangle meshes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a pose/shape deformation basis by PCA over sequence tangents.
    BuildBasis(BuildBasisArgs),
    /// Find the latent code of a scan.
    Retrieve(RetrieveArgs),
    /// Geodesic or linear path between two codes or meshes.
    Interpolate(InterpolateArgs),
    /// Shoot a geodesic from a code and an initial velocity.
    Extrapolate(ExtrapolateArgs),
    /// Replace the shape block of every code in a path.
    Transfer(TransferArgs),
    /// Sample a random shape from Gaussian mixtures over initial velocities.
    Generate(GenerateArgs),
    /// Compare two meshes with every applicable metric.
    Distance(DistanceArgs),
    /// Evaluate reconstructions against ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct MetricArgs {
    /// Metric coefficients a0,a1,b1,c1,d1,a2.
    #[arg(long, default_value = "1,1000,100,1,1,1")]
    pub metric: MetricParams,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// Varifold kernel widths, first:last.
    #[arg(long, default_value = "0.4:0.025", value_parser = parse_range)]
    pub sigma_schedule: (f64, f64),
    /// Data term weights, first:last.
    #[arg(long, default_value = "1e2:1e8", value_parser = parse_range)]
    pub lambda_schedule: (f64, f64),
    #[arg(long, default_value_t = 5)]
    pub stages: usize,
    /// Path time steps.
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    /// L-BFGS iterations per stage.
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    /// Gradient tolerance relative to the initial gradient.
    #[arg(long, default_value_t = 1e-6)]
    pub grad_tol: f64,
}

impl ScheduleArgs {
    pub fn config(&self) -> besa_core::Result<ScheduleConfig> {
        let mut s = ScheduleConfig::geometric(self.sigma_schedule, self.lambda_schedule, self.stages, self.steps)?;
        s.max_iter = self.max_iter;
        s.grad_tol = self.grad_tol;
        Ok(s)
    }
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected first:last, got {s:?}"))?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("bad number {t:?}"));
    Ok((num(a)?, num(b)?))
}

#[derive(Debug, Args)]
pub struct BuildBasisArgs {
    /// Template mesh sharing the sequences' connectivity.
    #[arg(long)]
    pub template: PathBuf,
    /// Directory with one subdirectory of frames per motion sequence.
    #[arg(long)]
    pub motion: PathBuf,
    /// Directory with one subdirectory of frames per shape path.
    #[arg(long)]
    pub shape: PathBuf,
    /// Pose basis size.
    #[arg(long, default_value_t = 130)]
    pub pose_count: usize,
    /// Shape basis size.
    #[arg(long, default_value_t = 40)]
    pub shape_count: usize,
    /// Center samples before PCA.
    #[arg(long)]
    pub center: bool,
    /// Factor applied to every finite-difference velocity.
    #[arg(long, default_value_t = 1.0)]
    pub velocity_scale: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub basis: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    /// Output directory for code.json, reconstruction.obj and path.json.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[command(flatten)]
    pub metric: MetricArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Geodesic,
    Linear,
}

#[derive(Debug, Args)]
pub struct InterpolateArgs {
    #[arg(long)]
    pub basis: PathBuf,
    /// Start: a code (.json) or a mesh (.obj/.ply, geodesic mode only).
    #[arg(long)]
    pub from: PathBuf,
    /// End: a code (.json) or a mesh (.obj/.ply, geodesic mode only).
    #[arg(long)]
    pub to: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Geodesic)]
    pub mode: Mode,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[command(flatten)]
    pub metric: MetricArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
}

#[derive(Debug, Args)]
pub struct ExtrapolateArgs {
    #[arg(long)]
    pub basis: PathBuf,
    /// Starting code.
    #[arg(long)]
    pub code: PathBuf,
    /// Time-1 initial velocity, in code format.
    #[arg(long)]
    pub velocity: PathBuf,
    /// Shooting steps.
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[command(flatten)]
    pub metric: MetricArgs,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[arg(long)]
    pub basis: PathBuf,
    /// Path whose motion is kept.
    #[arg(long)]
    pub path: PathBuf,
    /// Code whose shape block is applied.
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub basis: PathBuf,
    /// Fitted pose mixture; fitted from --paths when absent.
    #[arg(long, requires = "shape_gmm")]
    pub pose_gmm: Option<PathBuf>,
    #[arg(long, requires = "pose_gmm")]
    pub shape_gmm: Option<PathBuf>,
    /// Latent paths whose initial velocities train the mixtures.
    #[arg(long, num_args = 1.., conflicts_with = "pose_gmm")]
    pub paths: Vec<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub pose_components: usize,
    #[arg(long, default_value_t = 6)]
    pub shape_components: usize,
    #[arg(long, default_value_t = 0)]
    pub fit_seed: u64,
    /// Directory to save fitted mixtures to.
    #[arg(long)]
    pub gmm_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Shooting steps.
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    /// Output mesh.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub metric: MetricArgs,
}

#[derive(Debug, Args)]
pub struct DistanceArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    #[arg(long, default_value_t = 0.4)]
    pub sigma: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of reconstructed meshes.
    #[arg(long)]
    pub outputs: PathBuf,
    /// Directory of ground-truth meshes, matched by file name.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value_t = 0.4)]
    pub sigma: f64,
    /// Write the record here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
