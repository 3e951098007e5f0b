use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use opticenter_core::solvers::{Method, SolverKind};
use opticenter_core::{Layout, LossSpec};
use opticenter_psf::ThresholdSpec;
use serde::{Serialize, Serializer};

/// Environment variable read for the default seed.
pub const SEED_ENV: &str = "OPTICENTER_SEED";

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "opticenter",
    version,
    about = "Estimate the optical center of a PSF bundle"
)]
pub struct Cli {
    /// Worker threads for parallel work (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Where to write the run manifest (default: next to the primary output).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a noiseless bead scene (lines pointing at the center).
    Simulate(SimulateArgs),
    /// Apply Bernoulli-Gaussian noise to a scene.
    Corrupt(CorruptArgs),
    /// Estimate the center from an observation CSV.
    Estimate(EstimateArgs),
    /// Monte Carlo comparison of estimators.
    Bench(BenchArgs),
    /// Render a synthetic bead volume.
    SynthStack(SynthStackArgs),
    /// Detect beads in a volume and write their lines.
    Extract(ExtractArgs),
    /// Tilt against lateral distance from a center.
    Analyze(AnalyzeArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// True center `x,y,z`.
    #[arg(long, value_parser = parse_triple)]
    pub center: [f64; 3],
    #[arg(long, value_delimiter = ',', default_values_t = [50.0, 250.0])]
    pub layers: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub layer_weights: Option<Vec<f64>>,
    /// Range of both lateral coordinates, `lo,hi`.
    #[arg(long, value_parser = parse_pair, default_value = "0,2048")]
    pub lateral_range: (f64, f64),
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct NoiseArgs {
    /// Outlier probability.
    #[arg(long, default_value_t = 0.25)]
    pub outlier_prob: f64,
    /// Direction noise `inlier,outlier`.
    #[arg(long, value_parser = parse_pair, default_value = "0.015,0.03")]
    pub sigma_dir: (f64, f64),
    /// Anchor noise in voxels `inlier,outlier`.
    #[arg(long, value_parser = parse_pair, default_value = "30,60")]
    pub sigma_anchor: (f64, f64),
}

#[derive(Debug, Args, Serialize)]
pub struct CorruptArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    pub noise: NoiseArgs,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Noise draw index; replicate `r` of `bench` with the same seed sees the same noise.
    #[arg(long, default_value_t = 0)]
    pub replicate: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SolverArgs {
    /// Relative tolerance on successive primal-dual iterates.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 20_000)]
    pub max_iter: usize,
    /// Use unit directions instead of the measured ones.
    #[arg(long)]
    pub renormalize: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EstimateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_parser = parse_solver, default_value = "pd")]
    #[serde(serialize_with = "display")]
    pub solver: SolverKind,
    #[arg(long, value_parser = parse_model, default_value = "2")]
    #[serde(serialize_with = "model")]
    pub model: Layout,
    /// Loss for the primal-dual solver.
    #[arg(long, value_parser = parse_loss, default_value = "block-l2")]
    #[serde(serialize_with = "display")]
    pub loss: LossSpec,
    /// Step size: `auto` or a positive number.
    #[arg(long, default_value = "auto")]
    pub gamma: String,
    /// Restrict the center to `[0,W] x [0,H] x [0,inf)`.
    #[arg(long, value_parser = parse_pair)]
    pub fov: Option<(f64, f64)>,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver_options: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Comma-separated methods such as `pd:2:l1,tls:2` (default: the six
    /// primal-dual cells and both TLS cells).
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    #[serde(serialize_with = "display_list")]
    pub methods: Option<Vec<Method>>,
    /// Fixed Huber threshold instead of the robust automatic one.
    #[arg(long)]
    pub huber_t: Option<f64>,
    /// Draw a new bead layout for every replicate.
    #[arg(long)]
    pub redraw_scene: bool,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, value_parser = parse_triple, default_value = "1000,1000,5000")]
    pub center: [f64; 3],
    #[arg(long, value_delimiter = ',', default_values_t = [50.0, 250.0])]
    pub layers: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub layer_weights: Option<Vec<f64>>,
    #[command(flatten)]
    #[serde(flatten)]
    pub noise: NoiseArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub solver_options: SolverArgs,
    /// Directory for `report.json`, `table.txt` and `estimates.csv`.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthStackArgs {
    /// Scene CSV to render; without it beads are planted at random.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long, value_parser = parse_dims, default_value = "256,256,128")]
    pub dims: [usize; 3],
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long, value_parser = parse_triple, default_value = "128,128,500")]
    pub center: [f64; 3],
    #[arg(long, value_delimiter = ',', default_values_t = [40.0, 88.0])]
    pub layers: Vec<f64>,
    /// Minimum distance between planted beads.
    #[arg(long, default_value_t = 24.0)]
    pub spacing: f64,
    /// Lateral margin kept free of planted beads.
    #[arg(long, default_value_t = 16.0)]
    pub border: f64,
    #[arg(long, default_value_t = 4.0)]
    pub sigma_parallel: f64,
    #[arg(long, default_value_t = 1.5)]
    pub sigma_perp: f64,
    #[arg(long, default_value_t = 2000.0)]
    pub peak: f64,
    #[arg(long, default_value_t = 200.0)]
    pub background: f64,
    #[arg(long, default_value_t = 20.0)]
    pub noise: f64,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Raw 16-bit output; the sidecar goes to `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Where to write the planted scene CSV.
    #[arg(long)]
    pub scene_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ExtractArgs {
    #[arg(long)]
    pub stack: PathBuf,
    #[arg(long, value_parser = parse_triple, default_value = "1,1,1")]
    pub blur: [f64; 3],
    #[arg(long, value_parser = parse_dims, default_value = "5,5,5")]
    pub tophat: [usize; 3],
    /// Intensity threshold or `otsu`.
    #[arg(long, value_parser = parse_threshold, default_value = "otsu")]
    #[serde(serialize_with = "display")]
    pub threshold: ThresholdSpec,
    #[arg(long, default_value_t = 20)]
    pub min_volume: usize,
    #[arg(long, value_parser = parse_dims, default_value = "31,31,31")]
    pub max_extent: [usize; 3],
    /// Keep beads whose first-to-second eigenvalue ratio exceeds this.
    #[arg(long, default_value_t = 2.2)]
    pub ratio_filter: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_parser = parse_triple)]
    pub center: [f64; 3],
    /// Only lines whose weight (eigenvalue ratio) exceeds this.
    #[arg(long, default_value_t = 2.2)]
    pub ratio_filter: f64,
    /// CSV `dist,angle`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    pub manifest_path: PathBuf,
}

fn display<T: std::fmt::Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn display_list<T: std::fmt::Display, S: Serializer>(
    v: &Option<Vec<T>>,
    s: S,
) -> Result<S::Ok, S::Error> {
    match v {
        Some(items) => s.collect_seq(items.iter().map(|m| m.to_string())),
        None => s.serialize_none(),
    }
}

fn model<S: Serializer>(v: &Layout, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u8(v.index())
}

fn numbers<T: std::str::FromStr>(s: &str, n: usize) -> Result<Vec<T>, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != n {
        return Err(format!("expected {n} comma-separated values, got `{s}`"));
    }
    parts
        .iter()
        .map(|p| {
            p.parse::<T>()
                .map_err(|_| format!("`{p}` is not a valid number"))
        })
        .collect()
}

pub fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let v = numbers::<f64>(s, 3)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(format!("non-finite value in `{s}`"));
    }
    Ok([v[0], v[1], v[2]])
}

pub fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let v = numbers::<f64>(s, 2)?;
    Ok((v[0], v[1]))
}

pub fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    let v = numbers::<usize>(s, 3)?;
    Ok([v[0], v[1], v[2]])
}

fn parse_solver(s: &str) -> Result<SolverKind, String> {
    s.parse().map_err(|e: opticenter_core::Error| e.to_string())
}

fn parse_model(s: &str) -> Result<Layout, String> {
    match s {
        "1" => Ok(Layout::Model1),
        "2" => Ok(Layout::Model2),
        _ => Err(format!("model must be 1 or 2, got `{s}`")),
    }
}

fn parse_loss(s: &str) -> Result<LossSpec, String> {
    s.parse().map_err(|e: opticenter_core::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: opticenter_core::Error| e.to_string())
}

fn parse_threshold(s: &str) -> Result<ThresholdSpec, String> {
    s.parse()
        .map_err(|e: opticenter_psf::PsfError| e.to_string())
}
