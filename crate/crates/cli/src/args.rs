use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "pointvis", version, about = "Point cloud visibility: mesh oracle, hidden point removal and a neural predictor")]
pub struct Cli {
    /// Seed for every random choice (sampling, viewpoints, weight init).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate procedural shapes, clouds, viewpoints and oracle labels.
    GenData(GenDataArgs),
    /// Exact labels from a mesh for a set of viewpoints.
    Label(LabelArgs),
    /// Hidden point removal for one viewpoint.
    Hpr(HprArgs),
    /// Neural visibility for one viewpoint.
    Predict(PredictArgs),
    /// Accuracy of a backend against stored labels.
    Eval(EvalArgs),
    /// Timing of backends across cloud sizes (CSV).
    Bench(BenchArgs),
    /// Triangulate the points visible from a viewpoint (OBJ).
    Reconstruct(ReconstructArgs),
    /// Oriented normals from 26 views (PLY).
    Normals(NormalsArgs),
    /// Shadow map from a light position (16-bit PGM and JSON sidecar).
    Shadow(ShadowArgs),
    /// Move a viewpoint on the bounding sphere to minimize or maximize occlusion.
    OptimizeView(OptimizeArgs),
    /// Create or inspect weight files.
    Weights {
        #[command(subcommand)]
        command: WeightsCommand,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Linear,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    F32,
    F64,
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    /// Backend name: oracle, hpr or neural.
    #[arg(long, default_value = "hpr")]
    pub backend: String,
    /// Mesh for the oracle backend.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// NVPS weight file for the neural backend.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = KernelArg::Linear)]
    pub kernel: KernelArg,
    /// HPR parameter; default 2 for the linear kernel, 0.1 for the exponential one.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, value_enum, default_value_t = PrecisionArg::F32)]
    pub precision: PrecisionArg,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// JSON dataset config; flags given explicitly override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated families: sphere, box, torus, capsule, csg.
    #[arg(long, value_delimiter = ',')]
    pub families: Option<Vec<String>>,
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long)]
    pub viewpoints: Option<usize>,
    /// Points per cloud (default 50000).
    #[arg(long)]
    pub points: Option<usize>,
    /// Use 200000 points per cloud.
    #[arg(long)]
    pub full_scale: bool,
    /// Comma-separated noise levels for extra cloud copies.
    #[arg(long, value_delimiter = ',')]
    pub noise: Option<Vec<f64>>,
    /// External meshes to include.
    #[arg(long = "mesh")]
    pub meshes: Vec<PathBuf>,
    /// Accept external meshes that are not watertight.
    #[arg(long)]
    pub allow_open: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ViewpointArgs {
    /// Explicit viewpoint `x,y,z`; repeatable.
    #[arg(long = "viewpoint", value_parser = parse_vec3, allow_hyphen_values = true)]
    pub viewpoint: Vec<[f64; 3]>,
    /// Number of random viewpoints on the bounding sphere when none is given.
    #[arg(long = "n-viewpoints")]
    pub n_viewpoints: Option<usize>,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    /// Cloud to label; sampled from the mesh when absent.
    #[arg(long)]
    pub cloud: Option<PathBuf>,
    /// Sample count when no cloud is given.
    #[arg(long, default_value_t = 50_000)]
    pub samples: usize,
    #[command(flatten)]
    pub views: ViewpointArgs,
    /// Output directory for `v###.nvlb`, `viewpoints.json` and a sampled cloud.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HprArgs {
    #[arg(long)]
    pub cloud: PathBuf,
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    pub viewpoint: [f64; 3],
    #[arg(long, value_enum, default_value_t = KernelArg::Linear)]
    pub kernel: KernelArg,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// NVLB output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub cloud: PathBuf,
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    pub viewpoint: Vec<[f64; 3]>,
    #[arg(long, value_enum, default_value_t = PrecisionArg::F32)]
    pub precision: PrecisionArg,
    /// NVLB output (first viewpoint), or a directory for several.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV of per-point visible probabilities for the first viewpoint.
    #[arg(long)]
    pub probs: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Dataset manifest to evaluate over.
    #[arg(long, conflicts_with_all = ["pred", "truth"])]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Evaluate only the first N manifest entries.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Skip noisy cloud variants.
    #[arg(long)]
    pub clean_only: bool,
    /// Also sweep the kernel's default HPR gammas.
    #[arg(long)]
    pub sweep: bool,
    /// Compare two NVLB files directly.
    #[arg(long, requires = "truth")]
    pub pred: Option<PathBuf>,
    #[arg(long, requires = "pred")]
    pub truth: Option<PathBuf>,
    /// Write the full JSON report here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated backends.
    #[arg(long, value_delimiter = ',', default_value = "hpr,neural")]
    pub backends: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "2000,8000,32000,81000,200000")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub viewpoints: usize,
    /// Mesh to sample; a torus is used when neither this nor a manifest is given.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Take the mesh of the manifest's first entry.
    #[arg(long, conflicts_with = "mesh")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// CSV output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub cloud: PathBuf,
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    pub viewpoint: [f64; 3],
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Longest kept edge as a fraction of the bounding-box diagonal.
    #[arg(long, default_value_t = pointvis::apps::DEFAULT_EDGE_THRESHOLD)]
    pub edge_threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct NormalsArgs {
    #[arg(long)]
    pub cloud: PathBuf,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long, default_value_t = pointvis::apps::DEFAULT_EDGE_THRESHOLD)]
    pub edge_threshold: f64,
    /// Viewpoint distance from the bounding-sphere center, in radii.
    #[arg(long, default_value_t = pointvis::apps::normals::DEFAULT_DISTANCE_FACTOR)]
    pub distance_factor: f64,
    /// Oriented PLY output.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ShadowArgs {
    #[arg(long)]
    pub cloud: PathBuf,
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    pub light: [f64; 3],
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long, default_value_t = pointvis::apps::shadow::DEFAULT_RESOLUTION)]
    pub resolution: usize,
    /// Depth bias as a fraction of the bounding-box diagonal.
    #[arg(long, default_value_t = pointvis::apps::shadow::DEFAULT_BIAS_FRACTION)]
    pub bias: f64,
    #[arg(long, default_value_t = pointvis::apps::DEFAULT_EDGE_THRESHOLD)]
    pub edge_threshold: f64,
    /// PGM output; the sidecar is written next to it with a .json extension.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-point lit flags (NVLB, true = lit).
    #[arg(long)]
    pub lit: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Best,
    Worst,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub cloud: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Best)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 300)]
    pub iters: usize,
    /// Step length as a fraction of the bounding-sphere radius.
    #[arg(long, default_value_t = 0.02)]
    pub step: f64,
    /// Start position (projected to the bounding sphere); random when absent.
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    pub start: Option<[f64; 3]>,
    /// Trajectory CSV output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitKind {
    Random,
    Toy,
    Zeros,
}

#[derive(Debug, Subcommand)]
pub enum WeightsCommand {
    /// Write a freshly initialized weight file.
    Init(WeightsInitArgs),
    /// Print the descriptor and tensor table of a weight file.
    Inspect(WeightsInspectArgs),
}

#[derive(Debug, Args)]
pub struct WeightsInitArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = InitKind::Random)]
    pub kind: InitKind,
    /// JSON descriptor; flags override its fields.
    #[arg(long)]
    pub descriptor: Option<PathBuf>,
    #[arg(long)]
    pub depth: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    pub widths: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub blocks: Option<Vec<usize>>,
    #[arg(long)]
    pub frequencies: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub mlp: Option<Vec<usize>>,
    /// Six input channels (positions and normals).
    #[arg(long)]
    pub normals: bool,
}

#[derive(Debug, Args)]
pub struct WeightsInspectArgs {
    pub path: PathBuf,
    /// List every tensor with its shape and value range.
    #[arg(long)]
    pub tensors: bool,
}

pub fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,z but got `{s}`"));
    }
    let mut v = [0.0f64; 3];
    for (o, p) in v.iter_mut().zip(&parts) {
        *o = p.parse().map_err(|_| format!("bad number `{p}`"))?;
        if !o.is_finite() {
            return Err(format!("non-finite coordinate `{p}`"));
        }
    }
    Ok(v)
}
