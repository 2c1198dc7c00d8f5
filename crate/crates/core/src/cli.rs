//! Command-line front end behind the `vf` binary.
//!
//! Exit codes: 0 success, 1 invalid input, 2 runtime failure.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::editor::SessionConfig;
use crate::error::{Error, Result};
use crate::evalsim::{evaluate_dataset, simulate_session, write_curves_csv, Case, EvalConfig, EvalMode, PointMode, SimulationConfig};
use crate::inference::{sliding_window, BlendKernel, ClassPrompt, PointContext, Prompt, SlidingWindowConfig};
use crate::labelspace::{remap_labels, remap_with, LabelSpace};
use crate::nifti::{read_labels, read_nifti, read_volume, write_labels, write_mask, write_nifti, write_volume, DataType, NiftiData, NiftiImage};
use crate::registry::PredictorSpec;
use crate::service::{serve, ServiceConfig};
use crate::supervoxel::{builtin_extractor, supervoxels, ExtractorKind, SlicParams};
use crate::volume::{Dims, Geometry, LabelVolume};

#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[command(name = "vf", version, about = "Interactive 3D segmentation engine")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Print the parsed configuration as JSON and exit.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub dump_config: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Partition a volume into supervoxels.
    Supervoxel(SupervoxelArgs),
    /// Automatic segmentation of one class by sliding-window inference.
    Segment(SegmentArgs),
    /// Simulated click session; writes a dice-vs-clicks curve.
    Simulate(SimulateArgs),
    /// Dice evaluation over a case manifest.
    Evaluate(EvaluateArgs),
    /// Rewrite dataset-local labels into global class indices.
    Remap(RemapArgs),
    /// Run the HTTP session service.
    Serve(ServeArgs),
    /// NIfTI to raw + JSON sidecar, or back.
    Convert(ConvertArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SupervoxelArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub n_segments: usize,
    #[arg(long, default_value_t = 3.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.1)]
    pub compactness: f64,
    #[arg(long, default_value_t = 10)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0.25)]
    pub min_size_factor: f64,
    #[arg(long, default_value = "gauss_pyramid")]
    pub extractor: String,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct WindowArgs {
    #[arg(long, default_value_t = 128)]
    pub patch: usize,
    #[arg(long, default_value_t = 0.25)]
    pub overlap: f64,
    /// gaussian or constant
    #[arg(long, default_value = "gaussian")]
    pub blend: String,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f32,
    /// Accumulator memory budget in MiB; smaller budgets spill to disk.
    #[arg(long)]
    pub memory_budget_mb: Option<u64>,
}

impl WindowArgs {
    fn config(&self, threads: Option<usize>) -> Result<SlidingWindowConfig> {
        let blend = match self.blend.as_str() {
            "gaussian" => BlendKernel::default(),
            "constant" => BlendKernel::Constant,
            b => return Err(Error::arg(format!("blend must be gaussian or constant, got {b:?}"))),
        };
        let cfg = SlidingWindowConfig {
            patch: Dims::cube(self.patch),
            overlap: self.overlap,
            blend,
            memory_budget: self.memory_budget_mb.map(|m| m << 20),
            threads,
            shuffle_seed: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SegmentArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub class: u32,
    #[arg(long, default_value = "oracle")]
    pub predictor: String,
    /// Labels for the oracle predictor.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[command(flatten)]
    pub window: WindowArgs,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Also write the blended probability volume.
    #[arg(long)]
    pub prob: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Target class; omit for a zero-shot session on all foreground.
    #[arg(long)]
    pub class: Option<u32>,
    #[arg(long, default_value_t = 10)]
    pub max_clicks: usize,
    #[arg(long, default_value = "oracle")]
    pub predictor: String,
    #[arg(long, default_value_t = 128)]
    pub patch: usize,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    /// JSON list of {"image", "label", "dataset"} entries.
    #[arg(long)]
    pub cases: PathBuf,
    #[arg(long, default_value = "auto")]
    pub mode: String,
    /// per_patch or per_component
    #[arg(long, default_value = "per_patch")]
    pub point_mode: String,
    #[arg(long, default_value = "oracle")]
    pub predictor: String,
    /// Comma-separated global class indices; default: every class present.
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<u32>,
    /// Label space used to map dataset-local labels.
    #[arg(long)]
    pub labelspace: Option<PathBuf>,
    #[command(flatten)]
    pub window: WindowArgs,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct RemapArgs {
    pub input: PathBuf,
    /// Defaults to the bundled label space.
    #[arg(long)]
    pub labelspace: Option<PathBuf>,
    #[arg(long)]
    pub dataset: String,
    /// Map global indices back to the dataset's local ones.
    #[arg(long)]
    pub inverse: bool,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ServeArgs {
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// TOML service configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ConvertArgs {
    /// `.nii`/`.nii.gz`, or a `.json` sidecar next to its raw payload.
    pub input: PathBuf,
    /// Output path; for raw output, the sidecar is written next to it as `<output>.json`.
    #[arg(short, long)]
    pub output: PathBuf,
}

/// Sidecar describing a raw little-endian payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
    pub datatype: String,
    #[serde(default = "one")]
    pub scl_slope: f32,
    #[serde(default)]
    pub scl_inter: f32,
    /// Payload file, relative to the sidecar.
    pub data: String,
}

fn one() -> f32 {
    1.0
}

#[derive(Debug, Deserialize)]
struct ManifestEntry {
    image: PathBuf,
    label: PathBuf,
    #[serde(default)]
    dataset: Option<String>,
    #[serde(default)]
    id: Option<String>,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Argument(_)
        | Error::Format(_)
        | Error::Unsupported(_)
        | Error::Dimensionality(_)
        | Error::Mapping(_)
        | Error::Json(_) => 1,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 1,
        _ => 2,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if cli.dump_config {
        println!("{}", serde_json::to_string_pretty(cli)?);
        return Ok(());
    }
    if cli.threads == Some(0) {
        return Err(Error::arg("--threads must be >= 1"));
    }
    let work = || match &cli.command {
        Command::Supervoxel(a) => cmd_supervoxel(a),
        Command::Segment(a) => cmd_segment(a, cli.threads),
        Command::Simulate(a) => cmd_simulate(a, cli.seed),
        Command::Evaluate(a) => cmd_evaluate(a, cli.seed, cli.threads),
        Command::Remap(a) => cmd_remap(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Convert(a) => cmd_convert(a),
    };
    match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::State(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

fn cmd_supervoxel(a: &SupervoxelArgs) -> Result<()> {
    let vol = read_volume(&a.input)?;
    let kind: ExtractorKind = a.extractor.parse()?;
    let params = SlicParams {
        n_segments: a.n_segments,
        compactness: a.compactness,
        sigma: a.sigma,
        max_iter: a.max_iter,
        min_size_factor: a.min_size_factor,
    };
    let map = supervoxels(&vol, builtin_extractor(kind).as_ref(), &params)?;
    tracing::info!("{} supervoxels", map.n_segments_actual);
    write_labels(&map.to_label_volume(vol.geometry())?, &a.output)
}

fn check_class(c: u32) -> Result<u32> {
    if c == 0 {
        return Err(Error::arg("class 0 is background"));
    }
    ClassPrompt::new(c).map(|p| p.index())
}

fn load_gt(spec: &PredictorSpec, gt: Option<&Path>) -> Result<Option<Arc<LabelVolume>>> {
    match gt {
        Some(p) => Ok(Some(Arc::new(read_labels(p)?))),
        None if spec.needs_ground_truth() => Err(Error::arg("the oracle predictor needs --gt")),
        None => Ok(None),
    }
}

fn cmd_segment(a: &SegmentArgs, threads: Option<usize>) -> Result<()> {
    let class = check_class(a.class)?;
    let spec: PredictorSpec = a.predictor.parse()?;
    let cfg = a.window.config(threads)?;
    let vol = read_volume(&a.input)?;
    let gt = load_gt(&spec, a.gt.as_deref())?;
    if let Some(g) = &gt {
        if g.dims() != vol.dims() {
            return Err(Error::arg("--gt dims differ from the input volume"));
        }
    }
    let pred = spec.build(gt, None)?;
    let prob = sliding_window(&vol, pred.as_ref(), &Prompt::Class(ClassPrompt::new(class)?), &cfg)?;
    if let Some(p) = &a.prob {
        write_volume(&prob, p)?;
    }
    write_mask(&prob.threshold(a.window.threshold), vol.geometry(), &a.output)
}

fn cmd_simulate(a: &SimulateArgs, seed: u64) -> Result<()> {
    let spec: PredictorSpec = a.predictor.parse()?;
    let vol = Arc::new(read_volume(&a.input)?);
    let labels = read_labels(&a.gt)?;
    if labels.dims() != vol.dims() {
        return Err(Error::arg("--gt dims differ from the input volume"));
    }
    let (gt_mask, context) = match a.class {
        Some(c) => (labels.class_mask(check_class(c)?), PointContext::for_class(Some(c), &LabelSpace::bundled())),
        None => (labels.foreground(), PointContext::ZeroShot),
    };
    let pred = spec.build(Some(Arc::new(labels)), None)?;
    let cfg = SimulationConfig {
        session: SessionConfig {
            patch: Dims::cube(a.patch),
            ..Default::default()
        },
        context,
        baseline: None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let curve = simulate_session(vol, &gt_mask, pred.as_ref(), a.max_clicks, &mut rng, &cfg)?;
    let id = a.input.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let f = std::fs::File::create(&a.output).map_err(|e| Error::io(&a.output, e))?;
    write_curves_csv(f, &[(id, a.class, curve)])
}

fn cmd_evaluate(a: &EvaluateArgs, seed: u64, threads: Option<usize>) -> Result<()> {
    let mode: EvalMode = a.mode.parse()?;
    let point_mode = match a.point_mode.as_str() {
        "per_patch" => PointMode::PerPatch,
        "per_component" => PointMode::PerComponent,
        m => return Err(Error::arg(format!("point mode must be per_patch or per_component, got {m:?}"))),
    };
    let spec: PredictorSpec = a.predictor.parse()?;
    let text = std::fs::read_to_string(&a.cases).map_err(|e| Error::io(&a.cases, e))?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text)?;
    let base = a.cases.parent().unwrap_or(Path::new("."));
    let space = match &a.labelspace {
        Some(p) => Some(LabelSpace::load(p)?),
        None => None,
    };
    let mut cases = Vec::new();
    for (k, e) in entries.iter().enumerate() {
        let image = Arc::new(read_volume(base.join(&e.image))?);
        let mut label = read_labels(base.join(&e.label))?;
        if let (Some(space), Some(ds)) = (&space, &e.dataset) {
            label = remap_labels(&label, space, ds)?;
        }
        if label.dims() != image.dims() {
            return Err(Error::arg(format!("case {k}: label dims differ from image")));
        }
        cases.push(Case {
            id: e.id.clone().unwrap_or_else(|| format!("{k:04}")),
            image,
            label,
        });
    }
    let classes: Vec<u32> = if a.classes.is_empty() {
        let all: BTreeSet<u32> = cases.iter().flat_map(|c| c.label.classes()).collect();
        all.into_iter().collect()
    } else {
        a.classes.iter().map(|&c| check_class(c)).collect::<Result<_>>()?
    };
    let cfg = EvalConfig {
        window: a.window.config(threads)?,
        threshold: a.window.threshold,
        point_mode,
        seed,
        ..Default::default()
    };
    let factory = |c: &Case| spec.build(Some(Arc::new(c.label.clone())), None);
    let report = evaluate_dataset(&cases, &factory, &classes, mode, &cfg)?;
    let json = serde_json::to_string_pretty(&report)?;
    std::fs::write(&a.output, json).map_err(|e| Error::io(&a.output, e))
}

fn cmd_remap(a: &RemapArgs) -> Result<()> {
    let space = match &a.labelspace {
        Some(p) => LabelSpace::load(p)?,
        None => LabelSpace::bundled(),
    };
    let labels = read_labels(&a.input)?;
    let out = if a.inverse {
        remap_with(&labels, &space.dataset(&a.dataset)?.inverse().map)?
    } else {
        remap_labels(&labels, &space, &a.dataset)?
    };
    write_labels(&out, &a.output)
}

fn cmd_serve(a: &ServeArgs) -> Result<()> {
    let mut cfg = ServiceConfig::load(a.config.as_deref())?;
    if let Some(p) = a.port {
        cfg.port = p;
    }
    if let Some(d) = &a.data_dir {
        cfg.data_dir = d.clone();
    }
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::State(format!("runtime: {e}")))?
        .block_on(serve(cfg))
}

fn payload_bytes(data: &NiftiData) -> Vec<u8> {
    match data {
        NiftiData::U8(v) => v.clone(),
        NiftiData::I16(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        NiftiData::I32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        NiftiData::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
    }
}

fn payload_from_bytes(dt: DataType, b: &[u8], n: usize) -> Result<NiftiData> {
    if b.len() != n * dt.bytes() {
        return Err(Error::Format(format!(
            "raw payload has {} bytes, expected {}",
            b.len(),
            n * dt.bytes()
        )));
    }
    Ok(match dt {
        DataType::U8 => NiftiData::U8(b.to_vec()),
        DataType::I16 => NiftiData::I16(b.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect()),
        DataType::I32 => NiftiData::I32(b.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().unwrap())).collect()),
        DataType::F32 => NiftiData::F32(b.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
    })
}

fn cmd_convert(a: &ConvertArgs) -> Result<()> {
    let is_json = a.input.extension().is_some_and(|e| e == "json");
    if is_json {
        let text = std::fs::read_to_string(&a.input).map_err(|e| Error::io(&a.input, e))?;
        let side: RawSidecar = serde_json::from_str(&text)?;
        let dt = DataType::from_name(&side.datatype)?;
        let raw_path = a.input.parent().unwrap_or(Path::new(".")).join(&side.data);
        let bytes = std::fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
        let geometry = Geometry::new(Dims(side.dims), side.spacing, side.origin)?;
        let data = payload_from_bytes(dt, &bytes, geometry.dims.len())?;
        let img = NiftiImage {
            geometry,
            scl_slope: side.scl_slope,
            scl_inter: side.scl_inter,
            data,
        };
        write_nifti(&img, &a.output)
    } else {
        let img = read_nifti(&a.input)?;
        let g = &img.geometry;
        let name = a
            .output
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| Error::arg("output needs a file name"))?;
        let side = RawSidecar {
            dims: g.dims.0,
            spacing: g.spacing,
            origin: g.origin,
            datatype: img.datatype().name().to_string(),
            scl_slope: img.scl_slope,
            scl_inter: img.scl_inter,
            data: name,
        };
        std::fs::write(&a.output, payload_bytes(&img.data)).map_err(|e| Error::io(&a.output, e))?;
        let side_path = PathBuf::from(format!("{}.json", a.output.display()));
        std::fs::write(&side_path, serde_json::to_string_pretty(&side)?).map_err(|e| Error::io(&side_path, e))
    }
}
