use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use factored3d::bins::{cluster_quaternions, synthetic_mixture};
use factored3d::compare::{oracle_representations, CompareConfig, RepresentationSet};
use factored3d::detection::{assign_proposals, ImageDetections, Predicate, ThresholdTuple};
use factored3d::geometry::Camera;
use factored3d::io::{
    atomic_write, encode_pfm, load_depth_pfm, load_fvox, load_json, load_proposals, load_scene, save_bins,
    save_depth_pfm, save_fvox, save_scene, FormatError, SceneEncoding,
};
use factored3d::render::{
    depth_to_pointcloud, pointcloud_to_voxels, render_depth_analytic, render_depth_voxel, DepthMap,
};
use factored3d::reports::{
    ap_report, compare_report, curve_rows, evaluate_pairs, grad_check_report, proposal_report, GenReport,
    GeneratedEntry, ScenePair, REPORT_VERSION,
};
use factored3d::scene::{compose_scene_voxels, generate_scene, FactoredScene, GeneratorConfig};
use factored3d::voxel::{GridSpec, DEFAULT_TAU};
use factored3d::{Error, Result};

#[derive(Parser)]
#[command(name = "factored3d", version, about = "Factored 3D scene toolkit: synthetic scenes, rendering, metrics and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic ground-truth scenes.
    Gen(GenArgs),
    /// Render depth, disparity or layout disparity from a scene to PFM.
    Render(RenderArgs),
    /// Convert a scene to scene voxels or depth, or a depth map to voxels or points.
    Convert(ConvertArgs),
    /// Per-object component errors and layout error of predictions against ground truth.
    Eval(EvalArgs),
    /// Detection average precision with the one-predicate relaxation sweep.
    Ap(ApArgs),
    /// Score factored, depth and voxel representations on the five scene tasks.
    CompareReps(CompareArgs),
    /// Finite-difference verification of every loss kernel.
    GradCheck(GradArgs),
    /// Cluster rotations into bins.
    Bins(BinsArgs),
    /// Label 2D proposals as foreground, background or ignored.
    Proposals(ProposalArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Output directory; scenes are written as scene_NNNN.json.
    #[arg(long)]
    out: PathBuf,
    /// Generator settings (JSON). `--seed` overrides its seed.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Image size; intrinsics scale with the width.
    #[arg(long, num_args = 2, value_names = ["WIDTH", "HEIGHT"])]
    resolution: Option<Vec<usize>>,
    /// Write shapes and layout as sidecar FVOX/PFM files.
    #[arg(long)]
    external: bool,
    /// Manifest path (default: stdout).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RenderWhat {
    Depth,
    Disparity,
    Layout,
}

#[derive(Clone, Copy, ValueEnum)]
enum Renderer {
    Analytic,
    Voxel,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, value_enum, default_value = "depth")]
    what: RenderWhat,
    #[arg(long, value_enum, default_value = "analytic")]
    renderer: Renderer,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConvertTo {
    /// Scene JSON to an FVOX scene grid.
    SceneVoxels,
    /// Scene JSON to a voxel-rendered depth PFM.
    Depth,
    /// Depth PFM to an FVOX scene grid.
    Voxels,
    /// Depth PFM to a CSV point cloud.
    Points,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long, value_enum)]
    to: ConvertTo,
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    depth: Option<PathBuf>,
    /// Camera JSON for depth input (otherwise taken from --scene).
    #[arg(long)]
    camera: Option<PathBuf>,
    /// Leave the room shell out of scene voxels.
    #[arg(long)]
    no_layout: bool,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted scene file or directory.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth scene file or directory (matched by file name).
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-object CSV table.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ApArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    #[arg(long, default_value_t = 0.5)]
    box_iou: f64,
    #[arg(long, default_value_t = 0.25)]
    shape_iou: f64,
    /// Radians.
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_6)]
    rot: f64,
    /// Meters.
    #[arg(long, default_value_t = 1.0)]
    trans: f64,
    /// Mean absolute log2 scale ratio.
    #[arg(long, default_value_t = 0.5)]
    scale: f64,
    /// Predicates to drop from the base tuple.
    #[arg(long, value_enum)]
    wildcard: Vec<PredicateArg>,
    #[arg(long)]
    per_class: bool,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Sweep table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PredicateArg {
    Box2d,
    Shape,
    Rot,
    Trans,
    Scale,
}

impl From<PredicateArg> for Predicate {
    fn from(p: PredicateArg) -> Self {
        match p {
            PredicateArg::Box2d => Predicate::Box2d,
            PredicateArg::Shape => Predicate::Shape,
            PredicateArg::Rot => Predicate::Rotation,
            PredicateArg::Trans => Predicate::Translation,
            PredicateArg::Scale => Predicate::Scale,
        }
    }
}

#[derive(Args)]
struct CompareArgs {
    /// Ground-truth scene file or directory.
    #[arg(long)]
    gt: PathBuf,
    /// Directory of predicted factored scenes (<name>.json); default: ground truth.
    #[arg(long)]
    factored: Option<PathBuf>,
    /// Directory of predicted depth maps (<stem>.pfm); default: ground-truth visible depth.
    #[arg(long)]
    depth: Option<PathBuf>,
    /// Directory of predicted scene grids (<stem>.fvox); default: ground-truth occupancy.
    #[arg(long)]
    voxels: Option<PathBuf>,
    /// Score object occupancy only, without the room shell.
    #[arg(long)]
    objects_only: bool,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    /// Cumulative curves as CSV.
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct GradArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[arg(long, default_value_t = 1e-6)]
    step: f64,
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BinsArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 24)]
    k: usize,
    /// Cluster the object rotations of these scenes (file or directory).
    #[arg(long, conflicts_with = "mixture")]
    scenes: Option<PathBuf>,
    /// Cluster a synthetic 24-mode mixture with this many samples per mode.
    #[arg(long)]
    mixture: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProposalArgs {
    /// JSON list of {"box": [xmin, ymin, xmax, ymax], "score": optional}.
    #[arg(long)]
    proposals: PathBuf,
    /// Ground-truth scene providing object boxes.
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    text.push('\n');
    match path {
        Some(p) => atomic_write(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    atomic_write(path, &bytes)
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source: e,
    }
}

/// Scene files under `path`: the file itself, or every `*.json` in the
/// directory, sorted by name.
fn scene_files(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    if path.is_dir() {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(path).map_err(|e| io_err(path, e))? {
            let p = entry.map_err(|e| io_err(path, e))?.path();
            if p.extension().is_some_and(|x| x == "json") && p.is_file() {
                out.push((file_name(&p), p));
            }
        }
        out.sort();
        Ok(out)
    } else {
        Ok(vec![(file_name(path), path.to_path_buf())])
    }
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn file_stem(name: &str) -> &str {
    name.strip_suffix(".json").unwrap_or(name)
}

fn load_scenes(path: &Path) -> Result<Vec<(String, FactoredScene)>> {
    scene_files(path)?
        .par_iter()
        .map(|(name, p)| Ok((name.clone(), load_scene(p)?)))
        .collect()
}

/// Prediction/ground-truth pairs: two files, or two directories matched by
/// file name.
fn load_pairs(pred: &Path, gt: &Path) -> Result<Vec<(String, FactoredScene, FactoredScene)>> {
    if !pred.is_dir() && !gt.is_dir() {
        return Ok(vec![(file_name(gt), load_scene(pred)?, load_scene(gt)?)]);
    }
    if !(pred.is_dir() && gt.is_dir()) {
        return Err(Error::InvalidArgument("--pred and --gt must both be files or both directories".into()));
    }
    let gts = load_scenes(gt)?;
    gts.into_par_iter()
        .map(|(name, g)| {
            let p = pred.join(&name);
            if !p.exists() {
                return Err(Error::InvalidArgument(format!("no prediction for {name} in {}", pred.display())));
            }
            Ok((name, load_scene(&p)?, g))
        })
        .collect()
}

fn run_gen(a: GenArgs) -> Result<()> {
    let mut cfg: GeneratorConfig = match &a.config {
        Some(p) => load_json(p)?,
        None => GeneratorConfig::default(),
    };
    if let Some(r) = &a.resolution {
        let (w, h) = (r[0], r[1]);
        let f = 519.0 * w as f64 / 640.0;
        cfg.camera = Camera::new(f, f, w as f64 / 2.0, h as f64 / 2.0, w, h)?;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    let entries: Vec<GeneratedEntry> = (0..a.count)
        .into_par_iter()
        .map(|i| {
            let seed = a.seed.wrapping_add(i as u64);
            let g = generate_scene(&GeneratorConfig { seed, ..cfg.clone() })?;
            let stem = format!("scene_{i:04}");
            let file = format!("{stem}.json");
            let encoding = if a.external { SceneEncoding::External { stem } } else { SceneEncoding::Inline };
            save_scene(&a.out.join(&file), &g.scene, &encoding)?;
            Ok(GeneratedEntry {
                file,
                seed,
                objects: g.scene.objects.len(),
                requested_objects: g.requested_objects,
                placement_shortfall: g.placement_shortfall,
            })
        })
        .collect::<Result<_>>()?;
    let report = GenReport {
        report: "gen".into(),
        version: REPORT_VERSION,
        base_seed: a.seed,
        scenes: entries,
    };
    emit_json(&report, a.report.as_deref())
}

fn render_depth(scene: &FactoredScene, renderer: Renderer, tau: f64) -> Result<DepthMap> {
    match renderer {
        Renderer::Analytic => render_depth_analytic(scene, true),
        Renderer::Voxel => render_depth_voxel(scene, tau),
    }
}

fn run_render(a: RenderArgs) -> Result<()> {
    let scene = load_scene(&a.scene)?;
    let cam = scene.camera;
    let values = match a.what {
        RenderWhat::Depth => return save_depth_pfm(&a.out, &render_depth(&scene, a.renderer, a.tau)?),
        RenderWhat::Disparity => render_depth(&scene, a.renderer, a.tau)?.to_disparity(),
        RenderWhat::Layout => match &scene.layout {
            Some(l) => l.disparity().to_vec(),
            None => scene.layout_depth()?.to_disparity(),
        },
    };
    atomic_write(&a.out, &encode_pfm(cam.width(), cam.height(), &values))
}

fn camera_for_depth(a: &ConvertArgs) -> Result<Camera> {
    match (&a.camera, &a.scene) {
        (Some(p), _) => load_json(p),
        (None, Some(s)) => Ok(load_scene(s)?.camera),
        (None, None) => Err(Error::InvalidArgument("depth input needs --camera or --scene".into())),
    }
}

fn run_convert(a: ConvertArgs) -> Result<()> {
    match a.to {
        ConvertTo::SceneVoxels | ConvertTo::Depth => {
            let path = a.scene.as_ref().ok_or_else(|| Error::InvalidArgument("--scene is required".into()))?;
            let scene = load_scene(path)?;
            if let ConvertTo::SceneVoxels = a.to {
                let grid = compose_scene_voxels(&scene, &GridSpec::scene_default(), a.tau, !a.no_layout)?;
                save_fvox(&a.out, &grid)
            } else {
                save_depth_pfm(&a.out, &render_depth_voxel(&scene, a.tau)?)
            }
        }
        ConvertTo::Voxels | ConvertTo::Points => {
            let path = a.depth.as_ref().ok_or_else(|| Error::InvalidArgument("--depth is required".into()))?;
            let depth = load_depth_pfm(path, &camera_for_depth(&a)?)?;
            let points = depth_to_pointcloud(&depth);
            if let ConvertTo::Voxels = a.to {
                let v = pointcloud_to_voxels(&points, &GridSpec::scene_default());
                if v.ignored > 0 {
                    eprintln!("note: {} points fell outside the scene grid", v.ignored);
                }
                save_fvox(&a.out, &v.grid)
            } else {
                #[derive(Serialize)]
                struct Row {
                    x: f64,
                    y: f64,
                    z: f64,
                }
                let rows: Vec<Row> = points.iter().map(|p| Row { x: p.x, y: p.y, z: p.z }).collect();
                write_csv(&rows, &a.out)
            }
        }
    }
}

fn run_eval(a: EvalArgs) -> Result<()> {
    let loaded = load_pairs(&a.pred, &a.gt)?;
    let pairs: Vec<ScenePair<'_>> = loaded
        .iter()
        .map(|(name, p, g)| ScenePair {
            name: name.clone(),
            pred: p,
            gt: g,
        })
        .collect();
    let report = evaluate_pairs(&pairs, a.tau)?;
    if let Some(c) = &a.csv {
        write_csv(&report.objects, c)?;
    }
    emit_json(&report, a.report.as_deref())
}

fn run_ap(a: ApArgs) -> Result<()> {
    let mut theta = ThresholdTuple {
        box_iou: Some(a.box_iou),
        shape_iou: Some(a.shape_iou),
        rot: Some(a.rot),
        trans: Some(a.trans),
        scale: Some(a.scale),
    };
    for w in &a.wildcard {
        theta = theta.without((*w).into());
    }
    let images: Vec<ImageDetections> = load_pairs(&a.pred, &a.gt)?
        .into_iter()
        .map(|(_, p, g)| ImageDetections {
            detections: p.objects,
            ground_truth: g.objects,
        })
        .collect();
    let report = ap_report(&images, &theta, a.tau, a.per_class)?;
    if let Some(c) = &a.csv {
        #[derive(Serialize)]
        struct Row<'a> {
            name: &'a str,
            ap: f64,
        }
        let rows: Vec<Row> = report.sweep.iter().map(|r| Row { name: &r.name, ap: r.ap }).collect();
        write_csv(&rows, c)?;
    }
    emit_json(&report, a.report.as_deref())
}

fn run_compare(a: CompareArgs) -> Result<()> {
    let cfg = CompareConfig {
        tau: a.tau,
        include_layout_voxels: !a.objects_only,
        ..CompareConfig::default()
    };
    let scenes = load_scenes(&a.gt)?;
    let sets: Vec<(String, FactoredScene, RepresentationSet)> = scenes
        .into_par_iter()
        .map(|(name, gt)| {
            let mut reps = oracle_representations(&gt, &cfg)?;
            let stem = file_stem(&name).to_string();
            if let Some(d) = &a.factored {
                reps.factored = load_scene(&d.join(&name))?;
            }
            if let Some(d) = &a.depth {
                reps.depth = load_depth_pfm(&d.join(format!("{stem}.pfm")), &gt.camera)?;
            }
            if let Some(d) = &a.voxels {
                reps.voxels = load_fvox(&d.join(format!("{stem}.fvox")))?;
            }
            Ok((name, gt, reps))
        })
        .collect::<Result<_>>()?;
    let report = compare_report(&sets, &cfg)?;
    write_csv(&curve_rows(&report), &a.csv)?;
    emit_json(&report, a.report.as_deref())
}

fn run_grad(a: GradArgs) -> Result<bool> {
    let report = grad_check_report(a.seed, a.points, a.step, a.tolerance)?;
    emit_json(&report, a.report.as_deref())?;
    Ok(report.passed)
}

fn run_bins(a: BinsArgs) -> Result<()> {
    let samples = match (&a.scenes, a.mixture) {
        (Some(p), None) => load_scenes(p)?
            .into_iter()
            .flat_map(|(_, s)| s.objects.into_iter().map(|o| *o.pose.rotation()))
            .collect(),
        (None, Some(n)) => synthetic_mixture(n, 0.01, a.seed).0,
        _ => return Err(Error::InvalidArgument("give exactly one of --scenes or --mixture".into())),
    };
    save_bins(&a.out, &cluster_quaternions(&samples, a.k, a.seed)?)
}

fn run_proposals(a: ProposalArgs) -> Result<()> {
    let props = load_proposals(&a.proposals)?;
    let scene = load_scene(&a.scene)?;
    let gt_boxes: Vec<_> = scene.objects.iter().filter_map(|o| o.box2d).collect();
    let boxes: Vec<_> = props.iter().map(|p| p.box2d).collect();
    emit_json(&proposal_report(&assign_proposals(&boxes, &gt_boxes)), a.report.as_deref())
}

/// 2 for failures to read or write files, 1 for everything else.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Format(FormatError::Reference { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Gen(a) => run_gen(a),
        Command::Render(a) => run_render(a),
        Command::Convert(a) => run_convert(a),
        Command::Eval(a) => run_eval(a),
        Command::Ap(a) => run_ap(a),
        Command::CompareReps(a) => run_compare(a),
        Command::GradCheck(a) => match run_grad(a) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("error: gradient check exceeded the tolerance");
                return ExitCode::from(1);
            }
            Err(e) => Err(e),
        },
        Command::Bins(a) => run_bins(a),
        Command::Proposals(a) => run_proposals(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
