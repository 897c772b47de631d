//! Command-line front end. Results go to stdout as JSON (or JSON lines),
//! diagnostics to stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body_model::{lbs_forward, load_body_spec, toy_body_spec, write_obj, BodyModelSpec, BodyParams};
use crate::camera::{intrinsics_from_fov, pitch_matrix, Extrinsics, Intrinsics};
use crate::datagen::{
    generate_dataset, read_jsonl, read_records, record_depth, record_rng, DatasetConfig, PoseSource, SamplerRanges,
    SceneRecord,
};
use crate::error::{Error, Result};
use crate::fitting::{adjust_mesh, estimate_pitch, estimate_pitch_depth, FitConfig, FitReport};
use crate::losses::{LossWeights, PitchCamera, Targets};
use crate::metrics::{evaluate, summarize, MetricSummary};
use crate::rasterizer::{render_depth, write_pfm};
use crate::rotation::{exp_so3, log_so3, Vec3};
use crate::transform::rotate_params;

pub const OUTPUT_SCHEMA: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "camworld", version, about = "Camera-to-world body mesh transformation under estimated camera pitch")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset (manifest.jsonl plus depth PFMs).
    GenDataset(GenArgs),
    /// Estimate camera pitch for every record of a dataset.
    EstimatePitch(PitchArgs),
    /// Move body parameters between the camera and world frames.
    Transform(TransformArgs),
    /// Refine world-frame bodies for every record of a dataset.
    Fit(FitArgs),
    /// Score fitted bodies against the dataset ground truth.
    Metrics(MetricsArgs),
    /// Render a body to a depth map and/or OBJ mesh.
    Render(RenderArgs),
}

#[derive(Args, Debug)]
pub struct CameraArgs {
    #[arg(long, default_value_t = 640)]
    pub width: u32,
    #[arg(long, default_value_t = 480)]
    pub height: u32,
    /// Diagonal field of view in degrees.
    #[arg(long, default_value_t = 53.130)]
    pub fov_deg: f64,
}

impl CameraArgs {
    fn intrinsics(&self) -> Result<Intrinsics> {
        intrinsics_from_fov(self.width, self.height, self.fov_deg.to_radians())
    }
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `toy` or a body spec JSON file.
    #[arg(long, default_value = "toy")]
    pub body_spec: String,
    #[command(flatten)]
    pub camera: CameraArgs,
    /// Fraction of 16x16 crop blocks to mask.
    #[arg(long, default_value_t = 0.0)]
    pub mask_ratio: f64,
    /// Sampler ranges as JSON (angles in radians).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Fix the camera pitch instead of sampling it, degrees.
    #[arg(long)]
    pub pitch_deg: Option<f64>,
    /// JSON array or JSON-lines file of body parameters to draw poses from.
    #[arg(long)]
    pub pose_file: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PitchMethod {
    Keypoints,
    Depth,
    Both,
}

#[derive(Args, Debug)]
pub struct PitchArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = PitchMethod::Keypoints)]
    pub method: PitchMethod,
    /// Gaussian keypoint noise, pixels.
    #[arg(long, default_value_t = 0.0)]
    pub noise_px: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fit configuration JSON (pitch grid and tolerances).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write JSON lines here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TransformArgs {
    /// Body parameters JSON.
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub pitch_deg: f64,
    /// World to camera instead of camera to world.
    #[arg(long)]
    pub inverse: bool,
    #[arg(long, default_value = "toy")]
    pub body_spec: String,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output of `estimate-pitch`; the true pitch is used when absent.
    #[arg(long)]
    pub pitches: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root orientation weight of the hybrid pose term.
    #[arg(long)]
    pub lroot: Option<f64>,
    /// Use only the 2D keypoint term.
    #[arg(long)]
    pub keypoints_only: bool,
    /// Root orientation error of the simulated camera-frame estimate, degrees.
    #[arg(long, default_value_t = 15.0)]
    pub init_root_deg: f64,
    /// Per-joint pose noise of the simulated camera-frame estimate, radians.
    #[arg(long, default_value_t = 0.05)]
    pub init_pose_sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output of `fit`.
    #[arg(long)]
    pub fits: PathBuf,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// Body parameters JSON; the rest pose when absent.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value = "toy")]
    pub body_spec: String,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub pitch_deg: f64,
    /// Distance from the camera to the body root along the optical axis.
    #[arg(long, default_value_t = 4.0)]
    pub distance: f64,
    #[command(flatten)]
    pub camera: CameraArgs,
    /// Depth map output (PFM).
    #[arg(long)]
    pub depth: Option<PathBuf>,
    /// Posed mesh output (OBJ).
    #[arg(long)]
    pub obj: Option<PathBuf>,
}

pub fn load_spec(name: &str) -> Result<BodyModelSpec> {
    if name == "toy" {
        Ok(toy_body_spec())
    } else {
        load_body_spec(name)
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::schema(path.display().to_string(), e))
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("output types serialize")
}

/// Rows go to `out` when given (and the summary to stdout), else the rows
/// go to stdout.
fn emit_rows((rows, summary): (Vec<String>, String), out: Option<&Path>) -> Result<()> {
    let mut text = String::new();
    for l in rows {
        text.push_str(&l);
        text.push('\n');
    }
    match out {
        Some(p) => {
            fs::write(p, text).map_err(|e| Error::io(p, e))?;
            println!("{summary}");
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn manifest_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Loads a manifest, keeping per-line failures as error rows.
fn load_manifest(path: &Path) -> Result<Vec<std::result::Result<SceneRecord, String>>> {
    Ok(read_records(path)?
        .into_iter()
        .map(|r| {
            r.map_err(|e| {
                eprintln!("warning: {}", e.error);
                format!("line {}: {}", e.line, e.error)
            })
        })
        .collect())
}

/// Body parameters from a JSON array or a JSON-lines file.
pub fn read_pose_file(path: &Path) -> Result<Vec<BodyParams>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(&text).map_err(|e| Error::schema(path.display().to_string(), e));
    }
    read_jsonl::<BodyParams>(path)?
        .into_iter()
        .map(|r| r.map_err(|e| e.error))
        .collect()
}

// ---------------------------------------------------------------------------
// gen-dataset
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct GenOutput {
    schema: u32,
    manifest: String,
    n_records: usize,
    seed: u64,
}

fn gen_dataset(a: &GenArgs) -> Result<String> {
    let spec = load_spec(&a.body_spec)?;
    let mut ranges: SamplerRanges = match &a.config {
        Some(p) => read_json(p)?,
        None => SamplerRanges::default(),
    };
    if let Some(p) = a.pitch_deg {
        ranges.pitch = [p.to_radians(); 2];
    }
    let mut pose_bank = vec![];
    if let Some(p) = &a.pose_file {
        pose_bank = read_pose_file(p)?;
        ranges.pose_source = PoseSource::File { path: p.clone() };
    }
    let cfg = DatasetConfig {
        spec: &spec,
        spec_name: &a.body_spec,
        count: a.count,
        ranges,
        intrinsics: a.camera.intrinsics()?,
        master_seed: a.seed,
        mask_ratio: a.mask_ratio,
        pose_bank,
    };
    let (manifest, records) = generate_dataset(&cfg, &a.out)?;
    eprintln!("wrote {} records to {}", records.len(), manifest.display());
    Ok(to_json(&GenOutput {
        schema: OUTPUT_SCHEMA,
        manifest: manifest.display().to_string(),
        n_records: records.len(),
        seed: a.seed,
    }))
}

// ---------------------------------------------------------------------------
// estimate-pitch
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PitchEstimate {
    pub pitch_deg: f64,
    pub loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_b: Option<Vec3>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PitchRow {
    pub schema: u32,
    pub id: String,
    #[serde(default)]
    pub true_pitch_deg: Option<f64>,
    /// Selected estimate: keypoints when available, else depth.
    #[serde(default)]
    pub pitch_deg: Option<f64>,
    #[serde(default)]
    pub keypoints: Option<PitchEstimate>,
    #[serde(default)]
    pub depth: Option<PitchEstimate>,
    #[serde(default)]
    pub error: Option<String>,
}

impl PitchRow {
    fn failed(id: String, error: String) -> Self {
        PitchRow {
            schema: OUTPUT_SCHEMA,
            id,
            true_pitch_deg: None,
            pitch_deg: None,
            keypoints: None,
            depth: None,
            error: Some(error),
        }
    }
}

fn noisy_keypoints(rec: &SceneRecord, sigma: f64, seed: u64, index: usize) -> Vec<[f64; 2]> {
    if sigma <= 0.0 {
        return rec.keypoints2d.clone();
    }
    let mut rng = record_rng(seed, index);
    let n = Normal::new(0.0, sigma).expect("noise sigma is positive");
    rec.keypoints2d
        .iter()
        .map(|k| [k[0] + n.sample(&mut rng), k[1] + n.sample(&mut rng)])
        .collect()
}

fn pitch_for_record(rec: &SceneRecord, index: usize, a: &PitchArgs, cfg: &FitConfig, dir: &Path) -> PitchRow {
    let mut row = PitchRow::failed(rec.id.clone(), String::new());
    row.error = None;
    row.true_pitch_deg = Some(rec.extrinsics.pitch.to_degrees());
    let mut errors = vec![];
    let spec = match load_spec(&rec.body_spec) {
        Ok(s) => s,
        Err(e) => return PitchRow::failed(rec.id.clone(), e.to_string()),
    };
    let reference = match lbs_forward(&spec, &rec.reference_params(&spec)) {
        Ok(m) => m,
        Err(e) => return PitchRow::failed(rec.id.clone(), e.to_string()),
    };
    if matches!(a.method, PitchMethod::Keypoints | PitchMethod::Both) {
        let kps = noisy_keypoints(rec, a.noise_px, a.seed, index);
        match estimate_pitch(&reference.joints, &kps, &rec.intrinsics, cfg) {
            Ok((p, t_b, rep)) => {
                row.keypoints = Some(PitchEstimate {
                    pitch_deg: p.to_degrees(),
                    loss: rep.final_loss,
                    t_b: Some(t_b),
                })
            }
            Err(e) => errors.push(format!("keypoints: {e}")),
        }
    }
    if matches!(a.method, PitchMethod::Depth | PitchMethod::Both) {
        let result = record_depth(rec, dir).and_then(|obs| {
            let mesh = rec.unrotated_camera_mesh(&spec)?;
            estimate_pitch_depth(&obs, &mesh, &rec.intrinsics, cfg)
        });
        match result {
            Ok((p, rep)) => {
                row.depth = Some(PitchEstimate {
                    pitch_deg: p.to_degrees(),
                    loss: rep.final_loss,
                    t_b: None,
                })
            }
            Err(e) => errors.push(format!("depth: {e}")),
        }
    }
    row.pitch_deg = row.keypoints.as_ref().or(row.depth.as_ref()).map(|e| e.pitch_deg);
    if !errors.is_empty() {
        row.error = Some(errors.join("; "));
    }
    row
}

fn estimate_pitch_cmd(a: &PitchArgs) -> Result<(Vec<String>, String)> {
    let cfg: FitConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => FitConfig::default(),
    };
    cfg.validate()?;
    if !(a.noise_px >= 0.0) {
        return Err(Error::InvalidArgument("noise must be non-negative".into()));
    }
    let dir = manifest_dir(&a.manifest);
    let rows = load_manifest(&a.manifest)?;
    let out: Vec<PitchRow> = rows
        .par_iter()
        .enumerate()
        .map(|(i, r)| match r {
            Ok(rec) => pitch_for_record(rec, i, a, &cfg, &dir),
            Err(e) => PitchRow::failed(String::new(), e.clone()),
        })
        .collect();
    for r in out.iter().filter(|r| r.error.is_some()) {
        eprintln!("record {:?}: {}", r.id, r.error.as_deref().unwrap_or_default());
    }
    let errors: Vec<f64> = out
        .iter()
        .filter_map(|r| Some((r.pitch_deg? - r.true_pitch_deg?).abs()))
        .collect();
    let summary = PitchSummary {
        schema: OUTPUT_SCHEMA,
        n_records: out.len(),
        n_failed: out.iter().filter(|r| r.pitch_deg.is_none()).count(),
        mean_abs_error_deg: (!errors.is_empty()).then(|| errors.iter().sum::<f64>() / errors.len() as f64),
        max_abs_error_deg: errors.iter().cloned().reduce(f64::max),
    };
    Ok((out.iter().map(to_json).collect(), to_json(&summary)))
}

#[derive(Serialize)]
struct PitchSummary {
    schema: u32,
    n_records: usize,
    n_failed: usize,
    mean_abs_error_deg: Option<f64>,
    max_abs_error_deg: Option<f64>,
}

// ---------------------------------------------------------------------------
// transform
// ---------------------------------------------------------------------------

fn transform_cmd(a: &TransformArgs) -> Result<String> {
    let spec = load_spec(&a.body_spec)?;
    let params: BodyParams = read_json(&a.params)?;
    params.check_for(&spec)?;
    let rot = pitch_matrix(a.pitch_deg.to_radians());
    let rot = if a.inverse { rot } else { rot.transpose() };
    let out = rotate_params(&params, &rot, &spec.rest_root(&params.shape));
    Ok(to_json(&out))
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRow {
    pub schema: u32,
    pub id: String,
    #[serde(default)]
    pub pitch_deg: Option<f64>,
    /// Refined body in the world frame.
    #[serde(default)]
    pub params_world: Option<BodyParams>,
    /// Camera-frame estimate read as if it were already in the world frame.
    #[serde(default)]
    pub params_naive: Option<BodyParams>,
    #[serde(default)]
    pub report: Option<FitReport>,
    #[serde(default)]
    pub error: Option<String>,
}

impl FitRow {
    fn failed(id: String, error: String) -> Self {
        FitRow {
            schema: OUTPUT_SCHEMA,
            id,
            pitch_deg: None,
            params_world: None,
            params_naive: None,
            report: None,
            error: Some(error),
        }
    }
}

/// Camera-frame estimate standing in for a regressor: the true camera-frame
/// body with its root rotated by `root_deg` about a random axis and Gaussian
/// noise on the other joints.
pub fn simulated_camera_estimate(
    truth_cam: &BodyParams,
    root_deg: f64,
    pose_sigma: f64,
    rng: &mut impl Rng,
) -> BodyParams {
    let mut p = truth_cam.clone();
    let axis: [f64; 3] = UnitSphere.sample(rng);
    let axis = Vec3::from(axis) * root_deg.to_radians();
    p.pose[0] = log_so3(&(exp_so3(&axis) * exp_so3(&p.pose[0])));
    if pose_sigma > 0.0 {
        let n = Normal::new(0.0, pose_sigma).expect("pose sigma is positive");
        for q in p.pose.iter_mut().skip(1) {
            *q += Vec3::from_fn(|_, _| n.sample(rng));
        }
    }
    p
}

fn fit_record(rec: &SceneRecord, index: usize, pitch: Option<&PitchRow>, a: &FitArgs, cfg: &FitConfig) -> Result<FitRow> {
    let spec = load_spec(&rec.body_spec)?;
    let truth_ref = rec.reference_params(&spec);
    let truth_mesh = lbs_forward(&spec, &truth_ref)?;

    let (pitch_rad, t_b) = match pitch {
        Some(row) => {
            if let Some(e) = &row.error {
                if row.pitch_deg.is_none() {
                    return Err(Error::InvalidArgument(format!("no pitch estimate: {e}")));
                }
            }
            let deg = row
                .pitch_deg
                .ok_or_else(|| Error::InvalidArgument("no pitch estimate".into()))?;
            let t_b = row.keypoints.as_ref().and_then(|k| k.t_b).unwrap_or_else(Vec3::zeros);
            (deg.to_radians(), t_b)
        }
        None => (rec.extrinsics.pitch, Vec3::zeros()),
    };

    let mut rng = record_rng(a.seed, index);
    let truth_cam = rec.camera_params(&spec);
    let init_cam = simulated_camera_estimate(&truth_cam, a.init_root_deg, a.init_pose_sigma, &mut rng);

    let camera = PitchCamera {
        intrinsics: rec.intrinsics,
        pitch: pitch_rad,
        t_b,
    };
    let targets = if a.keypoints_only {
        Targets {
            keypoints2d: rec.keypoints2d.clone(),
            ..Default::default()
        }
    } else {
        Targets {
            keypoints2d: rec.keypoints2d.clone(),
            joints3d: Some(truth_mesh.joints.clone()),
            vertices: Some(truth_mesh.vertices.clone()),
            pose: Some(truth_ref.pose.clone()),
        }
    };
    let (params, report) = adjust_mesh(&init_cam, &camera, &targets, &spec, cfg)?;
    Ok(FitRow {
        schema: OUTPUT_SCHEMA,
        id: rec.id.clone(),
        pitch_deg: Some(pitch_rad.to_degrees()),
        params_world: Some(params),
        params_naive: Some(init_cam),
        report: Some(report),
        error: None,
    })
}

fn fit_cmd(a: &FitArgs) -> Result<(Vec<String>, String)> {
    let mut cfg: FitConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => FitConfig::default(),
    };
    if let Some(l) = a.lroot {
        cfg.weights.lroot = l;
    }
    if a.keypoints_only {
        cfg.weights = LossWeights {
            lroot: cfg.weights.lroot,
            ..LossWeights::keypoints_only()
        };
    }
    cfg.validate()?;
    let pitches: Option<Vec<PitchRow>> = match &a.pitches {
        Some(p) => Some(
            read_jsonl::<PitchRow>(p)?
                .into_iter()
                .map(|r| r.map_err(|e| e.error))
                .collect::<Result<_>>()?,
        ),
        None => None,
    };
    let rows = load_manifest(&a.manifest)?;
    let out: Vec<FitRow> = rows
        .par_iter()
        .enumerate()
        .map(|(i, r)| match r {
            Ok(rec) => {
                let pitch = match &pitches {
                    Some(ps) => match ps.iter().find(|p| p.id == rec.id) {
                        Some(p) => Some(p),
                        None => return FitRow::failed(rec.id.clone(), "record missing from pitch file".into()),
                    },
                    None => None,
                };
                fit_record(rec, i, pitch, a, &cfg).unwrap_or_else(|e| FitRow::failed(rec.id.clone(), e.to_string()))
            }
            Err(e) => FitRow::failed(String::new(), e.clone()),
        })
        .collect();
    for r in &out {
        if let Some(e) = &r.error {
            eprintln!("record {:?}: {e}", r.id);
        } else if let Some(rep) = &r.report {
            if !rep.converged {
                eprintln!("record {:?}: fit did not converge ({})", r.id, rep.status);
            }
        }
    }
    let summary = FitSummary {
        schema: OUTPUT_SCHEMA,
        n_records: out.len(),
        n_failed: out.iter().filter(|r| r.error.is_some()).count(),
        n_converged: out.iter().filter(|r| r.report.as_ref().is_some_and(|r| r.converged)).count(),
    };
    Ok((out.iter().map(to_json).collect(), to_json(&summary)))
}

#[derive(Serialize)]
struct FitSummary {
    schema: u32,
    n_records: usize,
    n_failed: usize,
    n_converged: usize,
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsOutput {
    pub schema: u32,
    pub wmpjpe_mm: f64,
    pub pampjpe_mm: f64,
    pub wpve_mm: f64,
    pub n_records: usize,
    pub n_failed: usize,
    /// Same metrics for the camera-frame estimates taken as world-frame.
    pub naive: MetricSummary,
}

fn metrics_cmd(a: &MetricsArgs) -> Result<String> {
    let records: Vec<SceneRecord> = load_manifest(&a.manifest)?.into_iter().filter_map(|r| r.ok()).collect();
    let fits = read_jsonl::<FitRow>(&a.fits)?;
    if fits.len() != records.len() {
        return Err(Error::InvalidArgument(format!(
            "{} fit rows for {} manifest records",
            fits.len(),
            records.len()
        )));
    }
    let mut fitted = vec![];
    let mut naive = vec![];
    let mut failed = 0;
    for row in fits {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                eprintln!("warning: {}", e.error);
                failed += 1;
                continue;
            }
        };
        let (Some(pw), Some(pn), None) = (&row.params_world, &row.params_naive, &row.error) else {
            failed += 1;
            continue;
        };
        let rec = records
            .iter()
            .find(|r| r.id == row.id)
            .ok_or_else(|| Error::InvalidArgument(format!("fit for unknown record {:?}", row.id)))?;
        let spec = load_spec(&rec.body_spec)?;
        let gt = lbs_forward(&spec, &rec.reference_params(&spec))?;
        fitted.push(evaluate(&lbs_forward(&spec, pw)?, &gt)?);
        naive.push(evaluate(&lbs_forward(&spec, pn)?, &gt)?);
    }
    let s = summarize(&fitted);
    Ok(to_json(&MetricsOutput {
        schema: OUTPUT_SCHEMA,
        wmpjpe_mm: s.wmpjpe_mm,
        pampjpe_mm: s.pampjpe_mm,
        wpve_mm: s.wpve_mm,
        n_records: s.n_records,
        n_failed: failed,
        naive: summarize(&naive),
    }))
}

// ---------------------------------------------------------------------------
// render
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct RenderOutput {
    schema: u32,
    covered_pixels: usize,
    depth: Option<String>,
    obj: Option<String>,
}

fn render_cmd(a: &RenderArgs) -> Result<String> {
    if a.depth.is_none() && a.obj.is_none() {
        return Err(Error::InvalidArgument("nothing to write: pass --depth and/or --obj".into()));
    }
    let spec = load_spec(&a.body_spec)?;
    let params = match &a.params {
        Some(p) => read_json(p)?,
        None => BodyParams::zeros(spec.joint_count),
    };
    let mesh = lbs_forward(&spec, &params)?;
    let intr = a.camera.intrinsics()?;
    let pitch = a.pitch_deg.to_radians();
    let root = mesh.joints.first().copied().unwrap_or_else(Vec3::zeros);
    let ext = Extrinsics {
        camera_center: root - pitch_matrix(pitch).transpose() * Vec3::new(0.0, 0.0, a.distance),
        ..Extrinsics::pitch_only(pitch)
    };
    let depth = render_depth(&mesh, &intr, &ext, &ext.t_b())?;
    if let Some(p) = &a.depth {
        write_pfm(&depth, p)?;
    }
    if let Some(p) = &a.obj {
        write_obj(&mesh, p)?;
    }
    Ok(to_json(&RenderOutput {
        schema: OUTPUT_SCHEMA,
        covered_pixels: depth.covered_count(),
        depth: a.depth.as_ref().map(|p| p.display().to_string()),
        obj: a.obj.as_ref().map(|p| p.display().to_string()),
    }))
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenDataset(a) => println!("{}", gen_dataset(a)?),
        Command::EstimatePitch(a) => emit_rows(estimate_pitch_cmd(a)?, a.out.as_deref())?,
        Command::Transform(a) => println!("{}", transform_cmd(a)?),
        Command::Fit(a) => emit_rows(fit_cmd(a)?, a.out.as_deref())?,
        Command::Metrics(a) => println!("{}", metrics_cmd(a)?),
        Command::Render(a) => println!("{}", render_cmd(a)?),
    }
    Ok(())
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
