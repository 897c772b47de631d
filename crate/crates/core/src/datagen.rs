//! Synthetic scene generation: posed bodies seen by randomly placed and
//! rotated cameras, with projected keypoints, box descriptors and rendered
//! depth.
//!
//! A dataset is a JSON-lines manifest plus sibling PFM files. Each record
//! draws from its own ChaCha stream `(master_seed, index)`, so parallel and
//! serial generation produce identical bytes.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body_model::{lbs_forward, BodyModelSpec, BodyParams, Mesh, NUM_BETAS};
use crate::camera::{bbox_from_projection, project, rotation_from_euler, BBox, BBoxEncoding, Extrinsics, Intrinsics};
use crate::error::{Error, Result};
use crate::rasterizer::{crop_resize_depth, render_depth, write_pfm, DepthMap};
use crate::rotation::{Mat3, Vec3};
use crate::transform::rotate_params;

pub const SCHEMA_VERSION: u32 = 1;
pub const CROP_SIZE: u32 = 256;
/// Side of one mask block in pixels; a 256 crop holds 16 x 16 blocks.
pub const MASK_BLOCK: u32 = 16;
const MIN_CAMERA_DEPTH: f64 = 0.05;
const CAMERA_TRIES: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PoseSource {
    Zero,
    /// Gaussian jitter on every non-root joint component, clamped.
    RandomJitter { sigma: f64, clamp: f64 },
    /// Poses cycled from a params file.
    File { path: PathBuf },
}

/// Sampling ranges; angles in radians, distances in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerRanges {
    pub pitch: [f64; 2],
    pub roll: [f64; 2],
    pub yaw: [f64; 2],
    pub distance: [f64; 2],
    /// Horizontal/vertical offset of the root in the image, as a fraction of
    /// the image size on either side of the centre.
    pub image_offset: f64,
    pub pose_source: PoseSource,
    /// Standard deviation of the shape coefficients; 0 keeps the mean shape.
    pub shape_sigma: f64,
}

impl Default for SamplerRanges {
    fn default() -> Self {
        SamplerRanges {
            pitch: [(-45f64).to_radians(), 45f64.to_radians()],
            roll: [(-15f64).to_radians(), 15f64.to_radians()],
            yaw: [(-180f64).to_radians(), 180f64.to_radians()],
            distance: [2.0, 6.0],
            image_offset: 0.15,
            pose_source: PoseSource::RandomJitter { sigma: 0.2, clamp: 0.8 },
            shape_sigma: 0.5,
        }
    }
}

impl SamplerRanges {
    /// Every angle and distance fixed to a single value.
    pub fn fixed(pitch: f64, roll: f64, yaw: f64, distance: f64) -> Self {
        SamplerRanges {
            pitch: [pitch; 2],
            roll: [roll; 2],
            yaw: [yaw; 2],
            distance: [distance; 2],
            image_offset: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("pitch", self.pitch), ("roll", self.roll), ("yaw", self.yaw), ("distance", self.distance)] {
            if !(r[0] <= r[1]) || !r[0].is_finite() || !r[1].is_finite() {
                return Err(Error::InvalidArgument(format!("{name} range [{}, {}] is not ordered", r[0], r[1])));
            }
        }
        if !(self.distance[0] > crate::rasterizer::NEAR_PLANE) {
            return Err(Error::InvalidArgument("camera distance must exceed the near plane".into()));
        }
        if !(0.0..=0.5).contains(&self.image_offset) {
            return Err(Error::InvalidArgument("image_offset must lie in [0, 0.5]".into()));
        }
        if !(self.shape_sigma >= 0.0) {
            return Err(Error::InvalidArgument("shape_sigma must be non-negative".into()));
        }
        if let PoseSource::RandomJitter { sigma, clamp } = self.pose_source {
            if !(sigma >= 0.0 && clamp >= 0.0) {
                return Err(Error::InvalidArgument("pose jitter sigma and clamp must be non-negative".into()));
            }
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

/// Samples camera rotation and placement so that the body root lands near
/// the image centre at the sampled distance, retrying until every point in
/// `body_points` is in front of the camera.
pub fn sample_camera(
    rng: &mut impl Rng,
    ranges: &SamplerRanges,
    intr: &Intrinsics,
    body_points: &[Vec3],
) -> Result<(Extrinsics, Vec3)> {
    ranges.validate()?;
    let root = body_points.first().copied().unwrap_or_else(Vec3::zeros);
    for _ in 0..CAMERA_TRIES {
        let pitch = uniform(rng, ranges.pitch);
        let roll = uniform(rng, ranges.roll);
        let yaw = uniform(rng, ranges.yaw);
        let d = uniform(rng, ranges.distance);
        let o = ranges.image_offset;
        let du = uniform(rng, [-o, o]) * intr.width as f64;
        let dv = uniform(rng, [-o, o]) * intr.height as f64;
        let root_cam = Vec3::new(du * d / intr.focal, dv * d / intr.focal, d);
        let rot = rotation_from_euler(pitch, roll, yaw);
        let camera_center = root - rot.transpose() * root_cam;
        let ext = Extrinsics {
            pitch,
            roll,
            yaw,
            camera_center,
        };
        let t_b = rot * camera_center;
        if body_points.iter().all(|x| (rot * x - t_b).z > MIN_CAMERA_DEPTH) {
            return Ok((ext, t_b));
        }
    }
    Err(Error::Infeasible(format!("no camera kept the body in view after {CAMERA_TRIES} tries")))
}

/// Draws a world-frame body: upright root at the origin, pose per the
/// configured source, Gaussian shape.
pub fn sample_body(rng: &mut impl Rng, spec: &BodyModelSpec, ranges: &SamplerRanges, pose_bank: &[BodyParams]) -> Result<BodyParams> {
    let nj = spec.joint_count;
    let mut params = match &ranges.pose_source {
        PoseSource::Zero => BodyParams::zeros(nj),
        PoseSource::RandomJitter { sigma, clamp } => {
            let mut p = BodyParams::zeros(nj);
            if *sigma > 0.0 {
                let normal = Normal::new(0.0, *sigma).expect("sigma is finite and non-negative");
                for j in 1..nj {
                    for c in 0..3 {
                        p.pose[j][c] = normal.sample(rng).clamp(-clamp, *clamp);
                    }
                }
            }
            p
        }
        PoseSource::File { path } => {
            if pose_bank.is_empty() {
                return Err(Error::InvalidArgument(format!("pose file {} has no poses", path.display())));
            }
            let p = pose_bank[rng.random_range(0..pose_bank.len())].clone();
            p.check_for(spec)?;
            p
        }
    };
    if ranges.shape_sigma > 0.0 {
        let normal = Normal::new(0.0, ranges.shape_sigma).expect("shape sigma is finite");
        params.shape = (0..NUM_BETAS).map(|_| normal.sample(rng)).collect();
    }
    Ok(params)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskInfo {
    pub seed: u64,
    pub ratio: f64,
    /// Masked block indices, row-major over the 16 x 16 block grid.
    pub blocks: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub schema: u32,
    pub id: String,
    /// `"toy"` or the path of the body spec file.
    pub body_spec: String,
    pub params_world: BodyParams,
    pub intrinsics: Intrinsics,
    pub extrinsics: Extrinsics,
    pub t_b: Vec3,
    pub joints_world: Vec<Vec3>,
    pub keypoints2d: Vec<[f64; 2]>,
    pub bbox: BBox,
    pub bbox_encoding: BBoxEncoding,
    /// Full-resolution depth, relative to the manifest directory.
    pub depth_path: String,
    /// 256 x 256 crop around the body, masked when `mask` is set.
    pub crop_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<MaskInfo>,
}

/// Number of blocks masked at `ratio`: `round(ratio * 256)`, ties to even.
pub fn mask_block_count(ratio: f64) -> usize {
    let blocks = (CROP_SIZE / MASK_BLOCK).pow(2) as f64;
    (ratio * blocks).round_ties_even() as usize
}

/// Fills `round(ratio * 256)` of the 16 x 16-pixel blocks of a 256 x 256
/// grid with `fill`, chosen uniformly without replacement from `seed`.
/// Returns the masked block indices in ascending order.
pub fn apply_block_mask(grid: &mut DepthMap, ratio: f64, seed: u64, fill: f64) -> Result<Vec<usize>> {
    if grid.width != CROP_SIZE || grid.height != CROP_SIZE {
        return Err(Error::Dimension(format!(
            "block mask expects a {CROP_SIZE}x{CROP_SIZE} grid, got {}x{}",
            grid.width, grid.height
        )));
    }
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidArgument(format!("mask ratio must lie in [0, 1], got {ratio}")));
    }
    let per_row = (CROP_SIZE / MASK_BLOCK) as usize;
    let count = mask_block_count(ratio);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = rand::seq::index::sample(&mut rng, per_row * per_row, count).into_vec();
    blocks.sort_unstable();
    for &b in &blocks {
        let (bx, by) = ((b % per_row) as u32, (b / per_row) as u32);
        for y in by * MASK_BLOCK..(by + 1) * MASK_BLOCK {
            for x in bx * MASK_BLOCK..(bx + 1) * MASK_BLOCK {
                grid.set(x, y, fill);
            }
        }
    }
    Ok(blocks)
}

/// Square box around the projected vertices, enlarged by 20 percent.
fn crop_box(mesh: &Mesh, intr: &Intrinsics, ext: &Extrinsics, t_b: &Vec3) -> Result<BBox> {
    let px = project(&mesh.vertices, intr, ext, t_b)?;
    let b = bbox_from_projection(&px, intr)?;
    Ok(BBox { size: b.size * 1.2, ..b })
}

pub struct RecordRequest<'a> {
    pub spec: &'a BodyModelSpec,
    pub spec_name: &'a str,
    pub id: String,
    pub params_world: BodyParams,
    pub extrinsics: Extrinsics,
    pub intrinsics: Intrinsics,
    /// `(seed, ratio)` for block masking of the crop.
    pub mask: Option<(u64, f64)>,
}

/// Poses the body, projects its joints, renders depth and writes the depth
/// files into `out_dir`.
pub fn generate_record(req: RecordRequest<'_>, out_dir: &Path) -> Result<SceneRecord> {
    let mesh = lbs_forward(req.spec, &req.params_world)?;
    let ext = req.extrinsics;
    let intr = req.intrinsics;
    let t_b = ext.t_b();
    let keypoints2d = project(&mesh.joints, &intr, &ext, &t_b)?;
    let bbox = bbox_from_projection(&keypoints2d, &intr)?;
    let bbox_encoding = bbox.encode(&intr)?;

    let depth = render_depth(&mesh, &intr, &ext, &t_b)?;
    let mut crop = crop_resize_depth(&depth, &crop_box(&mesh, &intr, &ext, &t_b)?, CROP_SIZE)?;
    let mask = match req.mask {
        Some((seed, ratio)) if ratio > 0.0 => Some(MaskInfo {
            seed,
            ratio,
            blocks: apply_block_mask(&mut crop, ratio, seed, f64::INFINITY)?,
        }),
        _ => None,
    };
    let depth_path = format!("{}_depth.pfm", req.id);
    let crop_path = format!("{}_crop.pfm", req.id);
    write_pfm(&depth, out_dir.join(&depth_path))?;
    write_pfm(&crop, out_dir.join(&crop_path))?;

    Ok(SceneRecord {
        schema: SCHEMA_VERSION,
        id: req.id,
        body_spec: req.spec_name.to_string(),
        params_world: req.params_world,
        intrinsics: intr,
        extrinsics: ext,
        t_b,
        joints_world: mesh.joints,
        keypoints2d,
        bbox,
        bbox_encoding,
        depth_path,
        crop_path,
        mask,
    })
}

impl SceneRecord {
    /// Rotation folding roll and yaw into the body, `M = R_roll R_yaw`.
    fn nuisance_rotation(&self) -> Mat3 {
        rotation_from_euler(0.0, self.extrinsics.roll, self.extrinsics.yaw)
    }

    /// Ground truth in the reference frame of the pitch-only pipeline: the
    /// camera-centred frame that differs from the camera frame by pitch
    /// alone, `X_ref = R_roll R_yaw (X_w - C)`. Equal to the gravity-aligned
    /// world (shifted to the camera centre) when roll and yaw are zero.
    pub fn reference_params(&self, spec: &BodyModelSpec) -> BodyParams {
        let m = self.nuisance_rotation();
        let pivot = spec.rest_root(&self.params_world.shape);
        let mut p = self.params_world.clone();
        p.translation -= self.extrinsics.camera_center;
        rotate_params(&p, &m, &pivot)
    }

    /// The body as a camera-frame reconstruction would report it.
    pub fn camera_params(&self, spec: &BodyModelSpec) -> BodyParams {
        let pivot = spec.rest_root(&self.params_world.shape);
        let full = rotation_from_euler(self.extrinsics.pitch, self.extrinsics.roll, self.extrinsics.yaw);
        let mut p = self.params_world.clone();
        p.translation -= self.extrinsics.camera_center;
        rotate_params(&p, &full, &pivot)
    }

    /// Reference-frame body placed with its root at the camera-frame root
    /// position, as an unrotated camera would see it.
    pub fn unrotated_camera_mesh(&self, spec: &BodyModelSpec) -> Result<Mesh> {
        let reference = lbs_forward(spec, &self.reference_params(spec))?;
        let cam_root = self.extrinsics.rotation() * self.joints_world[0] - self.t_b;
        let shift = cam_root - reference.joints[0];
        Ok(Mesh {
            vertices: reference.vertices.iter().map(|v| v + shift).collect(),
            faces: reference.faces,
            joints: reference.joints.iter().map(|j| j + shift).collect(),
        })
    }
}

/// Independent re-check of a record's internal consistency: reprojection,
/// box containment and descriptor agreement.
pub fn validate_record(record: &SceneRecord, spec: &BodyModelSpec) -> Result<()> {
    let mesh = lbs_forward(spec, &record.params_world)?;
    for (k, (a, b)) in mesh.joints.iter().zip(&record.joints_world).enumerate() {
        if (a - b).norm() > 1e-9 {
            return Err(Error::Invariant(format!("record {}: joint {k} disagrees with the body model", record.id)));
        }
    }
    let rot = record.extrinsics.rotation();
    for (k, (x, kp)) in record.joints_world.iter().zip(&record.keypoints2d).enumerate() {
        let p = rot * x - record.t_b;
        if !(p.z > 0.0) {
            return Err(Error::BehindCamera { index: k, z: p.z });
        }
        let f = record.intrinsics.focal;
        let u = f * p.x / p.z + record.intrinsics.width as f64 / 2.0;
        let v = f * p.y / p.z + record.intrinsics.height as f64 / 2.0;
        if (u - kp[0]).abs() > 1e-6 || (v - kp[1]).abs() > 1e-6 {
            return Err(Error::Invariant(format!("record {}: keypoint {k} does not reproject", record.id)));
        }
        if !record.bbox.contains(kp, &record.intrinsics, 1e-9) {
            return Err(Error::Invariant(format!("record {}: keypoint {k} outside bbox", record.id)));
        }
    }
    if record.keypoints2d.len() != record.joints_world.len() {
        return Err(Error::Invariant(format!("record {}: keypoint count mismatch", record.id)));
    }
    let diag = (record.intrinsics.width as f64).hypot(record.intrinsics.height as f64);
    let e = &record.bbox_encoding;
    if e.cx_norm != record.bbox.cx / diag || e.cy_norm != record.bbox.cy / diag || e.b_norm != record.bbox.size / diag {
        return Err(Error::Invariant(format!("record {}: bbox encoding inconsistent", record.id)));
    }
    Ok(())
}

pub struct DatasetConfig<'a> {
    pub spec: &'a BodyModelSpec,
    pub spec_name: &'a str,
    pub count: usize,
    pub ranges: SamplerRanges,
    pub intrinsics: Intrinsics,
    pub master_seed: u64,
    pub mask_ratio: f64,
    pub pose_bank: Vec<BodyParams>,
}

pub const MANIFEST_NAME: &str = "manifest.jsonl";

pub fn record_rng(master_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index as u64);
    rng
}

/// Generates `count` records into `out_dir` and writes the manifest.
pub fn generate_dataset(cfg: &DatasetConfig<'_>, out_dir: &Path) -> Result<(PathBuf, Vec<SceneRecord>)> {
    cfg.ranges.validate()?;
    if !(0.0..=1.0).contains(&cfg.mask_ratio) {
        return Err(Error::InvalidArgument(format!("mask ratio must lie in [0, 1], got {}", cfg.mask_ratio)));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let records: Vec<SceneRecord> = (0..cfg.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = record_rng(cfg.master_seed, i);
            let params = sample_body(&mut rng, cfg.spec, &cfg.ranges, &cfg.pose_bank)?;
            let mesh = lbs_forward(cfg.spec, &params)?;
            let mut points = mesh.joints.clone();
            points.extend_from_slice(&mesh.vertices);
            let (extrinsics, _) = sample_camera(&mut rng, &cfg.ranges, &cfg.intrinsics, &points)?;
            let mask_seed: u64 = rng.random();
            generate_record(
                RecordRequest {
                    spec: cfg.spec,
                    spec_name: cfg.spec_name,
                    id: format!("{i:06}"),
                    params_world: params,
                    extrinsics,
                    intrinsics: cfg.intrinsics,
                    mask: Some((mask_seed, cfg.mask_ratio)),
                },
                out_dir,
            )
        })
        .collect::<Result<_>>()?;
    let manifest = out_dir.join(MANIFEST_NAME);
    write_records(&records, &manifest)?;
    Ok((manifest, records))
}

pub fn write_records(records: &[SceneRecord], path: &Path) -> Result<()> {
    write_jsonl(records, path)
}

pub fn write_jsonl<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::schema(path.display().to_string(), e))?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

/// A record line that failed to parse.
#[derive(Debug)]
pub struct LineError {
    pub line: usize,
    pub error: Error,
}

/// Reads a JSON-lines file; each line parses independently, blank lines are
/// skipped, and failures carry their 1-based line number.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<std::result::Result<T, LineError>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| LineError {
                line: i + 1,
                error: Error::schema(format!("{} line {}", path.display(), i + 1), e),
            })
        })
        .collect())
}

pub fn read_records(path: &Path) -> Result<Vec<std::result::Result<SceneRecord, LineError>>> {
    let rows = read_jsonl::<SceneRecord>(path)?;
    Ok(rows
        .into_iter()
        .map(|r| {
            r.and_then(|rec| {
                if rec.schema != SCHEMA_VERSION {
                    Err(LineError {
                        line: 0,
                        error: Error::schema(rec.id.clone(), format!("unsupported schema {}", rec.schema)),
                    })
                } else {
                    Ok(rec)
                }
            })
        })
        .collect())
}

/// Reads a manifest and fails on the first malformed line.
pub fn read_records_strict(path: &Path) -> Result<Vec<SceneRecord>> {
    read_records(path)?
        .into_iter()
        .map(|r| r.map_err(|e| e.error))
        .collect()
}

/// Loads a depth map referenced by a record, resolving it against the
/// manifest directory.
pub fn record_depth(record: &SceneRecord, manifest_dir: &Path) -> Result<DepthMap> {
    crate::rasterizer::read_pfm(manifest_dir.join(&record.depth_path))
}
