//! Optimisation-based estimators: camera pitch from keypoints or depth, and
//! world-frame refinement of body parameters given the pitch.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::body_model::{BodyModelSpec, BodyParams, Mesh};
use crate::camera::{pitch_matrix, Extrinsics, Intrinsics};
use crate::error::{Error, Result};
use crate::losses::{grad_and_curvature, loss_2d, loss_total, LossBreakdown, LossWeights, PitchCamera, Targets};
use crate::rasterizer::{render_depth, DepthMap};
use crate::rotation::{Mat3, Vec3};
use crate::transform::rotate_params;

const CURVATURE_FLOOR: f64 = 1e-9;
const MIN_DAMPING: f64 = 1e-9;
const MAX_DAMPING: f64 = 1e9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iters: usize,
    /// Stop once the gradient norm falls below this.
    pub grad_tol: f64,
    /// First trial step of the line search along the scaled gradient.
    pub initial_step: f64,
    pub min_step: f64,
    pub armijo_c: f64,
    pub shrink: f64,
    /// Initial Levenberg damping of the Gauss-Newton preconditioner.
    pub damping: f64,
    pub pitch_min_deg: f64,
    pub pitch_max_deg: f64,
    pub pitch_step_deg: f64,
    /// Golden-section bracket width at which pitch refinement stops, radians.
    pub pitch_tol: f64,
    pub weights: LossWeights,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iters: 500,
            grad_tol: 1e-8,
            initial_step: 1.0,
            min_step: 1e-18,
            armijo_c: 1e-4,
            shrink: 0.5,
            damping: 1e-3,
            pitch_min_deg: -60.0,
            pitch_max_deg: 60.0,
            pitch_step_deg: 0.5,
            pitch_tol: 1e-4,
            weights: LossWeights::default(),
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.max_iters < 1 {
            return bad("max_iters must be at least 1");
        }
        if !(self.grad_tol > 0.0 && self.pitch_tol > 0.0 && self.min_step > 0.0 && self.initial_step > 0.0) {
            return bad("tolerances and step sizes must be positive");
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0 && self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("armijo_c and shrink must lie in (0, 1)");
        }
        if !(self.damping >= 0.0) {
            return bad("damping must be non-negative");
        }
        if !(self.pitch_step_deg > 0.0) {
            return bad("pitch grid step must be positive");
        }
        if !(self.pitch_min_deg <= self.pitch_max_deg) || !self.pitch_min_deg.is_finite() || !self.pitch_max_deg.is_finite() {
            return bad("pitch grid range is not ordered");
        }
        self.weights.validate()
    }

    /// Pitch candidates in radians, ascending.
    pub fn pitch_grid(&self) -> Vec<f64> {
        let n = ((self.pitch_max_deg - self.pitch_min_deg) / self.pitch_step_deg + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| (self.pitch_min_deg + i as f64 * self.pitch_step_deg).to_radians())
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub breakdown: LossBreakdown,
    pub converged: bool,
    pub status: String,
    /// Loss after every accepted step, starting with the initial loss.
    pub history: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Pitch from keypoints
// ---------------------------------------------------------------------------

/// Translation minimising the squared distances of `R X_i - t` to the
/// viewing rays through the keypoints.
fn ray_translation(rot: &Mat3, joints: &[Vec3], rays: &[Vec3]) -> Option<Vec3> {
    let mut lhs = Mat3::zeros();
    let mut rhs = Vec3::zeros();
    for (x, r) in joints.iter().zip(rays) {
        let a = Mat3::identity() - r * r.transpose();
        lhs += a;
        rhs += a * (rot * x);
    }
    lhs.try_inverse().map(|inv| inv * rhs)
}

struct PitchScore {
    loss: f64,
    t_b: Vec3,
}

fn score_pitch(pitch: f64, joints: &[Vec3], keypoints: &[[f64; 2]], rays: &[Vec3], intr: &Intrinsics) -> Option<PitchScore> {
    let rot = pitch_matrix(pitch);
    let t_b = ray_translation(&rot, joints, rays)?;
    let cam = PitchCamera {
        intrinsics: *intr,
        pitch,
        t_b,
    };
    let loss = loss_2d(joints, keypoints, &cam).ok()?;
    loss.is_finite().then_some(PitchScore { loss, t_b })
}

/// Lexicographic order on (loss, |pitch|).
fn better(a: (f64, f64), b: (f64, f64)) -> bool {
    a.1 < b.1 || (a.1 == b.1 && a.0.abs() < b.0.abs())
}

/// Restricted-rotation resectioning: finds the camera pitch (and `t_b`)
/// that best explains `keypoints2d` as projections of known world joints.
///
/// A global grid over the configured pitch range is followed by a
/// golden-section refinement around the best candidate.
pub fn estimate_pitch(
    gt_joints_world: &[Vec3],
    keypoints2d: &[[f64; 2]],
    intr: &Intrinsics,
    cfg: &FitConfig,
) -> Result<(f64, Vec3, FitReport)> {
    cfg.validate()?;
    if gt_joints_world.len() != keypoints2d.len() {
        return Err(Error::Dimension(format!(
            "{} joints vs {} keypoints",
            gt_joints_world.len(),
            keypoints2d.len()
        )));
    }
    if gt_joints_world.len() < 4 {
        return Err(Error::Degenerate(format!(
            "pitch estimation needs at least 4 joints, got {}",
            gt_joints_world.len()
        )));
    }
    let rays: Vec<Vec3> = keypoints2d.iter().map(|k| intr.ray(k[0], k[1]).normalize()).collect();
    let eval = |p: f64| score_pitch(p, gt_joints_world, keypoints2d, &rays, intr);

    let grid = cfg.pitch_grid();
    let scores: Vec<Option<PitchScore>> = grid.par_iter().map(|&p| eval(p)).collect();
    let mut best: Option<(f64, f64)> = None;
    for (&p, s) in grid.iter().zip(&scores) {
        if let Some(s) = s {
            if best.map_or(true, |b| better((p, s.loss), b)) {
                best = Some((p, s.loss));
            }
        }
    }
    let Some((grid_pitch, grid_loss)) = best else {
        return Err(Error::Infeasible("every pitch candidate puts a joint behind the camera".into()));
    };

    let step = cfg.pitch_step_deg.to_radians();
    let lo_bound = cfg.pitch_min_deg.to_radians();
    let hi_bound = cfg.pitch_max_deg.to_radians();
    let f = |p: f64| eval(p).map_or(f64::INFINITY, |s| s.loss);
    let (mut a, mut b) = ((grid_pitch - step).max(lo_bound), (grid_pitch + step).min(hi_bound));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut golden_iters = 0;
    while b - a > cfg.pitch_tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        golden_iters += 1;
    }
    let refined = 0.5 * (a + b);
    let (pitch, loss) = match eval(refined) {
        Some(s) if s.loss <= grid_loss => (refined, s.loss),
        _ => (grid_pitch, grid_loss),
    };
    let t_b = eval(pitch).expect("selected pitch was feasible").t_b;
    let report = FitReport {
        initial_loss: grid_loss,
        final_loss: loss,
        iterations: grid.len() + golden_iters,
        evaluations: grid.len() + golden_iters + 3,
        breakdown: LossBreakdown {
            l2d: loss,
            total: loss,
            ..Default::default()
        },
        converged: true,
        status: "ok".into(),
        history: vec![grid_loss, loss],
    };
    Ok((pitch, t_b, report))
}

// ---------------------------------------------------------------------------
// Pitch from depth
// ---------------------------------------------------------------------------

/// Mean absolute depth difference over pixels covered in both maps.
pub fn depth_discrepancy(a: &DepthMap, b: &DepthMap) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (x, y) in a.depth.iter().zip(&b.depth) {
        if x.is_finite() && y.is_finite() {
            sum += (x - y).abs();
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Mesh rotated by the pitch `R(pitch)` about its root joint.
pub fn pitch_about_root(mesh: &Mesh, pitch: f64) -> Mesh {
    let rot = pitch_matrix(pitch);
    let pivot = mesh.joints.first().copied().unwrap_or_else(Vec3::zeros);
    let f = |v: &Vec3| rot * (v - pivot) + pivot;
    Mesh {
        vertices: mesh.vertices.iter().map(f).collect(),
        faces: mesh.faces.clone(),
        joints: mesh.joints.iter().map(f).collect(),
    }
}

/// Grid search over pitch by depth matching.
///
/// `mesh_cam` is the body as an unrotated camera would see it: world
/// geometry placed with its root at the observed camera-frame root. Each
/// candidate pitch rotates it about the root, renders depth with the same
/// intrinsics, and is scored by [`depth_discrepancy`] against `observed`.
pub fn estimate_pitch_depth(
    observed: &DepthMap,
    mesh_cam: &Mesh,
    intr: &Intrinsics,
    cfg: &FitConfig,
) -> Result<(f64, FitReport)> {
    cfg.validate()?;
    if observed.width != intr.width || observed.height != intr.height {
        return Err(Error::Dimension(format!(
            "observed depth is {}x{}, camera is {}x{}",
            observed.width, observed.height, intr.width, intr.height
        )));
    }
    if observed.covered_count() == 0 {
        return Err(Error::InvalidArgument("observed depth map has no covered pixels".into()));
    }
    if mesh_cam.joints.is_empty() {
        return Err(Error::InvalidArgument("mesh has no root joint".into()));
    }
    let grid = cfg.pitch_grid();
    let scores: Vec<Result<Option<f64>>> = grid
        .par_iter()
        .map(|&p| {
            let candidate = render_depth(&pitch_about_root(mesh_cam, p), intr, &Extrinsics::default(), &Vec3::zeros())?;
            Ok(depth_discrepancy(observed, &candidate))
        })
        .collect();
    let mut best: Option<(f64, f64)> = None;
    for (&p, s) in grid.iter().zip(scores) {
        if let Some(s) = s? {
            if best.map_or(true, |b| better((p, s), b)) {
                best = Some((p, s));
            }
        }
    }
    let (pitch, loss) =
        best.ok_or_else(|| Error::Infeasible("no pitch candidate overlaps the observed depth".into()))?;
    let report = FitReport {
        initial_loss: loss,
        final_loss: loss,
        iterations: grid.len(),
        evaluations: grid.len(),
        breakdown: LossBreakdown {
            total: loss,
            ..Default::default()
        },
        converged: true,
        status: "ok".into(),
        history: vec![loss],
    };
    Ok((pitch, report))
}

// ---------------------------------------------------------------------------
// Mesh adjustment
// ---------------------------------------------------------------------------

/// Camera-frame parameters expressed in the world frame of a pitch-only
/// camera `p_c = R(pitch) X_w - t_b`.
pub fn lift_to_world(spec: &BodyModelSpec, params_cam: &BodyParams, pitch: f64, t_b: &Vec3) -> BodyParams {
    let rt = pitch_matrix(pitch).transpose();
    let pivot = spec.rest_root(&params_cam.shape);
    let mut out = rotate_params(params_cam, &rt, &pivot);
    out.translation += rt * t_b;
    out
}

/// `-(H + mu diag(H) + mu eps I)^-1 g`, falling back to `-g` when the
/// damped matrix is not positive definite.
fn damped_direction(h: &DMatrix<f64>, g: &[f64], mu: f64) -> Vec<f64> {
    let n = g.len();
    let scale = (0..n).map(|i| h[(i, i)]).fold(0.0, f64::max).max(1.0);
    let mut a = h.clone();
    for i in 0..n {
        a[(i, i)] += mu * (h[(i, i)] + CURVATURE_FLOOR * scale);
    }
    let rhs = DVector::from_iterator(n, g.iter().map(|v| -v));
    match a.cholesky() {
        Some(c) => c.solve(&rhs).as_slice().to_vec(),
        None => rhs.as_slice().to_vec(),
    }
}

/// Refines world-frame body parameters by gradient descent on the total
/// loss, starting from the camera-frame estimate lifted with the given pitch.
///
/// The gradient is preconditioned by the damped Gauss-Newton matrix
/// (Levenberg style), and step lengths come from Armijo backtracking, so
/// every accepted iterate lowers the loss.
pub fn adjust_mesh(
    init_cam: &BodyParams,
    camera: &PitchCamera,
    targets: &Targets,
    spec: &BodyModelSpec,
    cfg: &FitConfig,
) -> Result<(BodyParams, FitReport)> {
    cfg.validate()?;
    init_cam.check_for(spec)?;
    let w = &cfg.weights;
    if !(w.l2d > 0.0) || targets.keypoints2d.is_empty() {
        return Err(Error::InvalidArgument("mesh adjustment needs the 2D keypoint term".into()));
    }
    let nj = spec.joint_count;
    let start = lift_to_world(spec, init_cam, camera.pitch, &camera.t_b);
    let loss_at = |x: &[f64]| -> Option<LossBreakdown> {
        let p = BodyParams::from_vector(nj, x).ok()?;
        loss_total(spec, &p, targets, camera, w).ok()
    };
    let derivs = |x: &[f64]| -> Result<(LossBreakdown, Vec<f64>, DMatrix<f64>)> {
        grad_and_curvature(spec, &BodyParams::from_vector(nj, x)?, targets, camera, w)
    };

    let mut x = start.to_vector();
    let (mut fb, mut g, mut h) = derivs(&x)?;
    let mut report = FitReport {
        initial_loss: fb.total,
        history: vec![fb.total],
        evaluations: 1,
        status: "max_iters".into(),
        ..Default::default()
    };
    let mut damping = cfg.damping;

    for _ in 0..cfg.max_iters {
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn < cfg.grad_tol {
            report.converged = true;
            report.status = "gradient_tolerance".into();
            break;
        }
        let dir = damped_direction(&h, &g, damping);
        let slope: f64 = g.iter().zip(&dir).map(|(a, b)| a * b).sum();
        let mut alpha = cfg.initial_step;
        let mut accepted = None;
        while alpha >= cfg.min_step {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + alpha * d).collect();
            report.evaluations += 1;
            if let Some(b) = loss_at(&trial) {
                if b.total <= fb.total + cfg.armijo_c * alpha * slope {
                    accepted = Some(trial);
                    break;
                }
            }
            alpha *= cfg.shrink;
        }
        let Some(x_new) = accepted else {
            report.converged = gn < 1e3 * cfg.grad_tol;
            report.status = "line_search_stalled".into();
            break;
        };
        damping = if alpha == cfg.initial_step {
            (damping * 0.3).max(MIN_DAMPING)
        } else {
            (damping * 4.0).min(MAX_DAMPING)
        };
        let (fb_new, g_new, h_new) = derivs(&x_new)?;
        report.evaluations += 1;
        report.iterations += 1;
        report.history.push(fb_new.total);
        x = x_new;
        (fb, g, h) = (fb_new, g_new, h_new);
    }
    report.final_loss = fb.total;
    report.breakdown = fb;
    let params = BodyParams::from_vector(nj, &x)?;
    Ok((params, report))
}
