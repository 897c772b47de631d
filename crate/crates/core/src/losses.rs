//! Training objectives as scalar functions of body parameters.
//!
//! Every point-wise L2 term is reduced by the mean over points of the squared
//! Euclidean distance. The hybrid pose term sums squared axis-angle
//! differences: `lroot * |root_hat - root|^2 + |pose_hat - pose|^2`, where
//! the second norm runs over all joints, root included.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::body_model::{lbs_forward, lbs_with_jacobian, BodyModelSpec, BodyParams, Mesh};
use crate::camera::{pitch_matrix, Intrinsics, PROJECT_EPS};
use crate::error::{Error, Result};
use crate::rotation::{Mat3, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    /// 2D keypoints, per squared pixel.
    pub l2d: f64,
    pub l3d: f64,
    pub lv: f64,
    pub lmix: f64,
    /// Extra root-orientation weight inside the hybrid pose term.
    pub lroot: f64,
    pub lalpha: f64,
    pub lgamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            l2d: 1.0,
            l3d: 1.0,
            lv: 1.0,
            lmix: 1.0,
            lroot: 2.0,
            lalpha: 1.0,
            lgamma: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("l2d", self.l2d),
            ("l3d", self.l3d),
            ("lv", self.lv),
            ("lmix", self.lmix),
            ("lroot", self.lroot),
            ("lalpha", self.lalpha),
            ("lgamma", self.lgamma),
        ];
        for (name, w) in all {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidArgument(format!("loss weight {name} must be a finite value >= 0, got {w}")));
            }
        }
        Ok(())
    }

    /// Only the 2D keypoint term active.
    pub fn keypoints_only() -> Self {
        LossWeights {
            l3d: 0.0,
            lv: 0.0,
            lmix: 0.0,
            ..Default::default()
        }
    }
}

/// Pitch-only camera: `p_c = R(pitch) X - t_b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PitchCamera {
    pub intrinsics: Intrinsics,
    pub pitch: f64,
    pub t_b: Vec3,
}

impl PitchCamera {
    pub fn rotation(&self) -> Mat3 {
        pitch_matrix(self.pitch)
    }
}

/// Supervision for one body. Absent targets switch their term off.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub keypoints2d: Vec<[f64; 2]>,
    #[serde(default)]
    pub joints3d: Option<Vec<Vec3>>,
    #[serde(default)]
    pub vertices: Option<Vec<Vec3>>,
    #[serde(default)]
    pub pose: Option<Vec<Vec3>>,
}

/// Unweighted term values and the weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l2d: f64,
    pub l3d: f64,
    pub lv: f64,
    pub lmix: f64,
    pub total: f64,
}

pub fn loss_cam(pred: (f64, f64), gt: (f64, f64), w: &LossWeights) -> f64 {
    let da = pred.0 - gt.0;
    let dg = pred.1 - gt.1;
    w.lalpha * da * da + w.lgamma * dg * dg
}

fn check_len<T, U>(a: &[T], b: &[U], what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("{what}: {} predicted vs {} target entries", a.len(), b.len())));
    }
    Ok(())
}

pub fn mean_squared_distance(pred: &[Vec3], gt: &[Vec3]) -> Result<f64> {
    check_len(pred, gt, "point sets")?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    Ok(pred.iter().zip(gt).map(|(a, b)| (a - b).norm_squared()).sum::<f64>() / pred.len() as f64)
}

pub fn loss_3d(pred_joints: &[Vec3], gt_joints: &[Vec3]) -> Result<f64> {
    mean_squared_distance(pred_joints, gt_joints)
}

pub fn loss_vertex(pred_verts: &[Vec3], gt_verts: &[Vec3]) -> Result<f64> {
    mean_squared_distance(pred_verts, gt_verts)
}

/// Mean squared pixel error between projected joints and target keypoints.
pub fn loss_2d(pred_joints_world: &[Vec3], gt_keypoints: &[[f64; 2]], camera: &PitchCamera) -> Result<f64> {
    Ok(loss_2d_with_grad(pred_joints_world, gt_keypoints, camera, false)?.0)
}

/// Loss and, optionally, its gradient with respect to each world joint.
fn loss_2d_with_grad(
    joints: &[Vec3],
    keypoints: &[[f64; 2]],
    camera: &PitchCamera,
    want_grad: bool,
) -> Result<(f64, Vec<Vec3>)> {
    check_len(joints, keypoints, "2D keypoints")?;
    if joints.is_empty() {
        return Ok((0.0, vec![]));
    }
    let rot = camera.rotation();
    let f = camera.intrinsics.focal;
    let n = joints.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(if want_grad { joints.len() } else { 0 });
    for (index, (x, kp)) in joints.iter().zip(keypoints).enumerate() {
        let p = rot * x - camera.t_b;
        if !(p.z > PROJECT_EPS) {
            return Err(Error::BehindCamera { index, z: p.z });
        }
        let uv = camera.intrinsics.project_camera_point(&p);
        let ru = uv[0] - kp[0];
        let rv = uv[1] - kp[1];
        loss += ru * ru + rv * rv;
        if want_grad {
            let iz = 1.0 / p.z;
            let dp = Vec3::new(f * iz * ru, f * iz * rv, -f * iz * iz * (p.x * ru + p.y * rv));
            grad.push(rot.transpose() * dp * (2.0 / n));
        }
    }
    Ok((loss / n, grad))
}

/// `lroot * |root_hat - root|^2 + sum_j |theta_hat_j - theta_j|^2`.
pub fn loss_mix(pred_pose: &[Vec3], gt_pose: &[Vec3], lroot: f64) -> Result<f64> {
    check_len(pred_pose, gt_pose, "pose")?;
    if pred_pose.is_empty() {
        return Ok(0.0);
    }
    let all: f64 = pred_pose.iter().zip(gt_pose).map(|(a, b)| (a - b).norm_squared()).sum();
    Ok(lroot * (pred_pose[0] - gt_pose[0]).norm_squared() + all)
}

/// Evaluates every active term on an already-posed mesh.
pub fn loss_total_on_mesh(
    mesh: &Mesh,
    params: &BodyParams,
    targets: &Targets,
    camera: &PitchCamera,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    let mut out = LossBreakdown::default();
    if w.l2d > 0.0 {
        out.l2d = loss_2d(&mesh.joints, &targets.keypoints2d, camera)?;
    }
    if let (true, Some(gt)) = (w.l3d > 0.0, targets.joints3d.as_ref()) {
        out.l3d = loss_3d(&mesh.joints, gt)?;
    }
    if let (true, Some(gt)) = (w.lv > 0.0, targets.vertices.as_ref()) {
        out.lv = loss_vertex(&mesh.vertices, gt)?;
    }
    if let (true, Some(gt)) = (w.lmix > 0.0, targets.pose.as_ref()) {
        out.lmix = loss_mix(&params.pose, gt, w.lroot)?;
    }
    out.total = w.l2d * out.l2d + w.l3d * out.l3d + w.lv * out.lv + w.lmix * out.lmix;
    if !out.total.is_finite() {
        return Err(Error::NonFinite(format!("loss total is {}", out.total)));
    }
    Ok(out)
}

/// Weighted sum of the 2D, 3D, vertex and hybrid pose terms.
pub fn loss_total(
    spec: &BodyModelSpec,
    params: &BodyParams,
    targets: &Targets,
    camera: &PitchCamera,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    let mesh = lbs_forward(spec, params)?;
    loss_total_on_mesh(&mesh, params, targets, camera, w)
}

/// Gradient of [`loss_total`] with respect to the flat parameter vector
/// (pose, shape, translation; see [`BodyParams::to_vector`]).
pub fn grad_loss_total(
    spec: &BodyModelSpec,
    params: &BodyParams,
    targets: &Targets,
    camera: &PitchCamera,
    w: &LossWeights,
) -> Result<(LossBreakdown, Vec<f64>)> {
    let (b, g, _) = loss_derivatives(spec, params, targets, camera, w, false)?;
    Ok((b, g))
}

/// Gradient plus the Gauss-Newton approximation of the Hessian (every term
/// is a sum of squares).
pub fn grad_and_curvature(
    spec: &BodyModelSpec,
    params: &BodyParams,
    targets: &Targets,
    camera: &PitchCamera,
    w: &LossWeights,
) -> Result<(LossBreakdown, Vec<f64>, DMatrix<f64>)> {
    let (b, g, h) = loss_derivatives(spec, params, targets, camera, w, true)?;
    Ok((b, g, h.expect("curvature requested")))
}

fn loss_derivatives(
    spec: &BodyModelSpec,
    params: &BodyParams,
    targets: &Targets,
    camera: &PitchCamera,
    w: &LossWeights,
    want_curvature: bool,
) -> Result<(LossBreakdown, Vec<f64>, Option<DMatrix<f64>>)> {
    let use_v = w.lv > 0.0 && targets.vertices.is_some();
    let (mesh, jac) = lbs_with_jacobian(spec, params, use_v)?;
    let np = jac.joints.ncols();
    let mut hess = want_curvature.then(|| DMatrix::<f64>::zeros(np, np));
    let breakdown = loss_total_on_mesh(&mesh, params, targets, camera, w)?;

    let nj = mesh.joints.len();
    let mut g_joints = DVector::zeros(3 * nj);
    if w.l2d > 0.0 {
        let (_, g) = loss_2d_with_grad(&mesh.joints, &targets.keypoints2d, camera, true)?;
        for (k, gk) in g.iter().enumerate() {
            for c in 0..3 {
                g_joints[3 * k + c] += w.l2d * gk[c];
            }
        }
        if let Some(hess) = hess.as_mut() {
            let rot = camera.rotation();
            let f = camera.intrinsics.focal;
            for (k, x) in mesh.joints.iter().enumerate() {
                let p = rot * x - camera.t_b;
                let iz = 1.0 / p.z;
                let dpi = nalgebra::Matrix2x3::new(f * iz, 0.0, -f * p.x * iz * iz, 0.0, f * iz, -f * p.y * iz * iz) * rot;
                let rows = dpi * jac.joints.fixed_rows::<3>(3 * k);
                hess.gemm_tr(2.0 * w.l2d / nj as f64, &rows, &rows, 1.0);
            }
        }
    }
    if let (true, Some(gt)) = (w.l3d > 0.0, targets.joints3d.as_ref()) {
        let s = 2.0 * w.l3d / nj as f64;
        if let Some(hess) = hess.as_mut() {
            hess.gemm_tr(s, &jac.joints, &jac.joints, 1.0);
        }
        for (k, (a, b)) in mesh.joints.iter().zip(gt).enumerate() {
            let d = (a - b) * s;
            for c in 0..3 {
                g_joints[3 * k + c] += d[c];
            }
        }
    }
    let mut grad = jac.joints.transpose() * g_joints;

    if let (true, Some(gt), Some(jv)) = (use_v, targets.vertices.as_ref(), jac.vertices.as_ref()) {
        let nv = mesh.vertices.len();
        let s = 2.0 * w.lv / nv as f64;
        if let Some(hess) = hess.as_mut() {
            hess.gemm_tr(s, jv, jv, 1.0);
        }
        let mut g_verts = DVector::zeros(3 * nv);
        for (i, (a, b)) in mesh.vertices.iter().zip(gt).enumerate() {
            let d = (a - b) * s;
            for c in 0..3 {
                g_verts[3 * i + c] = d[c];
            }
        }
        grad += jv.transpose() * g_verts;
    }
    if let (true, Some(gt)) = (w.lmix > 0.0, targets.pose.as_ref()) {
        for (j, (a, b)) in params.pose.iter().zip(gt).enumerate() {
            let scale = if j == 0 { 2.0 * (1.0 + w.lroot) } else { 2.0 };
            let d = (a - b) * scale;
            for c in 0..3 {
                grad[3 * j + c] += w.lmix * d[c];
                if let Some(hess) = hess.as_mut() {
                    hess[(3 * j + c, 3 * j + c)] += w.lmix * scale;
                }
            }
        }
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("loss gradient".into()));
    }
    Ok((breakdown, grad.as_slice().to_vec(), hess))
}
