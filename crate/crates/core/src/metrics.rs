//! Evaluation metrics. Inputs are in meters, results in millimeters.
//!
//! World-frame metrics (`w_mpjpe`, `wpve`) subtract each body's own root
//! joint position before comparing, and apply no rotation.

use nalgebra::{Matrix3, SVD};
use serde::{Deserialize, Serialize};

use crate::body_model::Mesh;
use crate::error::{Error, Result};
use crate::rotation::{Mat3, Vec3};

const MM: f64 = 1000.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        SimilarityTransform {
            scale: 1.0,
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p * self.scale + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        SimilarityTransform {
            scale: 1.0 / self.scale,
            rotation: rt,
            translation: -(rt * self.translation) / self.scale,
        }
    }

    pub fn compose(&self, other: &Self) -> Self {
        SimilarityTransform {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.apply(&other.translation),
        }
    }
}

fn centroid(points: &[Vec3]) -> Vec3 {
    points.iter().sum::<Vec3>() / points.len() as f64
}

/// Least-squares similarity transform taking `source` onto `target`, with
/// reflections excluded.
pub fn procrustes_align(source: &[Vec3], target: &[Vec3]) -> Result<SimilarityTransform> {
    if source.len() != target.len() {
        return Err(Error::Dimension(format!(
            "procrustes: {} source vs {} target points",
            source.len(),
            target.len()
        )));
    }
    if source.len() < 3 {
        return Err(Error::Degenerate(format!("procrustes needs at least 3 points, got {}", source.len())));
    }
    let n = source.len() as f64;
    let mu_s = centroid(source);
    let mu_t = centroid(target);

    let mut cov = Matrix3::zeros();
    let mut src_cov = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, t) in source.iter().zip(target) {
        let a = s - mu_s;
        let b = t - mu_t;
        cov += b * a.transpose();
        src_cov += a * a.transpose();
        var_s += a.norm_squared();
    }
    cov /= n;
    var_s /= n;

    // Rank of the centred source must be at least 2 for a unique rotation.
    let sv = src_cov.symmetric_eigenvalues();
    let mut ev: Vec<f64> = sv.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if !(ev[0] > 0.0) || ev[1] <= 1e-12 * ev[0] {
        return Err(Error::Degenerate("procrustes source points are coincident or collinear".into()));
    }

    let svd = SVD::new(cov, true, true);
    let u = svd.u.ok_or_else(|| Error::Degenerate("procrustes SVD failed".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Degenerate("procrustes SVD failed".into()))?;
    let mut d = Vec3::new(1.0, 1.0, 1.0);
    if (u * v_t).determinant() < 0.0 {
        d[svd.singular_values.imin()] = -1.0;
    }
    let rotation = u * Mat3::from_diagonal(&d) * v_t;
    let scale = svd.singular_values.component_mul(&d).sum() / var_s;
    let translation = mu_t - rotation * mu_s * scale;
    Ok(SimilarityTransform {
        scale,
        rotation,
        translation,
    })
}

fn mean_distance_mm(pred: &[Vec3], gt: &[Vec3]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::Dimension(format!("{} predicted vs {} ground-truth points", pred.len(), gt.len())));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("metric over an empty point set".into()));
    }
    Ok(MM * pred.iter().zip(gt).map(|(a, b)| (a - b).norm()).sum::<f64>() / pred.len() as f64)
}

/// Mean per-joint position error.
pub fn mpjpe(pred: &[Vec3], gt: &[Vec3]) -> Result<f64> {
    mean_distance_mm(pred, gt)
}

/// Mean per-vertex error.
pub fn pve(pred_verts: &[Vec3], gt_verts: &[Vec3]) -> Result<f64> {
    mean_distance_mm(pred_verts, gt_verts)
}

/// MPJPE after similarity alignment of the prediction onto the ground truth.
pub fn pa_mpjpe(pred: &[Vec3], gt: &[Vec3]) -> Result<f64> {
    let t = procrustes_align(pred, gt)?;
    let aligned: Vec<Vec3> = pred.iter().map(|p| t.apply(p)).collect();
    mean_distance_mm(&aligned, gt)
}

fn relative_to(points: &[Vec3], root: &Vec3) -> Vec<Vec3> {
    points.iter().map(|p| p - root).collect()
}

/// World-frame MPJPE with each skeleton expressed relative to its joint 0.
pub fn w_mpjpe(pred_world: &[Vec3], gt_world: &[Vec3]) -> Result<f64> {
    let (Some(pr), Some(gr)) = (pred_world.first(), gt_world.first()) else {
        return Err(Error::InvalidArgument("metric over an empty point set".into()));
    };
    mean_distance_mm(&relative_to(pred_world, pr), &relative_to(gt_world, gr))
}

/// World-frame vertex error, vertices taken relative to each mesh's root joint.
pub fn wpve(pred_world: &Mesh, gt_world: &Mesh) -> Result<f64> {
    let (Some(pr), Some(gr)) = (pred_world.joints.first(), gt_world.joints.first()) else {
        return Err(Error::InvalidArgument("meshes without joints".into()));
    };
    mean_distance_mm(&relative_to(&pred_world.vertices, pr), &relative_to(&gt_world.vertices, gr))
}

/// Dataset-level summary written by the `metrics` command.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub wmpjpe_mm: f64,
    pub pampjpe_mm: f64,
    pub wpve_mm: f64,
    pub n_records: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RecordMetrics {
    pub wmpjpe_mm: f64,
    pub pampjpe_mm: f64,
    pub wpve_mm: f64,
}

pub fn evaluate(pred_world: &Mesh, gt_world: &Mesh) -> Result<RecordMetrics> {
    Ok(RecordMetrics {
        wmpjpe_mm: w_mpjpe(&pred_world.joints, &gt_world.joints)?,
        pampjpe_mm: pa_mpjpe(&pred_world.joints, &gt_world.joints)?,
        wpve_mm: wpve(pred_world, gt_world)?,
    })
}

pub fn summarize(rows: &[RecordMetrics]) -> MetricSummary {
    if rows.is_empty() {
        return MetricSummary::default();
    }
    let n = rows.len() as f64;
    MetricSummary {
        wmpjpe_mm: rows.iter().map(|r| r.wmpjpe_mm).sum::<f64>() / n,
        pampjpe_mm: rows.iter().map(|r| r.pampjpe_mm).sum::<f64>() / n,
        wpve_mm: rows.iter().map(|r| r.wpve_mm).sum::<f64>() / n,
        n_records: rows.len(),
    }
}
