//! Full-perspective pinhole camera with a centred principal point.
//!
//! Conventions: the rotation maps world coordinates into the camera frame,
//! `p_c = R X_w - t_b`; the optical axis is `+z` and image `y` grows
//! downwards. Positive pitch tilts the camera down, so a point straight
//! ahead of an untilted camera shows up above the principal point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rotation::{Mat3, Vec3};

/// Near-plane threshold for projection.
pub const PROJECT_EPS: f64 = 1e-6;

/// Diagonal field of view for which the focal length equals the image
/// diagonal, `2 atan(1/2)` (about 53.13 degrees).
pub fn default_fov_diag() -> f64 {
    2.0 * 0.5f64.atan()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub focal: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Extrinsics {
    pub pitch: f64,
    pub roll: f64,
    pub yaw: f64,
    /// Camera centre in world coordinates, meters.
    pub camera_center: Vec3,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBoxEncoding {
    pub cx_norm: f64,
    pub cy_norm: f64,
    pub b_norm: f64,
}

/// Square box: centre relative to the image centre, and side length, pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub size: f64,
}

impl Intrinsics {
    pub fn new(focal: f64, width: u32, height: u32) -> Result<Self> {
        if !(focal > 0.0) || !focal.is_finite() {
            return Err(Error::InvalidArgument(format!("focal length must be positive, got {focal}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!("image size {width}x{height} is empty")));
        }
        Ok(Intrinsics { focal, width, height })
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    pub fn diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }

    pub fn matrix(&self) -> Mat3 {
        let (cx, cy) = self.principal_point();
        Mat3::new(self.focal, 0.0, cx, 0.0, self.focal, cy, 0.0, 0.0, 1.0)
    }

    /// Pixel coordinates of a camera-frame point.
    pub fn project_camera_point(&self, p: &Vec3) -> [f64; 2] {
        let (cx, cy) = self.principal_point();
        [self.focal * p.x / p.z + cx, self.focal * p.y / p.z + cy]
    }

    /// Viewing ray through a pixel, scaled to unit depth.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        let (cx, cy) = self.principal_point();
        Vec3::new((u - cx) / self.focal, (v - cy) / self.focal, 1.0)
    }
}

impl Extrinsics {
    pub fn pitch_only(pitch: f64) -> Self {
        Extrinsics {
            pitch,
            ..Default::default()
        }
    }

    pub fn rotation(&self) -> Mat3 {
        rotation_from_euler(self.pitch, self.roll, self.yaw)
    }

    /// `t_b = R C`, so that `R X - t_b = R (X - C)`.
    pub fn t_b(&self) -> Vec3 {
        self.rotation() * self.camera_center
    }
}

/// Intrinsics whose focal length gives the requested diagonal field of view.
pub fn intrinsics_from_fov(width: u32, height: u32, fov_diag: f64) -> Result<Intrinsics> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!("image size {width}x{height} is empty")));
    }
    if !(fov_diag > 0.0 && fov_diag < std::f64::consts::PI) {
        return Err(Error::InvalidArgument(format!(
            "diagonal field of view must lie in (0, pi), got {fov_diag}"
        )));
    }
    let diag = (width as f64).hypot(height as f64);
    Intrinsics::new(diag / (2.0 * (fov_diag / 2.0).tan()), width, height)
}

/// Rotation about the camera `x` axis.
pub fn pitch_matrix(pitch: f64) -> Mat3 {
    let (s, c) = pitch.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// Rotation about the camera `z` axis.
pub fn roll_matrix(roll: f64) -> Mat3 {
    let (s, c) = roll.sin_cos();
    Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Rotation about the camera `y` axis.
pub fn yaw_matrix(yaw: f64) -> Mat3 {
    let (s, c) = yaw.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// World-to-camera rotation `R = R_pitch R_roll R_yaw`.
pub fn rotation_from_euler(pitch: f64, roll: f64, yaw: f64) -> Mat3 {
    if roll == 0.0 && yaw == 0.0 {
        return pitch_matrix(pitch);
    }
    pitch_matrix(pitch) * roll_matrix(roll) * yaw_matrix(yaw)
}

/// Projects world points through `K [R | -t_b]`.
///
/// Fails on the first point whose camera depth is at most [`PROJECT_EPS`].
pub fn project(points: &[Vec3], intr: &Intrinsics, ext: &Extrinsics, t_b: &Vec3) -> Result<Vec<[f64; 2]>> {
    project_with_rotation(points, intr, &ext.rotation(), t_b)
}

pub fn project_with_rotation(points: &[Vec3], intr: &Intrinsics, rot: &Mat3, t_b: &Vec3) -> Result<Vec<[f64; 2]>> {
    points
        .iter()
        .enumerate()
        .map(|(index, x)| {
            let p = rot * x - t_b;
            if !(p.z > PROJECT_EPS) {
                return Err(Error::BehindCamera { index, z: p.z });
            }
            Ok(intr.project_camera_point(&p))
        })
        .collect()
}

/// Normalised box descriptor `(c_x / f, c_y / f, b / f)` with `f` the image
/// diagonal.
pub fn bbox_encode(cx: f64, cy: f64, b: f64, width: f64, height: f64) -> Result<BBoxEncoding> {
    if !(b > 0.0) {
        return Err(Error::InvalidArgument(format!("box size must be positive, got {b}")));
    }
    if !(width > 0.0 && height > 0.0) {
        return Err(Error::InvalidArgument(format!("image size {width}x{height} is empty")));
    }
    let f = width.hypot(height);
    Ok(BBoxEncoding {
        cx_norm: cx / f,
        cy_norm: cy / f,
        b_norm: b / f,
    })
}

/// Smallest square (side at least one pixel) containing all points, with its
/// centre expressed relative to the image centre.
pub fn bbox_from_projection(points: &[[f64; 2]], intr: &Intrinsics) -> Result<BBox> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("cannot box an empty point set".into()));
    }
    let (mut lo_x, mut lo_y) = (f64::INFINITY, f64::INFINITY);
    let (mut hi_x, mut hi_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        lo_x = lo_x.min(p[0]);
        hi_x = hi_x.max(p[0]);
        lo_y = lo_y.min(p[1]);
        hi_y = hi_y.max(p[1]);
    }
    let (pcx, pcy) = intr.principal_point();
    Ok(BBox {
        cx: 0.5 * (lo_x + hi_x) - pcx,
        cy: 0.5 * (lo_y + hi_y) - pcy,
        size: (hi_x - lo_x).max(hi_y - lo_y).max(1.0),
    })
}

impl BBox {
    pub fn contains(&self, p: &[f64; 2], intr: &Intrinsics, tol: f64) -> bool {
        let (pcx, pcy) = intr.principal_point();
        let half = self.size / 2.0 + tol;
        (p[0] - pcx - self.cx).abs() <= half && (p[1] - pcy - self.cy).abs() <= half
    }

    pub fn encode(&self, intr: &Intrinsics) -> Result<BBoxEncoding> {
        bbox_encode(self.cx, self.cy, self.size, intr.width as f64, intr.height as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn focal_from_fov_examples() {
        let diag = 1920f64.hypot(1080.0);
        let i = intrinsics_from_fov(1920, 1080, default_fov_diag()).unwrap();
        assert!((i.focal - diag).abs() < 1e-9);
        assert!((i.focal - 2202.907).abs() < 1e-3);

        let i = intrinsics_from_fov(1920, 1080, 55f64.to_radians()).unwrap();
        assert!((i.focal - diag / (2.0 * 27.5f64.to_radians().tan())).abs() < 1e-9);
        assert!((i.focal - 2115.8).abs() < 0.1);

        let i = intrinsics_from_fov(1000, 1000, PI / 2.0).unwrap();
        assert!((i.focal - 1000f64.hypot(1000.0) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn focal_from_fov_rejects_bad_input() {
        assert!(intrinsics_from_fov(0, 10, 1.0).is_err());
        assert!(intrinsics_from_fov(10, 10, 0.0).is_err());
        assert!(intrinsics_from_fov(10, 10, PI).is_err());
    }

    #[test]
    fn euler_examples() {
        assert_eq!(rotation_from_euler(0.0, 0.0, 0.0), Mat3::identity());
        let r = rotation_from_euler(PI / 2.0, 0.0, 0.0);
        let expect = Mat3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert!((r - expect).abs().max() < 1e-15);
        let p = rotation_from_euler(30f64.to_radians(), 0.0, 0.0) * Vec3::new(0.0, 0.0, 1.0);
        assert!((p - Vec3::new(0.0, -0.5, 0.75f64.sqrt())).norm() < 1e-15);
    }

    #[test]
    fn projection_examples() {
        let intr = Intrinsics::new(1000.0, 1920, 1080).unwrap();
        let ext = Extrinsics::default();
        let px = project(&[Vec3::new(0.0, 0.0, 5.0), Vec3::new(1.0, 0.0, 5.0)], &intr, &ext, &Vec3::zeros()).unwrap();
        assert_eq!(px, vec![[960.0, 540.0], [1160.0, 540.0]]);
        let err = project(&[Vec3::new(0.0, 0.0, -1.0)], &intr, &ext, &Vec3::zeros()).unwrap_err();
        assert!(matches!(err, Error::BehindCamera { index: 0, .. }));
    }

    #[test]
    fn bbox_examples() {
        let e = bbox_encode(0.0, 0.0, 200.0, 1920.0, 1080.0).unwrap();
        assert_eq!((e.cx_norm, e.cy_norm), (0.0, 0.0));
        let e = bbox_encode(100.0, -50.0, 300.0, 1920.0, 1080.0).unwrap();
        assert!((e.cx_norm - 0.04540).abs() < 1e-5);
        assert!((e.cy_norm + 0.02270).abs() < 1e-5);
        assert!((e.b_norm - 0.13618).abs() < 1e-5);
        assert!(bbox_encode(0.0, 0.0, 0.0, 1920.0, 1080.0).is_err());

        let intr = Intrinsics::new(1000.0, 1920, 1080).unwrap();
        let b = bbox_from_projection(&[[960.0, 540.0]], &intr).unwrap();
        assert_eq!(b, BBox { cx: 0.0, cy: 0.0, size: 1.0 });
        let b = bbox_from_projection(&[[0.0, 0.0], [10.0, 20.0]], &intr).unwrap();
        assert_eq!(b, BBox { cx: -955.0, cy: -530.0, size: 20.0 });
        assert!(bbox_from_projection(&[], &intr).is_err());
    }

    proptest! {
        #[test]
        fn euler_is_orthonormal(p in -PI..PI, r in -PI..PI, y in -PI..PI) {
            let m = rotation_from_euler(p, r, y);
            prop_assert!((m.transpose() * m - Mat3::identity()).abs().max() < 1e-12);
            prop_assert!((m.determinant() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn positive_pitch_lifts_points_ahead(deg in 0.01f64..45.0, d in 0.1f64..100.0) {
            let intr = Intrinsics::new(800.0, 640, 480).unwrap();
            let px = project(&[Vec3::new(0.0, 0.0, d)], &intr, &Extrinsics::pitch_only(deg.to_radians()), &Vec3::zeros()).unwrap();
            prop_assert!(px[0][1] < 240.0);
        }

        #[test]
        fn focal_scales_offsets(x in -2.0f64..2.0, y in -2.0f64..2.0, z in 0.5f64..10.0, pitch in -0.5f64..0.5) {
            let a = Intrinsics::new(700.0, 640, 480).unwrap();
            let b = Intrinsics::new(1400.0, 640, 480).unwrap();
            let ext = Extrinsics::pitch_only(pitch);
            let pt = [Vec3::new(x, y, z + 3.0)];
            let pa = project(&pt, &a, &ext, &Vec3::zeros()).unwrap()[0];
            let pb = project(&pt, &b, &ext, &Vec3::zeros()).unwrap()[0];
            prop_assert!(((pb[0] - 320.0) - 2.0 * (pa[0] - 320.0)).abs() < 1e-9);
            prop_assert!(((pb[1] - 240.0) - 2.0 * (pa[1] - 240.0)).abs() < 1e-9);
        }

        #[test]
        fn bbox_encoding_scale_invariant(cx in -500.0f64..500.0, cy in -500.0f64..500.0, b in 1.0f64..800.0, s in 0.1f64..10.0) {
            let e1 = bbox_encode(cx, cy, b, 1920.0, 1080.0).unwrap();
            let e2 = bbox_encode(cx * s, cy * s, b * s, 1920.0 * s, 1080.0 * s).unwrap();
            prop_assert!((e1.cx_norm - e2.cx_norm).abs() < 1e-14);
            prop_assert!((e1.cy_norm - e2.cy_norm).abs() < 1e-14);
            prop_assert!((e1.b_norm - e2.b_norm).abs() < 1e-14);
        }

        #[test]
        fn bbox_contains_its_points(pts in proptest::collection::vec((-100.0f64..2000.0, -100.0f64..1200.0), 1..40)) {
            let intr = Intrinsics::new(1000.0, 1920, 1080).unwrap();
            let pts: Vec<[f64; 2]> = pts.into_iter().map(|(x, y)| [x, y]).collect();
            let b = bbox_from_projection(&pts, &intr).unwrap();
            for p in &pts {
                prop_assert!(b.contains(p, &intr, 1e-9));
            }
        }
    }
}
