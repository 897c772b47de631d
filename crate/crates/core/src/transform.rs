//! Moving bodies between the camera frame and the gravity-aligned world
//! frame once the camera pitch is known.
//!
//! Parameter-level transforms rotate the root orientation and the
//! translation; vertex-level transforms rotate every point about the origin.
//! The two agree exactly when the model's rest root sits at the origin (true
//! for the toy model). For other models use the `*_about` variants with the
//! rest root as pivot.

use serde::{Deserialize, Serialize};

use crate::body_model::{BodyParams, Mesh};
use crate::camera::pitch_matrix;
use crate::rotation::{exp_so3, log_so3, Mat3, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    CameraToWorld,
    WorldToCamera,
}

impl Direction {
    /// Rotation applied to camera/world points for this direction.
    pub fn rotation(self, pitch: f64) -> Mat3 {
        match self {
            Direction::CameraToWorld => pitch_matrix(pitch).transpose(),
            Direction::WorldToCamera => pitch_matrix(pitch),
        }
    }

    pub fn inverse(self) -> Self {
        match self {
            Direction::CameraToWorld => Direction::WorldToCamera,
            Direction::WorldToCamera => Direction::CameraToWorld,
        }
    }
}

/// Applies the rigid rotation `rot` (about the origin) to the body described
/// by `params`, whose global orientation pivots at `pivot`.
pub fn rotate_params(params: &BodyParams, rot: &Mat3, pivot: &Vec3) -> BodyParams {
    let mut out = params.clone();
    out.pose[0] = log_so3(&(rot * exp_so3(&params.pose[0])));
    out.translation = rot * (pivot + params.translation) - pivot;
    out
}

/// `theta_root <- log(R^T exp(theta_root))`, `t <- R^T t`; body pose and
/// shape are untouched.
pub fn camera_to_world(params_cam: &BodyParams, pitch: f64) -> BodyParams {
    rotate_params(params_cam, &Direction::CameraToWorld.rotation(pitch), &Vec3::zeros())
}

pub fn world_to_camera(params_world: &BodyParams, pitch: f64) -> BodyParams {
    rotate_params(params_world, &Direction::WorldToCamera.rotation(pitch), &Vec3::zeros())
}

pub fn camera_to_world_about(params_cam: &BodyParams, pitch: f64, pivot: &Vec3) -> BodyParams {
    rotate_params(params_cam, &Direction::CameraToWorld.rotation(pitch), pivot)
}

pub fn world_to_camera_about(params_world: &BodyParams, pitch: f64, pivot: &Vec3) -> BodyParams {
    rotate_params(params_world, &Direction::WorldToCamera.rotation(pitch), pivot)
}

pub fn transform_params(params: &BodyParams, pitch: f64, direction: Direction) -> BodyParams {
    match direction {
        Direction::CameraToWorld => camera_to_world(params, pitch),
        Direction::WorldToCamera => world_to_camera(params, pitch),
    }
}

/// Rotates all vertices and joints about the origin.
pub fn transform_mesh(mesh: &Mesh, pitch: f64, direction: Direction) -> Mesh {
    rotate_mesh(mesh, &direction.rotation(pitch))
}

pub fn rotate_mesh(mesh: &Mesh, rot: &Mat3) -> Mesh {
    Mesh {
        vertices: mesh.vertices.iter().map(|v| rot * v).collect(),
        faces: mesh.faces.clone(),
        joints: mesh.joints.iter().map(|j| rot * j).collect(),
    }
}

/// Geodesic angle between the root orientation and the upright identity.
pub fn tilt_from_upright(params: &BodyParams) -> f64 {
    log_so3(&exp_so3(&params.pose[0])).norm()
}
