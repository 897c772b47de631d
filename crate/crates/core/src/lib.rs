//! Camera-to-world transformation of parametric body meshes.
//!
//! Bodies are posed by linear blend skinning, seen through a pinhole camera
//! whose pitch is estimated from keypoints or depth, and lifted back into a
//! gravity-aligned world frame where they are refined and scored.

pub mod body_model;
pub mod camera;
pub mod cli;
pub mod datagen;
pub mod error;
pub mod fitting;
pub mod losses;
pub mod metrics;
pub mod rasterizer;
pub mod rotation;
pub mod transform;

pub use body_model::{lbs_forward, toy_body_spec, BodyModelSpec, BodyParams, Mesh};
pub use camera::{Extrinsics, Intrinsics};
pub use error::{Error, Result};
pub use rotation::{Mat3, Vec3};
