#![allow(dead_code)]

use std::sync::Arc;

use camworld::body_model::{lbs_forward, toy_body_spec, BodyModelSpec, BodyParams, Mesh, NUM_BETAS};
use camworld::camera::{pitch_matrix, project_with_rotation, Intrinsics};
use camworld::losses::{grad_loss_total, loss_total, LossWeights, PitchCamera, Targets};
use camworld::rasterizer::DepthMap;
use camworld::rotation::{exp_so3, log_so3, Vec3};
use camworld::transform::rotate_params;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_unit(rng: &mut impl Rng) -> Vec3 {
    let v: [f64; 3] = UnitSphere.sample(rng);
    Vec3::from(v)
}

/// Upright body with a random heading, jittered joints and random shape.
pub fn random_world_body(rng: &mut impl Rng, nj: usize) -> BodyParams {
    let n = Normal::<f64>::new(0.0, 0.2).unwrap();
    let s = Normal::new(0.0, 0.5).unwrap();
    let mut pose = vec![Vec3::zeros(); nj];
    pose[0] = Vec3::new(0.0, rng.random_range(-3.0..3.0), 0.0);
    for p in pose.iter_mut().skip(1) {
        *p = Vec3::from_fn(|_, _| n.sample(rng).clamp(-0.8, 0.8));
    }
    let shape = (0..NUM_BETAS).map(|_| s.sample(rng)).collect();
    BodyParams::new(pose, shape, Vec3::zeros())
}

pub struct FitScenario {
    pub spec: BodyModelSpec,
    pub truth_world: BodyParams,
    pub truth_mesh: Mesh,
    pub camera: PitchCamera,
    pub init_cam: BodyParams,
    pub targets: Targets,
}

/// Body seen by a pitched camera 4 m away; the camera-frame initial guess
/// has its root rotated by `root_deg` about a random axis and per-joint
/// Gaussian noise of `pose_sigma` rad.
pub fn fit_scenario(seed: u64, root_deg: f64, pose_sigma: f64) -> FitScenario {
    let spec = toy_body_spec();
    let mut r = rng(seed);
    let truth_world = random_world_body(&mut r, spec.joint_count);
    let pitch = r.random_range(-30f64..30.0).to_radians();
    let camera = PitchCamera {
        intrinsics: Intrinsics::new(1000.0, 640, 480).unwrap(),
        pitch,
        t_b: Vec3::new(0.0, 0.0, -4.0),
    };
    let truth_mesh = lbs_forward(&spec, &truth_world).unwrap();
    let rot = pitch_matrix(pitch);
    let keypoints2d = project_with_rotation(&truth_mesh.joints, &camera.intrinsics, &rot, &camera.t_b).unwrap();

    let mut init_cam = rotate_params(&truth_world, &rot, &spec.rest_root(&truth_world.shape));
    init_cam.translation -= camera.t_b;
    let axis = random_unit(&mut r);
    init_cam.pose[0] = log_so3(&(exp_so3(&(axis * root_deg.to_radians())) * exp_so3(&init_cam.pose[0])));
    if pose_sigma > 0.0 {
        let n = Normal::new(0.0, pose_sigma).unwrap();
        for p in init_cam.pose.iter_mut().skip(1) {
            *p += Vec3::from_fn(|_, _| n.sample(&mut r));
        }
    }
    let targets = Targets {
        keypoints2d,
        joints3d: Some(truth_mesh.joints.clone()),
        vertices: Some(truth_mesh.vertices.clone()),
        pose: Some(truth_world.pose.clone()),
    };
    FitScenario {
        spec,
        truth_world,
        truth_mesh,
        camera,
        init_cam,
        targets,
    }
}

/// `n` random triangles in front of a camera at the origin.
pub fn random_scene(seed: u64, n: usize) -> Mesh {
    let mut r = rng(seed);
    let mut vertices = vec![];
    let mut faces = vec![];
    for t in 0..n {
        let centre = Vec3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(2.0..6.0));
        for _ in 0..3 {
            vertices.push(centre + Vec3::new(r.random_range(-0.8..0.8), r.random_range(-0.8..0.8), r.random_range(-0.5..0.5)));
        }
        faces.push([3 * t, 3 * t + 1, 3 * t + 2]);
    }
    Mesh {
        vertices,
        faces: Arc::new(faces),
        joints: vec![],
    }
}

/// Covered pixels must coincide exactly; depths within `tol`.
pub fn agree(a: &DepthMap, b: &DepthMap, tol: f64) -> Result<usize, String> {
    let mut covered = 0;
    for (i, (x, y)) in a.depth.iter().zip(&b.depth).enumerate() {
        if x.is_finite() != y.is_finite() {
            return Err(format!("coverage differs at pixel {i}: {x} vs {y}"));
        }
        if x.is_finite() {
            covered += 1;
            if (x - y).abs() >= tol {
                return Err(format!("depth differs at pixel {i}: {x} vs {y}"));
            }
        }
    }
    Ok(covered)
}

pub struct GradCase {
    pub spec: BodyModelSpec,
    pub params: BodyParams,
    pub targets: Targets,
    pub camera: PitchCamera,
    pub weights: LossWeights,
}

/// Random body, camera and weights with targets taken from a second random
/// body, so that every term and every gradient component is active.
pub fn grad_case(seed: u64) -> GradCase {
    let spec = toy_body_spec();
    let mut r = rng(seed);
    let params = random_world_body(&mut r, 8);
    let other = random_world_body(&mut r, 8);
    let other_mesh = lbs_forward(&spec, &other).unwrap();
    let camera = PitchCamera {
        intrinsics: Intrinsics::new(r.random_range(400.0..1200.0), 640, 480).unwrap(),
        pitch: r.random_range(-0.6..0.6),
        t_b: Vec3::new(r.random_range(-0.2..0.2), r.random_range(-0.2..0.2), -r.random_range(3.0..6.0)),
    };
    let keypoints2d =
        project_with_rotation(&other_mesh.joints, &camera.intrinsics, &pitch_matrix(camera.pitch), &camera.t_b).unwrap();
    let weights = LossWeights {
        l2d: r.random_range(0.5..2.0),
        l3d: r.random_range(0.5..2.0),
        lv: r.random_range(0.5..2.0),
        lmix: r.random_range(0.5..2.0),
        lroot: r.random_range(0.5..4.0),
        ..Default::default()
    };
    GradCase {
        spec,
        params,
        targets: Targets {
            keypoints2d,
            joints3d: Some(other_mesh.joints),
            vertices: Some(other_mesh.vertices),
            pose: Some(other.pose),
        },
        camera,
        weights,
    }
}

/// Largest componentwise relative error of the analytic gradient against
/// central differences with step `h`.
pub fn worst_relative_error(c: &GradCase, h: f64) -> f64 {
    let (_, g) = grad_loss_total(&c.spec, &c.params, &c.targets, &c.camera, &c.weights).unwrap();
    let x = c.params.to_vector();
    let f = |x: &[f64]| {
        let p = BodyParams::from_vector(8, x).unwrap();
        loss_total(&c.spec, &p, &c.targets, &c.camera, &c.weights).unwrap().total
    };
    let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        let fd = (f(&xp) - f(&xm)) / (2.0 * h);
        let denom = fd.abs().max(g[i].abs()).max(1e-6 * scale);
        worst = worst.max((g[i] - fd).abs() / denom);
    }
    worst
}
