//! Parametric body model driven by linear blend skinning.
//!
//! A [`BodyModelSpec`] holds the template mesh, kinematic tree, skinning
//! weights, shape blend shapes and joint regressor. [`lbs_forward`] maps
//! pose/shape/translation parameters to a posed [`Mesh`]:
//!
//! 1. shaped rest mesh `x = T + sum_m beta_m * S_m`
//! 2. rest joints `J = regressor * x`
//! 3. global joint transforms along the kinematic chain
//! 4. skinning `v_i = sum_k w_ik (Q_k (x_i - J_k) + P_k) + t`
//!
//! Pose-dependent corrective blend shapes are not applied. The file format
//! keeps an optional `pose_blendshapes` slot so that full exports still load.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rotation::{exp_so3, left_jacobian, normalize_axis_angle, Mat3, Vec3};

/// Number of shape coefficients.
pub const NUM_BETAS: usize = 10;

const WEIGHT_TOL: f64 = 1e-6;

pub type Face = [usize; 3];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyModelSpec {
    pub joint_count: usize,
    pub template_vertices: Vec<[f64; 3]>,
    pub faces: Arc<Vec<Face>>,
    /// `J x N`, row `k` produces joint `k` from the shaped rest mesh.
    pub joint_regressor: Vec<Vec<f64>>,
    /// Parent index per joint, `-1` for the root.
    pub parents: Vec<i64>,
    /// `N x J`
    pub skinning_weights: Vec<Vec<f64>>,
    /// `NUM_BETAS` directions, each `N x 3`.
    pub shape_blendshapes: Vec<Vec<[f64; 3]>>,
    /// Reserved for pose-corrective blend shapes; ignored by [`lbs_forward`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose_blendshapes: Option<Vec<Vec<[f64; 3]>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    /// Axis-angle per joint; entry 0 is the root orientation.
    pub pose: Vec<Vec3>,
    pub shape: Vec<f64>,
    pub translation: Vec3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub faces: Arc<Vec<Face>>,
    pub joints: Vec<Vec3>,
}

impl BodyParams {
    /// Builds parameters, rewriting every axis-angle to magnitude `<= pi`.
    pub fn new(pose: Vec<Vec3>, shape: Vec<f64>, translation: Vec3) -> Self {
        let pose = pose.iter().map(normalize_axis_angle).collect();
        BodyParams {
            pose,
            shape,
            translation,
        }
    }

    pub fn zeros(joint_count: usize) -> Self {
        BodyParams {
            pose: vec![Vec3::zeros(); joint_count],
            shape: vec![0.0; NUM_BETAS],
            translation: Vec3::zeros(),
        }
    }

    pub fn root_orientation(&self) -> Vec3 {
        self.pose[0]
    }

    /// Length of the flat parameter vector: pose, shape, translation.
    pub fn dim(joint_count: usize) -> usize {
        3 * joint_count + NUM_BETAS + 3
    }

    pub fn to_vector(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(Self::dim(self.pose.len()));
        for p in &self.pose {
            out.extend_from_slice(p.as_slice());
        }
        out.extend_from_slice(&self.shape);
        out.extend_from_slice(self.translation.as_slice());
        out
    }

    pub fn from_vector(joint_count: usize, x: &[f64]) -> Result<Self> {
        if x.len() != Self::dim(joint_count) {
            return Err(Error::Dimension(format!(
                "parameter vector has {} entries, expected {}",
                x.len(),
                Self::dim(joint_count)
            )));
        }
        let pose = (0..joint_count)
            .map(|j| Vec3::new(x[3 * j], x[3 * j + 1], x[3 * j + 2]))
            .collect();
        let s = 3 * joint_count;
        let shape = x[s..s + NUM_BETAS].to_vec();
        let t = s + NUM_BETAS;
        Ok(BodyParams {
            pose,
            shape,
            translation: Vec3::new(x[t], x[t + 1], x[t + 2]),
        })
    }

    pub fn check_for(&self, spec: &BodyModelSpec) -> Result<()> {
        if self.pose.len() != spec.joint_count {
            return Err(Error::Dimension(format!(
                "pose has {} joints, model has {}",
                self.pose.len(),
                spec.joint_count
            )));
        }
        if self.shape.len() != NUM_BETAS {
            return Err(Error::Dimension(format!(
                "shape has {} coefficients, expected {NUM_BETAS}",
                self.shape.len()
            )));
        }
        let finite = self.pose.iter().all(|p| p.iter().all(|v| v.is_finite()))
            && self.shape.iter().all(|v| v.is_finite())
            && self.translation.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("body parameters".into()));
        }
        Ok(())
    }
}

impl BodyModelSpec {
    pub fn vertex_count(&self) -> usize {
        self.template_vertices.len()
    }

    /// Checks every structural invariant; the first violation is reported.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertex_count();
        let j = self.joint_count;
        if j == 0 {
            return Err(Error::Invariant("joint_count must be at least 1".into()));
        }
        if self.parents.len() != j {
            return Err(Error::Invariant(format!(
                "parents has {} entries, joint_count is {j}",
                self.parents.len()
            )));
        }
        for (k, &p) in self.parents.iter().enumerate() {
            if k == 0 {
                if p != -1 {
                    return Err(Error::Invariant(format!("joint 0 must be the root, parent is {p}")));
                }
            } else if p < 0 || p as usize >= k {
                return Err(Error::Invariant(format!(
                    "joint {k} has parent {p}; parents must precede children and only joint 0 is a root"
                )));
            }
        }
        if self.template_vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Invariant("template_vertices contains a non-finite value".into()));
        }
        if self.skinning_weights.len() != n {
            return Err(Error::Invariant(format!(
                "skinning_weights has {} rows, expected {n}",
                self.skinning_weights.len()
            )));
        }
        for (i, row) in self.skinning_weights.iter().enumerate() {
            if row.len() != j {
                return Err(Error::Invariant(format!(
                    "skinning_weights row {i} has {} entries, expected {j}",
                    row.len()
                )));
            }
            if row.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
                return Err(Error::Invariant(format!("skinning_weights row {i} has a negative entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > WEIGHT_TOL {
                return Err(Error::Invariant(format!("skinning_weights row {i} sums to {sum}, not 1")));
            }
        }
        if self.joint_regressor.len() != j {
            return Err(Error::Invariant(format!(
                "joint_regressor has {} rows, expected {j}",
                self.joint_regressor.len()
            )));
        }
        for (k, row) in self.joint_regressor.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Invariant(format!(
                    "joint_regressor row {k} has {} entries, expected {n}",
                    row.len()
                )));
            }
            let sum: f64 = row.iter().sum();
            if !sum.is_finite() || (sum - 1.0).abs() > WEIGHT_TOL {
                return Err(Error::Invariant(format!("joint_regressor row {k} sums to {sum}, not 1")));
            }
        }
        for (fi, face) in self.faces.iter().enumerate() {
            if face.iter().any(|&v| v >= n) {
                return Err(Error::Invariant(format!("face {fi} references a vertex >= {n}")));
            }
        }
        if self.shape_blendshapes.len() != NUM_BETAS {
            return Err(Error::Invariant(format!(
                "expected {NUM_BETAS} shape blend shapes, found {}",
                self.shape_blendshapes.len()
            )));
        }
        for (m, dir) in self.shape_blendshapes.iter().enumerate() {
            if dir.len() != n {
                return Err(Error::Invariant(format!(
                    "shape blend shape {m} has {} vertices, expected {n}",
                    dir.len()
                )));
            }
            if dir.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Invariant(format!("shape blend shape {m} is not finite")));
            }
        }
        Ok(())
    }

    /// Shaped rest-pose vertices.
    pub fn shaped_vertices(&self, shape: &[f64]) -> Vec<Vec3> {
        let mut out: Vec<Vec3> = self.template_vertices.iter().map(|v| Vec3::from(*v)).collect();
        for (beta, dir) in shape.iter().zip(&self.shape_blendshapes) {
            if *beta == 0.0 {
                continue;
            }
            for (v, d) in out.iter_mut().zip(dir) {
                *v += Vec3::from(*d) * *beta;
            }
        }
        out
    }

    pub fn regress(&self, vertices: &[Vec3]) -> Vec<Vec3> {
        self.joint_regressor
            .iter()
            .map(|row| {
                row.iter()
                    .zip(vertices)
                    .filter(|(w, _)| **w != 0.0)
                    .fold(Vec3::zeros(), |acc, (w, v)| acc + v * *w)
            })
            .collect()
    }

    /// Rest joints of the shaped mesh.
    pub fn rest_joints(&self, shape: &[f64]) -> Vec<Vec3> {
        self.regress(&self.shaped_vertices(shape))
    }

    /// Rest position of the root joint; the pivot of the global orientation.
    pub fn rest_root(&self, shape: &[f64]) -> Vec3 {
        let shaped = self.shaped_vertices(shape);
        self.joint_regressor[0]
            .iter()
            .zip(&shaped)
            .fold(Vec3::zeros(), |acc, (w, v)| acc + v * *w)
    }

    fn parent(&self, k: usize) -> Option<usize> {
        usize::try_from(self.parents[k]).ok()
    }

    /// `chain[k]` lists `k` and all its ancestors.
    fn ancestor_chains(&self) -> Vec<Vec<usize>> {
        (0..self.joint_count)
            .map(|k| {
                let mut chain = vec![k];
                let mut cur = k;
                while let Some(p) = self.parent(cur) {
                    chain.push(p);
                    cur = p;
                }
                chain
            })
            .collect()
    }
}

struct Posed {
    shaped: Vec<Vec3>,
    rest_joints: Vec<Vec3>,
    local_rot: Vec<Mat3>,
    global_rot: Vec<Mat3>,
    /// Posed joint positions before translation.
    global_pos: Vec<Vec3>,
}

fn pose_chain(spec: &BodyModelSpec, params: &BodyParams) -> Posed {
    let shaped = spec.shaped_vertices(&params.shape);
    let rest_joints = spec.regress(&shaped);
    let j = spec.joint_count;
    let local_rot: Vec<Mat3> = params.pose.iter().map(exp_so3).collect();
    let mut global_rot = Vec::with_capacity(j);
    let mut global_pos = Vec::with_capacity(j);
    for k in 0..j {
        match spec.parent(k) {
            None => {
                global_rot.push(local_rot[k]);
                global_pos.push(rest_joints[k]);
            }
            Some(p) => {
                let q: Mat3 = global_rot[p];
                global_rot.push(q * local_rot[k]);
                let pos = q * (rest_joints[k] - rest_joints[p]) + global_pos[p];
                global_pos.push(pos);
            }
        }
    }
    Posed {
        shaped,
        rest_joints,
        local_rot,
        global_rot,
        global_pos,
    }
}

fn skin_vertex(spec: &BodyModelSpec, posed: &Posed, i: usize) -> Vec3 {
    let x = posed.shaped[i];
    spec.skinning_weights[i]
        .iter()
        .enumerate()
        .filter(|(_, w)| **w != 0.0)
        .fold(Vec3::zeros(), |acc, (k, w)| {
            acc + (posed.global_rot[k] * (x - posed.rest_joints[k]) + posed.global_pos[k]) * *w
        })
}

/// Forward pass of the body model.
///
/// Vertices and joints are returned in the same frame, translation included,
/// so the root position is `joints[0]`.
pub fn lbs_forward(spec: &BodyModelSpec, params: &BodyParams) -> Result<Mesh> {
    params.check_for(spec)?;
    let posed = pose_chain(spec, params);
    let t = params.translation;
    let vertices = (0..spec.vertex_count())
        .map(|i| skin_vertex(spec, &posed, i) + t)
        .collect();
    let joints = posed.global_pos.iter().map(|p| p + t).collect();
    Ok(Mesh {
        vertices,
        faces: Arc::clone(&spec.faces),
        joints,
    })
}

/// Jacobians of posed joints (`3J x P`) and optionally vertices (`3N x P`)
/// with respect to the flat parameter vector of [`BodyParams::to_vector`].
#[derive(Clone, Debug)]
pub struct LbsJacobian {
    pub joints: DMatrix<f64>,
    pub vertices: Option<DMatrix<f64>>,
}

fn set_block(m: &mut DMatrix<f64>, row: usize, col: usize, v: &Vec3) {
    m[(3 * row, col)] = v.x;
    m[(3 * row + 1, col)] = v.y;
    m[(3 * row + 2, col)] = v.z;
}

/// Forward pass together with its analytic Jacobian, obtained by pushing
/// parameter perturbations down the kinematic tree.
pub fn lbs_with_jacobian(
    spec: &BodyModelSpec,
    params: &BodyParams,
    with_vertices: bool,
) -> Result<(Mesh, LbsJacobian)> {
    params.check_for(spec)?;
    let nj = spec.joint_count;
    let nv = spec.vertex_count();
    let dim = BodyParams::dim(nj);
    let shape_col = 3 * nj;
    let trans_col = shape_col + NUM_BETAS;

    let posed = pose_chain(spec, params);
    let chains = spec.ancestor_chains();
    let t = params.translation;

    // Angular velocity (world frame) of joint j's subtree per pose component.
    let omegas: Vec<[Vec3; 3]> = (0..nj)
        .map(|j| {
            let parent_rot = spec.parent(j).map_or_else(Mat3::identity, |p| posed.global_rot[p]);
            let jl = parent_rot * left_jacobian(&params.pose[j]);
            [jl.column(0).into_owned(), jl.column(1).into_owned(), jl.column(2).into_owned()]
        })
        .collect();
    debug_assert_eq!(posed.local_rot.len(), nj);

    let mut jj = DMatrix::zeros(3 * nj, dim);
    for k in 0..nj {
        for &j in &chains[k][1..] {
            let lever = posed.global_pos[k] - posed.global_pos[j];
            for c in 0..3 {
                set_block(&mut jj, k, 3 * j + c, &omegas[j][c].cross(&lever));
            }
        }
    }

    // Shape: rest-joint displacement per blend shape, pushed through the chain.
    let delta_joints: Vec<Vec<Vec3>> = spec
        .shape_blendshapes
        .iter()
        .map(|dir| {
            let d: Vec<Vec3> = dir.iter().map(|v| Vec3::from(*v)).collect();
            spec.regress(&d)
        })
        .collect();
    let mut d_pos_shape: Vec<Vec<Vec3>> = Vec::with_capacity(NUM_BETAS);
    for (m, dj) in delta_joints.iter().enumerate() {
        let mut dp = Vec::with_capacity(nj);
        for k in 0..nj {
            let v = match spec.parent(k) {
                None => dj[k],
                Some(p) => posed.global_rot[p] * (dj[k] - dj[p]) + dp[p],
            };
            dp.push(v);
            set_block(&mut jj, k, shape_col + m, &v);
        }
        d_pos_shape.push(dp);
    }

    for k in 0..nj {
        for c in 0..3 {
            jj[(3 * k + c, trans_col + c)] = 1.0;
        }
    }

    let mut vertices = Vec::with_capacity(nv);
    let mut jv = with_vertices.then(|| DMatrix::zeros(3 * nv, dim));
    let mut acc = vec![Vec3::zeros(); nj];
    for i in 0..nv {
        let x = posed.shaped[i];
        let weights = &spec.skinning_weights[i];
        let mut v = Vec3::zeros();
        acc.iter_mut().for_each(|a| *a = Vec3::zeros());
        for (k, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let u = posed.global_rot[k] * (x - posed.rest_joints[k]) + posed.global_pos[k];
            v += u * w;
            if jv.is_some() {
                for &j in &chains[k] {
                    acc[j] += (u - posed.global_pos[j]) * w;
                }
            }
        }
        if let Some(jv) = jv.as_mut() {
            for j in 0..nj {
                if acc[j] == Vec3::zeros() {
                    continue;
                }
                for c in 0..3 {
                    set_block(jv, i, 3 * j + c, &omegas[j][c].cross(&acc[j]));
                }
            }
            for m in 0..NUM_BETAS {
                let s = Vec3::from(spec.shape_blendshapes[m][i]);
                let mut d = Vec3::zeros();
                for (k, &w) in weights.iter().enumerate() {
                    if w != 0.0 {
                        d += (posed.global_rot[k] * (s - delta_joints[m][k]) + d_pos_shape[m][k]) * w;
                    }
                }
                set_block(jv, i, shape_col + m, &d);
            }
            for c in 0..3 {
                jv[(3 * i + c, trans_col + c)] = 1.0;
            }
        }
        vertices.push(v + t);
    }

    let mesh = Mesh {
        vertices,
        faces: Arc::clone(&spec.faces),
        joints: posed.global_pos.iter().map(|p| p + t).collect(),
    };
    Ok((mesh, LbsJacobian { joints: jj, vertices: jv }))
}

pub fn load_body_spec(path: impl AsRef<Path>) -> Result<BodyModelSpec> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let spec: BodyModelSpec =
        serde_json::from_str(&text).map_err(|e| Error::schema(path.display().to_string(), e))?;
    spec.validate()?;
    Ok(spec)
}

pub fn save_body_spec(spec: &BodyModelSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string(spec).map_err(|e| Error::schema("body spec", e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes a Wavefront OBJ: all vertices, then 1-indexed faces.
pub fn write_obj(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for v in &mesh.vertices {
        out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    for f in mesh.faces.iter() {
        out.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads vertices and triangular faces back from an OBJ written by [`write_obj`].
pub fn read_obj(path: impl AsRef<Path>) -> Result<(Vec<Vec3>, Vec<Face>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ctx = || path.display().to_string();
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let xs: Vec<f64> = parts
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::schema(ctx(), format!("line {}: {e}", lineno + 1)))?;
                if xs.len() != 3 {
                    return Err(Error::schema(ctx(), format!("line {}: expected 3 coordinates", lineno + 1)));
                }
                vertices.push(Vec3::new(xs[0], xs[1], xs[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = parts
                    .map(|p| p.split('/').next().unwrap_or("").parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::schema(ctx(), format!("line {}: {e}", lineno + 1)))?;
                if idx.len() != 3 || idx.contains(&0) {
                    return Err(Error::schema(ctx(), format!("line {}: expected 3 one-based indices", lineno + 1)));
                }
                faces.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

// ---------------------------------------------------------------------------
// Toy model
// ---------------------------------------------------------------------------

/// Joint names of the toy model, in kinematic order.
pub const TOY_JOINT_NAMES: [&str; 8] = [
    "pelvis",
    "spine",
    "neck",
    "head",
    "l_shoulder",
    "l_elbow",
    "r_shoulder",
    "r_elbow",
];

const TOY_PARENTS: [i64; 8] = [-1, 0, 1, 2, 2, 4, 2, 6];

/// Rest joints of the toy model. Image-style axes: `y` points down (towards
/// the feet), the body faces `-z`.
const TOY_JOINTS: [[f64; 3]; 8] = [
    [0.0, 0.0, 0.0],
    [0.0, -0.25, 0.0],
    [0.0, -0.50, 0.0],
    [0.0, -0.58, 0.0],
    [0.17, -0.47, 0.0],
    [0.45, -0.47, 0.0],
    [-0.17, -0.47, 0.0],
    [-0.45, -0.47, 0.0],
];

const RING_SIDES: usize = 6;

#[derive(Clone, Copy, PartialEq)]
enum Part {
    Torso,
    Head,
    Arm,
    Leg,
}

struct Capsule {
    start: [f64; 3],
    end: [f64; 3],
    radius: f64,
    rings: usize,
    owner: usize,
    /// Parent joint sharing the weight of the first ring.
    blend: Option<usize>,
    /// Joint whose regressor row averages the first ring.
    regresses: Option<usize>,
    part: Part,
}

fn toy_capsules() -> Vec<Capsule> {
    let j = TOY_JOINTS;
    let cap = |start, end, radius, rings, owner, blend, regresses, part| Capsule {
        start,
        end,
        radius,
        rings,
        owner,
        blend,
        regresses,
        part,
    };
    vec![
        cap(j[0], j[1], 0.13, 3, 0, None, Some(0), Part::Torso),
        cap(j[1], j[2], 0.12, 3, 1, Some(0), Some(1), Part::Torso),
        cap(j[2], j[3], 0.05, 2, 2, Some(1), Some(2), Part::Torso),
        cap(j[3], [0.0, -0.80, 0.0], 0.09, 3, 3, Some(2), Some(3), Part::Head),
        cap(j[4], j[5], 0.05, 3, 4, Some(2), Some(4), Part::Arm),
        cap(j[5], [0.72, -0.47, 0.0], 0.04, 3, 5, Some(4), Some(5), Part::Arm),
        cap(j[6], j[7], 0.05, 3, 6, Some(2), Some(6), Part::Arm),
        cap(j[7], [-0.72, -0.47, 0.0], 0.04, 3, 7, Some(6), Some(7), Part::Arm),
        cap([0.1, 0.05, 0.0], [0.1, 0.92, 0.0], 0.07, 4, 0, None, None, Part::Leg),
        cap([-0.1, 0.05, 0.0], [-0.1, 0.92, 0.0], 0.07, 4, 0, None, None, Part::Leg),
        cap([0.1, 0.92, 0.0], [0.1, 0.92, -0.18], 0.04, 2, 0, None, None, Part::Leg),
        cap([-0.1, 0.92, 0.0], [-0.1, 0.92, -0.18], 0.04, 2, 0, None, None, Part::Leg),
    ]
}

struct ToyVertex {
    pos: Vec3,
    /// Outward unit direction from the capsule axis.
    normal: Vec3,
    part: Part,
}

/// Deterministic eight-joint body model made of capsules around the bones:
/// pelvis, a three-segment spine/neck chain, a head, two-segment arms and
/// two rigid legs attached to the pelvis.
///
/// Every shape blend shape leaves the root joint at the origin, so the
/// global orientation always pivots about the world origin.
pub fn toy_body_spec() -> BodyModelSpec {
    let nj = TOY_JOINTS.len();
    let mut verts: Vec<ToyVertex> = Vec::new();
    let mut weights: Vec<Vec<f64>> = Vec::new();
    let mut faces: Vec<Face> = Vec::new();
    let mut regressor = vec![Vec::<usize>::new(); nj];

    for c in toy_capsules() {
        let a = Vec3::from(c.start);
        let b = Vec3::from(c.end);
        let axis = (b - a).normalize();
        let reference = if axis.z.abs() < 0.9 { Vec3::z() } else { Vec3::x() };
        let u = axis.cross(&reference).normalize();
        let w = axis.cross(&u);
        let base = verts.len();

        let mut owner_only = vec![0.0; nj];
        owner_only[c.owner] = 1.0;
        for r in 0..c.rings {
            let center = a + (b - a) * (r as f64 / (c.rings - 1) as f64);
            for s in 0..RING_SIDES {
                let phi = 2.0 * std::f64::consts::PI * s as f64 / RING_SIDES as f64;
                let normal = u * phi.cos() + w * phi.sin();
                verts.push(ToyVertex {
                    pos: center + normal * c.radius,
                    normal,
                    part: c.part,
                });
                let row = match (r, c.blend) {
                    (0, Some(p)) => {
                        let mut row = vec![0.0; nj];
                        row[c.owner] = 0.5;
                        row[p] = 0.5;
                        row
                    }
                    _ => owner_only.clone(),
                };
                weights.push(row);
            }
            if r == 0 {
                if let Some(k) = c.regresses {
                    regressor[k].extend(base..base + RING_SIDES);
                }
            }
        }
        let start_apex = verts.len();
        verts.push(ToyVertex {
            pos: a - axis * c.radius,
            normal: -axis,
            part: c.part,
        });
        weights.push(weights[base].clone());
        let end_apex = verts.len();
        verts.push(ToyVertex {
            pos: b + axis * c.radius,
            normal: axis,
            part: c.part,
        });
        weights.push(owner_only.clone());

        for r in 0..c.rings - 1 {
            for s in 0..RING_SIDES {
                let s1 = (s + 1) % RING_SIDES;
                let i00 = base + r * RING_SIDES + s;
                let i01 = base + r * RING_SIDES + s1;
                let i10 = base + (r + 1) * RING_SIDES + s;
                let i11 = base + (r + 1) * RING_SIDES + s1;
                faces.push([i00, i10, i11]);
                faces.push([i00, i11, i01]);
            }
        }
        let last = base + (c.rings - 1) * RING_SIDES;
        for s in 0..RING_SIDES {
            let s1 = (s + 1) % RING_SIDES;
            faces.push([start_apex, base + s1, base + s]);
            faces.push([end_apex, last + s, last + s1]);
        }
    }

    let n = verts.len();
    let joint_regressor: Vec<Vec<f64>> = regressor
        .iter()
        .map(|idx| {
            let mut row = vec![0.0; n];
            let w = 1.0 / idx.len() as f64;
            for &i in idx {
                row[i] = w;
            }
            row
        })
        .collect();

    let template: Vec<Vec3> = verts.iter().map(|v| v.pos).collect();
    let mut shape_blendshapes: Vec<Vec<Vec3>> = toy_shape_directions(&verts);
    // Keep the root joint fixed under shape changes.
    for dir in &mut shape_blendshapes {
        let shift = joint_regressor[0]
            .iter()
            .zip(dir.iter())
            .fold(Vec3::zeros(), |acc, (w, d)| acc + d * *w);
        dir.iter_mut().for_each(|d| *d -= shift);
    }

    let to_arr = |v: &Vec3| [v.x, v.y, v.z];
    BodyModelSpec {
        joint_count: nj,
        template_vertices: template.iter().map(to_arr).collect(),
        faces: Arc::new(faces),
        joint_regressor,
        parents: TOY_PARENTS.to_vec(),
        skinning_weights: weights,
        shape_blendshapes: shape_blendshapes
            .iter()
            .map(|dir| dir.iter().map(to_arr).collect())
            .collect(),
        pose_blendshapes: None,
    }
}

fn toy_shape_directions(verts: &[ToyVertex]) -> Vec<Vec<Vec3>> {
    let head_center = Vec3::new(0.0, -0.69, 0.0);
    let field = |f: &dyn Fn(&ToyVertex) -> Vec3| verts.iter().map(f).collect::<Vec<Vec3>>();
    vec![
        // stature
        field(&|v| Vec3::new(0.0, 0.08 * v.pos.y, 0.0)),
        // girth
        field(&|v| v.normal * 0.02),
        // arm length
        field(&|v| match v.part {
            Part::Arm => Vec3::new(0.12 * (v.pos.x - 0.17 * v.pos.x.signum()), 0.0, 0.0),
            _ => Vec3::zeros(),
        }),
        // leg length
        field(&|v| match v.part {
            Part::Leg => Vec3::new(0.0, 0.1 * (v.pos.y - 0.05).max(0.0), 0.0),
            _ => Vec3::zeros(),
        }),
        // shoulder width
        field(&|v| match v.part {
            Part::Arm => Vec3::new(0.03 * v.pos.x.signum(), 0.0, 0.0),
            _ => Vec3::zeros(),
        }),
        // torso depth
        field(&|v| match v.part {
            Part::Torso => Vec3::new(0.0, 0.0, 0.3 * v.pos.z),
            _ => Vec3::zeros(),
        }),
        // head size
        field(&|v| match v.part {
            Part::Head => (v.pos - head_center) * 0.15,
            _ => Vec3::zeros(),
        }),
        // belly
        field(&|v| match v.part {
            Part::Torso if v.pos.z < 0.0 => Vec3::new(0.0, 0.0, 0.2 * v.pos.z),
            _ => Vec3::zeros(),
        }),
        field(&|v| {
            let p = v.pos;
            Vec3::new((3.0 * p.x).sin(), (2.0 * p.y).cos(), (p.x + p.y).sin()) * 0.01
        }),
        field(&|v| {
            let p = v.pos;
            Vec3::new((5.0 * p.z + p.y).cos(), (4.0 * p.x).sin(), (3.0 * p.y).cos()) * 0.01
        }),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rotation::log_so3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(rng: &mut ChaCha8Rng, nj: usize, sigma: f64) -> BodyParams {
        let mut v = || Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let pose = (0..nj).map(|_| v() * sigma).collect();
        let shape = (0..NUM_BETAS).map(|_| v().x).collect();
        BodyParams::new(pose, shape, v())
    }

    #[test]
    fn toy_spec_is_valid_and_deterministic() {
        let a = toy_body_spec();
        let b = toy_body_spec();
        a.validate().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.joint_count, 8);
        assert!((150..=300).contains(&a.vertex_count()), "N = {}", a.vertex_count());
        let rest = a.rest_joints(&[0.0; NUM_BETAS]);
        for (k, j) in rest.iter().enumerate() {
            assert!((j - Vec3::from(TOY_JOINTS[k])).norm() < 1e-12);
        }
    }

    #[test]
    fn toy_root_stays_at_origin_for_any_shape() {
        let spec = toy_body_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let shape: Vec<f64> = (0..NUM_BETAS).map(|_| rng.random_range(-3.0..3.0)).collect();
            assert!(spec.rest_root(&shape).norm() < 1e-14);
        }
    }

    #[test]
    fn zero_params_reproduce_template() {
        let spec = toy_body_spec();
        let mesh = lbs_forward(&spec, &BodyParams::zeros(8)).unwrap();
        for (v, t) in mesh.vertices.iter().zip(&spec.template_vertices) {
            assert!((v - Vec3::from(*t)).norm() < 1e-15);
        }
        let rest = spec.rest_joints(&[0.0; NUM_BETAS]);
        assert_eq!(mesh.joints, rest);
    }

    #[test]
    fn unit_shape_adds_blendshape() {
        let spec = toy_body_spec();
        for k in 0..NUM_BETAS {
            let mut p = BodyParams::zeros(8);
            p.shape[k] = 1.0;
            let mesh = lbs_forward(&spec, &p).unwrap();
            for (i, v) in mesh.vertices.iter().enumerate() {
                let expect = Vec3::from(spec.template_vertices[i]) + Vec3::from(spec.shape_blendshapes[k][i]);
                assert!((v - expect).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn root_half_turns_rotate_rest_mesh_about_root() {
        let spec = toy_body_spec();
        let root = spec.rest_root(&[0.0; NUM_BETAS]);
        for axis in [Vec3::z(), Vec3::y()] {
            let mut p = BodyParams::zeros(8);
            p.pose[0] = axis * std::f64::consts::PI;
            let mesh = lbs_forward(&spec, &p).unwrap();
            // Oracle: explicit half turn, a diagonal sign flip.
            let flip = Mat3::from_diagonal(&(Vec3::repeat(2.0).component_mul(&axis) - Vec3::repeat(1.0)));
            for (v, t) in mesh.vertices.iter().zip(&spec.template_vertices) {
                let expect = flip * (Vec3::from(*t) - root) + root;
                assert!((v - expect).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn rigid_equivariance() {
        let spec = toy_body_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let p = random_params(&mut rng, 8, 0.6);
            let base = lbs_forward(&spec, &p).unwrap();
            let r0 = exp_so3(&Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)));
            let t0 = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let mut q = p.clone();
            q.pose[0] = log_so3(&(r0 * exp_so3(&p.pose[0])));
            q.translation = p.translation + t0;
            let moved = lbs_forward(&spec, &q).unwrap();
            let root = spec.rest_root(&p.shape) + p.translation;
            for (a, b) in base.vertices.iter().zip(&moved.vertices) {
                let expect = r0 * (a - root) + root + t0;
                assert!((b - expect).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn joints_agree_with_regressed_posed_vertices() {
        let spec = toy_body_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let p = random_params(&mut rng, 8, 0.8);
            let mesh = lbs_forward(&spec, &p).unwrap();
            let regressed = spec.regress(&mesh.vertices);
            for (a, b) in regressed.iter().zip(&mesh.joints) {
                assert!((a - b).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn shape_is_linear_at_zero_pose() {
        let spec = toy_body_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let template: Vec<Vec3> = spec.template_vertices.iter().map(|v| Vec3::from(*v)).collect();
        let at = |shape: Vec<f64>| {
            let mut p = BodyParams::zeros(8);
            p.shape = shape;
            lbs_forward(&spec, &p).unwrap().vertices
        };
        for _ in 0..20 {
            let b1: Vec<f64> = (0..NUM_BETAS).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b2: Vec<f64> = (0..NUM_BETAS).map(|_| rng.random_range(-2.0..2.0)).collect();
            let sum: Vec<f64> = b1.iter().zip(&b2).map(|(a, b)| a + b).collect();
            let (m1, m2, m12) = (at(b1), at(b2), at(sum));
            for i in 0..template.len() {
                let lhs = m12[i] - template[i];
                let rhs = (m1[i] - template[i]) + (m2[i] - template[i]);
                assert!((lhs - rhs).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let spec = toy_body_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let p = random_params(&mut rng, 8, 0.7);
            let (_, jac) = lbs_with_jacobian(&spec, &p, true).unwrap();
            let x = p.to_vector();
            let h = 1e-6;
            for col in 0..x.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[col] += h;
                xm[col] -= h;
                let mp = lbs_forward(&spec, &BodyParams::from_vector(8, &xp).unwrap()).unwrap();
                let mm = lbs_forward(&spec, &BodyParams::from_vector(8, &xm).unwrap()).unwrap();
                for (k, (a, b)) in mp.joints.iter().zip(&mm.joints).enumerate() {
                    let fd = (a - b) / (2.0 * h);
                    for c in 0..3 {
                        assert!((fd[c] - jac.joints[(3 * k + c, col)]).abs() < 1e-7, "joint {k} col {col}");
                    }
                }
                let jv = jac.vertices.as_ref().unwrap();
                for (i, (a, b)) in mp.vertices.iter().zip(&mm.vertices).enumerate() {
                    let fd = (a - b) / (2.0 * h);
                    for c in 0..3 {
                        assert!((fd[c] - jv[(3 * i + c, col)]).abs() < 1e-7, "vertex {i} col {col}");
                    }
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let spec = toy_body_spec();
        let mut p = BodyParams::zeros(7);
        assert!(matches!(lbs_forward(&spec, &p), Err(Error::Dimension(_))));
        p = BodyParams::zeros(8);
        p.shape.pop();
        assert!(matches!(lbs_forward(&spec, &p), Err(Error::Dimension(_))));
    }

    #[test]
    fn spec_file_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.json");
        let spec = toy_body_spec();
        save_body_spec(&spec, &path).unwrap();
        assert_eq!(load_body_spec(&path).unwrap(), spec);

        assert!(matches!(load_body_spec(dir.path().join("nope.json")), Err(Error::MissingFile(_))));

        let text = fs::read_to_string(&path).unwrap();
        fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_body_spec(&path), Err(Error::Schema { .. })));

        let mut bad = spec.clone();
        bad.skinning_weights[17] = bad.skinning_weights[17].iter().map(|w| w * 0.5).collect();
        save_body_spec(&bad, &path).unwrap();
        match load_body_spec(&path) {
            Err(Error::Invariant(msg)) => assert!(msg.contains("row 17"), "{msg}"),
            other => panic!("expected invariant error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_trees_are_rejected() {
        let mut spec = toy_body_spec();
        spec.parents[3] = 5;
        assert!(matches!(spec.validate(), Err(Error::Invariant(_))));
        spec.parents[3] = -1;
        assert!(matches!(spec.validate(), Err(Error::Invariant(_))));
    }

    #[test]
    fn obj_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.obj");
        let spec = toy_body_spec();
        let mesh = lbs_forward(&spec, &BodyParams::zeros(8)).unwrap();
        write_obj(&mesh, &path).unwrap();
        let (v, f) = read_obj(&path).unwrap();
        assert_eq!(v, mesh.vertices);
        assert_eq!(f, *mesh.faces);
    }
}
