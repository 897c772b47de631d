//! Python bindings: body model, camera, transforms, pitch estimation,
//! mesh adjustment, depth rendering and metrics.

use camworld::body_model::{lbs_forward, load_body_spec, toy_body_spec, BodyModelSpec, BodyParams};
use camworld::camera::{self, Extrinsics, Intrinsics};
use camworld::datagen;
use camworld::fitting::{self, FitConfig};
use camworld::losses::{self, LossWeights, PitchCamera, Targets};
use camworld::metrics;
use camworld::rasterizer::{self, DepthMap};
use camworld::transform;
use camworld::Vec3;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn py_err(e: camworld::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn vecs(points: &[[f64; 3]]) -> Vec<Vec3> {
    points.iter().map(|p| Vec3::from(*p)).collect()
}

fn arrays(points: &[Vec3]) -> Vec<[f64; 3]> {
    points.iter().map(|p| [p.x, p.y, p.z]).collect()
}

fn intrinsics(focal: f64, width: u32, height: u32) -> PyResult<Intrinsics> {
    Intrinsics::new(focal, width, height).map_err(py_err)
}

#[pyclass(name = "BodyModel", module = "camworld_py", frozen)]
struct PyBodyModel {
    inner: BodyModelSpec,
}

#[pymethods]
impl PyBodyModel {
    /// The built-in eight-joint capsule body.
    #[staticmethod]
    fn toy() -> Self {
        PyBodyModel { inner: toy_body_spec() }
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyBodyModel {
            inner: load_body_spec(path).map_err(py_err)?,
        })
    }

    #[getter]
    fn joint_count(&self) -> usize {
        self.inner.joint_count
    }

    #[getter]
    fn vertex_count(&self) -> usize {
        self.inner.vertex_count()
    }

    #[getter]
    fn faces(&self) -> Vec<[usize; 3]> {
        self.inner.faces.to_vec()
    }

    /// Posed `(vertices, joints)`.
    fn forward(&self, params: &PyBodyParams) -> PyResult<(Vec<[f64; 3]>, Vec<[f64; 3]>)> {
        let mesh = lbs_forward(&self.inner, &params.inner).map_err(py_err)?;
        Ok((arrays(&mesh.vertices), arrays(&mesh.joints)))
    }

    fn rest_root(&self, shape: Vec<f64>) -> [f64; 3] {
        let r = self.inner.rest_root(&shape);
        [r.x, r.y, r.z]
    }
}

#[pyclass(name = "BodyParams", module = "camworld_py", skip_from_py_object)]
#[derive(Clone)]
struct PyBodyParams {
    inner: BodyParams,
}

#[pymethods]
impl PyBodyParams {
    #[new]
    #[pyo3(signature = (pose, shape=None, translation=None))]
    fn new(pose: Vec<[f64; 3]>, shape: Option<Vec<f64>>, translation: Option<[f64; 3]>) -> Self {
        PyBodyParams {
            inner: BodyParams::new(
                vecs(&pose),
                shape.unwrap_or_else(|| vec![0.0; camworld::body_model::NUM_BETAS]),
                Vec3::from(translation.unwrap_or_default()),
            ),
        }
    }

    #[staticmethod]
    fn zeros(joint_count: usize) -> Self {
        PyBodyParams {
            inner: BodyParams::zeros(joint_count),
        }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(PyBodyParams { inner })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("params serialize")
    }

    #[getter]
    fn pose(&self) -> Vec<[f64; 3]> {
        arrays(&self.inner.pose)
    }

    #[getter]
    fn shape(&self) -> Vec<f64> {
        self.inner.shape.clone()
    }

    #[getter]
    fn translation(&self) -> [f64; 3] {
        let t = self.inner.translation;
        [t.x, t.y, t.z]
    }

    fn __repr__(&self) -> String {
        format!(
            "BodyParams(joints={}, root={:?}, translation={:?})",
            self.inner.pose.len(),
            self.pose()[0],
            self.translation()
        )
    }
}

/// Camera rotation `R = R_pitch R_roll R_yaw` as nested rows.
#[pyfunction]
#[pyo3(signature = (pitch, roll=0.0, yaw=0.0))]
fn rotation_from_euler(pitch: f64, roll: f64, yaw: f64) -> [[f64; 3]; 3] {
    let r = camera::rotation_from_euler(pitch, roll, yaw);
    [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]])
}

/// Normalised box descriptor `(cx / d, cy / d, b / d)`.
#[pyfunction]
fn bbox_encode(cx: f64, cy: f64, b: f64, width: f64, height: f64) -> PyResult<(f64, f64, f64)> {
    let e = camera::bbox_encode(cx, cy, b, width, height).map_err(py_err)?;
    Ok((e.cx_norm, e.cy_norm, e.b_norm))
}

#[pyfunction]
#[pyo3(signature = (points, focal, width, height, pitch, t_b=[0.0; 3]))]
fn project(points: Vec<[f64; 3]>, focal: f64, width: u32, height: u32, pitch: f64, t_b: [f64; 3]) -> PyResult<Vec<[f64; 2]>> {
    let intr = intrinsics(focal, width, height)?;
    camera::project(&vecs(&points), &intr, &Extrinsics::pitch_only(pitch), &Vec3::from(t_b)).map_err(py_err)
}

#[pyfunction]
fn camera_to_world(params: &PyBodyParams, pitch: f64) -> PyBodyParams {
    PyBodyParams {
        inner: transform::camera_to_world(&params.inner, pitch),
    }
}

#[pyfunction]
fn world_to_camera(params: &PyBodyParams, pitch: f64) -> PyBodyParams {
    PyBodyParams {
        inner: transform::world_to_camera(&params.inner, pitch),
    }
}

/// Pitch (radians) and `t_b` explaining `keypoints` as projections of
/// world `joints`.
#[pyfunction]
fn estimate_pitch(joints: Vec<[f64; 3]>, keypoints: Vec<[f64; 2]>, focal: f64, width: u32, height: u32) -> PyResult<(f64, [f64; 3])> {
    let intr = intrinsics(focal, width, height)?;
    let (p, t, _) = fitting::estimate_pitch(&vecs(&joints), &keypoints, &intr, &FitConfig::default()).map_err(py_err)?;
    Ok((p, [t.x, t.y, t.z]))
}

/// Refines a camera-frame estimate into the world frame. Returns the fitted
/// parameters, final loss, accepted iterations and convergence flag.
#[pyfunction]
#[pyo3(signature = (model, params_cam, pitch, t_b, keypoints, focal, width, height, joints3d=None, vertices=None, pose=None, lroot=2.0, max_iters=500))]
#[allow(clippy::too_many_arguments)]
fn adjust_mesh(
    model: &PyBodyModel,
    params_cam: &PyBodyParams,
    pitch: f64,
    t_b: [f64; 3],
    keypoints: Vec<[f64; 2]>,
    focal: f64,
    width: u32,
    height: u32,
    joints3d: Option<Vec<[f64; 3]>>,
    vertices: Option<Vec<[f64; 3]>>,
    pose: Option<Vec<[f64; 3]>>,
    lroot: f64,
    max_iters: usize,
) -> PyResult<(PyBodyParams, f64, usize, bool)> {
    let camera = PitchCamera {
        intrinsics: intrinsics(focal, width, height)?,
        pitch,
        t_b: Vec3::from(t_b),
    };
    let targets = Targets {
        keypoints2d: keypoints,
        joints3d: joints3d.map(|j| vecs(&j)),
        vertices: vertices.map(|v| vecs(&v)),
        pose: pose.map(|p| vecs(&p)),
    };
    let cfg = FitConfig {
        max_iters,
        weights: LossWeights {
            lroot,
            ..Default::default()
        },
        ..Default::default()
    };
    let (p, rep) = fitting::adjust_mesh(&params_cam.inner, &camera, &targets, &model.inner, &cfg).map_err(py_err)?;
    Ok((PyBodyParams { inner: p }, rep.final_loss, rep.iterations, rep.converged))
}

#[pyfunction]
#[pyo3(signature = (pred_pose, gt_pose, lroot=2.0))]
fn loss_mix(pred_pose: Vec<[f64; 3]>, gt_pose: Vec<[f64; 3]>, lroot: f64) -> PyResult<f64> {
    losses::loss_mix(&vecs(&pred_pose), &vecs(&gt_pose), lroot).map_err(py_err)
}

/// Depth map of the posed body as `(width, height, row-major depths)`;
/// uncovered pixels are `inf`.
#[pyfunction]
#[pyo3(signature = (model, params, focal, width, height, pitch, t_b=[0.0; 3]))]
fn render_depth(
    model: &PyBodyModel,
    params: &PyBodyParams,
    focal: f64,
    width: u32,
    height: u32,
    pitch: f64,
    t_b: [f64; 3],
) -> PyResult<(u32, u32, Vec<f64>)> {
    let mesh = lbs_forward(&model.inner, &params.inner).map_err(py_err)?;
    let intr = intrinsics(focal, width, height)?;
    let d = rasterizer::render_depth(&mesh, &intr, &Extrinsics::pitch_only(pitch), &Vec3::from(t_b)).map_err(py_err)?;
    Ok((d.width, d.height, d.depth))
}

/// Masks 16x16 blocks of a flat 256x256 grid; returns the grid and the
/// masked block indices.
#[pyfunction]
#[pyo3(signature = (grid, ratio, seed, fill=f64::INFINITY))]
fn apply_block_mask(grid: Vec<f64>, ratio: f64, seed: u64, fill: f64) -> PyResult<(Vec<f64>, Vec<usize>)> {
    let size = datagen::CROP_SIZE;
    if grid.len() != (size * size) as usize {
        return Err(PyValueError::new_err(format!("grid must hold {} values", size * size)));
    }
    let mut d = DepthMap {
        width: size,
        height: size,
        depth: grid,
    };
    let blocks = datagen::apply_block_mask(&mut d, ratio, seed, fill).map_err(py_err)?;
    Ok((d.depth, blocks))
}

#[pyfunction]
fn mpjpe(pred: Vec<[f64; 3]>, gt: Vec<[f64; 3]>) -> PyResult<f64> {
    metrics::mpjpe(&vecs(&pred), &vecs(&gt)).map_err(py_err)
}

#[pyfunction]
fn pa_mpjpe(pred: Vec<[f64; 3]>, gt: Vec<[f64; 3]>) -> PyResult<f64> {
    metrics::pa_mpjpe(&vecs(&pred), &vecs(&gt)).map_err(py_err)
}

#[pyfunction]
fn w_mpjpe(pred: Vec<[f64; 3]>, gt: Vec<[f64; 3]>) -> PyResult<f64> {
    metrics::w_mpjpe(&vecs(&pred), &vecs(&gt)).map_err(py_err)
}

#[pymodule]
fn camworld_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyBodyModel>()?;
    m.add_class::<PyBodyParams>()?;
    m.add_function(wrap_pyfunction!(rotation_from_euler, m)?)?;
    m.add_function(wrap_pyfunction!(bbox_encode, m)?)?;
    m.add_function(wrap_pyfunction!(project, m)?)?;
    m.add_function(wrap_pyfunction!(camera_to_world, m)?)?;
    m.add_function(wrap_pyfunction!(world_to_camera, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_pitch, m)?)?;
    m.add_function(wrap_pyfunction!(adjust_mesh, m)?)?;
    m.add_function(wrap_pyfunction!(loss_mix, m)?)?;
    m.add_function(wrap_pyfunction!(render_depth, m)?)?;
    m.add_function(wrap_pyfunction!(apply_block_mask, m)?)?;
    m.add_function(wrap_pyfunction!(mpjpe, m)?)?;
    m.add_function(wrap_pyfunction!(pa_mpjpe, m)?)?;
    m.add_function(wrap_pyfunction!(w_mpjpe, m)?)?;
    Ok(())
}
