//! Axis-angle rotations: exponential and logarithm maps on SO(3), plus the
//! left Jacobian used for analytic derivatives through the kinematic chain.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Below this angle the closed forms switch to their Taylor expansions.
const SMALL_ANGLE: f64 = 1e-8;

/// Cross-product matrix `[v]x`, so that `skew(a) * b == a.cross(&b)`.
#[inline]
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[inline]
fn vee(m: &Mat3) -> Vec3 {
    Vec3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rodrigues' formula: rotation matrix for the axis-angle vector `v`.
pub fn exp_so3(v: &Vec3) -> Mat3 {
    let theta2 = v.norm_squared();
    let theta = theta2.sqrt();
    let k = skew(v);
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Mat3::identity() + k * a + k * k * b
}

/// Axis-angle vector of a rotation matrix, with angle in `[0, pi]`.
pub fn log_so3(r: &Mat3) -> Vec3 {
    let w = vee(&(r - r.transpose())) * 0.5; // sin(theta) * axis
    let s = w.norm();
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let theta = s.atan2(c);

    if theta < SMALL_ANGLE {
        return w * (1.0 + theta * theta / 6.0);
    }
    if theta < PI - 1e-4 {
        return w * (theta / s);
    }

    // Near pi the antisymmetric part vanishes; recover the axis from the
    // symmetric part (1 - cos) * a a^T and take its sign from `w`.
    let sym = (r + r.transpose()) * 0.5 - Mat3::identity() * c;
    let one_minus_c = 1.0 - c;
    let mut best = 0;
    for i in 1..3 {
        if sym[(i, i)] > sym[(best, best)] {
            best = i;
        }
    }
    let mut axis = sym.column(best).into_owned() / (sym[(best, best)] * one_minus_c).sqrt();
    axis.normalize_mut();
    if axis.dot(&w) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Left Jacobian of SO(3): `d exp(v) = [J_l(v) dv]x exp(v)`.
pub fn left_jacobian(v: &Vec3) -> Mat3 {
    let theta2 = v.norm_squared();
    let theta = theta2.sqrt();
    let k = skew(v);
    let (a, b) = if theta < 1e-5 {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        (
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    Mat3::identity() + k * a + k * k * b
}

/// Angle of the relative rotation `a^T b`, in radians.
pub fn geodesic_distance(a: &Mat3, b: &Mat3) -> f64 {
    log_so3(&(a.transpose() * b)).norm()
}

/// Rewrites an axis-angle vector so its magnitude lies in `[0, pi]` without
/// changing the rotation it represents.
pub fn normalize_axis_angle(v: &Vec3) -> Vec3 {
    let theta = v.norm();
    if theta <= PI {
        return *v;
    }
    let axis = v / theta;
    let mut reduced = theta.rem_euclid(2.0 * PI);
    if reduced > PI {
        reduced -= 2.0 * PI;
    }
    axis * reduced
}

pub fn is_rotation(r: &Mat3, tol: f64) -> bool {
    (r.transpose() * r - Mat3::identity()).abs().max() <= tol && (r.determinant() - 1.0).abs() <= tol
}
