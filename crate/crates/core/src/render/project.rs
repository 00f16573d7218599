//! 3D covariance construction and EWA projection to screen space.

use nalgebra::{Matrix2, Matrix2x3};

use crate::math::{normalize_quat, normalize_quat_backward, quat_to_matrix, quat_to_matrix_backward, Mat3, Vec3};
use crate::scene::Camera;

/// `R(q) S(s) S(s)ᵀ R(q)ᵀ` for a (raw) quaternion and activated scale.
pub fn build_covariance(scale: &[f64; 3], rotation: &[f64; 4]) -> Mat3 {
    let r = quat_to_matrix(&normalize_quat(rotation));
    let m = r * Mat3::from_diagonal(&Vec3::from(*scale));
    m * m.transpose()
}

/// Screen-space footprint of one visible Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct Projected {
    /// Index into the input arrays.
    pub index: usize,
    /// Pixel-space mean.
    pub mean: [f64; 2],
    /// 2D covariance `(Σ'00, Σ'01, Σ'11)` including the blur floor.
    pub cov: [f64; 3],
    /// Inverse 2D covariance `(a, b, c)` with the same layout.
    pub conic: [f64; 3],
    /// Camera-space depth.
    pub depth: f64,
    /// Largest screen-space half extent, in pixels.
    pub radius: f64,
    pub opacity: f64,
    /// Inclusive pixel bounds `(x0, y0, x1, y1)`, clipped to the image.
    pub bounds: [usize; 4],
}

/// Screen-space data for all visible Gaussians, sorted front to back.
#[derive(Clone, Debug, Default)]
pub struct Projected2D {
    pub items: Vec<Projected>,
}

impl Projected2D {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

pub(crate) struct ProjectionParams {
    pub blur: f64,
    pub alpha_min: f64,
}

fn jacobian(cam: &Camera, t: &Vec3) -> Matrix2x3<f64> {
    let (x, y, z) = (t.x, t.y, t.z);
    Matrix2x3::new(
        cam.fx / z,
        0.0,
        -cam.fx * x / (z * z),
        0.0,
        cam.fy / z,
        -cam.fy * y / (z * z),
    )
}

/// Projects one Gaussian; `None` when culled (behind the near plane, beyond
/// the far plane, too transparent to ever pass the alpha threshold, or fully
/// off screen).
pub(crate) fn project_one(
    index: usize,
    position: &[f64; 3],
    scale: &[f64; 3],
    rotation: &[f64; 4],
    opacity: f64,
    cam: &Camera,
    params: &ProjectionParams,
) -> Option<Projected> {
    let t = cam.world_to_camera(&Vec3::from(*position));
    if !(t.z > cam.near && t.z < cam.far) {
        return None;
    }
    if !(opacity >= params.alpha_min) {
        return None;
    }
    let sigma = build_covariance(scale, rotation);
    let tm = jacobian(cam, &t) * cam.rotation;
    let cov2: Matrix2<f64> = tm * sigma * tm.transpose();
    let a = cov2[(0, 0)] + params.blur;
    let b = 0.5 * (cov2[(0, 1)] + cov2[(1, 0)]);
    let c = cov2[(1, 1)] + params.blur;
    let det = a * c - b * b;
    if !(det > 0.0) {
        return None;
    }
    let conic = [c / det, -b / det, a / det];
    let mean = [cam.fx * t.x / t.z + cam.cx, cam.fy * t.y / t.z + cam.cy];

    // Any pixel with opacity * G >= alpha_min satisfies
    // mahalanobis^2 <= 2 ln(opacity / alpha_min); the per-axis extent of that
    // ellipse is sqrt(m2 * Σ'_ii). One extra pixel of margin keeps the bound
    // conservative under rounding.
    let m2 = 2.0 * (opacity / params.alpha_min).ln().max(0.0);
    let ex = (m2 * a).sqrt() + 1.0;
    let ey = (m2 * c).sqrt() + 1.0;
    let x0 = (mean[0] - ex - 0.5).ceil();
    let x1 = (mean[0] + ex - 0.5).floor();
    let y0 = (mean[1] - ey - 0.5).ceil();
    let y1 = (mean[1] + ey - 0.5).floor();
    let (w, h) = (cam.width as f64, cam.height as f64);
    if !(x1 >= 0.0 && y1 >= 0.0 && x0 <= w - 1.0 && y0 <= h - 1.0) {
        return None;
    }
    let bounds = [
        x0.max(0.0) as usize,
        y0.max(0.0) as usize,
        x1.min(w - 1.0) as usize,
        y1.min(h - 1.0) as usize,
    ];
    Some(Projected {
        index,
        mean,
        cov: [a, b, c],
        conic,
        depth: t.z,
        radius: ex.max(ey),
        opacity,
        bounds,
    })
}

/// Gradients of a scalar loss w.r.t. one Gaussian's 3D parameters.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct ProjectionGrad {
    pub position: [f64; 3],
    pub scale: [f64; 3],
    pub rotation: [f64; 4],
}

/// Back-propagates gradients on the 2D mean and conic to the 3D parameters.
pub(crate) fn project_backward(
    position: &[f64; 3],
    scale: &[f64; 3],
    rotation: &[f64; 4],
    cam: &Camera,
    blur: f64,
    d_mean: [f64; 2],
    d_conic: [f64; 3],
) -> ProjectionGrad {
    let t = cam.world_to_camera(&Vec3::from(*position));
    let q = normalize_quat(rotation);
    let r = quat_to_matrix(&q);
    let s = Mat3::from_diagonal(&Vec3::from(*scale));
    let m = r * s;
    let sigma = m * m.transpose();
    let j = jacobian(cam, &t);
    let tm = j * cam.rotation;
    let cov2 = tm * sigma * tm.transpose();
    let a = cov2[(0, 0)] + blur;
    let b = 0.5 * (cov2[(0, 1)] + cov2[(1, 0)]);
    let c = cov2[(1, 1)] + blur;
    let det = a * c - b * b;
    let det2 = det * det;

    // conic (ca, cb, cc) = (c, -b, a) / det
    let [ga, gb, gc] = d_conic;
    let d_a = ga * (-c * c / det2) + gb * (b * c / det2) + gc * (-b * b / det2);
    let d_b = ga * (2.0 * b * c / det2) + gb * (-1.0 / det - 2.0 * b * b / det2) + gc * (2.0 * a * b / det2);
    let d_c = ga * (-b * b / det2) + gb * (a * b / det2) + gc * (-a * a / det2);
    let g2 = Matrix2::new(d_a, 0.5 * d_b, 0.5 * d_b, d_c);

    let d_sigma = tm.transpose() * g2 * tm;
    let d_tm = 2.0 * g2 * tm * sigma;
    let d_j = d_tm * cam.rotation.transpose();

    let d_m = 2.0 * d_sigma * m;
    let mut d_scale = [0.0; 3];
    let mut d_r = Mat3::zeros();
    for col in 0..3 {
        for row in 0..3 {
            d_r[(row, col)] = d_m[(row, col)] * scale[col];
            d_scale[col] += d_m[(row, col)] * r[(row, col)];
        }
    }
    let d_q = quat_to_matrix_backward(&q, &d_r);
    let d_rotation = normalize_quat_backward(rotation, &d_q);

    let (x, y, z) = (t.x, t.y, t.z);
    let (fx, fy) = (cam.fx, cam.fy);
    let (z2, z3) = (z * z, z * z * z);
    let dt = Vec3::new(
        d_mean[0] * fx / z + d_j[(0, 2)] * (-fx / z2),
        d_mean[1] * fy / z + d_j[(1, 2)] * (-fy / z2),
        d_mean[0] * (-fx * x / z2)
            + d_mean[1] * (-fy * y / z2)
            + d_j[(0, 0)] * (-fx / z2)
            + d_j[(0, 2)] * (2.0 * fx * x / z3)
            + d_j[(1, 1)] * (-fy / z2)
            + d_j[(1, 2)] * (2.0 * fy * y / z3),
    );
    let dp = cam.rotation.transpose() * dt;
    ProjectionGrad {
        position: [dp.x, dp.y, dp.z],
        scale: d_scale,
        rotation: d_rotation,
    }
}
