//! Real spherical harmonics up to degree 3, in the sign convention used by
//! reference 3DGS renderers.

use crate::scene::{SH_BASIS, SH_COEFFS};

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Basis values `Y_k(d)` for `k = l² + l + m`.
pub fn sh_basis(dir: &[f64; 3]) -> [f64; SH_BASIS] {
    let [x, y, z] = *dir;
    let (xx, yy, zz) = (x * x, y * y, z * z);
    [
        SH_C0,
        -SH_C1 * y,
        SH_C1 * z,
        -SH_C1 * x,
        SH_C2[0] * x * y,
        SH_C2[1] * y * z,
        SH_C2[2] * (2.0 * zz - xx - yy),
        SH_C2[3] * x * z,
        SH_C2[4] * (xx - yy),
        SH_C3[0] * y * (3.0 * xx - yy),
        SH_C3[1] * x * y * z,
        SH_C3[2] * y * (4.0 * zz - xx - yy),
        SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
        SH_C3[4] * x * (4.0 * zz - xx - yy),
        SH_C3[5] * z * (xx - yy),
        SH_C3[6] * x * (xx - 3.0 * yy),
    ]
}

/// RGB for SH coefficients `h` (basis-major) viewed along unit `dir`:
/// `max(Σ_k h_k Y_k(d) + 0.5, 0)` per channel.
pub fn eval_sh(h: &[f64; SH_COEFFS], dir: &[f64; 3]) -> [f64; 3] {
    let basis = sh_basis(dir);
    let mut rgb = [0.5; 3];
    for (k, y) in basis.iter().enumerate() {
        for (c, out) in rgb.iter_mut().enumerate() {
            *out += h[k * 3 + c] * y;
        }
    }
    rgb.map(|v| v.max(0.0))
}

/// `∂Y_k/∂d` for every basis function, as rows of `[∂x, ∂y, ∂z]`.
pub fn sh_basis_jacobian(dir: &[f64; 3]) -> [[f64; 3]; SH_BASIS] {
    let [x, y, z] = *dir;
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (c2, c3) = (SH_C2, SH_C3);
    [
        [0.0, 0.0, 0.0],
        [0.0, -SH_C1, 0.0],
        [0.0, 0.0, SH_C1],
        [-SH_C1, 0.0, 0.0],
        [c2[0] * y, c2[0] * x, 0.0],
        [0.0, c2[1] * z, c2[1] * y],
        [-2.0 * c2[2] * x, -2.0 * c2[2] * y, 4.0 * c2[2] * z],
        [c2[3] * z, 0.0, c2[3] * x],
        [2.0 * c2[4] * x, -2.0 * c2[4] * y, 0.0],
        [6.0 * c3[0] * x * y, c3[0] * (3.0 * xx - 3.0 * yy), 0.0],
        [c3[1] * y * z, c3[1] * x * z, c3[1] * x * y],
        [-2.0 * c3[2] * x * y, c3[2] * (4.0 * zz - xx - 3.0 * yy), 8.0 * c3[2] * y * z],
        [-6.0 * c3[3] * x * z, -6.0 * c3[3] * y * z, c3[3] * (6.0 * zz - 3.0 * xx - 3.0 * yy)],
        [c3[4] * (4.0 * zz - 3.0 * xx - yy), -2.0 * c3[4] * x * y, 8.0 * c3[4] * x * z],
        [2.0 * c3[5] * x * z, -2.0 * c3[5] * y * z, c3[5] * (xx - yy)],
        [c3[6] * (3.0 * xx - 3.0 * yy), -6.0 * c3[6] * x * y, 0.0],
    ]
}

/// Accumulates `dL/dh` into `d_h` given `dL/drgb` and returns `dL/dd`;
/// clamped channels pass no gradient.
pub fn eval_sh_backward(h: &[f64; SH_COEFFS], dir: &[f64; 3], d_rgb: &[f64; 3], d_h: &mut [f64; SH_COEFFS]) -> [f64; 3] {
    let basis = sh_basis(dir);
    let jac = sh_basis_jacobian(dir);
    let mut raw = [0.5; 3];
    for (k, y) in basis.iter().enumerate() {
        for (c, out) in raw.iter_mut().enumerate() {
            *out += h[k * 3 + c] * y;
        }
    }
    let mut d_dir = [0.0; 3];
    for c in 0..3 {
        if raw[c] < 0.0 {
            continue;
        }
        for (k, y) in basis.iter().enumerate() {
            d_h[k * 3 + c] += y * d_rgb[c];
            for j in 0..3 {
                d_dir[j] += h[k * 3 + c] * jac[k][j] * d_rgb[c];
            }
        }
    }
    d_dir
}

/// SH degree-0 coefficient to RGB: `max(k·Y00 + 0.5, 0)`.
#[inline]
pub fn dc_to_rgb(k: f64) -> f64 {
    (k * SH_C0 + 0.5).max(0.0)
}
