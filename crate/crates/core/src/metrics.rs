//! Image quality metrics and the gradients needed by the training loss.

use crate::image::Image;

/// Reported PSNR for identical images.
pub const PSNR_CAP: f64 = 99.0;

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn check_shapes(a: &Image, b: &Image) {
    assert_eq!(
        (a.width, a.height, a.channels),
        (b.width, b.height, b.channels),
        "image shapes differ"
    );
}

pub fn mse(a: &Image, b: &Image) -> f64 {
    check_shapes(a, b);
    if a.data.is_empty() {
        return 0.0;
    }
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.data.len() as f64
}

/// Peak signal-to-noise ratio for unit-range images, capped at 99 dB.
pub fn psnr(a: &Image, b: &Image) -> f64 {
    let m = mse(a, b);
    if m == 0.0 {
        return PSNR_CAP;
    }
    (-10.0 * m.log10()).min(PSNR_CAP)
}

pub fn l1(a: &Image, b: &Image) -> f64 {
    check_shapes(a, b);
    if a.data.is_empty() {
        return 0.0;
    }
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.data.len() as f64
}

/// `d l1(a, b) / d a` (sign convention `sign(0) = 0`).
pub fn l1_grad(a: &Image, b: &Image) -> Vec<f64> {
    let n = a.data.len() as f64;
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| {
            let d = x - y;
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect()
}

fn gaussian_kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let half = (WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - half;
        *v = (-x * x / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Zero-padded "same" separable filtering of one plane. The kernel is
/// symmetric, so this operator is self-adjoint.
fn blur(plane: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let r = (WINDOW / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let xx = x as isize + j as isize - r;
                if xx >= 0 && (xx as usize) < w {
                    s += kv * plane[y * w + xx as usize];
                }
            }
            tmp[y * w + x] = s;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let yy = y as isize + j as isize - r;
                if yy >= 0 && (yy as usize) < h {
                    s += kv * tmp[yy as usize * w + x];
                }
            }
            out[y * w + x] = s;
        }
    }
    out
}

fn plane(img: &Image, c: usize) -> Vec<f64> {
    img.data.iter().skip(c).step_by(img.channels).copied().collect()
}

struct SsimStats {
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    b1: Vec<f64>,
    b2: Vec<f64>,
}

fn ssim_stats(x: &[f64], y: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> SsimStats {
    let mu_x = blur(x, w, h, k);
    let mu_y = blur(y, w, h, k);
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let e_xx = blur(&xx, w, h, k);
    let e_yy = blur(&yy, w, h, k);
    let e_xy = blur(&xy, w, h, k);
    let n = w * h;
    let mut s = SsimStats {
        mu_x,
        mu_y,
        a1: vec![0.0; n],
        a2: vec![0.0; n],
        b1: vec![0.0; n],
        b2: vec![0.0; n],
    };
    for i in 0..n {
        let (mx, my) = (s.mu_x[i], s.mu_y[i]);
        s.a1[i] = 2.0 * mx * my + C1;
        s.a2[i] = 2.0 * (e_xy[i] - mx * my) + C2;
        s.b1[i] = mx * mx + my * my + C1;
        s.b2[i] = (e_xx[i] - mx * mx) + (e_yy[i] - my * my) + C2;
    }
    s
}

/// Mean SSIM over pixels and channels (11×11 Gaussian window, σ = 1.5,
/// zero padding).
pub fn ssim(a: &Image, b: &Image) -> f64 {
    check_shapes(a, b);
    let (w, h) = (a.width, a.height);
    if w * h * a.channels == 0 {
        return 1.0;
    }
    let k = gaussian_kernel();
    let mut total = 0.0;
    for c in 0..a.channels {
        let st = ssim_stats(&plane(a, c), &plane(b, c), w, h, &k);
        for i in 0..w * h {
            total += st.a1[i] * st.a2[i] / (st.b1[i] * st.b2[i]);
        }
    }
    total / (w * h * a.channels) as f64
}

/// `d ssim(a, b) / d a`, interleaved like `a.data`.
pub fn ssim_grad(a: &Image, b: &Image) -> Vec<f64> {
    check_shapes(a, b);
    let (w, h) = (a.width, a.height);
    let n = w * h;
    let mut out = vec![0.0; a.data.len()];
    if n * a.channels == 0 {
        return out;
    }
    let scale = 1.0 / (n * a.channels) as f64;
    let k = gaussian_kernel();
    for c in 0..a.channels {
        let x = plane(a, c);
        let y = plane(b, c);
        let st = ssim_stats(&x, &y, w, h, &k);
        let mut d_mu = vec![0.0; n];
        let mut d_exx = vec![0.0; n];
        let mut d_exy = vec![0.0; n];
        for i in 0..n {
            let s = st.a1[i] * st.a2[i] / (st.b1[i] * st.b2[i]);
            let (mx, my) = (st.mu_x[i], st.mu_y[i]);
            d_mu[i] = scale * s * (2.0 * my / st.a1[i] - 2.0 * my / st.a2[i] - 2.0 * mx / st.b1[i] + 2.0 * mx / st.b2[i]);
            d_exx[i] = -scale * s / st.b2[i];
            d_exy[i] = scale * 2.0 * s / st.a2[i];
        }
        let g_mu = blur(&d_mu, w, h, &k);
        let g_xx = blur(&d_exx, w, h, &k);
        let g_xy = blur(&d_exy, w, h, &k);
        for i in 0..n {
            out[i * a.channels + c] = g_mu[i] + 2.0 * x[i] * g_xx[i] + y[i] * g_xy[i];
        }
    }
    out
}
