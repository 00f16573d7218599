//! Per-pixel front-to-back compositing and its adjoint.

use super::{Projected, Projected2D, RenderSettings};

/// Per-item gradient accumulator.
#[derive(Clone, Debug)]
pub(crate) struct PixelGrad {
    pub mean: [f64; 2],
    pub conic: [f64; 3],
    pub opacity: f64,
    pub features: Vec<f64>,
}

impl PixelGrad {
    pub fn zeros(dim: usize) -> Self {
        PixelGrad {
            mean: [0.0; 2],
            conic: [0.0; 3],
            opacity: 0.0,
            features: vec![0.0; dim],
        }
    }

    pub fn add(&mut self, other: &PixelGrad) {
        self.mean[0] += other.mean[0];
        self.mean[1] += other.mean[1];
        for k in 0..3 {
            self.conic[k] += other.conic[k];
        }
        self.opacity += other.opacity;
        for (a, b) in self.features.iter_mut().zip(&other.features) {
            *a += b;
        }
    }
}

#[inline]
fn covers(p: &Projected, x: usize, y: usize) -> bool {
    let [x0, y0, x1, y1] = p.bounds;
    x >= x0 && x <= x1 && y >= y0 && y <= y1
}

/// Offset of the pixel center from the mean and the Gaussian exponent.
#[inline]
fn falloff(p: &Projected, x: usize, y: usize) -> (f64, f64, f64) {
    let dx = x as f64 + 0.5 - p.mean[0];
    let dy = y as f64 + 0.5 - p.mean[1];
    let [a, b, c] = p.conic;
    let power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy;
    (dx, dy, power)
}

/// `(alpha, gaussian, clamped)` for one item at one pixel, or `None` when the
/// item is skipped.
#[inline]
fn alpha_at(p: &Projected, x: usize, y: usize, settings: &RenderSettings) -> Option<(f64, f64, bool, f64, f64)> {
    if !covers(p, x, y) {
        return None;
    }
    let (dx, dy, power) = falloff(p, x, y);
    if power > 0.0 {
        return None;
    }
    let g = power.exp();
    let raw = p.opacity * g;
    let (alpha, clamped) = if raw > settings.alpha_max {
        (settings.alpha_max, true)
    } else {
        (raw, false)
    };
    if alpha < settings.alpha_min {
        return None;
    }
    Some((alpha, g, clamped, dx, dy))
}

pub(crate) fn composite_items(
    items: &[&Projected],
    features: &[f64],
    dim: usize,
    background: &[f64],
    x: usize,
    y: usize,
    settings: &RenderSettings,
) -> (Vec<f64>, f64) {
    let mut out = vec![0.0; dim];
    let mut t = 1.0;
    for p in items {
        let Some((alpha, ..)) = alpha_at(p, x, y, settings) else {
            continue;
        };
        let next_t = t * (1.0 - alpha);
        if next_t < settings.transmittance_min {
            break;
        }
        let w = alpha * t;
        let f = &features[p.index * dim..(p.index + 1) * dim];
        for (o, c) in out.iter_mut().zip(f) {
            *o += c * w;
        }
        t = next_t;
    }
    for (o, b) in out.iter_mut().zip(background) {
        *o += t * b;
    }
    (out, t)
}

/// Composited `dim`-vector at pixel `(x, y)`, background included.
pub fn composite(
    proj: &Projected2D,
    features: &[f64],
    dim: usize,
    x: usize,
    y: usize,
    settings: &RenderSettings,
) -> Vec<f64> {
    composite_with_transmittance(proj, features, dim, x, y, settings).0
}

/// Like [`composite`], also returning the final transmittance.
pub fn composite_with_transmittance(
    proj: &Projected2D,
    features: &[f64],
    dim: usize,
    x: usize,
    y: usize,
    settings: &RenderSettings,
) -> (Vec<f64>, f64) {
    let items: Vec<&Projected> = proj.items.iter().collect();
    let background = settings.background_for(dim);
    composite_items(&items, features, dim, &background, x, y, settings)
}

struct Contribution {
    slot: usize,
    alpha: f64,
    gauss: f64,
    clamped: bool,
    dx: f64,
    dy: f64,
    t_before: f64,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn composite_backward_pixel(
    items: &[&Projected],
    features: &[f64],
    dim: usize,
    background: &[f64],
    x: usize,
    y: usize,
    settings: &RenderSettings,
    d_pixel: &[f64],
    grads: &mut [PixelGrad],
    d_background: &mut [f64],
) {
    if d_pixel.iter().all(|&g| g == 0.0) {
        return;
    }
    let mut contribs = Vec::new();
    let mut t = 1.0;
    for (slot, p) in items.iter().enumerate() {
        let Some((alpha, gauss, clamped, dx, dy)) = alpha_at(p, x, y, settings) else {
            continue;
        };
        let next_t = t * (1.0 - alpha);
        if next_t < settings.transmittance_min {
            break;
        }
        contribs.push(Contribution {
            slot,
            alpha,
            gauss,
            clamped,
            dx,
            dy,
            t_before: t,
        });
        t = next_t;
    }

    // suffix[c] = Σ_{j>k} f_j α_j T_j + T_final · bg, built back to front.
    let mut suffix: Vec<f64> = background.iter().map(|b| b * t).collect();
    for (d, g) in d_background.iter_mut().zip(d_pixel) {
        *d += g * t;
    }
    for c in contribs.iter().rev() {
        let p = items[c.slot];
        let f = &features[p.index * dim..(p.index + 1) * dim];
        let w = c.alpha * c.t_before;
        let mut d_alpha = 0.0;
        for ch in 0..dim {
            d_alpha += d_pixel[ch] * (f[ch] * c.t_before - suffix[ch] / (1.0 - c.alpha));
        }
        let g = &mut grads[c.slot];
        for ch in 0..dim {
            g.features[ch] += d_pixel[ch] * w;
            suffix[ch] += f[ch] * w;
        }
        if c.clamped {
            continue;
        }
        g.opacity += d_alpha * c.gauss;
        let d_power = d_alpha * c.alpha;
        let [a, b, cc] = p.conic;
        g.mean[0] += d_power * (a * c.dx + b * c.dy);
        g.mean[1] += d_power * (b * c.dx + cc * c.dy);
        g.conic[0] += d_power * (-0.5 * c.dx * c.dx);
        g.conic[1] += d_power * (-c.dx * c.dy);
        g.conic[2] += d_power * (-0.5 * c.dy * c.dy);
    }
}
