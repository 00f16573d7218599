//! Space-time Gaussians: polynomial motion, temporal radial-basis opacity,
//! 9-D splatted features and the per-pixel color decoder φ.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::mask::{mask_param_grad, MaskState, MaskedAttributes};
use crate::math::{normalize_quat, sigmoid, sigmoid_grad_from_value, Mat3};
use crate::mlp::Mlp;
use crate::render::{build_covariance, render, render_backward, RenderSettings, SplatGradients, SplatInputs};
use crate::scene::Camera;

/// Polynomial order of the position trajectory.
pub const POSITION_ORDER: usize = 3;
/// Polynomial order of the rotation trajectory.
pub const ROTATION_ORDER: usize = 1;
/// Splatted feature width.
pub const FEATURE_DIM: usize = 9;

/// Per-Gaussian color representation of a space-time set.
#[derive(Clone, Debug, PartialEq)]
pub enum DynColor {
    /// Full learnable 9-D features.
    Features(Vec<[f64; FEATURE_DIM]>),
    /// The first six channels come from a color field queried at the
    /// canonical position; only the temporal part is stored.
    Field { temporal: Vec<[f64; 3]> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynGaussianSet {
    /// Canonical positions.
    pub positions: Vec<[f64; 3]>,
    /// Canonical raw quaternions.
    pub rotations: Vec<[f64; 4]>,
    pub log_scales: Vec<[f64; 3]>,
    pub opacity_logits: Vec<f64>,
    pub color: DynColor,
    /// Position coefficients, order 1..=3.
    pub motion: Vec<[[f64; 3]; POSITION_ORDER]>,
    /// Rotation coefficient of order 1.
    pub rotation_coeffs: Vec<[f64; 4]>,
    /// Temporal centers μ.
    pub centers: Vec<f64>,
    /// `log ξ`.
    pub log_temporal_scales: Vec<f64>,
}

impl DynGaussianSet {
    pub fn empty(field: bool) -> Self {
        DynGaussianSet {
            positions: Vec::new(),
            rotations: Vec::new(),
            log_scales: Vec::new(),
            opacity_logits: Vec::new(),
            color: if field {
                DynColor::Field { temporal: Vec::new() }
            } else {
                DynColor::Features(Vec::new())
            },
            motion: Vec::new(),
            rotation_coeffs: Vec::new(),
            centers: Vec::new(),
            log_temporal_scales: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn uses_field(&self) -> bool {
        matches!(self.color, DynColor::Field { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let color_len = match &self.color {
            DynColor::Features(f) => f.len(),
            DynColor::Field { temporal } => temporal.len(),
        };
        let lens = [
            self.rotations.len(),
            self.log_scales.len(),
            self.opacity_logits.len(),
            color_len,
            self.motion.len(),
            self.rotation_coeffs.len(),
            self.centers.len(),
            self.log_temporal_scales.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::InvalidArgument("space-time attribute arrays differ in length".into()));
        }
        Ok(())
    }

    pub fn scales(&self) -> Vec<[f64; 3]> {
        self.log_scales.iter().map(|s| s.map(f64::exp)).collect()
    }

    pub fn opacity(&self, n: usize) -> f64 {
        sigmoid(self.opacity_logits[n])
    }

    pub fn temporal_scale(&self, n: usize) -> f64 {
        self.log_temporal_scales[n].exp()
    }

    /// `sp + Σ_k u_k (t − μ)^k`.
    pub fn position_at(&self, n: usize, t: f64) -> [f64; 3] {
        let tau = t - self.centers[n];
        let mut p = self.positions[n];
        let mut pow = 1.0;
        for u in &self.motion[n] {
            pow *= tau;
            for k in 0..3 {
                p[k] += u[k] * pow;
            }
        }
        p
    }

    /// Unnormalized `sr + v (t − μ)`.
    pub fn rotation_at(&self, n: usize, t: f64) -> [f64; 4] {
        let tau = t - self.centers[n];
        let mut r = self.rotations[n];
        for k in 0..4 {
            r[k] += self.rotation_coeffs[n][k] * tau;
        }
        r
    }

    /// `σ(so) · exp(−ξ (t − μ)²)`.
    pub fn temporal_opacity(&self, n: usize, t: f64) -> f64 {
        let tau = t - self.centers[n];
        self.opacity(n) * (-self.temporal_scale(n) * tau * tau).exp()
    }

    pub fn time_covariance(&self, n: usize, t: f64) -> Mat3 {
        let s = self.log_scales[n].map(f64::exp);
        build_covariance(&s, &normalize_quat(&self.rotation_at(n, t)))
    }

    /// `stack(sc_{1:6}, (t − μ) sc_{7:9})`. With a field color source the
    /// first six entries are taken from `field_features`.
    pub fn feature_at(&self, n: usize, t: f64, field_features: Option<&[f64; 6]>) -> [f64; FEATURE_DIM] {
        let tau = t - self.centers[n];
        let mut f = [0.0; FEATURE_DIM];
        match &self.color {
            DynColor::Features(sc) => {
                f[..6].copy_from_slice(&sc[n][..6]);
                for k in 0..3 {
                    f[6 + k] = tau * sc[n][6 + k];
                }
            }
            DynColor::Field { temporal } => {
                let spatial = field_features.expect("field-colored set needs field features");
                f[..6].copy_from_slice(spatial);
                for k in 0..3 {
                    f[6 + k] = tau * temporal[n][k];
                }
            }
        }
        f
    }

    /// Stored temporal color part: `sc_{7:9}`.
    pub fn temporal_color(&self) -> Vec<[f64; 3]> {
        match &self.color {
            DynColor::Features(sc) => sc.iter().map(|f| [f[6], f[7], f[8]]).collect(),
            DynColor::Field { temporal } => temporal.clone(),
        }
    }

    pub fn set_temporal_color(&mut self, values: &[[f64; 3]]) {
        match &mut self.color {
            DynColor::Features(sc) => {
                for (f, v) in sc.iter_mut().zip(values) {
                    f[6..].copy_from_slice(v);
                }
            }
            DynColor::Field { temporal } => temporal.copy_from_slice(values),
        }
    }

    pub fn select(&self, indices: &[usize]) -> DynGaussianSet {
        fn pick<T: Clone>(v: &[T], idx: &[usize]) -> Vec<T> {
            idx.iter().map(|&i| v[i].clone()).collect()
        }
        DynGaussianSet {
            positions: pick(&self.positions, indices),
            rotations: pick(&self.rotations, indices),
            log_scales: pick(&self.log_scales, indices),
            opacity_logits: pick(&self.opacity_logits, indices),
            color: match &self.color {
                DynColor::Features(f) => DynColor::Features(pick(f, indices)),
                DynColor::Field { temporal } => DynColor::Field {
                    temporal: pick(temporal, indices),
                },
            },
            motion: pick(&self.motion, indices),
            rotation_coeffs: pick(&self.rotation_coeffs, indices),
            centers: pick(&self.centers, indices),
            log_temporal_scales: pick(&self.log_temporal_scales, indices),
        }
    }
}

/// The view/time color decoder: `C = F_{1:3} + φ(F_{4:9}, d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiMlp {
    pub mlp: Mlp,
}

impl PhiMlp {
    pub fn new(hidden_width: usize, hidden_layers: usize, seed: u64) -> Self {
        PhiMlp {
            mlp: Mlp::new(&Self::sizes(hidden_width, hidden_layers), seed),
        }
    }

    pub fn sizes(hidden_width: usize, hidden_layers: usize) -> Vec<usize> {
        let mut s = vec![9];
        s.extend(std::iter::repeat_n(hidden_width, hidden_layers));
        s.push(3);
        s
    }

    pub fn zeros(hidden_width: usize, hidden_layers: usize) -> Self {
        PhiMlp {
            mlp: Mlp::zeros(&Self::sizes(hidden_width, hidden_layers)),
        }
    }

    fn input(f: &[f64], d: &[f64; 3]) -> [f64; 9] {
        let mut x = [0.0; 9];
        x[..6].copy_from_slice(&f[3..9]);
        x[6..].copy_from_slice(d);
        x
    }

    pub fn decode_color(&self, f: &[f64], d: &[f64; 3]) -> [f64; 3] {
        let y = self.mlp.forward(&Self::input(f, d));
        [f[0] + y[0], f[1] + y[1], f[2] + y[2]]
    }

    /// Accumulates `dL/dφ` into `d_params` and returns `dL/dF`.
    pub fn decode_color_backward(&self, f: &[f64], d: &[f64; 3], d_rgb: &[f64; 3], d_params: &mut [f64]) -> [f64; FEATURE_DIM] {
        let cache = self.mlp.forward_cached(&Self::input(f, d));
        let d_in = self.mlp.backward(&cache, d_rgb, d_params);
        let mut d_f = [0.0; FEATURE_DIM];
        d_f[..3].copy_from_slice(d_rgb);
        d_f[3..].copy_from_slice(&d_in[..6]);
        d_f
    }
}

/// Per-pixel ray direction through the pixel center.
pub fn pixel_direction(cam: &Camera, x: usize, y: usize) -> [f64; 3] {
    let d = cam.ray_direction(x as f64 + 0.5, y as f64 + 0.5);
    [d[0], d[1], d[2]]
}

/// Rasterizer inputs of a space-time set at one timestamp.
#[derive(Clone, Debug, PartialEq)]
pub struct DynFrame {
    pub time: f64,
    pub positions: Vec<[f64; 3]>,
    pub rotations: Vec<[f64; 4]>,
    pub unmasked_scales: Vec<[f64; 3]>,
    pub unmasked_opacities: Vec<f64>,
    pub masked: MaskedAttributes,
    pub features: Vec<f64>,
}

impl DynFrame {
    /// Evaluates every Gaussian at time `t`. Without a mask all masks are 1.
    pub fn build(set: &DynGaussianSet, mask: Option<&MaskState>, field_features: Option<&[[f64; 6]]>, t: f64) -> DynFrame {
        let n = set.len();
        let positions = (0..n).map(|i| set.position_at(i, t)).collect();
        let rotations = (0..n).map(|i| set.rotation_at(i, t)).collect();
        let unmasked_scales = set.scales();
        let unmasked_opacities: Vec<f64> = (0..n).map(|i| set.temporal_opacity(i, t)).collect();
        let masked = match mask {
            Some(m) => crate::mask::apply_dynamic(set, m, t),
            None => MaskedAttributes {
                scales: unmasked_scales.clone(),
                opacities: unmasked_opacities.clone(),
                masks: vec![crate::mask::HardMask { value: 1.0, grad: 0.0 }; n],
            },
        };
        let mut features = Vec::with_capacity(n * FEATURE_DIM);
        for i in 0..n {
            features.extend_from_slice(&set.feature_at(i, t, field_features.map(|f| &f[i])));
        }
        DynFrame {
            time: t,
            positions,
            rotations,
            unmasked_scales,
            unmasked_opacities,
            masked,
            features,
        }
    }

    pub fn inputs(&self) -> SplatInputs<'_> {
        SplatInputs {
            positions: &self.positions,
            scales: &self.masked.scales,
            rotations: &self.rotations,
            opacities: &self.masked.opacities,
            features: &self.features,
            dim: FEATURE_DIM,
        }
    }
}

fn feature_settings(settings: &RenderSettings) -> RenderSettings {
    settings.clone().with_background(Vec::new())
}

/// RGB background term for a pixel with final transmittance `t`.
fn background_rgb(settings: &RenderSettings) -> [f64; 3] {
    match settings.background.len() {
        0 => [0.0; 3],
        3 => [settings.background[0], settings.background[1], settings.background[2]],
        _ => panic!("space-time renders take an RGB background"),
    }
}

/// Splats 9-D features, decodes each pixel with φ and adds the background
/// weighted by the final transmittance.
pub fn render_dynamic(frame: &DynFrame, phi: &PhiMlp, cam: &Camera, settings: &RenderSettings) -> Image {
    let feat = render(&frame.inputs(), cam, &feature_settings(settings));
    let bg = background_rgb(settings);
    let w = cam.width;
    let data: Vec<f64> = (0..cam.height * w)
        .into_par_iter()
        .flat_map_iter(|i| {
            let (x, y) = (i % w, i / w);
            let f = feat.image.pixel(x, y);
            let c = phi.decode_color(f, &pixel_direction(cam, x, y));
            let t = feat.transmittance[i];
            [c[0] + t * bg[0], c[1] + t * bg[1], c[2] + t * bg[2]]
        })
        .collect();
    Image {
        width: cam.width,
        height: cam.height,
        channels: 3,
        data,
    }
}

/// Gradients of `Σ d_rgb ⊙ render_dynamic(...)` w.r.t. the splat inputs and φ.
pub fn render_dynamic_backward(
    frame: &DynFrame,
    phi: &PhiMlp,
    cam: &Camera,
    settings: &RenderSettings,
    d_rgb: &Image,
) -> (SplatGradients, Vec<f64>) {
    let fs = feature_settings(settings);
    let inputs = frame.inputs();
    let feat = render(&inputs, cam, &fs);
    let bg = background_rgb(settings);
    let w = cam.width;
    const ROWS: usize = 4;
    // Row blocks give a fixed reduction order for the φ gradient.
    let blocks: Vec<(Vec<f64>, Vec<f64>)> = (0..cam.height.div_ceil(ROWS))
        .into_par_iter()
        .map(|b| {
            let mut d_phi = vec![0.0; phi.mlp.num_params()];
            let mut d_feat = Vec::new();
            for y in b * ROWS..((b + 1) * ROWS).min(cam.height) {
                for x in 0..w {
                    let g = d_rgb.pixel(x, y);
                    let g = [g[0], g[1], g[2]];
                    let f = feat.image.pixel(x, y);
                    d_feat.extend_from_slice(&phi.decode_color_backward(f, &pixel_direction(cam, x, y), &g, &mut d_phi));
                }
            }
            (d_phi, d_feat)
        })
        .collect();
    let mut d_phi = vec![0.0; phi.mlp.num_params()];
    let mut d_feat = Vec::with_capacity(w * cam.height * FEATURE_DIM);
    for (p, f) in blocks {
        for (a, b) in d_phi.iter_mut().zip(p) {
            *a += b;
        }
        d_feat.extend(f);
    }
    let d_image = Image {
        width: w,
        height: cam.height,
        channels: FEATURE_DIM,
        data: d_feat,
    };
    let mut grads = render_backward(&inputs, cam, &fs, &d_image);
    // The background enters through the final transmittance; its effect on
    // the splat parameters is handled by re-using the background term of the
    // compositing adjoint with a 9-D background that carries the RGB part.
    if bg != [0.0; 3] {
        let mut bg9 = vec![0.0; FEATURE_DIM];
        bg9[..3].copy_from_slice(&bg);
        let mut d_bg_only = Image::new(w, cam.height, FEATURE_DIM);
        for i in 0..w * cam.height {
            d_bg_only.data[i * FEATURE_DIM..i * FEATURE_DIM + 3].copy_from_slice(&d_rgb.data[i * 3..i * 3 + 3]);
        }
        let zero_feat = vec![0.0; inputs.features.len()];
        let bg_inputs = SplatInputs {
            features: &zero_feat,
            ..inputs
        };
        let extra = render_backward(&bg_inputs, cam, &fs.clone().with_background(bg9), &d_bg_only);
        for i in 0..grads.positions.len() {
            for k in 0..3 {
                grads.positions[i][k] += extra.positions[i][k];
                grads.scales[i][k] += extra.scales[i][k];
            }
            for k in 0..4 {
                grads.rotations[i][k] += extra.rotations[i][k];
            }
            grads.opacities[i] += extra.opacities[i];
            for k in 0..2 {
                grads.means2d[i][k] += extra.means2d[i][k];
            }
        }
    }
    (grads, d_phi)
}

/// Gradients w.r.t. every stored space-time parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct DynGrads {
    pub positions: Vec<[f64; 3]>,
    pub rotations: Vec<[f64; 4]>,
    pub log_scales: Vec<[f64; 3]>,
    pub opacity_logits: Vec<f64>,
    /// `N × 9` for feature sets; for field sets the first six columns are
    /// the gradient w.r.t. the field features and must be pushed through
    /// the field by the caller.
    pub features: Vec<[f64; FEATURE_DIM]>,
    pub motion: Vec<[[f64; 3]; POSITION_ORDER]>,
    pub rotation_coeffs: Vec<[f64; 4]>,
    pub centers: Vec<f64>,
    pub log_temporal_scales: Vec<f64>,
    pub mask: Vec<f64>,
    pub means2d: Vec<[f64; 2]>,
}

impl DynGrads {
    pub fn zeros(n: usize) -> Self {
        DynGrads {
            positions: vec![[0.0; 3]; n],
            rotations: vec![[0.0; 4]; n],
            log_scales: vec![[0.0; 3]; n],
            opacity_logits: vec![0.0; n],
            features: vec![[0.0; FEATURE_DIM]; n],
            motion: vec![[[0.0; 3]; POSITION_ORDER]; n],
            rotation_coeffs: vec![[0.0; 4]; n],
            centers: vec![0.0; n],
            log_temporal_scales: vec![0.0; n],
            mask: vec![0.0; n],
            means2d: vec![[0.0; 2]; n],
        }
    }

    pub fn add(&mut self, other: &DynGrads) {
        fn add_rows<const K: usize>(a: &mut [[f64; K]], b: &[[f64; K]]) {
            for (x, y) in a.iter_mut().zip(b) {
                for k in 0..K {
                    x[k] += y[k];
                }
            }
        }
        fn add_flat(a: &mut [f64], b: &[f64]) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        add_rows(&mut self.positions, &other.positions);
        add_rows(&mut self.rotations, &other.rotations);
        add_rows(&mut self.log_scales, &other.log_scales);
        add_flat(&mut self.opacity_logits, &other.opacity_logits);
        add_rows(&mut self.features, &other.features);
        for (x, y) in self.motion.iter_mut().zip(&other.motion) {
            for k in 0..POSITION_ORDER {
                for c in 0..3 {
                    x[k][c] += y[k][c];
                }
            }
        }
        add_rows(&mut self.rotation_coeffs, &other.rotation_coeffs);
        add_flat(&mut self.centers, &other.centers);
        add_flat(&mut self.log_temporal_scales, &other.log_temporal_scales);
        add_flat(&mut self.mask, &other.mask);
        add_rows(&mut self.means2d, &other.means2d);
    }
}

/// Chains rasterizer gradients at time `frame.time` back to the stored
/// parameters of `set`.
pub fn chain_dynamic_grads(set: &DynGaussianSet, frame: &DynFrame, g: &SplatGradients) -> DynGrads {
    let n = set.len();
    let t = frame.time;
    let temporal = set.temporal_color();
    let mut out = DynGrads::zeros(n);
    for i in 0..n {
        let tau = t - set.centers[i];
        let m = frame.masked.masks[i].value;
        let mut d_mu = 0.0;

        // Position polynomial.
        let gp = g.positions[i];
        out.positions[i] = gp;
        let mut pow = 1.0;
        for k in 0..POSITION_ORDER {
            let u = set.motion[i][k];
            for c in 0..3 {
                out.motion[i][k][c] = gp[c] * pow * tau;
                // d(τ^{k+1})/dμ = −(k+1) τ^k
                d_mu -= gp[c] * u[c] * (k + 1) as f64 * pow;
            }
            pow *= tau;
        }

        // Rotation polynomial.
        let gr = g.rotations[i];
        out.rotations[i] = gr;
        for c in 0..4 {
            out.rotation_coeffs[i][c] = gr[c] * tau;
            d_mu -= gr[c] * set.rotation_coeffs[i][c];
        }

        // Masked scale.
        let s = frame.unmasked_scales[i];
        for c in 0..3 {
            out.log_scales[i][c] = g.scales[i][c] * m * s[c];
        }

        // Masked temporal opacity.
        let o_t = frame.unmasked_opacities[i];
        let d_ot = g.opacities[i] * m;
        let so = set.opacity(i);
        let xi = set.temporal_scale(i);
        let decay = (-xi * tau * tau).exp();
        out.opacity_logits[i] = d_ot * decay * sigmoid_grad_from_value(so);
        out.log_temporal_scales[i] = d_ot * (-o_t * tau * tau) * xi;
        d_mu += d_ot * o_t * 2.0 * xi * tau;

        // Features.
        let gf = &g.features[i * FEATURE_DIM..(i + 1) * FEATURE_DIM];
        out.features[i][..6].copy_from_slice(&gf[..6]);
        for c in 0..3 {
            out.features[i][6 + c] = gf[6 + c] * tau;
            d_mu -= gf[6 + c] * temporal[i][c];
        }

        out.centers[i] = d_mu;
        out.means2d[i] = g.means2d[i];
    }
    out.mask = mask_param_grad(
        &frame.masked.masks,
        &frame.unmasked_scales,
        &frame.unmasked_opacities,
        &g.scales,
        &g.opacities,
    );
    out
}
