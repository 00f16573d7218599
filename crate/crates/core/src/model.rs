//! Trained scene models and their differentiable render passes.

use rayon::prelude::*;

use crate::dynamic::{render_dynamic, DynFrame, DynGaussianSet, PhiMlp};
use crate::field::{view_direction, view_direction_backward, ColorField, FieldCache, FieldGrads};
use crate::image::Image;
use crate::mask::{apply_static, mask_param_grad, HardMask, MaskState, MaskedAttributes};
use crate::math::sigmoid_grad_from_value;
use crate::render::sh::{eval_sh, eval_sh_backward};
use crate::render::{render, render_backward, RenderOutput, RenderSettings, SplatInputs};
use crate::rvq::{AttributeKind, QuantizedAttribute};
use crate::scene::{Camera, ColorSource, GaussianSet, SH_COEFFS};

#[derive(Clone, Debug, PartialEq)]
pub struct StaticModel {
    pub gaussians: GaussianSet,
    /// Present when `gaussians.color` is [`ColorSource::Field`].
    pub field: Option<ColorField>,
    /// Codebooks and indices of attributes stored as R-VQ codes. The
    /// matching Gaussian attributes hold the reconstructions.
    pub quantized: Vec<QuantizedAttribute>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicModel {
    pub gaussians: DynGaussianSet,
    pub field: Option<ColorField>,
    pub phi: PhiMlp,
    pub quantized: Vec<QuantizedAttribute>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Static(StaticModel),
    Dynamic(DynamicModel),
}

impl Model {
    pub fn len(&self) -> usize {
        match self {
            Model::Static(m) => m.gaussians.len(),
            Model::Dynamic(m) => m.gaussians.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mode(&self) -> &'static str {
        match self {
            Model::Static(_) => "static",
            Model::Dynamic(_) => "dynamic",
        }
    }

    /// RGB render at time `t` (ignored by static models).
    pub fn render(&self, cam: &Camera, t: f64, settings: &RenderSettings) -> Image {
        match self {
            Model::Static(m) => m.render(cam, settings),
            Model::Dynamic(m) => m.render(cam, t, settings),
        }
    }

    pub fn quantized(&self) -> &[QuantizedAttribute] {
        match self {
            Model::Static(m) => &m.quantized,
            Model::Dynamic(m) => &m.quantized,
        }
    }
}

impl StaticModel {
    pub fn render(&self, cam: &Camera, settings: &RenderSettings) -> Image {
        let pass = StaticPass::new(&self.gaussians, self.field.as_ref(), None, cam);
        pass.render(&self.gaussians, cam, settings).image
    }

    pub fn quantized_attribute(&self, kind: AttributeKind) -> Option<&QuantizedAttribute> {
        self.quantized.iter().find(|q| q.kind == kind)
    }
}

impl DynamicModel {
    pub fn field_features(&self) -> Option<Vec<[f64; 6]>> {
        self.field.as_ref().map(|f| field_features(f, &self.gaussians.positions))
    }

    pub fn render(&self, cam: &Camera, t: f64, settings: &RenderSettings) -> Image {
        let feats = self.field_features();
        let frame = DynFrame::build(&self.gaussians, None, feats.as_deref(), t);
        render_dynamic(&frame, &self.phi, cam, settings)
    }
}

/// Six-channel field features at the canonical positions.
pub fn field_features(field: &ColorField, positions: &[[f64; 3]]) -> Vec<[f64; 6]> {
    positions.par_iter().map(|p| field.query_features(p)).collect()
}

/// Per-view state of a static render: colors, view directions and masking.
#[derive(Clone, Debug)]
pub struct StaticPass {
    pub colors: Vec<f64>,
    pub directions: Vec<[f64; 3]>,
    field_caches: Option<Vec<FieldCache>>,
    pub masked: MaskedAttributes,
    pub unmasked_scales: Vec<[f64; 3]>,
    pub unmasked_opacities: Vec<f64>,
}

impl StaticPass {
    pub fn new(g: &GaussianSet, field: Option<&ColorField>, mask: Option<&MaskState>, cam: &Camera) -> StaticPass {
        let center = cam.center();
        let directions: Vec<[f64; 3]> = g.positions.iter().map(|p| view_direction(p, &center)).collect();
        let (colors, field_caches) = match (&g.color, field) {
            (ColorSource::Sh(sh), _) => {
                let colors = sh
                    .par_iter()
                    .zip(directions.par_iter())
                    .flat_map_iter(|(h, d)| eval_sh(h, d))
                    .collect();
                (colors, None)
            }
            (ColorSource::Field, Some(f)) => {
                let (c, caches) = f.forward_batch(&g.positions, Some(&directions));
                (c, Some(caches))
            }
            (ColorSource::Field, None) => panic!("field-colored Gaussians need a color field"),
        };
        let unmasked_scales = g.scales();
        let unmasked_opacities = g.opacities();
        let masked = match mask {
            Some(m) => apply_static(g, m),
            None => MaskedAttributes {
                scales: unmasked_scales.clone(),
                opacities: unmasked_opacities.clone(),
                masks: vec![HardMask { value: 1.0, grad: 0.0 }; g.len()],
            },
        };
        StaticPass {
            colors,
            directions,
            field_caches,
            masked,
            unmasked_scales,
            unmasked_opacities,
        }
    }

    pub fn inputs<'a>(&'a self, g: &'a GaussianSet) -> SplatInputs<'a> {
        SplatInputs {
            positions: &g.positions,
            scales: &self.masked.scales,
            rotations: &g.rotations,
            opacities: &self.masked.opacities,
            features: &self.colors,
            dim: 3,
        }
    }

    pub fn render(&self, g: &GaussianSet, cam: &Camera, settings: &RenderSettings) -> RenderOutput {
        render(&self.inputs(g), cam, settings)
    }

    /// Gradients of `Σ d_image ⊙ render` w.r.t. the stored attributes.
    pub fn backward(
        &self,
        g: &GaussianSet,
        field: Option<&ColorField>,
        cam: &Camera,
        settings: &RenderSettings,
        d_image: &Image,
    ) -> StaticGrads {
        let n = g.len();
        let sg = render_backward(&self.inputs(g), cam, settings, d_image);
        let center = cam.center();
        let mut out = StaticGrads::zeros(n, matches!(g.color, ColorSource::Sh(_)));
        let mut d_dirs = vec![[0.0; 3]; n];
        match (&g.color, field) {
            (ColorSource::Sh(sh), _) => {
                for i in 0..n {
                    let d_rgb = [sg.features[3 * i], sg.features[3 * i + 1], sg.features[3 * i + 2]];
                    d_dirs[i] = eval_sh_backward(&sh[i], &self.directions[i], &d_rgb, &mut out.sh[i]);
                }
            }
            (ColorSource::Field, Some(f)) => {
                let caches = self.field_caches.as_ref().expect("field pass without caches");
                let fg = f.backward_batch(caches, &sg.features);
                d_dirs.copy_from_slice(&fg.directions);
                out.field = Some(fg);
            }
            (ColorSource::Field, None) => panic!("field-colored Gaussians need a color field"),
        }
        for i in 0..n {
            let dp = view_direction_backward(&g.positions[i], &center, &d_dirs[i]);
            let m = self.masked.masks[i].value;
            for k in 0..3 {
                out.positions[i][k] = sg.positions[i][k] + dp[k];
                out.log_scales[i][k] = sg.scales[i][k] * m * self.unmasked_scales[i][k];
            }
            out.rotations[i] = sg.rotations[i];
            out.opacity_logits[i] = sg.opacities[i] * m * sigmoid_grad_from_value(self.unmasked_opacities[i]);
            out.means2d[i] = sg.means2d[i];
        }
        out.mask = mask_param_grad(
            &self.masked.masks,
            &self.unmasked_scales,
            &self.unmasked_opacities,
            &sg.scales,
            &sg.opacities,
        );
        out
    }
}

/// Gradients w.r.t. every learnable static quantity.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticGrads {
    pub positions: Vec<[f64; 3]>,
    pub log_scales: Vec<[f64; 3]>,
    pub rotations: Vec<[f64; 4]>,
    pub opacity_logits: Vec<f64>,
    /// Empty for field-colored sets.
    pub sh: Vec<[f64; SH_COEFFS]>,
    pub field: Option<FieldGrads>,
    pub mask: Vec<f64>,
    pub means2d: Vec<[f64; 2]>,
}

impl StaticGrads {
    pub fn zeros(n: usize, sh: bool) -> Self {
        StaticGrads {
            positions: vec![[0.0; 3]; n],
            log_scales: vec![[0.0; 3]; n],
            rotations: vec![[0.0; 4]; n],
            opacity_logits: vec![0.0; n],
            sh: if sh { vec![[0.0; SH_COEFFS]; n] } else { Vec::new() },
            field: None,
            mask: vec![0.0; n],
            means2d: vec![[0.0; 2]; n],
        }
    }
}
