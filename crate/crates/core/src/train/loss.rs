use serde::{Deserialize, Serialize};

use crate::image::Image;
use crate::mask::{mask_loss, MaskState};
use crate::metrics::{l1, l1_grad, ssim, ssim_grad};
use crate::rvq::{AttributeKind, QuantizedAttribute};

/// Loss terms of one iteration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l1: f64,
    pub ssim: f64,
    /// `(1 − λ_ssim) L1 + λ_ssim (1 − SSIM)`.
    pub render: f64,
    /// Unweighted mask loss.
    pub mask: f64,
    pub lambda_mask: f64,
    pub rvq_scale: f64,
    pub rvq_rotation: f64,
    pub rvq_rotation_coeffs: f64,
    pub rvq_temporal_color: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn rvq_sum(&self) -> f64 {
        self.rvq_scale + self.rvq_rotation + self.rvq_rotation_coeffs + self.rvq_temporal_color
    }

    pub fn recompute_total(&mut self) {
        self.total = self.render + self.lambda_mask * self.mask + self.rvq_sum();
    }

    pub fn is_finite(&self) -> bool {
        [self.l1, self.ssim, self.render, self.mask, self.rvq_sum(), self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// A quantized attribute together with the raw values it encodes.
pub struct ActiveBook<'a> {
    pub attribute: &'a QuantizedAttribute,
    pub values: &'a [f64],
}

/// Assembles every loss term. Codebook terms are zero when `books` is empty,
/// which is the case outside the R-VQ window.
pub fn compute_loss(
    render: &Image,
    target: &Image,
    mask: Option<&MaskState>,
    books: &[ActiveBook],
    lambda_mask: f64,
    lambda_ssim: f64,
) -> LossBreakdown {
    let l1v = l1(render, target);
    let s = ssim(render, target);
    let mut out = LossBreakdown {
        l1: l1v,
        ssim: s,
        render: (1.0 - lambda_ssim) * l1v + lambda_ssim * (1.0 - s),
        mask: mask.map_or(0.0, mask_loss),
        lambda_mask: if mask.is_some() { lambda_mask } else { 0.0 },
        ..Default::default()
    };
    for b in books {
        let v = b.attribute.book.loss(b.values, &b.attribute.encoding);
        match b.attribute.kind {
            AttributeKind::Scale => out.rvq_scale += v,
            AttributeKind::Rotation => out.rvq_rotation += v,
            AttributeKind::RotationCoeffs => out.rvq_rotation_coeffs += v,
            AttributeKind::TemporalColor => out.rvq_temporal_color += v,
        }
    }
    out.recompute_total();
    out
}

/// Gradient of the rendering term w.r.t. the rendered image.
pub fn render_loss_grad(render: &Image, target: &Image, lambda_ssim: f64) -> Image {
    let g1 = l1_grad(render, target);
    let gs = ssim_grad(render, target);
    let data = g1
        .iter()
        .zip(&gs)
        .map(|(a, b)| (1.0 - lambda_ssim) * a - lambda_ssim * b)
        .collect();
    Image {
        width: render.width,
        height: render.height,
        channels: render.channels,
        data,
    }
}
