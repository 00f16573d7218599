//! Learnable volume masks.
//!
//! Each Gaussian carries a real mask parameter `m`. Its binary mask is
//! `1[σ(m) > ε]` in the forward pass, while the backward pass uses the
//! gradient of the soft surrogate `σ(m)` (straight-through estimator). The
//! mask multiplies both the scale and the opacity, so masked Gaussians vanish
//! in volume and transparency at once.

use crate::dynamic::DynGaussianSet;
use crate::math::{sigmoid, sigmoid_grad_from_value};
use crate::scene::GaussianSet;

pub const DEFAULT_THRESHOLD: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct MaskState {
    pub params: Vec<f64>,
    /// Threshold ε on σ(m).
    pub threshold: f64,
    /// Weight λ_m of the mask loss.
    pub lambda: f64,
}

/// Forward value and straight-through gradient of one hard mask.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HardMask {
    pub value: f64,
    /// `dM/dm`, i.e. the derivative of the logistic surrogate.
    pub grad: f64,
}

pub fn hard_mask(m: f64, threshold: f64) -> HardMask {
    let s = sigmoid(m);
    HardMask {
        value: if s > threshold { 1.0 } else { 0.0 },
        grad: sigmoid_grad_from_value(s),
    }
}

impl MaskState {
    /// Fresh masks at `m = 0`, i.e. σ(m) = 0.5.
    pub fn new(n: usize, threshold: f64, lambda: f64) -> Self {
        MaskState {
            params: vec![0.0; n],
            threshold,
            lambda,
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn masks(&self) -> Vec<HardMask> {
        self.params.iter().map(|&m| hard_mask(m, self.threshold)).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.params.iter().map(|&m| hard_mask(m, self.threshold).value).collect()
    }

    /// Indices of Gaussians whose mask is 1.
    pub fn alive(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| hard_mask(self.params[i], self.threshold).value == 1.0)
            .collect()
    }

    pub fn select(&self, indices: &[usize]) -> MaskState {
        MaskState {
            params: indices.iter().map(|&i| self.params[i]).collect(),
            threshold: self.threshold,
            lambda: self.lambda,
        }
    }
}

/// `L_m = (1/N) Σ σ(m_n)`; zero for an empty set.
pub fn mask_loss(mask: &MaskState) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    mask.params.iter().map(|&m| sigmoid(m)).sum::<f64>() / mask.len() as f64
}

/// `dL_m/dm_n = σ'(m_n)/N`.
pub fn mask_loss_grad(mask: &MaskState) -> Vec<f64> {
    let n = mask.len() as f64;
    mask.params
        .iter()
        .map(|&m| sigmoid_grad_from_value(sigmoid(m)) / n)
        .collect()
}

/// Activated scales and opacities after masking.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedAttributes {
    pub scales: Vec<[f64; 3]>,
    pub opacities: Vec<f64>,
    pub masks: Vec<HardMask>,
}

fn apply(scales: Vec<[f64; 3]>, opacities: Vec<f64>, mask: &MaskState) -> MaskedAttributes {
    assert_eq!(scales.len(), mask.len(), "mask length mismatch");
    let masks = mask.masks();
    let scales = scales
        .iter()
        .zip(&masks)
        .map(|(s, m)| s.map(|v| v * m.value))
        .collect();
    let opacities = opacities.iter().zip(&masks).map(|(o, m)| o * m.value).collect();
    MaskedAttributes {
        scales,
        opacities,
        masks,
    }
}

/// `M_n · s_n` and `M_n · o_n` for a static set.
pub fn apply_static(g: &GaussianSet, mask: &MaskState) -> MaskedAttributes {
    apply(g.scales(), g.opacities(), mask)
}

/// `M_n · s_n` and `M_n · o_n(t)` for a space-time set at time `t`.
pub fn apply_dynamic(dyn_set: &DynGaussianSet, mask: &MaskState, t: f64) -> MaskedAttributes {
    let opacities = (0..dyn_set.len()).map(|n| dyn_set.temporal_opacity(n, t)).collect();
    apply(dyn_set.scales(), opacities, mask)
}

/// Chains gradients on masked activated attributes back to the mask
/// parameters. `unmasked_scales` and `unmasked_opacities` are the values
/// before multiplication by the mask.
pub fn mask_param_grad(
    masks: &[HardMask],
    unmasked_scales: &[[f64; 3]],
    unmasked_opacities: &[f64],
    d_scales: &[[f64; 3]],
    d_opacities: &[f64],
) -> Vec<f64> {
    (0..masks.len())
        .map(|n| {
            let d_m = (0..3).map(|k| unmasked_scales[n][k] * d_scales[n][k]).sum::<f64>()
                + unmasked_opacities[n] * d_opacities[n];
            d_m * masks[n].grad
        })
        .collect()
}

/// Something whose Gaussians can be sub-selected by index.
pub trait Prunable: Sized {
    fn select_gaussians(&self, indices: &[usize]) -> Self;
}

impl Prunable for GaussianSet {
    fn select_gaussians(&self, indices: &[usize]) -> Self {
        self.select(indices)
    }
}

impl Prunable for DynGaussianSet {
    fn select_gaussians(&self, indices: &[usize]) -> Self {
        self.select(indices)
    }
}

/// Removes the Gaussians whose binary mask is 0 together with their mask
/// parameters.
pub fn prune<T: Prunable>(set: &T, mask: &MaskState) -> (T, MaskState) {
    let keep = mask.alive();
    (set.select_gaussians(&keep), mask.select(&keep))
}
