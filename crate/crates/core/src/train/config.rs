use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldConfig;

/// Clone/split/prune schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensifyConfig {
    pub enabled: bool,
    /// First iteration at which Gaussians may be added.
    pub from: usize,
    /// Growth stops here; mask-based elimination continues to the end.
    pub until: usize,
    pub interval: usize,
    /// Mean screen-space positional gradient (NDC units) that triggers growth.
    pub grad_threshold: f64,
    /// Fraction of the scene extent separating clone from split.
    pub percent_dense: f64,
    /// Opacity reset period; 0 disables resets.
    pub opacity_reset_interval: usize,
    /// Gaussians below this opacity are removed at densification steps.
    pub min_opacity: f64,
    /// Upper bound on the Gaussian count after growth.
    pub max_gaussians: usize,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        DensifyConfig {
            enabled: true,
            from: 500,
            until: 15_000,
            interval: 100,
            grad_threshold: 2e-4,
            percent_dense: 0.01,
            opacity_reset_interval: 3000,
            min_opacity: 0.005,
            max_gaussians: 1_000_000,
        }
    }
}

/// Per-group Adam learning rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    /// Initial and final position rates, multiplied by the scene extent.
    pub position_init: f64,
    pub position_final: f64,
    pub opacity: f64,
    pub scale: f64,
    pub rotation: f64,
    pub sh_dc: f64,
    pub sh_rest: f64,
    pub mask: f64,
    pub field: f64,
    /// Iterations at which the field rate is multiplied by `field_decay`.
    pub field_milestones: Vec<usize>,
    pub field_decay: f64,
    pub codebook: f64,
    pub features: f64,
    pub motion: f64,
    pub rotation_coeffs: f64,
    pub temporal_center: f64,
    pub temporal_scale: f64,
    pub phi: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            position_init: 1.6e-4,
            position_final: 1.6e-6,
            opacity: 0.05,
            scale: 5e-3,
            rotation: 1e-3,
            sh_dc: 2.5e-3,
            sh_rest: 2.5e-3 / 20.0,
            mask: 1e-2,
            field: 1e-2,
            field_milestones: vec![5000, 15_000, 25_000],
            field_decay: 0.33,
            codebook: 1e-3,
            features: 2.5e-3,
            motion: 3.5e-3,
            rotation_coeffs: 1e-3,
            temporal_center: 1e-4,
            temporal_scale: 0.03,
            phi: 1e-3,
        }
    }
}

/// R-VQ settings and the final training window in which it is active.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RvqSchedule {
    pub enabled: bool,
    /// Number of final iterations with R-VQ active.
    pub window: usize,
    pub size: usize,
    pub stages: usize,
    /// Codebook size and stages for temporal attributes.
    pub temporal_size: usize,
    pub temporal_stages: usize,
    pub kmeans_iters: usize,
}

impl Default for RvqSchedule {
    fn default() -> Self {
        RvqSchedule {
            enabled: true,
            window: 1000,
            size: 64,
            stages: 6,
            temporal_size: 256,
            temporal_stages: 3,
            kmeans_iters: 10,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorMode {
    /// Per-Gaussian degree-3 spherical harmonics (or 9-D features for
    /// space-time scenes).
    Sh,
    /// Hash-grid color field.
    Field,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneMode {
    Static,
    Dynamic,
}

impl SceneMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(SceneMode::Static),
            "dynamic" => Ok(SceneMode::Dynamic),
            other => Err(Error::InvalidArgument(format!("unknown mode `{other}`"))),
        }
    }
}

/// Every training knob; serialized as one JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Defaults to 30000 for static and 25000 for dynamic scenes.
    pub iterations: Option<usize>,
    pub seed: u64,
    pub use_mask: bool,
    pub lambda_mask: f64,
    pub mask_threshold: f64,
    pub lambda_ssim: f64,
    pub color: ColorMode,
    pub field: FieldConfig,
    pub phi_hidden_width: usize,
    pub phi_hidden_layers: usize,
    pub densify: DensifyConfig,
    pub lr: LearningRates,
    pub rvq: RvqSchedule,
    pub background: [f64; 3],
    pub tile_size: usize,
    /// Initial temporal scale ξ of space-time Gaussians.
    pub init_temporal_scale: f64,
    /// Initial opacity of every Gaussian.
    pub init_opacity: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: None,
            seed: 0,
            use_mask: true,
            lambda_mask: 5e-4,
            mask_threshold: crate::mask::DEFAULT_THRESHOLD,
            lambda_ssim: 0.2,
            color: ColorMode::Field,
            field: FieldConfig::default(),
            phi_hidden_width: 32,
            phi_hidden_layers: 2,
            densify: DensifyConfig::default(),
            lr: LearningRates::default(),
            rvq: RvqSchedule::default(),
            background: [0.0; 3],
            tile_size: 16,
            init_temporal_scale: 1.0,
            init_opacity: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn iterations_for(&self, mode: SceneMode) -> usize {
        self.iterations.unwrap_or(match mode {
            SceneMode::Static => 30_000,
            SceneMode::Dynamic => 25_000,
        })
    }

    pub fn validate(&self, mode: SceneMode) -> Result<()> {
        let lr = &self.lr;
        let rates = [
            lr.position_init,
            lr.position_final,
            lr.opacity,
            lr.scale,
            lr.rotation,
            lr.sh_dc,
            lr.sh_rest,
            lr.mask,
            lr.field,
            lr.codebook,
            lr.features,
            lr.motion,
            lr.rotation_coeffs,
            lr.temporal_center,
            lr.temporal_scale,
            lr.phi,
        ];
        if rates.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidArgument("learning rates must be positive".into()));
        }
        let iters = self.iterations_for(mode);
        if self.rvq.enabled && self.rvq.window > iters {
            return Err(Error::InvalidArgument("R-VQ window exceeds the iteration count".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda_ssim) {
            return Err(Error::InvalidArgument("lambda_ssim must lie in [0, 1]".into()));
        }
        if self.lambda_mask < 0.0 || !(self.mask_threshold > 0.0 && self.mask_threshold < 1.0) {
            return Err(Error::InvalidArgument("invalid mask settings".into()));
        }
        if self.densify.interval == 0 || self.tile_size == 0 {
            return Err(Error::InvalidArgument("intervals and tile size must be positive".into()));
        }
        self.field.validate()?;
        Ok(())
    }

    /// Field learning rate after the step decays.
    pub fn field_lr(&self, iteration: usize) -> f64 {
        let hits = self.lr.field_milestones.iter().filter(|&&m| iteration >= m).count();
        self.lr.field * self.lr.field_decay.powi(hits as i32)
    }

    pub fn rvq_start(&self, iterations: usize) -> Option<usize> {
        (self.rvq.enabled && self.rvq.window > 0).then(|| iterations - self.rvq.window)
    }
}
