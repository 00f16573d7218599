//! Gaussian attribute storage, cameras and training frames.

mod camera;
mod ply;

pub use camera::{load_cameras, save_cameras, Camera, CameraRecord};
pub use ply::{load_ply, read_ply, save_ply, write_ply};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::{normalize_quat, sigmoid};

/// Number of SH coefficients per Gaussian (degrees 0..=3, three channels).
pub const SH_COEFFS: usize = 48;
/// SH basis functions per channel.
pub const SH_BASIS: usize = 16;

/// Per-Gaussian color representation.
///
/// SH coefficients are laid out basis-major: entry `k * 3 + c` holds basis
/// function `k` of channel `c`.
#[derive(Clone, Debug, PartialEq)]
pub enum ColorSource {
    Sh(Vec<[f64; SH_COEFFS]>),
    /// Colors are produced by a neural color field at render time.
    Field,
}

/// Columnar container of Gaussian attributes.
///
/// Opacity is stored as a logit and scale as a log, so activated opacities
/// lie in `[0, 1]` and activated scales are strictly positive.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSet {
    pub positions: Vec<[f64; 3]>,
    pub opacity_logits: Vec<f64>,
    pub log_scales: Vec<[f64; 3]>,
    /// Raw quaternions `(w, x, y, z)`, normalized before use.
    pub rotations: Vec<[f64; 4]>,
    pub color: ColorSource,
}

impl GaussianSet {
    pub fn empty_sh() -> Self {
        GaussianSet {
            positions: Vec::new(),
            opacity_logits: Vec::new(),
            log_scales: Vec::new(),
            rotations: Vec::new(),
            color: ColorSource::Sh(Vec::new()),
        }
    }

    pub fn empty_field() -> Self {
        GaussianSet {
            color: ColorSource::Field,
            ..GaussianSet::empty_sh()
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn opacity(&self, n: usize) -> f64 {
        sigmoid(self.opacity_logits[n])
    }

    pub fn scale(&self, n: usize) -> [f64; 3] {
        let s = self.log_scales[n];
        [s[0].exp(), s[1].exp(), s[2].exp()]
    }

    pub fn opacities(&self) -> Vec<f64> {
        self.opacity_logits.iter().map(|&l| sigmoid(l)).collect()
    }

    pub fn scales(&self) -> Vec<[f64; 3]> {
        (0..self.len()).map(|n| self.scale(n)).collect()
    }

    pub fn sh(&self) -> Option<&[[f64; SH_COEFFS]]> {
        match &self.color {
            ColorSource::Sh(h) => Some(h),
            ColorSource::Field => None,
        }
    }

    /// Checks that all attribute arrays share one length.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let color_len = match &self.color {
            ColorSource::Sh(h) => h.len(),
            ColorSource::Field => n,
        };
        if self.opacity_logits.len() != n
            || self.log_scales.len() != n
            || self.rotations.len() != n
            || color_len != n
        {
            return Err(Error::InvalidArgument(format!(
                "attribute length mismatch: positions {n}, opacity {}, scale {}, rotation {}, color {color_len}",
                self.opacity_logits.len(),
                self.log_scales.len(),
                self.rotations.len()
            )));
        }
        Ok(())
    }

    /// New set holding the Gaussians at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> GaussianSet {
        GaussianSet {
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            opacity_logits: indices.iter().map(|&i| self.opacity_logits[i]).collect(),
            log_scales: indices.iter().map(|&i| self.log_scales[i]).collect(),
            rotations: indices.iter().map(|&i| self.rotations[i]).collect(),
            color: match &self.color {
                ColorSource::Sh(h) => ColorSource::Sh(indices.iter().map(|&i| h[i]).collect()),
                ColorSource::Field => ColorSource::Field,
            },
        }
    }

    /// Replaces every quaternion by its unit-length version; zero quaternions
    /// become the identity rotation.
    pub fn normalize_rotations(mut self) -> GaussianSet {
        for q in &mut self.rotations {
            *q = normalize_quat(q);
        }
        self
    }
}

/// One supervision record: a camera, its target image and a timestamp.
#[derive(Clone, Debug)]
pub struct FrameSample {
    pub camera: Camera,
    pub image: Image,
    /// Normalized time in `[0, 1]`; zero for static scenes.
    pub time: f64,
}

impl FrameSample {
    pub fn new(camera: Camera, image: Image, time: f64) -> Result<Self> {
        if image.width != camera.width || image.height != camera.height {
            return Err(Error::InvalidArgument(format!(
                "image is {}x{} but camera is {}x{}",
                image.width, image.height, camera.width, camera.height
            )));
        }
        if !(0.0..=1.0).contains(&time) {
            return Err(Error::InvalidArgument(format!("timestamp {time} outside [0, 1]")));
        }
        Ok(FrameSample { camera, image, time })
    }
}
