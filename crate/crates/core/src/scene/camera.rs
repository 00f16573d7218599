use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat3, Vec3};

/// Pinhole camera with a world-to-camera rigid transform.
///
/// Camera space looks down `+z`; pixel `(u, v)` grows with camera `x` and `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Rotation part of the world-to-camera transform.
    pub rotation: Mat3,
    pub translation: Vec3,
    pub near: f64,
    pub far: f64,
}

pub const DEFAULT_NEAR: f64 = 0.01;
pub const DEFAULT_FAR: f64 = 1000.0;

impl Camera {
    pub fn new(
        width: usize,
        height: usize,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Mat3,
        translation: Vec3,
    ) -> Result<Self> {
        let cam = Camera {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
            near: DEFAULT_NEAR,
            far: DEFAULT_FAR,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidArgument("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument("image size must be at least 1x1".into()));
        }
        let ortho = (self.rotation * self.rotation.transpose() - Mat3::identity()).abs().max();
        if !(ortho <= 1e-6) {
            return Err(Error::InvalidArgument(format!(
                "world-to-camera rotation is not orthonormal (error {ortho:e})"
            )));
        }
        if !(self.near > 0.0 && self.far > self.near) {
            return Err(Error::InvalidArgument("clip range must satisfy 0 < near < far".into()));
        }
        Ok(())
    }

    /// Camera placed at `eye`, looking at `target`, with `up` pointing towards
    /// decreasing image rows. The principal point is the image center.
    pub fn look_at(eye: [f64; 3], target: [f64; 3], up: [f64; 3], width: usize, height: usize, focal: f64) -> Self {
        let eye = Vec3::from(eye);
        let forward = (Vec3::from(target) - eye).normalize();
        let up = Vec3::from(up);
        // Image y runs downwards, so camera y is the negated up vector.
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        let rotation = Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        Camera {
            width,
            height,
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            rotation,
            translation,
            near: DEFAULT_NEAR,
            far: DEFAULT_FAR,
        }
    }

    /// World-space camera center.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Unit world-space direction of the ray through pixel-space point `(u, v)`.
    pub fn ray_direction(&self, u: f64, v: f64) -> Vec3 {
        let d_cam = Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        (self.rotation.transpose() * d_cam).normalize()
    }

    pub fn to_record(&self, time: f64, image: Option<String>) -> CameraRecord {
        let mut m = [[0.0; 4]; 4];
        for (r, row) in m.iter_mut().enumerate().take(3) {
            for (c, v) in row.iter_mut().enumerate().take(3) {
                *v = self.rotation[(r, c)];
            }
            row[3] = self.translation[r];
        }
        m[3][3] = 1.0;
        CameraRecord {
            width: self.width,
            height: self.height,
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            world_to_camera: m,
            t: time,
            near: Some(self.near),
            far: Some(self.far),
            image,
        }
    }
}

/// One entry of the camera JSON array.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CameraRecord {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Row-major 4×4 world-to-camera matrix.
    pub world_to_camera: [[f64; 4]; 4],
    #[serde(default)]
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub near: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub far: Option<f64>,
    /// Optional target image path, relative to the JSON file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

impl CameraRecord {
    pub fn camera(&self) -> Result<Camera> {
        let m = &self.world_to_camera;
        let rotation = Mat3::new(
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        );
        let translation = Vec3::new(m[0][3], m[1][3], m[2][3]);
        let cam = Camera {
            width: self.width,
            height: self.height,
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            rotation,
            translation,
            near: self.near.unwrap_or(DEFAULT_NEAR),
            far: self.far.unwrap_or(DEFAULT_FAR),
        };
        cam.validate()?;
        Ok(cam)
    }
}

pub fn load_cameras(path: &Path) -> Result<Vec<CameraRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records: Vec<CameraRecord> = serde_json::from_str(&text)?;
    for r in &records {
        r.camera()?;
        if !(0.0..=1.0).contains(&r.t) {
            return Err(Error::InvalidArgument(format!("camera timestamp {} outside [0, 1]", r.t)));
        }
    }
    Ok(records)
}

pub fn save_cameras(path: &Path, records: &[CameraRecord]) -> Result<()> {
    let text = serde_json::to_string_pretty(records)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
