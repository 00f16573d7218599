//! On-disk scene layout: `cameras.json`, target images and `points.json`.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scene::{load_cameras, save_cameras, FrameSample};
use crate::train::InitPoints;

pub const CAMERAS_FILE: &str = "cameras.json";
pub const POINTS_FILE: &str = "points.json";
pub const IMAGES_DIR: &str = "images";

/// Writes frames as PNG images next to a camera file that references them.
pub fn save_scene(dir: &Path, frames: &[FrameSample], init: &InitPoints) -> Result<()> {
    let images = dir.join(IMAGES_DIR);
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut records = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        let rel = format!("{IMAGES_DIR}/{i:04}.png");
        f.image.save_png(&dir.join(&rel))?;
        records.push(f.camera.to_record(f.time, Some(rel)));
    }
    save_cameras(&dir.join(CAMERAS_FILE), &records)?;
    let points = dir.join(POINTS_FILE);
    std::fs::write(&points, serde_json::to_string(init)?).map_err(|e| Error::io(&points, e))
}

/// Frames described by a camera file; every record must name an image,
/// resolved relative to the camera file.
pub fn load_frames(cameras: &Path) -> Result<Vec<FrameSample>> {
    let base = cameras.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    load_cameras(cameras)?
        .iter()
        .map(|r| {
            let rel = r
                .image
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("camera record without an image".into()))?;
            FrameSample::new(r.camera()?, Image::load(&base.join(rel))?, r.t)
        })
        .collect()
}

pub fn load_points(path: &Path) -> Result<InitPoints> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let p: InitPoints = serde_json::from_str(&text)?;
    if p.colors.len() != p.positions.len() || (!p.times.is_empty() && p.times.len() != p.positions.len()) {
        return Err(Error::InvalidArgument("point attributes have different lengths".into()));
    }
    Ok(p)
}

/// Frames and init points of a scene directory.
pub fn load_scene(dir: &Path) -> Result<(Vec<FrameSample>, InitPoints)> {
    Ok((load_frames(&dir.join(CAMERAS_FILE))?, load_points(&dir.join(POINTS_FILE))?))
}
