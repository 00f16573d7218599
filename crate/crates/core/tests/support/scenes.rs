//! Random small scenes for property tests.

use c3dgs::dynamic::{DynColor, DynGaussianSet, FEATURE_DIM};
use c3dgs::field::{ColorField, FieldConfig, FieldOutput};
use c3dgs::image::Image;
use c3dgs::math::logit;
use c3dgs::scene::{Camera, ColorSource, GaussianSet, SH_COEFFS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn unit3(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = [uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)];
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return v.map(|x| x / n);
        }
    }
}

/// Camera at distance 3 from the origin looking at it, 12×10 pixels.
pub fn small_camera(rng: &mut ChaCha8Rng) -> Camera {
    let mut eye = unit3(rng);
    // Keep away from the up axis so the look-at frame is well defined.
    eye[1] *= 0.6;
    let n = eye.iter().map(|x| x * x).sum::<f64>().sqrt();
    Camera::look_at(eye.map(|x| 3.0 * x / n), [0.0; 3], [0.0, 1.0, 0.0], 12, 10, 30.0)
}

pub fn random_quat(rng: &mut ChaCha8Rng) -> [f64; 4] {
    [uniform(rng, 0.3, 1.0), uniform(rng, -0.6, 0.6), uniform(rng, -0.6, 0.6), uniform(rng, -0.6, 0.6)]
}

pub fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> Image {
    let mut img = Image::new(w, h, c);
    img.data.iter_mut().for_each(|v| *v = uniform(rng, -1.0, 1.0));
    img
}

pub fn random_static(rng: &mut ChaCha8Rng, n: usize, sh: bool) -> GaussianSet {
    GaussianSet {
        positions: (0..n).map(|_| [uniform(rng, -0.35, 0.35), uniform(rng, -0.3, 0.3), uniform(rng, -0.35, 0.35)]).collect(),
        opacity_logits: (0..n).map(|_| logit(uniform(rng, 0.3, 0.9))).collect(),
        log_scales: (0..n).map(|_| std::array::from_fn(|_| uniform(rng, 0.08, 0.25).ln())).collect(),
        rotations: (0..n).map(|_| random_quat(rng)).collect(),
        color: if sh {
            ColorSource::Sh((0..n).map(|_| std::array::from_fn::<f64, SH_COEFFS, _>(|_| uniform(rng, -0.6, 0.6))).collect())
        } else {
            ColorSource::Field
        },
    }
}

pub fn random_dynamic(rng: &mut ChaCha8Rng, n: usize) -> DynGaussianSet {
    DynGaussianSet {
        positions: (0..n).map(|_| [uniform(rng, -0.3, 0.3), uniform(rng, -0.25, 0.25), uniform(rng, -0.3, 0.3)]).collect(),
        rotations: (0..n).map(|_| random_quat(rng)).collect(),
        log_scales: (0..n).map(|_| std::array::from_fn(|_| uniform(rng, 0.08, 0.25).ln())).collect(),
        opacity_logits: (0..n).map(|_| logit(uniform(rng, 0.4, 0.9))).collect(),
        color: DynColor::Features((0..n).map(|_| std::array::from_fn::<f64, FEATURE_DIM, _>(|_| uniform(rng, -0.5, 0.8))).collect()),
        motion: (0..n).map(|_| std::array::from_fn(|_| std::array::from_fn(|_| uniform(rng, -0.3, 0.3)))).collect(),
        rotation_coeffs: (0..n).map(|_| std::array::from_fn(|_| uniform(rng, -0.3, 0.3))).collect(),
        centers: (0..n).map(|_| uniform(rng, 0.2, 0.8)).collect(),
        log_temporal_scales: (0..n).map(|_| uniform(rng, 0.5, 3.0).ln()).collect(),
    }
}

/// Small field: 4 levels from 4 to 32 cells, 2^10 entries per level cap.
pub fn small_field_config(output: FieldOutput, seed: u64) -> FieldConfig {
    FieldConfig {
        levels: 4,
        features_per_level: 2,
        min_resolution: 4,
        max_resolution: 32,
        log2_table_size: 10,
        hidden_width: 16,
        hidden_layers: 2,
        output,
        seed,
    }
}

/// Small field with table entries spread over [-1, 1] so the network sees
/// non-trivial inputs.
pub fn random_field(rng: &mut ChaCha8Rng, output: FieldOutput) -> ColorField {
    let mut f = ColorField::new(small_field_config(output, rng.random())).expect("valid field config");
    f.table.iter_mut().for_each(|v| *v = uniform(rng, -1.0, 1.0));
    f
}
