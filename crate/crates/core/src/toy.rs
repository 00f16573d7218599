//! Generated scenes whose ground truth is known, used as training fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamic::{DynColor, DynGaussianSet, PhiMlp};
use crate::error::{Error, Result};
use crate::math::logit;
use crate::model::{DynamicModel, Model, StaticModel};
use crate::render::sh::SH_C0;
use crate::render::RenderSettings;
use crate::scene::{Camera, ColorSource, FrameSample, GaussianSet, SH_COEFFS};
use crate::field::FieldConfig;
use crate::train::{DensifyConfig, InitPoints, LearningRates, RvqSchedule, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToySpec {
    pub dynamic: bool,
    pub gaussians: usize,
    pub views: usize,
    /// Timestamps per view (space-time scenes only).
    pub timestamps: usize,
    pub width: usize,
    pub height: usize,
    /// Initialization points scattered around each ground-truth Gaussian.
    pub points_per_gaussian: usize,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec::static_default()
    }
}

impl ToySpec {
    /// 3 Gaussians, 8 views of 32×32.
    pub fn static_default() -> Self {
        ToySpec {
            dynamic: false,
            gaussians: 3,
            views: 8,
            timestamps: 1,
            width: 32,
            height: 32,
            points_per_gaussian: 8,
            seed: 0,
        }
    }

    /// 2 moving Gaussians, 4 views × 8 timestamps of 32×32.
    pub fn dynamic_default() -> Self {
        ToySpec {
            dynamic: true,
            gaussians: 2,
            views: 4,
            timestamps: 8,
            width: 32,
            height: 32,
            points_per_gaussian: 4,
            seed: 0,
        }
    }
}

/// Training settings sized for the toy fixtures: 2000 iterations, a small
/// hash table, earlier growth stop and a 300-iteration R-VQ window.
pub fn toy_train_config() -> TrainConfig {
    TrainConfig {
        iterations: Some(2000),
        field: FieldConfig {
            log2_table_size: 14,
            ..FieldConfig::default()
        },
        densify: DensifyConfig {
            until: 1200,
            grad_threshold: 3e-4,
            ..DensifyConfig::default()
        },
        lr: LearningRates {
            field: 3e-2,
            ..LearningRates::default()
        },
        rvq: RvqSchedule {
            window: 300,
            ..RvqSchedule::default()
        },
        ..TrainConfig::default()
    }
}

#[derive(Clone, Debug)]
pub struct ToyScene {
    pub ground_truth: Model,
    pub frames: Vec<FrameSample>,
    pub init: InitPoints,
}

const PALETTE: [[f64; 3]; 6] = [
    [0.9, 0.2, 0.15],
    [0.15, 0.8, 0.25],
    [0.2, 0.3, 0.9],
    [0.85, 0.8, 0.2],
    [0.7, 0.25, 0.8],
    [0.2, 0.8, 0.8],
];

/// Cameras on a ring of radius 4 around the origin, alternating elevation.
pub fn ring_cameras(views: usize, width: usize, height: usize) -> Vec<Camera> {
    let focal = 1.2 * width.max(height) as f64;
    (0..views)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / views as f64;
            let elev = if k % 2 == 0 { 0.6 } else { -0.4 };
            Camera::look_at([4.0 * a.sin(), elev, -4.0 * a.cos()], [0.0; 3], [0.0, 1.0, 0.0], width, height, focal)
        })
        .collect()
}

fn gaussian_layout(count: usize, rng: &mut ChaCha8Rng) -> Vec<([f64; 3], [f64; 3], [f64; 4])> {
    (0..count)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / count.max(1) as f64;
            let r = if count == 1 { 0.0 } else { 0.45 };
            let p = [r * a.cos(), 0.25 * (i as f64 - 1.0) * 0.5, r * a.sin()];
            let s = [0.22 + 0.08 * rng.random::<f64>(), 0.16 + 0.06 * rng.random::<f64>(), 0.2 + 0.05 * rng.random::<f64>()];
            let mut q = [1.0, 0.3 * rng.random::<f64>() - 0.15, 0.3 * rng.random::<f64>() - 0.15, 0.3 * rng.random::<f64>() - 0.15];
            let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            q.iter_mut().for_each(|v| *v /= n);
            (p, s, q)
        })
        .collect()
}

fn normal3(rng: &mut ChaCha8Rng, sigma: f64) -> [f64; 3] {
    std::array::from_fn(|_| sigma * rng.sample::<f64, _>(StandardNormal))
}

pub fn make_toy_scene(spec: &ToySpec) -> Result<ToyScene> {
    if spec.views == 0 || spec.width == 0 || spec.height == 0 {
        return Err(Error::InvalidArgument("toy scenes need views and a non-empty image".into()));
    }
    if spec.dynamic && spec.timestamps == 0 {
        return Err(Error::InvalidArgument("space-time toy scenes need timestamps".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let layout = gaussian_layout(spec.gaussians, &mut rng);
    let colors: Vec<[f64; 3]> = (0..spec.gaussians).map(|i| PALETTE[i % PALETTE.len()]).collect();
    let cams = ring_cameras(spec.views, spec.width, spec.height);
    let settings = RenderSettings::default();

    if !spec.dynamic {
        let gaussians = GaussianSet {
            positions: layout.iter().map(|l| l.0).collect(),
            opacity_logits: vec![logit(0.9); spec.gaussians],
            log_scales: layout.iter().map(|l| l.1.map(f64::ln)).collect(),
            rotations: layout.iter().map(|l| l.2).collect(),
            color: ColorSource::Sh(
                colors
                    .iter()
                    .map(|c| {
                        let mut h = [0.0; SH_COEFFS];
                        for k in 0..3 {
                            h[k] = (c[k] - 0.5) / SH_C0;
                        }
                        h
                    })
                    .collect(),
            ),
        };
        let model = Model::Static(StaticModel {
            gaussians,
            field: None,
            quantized: Vec::new(),
        });
        let frames = cams
            .iter()
            .map(|c| FrameSample::new(c.clone(), model.render(c, 0.0, &settings).clamped(), 0.0))
            .collect::<Result<Vec<_>>>()?;
        let mut init = InitPoints::default();
        for (l, c) in layout.iter().zip(&colors) {
            for _ in 0..spec.points_per_gaussian {
                let d = normal3(&mut rng, 0.6 * l.1.iter().copied().fold(0.0, f64::max));
                init.positions.push([l.0[0] + d[0], l.0[1] + d[1], l.0[2] + d[2]]);
                let dc = normal3(&mut rng, 0.05);
                init.colors.push(std::array::from_fn(|k| (c[k] + dc[k]).clamp(0.0, 1.0)));
                init.times.push(0.0);
            }
        }
        return Ok(ToyScene {
            ground_truth: model,
            frames,
            init,
        });
    }

    let n = spec.gaussians;
    let motion: Vec<[[f64; 3]; 3]> = (0..n)
        .map(|i| {
            let sgn = if i % 2 == 0 { 1.0 } else { -1.0 };
            [[0.5 * sgn, 0.1, 0.0], [0.0, 0.3 * sgn, 0.2], [0.0; 3]]
        })
        .collect();
    let dyn_set = DynGaussianSet {
        positions: layout.iter().map(|l| l.0).collect(),
        rotations: layout.iter().map(|l| l.2).collect(),
        log_scales: layout.iter().map(|l| l.1.map(f64::ln)).collect(),
        opacity_logits: vec![logit(0.9); n],
        color: DynColor::Features(
            colors
                .iter()
                .map(|c| {
                    let mut f = [0.0; 9];
                    f[..3].copy_from_slice(c);
                    f
                })
                .collect(),
        ),
        motion,
        rotation_coeffs: vec![[0.0, 0.1, 0.0, 0.0]; n],
        centers: vec![0.5; n],
        log_temporal_scales: vec![0.05f64.ln(); n],
    };
    let mut phi = PhiMlp::new(32, 2, spec.seed);
    phi.mlp.zero_output_layer();
    let model = Model::Dynamic(DynamicModel {
        gaussians: dyn_set.clone(),
        field: None,
        phi,
        quantized: Vec::new(),
    });
    let times: Vec<f64> = (0..spec.timestamps)
        .map(|k| if spec.timestamps == 1 { 0.5 } else { k as f64 / (spec.timestamps - 1) as f64 })
        .collect();
    let mut frames = Vec::with_capacity(cams.len() * times.len());
    for &t in &times {
        for c in &cams {
            frames.push(FrameSample::new(c.clone(), model.render(c, t, &settings).clamped(), t)?);
        }
    }
    let mut init = InitPoints::default();
    for i in 0..n {
        for k in 0..spec.points_per_gaussian {
            let t = if spec.points_per_gaussian == 1 { 0.5 } else { k as f64 / (spec.points_per_gaussian - 1) as f64 };
            let p = dyn_set.position_at(i, t);
            let d = normal3(&mut rng, 0.05);
            init.positions.push([p[0] + d[0], p[1] + d[1], p[2] + d[2]]);
            init.colors.push(colors[i]);
            init.times.push(t);
        }
    }
    Ok(ToyScene {
        ground_truth: model,
        frames,
        init,
    })
}
