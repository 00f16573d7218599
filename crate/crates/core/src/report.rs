//! Evaluation reports, render timing and storage accounting.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::codec::{container_stats, ContainerStats, Level};
use crate::error::{Error, Result};
use crate::field::{ColorField, FieldConfig};
use crate::math::logit;
use crate::metrics::{psnr, ssim};
use crate::model::{Model, StaticModel};
use crate::render::RenderSettings;
use crate::rvq::{AttributeKind, QuantizedAttribute, RvqCodebook, RvqEncoding};
use crate::scene::{Camera, ColorSource, FrameSample, GaussianSet, SH_COEFFS};

/// Floats per Gaussian in the uncompressed baseline.
pub const BASELINE_FLOATS: usize = 59;

/// Baseline float count per attribute group.
pub const BASELINE_LAYOUT: [(&str, usize); 5] = [("position", 3), ("scale", 3), ("rotation", 4), ("opacity", 1), ("color", 48)];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ViewMetrics {
    pub index: usize,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FpsReport {
    pub fps: f64,
    pub renders: usize,
    pub warmup: usize,
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub views: Vec<ViewMetrics>,
    pub psnr_mean: f64,
    pub ssim_mean: f64,
    #[serde(rename = "N")]
    pub gaussians: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub storage: Option<ContainerStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fps: Option<FpsReport>,
}

pub fn eval_report(model: &Model, frames: &[FrameSample], settings: &RenderSettings) -> EvalReport {
    let views: Vec<ViewMetrics> = frames
        .iter()
        .enumerate()
        .map(|(index, f)| {
            let img = model.render(&f.camera, f.time, settings).clamped();
            ViewMetrics {
                index,
                psnr: psnr(&img, &f.image),
                ssim: ssim(&img, &f.image),
            }
        })
        .collect();
    let mean = |f: fn(&ViewMetrics) -> f64| {
        if views.is_empty() {
            0.0
        } else {
            views.iter().map(f).sum::<f64>() / views.len() as f64
        }
    };
    EvalReport {
        psnr_mean: mean(|v| v.psnr),
        ssim_mean: mean(|v| v.ssim),
        views,
        gaussians: model.len(),
        storage: None,
        fps: None,
    }
}

/// Wall-clock frame rate of `renders` renders after `warmup` untimed ones.
pub fn measure_fps(model: &Model, cam: &Camera, t: f64, settings: &RenderSettings, warmup: usize, renders: usize) -> Result<FpsReport> {
    if renders == 0 {
        return Err(Error::InvalidArgument("FPS needs at least one timed render".into()));
    }
    for _ in 0..warmup {
        std::hint::black_box(model.render(cam, t, settings));
    }
    let start = Instant::now();
    for _ in 0..renders {
        std::hint::black_box(model.render(cam, t, settings));
    }
    let secs = start.elapsed().as_secs_f64().max(1e-12);
    Ok(FpsReport {
        fps: renders as f64 / secs,
        renders,
        warmup,
        width: cam.width,
        height: cam.height,
    })
}

/// Streams whose size does not grow with the Gaussian count.
pub fn is_shared_stream(name: &str) -> bool {
    name.ends_with("_codebook") || name.starts_with("field_") || name == "phi"
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StorageRow {
    pub attribute: String,
    pub bytes: usize,
    /// Part of `bytes` that scales with the Gaussian count.
    pub per_gaussian_bytes: usize,
    /// Uncompressed 32-bit float cost of the same attribute.
    pub baseline_bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StorageTable {
    pub level: Level,
    pub count: usize,
    pub total_bytes: usize,
    pub header_bytes: usize,
    pub rows: Vec<StorageRow>,
    pub baseline_total_bytes: usize,
    /// Bytes per Gaussian of the count-dependent streams.
    pub bytes_per_gaussian: f64,
    /// `bytes_per_gaussian` relative to the 59-float baseline.
    pub per_gaussian_ratio: f64,
}

pub fn storage_table(stats: &ContainerStats) -> StorageTable {
    let n = stats.count;
    let baseline = |a: &str| BASELINE_LAYOUT.iter().find(|(k, _)| *k == a).map_or(0, |(_, f)| f * 4 * n);
    let rows: Vec<StorageRow> = stats
        .by_attribute
        .iter()
        .map(|(a, b)| StorageRow {
            attribute: a.clone(),
            bytes: *b,
            per_gaussian_bytes: stats
                .streams
                .iter()
                .filter(|(name, attr, _)| attr == a && !is_shared_stream(name))
                .map(|(_, _, b)| b)
                .sum(),
            baseline_bytes: baseline(a),
        })
        .collect();
    let per_gaussian: usize = rows.iter().map(|r| r.per_gaussian_bytes).sum();
    let bytes_per_gaussian = if n == 0 { 0.0 } else { per_gaussian as f64 / n as f64 };
    StorageTable {
        level: stats.level,
        count: n,
        total_bytes: stats.total_bytes,
        header_bytes: stats.header_bytes,
        baseline_total_bytes: BASELINE_FLOATS * 4 * n,
        bytes_per_gaussian,
        per_gaussian_ratio: bytes_per_gaussian / (BASELINE_FLOATS * 4) as f64,
        rows,
    }
}

pub fn storage_table_for(bytes: &[u8]) -> Result<StorageTable> {
    Ok(storage_table(&container_stats(bytes)?))
}

impl StorageTable {
    pub fn row(&self, attribute: &str) -> Option<&StorageRow> {
        self.rows.iter().find(|r| r.attribute == attribute)
    }

    /// Plain-text table in the layout of a per-attribute storage breakdown.
    pub fn render_text(&self) -> String {
        let mb = |b: usize| b as f64 / 1e6;
        let mut s = format!(
            "level {}  N = {}  file {} B (header {} B)\n{:<10} {:>12} {:>10} {:>14} {:>16}\n",
            self.level.name(),
            self.count,
            self.total_bytes,
            self.header_bytes,
            "attribute",
            "bytes",
            "MB",
            "B/Gaussian",
            "baseline MB"
        );
        for r in &self.rows {
            let per = if self.count == 0 { 0.0 } else { r.per_gaussian_bytes as f64 / self.count as f64 };
            s.push_str(&format!(
                "{:<10} {:>12} {:>10.4} {:>14.3} {:>16.4}\n",
                r.attribute,
                r.bytes,
                mb(r.bytes),
                per,
                mb(r.baseline_bytes)
            ));
        }
        let listed: usize = self.rows.iter().map(|r| r.bytes).sum();
        s.push_str(&format!(
            "{:<10} {:>12} {:>10.4} {:>14.3} {:>16.4}\n",
            "total",
            listed,
            mb(listed),
            self.bytes_per_gaussian,
            mb(self.baseline_total_bytes)
        ));
        s.push_str(&format!(
            "per-Gaussian cost: {:.2}% of the {}-float baseline\n",
            100.0 * self.per_gaussian_ratio,
            BASELINE_FLOATS
        ));
        s
    }
}

/// Color representation of a synthetic model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticColor {
    Sh,
    Field,
}

/// Random static model of `n` Gaussians for storage accounting. With
/// `quantized`, scale and rotation are R-VQ coded with `size` codes and
/// `stages` stages.
pub fn synthetic_static_model(n: usize, color: SyntheticColor, quantized: Option<(usize, usize)>, seed: u64) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
    let positions = (0..n).map(|_| [u(-2.0, 2.0), u(-2.0, 2.0), u(-2.0, 2.0)]).collect();
    let opacity_logits = (0..n).map(|_| logit(u(0.05, 0.95))).collect();
    let mut log_scales: Vec<[f64; 3]> = (0..n).map(|_| [u(-5.0, -2.0), u(-5.0, -2.0), u(-5.0, -2.0)]).collect();
    let mut rotations: Vec<[f64; 4]> = (0..n).map(|_| [u(-1.0, 1.0), u(-1.0, 1.0), u(-1.0, 1.0), u(-1.0, 1.0)]).collect();
    let color_src = match color {
        SyntheticColor::Sh => ColorSource::Sh((0..n).map(|_| std::array::from_fn::<f64, SH_COEFFS, _>(|_| u(-0.5, 0.5))).collect()),
        SyntheticColor::Field => ColorSource::Field,
    };
    let mut q = Vec::new();
    if let Some((size, stages)) = quantized {
        for (kind, dim) in [(AttributeKind::Scale, 3), (AttributeKind::Rotation, 4)] {
            let book = RvqCodebook {
                dim,
                size,
                stages: (0..stages)
                    .map(|l| (0..size * dim).map(|_| u(-1.0, 1.0) * 0.5f64.powi(l as i32)).collect())
                    .collect(),
            };
            let indices: Vec<u16> = (0..n * stages).map(|_| (u(0.0, 1.0) * size as f64).min(size as f64 - 1.0) as u16).collect();
            let reconstructions = book.reconstruct(&indices);
            match kind {
                AttributeKind::Scale => log_scales = reconstructions.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
                _ => rotations = reconstructions.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect(),
            }
            q.push(QuantizedAttribute {
                kind,
                book,
                encoding: RvqEncoding {
                    stages,
                    indices,
                    reconstructions,
                },
            });
        }
    }
    let field = match color {
        SyntheticColor::Field => Some(ColorField::new(FieldConfig {
            seed,
            ..FieldConfig::default()
        })?),
        SyntheticColor::Sh => None,
    };
    Ok(Model::Static(StaticModel {
        gaussians: GaussianSet {
            positions,
            opacity_logits,
            log_scales,
            rotations,
            color: color_src,
        },
        field,
        quantized: q,
    }))
}
