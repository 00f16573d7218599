//! End-to-end optimization of static and space-time scenes.

mod config;
mod densify;
mod loss;

pub use config::{ColorMode, DensifyConfig, LearningRates, RvqSchedule, SceneMode, TrainConfig};
pub use densify::{grow_plan, prune_plan, reset_opacity, Densify, GradStats, RowPlan, SPLIT_SCALE_DIVISOR};
pub use loss::{compute_loss, render_loss_grad, ActiveBook, LossBreakdown};

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamic::{chain_dynamic_grads, render_dynamic, render_dynamic_backward, DynColor, DynFrame, DynGaussianSet, PhiMlp};
use crate::error::{Error, Result};
use crate::field::{ColorField, FieldOutput};
use crate::image::Image;
use crate::mask::{mask_loss_grad, prune, MaskState};
use crate::math::{logit, IDENTITY_QUAT};
use crate::metrics::{psnr, ssim};
use crate::model::{DynamicModel, Model, StaticModel, StaticPass};
use crate::optim::{exp_decay, Adam};
use crate::render::sh::SH_C0;
use crate::render::{project, RenderSettings};
use crate::rvq::{quantize_attribute, AttributeKind, QuantizedAttribute, RvqConfig};
use crate::scene::{Camera, ColorSource, FrameSample, GaussianSet, SH_COEFFS};

/// Precomputed initialization points.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitPoints {
    pub positions: Vec<[f64; 3]>,
    pub colors: Vec<[f64; 3]>,
    /// Per-point timestamps for space-time scenes.
    #[serde(default)]
    pub times: Vec<f64>,
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iter: usize,
    pub losses: LossBreakdown,
    #[serde(rename = "N")]
    pub n: usize,
    pub lr: LrRecord,
    pub rvq_active: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrRecord {
    pub position: f64,
    pub field: f64,
    pub mask: f64,
}

/// Metrics of the final model on the training frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub psnr: Vec<f64>,
    pub ssim: Vec<f64>,
    pub psnr_mean: f64,
    pub ssim_mean: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub model: Model,
    pub log: Vec<LogRecord>,
    pub metrics: FinalMetrics,
}

pub fn render_settings(cfg: &TrainConfig) -> RenderSettings {
    RenderSettings::default()
        .with_tile_size(cfg.tile_size)
        .with_background(cfg.background.to_vec())
}

/// Clamped renders of every frame and their PSNR/SSIM.
pub fn evaluate(model: &Model, frames: &[FrameSample], settings: &RenderSettings) -> FinalMetrics {
    let mut p = Vec::with_capacity(frames.len());
    let mut s = Vec::with_capacity(frames.len());
    for f in frames {
        let img = model.render(&f.camera, f.time, settings).clamped();
        p.push(psnr(&img, &f.image));
        s.push(ssim(&img, &f.image));
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    FinalMetrics {
        psnr_mean: mean(&p),
        ssim_mean: mean(&s),
        psnr: p,
        ssim: s,
        n: model.len(),
    }
}

/// Radius of the camera centers around their mean, padded by 10%.
pub fn scene_extent(cameras: &[&Camera]) -> f64 {
    if cameras.len() < 2 {
        return 1.0;
    }
    let centers: Vec<_> = cameras.iter().map(|c| c.center()).collect();
    let mean = centers.iter().fold(nalgebra::Vector3::zeros(), |a, c| a + c) / centers.len() as f64;
    let r = centers.iter().map(|c| (c - mean).norm()).fold(0.0, f64::max) * 1.1;
    if r > 0.0 {
        r
    } else {
        1.0
    }
}

/// Log-scale from the mean squared distance to the three nearest neighbours.
fn initial_log_scales(points: &[[f64; 3]]) -> Vec<[f64; 3]> {
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut best = [f64::INFINITY; 3];
            for (j, q) in points.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d = (0..3).map(|k| (p[k] - q[k]).powi(2)).sum::<f64>();
                if d < best[2] {
                    best[2] = d;
                    best.sort_by(f64::total_cmp);
                }
            }
            let finite: Vec<f64> = best.iter().copied().filter(|d| d.is_finite()).collect();
            let d2 = if finite.is_empty() { 1e-2 } else { finite.iter().sum::<f64>() / finite.len() as f64 };
            [0.5 * d2.max(1e-7).ln(); 3]
        })
        .collect()
}

/// Codebooks of one attribute during the R-VQ window, with their optimizer.
struct Quantizer {
    attr: QuantizedAttribute,
    adams: Vec<Adam>,
}

impl Quantizer {
    fn start(kind: AttributeKind, values: &[f64], dim: usize, size: usize, stages: usize, iters: usize, seed: u64) -> Result<Self> {
        let cfg = RvqConfig {
            size,
            stages,
            kmeans_iters: iters,
            seed,
        };
        let attr = quantize_attribute(kind, values, dim, &cfg)?;
        let adams = attr.book.stages.iter().map(|s| Adam::new(s.len(), dim)).collect();
        Ok(Quantizer { attr, adams })
    }

    /// One codebook update from the loss against `values`; returns the loss.
    fn step(&mut self, values: &[f64], lr: f64) -> f64 {
        let (l, grads) = self.attr.book.loss_and_grad(values, &self.attr.encoding);
        for ((codes, g), adam) in self.attr.book.stages.iter_mut().zip(&grads).zip(&mut self.adams) {
            adam.update(codes, g, lr);
        }
        l
    }
}

fn check_finite(it: usize, losses: &LossBreakdown) -> Result<()> {
    if losses.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged {
            iteration: it,
            detail: format!("non-finite loss: {}", serde_json::to_string(losses).unwrap_or_default()),
        })
    }
}

fn emit(log: &mut Vec<LogRecord>, sink: &mut Option<&mut dyn Write>, rec: LogRecord) -> Result<()> {
    if let Some(w) = sink.as_mut() {
        let line = serde_json::to_string(&rec)?;
        writeln!(w, "{line}").map_err(|e| Error::io("training log", e))?;
    }
    log.push(rec);
    Ok(())
}

/// Visibility of every Gaussian in one view.
fn visibility(inputs: &crate::render::SplatInputs, cam: &Camera, settings: &RenderSettings) -> Vec<bool> {
    let mut v = vec![false; inputs.len()];
    for p in project(inputs, cam, settings).items {
        v[p.index] = true;
    }
    v
}

/// Deterministic view schedule: a fresh permutation per epoch.
struct ViewSchedule {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
}

impl ViewSchedule {
    fn new(n: usize, seed: u64) -> Self {
        ViewSchedule {
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x005e_ed0f_u64),
            order: (0..n).collect(),
            pos: n,
        }
    }

    fn next(&mut self) -> usize {
        if self.pos == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

fn flat3(v: &[[f64; 3]]) -> Vec<f64> {
    v.as_flattened().to_vec()
}

fn flat4(v: &[[f64; 4]]) -> Vec<f64> {
    v.as_flattened().to_vec()
}

fn rows3(v: &[f64]) -> Vec<[f64; 3]> {
    v.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

fn rows4(v: &[f64]) -> Vec<[f64; 4]> {
    v.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect()
}

/// Trains a model of the requested mode. Log records are also written as
/// JSON lines to `sink` when given.
pub fn train(frames: &[FrameSample], init: &InitPoints, mode: SceneMode, cfg: &TrainConfig, sink: Option<&mut dyn Write>) -> Result<TrainOutput> {
    cfg.validate(mode)?;
    if frames.is_empty() {
        return Err(Error::InvalidArgument("training needs at least one frame".into()));
    }
    if init.colors.len() != init.positions.len() {
        return Err(Error::InvalidArgument("init points and colors differ in length".into()));
    }
    match mode {
        SceneMode::Static => train_static(frames, init, cfg, sink),
        SceneMode::Dynamic => {
            if init.times.len() != init.positions.len() {
                return Err(Error::InvalidArgument("space-time init points need one timestamp each".into()));
            }
            train_dynamic(frames, init, cfg, sink)
        }
    }
}

struct StaticOpt {
    positions: Adam,
    log_scales: Adam,
    rotations: Adam,
    opacity: Adam,
    sh: Option<Adam>,
    mask: Adam,
    table: Option<Adam>,
    mlp: Option<Adam>,
}

impl StaticOpt {
    fn apply(&mut self, plan: &RowPlan) {
        let mut per_row: Vec<&mut Adam> = vec![&mut self.positions, &mut self.log_scales, &mut self.rotations, &mut self.opacity, &mut self.mask];
        if let Some(a) = self.sh.as_mut() {
            per_row.push(a);
        }
        for a in per_row {
            plan.apply_adam(a);
        }
    }
}

fn train_static(frames: &[FrameSample], init: &InitPoints, cfg: &TrainConfig, mut sink: Option<&mut dyn Write>) -> Result<TrainOutput> {
    let iterations = cfg.iterations_for(SceneMode::Static);
    let settings = render_settings(cfg);
    let cams: Vec<&Camera> = frames.iter().map(|f| &f.camera).collect();
    let extent = scene_extent(&cams);
    let n0 = init.positions.len();

    let use_field = cfg.color == ColorMode::Field;
    let mut g = GaussianSet {
        positions: init.positions.clone(),
        opacity_logits: vec![logit(cfg.init_opacity); n0],
        log_scales: initial_log_scales(&init.positions),
        rotations: vec![IDENTITY_QUAT; n0],
        color: if use_field {
            ColorSource::Field
        } else {
            ColorSource::Sh(
                init.colors
                    .iter()
                    .map(|c| {
                        let mut h = [0.0; SH_COEFFS];
                        for k in 0..3 {
                            h[k] = (c[k] - 0.5) / SH_C0;
                        }
                        h
                    })
                    .collect(),
            )
        },
    };
    let mut field = if use_field {
        Some(ColorField::new(crate::field::FieldConfig {
            output: FieldOutput::Rgb,
            seed: cfg.seed,
            ..cfg.field.clone()
        })?)
    } else {
        None
    };
    let mut mask = MaskState::new(n0, cfg.mask_threshold, cfg.lambda_mask);
    let mut opt = StaticOpt {
        positions: Adam::new(3 * n0, 3),
        log_scales: Adam::new(3 * n0, 3),
        rotations: Adam::new(4 * n0, 4),
        opacity: Adam::new(n0, 1),
        sh: (!use_field).then(|| Adam::new(SH_COEFFS * n0, SH_COEFFS)),
        mask: Adam::new(n0, 1),
        table: field.as_ref().map(|f| Adam::new(f.table.len(), 1)),
        mlp: field.as_ref().map(|f| Adam::new(f.mlp.num_params(), 1)),
    };
    let mut sh_lrs = vec![cfg.lr.sh_rest; SH_COEFFS];
    sh_lrs[..3].fill(cfg.lr.sh_dc);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut views = ViewSchedule::new(frames.len(), cfg.seed);
    let mut stats = GradStats::new(n0);
    let rvq_start = cfg.rvq_start(iterations);
    let mut quantizers: Vec<Quantizer> = Vec::new();
    let mut log = Vec::with_capacity(iterations);
    let d = &cfg.densify;

    for it in 0..iterations {
        let in_window = rvq_start.is_some_and(|s| it >= s);
        if rvq_start == Some(it) {
            quantizers = vec![
                Quantizer::start(AttributeKind::Scale, &flat3(&g.log_scales), 3, cfg.rvq.size, cfg.rvq.stages, cfg.rvq.kmeans_iters, cfg.seed)?,
                Quantizer::start(AttributeKind::Rotation, &flat4(&g.rotations), 4, cfg.rvq.size, cfg.rvq.stages, cfg.rvq.kmeans_iters, cfg.seed + 1)?,
            ];
        }
        let mut eff = g.clone();
        if in_window {
            quantizers[0].attr.reencode(&flat3(&g.log_scales));
            quantizers[1].attr.reencode(&flat4(&g.rotations));
            eff.log_scales = rows3(&quantizers[0].attr.encoding.reconstructions);
            eff.rotations = rows4(&quantizers[1].attr.encoding.reconstructions);
        }

        let frame = &frames[views.next()];
        let cam = &frame.camera;
        let mask_ref = cfg.use_mask.then_some(&mask);
        let pass = StaticPass::new(&eff, field.as_ref(), mask_ref, cam);
        let rendered = pass.render(&eff, cam, &settings).image;
        let raw_scales = flat3(&g.log_scales);
        let raw_rots = flat4(&g.rotations);
        let books: Vec<ActiveBook> = if in_window {
            vec![
                ActiveBook {
                    attribute: &quantizers[0].attr,
                    values: &raw_scales,
                },
                ActiveBook {
                    attribute: &quantizers[1].attr,
                    values: &raw_rots,
                },
            ]
        } else {
            Vec::new()
        };
        let losses = compute_loss(&rendered, &frame.image, mask_ref, &books, cfg.lambda_mask, cfg.lambda_ssim);
        drop(books);
        check_finite(it, &losses)?;
        let d_img = render_loss_grad(&rendered, &frame.image, cfg.lambda_ssim);
        let grads = pass.backward(&eff, field.as_ref(), cam, &settings, &d_img);

        let pos_lr = exp_decay(cfg.lr.position_init * extent, cfg.lr.position_final * extent, it, iterations);
        let field_lr = cfg.field_lr(it);
        opt.positions.update(g.positions.as_flattened_mut(), grads.positions.as_flattened(), pos_lr);
        opt.log_scales.update(g.log_scales.as_flattened_mut(), grads.log_scales.as_flattened(), cfg.lr.scale);
        opt.rotations.update(g.rotations.as_flattened_mut(), grads.rotations.as_flattened(), cfg.lr.rotation);
        opt.opacity.update(&mut g.opacity_logits, &grads.opacity_logits, cfg.lr.opacity);
        if let (ColorSource::Sh(sh), Some(a)) = (&mut g.color, opt.sh.as_mut()) {
            a.update_columns(sh.as_flattened_mut(), grads.sh.as_flattened(), &sh_lrs);
        }
        if let (Some(f), Some(fg)) = (field.as_mut(), grads.field.as_ref()) {
            opt.table.as_mut().unwrap().update(&mut f.table, &fg.table, field_lr);
            opt.mlp.as_mut().unwrap().update(&mut f.mlp.params, &fg.mlp, field_lr);
        }
        if cfg.use_mask {
            let lg = mask_loss_grad(&mask);
            let dm: Vec<f64> = grads.mask.iter().zip(&lg).map(|(a, b)| a + cfg.lambda_mask * b).collect();
            opt.mask.update(&mut mask.params, &dm, cfg.lr.mask);
        }
        if in_window {
            quantizers[0].step(&raw_scales, cfg.lr.codebook);
            quantizers[1].step(&raw_rots, cfg.lr.codebook);
        }

        if d.enabled && it < d.until {
            let vis = visibility(&pass.inputs(&eff), cam, &settings);
            stats.add(&grads.means2d, &vis, cam.width, cam.height);
        }

        emit(
            &mut log,
            &mut sink,
            LogRecord {
                iter: it,
                losses,
                n: g.len(),
                lr: LrRecord {
                    position: pos_lr,
                    field: field_lr,
                    mask: cfg.lr.mask,
                },
                rvq_active: in_window,
            },
        )?;

        let step = it + 1;
        if d.enabled && step >= d.from && step % d.interval == 0 && step < iterations {
            let mut plan_mask = None;
            if step < d.until {
                let grow = grow_plan(&g, &stats, d.grad_threshold, d.percent_dense * extent, d.max_gaussians, &mut rng);
                g = grow.apply_set(&g);
                mask = grow.apply_mask(&mask);
                opt.apply(&grow);
                let pr = prune_plan(&g, cfg.use_mask.then_some(&mask), d.min_opacity);
                plan_mask = Some(pr);
                stats = GradStats::new(g.len());
            } else if cfg.use_mask {
                plan_mask = Some(prune_plan(&g, Some(&mask), 0.0));
            }
            if let Some(pr) = plan_mask {
                g = pr.apply_set(&g);
                mask = pr.apply_mask(&mask);
                opt.apply(&pr);
                if stats.accum.len() != g.len() {
                    let keep = &pr.keep;
                    stats = GradStats {
                        accum: keep.iter().map(|&i| stats.accum[i]).collect(),
                        count: keep.iter().map(|&i| stats.count[i]).collect(),
                    };
                }
            }
        }
        if d.enabled && d.opacity_reset_interval > 0 && step % d.opacity_reset_interval == 0 && step < d.until && step < iterations {
            for i in reset_opacity(&mut g) {
                opt.opacity.reset_row(i);
            }
        }
    }

    if cfg.use_mask {
        let (pg, _) = prune(&g, &mask);
        g = pg;
    }
    let mut quantized = Vec::new();
    if !quantizers.is_empty() {
        let mut qs = quantizers.into_iter().map(|q| q.attr);
        let mut qscale = qs.next().unwrap();
        let mut qrot = qs.next().unwrap();
        qscale.reencode(&flat3(&g.log_scales));
        qrot.reencode(&flat4(&g.rotations));
        g.log_scales = rows3(&qscale.encoding.reconstructions);
        g.rotations = rows4(&qrot.encoding.reconstructions);
        quantized = vec![qscale, qrot];
    }
    let model = Model::Static(StaticModel {
        gaussians: g,
        field,
        quantized,
    });
    let metrics = evaluate(&model, frames, &settings);
    Ok(TrainOutput { model, log, metrics })
}

struct DynOpt {
    positions: Adam,
    rotations: Adam,
    log_scales: Adam,
    opacity: Adam,
    color: Adam,
    motion: Adam,
    rotation_coeffs: Adam,
    centers: Adam,
    temporal_scales: Adam,
    mask: Adam,
    phi: Adam,
    table: Option<Adam>,
    mlp: Option<Adam>,
}

impl DynOpt {
    fn apply(&mut self, plan: &RowPlan) {
        for a in [
            &mut self.positions,
            &mut self.rotations,
            &mut self.log_scales,
            &mut self.opacity,
            &mut self.color,
            &mut self.motion,
            &mut self.rotation_coeffs,
            &mut self.centers,
            &mut self.temporal_scales,
            &mut self.mask,
        ] {
            plan.apply_adam(a);
        }
    }
}

fn train_dynamic(frames: &[FrameSample], init: &InitPoints, cfg: &TrainConfig, mut sink: Option<&mut dyn Write>) -> Result<TrainOutput> {
    let iterations = cfg.iterations_for(SceneMode::Dynamic);
    let settings = render_settings(cfg);
    let cams: Vec<&Camera> = frames.iter().map(|f| &f.camera).collect();
    let extent = scene_extent(&cams);
    let n0 = init.positions.len();
    let use_field = cfg.color == ColorMode::Field;

    let mut g = DynGaussianSet {
        positions: init.positions.clone(),
        rotations: vec![IDENTITY_QUAT; n0],
        log_scales: initial_log_scales(&init.positions),
        opacity_logits: vec![logit(cfg.init_opacity); n0],
        color: if use_field {
            DynColor::Field {
                temporal: vec![[0.0; 3]; n0],
            }
        } else {
            DynColor::Features(
                init.colors
                    .iter()
                    .map(|c| {
                        let mut f = [0.0; 9];
                        f[..3].copy_from_slice(c);
                        f
                    })
                    .collect(),
            )
        },
        motion: vec![[[0.0; 3]; 3]; n0],
        rotation_coeffs: vec![[0.0; 4]; n0],
        centers: init.times.clone(),
        log_temporal_scales: vec![cfg.init_temporal_scale.max(1e-12).ln(); n0],
    };
    let mut field = if use_field {
        Some(ColorField::new(crate::field::FieldConfig {
            output: FieldOutput::Features6,
            seed: cfg.seed,
            ..cfg.field.clone()
        })?)
    } else {
        None
    };
    let mut phi = PhiMlp::new(cfg.phi_hidden_width, cfg.phi_hidden_layers, cfg.seed.wrapping_add(7));
    let color_width = if use_field { 3 } else { 9 };
    let mut mask = MaskState::new(n0, cfg.mask_threshold, cfg.lambda_mask);
    let mut opt = DynOpt {
        positions: Adam::new(3 * n0, 3),
        rotations: Adam::new(4 * n0, 4),
        log_scales: Adam::new(3 * n0, 3),
        opacity: Adam::new(n0, 1),
        color: Adam::new(color_width * n0, color_width),
        motion: Adam::new(9 * n0, 9),
        rotation_coeffs: Adam::new(4 * n0, 4),
        centers: Adam::new(n0, 1),
        temporal_scales: Adam::new(n0, 1),
        mask: Adam::new(n0, 1),
        phi: Adam::new(phi.mlp.num_params(), 1),
        table: field.as_ref().map(|f| Adam::new(f.table.len(), 1)),
        mlp: field.as_ref().map(|f| Adam::new(f.mlp.num_params(), 1)),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut views = ViewSchedule::new(frames.len(), cfg.seed);
    let mut stats = GradStats::new(n0);
    let rvq_start = cfg.rvq_start(iterations);
    let mut quantizers: Vec<Quantizer> = Vec::new();
    let mut log = Vec::with_capacity(iterations);
    let d = &cfg.densify;
    let (gs, gl, ts, tl, ki) = (cfg.rvq.size, cfg.rvq.stages, cfg.rvq.temporal_size, cfg.rvq.temporal_stages, cfg.rvq.kmeans_iters);

    for it in 0..iterations {
        let in_window = rvq_start.is_some_and(|s| it >= s);
        let raw = [
            flat3(&g.log_scales),
            flat4(&g.rotations),
            flat4(&g.rotation_coeffs),
            flat3(&g.temporal_color()),
        ];
        if rvq_start == Some(it) {
            quantizers = vec![
                Quantizer::start(AttributeKind::Scale, &raw[0], 3, gs, gl, ki, cfg.seed)?,
                Quantizer::start(AttributeKind::Rotation, &raw[1], 4, gs, gl, ki, cfg.seed + 1)?,
                Quantizer::start(AttributeKind::RotationCoeffs, &raw[2], 4, ts, tl, ki, cfg.seed + 2)?,
                Quantizer::start(AttributeKind::TemporalColor, &raw[3], 3, ts, tl, ki, cfg.seed + 3)?,
            ];
        }
        let mut eff = g.clone();
        if in_window {
            for (q, v) in quantizers.iter_mut().zip(&raw) {
                q.attr.reencode(v);
            }
            eff.log_scales = rows3(&quantizers[0].attr.encoding.reconstructions);
            eff.rotations = rows4(&quantizers[1].attr.encoding.reconstructions);
            eff.rotation_coeffs = rows4(&quantizers[2].attr.encoding.reconstructions);
            eff.set_temporal_color(&rows3(&quantizers[3].attr.encoding.reconstructions));
        }

        let frame = &frames[views.next()];
        let cam = &frame.camera;
        let mask_ref = cfg.use_mask.then_some(&mask);
        let (feats, caches) = match field.as_ref() {
            Some(f) => {
                let (out, caches) = f.forward_batch(&eff.positions, None);
                (Some(out.chunks_exact(6).map(|c| [c[0], c[1], c[2], c[3], c[4], c[5]]).collect::<Vec<_>>()), Some(caches))
            }
            None => (None, None),
        };
        let dframe = DynFrame::build(&eff, mask_ref, feats.as_deref(), frame.time);
        let rendered = render_dynamic(&dframe, &phi, cam, &settings);
        let books: Vec<ActiveBook> = if in_window {
            quantizers
                .iter()
                .zip(&raw)
                .map(|(q, v)| ActiveBook {
                    attribute: &q.attr,
                    values: v,
                })
                .collect()
        } else {
            Vec::new()
        };
        let losses = compute_loss(&rendered, &frame.image, mask_ref, &books, cfg.lambda_mask, cfg.lambda_ssim);
        drop(books);
        check_finite(it, &losses)?;
        let d_img = render_loss_grad(&rendered, &frame.image, cfg.lambda_ssim);
        let (sg, d_phi) = render_dynamic_backward(&dframe, &phi, cam, &settings, &d_img);
        let grads = chain_dynamic_grads(&eff, &dframe, &sg);

        let pos_lr = exp_decay(cfg.lr.position_init * extent, cfg.lr.position_final * extent, it, iterations);
        let field_lr = cfg.field_lr(it);
        opt.positions.update(g.positions.as_flattened_mut(), grads.positions.as_flattened(), pos_lr);
        opt.rotations.update(g.rotations.as_flattened_mut(), grads.rotations.as_flattened(), cfg.lr.rotation);
        opt.log_scales.update(g.log_scales.as_flattened_mut(), grads.log_scales.as_flattened(), cfg.lr.scale);
        opt.opacity.update(&mut g.opacity_logits, &grads.opacity_logits, cfg.lr.opacity);
        match &mut g.color {
            DynColor::Features(f) => opt.color.update(f.as_flattened_mut(), grads.features.as_flattened(), cfg.lr.features),
            DynColor::Field { temporal } => {
                let gt: Vec<f64> = grads.features.iter().flat_map(|r| [r[6], r[7], r[8]]).collect();
                opt.color.update(temporal.as_flattened_mut(), &gt, cfg.lr.features);
            }
        }
        let gm: Vec<f64> = grads.motion.iter().flat_map(|m| m.as_flattened().to_vec()).collect();
        let mut motion_flat: Vec<f64> = g.motion.iter().flat_map(|m| m.as_flattened().to_vec()).collect();
        opt.motion.update(&mut motion_flat, &gm, cfg.lr.motion);
        for (m, c) in g.motion.iter_mut().zip(motion_flat.chunks_exact(9)) {
            m.as_flattened_mut().copy_from_slice(c);
        }
        opt.rotation_coeffs.update(g.rotation_coeffs.as_flattened_mut(), grads.rotation_coeffs.as_flattened(), cfg.lr.rotation_coeffs);
        opt.centers.update(&mut g.centers, &grads.centers, cfg.lr.temporal_center);
        opt.temporal_scales.update(&mut g.log_temporal_scales, &grads.log_temporal_scales, cfg.lr.temporal_scale);
        opt.phi.update(&mut phi.mlp.params, &d_phi, cfg.lr.phi);
        if let (Some(f), Some(caches)) = (field.as_mut(), caches.as_ref()) {
            let d_out: Vec<f64> = grads.features.iter().flat_map(|r| r[..6].to_vec()).collect();
            let fg = f.backward_batch(caches, &d_out);
            opt.table.as_mut().unwrap().update(&mut f.table, &fg.table, field_lr);
            opt.mlp.as_mut().unwrap().update(&mut f.mlp.params, &fg.mlp, field_lr);
        }
        if cfg.use_mask {
            let lg = mask_loss_grad(&mask);
            let dm: Vec<f64> = grads.mask.iter().zip(&lg).map(|(a, b)| a + cfg.lambda_mask * b).collect();
            opt.mask.update(&mut mask.params, &dm, cfg.lr.mask);
        }
        if in_window {
            for (q, v) in quantizers.iter_mut().zip(&raw) {
                q.step(v, cfg.lr.codebook);
            }
        }

        if d.enabled && it < d.until {
            let vis = visibility(&dframe.inputs(), cam, &settings);
            stats.add(&grads.means2d, &vis, cam.width, cam.height);
        }

        emit(
            &mut log,
            &mut sink,
            LogRecord {
                iter: it,
                losses,
                n: g.len(),
                lr: LrRecord {
                    position: pos_lr,
                    field: field_lr,
                    mask: cfg.lr.mask,
                },
                rvq_active: in_window,
            },
        )?;

        let step = it + 1;
        if d.enabled && step >= d.from && step % d.interval == 0 && step < iterations {
            let mut plan_mask = None;
            if step < d.until {
                let grow = grow_plan(&g, &stats, d.grad_threshold, d.percent_dense * extent, d.max_gaussians, &mut rng);
                g = grow.apply_set(&g);
                mask = grow.apply_mask(&mask);
                opt.apply(&grow);
                plan_mask = Some(prune_plan(&g, cfg.use_mask.then_some(&mask), d.min_opacity));
                stats = GradStats::new(g.len());
            } else if cfg.use_mask {
                plan_mask = Some(prune_plan(&g, Some(&mask), 0.0));
            }
            if let Some(pr) = plan_mask {
                g = pr.apply_set(&g);
                mask = pr.apply_mask(&mask);
                opt.apply(&pr);
                if stats.accum.len() != g.len() {
                    let keep = &pr.keep;
                    stats = GradStats {
                        accum: keep.iter().map(|&i| stats.accum[i]).collect(),
                        count: keep.iter().map(|&i| stats.count[i]).collect(),
                    };
                }
            }
        }
        if d.enabled && d.opacity_reset_interval > 0 && step % d.opacity_reset_interval == 0 && step < d.until && step < iterations {
            for i in reset_opacity(&mut g) {
                opt.opacity.reset_row(i);
            }
        }
    }

    if cfg.use_mask {
        let (pg, _) = prune(&g, &mask);
        g = pg;
    }
    let mut quantized = Vec::new();
    if !quantizers.is_empty() {
        let mut qs: Vec<QuantizedAttribute> = quantizers.into_iter().map(|q| q.attr).collect();
        qs[0].reencode(&flat3(&g.log_scales));
        qs[1].reencode(&flat4(&g.rotations));
        qs[2].reencode(&flat4(&g.rotation_coeffs));
        qs[3].reencode(&flat3(&g.temporal_color()));
        g.log_scales = rows3(&qs[0].encoding.reconstructions);
        g.rotations = rows4(&qs[1].encoding.reconstructions);
        g.rotation_coeffs = rows4(&qs[2].encoding.reconstructions);
        g.set_temporal_color(&rows3(&qs[3].encoding.reconstructions));
        quantized = qs;
    }
    let model = Model::Dynamic(DynamicModel {
        gaussians: g,
        field,
        phi,
        quantized,
    });
    let metrics = evaluate(&model, frames, &settings);
    Ok(TrainOutput { model, log, metrics })
}

/// Renders every frame of a model; used by tests and the CLI.
pub fn render_frames(model: &Model, frames: &[FrameSample], settings: &RenderSettings) -> Vec<Image> {
    frames.iter().map(|f| model.render(&f.camera, f.time, settings)).collect()
}

