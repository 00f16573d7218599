//! The acceptance criteria as reusable checks.

use std::time::Instant;

use c3dgs::codec::{self, huffman, CompactContainer, Level, Stage};
use c3dgs::dynamic::{
    chain_dynamic_grads, render_dynamic, render_dynamic_backward, DynColor, DynFrame, DynGaussianSet, PhiMlp, FEATURE_DIM,
};
use c3dgs::field::{ColorField, FieldOutput};
use c3dgs::image::Image;
use c3dgs::mask::{hard_mask, prune, MaskState, DEFAULT_THRESHOLD};
use c3dgs::math::{logit, sigmoid};
use c3dgs::model::{field_features, DynamicModel, Model, StaticModel, StaticPass};
use c3dgs::render::{render, render_backward, RenderSettings, SplatInputs};
use c3dgs::report::{storage_table_for, synthetic_static_model, SyntheticColor, BASELINE_FLOATS};
use c3dgs::rvq::{AttributeKind, QuantizedAttribute, RvqCodebook, RvqConfig, RvqEncoding};
use c3dgs::scene::{Camera, ColorSource, GaussianSet, SH_COEFFS};
use c3dgs::toy::{make_toy_scene, toy_train_config, ToyScene, ToySpec};
use c3dgs::train::{evaluate, render_settings, train, SceneMode, TrainConfig, TrainOutput};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::fd::GradTally;
use super::scenes::*;
use super::Check;

fn dot(a: &Image, b: &Image) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// `count` distinct random indices below `len`.
fn pick(rng: &mut ChaCha8Rng, len: usize, count: usize) -> Vec<usize> {
    sample(rng, len, count.min(len)).into_vec()
}

// ---------------------------------------------------------------------------
// Criterion 1: gradients.

/// Rasterizer inputs and background, perturbed one entry at a time.
#[derive(Clone)]
struct RawSplats {
    positions: Vec<[f64; 3]>,
    scales: Vec<[f64; 3]>,
    rotations: Vec<[f64; 4]>,
    opacities: Vec<f64>,
    features: Vec<f64>,
    background: Vec<f64>,
    dim: usize,
}

impl RawSplats {
    fn loss(&self, cam: &Camera, d: &Image) -> f64 {
        let inputs = SplatInputs {
            positions: &self.positions,
            scales: &self.scales,
            rotations: &self.rotations,
            opacities: &self.opacities,
            features: &self.features,
            dim: self.dim,
        };
        let settings = RenderSettings::default().with_background(self.background.clone());
        dot(&render(&inputs, cam, &settings).image, d)
    }
}

pub fn grad_render_backward(seed: u64) -> GradTally {
    let mut r = rng(seed);
    let cam = small_camera(&mut r);
    let dim = if seed.is_multiple_of(2) { 3 } else { 5 };
    let g = random_static(&mut r, 3, true);
    let raw = RawSplats {
        positions: g.positions.clone(),
        scales: g.scales(),
        rotations: g.rotations.clone(),
        opacities: g.opacities(),
        features: (0..3 * dim).map(|_| uniform(&mut r, 0.0, 1.0)).collect(),
        background: (0..dim).map(|_| uniform(&mut r, 0.0, 1.0)).collect(),
        dim,
    };
    let d = random_image(&mut r, cam.width, cam.height, dim);
    let inputs = SplatInputs {
        positions: &raw.positions,
        scales: &raw.scales,
        rotations: &raw.rotations,
        opacities: &raw.opacities,
        features: &raw.features,
        dim,
    };
    let a = render_backward(&inputs, &cam, &RenderSettings::default().with_background(raw.background.clone()), &d);
    let mut t = GradTally::default();
    let mut check = |label: String, analytic: f64, bump: &dyn Fn(&mut RawSplats, f64)| {
        t.compare(&label, analytic, |delta| {
            let mut s = raw.clone();
            bump(&mut s, delta);
            s.loss(&cam, &d)
        });
    };
    for i in 0..3 {
        for k in 0..3 {
            check(format!("render position[{i}][{k}]"), a.positions[i][k], &|s, v| s.positions[i][k] += v);
            check(format!("render scale[{i}][{k}]"), a.scales[i][k], &|s, v| s.scales[i][k] += v);
        }
        for k in 0..4 {
            check(format!("render rotation[{i}][{k}]"), a.rotations[i][k], &|s, v| s.rotations[i][k] += v);
        }
        check(format!("render opacity[{i}]"), a.opacities[i], &|s, v| s.opacities[i] += v);
        for c in 0..dim {
            check(format!("render feature[{i}][{c}]"), a.features[i * dim + c], &|s, v| s.features[i * dim + c] += v);
        }
    }
    for c in 0..dim {
        check(format!("render background[{c}]"), a.background[c], &|s, v| s.background[c] += v);
    }
    t
}

/// SH-colored static pass, including view-direction and mask chains.
pub fn grad_static_sh(seed: u64) -> GradTally {
    let mut r = rng(seed ^ 0x5eed);
    let cam = small_camera(&mut r);
    let g = random_static(&mut r, 3, true);
    let mask = MaskState {
        params: (0..3).map(|_| logit(uniform(&mut r, 0.2, 0.9))).collect(),
        threshold: DEFAULT_THRESHOLD,
        lambda: 0.0,
    };
    let settings = RenderSettings::default().with_background(vec![0.2, 0.4, 0.1]);
    let d = random_image(&mut r, cam.width, cam.height, 3);
    let loss = |g: &GaussianSet| dot(&StaticPass::new(g, None, Some(&mask), &cam).render(g, &cam, &settings).image, &d);
    let pass = StaticPass::new(&g, None, Some(&mask), &cam);
    let a = pass.backward(&g, None, &cam, &settings, &d);
    let sh_entries = pick(&mut r, 3 * SH_COEFFS, 12);
    let mut t = GradTally::default();
    let mut check = |label: String, analytic: f64, bump: &dyn Fn(&mut GaussianSet, f64)| {
        t.compare(&label, analytic, |delta| {
            let mut s = g.clone();
            bump(&mut s, delta);
            loss(&s)
        });
    };
    for i in 0..3 {
        for k in 0..3 {
            check(format!("static position[{i}][{k}]"), a.positions[i][k], &|s, v| s.positions[i][k] += v);
            check(format!("static log_scale[{i}][{k}]"), a.log_scales[i][k], &|s, v| s.log_scales[i][k] += v);
        }
        for k in 0..4 {
            check(format!("static rotation[{i}][{k}]"), a.rotations[i][k], &|s, v| s.rotations[i][k] += v);
        }
        check(format!("static opacity_logit[{i}]"), a.opacity_logits[i], &|s, v| s.opacity_logits[i] += v);
    }
    for &e in &sh_entries {
        let (i, k) = (e / SH_COEFFS, e % SH_COEFFS);
        check(format!("static sh[{i}][{k}]"), a.sh[i][k], &|s, v| {
            if let ColorSource::Sh(h) = &mut s.color {
                h[i][k] += v;
            }
        });
    }
    // The straight-through mask gradient is dL/dM · σ'(m), with dL/dM the
    // derivative w.r.t. a continuous multiplier on scale and opacity.
    for i in 0..3 {
        let grad = hard_mask(mask.params[i], mask.threshold).grad;
        t.compare(&format!("mask chain[{i}]"), a.mask[i] / grad, |delta| {
            let mut p = pass.clone();
            p.masked.scales[i] = p.unmasked_scales[i].map(|s| s * (1.0 + delta));
            p.masked.opacities[i] = p.unmasked_opacities[i] * (1.0 + delta);
            dot(&p.render(&g, &cam, &settings).image, &d)
        });
    }
    t
}

/// Field-colored static pass: gradients reach the table and the network.
pub fn grad_static_field(seed: u64) -> GradTally {
    let mut r = rng(seed ^ 0xf1e1d);
    let cam = small_camera(&mut r);
    let g = random_static(&mut r, 3, false);
    let field = random_field(&mut r, FieldOutput::Rgb);
    let settings = RenderSettings::default();
    let d = random_image(&mut r, cam.width, cam.height, 3);
    let loss = |g: &GaussianSet, f: &ColorField| dot(&StaticPass::new(g, Some(f), None, &cam).render(g, &cam, &settings).image, &d);
    let a = StaticPass::new(&g, Some(&field), None, &cam).backward(&g, Some(&field), &cam, &settings, &d);
    let fg = a.field.as_ref().expect("field gradients");
    let mut t = GradTally::default();
    for i in 0..3 {
        for k in 0..3 {
            t.compare(&format!("field-static log_scale[{i}][{k}]"), a.log_scales[i][k], |v| {
                let mut s = g.clone();
                s.log_scales[i][k] += v;
                loss(&s, &field)
            });
        }
        t.compare(&format!("field-static opacity_logit[{i}]"), a.opacity_logits[i], |v| {
            let mut s = g.clone();
            s.opacity_logits[i] += v;
            loss(&s, &field)
        });
    }
    let touched: Vec<usize> = (0..fg.table.len()).filter(|&j| fg.table[j] != 0.0).collect();
    let mut entries: Vec<usize> = pick(&mut r, touched.len(), 10).into_iter().map(|j| touched[j]).collect();
    entries.extend(pick(&mut r, fg.table.len(), 3));
    for j in entries {
        t.compare(&format!("field-static table[{j}]"), fg.table[j], |v| {
            let mut f = field.clone();
            f.table[j] += v;
            loss(&g, &f)
        });
    }
    for j in pick(&mut r, field.mlp.params.len(), 15) {
        t.compare(&format!("field-static mlp[{j}]"), fg.mlp[j], |v| {
            let mut f = field.clone();
            f.mlp.params[j] += v;
            loss(&g, &f)
        });
    }
    t
}

pub fn grad_hash_encode(seed: u64) -> GradTally {
    let mut r = rng(seed ^ 0x4a54);
    let field = random_field(&mut r, FieldOutput::Rgb);
    let x = [uniform(&mut r, -2.0, 2.0), uniform(&mut r, -2.0, 2.0), uniform(&mut r, -2.0, 2.0)];
    let d_enc: Vec<f64> = (0..field.encoding_dim()).map(|_| uniform(&mut r, -1.0, 1.0)).collect();
    let mut d_table = vec![0.0; field.table.len()];
    field.hash_encode_backward(&x, &d_enc, &mut d_table);
    let loss = |f: &ColorField| f.hash_encode(&x).iter().zip(&d_enc).map(|(a, b)| a * b).sum::<f64>();
    let touched: Vec<usize> = (0..d_table.len()).filter(|&j| d_table[j] != 0.0).collect();
    let mut entries: Vec<usize> = pick(&mut r, touched.len(), 16).into_iter().map(|j| touched[j]).collect();
    entries.extend(pick(&mut r, d_table.len(), 4));
    let mut t = GradTally::default();
    for j in entries {
        t.compare(&format!("hash_encode table[{j}]"), d_table[j], |v| {
            let mut f = field.clone();
            f.table[j] += v;
            loss(&f)
        });
    }
    t
}

pub fn grad_query_color(seed: u64) -> GradTally {
    let mut r = rng(seed ^ 0x9c01);
    let field = random_field(&mut r, FieldOutput::Rgb);
    let p = [uniform(&mut r, -1.5, 1.5), uniform(&mut r, -1.5, 1.5), uniform(&mut r, -1.5, 1.5)];
    let dir = unit3(&mut r);
    let d_out: Vec<f64> = (0..3).map(|_| uniform(&mut r, -1.0, 1.0)).collect();
    let (_, caches) = field.forward_batch(&[p], Some(&[dir]));
    let a = field.backward_batch(&caches, &d_out);
    let loss = |f: &ColorField, dir: &[f64; 3]| f.query_color(&p, dir).iter().zip(&d_out).map(|(a, b)| a * b).sum::<f64>();
    let mut t = GradTally::default();
    let touched: Vec<usize> = (0..a.table.len()).filter(|&j| a.table[j] != 0.0).collect();
    for j in pick(&mut r, touched.len(), 8).into_iter().map(|j| touched[j]) {
        t.compare(&format!("query_color table[{j}]"), a.table[j], |v| {
            let mut f = field.clone();
            f.table[j] += v;
            loss(&f, &dir)
        });
    }
    for j in pick(&mut r, field.mlp.params.len(), 20) {
        t.compare(&format!("query_color mlp[{j}]"), a.mlp[j], |v| {
            let mut f = field.clone();
            f.mlp.params[j] += v;
            loss(&f, &dir)
        });
    }
    for k in 0..3 {
        t.compare(&format!("query_color direction[{k}]"), a.directions[0][k], |v| {
            let mut d2 = dir;
            d2[k] += v;
            loss(&field, &d2)
        });
    }
    t
}

pub fn grad_decode_color(seed: u64) -> GradTally {
    let mut r = rng(seed ^ 0xdec0);
    let phi = PhiMlp::new(8, 2, r.random());
    let f: Vec<f64> = (0..FEATURE_DIM).map(|_| uniform(&mut r, -1.0, 1.0)).collect();
    let dir = unit3(&mut r);
    let d_rgb = [uniform(&mut r, -1.0, 1.0), uniform(&mut r, -1.0, 1.0), uniform(&mut r, -1.0, 1.0)];
    let mut d_params = vec![0.0; phi.mlp.num_params()];
    let d_f = phi.decode_color_backward(&f, &dir, &d_rgb, &mut d_params);
    let loss = |phi: &PhiMlp, f: &[f64]| phi.decode_color(f, &dir).iter().zip(&d_rgb).map(|(a, b)| a * b).sum::<f64>();
    let mut t = GradTally::default();
    for j in 0..phi.mlp.params.len() {
        t.compare(&format!("decode_color phi[{j}]"), d_params[j], |v| {
            let mut p = phi.clone();
            p.mlp.params[j] += v;
            loss(&p, &f)
        });
    }
    for k in 0..FEATURE_DIM {
        t.compare(&format!("decode_color feature[{k}]"), d_f[k], |v| {
            let mut f2 = f.clone();
            f2[k] += v;
            loss(&phi, &f2)
        });
    }
    t
}

/// The surrogate gradient equals the derivative of σ(m) within 1e-6, and
/// passes the relative criterion as well.
pub fn grad_hard_mask(seed: u64) -> GradTally {
    let mut r = rng(seed ^ 0x3a5c);
    let mut t = GradTally::default();
    for _ in 0..10 {
        let m = uniform(&mut r, -8.0, 8.0);
        let h = hard_mask(m, DEFAULT_THRESHOLD);
        let numeric = (sigmoid(m + 1e-4) - sigmoid(m - 1e-4)) / 2e-4;
        if (h.grad - numeric).abs() >= 1e-6 {
            t.failures.push(format!("hard_mask({m}): surrogate {} vs {numeric}", h.grad));
        }
        t.compare(&format!("hard_mask({m})"), h.grad, |v| sigmoid(m + v));
    }
    t
}

/// Space-time render: polynomial motion, temporal opacity, 9-D features,
/// the φ decoder and the background term.
pub fn grad_temporal(seed: u64) -> GradTally {
    let mut r = rng(seed ^ 0x7e3d);
    let cam = small_camera(&mut r);
    let set = random_dynamic(&mut r, 3);
    let phi = PhiMlp::new(8, 1, r.random());
    let time = uniform(&mut r, 0.0, 1.0);
    let mask = MaskState {
        params: (0..3).map(|_| logit(uniform(&mut r, 0.2, 0.9))).collect(),
        threshold: DEFAULT_THRESHOLD,
        lambda: 0.0,
    };
    let settings = RenderSettings::default().with_background(vec![0.3, 0.1, 0.5]);
    let d = random_image(&mut r, cam.width, cam.height, 3);
    let loss = |s: &DynGaussianSet, p: &PhiMlp| {
        dot(&render_dynamic(&DynFrame::build(s, Some(&mask), None, time), p, &cam, &settings), &d)
    };
    let frame = DynFrame::build(&set, Some(&mask), None, time);
    let (sg, d_phi) = render_dynamic_backward(&frame, &phi, &cam, &settings, &d);
    let a = chain_dynamic_grads(&set, &frame, &sg);
    let mut t = GradTally::default();
    let mut check = |label: String, analytic: f64, bump: &dyn Fn(&mut DynGaussianSet, f64)| {
        t.compare(&label, analytic, |delta| {
            let mut s = set.clone();
            bump(&mut s, delta);
            loss(&s, &phi)
        });
    };
    for i in 0..3 {
        for k in 0..3 {
            check(format!("temporal position[{i}][{k}]"), a.positions[i][k], &|s, v| s.positions[i][k] += v);
            check(format!("temporal log_scale[{i}][{k}]"), a.log_scales[i][k], &|s, v| s.log_scales[i][k] += v);
            for o in 0..a.motion[i].len() {
                check(format!("temporal motion[{i}][{o}][{k}]"), a.motion[i][o][k], &|s, v| s.motion[i][o][k] += v);
            }
        }
        for k in 0..4 {
            check(format!("temporal rotation[{i}][{k}]"), a.rotations[i][k], &|s, v| s.rotations[i][k] += v);
            check(format!("temporal rotation_coeff[{i}][{k}]"), a.rotation_coeffs[i][k], &|s, v| s.rotation_coeffs[i][k] += v);
        }
        check(format!("temporal opacity_logit[{i}]"), a.opacity_logits[i], &|s, v| s.opacity_logits[i] += v);
        check(format!("temporal center[{i}]"), a.centers[i], &|s, v| s.centers[i] += v);
        check(format!("temporal log_scale_t[{i}]"), a.log_temporal_scales[i], &|s, v| s.log_temporal_scales[i] += v);
        for k in 0..FEATURE_DIM {
            check(format!("temporal feature[{i}][{k}]"), a.features[i][k], &|s, v| {
                if let DynColor::Features(f) = &mut s.color {
                    f[i][k] += v;
                }
            });
        }
    }
    for j in pick(&mut r, phi.mlp.params.len(), 20) {
        t.compare(&format!("temporal phi[{j}]"), d_phi[j], |v| {
            let mut p = phi.clone();
            p.mlp.params[j] += v;
            loss(&set, &p)
        });
    }
    t
}

/// Every gradient family on `scenes` random scenes.
pub fn gradient_suite(scenes: u64) -> Check {
    let start = Instant::now();
    let families: [(&str, fn(u64) -> GradTally); 8] = [
        ("render_backward", grad_render_backward),
        ("static SH pass", grad_static_sh),
        ("static field pass", grad_static_field),
        ("hash_encode", grad_hash_encode),
        ("query_color", grad_query_color),
        ("decode_color", grad_decode_color),
        ("hard_mask", grad_hard_mask),
        ("temporal", grad_temporal),
    ];
    let mut total = GradTally::default();
    let mut per_family = Vec::new();
    for (name, f) in families {
        let mut fam = GradTally::default();
        for s in 0..scenes {
            fam.merge(f(1000 + s));
        }
        per_family.push(format!("{name} {}/{}", fam.checked, fam.failures.len()));
        total.merge(fam);
    }
    let secs = start.elapsed().as_secs_f64();
    // Require the kink filter to leave the bulk of the entries checked.
    let coverage = total.checked as f64 / (total.checked + total.skipped).max(1) as f64;
    let pass = total.failures.is_empty() && coverage >= 0.9 && secs < 300.0;
    Check::new(
        "criterion 1 (gradient suite)",
        pass,
        format!(
            "{scenes} scenes, {}; coverage {:.1}%; checked/failed per family: {}; {secs:.1} s",
            total.summary(),
            100.0 * coverage,
            per_family.join(", ")
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 2: masking equivalence.

fn random_mask(rng: &mut ChaCha8Rng, n: usize) -> MaskState {
    MaskState {
        // Roughly half of σ(m) falls below the 0.01 threshold.
        params: (0..n).map(|_| uniform(rng, -9.0, 0.0)).collect(),
        threshold: DEFAULT_THRESHOLD,
        lambda: 0.0,
    }
}

pub fn masking_equivalence(scenes: u64) -> Check {
    let start = Instant::now();
    let times = [0.0, 0.3, 0.6, 1.0];
    let settings = RenderSettings::default().with_background(vec![0.1, 0.2, 0.3]);
    let mut renders = 0;
    let mut mismatches = Vec::new();
    let mut masked_total = 0;
    for s in 0..scenes {
        let mut r = rng(2000 + s);
        let cams: Vec<Camera> = (0..4).map(|_| small_camera(&mut r)).collect();

        // Static, alternating SH and field color.
        let sh = s % 2 == 0;
        let g = random_static(&mut r, 10, sh);
        let field = (!sh).then(|| random_field(&mut r, FieldOutput::Rgb));
        let mask = random_mask(&mut r, g.len());
        masked_total += g.len() - mask.alive().len();
        let (pruned, _) = prune(&g, &mask);
        for (c, cam) in cams.iter().enumerate() {
            for &t in &times {
                // Static renders ignore time; each timestamp re-renders.
                let _ = t;
                let a = StaticPass::new(&g, field.as_ref(), Some(&mask), cam).render(&g, cam, &settings);
                let b = StaticPass::new(&pruned, field.as_ref(), None, cam).render(&pruned, cam, &settings);
                renders += 1;
                if !same_bits(&a.image.data, &b.image.data) || !same_bits(&a.transmittance, &b.transmittance) {
                    mismatches.push(format!("static scene {s} camera {c}"));
                }
            }
        }

        // Space-time, alternating learned features and field features.
        let mut d = random_dynamic(&mut r, 10);
        let dfield = (s % 2 == 1).then(|| random_field(&mut r, FieldOutput::Features6));
        if dfield.is_some() {
            d.color = DynColor::Field {
                temporal: (0..d.len()).map(|_| std::array::from_fn(|_| uniform(&mut r, -0.5, 0.5))).collect(),
            };
        }
        let phi = PhiMlp::new(8, 1, r.random());
        let mask = random_mask(&mut r, d.len());
        masked_total += d.len() - mask.alive().len();
        let (dpruned, _) = prune(&d, &mask);
        let ff = dfield.as_ref().map(|f| field_features(f, &d.positions));
        let ffp = dfield.as_ref().map(|f| field_features(f, &dpruned.positions));
        for (c, cam) in cams.iter().enumerate() {
            for &t in &times {
                let a = render_dynamic(&DynFrame::build(&d, Some(&mask), ff.as_deref(), t), &phi, cam, &settings);
                let b = render_dynamic(&DynFrame::build(&dpruned, None, ffp.as_deref(), t), &phi, cam, &settings);
                renders += 1;
                if !same_bits(&a.data, &b.data) {
                    mismatches.push(format!("dynamic scene {s} camera {c} t {t}"));
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Check::new(
        "criterion 2 (masking equivalence)",
        mismatches.is_empty() && masked_total > 0 && secs < 60.0,
        format!(
            "{renders} render pairs, {masked_total} masked Gaussians, {} mismatches{}; {secs:.2} s",
            mismatches.len(),
            mismatches.first().map(|m| format!(" (first: {m})")).unwrap_or_default()
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 3: mask pressure.

pub struct TrainedToy {
    pub scene: ToyScene,
    pub cfg: TrainConfig,
    pub out: TrainOutput,
    pub secs: f64,
}

pub fn train_toy(spec: &ToySpec, cfg: TrainConfig) -> TrainedToy {
    let scene = make_toy_scene(spec).expect("toy scene");
    let mode = if spec.dynamic { SceneMode::Dynamic } else { SceneMode::Static };
    let start = Instant::now();
    let out = train(&scene.frames, &scene.init, mode, &cfg, None).expect("training");
    TrainedToy {
        scene,
        cfg,
        out,
        secs: start.elapsed().as_secs_f64(),
    }
}

pub const LAMBDAS: [f64; 3] = [1e-4, 5e-4, 4e-3];

/// Static toy runs at each mask weight, in `LAMBDAS` order.
pub fn mask_pressure_runs() -> Vec<TrainedToy> {
    LAMBDAS
        .iter()
        .map(|&l| {
            train_toy(
                &ToySpec::static_default(),
                TrainConfig {
                    lambda_mask: l,
                    ..toy_train_config()
                },
            )
        })
        .collect()
}

pub fn mask_pressure(runs: &[TrainedToy]) -> Check {
    let counts: Vec<usize> = runs.iter().map(|r| r.out.model.len()).collect();
    let psnr: Vec<f64> = runs.iter().map(|r| r.out.metrics.psnr_mean).collect();
    let secs: f64 = runs.iter().map(|r| r.secs).sum();
    let monotone = counts.windows(2).all(|w| w[1] <= w[0]);
    let reduction = 1.0 - counts[2] as f64 / counts[0] as f64;
    let drop = psnr[0] - psnr[2];
    Check::new(
        "criterion 3 (mask pressure)",
        monotone && reduction >= 0.3 && drop <= 1.0 && secs < 1200.0,
        format!(
            "N = {counts:?} for lambda_m = {LAMBDAS:?}; reduction {:.1}%; PSNR {:.2} / {:.2} / {:.2} dB, drop {drop:.3} dB; {secs:.1} s",
            100.0 * reduction,
            psnr[0],
            psnr[1],
            psnr[2]
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 4: R-VQ.

fn gaussian_vectors(seed: u64, n: usize, dim: usize) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n * dim).map(|_| r.sample::<f64, _>(StandardNormal)).collect()
}

/// Exhaustive nearest code with ties to the lowest index.
fn exhaustive_nearest(codes: &[f64], dim: usize, v: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for k in 0..codes.len() / dim {
        let mut d = 0.0;
        for j in 0..dim {
            let e = v[j] - codes[k * dim + j];
            d += e * e;
        }
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// `(1/(N·C)) Σ_l Σ_n ‖(x_n − Σ_{l'<l} Z^{l'}[i^{l'}]) − Z^l[i^l]‖²`, summed
/// term by term.
fn rvq_loss_oracle(book: &RvqCodebook, x: &[f64], indices: &[u16]) -> f64 {
    let (dim, l) = (book.dim, book.stages.len());
    let n = x.len() / dim;
    let mut total = 0.0;
    for i in 0..n {
        for stage in 0..l {
            for j in 0..dim {
                let mut residual = x[i * dim + j];
                for prev in 0..stage {
                    residual -= book.stages[prev][indices[i * l + prev] as usize * dim + j];
                }
                let e = residual - book.stages[stage][indices[i * l + stage] as usize * dim + j];
                total += e * e;
            }
        }
    }
    total / (n as f64 * book.size as f64)
}

pub fn rvq_properties() -> Check {
    let dim = 4;
    let x = gaussian_vectors(4000, 1000, dim);
    let book = RvqCodebook::fit(&x, dim, &RvqConfig::new(64, 6)).expect("fit");
    let enc = book.encode(&x);
    let energy = book.residual_energy(&x, &enc);
    let monotone = energy.windows(2).all(|w| w[1] <= w[0]);

    let single = RvqCodebook::fit(&x, dim, &RvqConfig::new(64, 1)).expect("fit");
    let probe = [x.clone(), gaussian_vectors(4001, 500, dim)].concat();
    let enc1 = single.encode(&probe);
    let mismatches = probe
        .chunks_exact(dim)
        .enumerate()
        .filter(|(n, v)| enc1.indices[*n] as usize != exhaustive_nearest(&single.stages[0], dim, v))
        .count();

    let loss = book.loss(&x, &enc);
    let oracle = rvq_loss_oracle(&book, &x, &enc.indices);
    let loss_err = (loss - oracle).abs();
    // A codebook that does not match the data exercises different indices.
    let mut r = rng(4002);
    let random_book = RvqCodebook {
        dim,
        size: 16,
        stages: (0..3).map(|_| (0..16 * dim).map(|_| uniform(&mut r, -1.0, 1.0)).collect()).collect(),
    };
    let enc_r = random_book.encode(&x);
    let loss_err_r = (random_book.loss(&x, &enc_r) - rvq_loss_oracle(&random_book, &x, &enc_r.indices)).abs();

    Check::new(
        "criterion 4 (R-VQ)",
        monotone && mismatches == 0 && loss_err <= 1e-9 && loss_err_r <= 1e-9,
        format!(
            "stage energies {:?}; L=1 mismatches vs exhaustive {mismatches}/{}; loss error {loss_err:.2e} and {loss_err_r:.2e}",
            energy.iter().map(|e| format!("{e:.2}")).collect::<Vec<_>>(),
            probe.len() / dim
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 5: codec.

fn kind_dim(kind: AttributeKind) -> usize {
    match kind {
        AttributeKind::Rotation | AttributeKind::RotationCoeffs => 4,
        AttributeKind::Scale | AttributeKind::TemporalColor => 3,
    }
}

fn random_book(r: &mut ChaCha8Rng, kind: AttributeKind, n: usize) -> QuantizedAttribute {
    let dim = kind_dim(kind);
    let size = [1, 7, 64, 256, 300][r.random_range(0..5)];
    let stages = r.random_range(1..=3);
    let book = RvqCodebook {
        dim,
        size,
        stages: (0..stages).map(|_| (0..size * dim).map(|_| uniform(r, -1.0, 1.0)).collect()).collect(),
    };
    let indices: Vec<u16> = (0..n * stages).map(|_| r.random_range(0..size) as u16).collect();
    let reconstructions = book.reconstruct(&indices);
    QuantizedAttribute {
        kind,
        book,
        encoding: RvqEncoding {
            stages,
            indices,
            reconstructions,
        },
    }
}

/// Field with a mix of tiny and large table entries.
fn fuzz_field(r: &mut ChaCha8Rng, output: FieldOutput) -> ColorField {
    let mut f = ColorField::new(small_field_config(output, r.random())).expect("field");
    let spread = uniform(r, 0.05, 2.0);
    f.table.iter_mut().for_each(|v| *v = uniform(r, -spread, spread));
    f
}

/// Random model covering every stream layout the codec produces.
pub fn fuzz_model(seed: u64) -> Model {
    let mut r = rng(seed);
    let n = match r.random_range(0..6) {
        0 => 0,
        1 => 1,
        _ => r.random_range(2..40),
    };
    if r.random_bool(0.5) {
        let use_field = r.random_bool(0.5);
        let mut g = random_static(&mut r, n, !use_field);
        g.positions.iter_mut().for_each(|p| *p = p.map(|v| v * uniform(&mut r, 0.5, 20.0)));
        let mut quantized = Vec::new();
        for kind in [AttributeKind::Scale, AttributeKind::Rotation] {
            if r.random_bool(0.5) {
                let q = random_book(&mut r, kind, n);
                let rec = &q.encoding.reconstructions;
                match kind {
                    AttributeKind::Scale => g.log_scales = rec.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
                    _ => g.rotations = rec.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect(),
                }
                quantized.push(q);
            }
        }
        Model::Static(StaticModel {
            gaussians: g,
            field: use_field.then(|| fuzz_field(&mut r, FieldOutput::Rgb)),
            quantized,
        })
    } else {
        let use_field = r.random_bool(0.5);
        let mut d = random_dynamic(&mut r, n);
        if use_field {
            d.color = DynColor::Field {
                temporal: (0..n).map(|_| std::array::from_fn(|_| uniform(&mut r, -0.5, 0.5))).collect(),
            };
        }
        let mut quantized = Vec::new();
        for kind in [AttributeKind::Scale, AttributeKind::Rotation, AttributeKind::RotationCoeffs, AttributeKind::TemporalColor] {
            if r.random_bool(0.4) {
                let q = random_book(&mut r, kind, n);
                let rec = q.encoding.reconstructions.clone();
                match kind {
                    AttributeKind::Scale => d.log_scales = rec.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
                    AttributeKind::Rotation => d.rotations = rec.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect(),
                    AttributeKind::RotationCoeffs => {
                        d.rotation_coeffs = rec.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect()
                    }
                    AttributeKind::TemporalColor => {
                        d.set_temporal_color(&rec.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect::<Vec<_>>())
                    }
                }
                quantized.push(q);
            }
        }
        let phi = PhiMlp::new(r.random_range(1..12), r.random_range(0..3), r.random());
        Model::Dynamic(DynamicModel {
            gaussians: d,
            field: use_field.then(|| fuzz_field(&mut r, FieldOutput::Features6)),
            phi,
            quantized,
        })
    }
}

/// Models with no Gaussians in every color layout.
pub fn empty_models() -> Vec<Model> {
    let mut r = rng(5000);
    vec![
        Model::Static(StaticModel {
            gaussians: GaussianSet::empty_sh(),
            field: None,
            quantized: Vec::new(),
        }),
        Model::Static(StaticModel {
            gaussians: GaussianSet::empty_field(),
            field: Some(fuzz_field(&mut r, FieldOutput::Rgb)),
            quantized: Vec::new(),
        }),
        Model::Dynamic(DynamicModel {
            gaussians: DynGaussianSet::empty(false),
            field: None,
            phi: PhiMlp::new(4, 1, 0),
            quantized: Vec::new(),
        }),
        Model::Dynamic(DynamicModel {
            gaussians: DynGaussianSet::empty(true),
            field: Some(fuzz_field(&mut r, FieldOutput::Features6)),
            phi: PhiMlp::new(4, 1, 0),
            quantized: Vec::new(),
        }),
    ]
}

/// Undoes the lossless stages of one stream and re-applies them; the result
/// must reproduce the stored bytes. Returns the number of inflated payloads.
fn restage(name: &str, codec: &[Stage], stored: &[u8], inflated: &mut Vec<(Vec<u8>, Vec<u8>)>) -> Result<(), String> {
    let base = codec[0];
    let mut bytes = stored.to_vec();
    let mut symbols = None;
    for stage in codec[1..].iter().rev() {
        match stage {
            Stage::Deflate => {
                let raw = codec::inflate(&bytes).map_err(|e| format!("{name}: {e}"))?;
                inflated.push((bytes.clone(), raw.clone()));
                bytes = raw;
            }
            Stage::Huffman => symbols = Some(huffman::decode_stream(&bytes).map_err(|e| format!("{name}: {e}"))?),
            s => return Err(format!("{name}: unexpected stage {s:?}")),
        }
    }
    let mut again = match &symbols {
        Some(s) => huffman::encode_stream(s).map_err(|e| format!("{name}: {e}"))?,
        None => bytes.clone(),
    };
    if let Some(s) = &symbols {
        // The symbols must also be a faithful view of the base payload.
        let width = if base == Stage::U16 { 2 } else { 1 };
        if s.iter().any(|&v| width == 1 && v > 255) {
            return Err(format!("{name}: symbol exceeds the byte range"));
        }
    }
    if codec.last() == Some(&Stage::Deflate) {
        again = codec::deflate(&again);
    }
    if again != stored {
        return Err(format!("{name}: re-staged bytes differ"));
    }
    Ok(())
}

/// Inverse of a permutation given as `sorted[i] = original[order[i]]`.
fn inverse(order: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; order.len()];
    for (i, &o) in order.iter().enumerate() {
        inv[o] = i;
    }
    inv
}

fn morton_identity(model: &Model) -> bool {
    let (sorted, order) = codec::morton_sort(model);
    let inv = inverse(&order);
    match (&sorted, model) {
        (Model::Static(s), Model::Static(m)) => {
            s.gaussians.select(&inv) == m.gaussians
                && s.quantized.iter().zip(&m.quantized).all(|(a, b)| a.select(&inv) == *b)
        }
        (Model::Dynamic(s), Model::Dynamic(m)) => {
            s.gaussians.select(&inv) == m.gaussians
                && s.quantized.iter().zip(&m.quantized).all(|(a, b)| a.select(&inv) == *b)
        }
        _ => false,
    }
}

/// Pre-quantization values of each 8-bit stream of `model` packed at
/// `ours_pp` (Morton order, hash tables after half rounding and pruning).
fn q8_sources(model: &Model) -> Vec<(&'static str, Vec<f64>)> {
    let (sorted, _) = codec::morton_sort(model);
    let table = |f: Option<&ColorField>| {
        f.map(|f| {
            f.table
                .iter()
                .map(|&v| codec::quant::round_f16(v).unwrap())
                .filter(|v| v.abs() >= codec::PRUNE_THRESHOLD)
                .collect::<Vec<f64>>()
        })
    };
    let mut out = Vec::new();
    match &sorted {
        Model::Static(m) => {
            out.push(("opacity", m.gaussians.opacity_logits.clone()));
            if let Some(t) = table(m.field.as_ref()) {
                out.push(("field_table", t));
            }
        }
        Model::Dynamic(m) => {
            out.push(("opacity", m.gaussians.opacity_logits.clone()));
            out.push(("temporal_center", m.gaussians.centers.clone()));
            out.push(("temporal_scale", m.gaussians.log_temporal_scales.clone()));
            if let Some(t) = table(m.field.as_ref()) {
                out.push(("field_table", t));
            }
        }
    }
    out
}

/// Largest error of each 8-bit stream relative to its bound; at most 1.
fn q8_error_ratio(model: &Model, c: &CompactContainer, problems: &mut Vec<String>) -> f64 {
    let mut worst: f64 = 0.0;
    for (name, values) in q8_sources(model) {
        let Some(i) = c.manifest.streams.iter().position(|e| e.name == name) else {
            problems.push(format!("missing 8-bit stream {name}"));
            continue;
        };
        let e = &c.manifest.streams[i];
        let Some(spec) = e.quant else {
            problems.push(format!("{name} lacks a quantization range"));
            continue;
        };
        let mut bytes = c.streams[i].clone();
        let mut symbols = None;
        for stage in e.codec[1..].iter().rev() {
            match stage {
                Stage::Deflate => bytes = codec::inflate(&bytes).unwrap(),
                Stage::Huffman => symbols = Some(huffman::decode_stream(&bytes).unwrap()),
                _ => {}
            }
        }
        let q: Vec<u8> = match symbols {
            Some(s) => s.into_iter().map(|v| v as u8).collect(),
            None => bytes,
        };
        if q.len() != values.len() {
            problems.push(format!("{name}: {} codes for {} values", q.len(), values.len()));
            continue;
        }
        let bound = (spec.max - spec.min) / 510.0;
        for (v, &code) in values.iter().zip(&q) {
            let err = (spec.dequantize(code) - v).abs();
            if err > bound {
                problems.push(format!("{name}: error {err:.3e} above bound {bound:.3e}"));
            }
            if bound > 0.0 {
                worst = worst.max(err / bound);
            } else if err > 0.0 {
                worst = f64::INFINITY;
            }
        }
    }
    worst
}

/// Decodes `payloads` with Python's zlib module and compares the output.
pub fn external_inflate(payloads: &[(Vec<u8>, Vec<u8>)]) -> Result<usize, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for (i, (compressed, _)) in payloads.iter().enumerate() {
        std::fs::write(dir.path().join(format!("{i}.z")), compressed).map_err(|e| e.to_string())?;
    }
    let script = "import sys, zlib, pathlib\n\
                  d = pathlib.Path(sys.argv[1])\n\
                  for i in range(int(sys.argv[2])):\n\
                  \x20   (d / f'{i}.raw').write_bytes(zlib.decompress((d / f'{i}.z').read_bytes()))\n";
    let status = std::process::Command::new("python3")
        .arg("-c")
        .arg(script)
        .arg(dir.path())
        .arg(payloads.len().to_string())
        .status()
        .map_err(|e| format!("python3 unavailable: {e}"))?;
    if !status.success() {
        return Err(format!("python3 zlib exited with {status}"));
    }
    for (i, (_, raw)) in payloads.iter().enumerate() {
        let ext = std::fs::read(dir.path().join(format!("{i}.raw"))).map_err(|e| e.to_string())?;
        if &ext != raw {
            return Err(format!("payload {i} decodes differently"));
        }
    }
    Ok(payloads.len())
}

pub struct CodecOutcome {
    pub containers: usize,
    pub problems: Vec<String>,
    pub worst_q8_ratio: f64,
    pub inflated: Vec<(Vec<u8>, Vec<u8>)>,
    pub pp_le_ours: usize,
    pub fixtures: usize,
}

/// Runs the codec checks on `fixtures`, each at all three levels.
pub fn codec_checks(fixtures: &[Model]) -> CodecOutcome {
    let mut out = CodecOutcome {
        containers: 0,
        problems: Vec::new(),
        worst_q8_ratio: 0.0,
        inflated: Vec::new(),
        pp_le_ours: 0,
        fixtures: fixtures.len(),
    };
    for (k, model) in fixtures.iter().enumerate() {
        let mut sizes = Vec::new();
        for level in [Level::Raw, Level::Ours, Level::OursPp] {
            let bytes = match codec::encode(model, level) {
                Ok(b) => b,
                Err(e) => {
                    out.problems.push(format!("fixture {k} {}: encode failed: {e}", level.name()));
                    continue;
                }
            };
            out.containers += 1;
            sizes.push(bytes.len());
            let c = match CompactContainer::from_bytes(&bytes) {
                Ok(c) => c,
                Err(e) => {
                    out.problems.push(format!("fixture {k} {}: parse failed: {e}", level.name()));
                    continue;
                }
            };
            if c.to_bytes().ok().as_deref() != Some(&bytes[..]) {
                out.problems.push(format!("fixture {k} {}: container bytes differ after a round trip", level.name()));
            }
            if bytes[6] & 1 == 1 {
                // Deflated manifest: header, then the payload of the stated length.
                let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
                let z = bytes[12..12 + len].to_vec();
                match codec::inflate(&z) {
                    Ok(raw) => out.inflated.push((z, raw)),
                    Err(e) => out.problems.push(format!("fixture {k}: manifest inflate failed: {e}")),
                }
            }
            for (e, data) in c.manifest.streams.iter().zip(&c.streams) {
                if let Err(p) = restage(&e.name, &e.codec, data, &mut out.inflated) {
                    out.problems.push(format!("fixture {k} {}: {p}", level.name()));
                }
            }
            match codec::decode(&bytes) {
                Ok(decoded) => {
                    if level == Level::Raw && codec::encode(&decoded, Level::Raw).ok().as_deref() != Some(&bytes[..]) {
                        out.problems.push(format!("fixture {k}: lossless level does not reproduce its bytes"));
                    }
                    if decoded.len() != model.len() {
                        out.problems.push(format!("fixture {k} {}: count changed", level.name()));
                    }
                }
                Err(e) => out.problems.push(format!("fixture {k} {}: decode failed: {e}", level.name())),
            }
            if level == Level::OursPp {
                let ratio = q8_error_ratio(model, &c, &mut out.problems);
                out.worst_q8_ratio = out.worst_q8_ratio.max(ratio);
            }
        }
        if !morton_identity(model) {
            out.problems.push(format!("fixture {k}: Morton permutation does not invert"));
        }
        if sizes.len() == 3 {
            if sizes[2] <= sizes[1] {
                out.pp_le_ours += 1;
            } else {
                out.problems.push(format!("fixture {k}: ours_pp {} B > ours {} B", sizes[2], sizes[1]));
            }
        }
    }
    out
}

pub fn codec_round_trips(fuzzed: u64, extra: &[Model]) -> Check {
    let start = Instant::now();
    let mut fixtures: Vec<Model> = (0..fuzzed).map(|s| fuzz_model(6000 + s)).collect();
    fixtures.extend(empty_models());
    fixtures.extend(extra.iter().cloned());
    let mut o = codec_checks(&fixtures);
    let external = external_inflate(&o.inflated);
    if let Err(e) = &external {
        o.problems.push(format!("external decoder: {e}"));
    }
    let secs = start.elapsed().as_secs_f64();
    Check::new(
        "criterion 5 (codec round trips)",
        o.problems.is_empty() && o.worst_q8_ratio <= 1.0,
        format!(
            "{} fixtures, {} containers; ours_pp <= ours on {}/{}; worst 8-bit error {:.3} of (max-min)/510; {} DEFLATE payloads decoded by python3 zlib; {} problems{}; {secs:.1} s",
            o.fixtures,
            o.containers,
            o.pp_le_ours,
            o.fixtures,
            o.worst_q8_ratio,
            external.unwrap_or(0),
            o.problems.len(),
            o.problems.first().map(|p| format!(" (first: {p})")).unwrap_or_default()
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 6: toy reproduction.

/// Train PSNR of the model and of its `ours_pp` round trip.
pub fn pp_round_trip(run: &TrainedToy) -> (f64, f64, usize) {
    let settings = render_settings(&run.cfg);
    let bytes = codec::encode(&run.out.model, Level::OursPp).expect("pack");
    let back = codec::decode(&bytes).expect("unpack");
    let before = evaluate(&run.out.model, &run.scene.frames, &settings).psnr_mean;
    let after = evaluate(&back, &run.scene.frames, &settings).psnr_mean;
    (before, after, bytes.len())
}

pub fn toy_reproduction(static_run: &TrainedToy, dynamic_run: &TrainedToy) -> Check {
    let start = Instant::now();
    let (s0, s1, sb) = pp_round_trip(static_run);
    let (d0, d1, db) = pp_round_trip(dynamic_run);
    let secs = static_run.secs + dynamic_run.secs + start.elapsed().as_secs_f64();
    Check::new(
        "criterion 6 (toy reproduction)",
        s0 >= 35.0 && s0 - s1 < 0.1 && d0 >= 30.0 && d0 - d1 < 0.1 && secs < 900.0,
        format!(
            "static {s0:.2} dB (N = {}), ours_pp {s1:.2} dB in {sb} B, drop {:.3}; dynamic {d0:.2} dB (N = {}), ours_pp {d1:.2} dB in {db} B, drop {:.3}; {secs:.1} s",
            static_run.out.model.len(),
            s0 - s1,
            dynamic_run.out.model.len(),
            d0 - d1
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 7: storage accounting.

pub fn storage_accounting() -> Check {
    let n = 100_000;
    let sh = codec::encode(&synthetic_static_model(n, SyntheticColor::Sh, None, 7).unwrap(), Level::Raw).unwrap();
    let sh_table = storage_table_for(&sh).unwrap();
    let color_share = sh_table.row("color").unwrap().per_gaussian_bytes as f64 / (sh_table.bytes_per_gaussian * n as f64);
    let target = 606.9 / 746.0;
    let share_ok = (color_share - target).abs() / target <= 0.01;

    let color_bytes = |count: usize| {
        let b = codec::encode(&synthetic_static_model(count, SyntheticColor::Field, None, 7).unwrap(), Level::Raw).unwrap();
        storage_table_for(&b).unwrap().row("color").unwrap().bytes
    };
    let (c_small, c_large) = (color_bytes(n / 2), color_bytes(n));

    let ours_model = synthetic_static_model(n, SyntheticColor::Field, Some((64, 6)), 7).unwrap();
    let ours = storage_table_for(&codec::encode(&ours_model, Level::Ours).unwrap()).unwrap();
    let pp = storage_table_for(&codec::encode(&ours_model, Level::OursPp).unwrap()).unwrap();
    Check::new(
        "criterion 7 (storage accounting)",
        share_ok && c_small == c_large && ours.per_gaussian_ratio <= 0.2,
        format!(
            "SH color share {color_share:.4} vs {target:.4} ({}/{BASELINE_FLOATS} floats); field color {c_small} B at N = {} and {c_large} B at N = {n}; ours {:.2} B/Gaussian = {:.2}% of baseline ({:.1}x), ours_pp {:.2} B/Gaussian = {:.2}% ({:.1}x)",
            48,
            n / 2,
            ours.bytes_per_gaussian,
            100.0 * ours.per_gaussian_ratio,
            1.0 / ours.per_gaussian_ratio,
            pp.bytes_per_gaussian,
            100.0 * pp.per_gaussian_ratio,
            1.0 / pp.per_gaussian_ratio
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 8: determinism.

pub fn render_variants(model: &Model, cam: &Camera, t: f64) -> Result<(), String> {
    let reference = model.render(cam, t, &RenderSettings::default());
    for threads in [1, 2, 3, 4] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
        for tile in [4, 8, 16, 32] {
            let img = pool.install(|| model.render(cam, t, &RenderSettings::default().with_tile_size(tile)));
            if !same_bits(&img.data, &reference.data) {
                return Err(format!("{} render differs with {threads} threads and tile {tile}", model.mode()));
            }
        }
    }
    Ok(())
}

/// Trains the static toy again on a 3-thread pool and compares containers
/// with `first`; then compares renders across thread counts and tile sizes.
pub fn determinism(first: &TrainedToy, dynamic_run: &TrainedToy) -> Check {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let second = pool.install(|| train_toy(&ToySpec::static_default(), first.cfg.clone()));
    let mut problems = Vec::new();
    for level in [Level::Raw, Level::Ours, Level::OursPp] {
        let a = codec::encode(&first.out.model, level).unwrap();
        let b = codec::encode(&second.out.model, level).unwrap();
        if a != b {
            problems.push(format!("{} containers differ", level.name()));
        }
    }
    for run in [first, dynamic_run] {
        for f in run.scene.frames.iter().step_by(3) {
            if let Err(e) = render_variants(&run.out.model, &f.camera, f.time) {
                problems.push(e);
                break;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Check::new(
        "criterion 8 (determinism)",
        problems.is_empty(),
        format!(
            "second run N = {} vs {}; containers at 3 levels and renders over 4 thread counts x 4 tile sizes compared; {} differences{}; {secs:.1} s",
            second.out.model.len(),
            first.out.model.len(),
            problems.len(),
            problems.first().map(|p| format!(" (first: {p})")).unwrap_or_default()
        ),
    )
}
