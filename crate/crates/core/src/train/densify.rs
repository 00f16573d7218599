//! Clone, split and prune.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dynamic::{DynColor, DynGaussianSet};
use crate::mask::MaskState;
use crate::math::{logit, normalize_quat, quat_to_matrix, sigmoid, to_vec3};
use crate::optim::Adam;
use crate::scene::{ColorSource, GaussianSet};

/// Children of a split are this much smaller than their parent.
pub const SPLIT_SCALE_DIVISOR: f64 = 1.6;

/// Row-level access shared by static and space-time sets.
pub trait Densify: Sized {
    fn count(&self) -> usize;
    /// Canonical position.
    fn position(&self, n: usize) -> [f64; 3];
    fn log_scale(&self, n: usize) -> [f64; 3];
    fn rotation(&self, n: usize) -> [f64; 4];
    fn opacity_logit(&self, n: usize) -> f64;
    fn set_opacity_logit(&mut self, n: usize, v: f64);
    /// Appends a copy of row `n` with a new position and log-scale.
    fn push_copy(&mut self, n: usize, position: [f64; 3], log_scale: [f64; 3]);
    fn keep_rows(&self, rows: &[usize]) -> Self;
}

impl Densify for GaussianSet {
    fn count(&self) -> usize {
        self.len()
    }
    fn position(&self, n: usize) -> [f64; 3] {
        self.positions[n]
    }
    fn log_scale(&self, n: usize) -> [f64; 3] {
        self.log_scales[n]
    }
    fn rotation(&self, n: usize) -> [f64; 4] {
        self.rotations[n]
    }
    fn opacity_logit(&self, n: usize) -> f64 {
        self.opacity_logits[n]
    }
    fn set_opacity_logit(&mut self, n: usize, v: f64) {
        self.opacity_logits[n] = v;
    }
    fn push_copy(&mut self, n: usize, position: [f64; 3], log_scale: [f64; 3]) {
        self.positions.push(position);
        self.log_scales.push(log_scale);
        self.rotations.push(self.rotations[n]);
        self.opacity_logits.push(self.opacity_logits[n]);
        if let ColorSource::Sh(sh) = &mut self.color {
            sh.push(sh[n]);
        }
    }
    fn keep_rows(&self, rows: &[usize]) -> Self {
        self.select(rows)
    }
}

impl Densify for DynGaussianSet {
    fn count(&self) -> usize {
        self.len()
    }
    fn position(&self, n: usize) -> [f64; 3] {
        self.positions[n]
    }
    fn log_scale(&self, n: usize) -> [f64; 3] {
        self.log_scales[n]
    }
    fn rotation(&self, n: usize) -> [f64; 4] {
        self.rotations[n]
    }
    fn opacity_logit(&self, n: usize) -> f64 {
        self.opacity_logits[n]
    }
    fn set_opacity_logit(&mut self, n: usize, v: f64) {
        self.opacity_logits[n] = v;
    }
    fn push_copy(&mut self, n: usize, position: [f64; 3], log_scale: [f64; 3]) {
        self.positions.push(position);
        self.log_scales.push(log_scale);
        self.rotations.push(self.rotations[n]);
        self.opacity_logits.push(self.opacity_logits[n]);
        match &mut self.color {
            DynColor::Features(f) => f.push(f[n]),
            DynColor::Field { temporal } => temporal.push(temporal[n]),
        }
        self.motion.push(self.motion[n]);
        self.rotation_coeffs.push(self.rotation_coeffs[n]);
        self.centers.push(self.centers[n]);
        self.log_temporal_scales.push(self.log_temporal_scales[n]);
    }
    fn keep_rows(&self, rows: &[usize]) -> Self {
        self.select(rows)
    }
}

/// Accumulated screen-space gradient norms since the last densification.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradStats {
    pub accum: Vec<f64>,
    pub count: Vec<u32>,
}

impl GradStats {
    pub fn new(n: usize) -> Self {
        GradStats {
            accum: vec![0.0; n],
            count: vec![0; n],
        }
    }

    /// Adds one view's gradient for visible Gaussians. Pixel gradients are
    /// converted to normalized device units (`× W/2`, `× H/2`).
    pub fn add(&mut self, means2d: &[[f64; 2]], visible: &[bool], width: usize, height: usize) {
        for i in 0..means2d.len() {
            if visible[i] {
                let gx = means2d[i][0] * width as f64 * 0.5;
                let gy = means2d[i][1] * height as f64 * 0.5;
                self.accum[i] += (gx * gx + gy * gy).sqrt();
                self.count[i] += 1;
            }
        }
    }

    pub fn mean(&self, n: usize) -> f64 {
        if self.count[n] == 0 {
            0.0
        } else {
            self.accum[n] / self.count[n] as f64
        }
    }
}

/// Structural edit: surviving original rows, then appended copies.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RowPlan {
    pub keep: Vec<usize>,
    /// `(source row, position, log_scale)` of each new row.
    pub added: Vec<(usize, [f64; 3], [f64; 3])>,
}

impl RowPlan {
    pub fn identity(n: usize) -> Self {
        RowPlan {
            keep: (0..n).collect(),
            added: Vec::new(),
        }
    }

    pub fn is_identity(&self, n: usize) -> bool {
        self.added.is_empty() && self.keep.len() == n
    }

    /// Source row of every output row.
    pub fn sources(&self) -> Vec<usize> {
        self.keep.iter().copied().chain(self.added.iter().map(|a| a.0)).collect()
    }

    pub fn apply_set<T: Densify + Clone>(&self, set: &T) -> T {
        let n = set.count();
        let mut grown = set.clone();
        for &(src, p, s) in &self.added {
            grown.push_copy(src, p, s);
        }
        let rows: Vec<usize> = self.keep.iter().copied().chain(n..n + self.added.len()).collect();
        grown.keep_rows(&rows)
    }

    /// Mask parameters follow their source row.
    pub fn apply_mask(&self, mask: &MaskState) -> MaskState {
        mask.select(&self.sources())
    }

    /// Surviving rows keep their moments; new rows start from zero.
    pub fn apply_adam(&self, adam: &mut Adam) {
        adam.select_rows(&self.keep);
        adam.push_rows(self.added.len());
    }
}

/// Growth plan: clone small Gaussians and split large ones whose mean
/// screen-space gradient reaches `threshold`. Split parents are removed.
pub fn grow_plan<T: Densify, R: Rng>(
    set: &T,
    stats: &GradStats,
    threshold: f64,
    dense_scale: f64,
    max_gaussians: usize,
    rng: &mut R,
) -> RowPlan {
    let n = set.count();
    let mut plan = RowPlan::default();
    let mut split = vec![false; n];
    let mut budget = max_gaussians.saturating_sub(n);
    for i in 0..n {
        if stats.mean(i) < threshold || budget == 0 {
            continue;
        }
        let ls = set.log_scale(i);
        let max_scale = ls.iter().copied().fold(f64::NEG_INFINITY, f64::max).exp();
        if max_scale <= dense_scale {
            plan.added.push((i, set.position(i), ls));
            budget -= 1;
        } else {
            split[i] = true;
            budget = budget.saturating_sub(1);
            let rot = quat_to_matrix(&normalize_quat(&set.rotation(i)));
            let s = ls.map(f64::exp);
            let child_scale = s.map(|v| (v / SPLIT_SCALE_DIVISOR).ln());
            let p = to_vec3(&set.position(i));
            for _ in 0..2 {
                let z: [f64; 3] = std::array::from_fn(|k| s[k] * rng.sample::<f64, _>(StandardNormal));
                let q = p + rot * to_vec3(&z);
                plan.added.push((i, [q[0], q[1], q[2]], child_scale));
            }
        }
    }
    plan.keep = (0..n).filter(|&i| !split[i]).collect();
    plan
}

/// Rows surviving the opacity floor and the binary mask.
pub fn prune_plan<T: Densify>(set: &T, mask: Option<&MaskState>, min_opacity: f64) -> RowPlan {
    let alive = mask.map(|m| m.values());
    RowPlan {
        keep: (0..set.count())
            .filter(|&i| sigmoid(set.opacity_logit(i)) >= min_opacity && alive.as_ref().is_none_or(|a| a[i] == 1.0))
            .collect(),
        added: Vec::new(),
    }
}

/// Caps every opacity at 0.01. Returns the rows that changed.
pub fn reset_opacity<T: Densify>(set: &mut T) -> Vec<usize> {
    let cap = logit(0.01);
    let mut changed = Vec::new();
    for i in 0..set.count() {
        if set.opacity_logit(i) > cap {
            set.set_opacity_logit(i, cap);
            changed.push(i);
        }
    }
    changed
}
