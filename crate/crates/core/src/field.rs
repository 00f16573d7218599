//! Neural color field: contraction, multiresolution hash grid and a tiny MLP.
//!
//! Static scenes query `f(contract(p), d)` for an SH degree-0 coefficient per
//! channel, converted to RGB. Space-time scenes query `f(contract(p))` for six
//! raw color features and feed no direction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{from_vec3, to_vec3, Mat3, Vec3};
use crate::mlp::{Mlp, MlpCache};
use crate::render::sh::{dc_to_rgb, SH_C0};

const PRIMES: [u32; 3] = [1, 2_654_435_761, 805_459_861];

/// Maps `R³` into the open ball of radius 2: identity inside the unit ball,
/// `(2 − 1/‖p‖) p/‖p‖` outside.
pub fn contract(p: &[f64; 3]) -> [f64; 3] {
    let v = to_vec3(p);
    let r = v.norm();
    if r <= 1.0 {
        *p
    } else {
        from_vec3(&(v * ((2.0 - 1.0 / r) / r)))
    }
}

/// Jacobian of [`contract`].
pub fn contract_jacobian(p: &[f64; 3]) -> Mat3 {
    let v = to_vec3(p);
    let r = v.norm();
    if r <= 1.0 {
        return Mat3::identity();
    }
    let (r2, r3, r4) = (r * r, r * r * r, r * r * r * r);
    Mat3::identity() * (2.0 / r - 1.0 / r2) + v * v.transpose() * (-2.0 / r3 + 2.0 / r4)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldOutput {
    /// Three SH degree-0 coefficients converted to RGB; the view direction is
    /// part of the MLP input.
    Rgb,
    /// Six raw features, no direction input.
    Features6,
}

impl FieldOutput {
    pub fn dim(self) -> usize {
        match self {
            FieldOutput::Rgb => 3,
            FieldOutput::Features6 => 6,
        }
    }

    pub fn uses_direction(self) -> bool {
        matches!(self, FieldOutput::Rgb)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub levels: usize,
    pub features_per_level: usize,
    pub min_resolution: usize,
    pub max_resolution: usize,
    /// log2 of the per-level hash table cap T.
    pub log2_table_size: u32,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub output: FieldOutput,
    pub seed: u64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            levels: 16,
            features_per_level: 2,
            min_resolution: 16,
            max_resolution: 4096,
            log2_table_size: 19,
            hidden_width: 64,
            hidden_layers: 2,
            output: FieldOutput::Rgb,
            seed: 0,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.features_per_level == 0 {
            return Err(Error::InvalidArgument("hash grid needs levels and features".into()));
        }
        if self.min_resolution < 1 || self.max_resolution < self.min_resolution {
            return Err(Error::InvalidArgument("invalid hash grid resolution range".into()));
        }
        if self.levels > 1 && self.max_resolution == self.min_resolution {
            return Err(Error::InvalidArgument("level resolutions must be strictly increasing".into()));
        }
        if self.log2_table_size == 0 || self.log2_table_size > 28 {
            return Err(Error::InvalidArgument("log2 table size must be in 1..=28".into()));
        }
        Ok(())
    }

    /// Geometrically spaced level resolutions from min to max.
    pub fn resolutions(&self) -> Vec<usize> {
        if self.levels == 1 {
            return vec![self.min_resolution];
        }
        let growth = ((self.max_resolution as f64).ln() - (self.min_resolution as f64).ln()) / (self.levels - 1) as f64;
        (0..self.levels)
            .map(|l| (self.min_resolution as f64 * (growth * l as f64).exp() + 1e-6).floor() as usize)
            .collect()
    }

    pub fn mlp_sizes(&self) -> Vec<usize> {
        let input = self.levels * self.features_per_level + if self.output.uses_direction() { 3 } else { 0 };
        let mut sizes = vec![input];
        sizes.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        sizes.push(self.output.dim());
        sizes
    }
}

/// Per-level hash table layout.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelLayout {
    pub resolution: usize,
    /// Table entries (a power of two).
    pub size: usize,
    /// Dense indexing when every grid vertex fits in the table.
    pub dense: bool,
    /// Offset of the level's first entry, in entries.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColorField {
    pub config: FieldConfig,
    pub layout: Vec<LevelLayout>,
    /// `Σ size × features_per_level` hash features.
    pub table: Vec<f64>,
    pub mlp: Mlp,
}

/// Per-query state for the backward pass.
#[derive(Clone, Debug)]
pub struct FieldCache {
    /// `(entry index, trilinear weight)` for 8 corners per level.
    corners: Vec<(usize, f64)>,
    mlp: MlpCache,
    /// Raw MLP output before the RGB conversion.
    raw: Vec<f64>,
}

/// Gradients w.r.t. field parameters and the direction input.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldGrads {
    pub table: Vec<f64>,
    pub mlp: Vec<f64>,
    /// One entry per query; zero for the feature-output field.
    pub directions: Vec<[f64; 3]>,
}

impl ColorField {
    pub fn new(config: FieldConfig) -> Result<Self> {
        config.validate()?;
        let cap = 1usize << config.log2_table_size;
        let mut layout = Vec::with_capacity(config.levels);
        let mut offset = 0;
        for res in config.resolutions() {
            let vertices = (res + 1).pow(3);
            let size = vertices.next_power_of_two().min(cap);
            layout.push(LevelLayout {
                resolution: res,
                size,
                dense: vertices <= size,
                offset,
            });
            offset += size;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let table = (0..offset * config.features_per_level)
            .map(|_| rng.random_range(-1e-4..1e-4))
            .collect();
        let mlp = Mlp::new(&config.mlp_sizes(), config.seed.wrapping_add(1));
        Ok(ColorField {
            config,
            layout,
            table,
            mlp,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.config.output.dim()
    }

    pub fn encoding_dim(&self) -> usize {
        self.config.levels * self.config.features_per_level
    }

    pub fn num_params(&self) -> usize {
        self.table.len() + self.mlp.num_params()
    }

    fn entry_index(level: &LevelLayout, c: [usize; 3]) -> usize {
        let local = if level.dense {
            let v = level.resolution + 1;
            c[0] + v * (c[1] + v * c[2])
        } else {
            let h = (c[0] as u32).wrapping_mul(PRIMES[0])
                ^ (c[1] as u32).wrapping_mul(PRIMES[1])
                ^ (c[2] as u32).wrapping_mul(PRIMES[2]);
            h as usize & (level.size - 1)
        };
        level.offset + local
    }

    fn lookup(&self, x: &[f64; 3]) -> Vec<(usize, f64)> {
        let mut corners = Vec::with_capacity(self.layout.len() * 8);
        for level in &self.layout {
            let res = level.resolution as f64;
            let mut base = [0usize; 3];
            let mut frac = [0.0; 3];
            for k in 0..3 {
                let u = ((x[k] + 2.0) / 4.0).clamp(0.0, 1.0) * res;
                let cell = (u.floor() as usize).min(level.resolution - 1);
                base[k] = cell;
                frac[k] = u - cell as f64;
            }
            for corner in 0..8 {
                let mut w = 1.0;
                let mut c = base;
                for k in 0..3 {
                    if corner >> k & 1 == 1 {
                        c[k] += 1;
                        w *= frac[k];
                    } else {
                        w *= 1.0 - frac[k];
                    }
                }
                corners.push((Self::entry_index(level, c), w));
            }
        }
        corners
    }

    fn encode_from(&self, corners: &[(usize, f64)]) -> Vec<f64> {
        let f = self.config.features_per_level;
        let mut out = vec![0.0; self.encoding_dim()];
        for (l, level_corners) in corners.chunks_exact(8).enumerate() {
            for &(idx, w) in level_corners {
                for j in 0..f {
                    out[l * f + j] += w * self.table[idx * f + j];
                }
            }
        }
        out
    }

    /// Concatenated trilinearly interpolated features of a contracted point.
    pub fn hash_encode(&self, x: &[f64; 3]) -> Vec<f64> {
        self.encode_from(&self.lookup(x))
    }

    /// Accumulates the table gradient of `Σ d_enc ⊙ hash_encode(x)`.
    pub fn hash_encode_backward(&self, x: &[f64; 3], d_enc: &[f64], d_table: &mut [f64]) {
        let f = self.config.features_per_level;
        for (l, level_corners) in self.lookup(x).chunks_exact(8).enumerate() {
            for &(idx, w) in level_corners {
                for j in 0..f {
                    d_table[idx * f + j] += w * d_enc[l * f + j];
                }
            }
        }
    }

    fn forward_one(&self, position: &[f64; 3], direction: Option<&[f64; 3]>) -> (Vec<f64>, FieldCache) {
        let corners = self.lookup(&contract(position));
        let mut input = self.encode_from(&corners);
        if self.config.output.uses_direction() {
            let d = direction.expect("static color field needs a view direction");
            input.extend_from_slice(d);
        }
        let mlp = self.mlp.forward_cached(&input);
        let raw = mlp.output().to_vec();
        let out = match self.config.output {
            FieldOutput::Rgb => raw.iter().map(|&k| dc_to_rgb(k)).collect(),
            FieldOutput::Features6 => raw.clone(),
        };
        (out, FieldCache { corners, mlp, raw })
    }

    /// View-dependent RGB of a Gaussian at `position` seen along `direction`.
    pub fn query_color(&self, position: &[f64; 3], direction: &[f64; 3]) -> [f64; 3] {
        assert_eq!(self.config.output, FieldOutput::Rgb);
        let (out, _) = self.forward_one(position, Some(direction));
        [out[0], out[1], out[2]]
    }

    /// Six color features at `position`.
    pub fn query_features(&self, position: &[f64; 3]) -> [f64; 6] {
        assert_eq!(self.config.output, FieldOutput::Features6);
        let (out, _) = self.forward_one(position, None);
        [out[0], out[1], out[2], out[3], out[4], out[5]]
    }

    /// Batched forward pass; `directions` is ignored by feature fields.
    pub fn forward_batch(&self, positions: &[[f64; 3]], directions: Option<&[[f64; 3]]>) -> (Vec<f64>, Vec<FieldCache>) {
        let results: Vec<(Vec<f64>, FieldCache)> = positions
            .par_iter()
            .enumerate()
            .map(|(i, p)| self.forward_one(p, directions.map(|d| &d[i])))
            .collect();
        let mut out = Vec::with_capacity(positions.len() * self.output_dim());
        let mut caches = Vec::with_capacity(positions.len());
        for (o, c) in results {
            out.extend(o);
            caches.push(c);
        }
        (out, caches)
    }

    /// Gradients of `Σ d_outputs ⊙ forward_batch(...)`. Partial sums are
    /// formed over fixed-size chunks and reduced in order.
    pub fn backward_batch(&self, caches: &[FieldCache], d_outputs: &[f64]) -> FieldGrads {
        const CHUNK: usize = 64;
        let dim = self.output_dim();
        let enc = self.encoding_dim();
        let f = self.config.features_per_level;
        let uses_dir = self.config.output.uses_direction();
        let partials: Vec<(Vec<f64>, Vec<(usize, Vec<f64>)>, Vec<[f64; 3]>)> = caches
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(chunk, cs)| {
                let mut d_mlp = vec![0.0; self.mlp.num_params()];
                let mut d_inputs = Vec::with_capacity(cs.len());
                let mut d_dirs = Vec::with_capacity(cs.len());
                for (k, cache) in cs.iter().enumerate() {
                    let i = chunk * CHUNK + k;
                    let d_out = &d_outputs[i * dim..(i + 1) * dim];
                    let d_raw: Vec<f64> = match self.config.output {
                        FieldOutput::Rgb => d_out
                            .iter()
                            .zip(&cache.raw)
                            .map(|(g, &r)| if r * SH_C0 + 0.5 < 0.0 { 0.0 } else { g * SH_C0 })
                            .collect(),
                        FieldOutput::Features6 => d_out.to_vec(),
                    };
                    let d_in = self.mlp.backward(&cache.mlp, &d_raw, &mut d_mlp);
                    d_dirs.push(if uses_dir { [d_in[enc], d_in[enc + 1], d_in[enc + 2]] } else { [0.0; 3] });
                    d_inputs.push((i, d_in));
                }
                (d_mlp, d_inputs, d_dirs)
            })
            .collect();

        let mut grads = FieldGrads {
            table: vec![0.0; self.table.len()],
            mlp: vec![0.0; self.mlp.num_params()],
            directions: Vec::with_capacity(caches.len()),
        };
        for (d_mlp, d_inputs, d_dirs) in partials {
            for (a, b) in grads.mlp.iter_mut().zip(d_mlp) {
                *a += b;
            }
            for (i, d_in) in d_inputs {
                for (l, level_corners) in caches[i].corners.chunks_exact(8).enumerate() {
                    for &(idx, w) in level_corners {
                        for j in 0..f {
                            grads.table[idx * f + j] += w * d_in[l * f + j];
                        }
                    }
                }
            }
            grads.directions.extend(d_dirs);
        }
        grads
    }
}

/// Unit view direction from a camera center to a Gaussian, and the Jacobian
/// used to carry direction gradients back to the position.
pub fn view_direction(position: &[f64; 3], camera_center: &Vec3) -> [f64; 3] {
    let d = to_vec3(position) - camera_center;
    let n = d.norm();
    if n == 0.0 {
        return [0.0, 0.0, 1.0];
    }
    from_vec3(&(d / n))
}

/// `dL/dp` from `dL/dd` for `d = normalize(p − c)`.
pub fn view_direction_backward(position: &[f64; 3], camera_center: &Vec3, d_dir: &[f64; 3]) -> [f64; 3] {
    let d = to_vec3(position) - camera_center;
    let n = d.norm();
    if n == 0.0 {
        return [0.0; 3];
    }
    let u = d / n;
    let g = to_vec3(d_dir);
    from_vec3(&((g - u * u.dot(&g)) / n))
}
