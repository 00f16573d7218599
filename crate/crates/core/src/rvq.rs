//! Residual vector quantization.
//!
//! `L` codebooks of `C` codes each are applied in cascade: stage `l` picks the
//! code nearest to what stages `1..l` left unexplained, and a vector is
//! reconstructed as the sum of its selected codes. Codebooks are initialized
//! stage by stage with k-means on the running residuals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RvqConfig {
    /// Codes per stage (C).
    pub size: usize,
    /// Number of stages (L).
    pub stages: usize,
    pub kmeans_iters: usize,
    pub seed: u64,
}

impl RvqConfig {
    pub fn new(size: usize, stages: usize) -> Self {
        RvqConfig {
            size,
            stages,
            kmeans_iters: 10,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages == 0 {
            return Err(Error::InvalidArgument("R-VQ needs at least one stage".into()));
        }
        if self.size == 0 || self.size > u16::MAX as usize + 1 {
            return Err(Error::InvalidArgument(format!("codebook size {} out of range", self.size)));
        }
        Ok(())
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest code; ties go to the lowest index.
#[inline]
pub fn nearest(codes: &[f64], dim: usize, v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, code) in codes.chunks_exact(dim).enumerate() {
        let d = sq_dist(code, v);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    /// `size × dim`, row-major.
    pub codes: Vec<f64>,
    /// True when there were fewer vectors than codes and codes were filled by
    /// duplicating input vectors.
    pub padded: bool,
}

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are re-seeded with
/// the vector farthest from its current centroid.
pub fn kmeans_init(vectors: &[f64], dim: usize, size: usize, iters: usize, seed: u64) -> Result<KMeans> {
    let n = vectors.len() / dim;
    if n == 0 || !vectors.len().is_multiple_of(dim) {
        return Err(Error::InvalidArgument("k-means needs at least one vector".into()));
    }
    if size == 0 {
        return Err(Error::InvalidArgument("k-means needs at least one cluster".into()));
    }
    if size >= n {
        let codes = (0..size)
            .flat_map(|k| vectors[(k % n) * dim..(k % n + 1) * dim].iter().copied())
            .collect();
        return Ok(KMeans {
            codes,
            padded: size > n,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |i: usize| &vectors[i * dim..(i + 1) * dim];

    // k-means++ seeding.
    let mut codes = Vec::with_capacity(size * dim);
    let first = rng.random_range(0..n);
    codes.extend_from_slice(point(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(point(i), point(first))).collect();
    for _ in 1..size {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    if target < d {
                        chosen = Some(i);
                        break;
                    }
                    target -= d;
                }
            }
            chosen.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            rng.random_range(0..n)
        };
        let c = point(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(point(i), &c));
        }
        codes.extend_from_slice(&c);
    }

    let mut assign = vec![0usize; n];
    for _ in 0..iters {
        let assigned: Vec<(usize, f64)> = (0..n).into_par_iter().map(|i| nearest(&codes, dim, point(i))).collect();
        for (a, (k, _)) in assign.iter_mut().zip(&assigned) {
            *a = *k;
        }
        let mut sums = vec![0.0; size * dim];
        let mut counts = vec![0usize; size];
        for i in 0..n {
            counts[assign[i]] += 1;
            for (s, v) in sums[assign[i] * dim..(assign[i] + 1) * dim].iter_mut().zip(point(i)) {
                *s += v;
            }
        }
        let mut dist: Vec<f64> = assigned.iter().map(|(_, d)| *d).collect();
        for k in 0..size {
            if counts[k] > 0 {
                for j in 0..dim {
                    codes[k * dim + j] = sums[k * dim + j] / counts[k] as f64;
                }
            } else {
                let (far, _) = dist
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &d)| if d > best.1 { (i, d) } else { best });
                codes[k * dim..(k + 1) * dim].copy_from_slice(point(far));
                dist[far] = 0.0;
            }
        }
    }
    Ok(KMeans { codes, padded: false })
}

/// Stage codebooks for one attribute family.
#[derive(Clone, Debug, PartialEq)]
pub struct RvqCodebook {
    pub dim: usize,
    pub size: usize,
    /// One `size × dim` row-major table per stage.
    pub stages: Vec<Vec<f64>>,
}

/// Per-vector stage indices and reconstructions.
#[derive(Clone, Debug, PartialEq)]
pub struct RvqEncoding {
    pub stages: usize,
    /// `N × L`, row-major.
    pub indices: Vec<u16>,
    /// `N × dim`.
    pub reconstructions: Vec<f64>,
}

impl RvqEncoding {
    pub fn len(&self) -> usize {
        self.indices.len() / self.stages.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn index(&self, n: usize, stage: usize) -> usize {
        self.indices[n * self.stages + stage] as usize
    }

    /// Usage count of every code, per stage.
    pub fn usage(&self, size: usize) -> Vec<Vec<usize>> {
        let mut counts = vec![vec![0; size]; self.stages];
        for row in self.indices.chunks_exact(self.stages) {
            for (l, &i) in row.iter().enumerate() {
                counts[l][i as usize] += 1;
            }
        }
        counts
    }

    pub fn select(&self, indices: &[usize], dim: usize) -> RvqEncoding {
        RvqEncoding {
            stages: self.stages,
            indices: indices
                .iter()
                .flat_map(|&i| self.indices[i * self.stages..(i + 1) * self.stages].iter().copied())
                .collect(),
            reconstructions: indices
                .iter()
                .flat_map(|&i| self.reconstructions[i * dim..(i + 1) * dim].iter().copied())
                .collect(),
        }
    }
}

impl RvqCodebook {
    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn code(&self, stage: usize, k: usize) -> &[f64] {
        &self.stages[stage][k * self.dim..(k + 1) * self.dim]
    }

    /// Fits codebooks by running k-means on the residual left after each
    /// stage.
    pub fn fit(vectors: &[f64], dim: usize, config: &RvqConfig) -> Result<RvqCodebook> {
        config.validate()?;
        if dim == 0 || !vectors.len().is_multiple_of(dim) {
            return Err(Error::InvalidArgument("vector buffer is not a multiple of dim".into()));
        }
        let n = vectors.len() / dim;
        let mut book = RvqCodebook {
            dim,
            size: config.size,
            stages: Vec::with_capacity(config.stages),
        };
        if n == 0 {
            book.stages = vec![vec![0.0; config.size * dim]; config.stages];
            return Ok(book);
        }
        let mut residual = vectors.to_vec();
        for l in 0..config.stages {
            let km = kmeans_init(&residual, dim, config.size, config.kmeans_iters, config.seed.wrapping_add(l as u64))?;
            let codes = km.codes;
            residual
                .par_chunks_mut(dim)
                .for_each(|r| {
                    let (k, _) = nearest(&codes, dim, r);
                    for (v, c) in r.iter_mut().zip(&codes[k * dim..(k + 1) * dim]) {
                        *v -= c;
                    }
                });
            book.stages.push(codes);
        }
        Ok(book)
    }

    /// Greedy stage-by-stage nearest-code selection.
    pub fn encode(&self, vectors: &[f64]) -> RvqEncoding {
        let dim = self.dim;
        let l = self.num_stages();
        let rows: Vec<(Vec<u16>, Vec<f64>)> = vectors
            .par_chunks_exact(dim)
            .map(|v| {
                let mut residual = v.to_vec();
                let mut recon = vec![0.0; dim];
                let mut idx = Vec::with_capacity(l);
                for codes in &self.stages {
                    let (k, _) = nearest(codes, dim, &residual);
                    let code = &codes[k * dim..(k + 1) * dim];
                    for j in 0..dim {
                        residual[j] -= code[j];
                        recon[j] += code[j];
                    }
                    idx.push(k as u16);
                }
                (idx, recon)
            })
            .collect();
        let mut enc = RvqEncoding {
            stages: l,
            indices: Vec::with_capacity(rows.len() * l),
            reconstructions: Vec::with_capacity(rows.len() * dim),
        };
        for (idx, recon) in rows {
            enc.indices.extend(idx);
            enc.reconstructions.extend(recon);
        }
        enc
    }

    /// Sum of the selected codes for every row of `indices`.
    pub fn reconstruct(&self, indices: &[u16]) -> Vec<f64> {
        let l = self.num_stages();
        indices
            .chunks_exact(l)
            .flat_map(|row| {
                let mut recon = vec![0.0; self.dim];
                for (stage, &k) in row.iter().enumerate() {
                    for (r, c) in recon.iter_mut().zip(self.code(stage, k as usize)) {
                        *r += c;
                    }
                }
                recon
            })
            .collect()
    }

    /// Squared residual norm `Σ_n ‖r_n − r̂_n^l‖²` after each stage
    /// `l = 0..=L` (entry 0 is the input energy).
    pub fn residual_energy(&self, vectors: &[f64], enc: &RvqEncoding) -> Vec<f64> {
        let dim = self.dim;
        let mut energy = vec![0.0; self.num_stages() + 1];
        for (n, v) in vectors.chunks_exact(dim).enumerate() {
            let mut residual = v.to_vec();
            energy[0] += residual.iter().map(|x| x * x).sum::<f64>();
            for l in 0..self.num_stages() {
                for (r, c) in residual.iter_mut().zip(self.code(l, enc.index(n, l))) {
                    *r -= c;
                }
                energy[l + 1] += residual.iter().map(|x| x * x).sum::<f64>();
            }
        }
        energy
    }

    /// Codebook objective `(1/(N·C)) Σ_l Σ_n ‖sg[r_n − r̂_n^{l−1}] − Z^l[i_n^l]‖²`.
    pub fn loss(&self, vectors: &[f64], enc: &RvqEncoding) -> f64 {
        self.loss_and_grad(vectors, enc).0
    }

    /// The objective and its gradient w.r.t. every code. Inputs are treated
    /// as constants.
    pub fn loss_and_grad(&self, vectors: &[f64], enc: &RvqEncoding) -> (f64, Vec<Vec<f64>>) {
        let dim = self.dim;
        let n = vectors.len() / dim;
        let mut grads: Vec<Vec<f64>> = self.stages.iter().map(|s| vec![0.0; s.len()]).collect();
        if n == 0 {
            return (0.0, grads);
        }
        let norm = 1.0 / (n as f64 * self.size as f64);
        let mut total = 0.0;
        for (i, v) in vectors.chunks_exact(dim).enumerate() {
            let mut prefix = vec![0.0; dim];
            for l in 0..self.num_stages() {
                let k = enc.index(i, l);
                let code = self.code(l, k);
                for j in 0..dim {
                    let diff = v[j] - prefix[j] - code[j];
                    total += diff * diff;
                    grads[l][k * dim + j] += -2.0 * diff * norm;
                }
                for (p, c) in prefix.iter_mut().zip(code) {
                    *p += c;
                }
            }
        }
        (total * norm, grads)
    }

    /// Replaces codes never selected in `usage` by the stage input with the
    /// largest quantization error at that stage. Returns how many codes were
    /// replaced.
    pub fn reseed_dead_codes(&mut self, vectors: &[f64], enc: &RvqEncoding, usage: &[Vec<usize>]) -> usize {
        let dim = self.dim;
        let n = vectors.len() / dim;
        if n == 0 {
            return 0;
        }
        let mut replaced = 0;
        let mut prefix = vec![0.0; n * dim];
        for l in 0..self.num_stages() {
            let mut errors: Vec<(f64, usize)> = (0..n)
                .map(|i| {
                    let code = self.code(l, enc.index(i, l));
                    let e = (0..dim)
                        .map(|j| {
                            let d = vectors[i * dim + j] - prefix[i * dim + j] - code[j];
                            d * d
                        })
                        .sum::<f64>();
                    (e, i)
                })
                .collect();
            errors.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut next = errors.iter();
            for k in 0..self.size {
                if usage[l][k] > 0 {
                    continue;
                }
                let Some(&(_, i)) = next.next() else { break };
                for j in 0..dim {
                    self.stages[l][k * dim + j] = vectors[i * dim + j] - prefix[i * dim + j];
                }
                replaced += 1;
            }
            for i in 0..n {
                let k = enc.index(i, l);
                for j in 0..dim {
                    prefix[i * dim + j] += self.stages[l][k * dim + j];
                }
            }
        }
        replaced
    }
}

/// Attribute families that can be quantized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    /// Log-scales (3-D), quantized before masking.
    Scale,
    /// Raw quaternions (4-D).
    Rotation,
    /// Rotation polynomial coefficients of space-time Gaussians.
    RotationCoeffs,
    /// Temporal color features of space-time Gaussians (3-D).
    TemporalColor,
}

impl AttributeKind {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "scale" => AttributeKind::Scale,
            "rotation" => AttributeKind::Rotation,
            "rotation_coeffs" => AttributeKind::RotationCoeffs,
            "temporal_color" => AttributeKind::TemporalColor,
            other => return Err(Error::UnsupportedAttribute(other.to_string())),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            AttributeKind::Scale => "scale",
            AttributeKind::Rotation => "rotation",
            AttributeKind::RotationCoeffs => "rotation_coeffs",
            AttributeKind::TemporalColor => "temporal_color",
        }
    }
}

/// An attribute replaced by its R-VQ reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedAttribute {
    pub kind: AttributeKind,
    pub book: RvqCodebook,
    pub encoding: RvqEncoding,
}

impl QuantizedAttribute {
    pub fn len(&self) -> usize {
        self.encoding.len()
    }

    pub fn is_empty(&self) -> bool {
        self.encoding.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.book.dim
    }

    /// Re-encodes `values` against the current codebooks.
    pub fn reencode(&mut self, values: &[f64]) {
        self.encoding = self.book.encode(values);
    }

    pub fn select(&self, indices: &[usize]) -> QuantizedAttribute {
        QuantizedAttribute {
            kind: self.kind,
            book: self.book.clone(),
            encoding: self.encoding.select(indices, self.book.dim),
        }
    }
}

/// Fits codebooks to an attribute matrix and encodes it.
pub fn quantize_attribute(kind: AttributeKind, values: &[f64], dim: usize, config: &RvqConfig) -> Result<QuantizedAttribute> {
    let book = RvqCodebook::fit(values, dim, config)?;
    let encoding = book.encode(values);
    Ok(QuantizedAttribute { kind, book, encoding })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fit_when_sizes_match() {
        let pts = vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 5.0, 5.0];
        let km = kmeans_init(&pts, 2, 4, 10, 3).unwrap();
        let mut got: Vec<[u64; 2]> = km.codes.chunks(2).map(|c| [c[0].to_bits(), c[1].to_bits()]).collect();
        let mut want: Vec<[u64; 2]> = pts.chunks(2).map(|c| [c[0].to_bits(), c[1].to_bits()]).collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);
        assert!(!km.padded);
    }

    #[test]
    fn separable_clusters_give_means() {
        let pts = vec![0.0, 0.0, 0.2, 0.0, 10.0, 10.0, 10.0, 10.4];
        let km = kmeans_init(&pts, 2, 2, 10, 1).unwrap();
        let mut c: Vec<(f64, f64)> = km.codes.chunks(2).map(|c| (c[0], c[1])).collect();
        c.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!((c[0].0 - 0.1).abs() < 1e-12 && c[0].1.abs() < 1e-12);
        assert!((c[1].0 - 10.0).abs() < 1e-12 && (c[1].1 - 10.2).abs() < 1e-12);
    }

    #[test]
    fn more_codes_than_vectors_pads() {
        let km = kmeans_init(&[1.0, 2.0], 1, 5, 10, 0).unwrap();
        assert!(km.padded);
        assert_eq!(km.codes.len(), 5);
    }

    #[test]
    fn codeword_hit_leaves_zero_residual() {
        let book = RvqCodebook {
            dim: 2,
            size: 3,
            stages: vec![vec![0.0, 0.0, 1.0, 2.0, -1.0, 0.5], vec![0.0, 0.0, 0.1, 0.1, -0.1, -0.1]],
        };
        let enc = book.encode(&[1.0, 2.0]);
        assert_eq!(enc.indices, vec![1, 0]);
        assert_eq!(enc.reconstructions, vec![1.0, 2.0]);
        let e = book.residual_energy(&[1.0, 2.0], &enc);
        assert_eq!(e[1], 0.0);
    }

    #[test]
    fn ties_pick_lowest_index() {
        let (k, _) = nearest(&[1.0, -1.0, 1.0], 1, &[0.0]);
        assert_eq!(k, 0);
    }

    #[test]
    fn loss_single_code_formula() {
        let book = RvqCodebook {
            dim: 3,
            size: 4,
            stages: vec![vec![0.5, 0.5, 0.5, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0, 9.0]],
        };
        let v = [1.0, 2.0, -1.0];
        let enc = book.encode(&v);
        let want = (0.25 + 2.25 + 2.25) / 4.0;
        assert!((book.loss(&v, &enc) - want).abs() < 1e-15);
    }

    #[test]
    fn loss_counts_every_stage() {
        let book = RvqCodebook {
            dim: 1,
            size: 2,
            stages: vec![vec![1.0, 3.0], vec![0.0, 0.5]],
        };
        let v = [3.5, 1.0];
        let enc = book.encode(&v);
        assert_eq!(book.reconstruct(&enc.indices), v.to_vec());
        // Exact final reconstruction, but stage one leaves a residual of 0.5.
        assert_eq!(book.loss(&v, &enc), 0.25 / 4.0);
        let single = RvqCodebook {
            dim: 1,
            size: 2,
            stages: vec![vec![1.0, 3.5]],
        };
        assert_eq!(single.loss(&v, &single.encode(&v)), 0.0);
    }

    #[test]
    fn unknown_attribute_name_is_rejected() {
        assert!(matches!(AttributeKind::parse("opacity"), Err(Error::UnsupportedAttribute(_))));
        assert_eq!(AttributeKind::parse("rotation").unwrap(), AttributeKind::Rotation);
    }

    #[test]
    fn zero_stages_rejected() {
        assert!(RvqConfig::new(4, 0).validate().is_err());
    }

    #[test]
    fn dead_codes_are_reseeded() {
        let mut book = RvqCodebook {
            dim: 1,
            size: 3,
            stages: vec![vec![0.0, 100.0, 200.0]],
        };
        let v = [0.1, 0.2, 5.0];
        let enc = book.encode(&v);
        let usage = enc.usage(3);
        assert_eq!(usage[0], vec![3, 0, 0]);
        assert_eq!(book.reseed_dead_codes(&v, &enc, &usage), 2);
        assert_eq!(book.stages[0][1], 5.0);
        assert_eq!(book.stages[0][2], 0.2);
    }
}
