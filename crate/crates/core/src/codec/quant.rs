//! Half-precision packing, 8-bit min-max quantization and small-value pruning.

use half::f16;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// binary16 with round-to-nearest-even.
pub fn to_f16(v: f64) -> Result<f16> {
    let h = f16::from_f64(v);
    if !h.is_finite() {
        return Err(Error::NonFinite(format!("half-precision conversion of {v}")));
    }
    Ok(h)
}

pub fn round_f16(v: f64) -> Result<f64> {
    to_f16(v).map(f64::from)
}

pub fn f16_bytes(values: &[f64]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(2 * values.len());
    for &v in values {
        out.extend_from_slice(&to_f16(v)?.to_le_bytes());
    }
    Ok(out)
}

pub fn f16_values(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(2) {
        return Err(Error::Corrupt("odd half-float payload".into()));
    }
    Ok(bytes
        .chunks_exact(2)
        .map(|c| f64::from(f16::from_le_bytes([c[0], c[1]])))
        .collect())
}

pub fn f64_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn f64_values(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Corrupt("misaligned f64 payload".into()));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

const GUARD_ULPS: f64 = 256.0;
const WIDEN_ATTEMPTS: usize = 16;

fn ulp(x: f64) -> f64 {
    x.next_up() - x
}

/// Error-free sum: `a + b = s + e` exactly.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Affine 8-bit code: `value = min + q · (max − min) / 255`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantSpec {
    pub min: f64,
    pub max: f64,
    pub bits: u8,
}

impl QuantSpec {
    pub fn levels(&self) -> f64 {
        ((1u32 << self.bits) - 1) as f64
    }

    /// Evaluated with compensated arithmetic so the result is the level
    /// rounded once; a naive evaluation rounds three times and can push
    /// half-step ties past the error bound.
    pub fn dequantize(&self, q: u8) -> f64 {
        if self.max == self.min {
            return self.min;
        }
        let q = q as f64;
        let levels = self.levels();
        let (d_hi, d_lo) = two_sum(self.max, -self.min);
        let p_hi = q * d_hi;
        let p_lo = q.mul_add(d_hi, -p_hi) + q * d_lo;
        let y_hi = p_hi / levels;
        let y_lo = ((-y_hi).mul_add(levels, p_hi) + p_lo) / levels;
        let (s, e) = two_sum(self.min, y_hi);
        s + (e + y_lo)
    }

    /// Worst-case absolute reconstruction error.
    pub fn error_bound(&self) -> f64 {
        (self.max - self.min) / (2.0 * self.levels())
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits != 8 || !self.min.is_finite() || !self.max.is_finite() || self.max < self.min {
            return Err(Error::Corrupt("invalid quantization range".into()));
        }
        Ok(())
    }
}

pub fn quantize_minmax(values: &[f64]) -> Result<(QuantSpec, Vec<u8>)> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("quantization input {v}")));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() {
        return Ok((QuantSpec { min: 0.0, max: 0.0, bits: 8 }, Vec::new()));
    }
    if max == min {
        return Ok((QuantSpec { min, max, bits: 8 }, vec![0; values.len()]));
    }
    // Decoded levels carry up to half an ulp of rounding, so a value at an
    // exact half-step tie can miss the (max − min)/510 bound by that much.
    // Widening the range by a few hundred ulps covers ties near the ends.
    // Widening it symmetrically keeps the midpoint a tie, so every candidate
    // is certified against the bound and the upper end grows until it holds.
    let guard = GUARD_ULPS * ulp(min.abs().max(max.abs()));
    let mut upper = guard;
    let mut last = None;
    for _ in 0..WIDEN_ATTEMPTS {
        let spec = QuantSpec {
            min: min - guard,
            max: max + upper,
            bits: 8,
        };
        if !(spec.max - spec.min).is_finite() {
            break;
        }
        let q = nearest_codes(&spec, values);
        let bound = spec.error_bound();
        if values.iter().zip(&q).all(|(&v, &c)| (spec.dequantize(c) - v).abs() <= bound) {
            return Ok((spec, q));
        }
        last = Some((spec, q));
        upper *= 2.0;
    }
    Ok(last.unwrap_or_else(|| {
        let spec = QuantSpec { min, max, bits: 8 };
        let q = nearest_codes(&spec, values);
        (spec, q)
    }))
}

fn nearest_codes(spec: &QuantSpec, values: &[f64]) -> Vec<u8> {
    let step = (spec.max - spec.min) / spec.levels();
    values
        .iter()
        .map(|&v| {
            let r = ((v - spec.min) / step).round().clamp(0.0, 255.0) as u8;
            // Division rounding can land one level off near a half step.
            let mut best = r;
            for c in [r.saturating_sub(1), r.saturating_add(1)] {
                if (spec.dequantize(c) - v).abs() < (spec.dequantize(best) - v).abs() {
                    best = c;
                }
            }
            best
        })
        .collect()
}

pub fn dequantize(spec: &QuantSpec, q: &[u8]) -> Vec<f64> {
    q.iter().map(|&v| spec.dequantize(v)).collect()
}

/// Survivor bitmap (LSB-first within each byte) plus surviving values.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseStream {
    pub len: usize,
    pub bitmap: Vec<u8>,
    pub values: Vec<f64>,
}

impl SparseStream {
    pub fn survives(&self, i: usize) -> bool {
        self.bitmap[i / 8] >> (i % 8) & 1 == 1
    }

    pub fn survivors(&self) -> usize {
        self.bitmap.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn from_parts(len: usize, bitmap: Vec<u8>, values: Vec<f64>) -> Result<SparseStream> {
        let s = SparseStream { len, bitmap, values };
        if s.bitmap.len() != len.div_ceil(8) || s.survivors() != s.values.len() {
            return Err(Error::Corrupt("sparse stream bitmap disagrees with its values".into()));
        }
        Ok(s)
    }

    pub fn densify(&self) -> Vec<f64> {
        let mut it = self.values.iter();
        (0..self.len)
            .map(|i| if self.survives(i) { *it.next().unwrap() } else { 0.0 })
            .collect()
    }
}

/// Drops entries with `|v| < threshold`; they decode as zero.
pub fn prune_small(values: &[f64], threshold: f64) -> SparseStream {
    let mut bitmap = vec![0u8; values.len().div_ceil(8)];
    let mut kept = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        if v.abs() >= threshold {
            bitmap[i / 8] |= 1 << (i % 8);
            kept.push(v);
        }
    }
    SparseStream {
        len: values.len(),
        bitmap,
        values: kept,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_map_to_extreme_codes() {
        let (s, q) = quantize_minmax(&[0.0, 1.0]).unwrap();
        assert_eq!(q, vec![0, 255]);
        assert!(s.min < 0.0 && s.min > -1e-13 && s.max > 1.0 && s.max < 1.0 + 1e-13);
        for (d, v) in dequantize(&s, &q).iter().zip([0.0, 1.0]) {
            assert!((d - v).abs() < 1e-13);
        }
    }

    #[test]
    fn half_step_ties_stay_within_bound() {
        // Symmetric half-precision values that sit exactly between two levels.
        let v = [-1.5869140625, 0.634765625, -0.634765625, 1.5869140625];
        let (s, q) = quantize_minmax(&v).unwrap();
        let bound = (s.max - s.min) / 510.0;
        for (d, x) in dequantize(&s, &q).iter().zip(v) {
            assert!((d - x).abs() <= bound, "{d} vs {x}");
        }
    }

    #[test]
    fn midpoint_tie_stays_within_bound() {
        // The middle value is an exact tie however the range is widened
        // symmetrically.
        let v = [-8.2734375, 0.41796875, 9.109375];
        let (s, q) = quantize_minmax(&v).unwrap();
        for (d, x) in dequantize(&s, &q).iter().zip(v) {
            assert!((d - x).abs() <= s.error_bound(), "{d} vs {x}");
        }
    }

    #[test]
    fn constant_stream() {
        let (s, q) = quantize_minmax(&[2.5; 7]).unwrap();
        assert_eq!(s.min, s.max);
        assert!(q.iter().all(|&v| v == 0));
        assert!(dequantize(&s, &q).iter().all(|&v| v == 2.5));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(quantize_minmax(&[0.0, f64::NAN]).is_err());
        assert!(to_f16(1e6).is_err());
    }

    #[test]
    fn prune_extremes() {
        let all = prune_small(&[0.5, -0.2, 1.0], 0.1);
        assert_eq!(all.values.len(), 3);
        assert_eq!(all.densify(), vec![0.5, -0.2, 1.0]);
        let none = prune_small(&[0.05, -0.01, 0.0], 0.1);
        assert!(none.values.is_empty());
        assert_eq!(none.densify(), vec![0.0; 3]);
    }

    #[test]
    fn half_rounds_to_nearest_even() {
        // 2049 lies halfway between 2048 and 2050; the even mantissa wins.
        assert_eq!(round_f16(2049.0).unwrap(), 2048.0);
        assert_eq!(round_f16(2051.0).unwrap(), 2052.0);
    }
}
