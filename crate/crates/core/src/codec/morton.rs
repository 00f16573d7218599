//! Z-order keys over the bounding box of a point set.

pub const BITS: u32 = 21;

fn spread(v: u64) -> u64 {
    let mut x = v & 0x1f_ffff;
    x = (x | x << 32) & 0x1f00000000ffff;
    x = (x | x << 16) & 0x1f0000ff0000ff;
    x = (x | x << 8) & 0x100f00f00f00f00f;
    x = (x | x << 4) & 0x10c30c30c30c30c3;
    x = (x | x << 2) & 0x1249249249249249;
    x
}

/// Interleaves three 21-bit coordinates, x in the lowest bit.
pub fn interleave(x: u32, y: u32, z: u32) -> u64 {
    spread(x as u64) | spread(y as u64) << 1 | spread(z as u64) << 2
}

/// 63-bit keys of positions normalized to their axis-aligned bounding box.
pub fn morton_keys(positions: &[[f64; 3]]) -> Vec<u64> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in positions {
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let max_q = ((1u64 << BITS) - 1) as f64;
    positions
        .iter()
        .map(|p| {
            let q: [u32; 3] = std::array::from_fn(|k| {
                let ext = hi[k] - lo[k];
                if ext > 0.0 {
                    ((p[k] - lo[k]) / ext * max_q).round().clamp(0.0, max_q) as u32
                } else {
                    0
                }
            });
            interleave(q[0], q[1], q[2])
        })
        .collect()
}

/// Permutation sorting the points by key; ties keep their input order.
pub fn morton_order(positions: &[[f64; 3]]) -> Vec<usize> {
    let keys = morton_keys(positions);
    let mut order: Vec<usize> = (0..positions.len()).collect();
    order.sort_by_key(|&i| keys[i]);
    order
}
