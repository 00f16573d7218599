//! Canonical, length-limited Huffman coding of `u16` symbol streams.
//!
//! Code lengths come from package-merge, so no code exceeds [`MAX_LEN`]
//! bits. Codes are assigned canonically (by length, then by symbol) and the
//! table stores lengths only. Bits are packed MSB-first.

use crate::error::{Error, Result};

pub const MAX_LEN: u8 = 15;

/// Code length of every symbol `0..lengths.len()`; zero means unused.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HuffmanTable {
    pub lengths: Vec<u8>,
}

#[derive(Clone, Copy)]
enum Item {
    Leaf(usize),
    Package,
}

/// Optimal code lengths under the `MAX_LEN` limit.
fn package_merge(freqs: &[u64]) -> Result<Vec<u8>> {
    let mut leaves: Vec<(u64, usize)> = freqs
        .iter()
        .enumerate()
        .filter(|(_, &f)| f > 0)
        .map(|(s, &f)| (f, s))
        .collect();
    let mut lengths = vec![0u8; freqs.len()];
    match leaves.len() {
        0 => return Ok(lengths),
        1 => {
            lengths[leaves[0].1] = 1;
            return Ok(lengths);
        }
        n if n > 1 << MAX_LEN => {
            return Err(Error::InvalidArgument(format!(
                "{n} distinct symbols exceed the {MAX_LEN}-bit code limit"
            )))
        }
        _ => {}
    }
    leaves.sort();
    let n = leaves.len();

    // lists[i] holds (weight, item) in merge order for depth level i.
    let mut lists: Vec<Vec<(u64, Item)>> = Vec::with_capacity(MAX_LEN as usize);
    lists.push(leaves.iter().map(|&(w, s)| (w, Item::Leaf(s))).collect());
    for _ in 1..MAX_LEN {
        let prev = lists.last().unwrap();
        let packages: Vec<u64> = prev.chunks_exact(2).map(|p| p[0].0 + p[1].0).collect();
        let mut merged = Vec::with_capacity(n + packages.len());
        let (mut i, mut j) = (0, 0);
        while i < n || j < packages.len() {
            // Leaves win ties, which keeps the result deterministic.
            if j >= packages.len() || (i < n && leaves[i].0 <= packages[j]) {
                merged.push((leaves[i].0, Item::Leaf(leaves[i].1)));
                i += 1;
            } else {
                merged.push((packages[j], Item::Package));
                j += 1;
            }
        }
        lists.push(merged);
    }
    let mut take = 2 * n - 2;
    for list in lists.iter().rev() {
        let mut packages = 0;
        for &(_, item) in &list[..take] {
            match item {
                Item::Leaf(s) => lengths[s] += 1,
                Item::Package => packages += 1,
            }
        }
        take = 2 * packages;
    }
    Ok(lengths)
}

impl HuffmanTable {
    pub fn from_symbols(symbols: &[u16]) -> Result<HuffmanTable> {
        let alphabet = symbols.iter().map(|&s| s as usize + 1).max().unwrap_or(0);
        let mut freqs = vec![0u64; alphabet];
        for &s in symbols {
            freqs[s as usize] += 1;
        }
        Ok(HuffmanTable {
            lengths: package_merge(&freqs)?,
        })
    }

    /// Canonical codes, indexed by symbol.
    pub fn codes(&self) -> Vec<u16> {
        let mut count = [0u16; MAX_LEN as usize + 1];
        for &l in &self.lengths {
            count[l as usize] += 1;
        }
        count[0] = 0;
        let mut next = [0u16; MAX_LEN as usize + 2];
        let mut code = 0u16;
        for len in 1..=MAX_LEN as usize {
            code = (code + count[len - 1]) << 1;
            next[len] = code;
        }
        self.lengths
            .iter()
            .map(|&l| {
                if l == 0 {
                    return 0;
                }
                let c = next[l as usize];
                next[l as usize] += 1;
                c
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengths.iter().any(|&l| l > MAX_LEN) {
            return Err(Error::Corrupt("Huffman code length above limit".into()));
        }
        // Kraft sum must not exceed one.
        let kraft: u64 = self
            .lengths
            .iter()
            .filter(|&&l| l > 0)
            .map(|&l| 1u64 << (MAX_LEN - l))
            .sum();
        if kraft > 1 << MAX_LEN {
            return Err(Error::Corrupt("oversubscribed Huffman table".into()));
        }
        Ok(())
    }
}

struct BitWriter {
    bytes: Vec<u8>,
    acc: u32,
    n: u32,
}

impl BitWriter {
    fn put(&mut self, code: u16, len: u8) {
        self.acc = self.acc << len | code as u32;
        self.n += len as u32;
        while self.n >= 8 {
            self.n -= 8;
            self.bytes.push((self.acc >> self.n) as u8);
        }
        self.acc &= (1 << self.n) - 1;
    }

    fn finish(mut self) -> Vec<u8> {
        if self.n > 0 {
            self.bytes.push((self.acc << (8 - self.n)) as u8);
        }
        self.bytes
    }
}

/// Table plus the packed bitstream of `symbols`.
pub fn huffman_encode(symbols: &[u16]) -> Result<(HuffmanTable, Vec<u8>)> {
    let table = HuffmanTable::from_symbols(symbols)?;
    let codes = table.codes();
    let mut w = BitWriter {
        bytes: Vec::with_capacity(symbols.len() / 2),
        acc: 0,
        n: 0,
    };
    for &s in symbols {
        w.put(codes[s as usize], table.lengths[s as usize]);
    }
    Ok((table, w.finish()))
}

pub fn huffman_decode(table: &HuffmanTable, bits: &[u8], count: usize) -> Result<Vec<u16>> {
    table.validate()?;
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut per_len = [0u32; MAX_LEN as usize + 1];
    for &l in &table.lengths {
        if l > 0 {
            per_len[l as usize] += 1;
        }
    }
    let mut sorted: Vec<(u8, u16)> = table
        .lengths
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > 0)
        .map(|(s, &l)| (l, s as u16))
        .collect();
    sorted.sort();
    let symbols: Vec<u16> = sorted.into_iter().map(|(_, s)| s).collect();
    if symbols.is_empty() {
        return Err(Error::Corrupt("empty Huffman table for a non-empty stream".into()));
    }

    let mut out = Vec::with_capacity(count);
    let mut pos = 0usize;
    let total_bits = bits.len() * 8;
    while out.len() < count {
        let (mut code, mut first, mut index) = (0u32, 0u32, 0u32);
        let mut found = false;
        for len in 1..=MAX_LEN as usize {
            if pos >= total_bits {
                return Err(Error::Corrupt("Huffman bitstream ended early".into()));
            }
            let bit = (bits[pos / 8] >> (7 - pos % 8)) & 1;
            pos += 1;
            code |= bit as u32;
            let c = per_len[len];
            if code < first + c {
                out.push(symbols[(index + code - first) as usize]);
                found = true;
                break;
            }
            index += c;
            first = (first + c) << 1;
            code <<= 1;
        }
        if !found {
            return Err(Error::Corrupt("invalid Huffman code".into()));
        }
    }
    Ok(out)
}

/// Self-describing payload: symbol count, alphabet size, 4-bit lengths, bits.
/// An empty stream encodes as an empty payload.
pub fn encode_stream(symbols: &[u16]) -> Result<Vec<u8>> {
    if symbols.is_empty() {
        return Ok(Vec::new());
    }
    let (table, bits) = huffman_encode(symbols)?;
    let k = table.lengths.len();
    let mut out = Vec::with_capacity(8 + k.div_ceil(2) + bits.len());
    out.extend_from_slice(&(symbols.len() as u32).to_le_bytes());
    out.extend_from_slice(&(k as u32).to_le_bytes());
    for pair in table.lengths.chunks(2) {
        out.push(pair[0] | pair.get(1).copied().unwrap_or(0) << 4);
    }
    out.extend_from_slice(&bits);
    Ok(out)
}

pub fn decode_stream(payload: &[u8]) -> Result<Vec<u16>> {
    if payload.is_empty() {
        return Ok(Vec::new());
    }
    if payload.len() < 8 {
        return Err(Error::Truncated {
            expected: 8,
            found: payload.len(),
        });
    }
    let count = u32::from_le_bytes(payload[0..4].try_into().unwrap()) as usize;
    let k = u32::from_le_bytes(payload[4..8].try_into().unwrap()) as usize;
    if k > 1 << 16 {
        return Err(Error::Corrupt("Huffman alphabet too large".into()));
    }
    let table_end = 8 + k.div_ceil(2);
    if payload.len() < table_end {
        return Err(Error::Truncated {
            expected: table_end,
            found: payload.len(),
        });
    }
    let lengths = (0..k).map(|s| (payload[8 + s / 2] >> (4 * (s % 2))) & 0xf).collect();
    huffman_decode(&HuffmanTable { lengths }, &payload[table_end..], count)
}
