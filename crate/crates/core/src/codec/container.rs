//! Byte layout of a compact container.
//!
//! ```text
//! "C3GS" | version: u16 | flags: u16 | manifest length: u32 | manifest | streams...
//! ```
//!
//! All integers are little-endian. The manifest is JSON, zlib-compressed when
//! flag bit 0 is set. Streams follow back to back in manifest order.

use std::io::{Read, Write};

use flate2::read::ZlibDecoder;
use flate2::write::ZlibEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use super::quant::QuantSpec;
use crate::error::{Error, Result};
use crate::field::FieldConfig;
use crate::rvq::AttributeKind;

pub const MAGIC: &[u8; 4] = b"C3GS";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 12;
const FLAG_DEFLATED_MANIFEST: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    /// Full double precision; bit-exact round trip.
    Raw,
    /// Half-precision floats and byte indices.
    Ours,
    /// Adds quantization, pruning, Morton order and entropy coding.
    OursPp,
}

impl Level {
    pub fn parse(s: &str) -> Result<Level> {
        match s {
            "raw" => Ok(Level::Raw),
            "ours" => Ok(Level::Ours),
            "ours_pp" => Ok(Level::OursPp),
            other => Err(Error::InvalidArgument(format!("unknown level `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Level::Raw => "raw",
            Level::Ours => "ours",
            Level::OursPp => "ours_pp",
        }
    }
}

/// One transform in a stream's codec chain, applied in order when encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    F64,
    F16,
    /// Indices stored as one byte each.
    U8,
    U16,
    /// 8-bit min-max quantization.
    Q8,
    /// Survivor bitmap of a pruned stream.
    Bitmap,
    Huffman,
    Deflate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamEntry {
    pub name: String,
    /// Attribute group used by the storage report.
    pub attribute: String,
    /// Number of decoded elements.
    pub elements: usize,
    pub codec: Vec<Stage>,
    pub bytes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quant: Option<QuantSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BookShape {
    pub kind: AttributeKind,
    pub dim: usize,
    pub size: usize,
    pub stages: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorKind {
    Sh,
    Field,
    Features,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u16,
    pub level: Level,
    pub mode: String,
    pub count: usize,
    pub color: ColorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_sizes: Option<Vec<usize>>,
    pub books: Vec<BookShape>,
    pub streams: Vec<StreamEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompactContainer {
    pub manifest: Manifest,
    pub streams: Vec<Vec<u8>>,
}

pub fn deflate(data: &[u8]) -> Vec<u8> {
    let mut enc = ZlibEncoder::new(Vec::new(), Compression::best());
    enc.write_all(data).expect("writing to memory");
    enc.finish().expect("writing to memory")
}

pub fn inflate(data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    ZlibDecoder::new(data)
        .read_to_end(&mut out)
        .map_err(|e| Error::Corrupt(format!("DEFLATE payload: {e}")))?;
    Ok(out)
}

impl CompactContainer {
    fn manifest_payload(&self) -> Result<(u16, Vec<u8>)> {
        let json = serde_json::to_vec(&self.manifest)?;
        Ok(match self.manifest.level {
            Level::OursPp => (FLAG_DEFLATED_MANIFEST, deflate(&json)),
            _ => (0, json),
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.streams.len() != self.manifest.streams.len()
            || self.streams.iter().zip(&self.manifest.streams).any(|(s, e)| s.len() != e.bytes)
        {
            return Err(Error::Format("manifest stream sizes disagree with payloads".into()));
        }
        let (flags, manifest) = self.manifest_payload()?;
        let mut out = Vec::with_capacity(HEADER_LEN + manifest.len() + self.streams.iter().map(Vec::len).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.manifest.version.to_le_bytes());
        out.extend_from_slice(&flags.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(&manifest);
        for s in &self.streams {
            out.extend_from_slice(s);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<CompactContainer> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::Format("not a compact container".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::VersionMismatch {
                expected: VERSION,
                found: version,
            });
        }
        let flags = u16::from_le_bytes([bytes[6], bytes[7]]);
        let mlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let mend = HEADER_LEN + mlen;
        if bytes.len() < mend {
            return Err(Error::Truncated {
                expected: mend,
                found: bytes.len(),
            });
        }
        let raw = &bytes[HEADER_LEN..mend];
        let json = if flags & FLAG_DEFLATED_MANIFEST != 0 { inflate(raw)? } else { raw.to_vec() };
        let manifest: Manifest = serde_json::from_slice(&json)?;
        if manifest.version != version {
            return Err(Error::VersionMismatch {
                expected: VERSION,
                found: manifest.version,
            });
        }
        let mut streams = Vec::with_capacity(manifest.streams.len());
        let mut pos = mend;
        for e in &manifest.streams {
            let end = pos + e.bytes;
            if bytes.len() < end {
                return Err(Error::Truncated {
                    expected: end,
                    found: bytes.len(),
                });
            }
            streams.push(bytes[pos..end].to_vec());
            pos = end;
        }
        if pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes after the last stream", bytes.len() - pos)));
        }
        Ok(CompactContainer { manifest, streams })
    }
}
