//! Storage pipeline for trained models.

pub mod container;
pub mod huffman;
pub mod morton;
pub mod quant;

use std::collections::HashMap;

pub use container::{deflate, inflate, BookShape, ColorKind, CompactContainer, Level, Manifest, Stage, StreamEntry, HEADER_LEN, VERSION};
pub use quant::{prune_small, quantize_minmax, QuantSpec, SparseStream};

use crate::dynamic::{DynColor, DynGaussianSet, PhiMlp, FEATURE_DIM, POSITION_ORDER};
use crate::error::{Error, Result};
use crate::field::ColorField;
use crate::mlp::Mlp;
use crate::model::{DynamicModel, Model, StaticModel};
use crate::rvq::{AttributeKind, QuantizedAttribute, RvqCodebook, RvqEncoding};
use crate::scene::{ColorSource, GaussianSet, SH_COEFFS};

/// Hash-table entries below this magnitude are dropped by `ours_pp`.
pub const PRUNE_THRESHOLD: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum FloatClass {
    /// Positions, raw per-Gaussian vectors, codebooks and MLP weights.
    Plain,
    /// Quantized to 8 bits by `ours_pp`.
    Scalar,
    /// Pruned, then quantized by `ours_pp`.
    Hash,
}

enum Payload {
    Floats(Vec<f64>, FloatClass),
    Indices(Vec<u16>, usize),
}

struct Source {
    name: String,
    attribute: &'static str,
    payload: Payload,
}

fn floats(name: &str, attribute: &'static str, values: Vec<f64>, class: FloatClass) -> Source {
    Source {
        name: name.to_string(),
        attribute,
        payload: Payload::Floats(values, class),
    }
}

fn flat<const D: usize>(rows: &[[f64; D]]) -> Vec<f64> {
    rows.as_flattened().to_vec()
}

fn rows<const D: usize>(flat: &[f64]) -> Vec<[f64; D]> {
    flat.chunks_exact(D).map(|c| c.try_into().unwrap()).collect()
}

fn attribute_group(kind: AttributeKind) -> &'static str {
    match kind {
        AttributeKind::Scale => "scale",
        AttributeKind::Rotation => "rotation",
        AttributeKind::RotationCoeffs => "rotation",
        AttributeKind::TemporalColor => "color",
    }
}

fn book_sources(quantized: &[QuantizedAttribute], out: &mut Vec<Source>) {
    for q in quantized {
        out.push(Source {
            name: format!("{}_indices", q.kind.name()),
            attribute: attribute_group(q.kind),
            payload: Payload::Indices(q.encoding.indices.clone(), q.book.size),
        });
    }
    for q in quantized {
        out.push(floats(
            &format!("{}_codebook", q.kind.name()),
            attribute_group(q.kind),
            q.book.stages.concat(),
            FloatClass::Plain,
        ));
    }
}

fn field_sources(field: Option<&ColorField>, out: &mut Vec<Source>) {
    if let Some(f) = field {
        out.push(floats("field_table", "color", f.table.clone(), FloatClass::Hash));
        out.push(floats("field_mlp", "color", f.mlp.params.clone(), FloatClass::Plain));
    }
}

fn is_quantized(q: &[QuantizedAttribute], kind: AttributeKind) -> bool {
    q.iter().any(|a| a.kind == kind)
}

fn book_shapes(q: &[QuantizedAttribute]) -> Vec<BookShape> {
    q.iter()
        .map(|a| BookShape {
            kind: a.kind,
            dim: a.book.dim,
            size: a.book.size,
            stages: a.book.num_stages(),
        })
        .collect()
}

fn static_sources(m: &StaticModel) -> Vec<Source> {
    let g = &m.gaussians;
    let q = &m.quantized;
    let mut s = vec![
        floats("positions", "position", flat(&g.positions), FloatClass::Plain),
        floats("opacity", "opacity", g.opacity_logits.clone(), FloatClass::Scalar),
    ];
    if !is_quantized(q, AttributeKind::Scale) {
        s.push(floats("scale", "scale", flat(&g.log_scales), FloatClass::Plain));
    }
    if !is_quantized(q, AttributeKind::Rotation) {
        s.push(floats("rotation", "rotation", flat(&g.rotations), FloatClass::Plain));
    }
    if let ColorSource::Sh(h) = &g.color {
        s.push(floats("sh", "color", flat(h), FloatClass::Plain));
    }
    book_sources(q, &mut s);
    field_sources(m.field.as_ref(), &mut s);
    s
}

fn dynamic_sources(m: &DynamicModel) -> Vec<Source> {
    let g = &m.gaussians;
    let q = &m.quantized;
    let mut s = vec![
        floats("positions", "position", flat(&g.positions), FloatClass::Plain),
        floats("opacity", "opacity", g.opacity_logits.clone(), FloatClass::Scalar),
        floats("temporal_center", "temporal", g.centers.clone(), FloatClass::Scalar),
        floats("temporal_scale", "temporal", g.log_temporal_scales.clone(), FloatClass::Scalar),
        floats(
            "motion",
            "motion",
            g.motion.iter().flat_map(|m| m.as_flattened().iter().copied()).collect(),
            FloatClass::Plain,
        ),
    ];
    if !is_quantized(q, AttributeKind::Scale) {
        s.push(floats("scale", "scale", flat(&g.log_scales), FloatClass::Plain));
    }
    if !is_quantized(q, AttributeKind::Rotation) {
        s.push(floats("rotation", "rotation", flat(&g.rotations), FloatClass::Plain));
    }
    if !is_quantized(q, AttributeKind::RotationCoeffs) {
        s.push(floats("rotation_coeffs", "rotation", flat(&g.rotation_coeffs), FloatClass::Plain));
    }
    if let DynColor::Features(f) = &g.color {
        let spatial: Vec<f64> = f.iter().flat_map(|r| r[..6].iter().copied()).collect();
        s.push(floats("features", "color", spatial, FloatClass::Plain));
    }
    if !is_quantized(q, AttributeKind::TemporalColor) {
        s.push(floats("temporal_color", "color", flat(&g.temporal_color()), FloatClass::Plain));
    }
    book_sources(q, &mut s);
    field_sources(m.field.as_ref(), &mut s);
    s.push(floats("phi", "color", m.phi.mlp.params.clone(), FloatClass::Plain));
    s
}

fn index_stage(size: usize) -> Stage {
    if size <= 256 {
        Stage::U8
    } else {
        Stage::U16
    }
}

fn symbol_bytes(base: Stage, symbols: &[u16]) -> Vec<u8> {
    match base {
        Stage::U16 => symbols.iter().flat_map(|s| s.to_le_bytes()).collect(),
        _ => symbols.iter().map(|&s| s as u8).collect(),
    }
}

/// Smallest of the optional entropy-coding chains on top of `base`; ties go
/// to the shorter chain.
fn best_chain(base: Stage, symbols: Option<&[u16]>, bytes: Vec<u8>) -> Result<(Vec<Stage>, Vec<u8>)> {
    let mut best = (vec![base], bytes.clone());
    let mut consider = |chain: Vec<Stage>, data: Vec<u8>| {
        if data.len() < best.1.len() {
            best = (chain, data);
        }
    };
    consider(vec![base, Stage::Deflate], deflate(&bytes));
    if let Some(sym) = symbols {
        let h = huffman::encode_stream(sym)?;
        consider(vec![base, Stage::Huffman, Stage::Deflate], deflate(&h));
        consider(vec![base, Stage::Huffman], h);
    }
    Ok(best)
}

fn encode_source(src: Source, level: Level) -> Result<Vec<(StreamEntry, Vec<u8>)>> {
    let entry = |name: &str, elements: usize, codec: Vec<Stage>, bytes: usize, quant: Option<QuantSpec>| StreamEntry {
        name: name.to_string(),
        attribute: src.attribute.to_string(),
        elements,
        codec,
        bytes,
        quant,
    };
    let mut out = Vec::new();
    match (&src.payload, level) {
        (Payload::Floats(v, _), Level::Raw) => {
            let b = quant::f64_bytes(v);
            out.push((entry(&src.name, v.len(), vec![Stage::F64], b.len(), None), b));
        }
        (Payload::Floats(v, _), Level::Ours) => {
            let b = quant::f16_bytes(v)?;
            out.push((entry(&src.name, v.len(), vec![Stage::F16], b.len(), None), b));
        }
        (Payload::Indices(ix, size), Level::Raw | Level::Ours) => {
            let base = if level == Level::Raw { Stage::U16 } else { index_stage(*size) };
            let b = symbol_bytes(base, ix);
            out.push((entry(&src.name, ix.len(), vec![base], b.len(), None), b));
        }
        (Payload::Floats(v, FloatClass::Plain), Level::OursPp) => {
            let (codec, b) = best_chain(Stage::F16, None, quant::f16_bytes(v)?)?;
            out.push((entry(&src.name, v.len(), codec, b.len(), None), b));
        }
        (Payload::Floats(v, class), Level::OursPp) => {
            let values = if *class == FloatClass::Hash {
                let halves = v.iter().map(|&x| quant::round_f16(x)).collect::<Result<Vec<_>>>()?;
                let sparse = prune_small(&halves, PRUNE_THRESHOLD);
                let (codec, b) = best_chain(Stage::Bitmap, None, sparse.bitmap.clone())?;
                out.push((entry(&format!("{}_mask", src.name), v.len(), codec, b.len(), None), b));
                sparse.values
            } else {
                v.clone()
            };
            let (spec, q) = quantize_minmax(&values)?;
            let sym: Vec<u16> = q.iter().map(|&x| x as u16).collect();
            let (codec, b) = best_chain(Stage::Q8, Some(&sym), q)?;
            out.push((entry(&src.name, values.len(), codec, b.len(), Some(spec)), b));
        }
        (Payload::Indices(ix, size), Level::OursPp) => {
            let base = index_stage(*size);
            let (codec, b) = best_chain(base, Some(ix), symbol_bytes(base, ix))?;
            out.push((entry(&src.name, ix.len(), codec, b.len(), None), b));
        }
    }
    Ok(out)
}

/// Permutes a model into Morton order of its positions.
pub fn morton_sort(model: &Model) -> (Model, Vec<usize>) {
    let (positions, quantized) = match model {
        Model::Static(m) => (&m.gaussians.positions, &m.quantized),
        Model::Dynamic(m) => (&m.gaussians.positions, &m.quantized),
    };
    let order = morton::morton_order(positions);
    let q: Vec<QuantizedAttribute> = quantized.iter().map(|a| a.select(&order)).collect();
    let sorted = match model {
        Model::Static(m) => Model::Static(StaticModel {
            gaussians: m.gaussians.select(&order),
            field: m.field.clone(),
            quantized: q,
        }),
        Model::Dynamic(m) => Model::Dynamic(DynamicModel {
            gaussians: m.gaussians.select(&order),
            field: m.field.clone(),
            phi: m.phi.clone(),
            quantized: q,
        }),
    };
    (sorted, order)
}

pub fn pack(model: &Model, level: Level) -> Result<CompactContainer> {
    let sorted;
    let model = if level == Level::OursPp {
        sorted = morton_sort(model).0;
        &sorted
    } else {
        model
    };
    let (sources, color, field, phi_sizes, books) = match model {
        Model::Static(m) => (
            static_sources(m),
            match m.gaussians.color {
                ColorSource::Sh(_) => ColorKind::Sh,
                ColorSource::Field => ColorKind::Field,
            },
            m.field.as_ref(),
            None,
            book_shapes(&m.quantized),
        ),
        Model::Dynamic(m) => (
            dynamic_sources(m),
            if m.gaussians.uses_field() { ColorKind::Field } else { ColorKind::Features },
            m.field.as_ref(),
            Some(m.phi.mlp.sizes.clone()),
            book_shapes(&m.quantized),
        ),
    };
    if color == ColorKind::Field && field.is_none() {
        return Err(Error::InvalidArgument("field-colored model without a color field".into()));
    }
    let mut entries = Vec::new();
    let mut streams = Vec::new();
    for src in sources {
        for (e, b) in encode_source(src, level)? {
            entries.push(e);
            streams.push(b);
        }
    }
    Ok(CompactContainer {
        manifest: Manifest {
            version: VERSION,
            level,
            mode: model.mode().to_string(),
            count: model.len(),
            color,
            field: field.map(|f| f.config.clone()),
            phi_sizes,
            books,
            streams: entries,
        },
        streams,
    })
}

enum Decoded {
    Floats(Vec<f64>),
    Indices(Vec<u16>),
    Bitmap(Vec<u8>),
}

fn decode_stream(e: &StreamEntry, data: &[u8]) -> Result<Decoded> {
    let (&base, rest) = e
        .codec
        .split_first()
        .ok_or_else(|| Error::Format(format!("stream {} has an empty codec chain", e.name)))?;
    let mut bytes = data.to_vec();
    let mut symbols: Option<Vec<u16>> = None;
    for stage in rest.iter().rev() {
        match stage {
            Stage::Deflate if symbols.is_none() => bytes = inflate(&bytes)?,
            Stage::Huffman if symbols.is_none() => symbols = Some(huffman::decode_stream(&bytes)?),
            _ => return Err(Error::Format(format!("stream {} has an invalid codec chain", e.name))),
        }
    }
    let sym_u8 = |bytes: &[u8], symbols: Option<Vec<u16>>| -> Result<Vec<u8>> {
        match symbols {
            Some(s) => s
                .into_iter()
                .map(|v| u8::try_from(v).map_err(|_| Error::Corrupt(format!("symbol out of range in {}", e.name))))
                .collect(),
            None => Ok(bytes.to_vec()),
        }
    };
    let out = match base {
        Stage::F64 if symbols.is_none() => Decoded::Floats(quant::f64_values(&bytes)?),
        Stage::F16 if symbols.is_none() => Decoded::Floats(quant::f16_values(&bytes)?),
        Stage::Bitmap if symbols.is_none() => Decoded::Bitmap(bytes),
        Stage::U8 => Decoded::Indices(sym_u8(&bytes, symbols)?.into_iter().map(u16::from).collect()),
        Stage::U16 => match symbols {
            Some(s) => Decoded::Indices(s),
            None if bytes.len().is_multiple_of(2) => {
                Decoded::Indices(bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect())
            }
            None => return Err(Error::Corrupt(format!("odd u16 payload in {}", e.name))),
        },
        Stage::Q8 => {
            let spec = e
                .quant
                .ok_or_else(|| Error::Format(format!("stream {} lacks its quantization range", e.name)))?;
            spec.validate()?;
            Decoded::Floats(quant::dequantize(&spec, &sym_u8(&bytes, symbols)?))
        }
        _ => return Err(Error::Format(format!("stream {} has an invalid codec chain", e.name))),
    };
    let n = match &out {
        Decoded::Floats(v) => v.len(),
        Decoded::Indices(v) => v.len(),
        Decoded::Bitmap(b) => {
            if b.len() != e.elements.div_ceil(8) {
                return Err(Error::Corrupt(format!("bitmap size mismatch in {}", e.name)));
            }
            e.elements
        }
    };
    if n != e.elements {
        return Err(Error::Corrupt(format!("stream {} holds {n} elements, manifest says {}", e.name, e.elements)));
    }
    Ok(out)
}

struct Streams {
    floats: HashMap<String, Vec<f64>>,
    indices: HashMap<String, Vec<u16>>,
}

impl Streams {
    fn floats(&mut self, name: &str, len: usize) -> Result<Vec<f64>> {
        let v = self
            .floats
            .remove(name)
            .ok_or_else(|| Error::Format(format!("missing stream {name}")))?;
        if v.len() != len {
            return Err(Error::Corrupt(format!("stream {name} has {} values, expected {len}", v.len())));
        }
        Ok(v)
    }
}

fn decode_all(c: &CompactContainer) -> Result<Streams> {
    let mut s = Streams {
        floats: HashMap::new(),
        indices: HashMap::new(),
    };
    let mut masks: HashMap<String, (usize, Vec<u8>)> = HashMap::new();
    for (e, data) in c.manifest.streams.iter().zip(&c.streams) {
        match decode_stream(e, data)? {
            Decoded::Bitmap(b) => {
                let base = e.name.strip_suffix("_mask").unwrap_or(&e.name).to_string();
                masks.insert(base, (e.elements, b));
            }
            Decoded::Indices(v) => {
                s.indices.insert(e.name.clone(), v);
            }
            Decoded::Floats(v) => {
                let v = match masks.remove(&e.name) {
                    Some((len, bitmap)) => SparseStream::from_parts(len, bitmap, v)?.densify(),
                    None => v,
                };
                s.floats.insert(e.name.clone(), v);
            }
        }
    }
    if !masks.is_empty() {
        return Err(Error::Format("survivor bitmap without values".into()));
    }
    Ok(s)
}

fn decode_books(m: &Manifest, s: &mut Streams, n: usize) -> Result<Vec<QuantizedAttribute>> {
    m.books
        .iter()
        .map(|b| {
            if b.stages == 0 || b.size == 0 || b.size > 1 << 16 {
                return Err(Error::Format("invalid codebook shape".into()));
            }
            let codes = s.floats(&format!("{}_codebook", b.kind.name()), b.stages * b.size * b.dim)?;
            let indices = s
                .indices
                .remove(&format!("{}_indices", b.kind.name()))
                .ok_or_else(|| Error::Format(format!("missing {} indices", b.kind.name())))?;
            if indices.len() != n * b.stages || indices.iter().any(|&i| i as usize >= b.size) {
                return Err(Error::Corrupt(format!("invalid {} indices", b.kind.name())));
            }
            let book = RvqCodebook {
                dim: b.dim,
                size: b.size,
                stages: codes.chunks_exact(b.size * b.dim).map(<[f64]>::to_vec).collect(),
            };
            let reconstructions = book.reconstruct(&indices);
            Ok(QuantizedAttribute {
                kind: b.kind,
                book,
                encoding: RvqEncoding {
                    stages: b.stages,
                    indices,
                    reconstructions,
                },
            })
        })
        .collect()
}

fn book_values(q: &[QuantizedAttribute], kind: AttributeKind, dim: usize) -> Result<Option<&[f64]>> {
    match q.iter().find(|a| a.kind == kind) {
        Some(a) if a.dim() == dim => Ok(Some(&a.encoding.reconstructions)),
        Some(_) => Err(Error::Format(format!("{} codebook has the wrong dimension", kind.name()))),
        None => Ok(None),
    }
}

fn attribute(s: &mut Streams, q: &[QuantizedAttribute], kind: AttributeKind, name: &str, n: usize, dim: usize) -> Result<Vec<f64>> {
    match book_values(q, kind, dim)? {
        Some(v) => Ok(v.to_vec()),
        None => s.floats(name, n * dim),
    }
}

fn decode_field(m: &Manifest, s: &mut Streams) -> Result<Option<ColorField>> {
    let Some(cfg) = &m.field else {
        return Ok(None);
    };
    let mut f = ColorField::new(cfg.clone())?;
    f.table = s.floats("field_table", f.table.len())?;
    f.mlp.params = s.floats("field_mlp", f.mlp.params.len())?;
    Ok(Some(f))
}

pub fn unpack(c: &CompactContainer) -> Result<Model> {
    let m = &c.manifest;
    if m.version != VERSION {
        return Err(Error::VersionMismatch {
            expected: VERSION,
            found: m.version,
        });
    }
    if c.streams.len() != m.streams.len() {
        return Err(Error::Format("stream count disagrees with the manifest".into()));
    }
    let n = m.count;
    let mut s = decode_all(c)?;
    let quantized = decode_books(m, &mut s, n)?;
    let field = decode_field(m, &mut s)?;
    let model = match m.mode.as_str() {
        "static" => {
            let color = match m.color {
                ColorKind::Sh => ColorSource::Sh(rows(&s.floats("sh", n * SH_COEFFS)?)),
                ColorKind::Field if field.is_some() => ColorSource::Field,
                _ => return Err(Error::Format("inconsistent static color description".into())),
            };
            let gaussians = GaussianSet {
                positions: rows(&s.floats("positions", 3 * n)?),
                opacity_logits: s.floats("opacity", n)?,
                log_scales: rows(&attribute(&mut s, &quantized, AttributeKind::Scale, "scale", n, 3)?),
                rotations: rows(&attribute(&mut s, &quantized, AttributeKind::Rotation, "rotation", n, 4)?),
                color,
            };
            Model::Static(StaticModel {
                gaussians,
                field,
                quantized,
            })
        }
        "dynamic" => {
            let temporal: Vec<[f64; 3]> =
                rows(&attribute(&mut s, &quantized, AttributeKind::TemporalColor, "temporal_color", n, 3)?);
            let color = match m.color {
                ColorKind::Features => {
                    let spatial = s.floats("features", 6 * n)?;
                    DynColor::Features(
                        spatial
                            .chunks_exact(6)
                            .zip(&temporal)
                            .map(|(a, t)| {
                                let mut f = [0.0; FEATURE_DIM];
                                f[..6].copy_from_slice(a);
                                f[6..].copy_from_slice(t);
                                f
                            })
                            .collect(),
                    )
                }
                ColorKind::Field if field.is_some() => DynColor::Field { temporal },
                _ => return Err(Error::Format("inconsistent dynamic color description".into())),
            };
            let phi_sizes = m
                .phi_sizes
                .as_ref()
                .ok_or_else(|| Error::Format("dynamic container without a decoder description".into()))?;
            if phi_sizes.first() != Some(&FEATURE_DIM) || phi_sizes.last() != Some(&3) {
                return Err(Error::Format("invalid decoder shape".into()));
            }
            let mut mlp = Mlp::zeros(phi_sizes);
            mlp.params = s.floats("phi", mlp.params.len())?;
            let motion = s
                .floats("motion", 3 * POSITION_ORDER * n)?
                .chunks_exact(3 * POSITION_ORDER)
                .map(|c| rows::<3>(c).try_into().unwrap())
                .collect();
            let gaussians = DynGaussianSet {
                positions: rows(&s.floats("positions", 3 * n)?),
                rotations: rows(&attribute(&mut s, &quantized, AttributeKind::Rotation, "rotation", n, 4)?),
                log_scales: rows(&attribute(&mut s, &quantized, AttributeKind::Scale, "scale", n, 3)?),
                opacity_logits: s.floats("opacity", n)?,
                color,
                motion,
                rotation_coeffs: rows(&attribute(
                    &mut s,
                    &quantized,
                    AttributeKind::RotationCoeffs,
                    "rotation_coeffs",
                    n,
                    4,
                )?),
                centers: s.floats("temporal_center", n)?,
                log_temporal_scales: s.floats("temporal_scale", n)?,
            };
            Model::Dynamic(DynamicModel {
                gaussians,
                field,
                phi: PhiMlp { mlp },
                quantized,
            })
        }
        other => return Err(Error::Format(format!("unknown scene mode `{other}`"))),
    };
    if let Some(name) = s.floats.keys().chain(s.indices.keys()).next() {
        return Err(Error::Format(format!("unexpected stream {name}")));
    }
    Ok(model)
}

pub fn encode(model: &Model, level: Level) -> Result<Vec<u8>> {
    pack(model, level)?.to_bytes()
}

pub fn decode(bytes: &[u8]) -> Result<Model> {
    unpack(&CompactContainer::from_bytes(bytes)?)
}

/// Byte accounting of a container.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ContainerStats {
    pub level: Level,
    pub mode: String,
    pub count: usize,
    pub total_bytes: usize,
    pub header_bytes: usize,
    pub manifest_bytes: usize,
    /// `(stream, attribute, bytes)` in file order.
    pub streams: Vec<(String, String, usize)>,
    /// Bytes per attribute group, including the manifest, in file order.
    pub by_attribute: Vec<(String, usize)>,
}

impl ContainerStats {
    pub fn attribute_bytes(&self, name: &str) -> usize {
        self.by_attribute.iter().find(|(a, _)| a == name).map_or(0, |(_, b)| *b)
    }
}

pub fn container_stats(bytes: &[u8]) -> Result<ContainerStats> {
    let c = CompactContainer::from_bytes(bytes)?;
    let manifest_bytes = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let streams: Vec<(String, String, usize)> = c
        .manifest
        .streams
        .iter()
        .map(|e| (e.name.clone(), e.attribute.clone(), e.bytes))
        .collect();
    let mut by_attribute: Vec<(String, usize)> = vec![("manifest".to_string(), manifest_bytes)];
    for (_, a, b) in &streams {
        match by_attribute.iter_mut().find(|(k, _)| k == a) {
            Some(slot) => slot.1 += b,
            None => by_attribute.push((a.clone(), *b)),
        }
    }
    Ok(ContainerStats {
        level: c.manifest.level,
        mode: c.manifest.mode.clone(),
        count: c.manifest.count,
        total_bytes: bytes.len(),
        header_bytes: HEADER_LEN,
        manifest_bytes,
        streams,
        by_attribute,
    })
}
