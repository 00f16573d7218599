//! Float RGB images plus PPM/PNG interchange.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major `height × width × channels` float image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn filled(width: usize, height: usize, value: &[f64]) -> Self {
        let mut img = Image::new(width, height, value.len());
        for px in img.data.chunks_mut(value.len()) {
            px.copy_from_slice(value);
        }
        img
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::InvalidArgument(format!(
                "image data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    /// Copy with every value clamped to `[0, 1]`.
    pub fn clamped(&self) -> Image {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        out
    }

    fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "only RGB images can be exported, got {} channels",
                self.channels
            )));
        }
        Ok(self
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect())
    }

    fn from_bytes(width: usize, height: usize, bytes: &[u8], maxval: f64) -> Image {
        Image {
            width,
            height,
            channels: 3,
            data: bytes.iter().map(|&b| b as f64 / maxval).collect(),
        }
    }

    /// Writes an ASCII (`P3`) PPM.
    pub fn save_ppm(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut text = format!("P3\n{} {}\n255\n", self.width, self.height);
        for row in bytes.chunks(self.width * 3) {
            let line: Vec<String> = row.iter().map(|b| b.to_string()).collect();
            text.push_str(&line.join(" "));
            text.push('\n');
        }
        w.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads ASCII (`P3`) or binary (`P6`) 8-bit PPM.
    pub fn load_ppm(path: &Path) -> Result<Image> {
        let mut raw = Vec::new();
        File::open(path)
            .and_then(|f| BufReader::new(f).read_to_end(&mut raw))
            .map_err(|e| Error::io(path, e))?;
        parse_ppm(&raw)
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut encoder = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::Format(format!("png: {e}")))?;
        writer
            .write_image_data(&bytes)
            .map_err(|e| Error::Format(format!("png: {e}")))
    }

    pub fn load_png(path: &Path) -> Result<Image> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut decoder = png::Decoder::new(BufReader::new(file));
        decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = decoder
            .read_info()
            .map_err(|e| Error::Format(format!("png: {e}")))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| Error::Format("png: image too large".into()))?;
        let mut buf = vec![0u8; size];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| Error::Format(format!("png: {e}")))?;
        let (w, h) = (info.width as usize, info.height as usize);
        let buf = &buf[..info.buffer_size()];
        let rgb: Vec<u8> = match info.color_type {
            png::ColorType::Rgb => buf.to_vec(),
            png::ColorType::Rgba => buf.chunks(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
            png::ColorType::Grayscale => buf.iter().flat_map(|&g| [g, g, g]).collect(),
            png::ColorType::GrayscaleAlpha => buf.chunks(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
            other => return Err(Error::Format(format!("png: unsupported color type {other:?}"))),
        };
        Ok(Image::from_bytes(w, h, &rgb, 255.0))
    }

    /// Dispatches on the file extension (`.png`, anything else is PPM).
    pub fn load(path: &Path) -> Result<Image> {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("png") => Image::load_png(path),
            _ => Image::load_ppm(path),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("png") => self.save_png(path),
            _ => self.save_ppm(path),
        }
    }
}

fn parse_ppm(raw: &[u8]) -> Result<Image> {
    // Header tokens are whitespace separated, `#` starts a comment.
    let mut pos = 0;
    let next_token = |pos: &mut usize| -> Result<String> {
        loop {
            while *pos < raw.len() && raw[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < raw.len() && raw[*pos] == b'#' {
                while *pos < raw.len() && raw[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < raw.len() && !raw[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(Error::Format("ppm: unexpected end of header".into()));
        }
        Ok(String::from_utf8_lossy(&raw[start..*pos]).into_owned())
    };
    let magic = next_token(&mut pos)?;
    let parse = |s: String| -> Result<usize> {
        s.parse::<usize>()
            .map_err(|_| Error::Format(format!("ppm: bad header value `{s}`")))
    };
    let width = parse(next_token(&mut pos)?)?;
    let height = parse(next_token(&mut pos)?)?;
    let maxval = parse(next_token(&mut pos)?)?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("ppm: unsupported maxval {maxval}")));
    }
    let count = width * height * 3;
    let bytes: Vec<u8> = match magic.as_str() {
        "P3" => {
            let mut values = Vec::with_capacity(count);
            for _ in 0..count {
                let v = parse(next_token(&mut pos)?)?;
                values.push(v.min(maxval) as u8);
            }
            values
        }
        "P6" => {
            pos += 1;
            if raw.len() < pos + count {
                return Err(Error::Truncated {
                    expected: pos + count,
                    found: raw.len(),
                });
            }
            raw[pos..pos + count].to_vec()
        }
        other => return Err(Error::Format(format!("ppm: unsupported magic `{other}`"))),
    };
    Ok(Image::from_bytes(width, height, &bytes, maxval as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_and_png_round_trip_8bit_values() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = Image::new(5, 3, 3);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = (i * 17 % 256) as f64 / 255.0;
        }
        for name in ["a.ppm", "a.png"] {
            let path = dir.path().join(name);
            img.save(&path).unwrap();
            let back = Image::load(&path).unwrap();
            assert_eq!(back.width, 5);
            assert_eq!(back.height, 3);
            for (a, b) in img.data.iter().zip(&back.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ppm_comments_and_binary() {
        let mut raw = b"P6\n# comment\n2 1\n255\n".to_vec();
        raw.extend_from_slice(&[255, 0, 0, 0, 255, 0]);
        let img = parse_ppm(&raw).unwrap();
        assert_eq!(img.pixel(1, 0), &[0.0, 1.0, 0.0]);
    }
}
