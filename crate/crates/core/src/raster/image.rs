//! Framebuffers, depth maps and their on-disk encodings.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major linear-RGB image with per-pixel accumulated alpha and the alpha
/// contributed by masked layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Framebuffer {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<f64>,
    pub alpha: Vec<f64>,
    pub mask: Vec<f64>,
}

impl Framebuffer {
    pub fn new(width: u32, height: u32) -> Self {
        let n = (width * height) as usize;
        Self {
            width,
            height,
            rgb: vec![0.0; 3 * n],
            alpha: vec![0.0; n],
            mask: vec![0.0; n],
        }
    }

    pub fn pixel_count(&self) -> usize {
        (self.width * self.height) as usize
    }

    pub fn pixel(&self, x: u32, y: u32) -> [f64; 3] {
        let i = 3 * (y * self.width + x) as usize;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn same_shape(&self, other: &Framebuffer) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Largest per-channel absolute difference in RGB.
    pub fn max_abs_diff(&self, other: &Framebuffer) -> f64 {
        assert!(self.same_shape(other), "framebuffer shapes differ");
        self.rgb
            .iter()
            .zip(&other.rgb)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.rgb.iter().chain(&self.alpha).chain(&self.mask).all(|v| v.is_finite())
    }

    /// 8-bit sRGB PNG.
    pub fn to_png(&self) -> Result<Vec<u8>> {
        let data: Vec<u8> = self.rgb.iter().map(|&c| encode_srgb(c)).collect();
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width, self.height);
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().map_err(|e| Error::Image(e.to_string()))?;
            w.write_image_data(&data).map_err(|e| Error::Image(e.to_string()))?;
        }
        Ok(out)
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_png()?).map_err(|e| Error::io(path, e))
    }

    /// Decodes an 8-bit RGB/RGBA PNG into linear RGB. Alpha and mask come back
    /// as zero.
    pub fn from_png(bytes: &[u8]) -> Result<Self> {
        let mut dec = png::Decoder::new(std::io::Cursor::new(bytes));
        dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = dec.read_info().map_err(|e| Error::Image(e.to_string()))?;
        let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
        let info = reader.next_frame(&mut buf).map_err(|e| Error::Image(e.to_string()))?;
        let channels = match info.color_type {
            png::ColorType::Rgb => 3,
            png::ColorType::Rgba => 4,
            png::ColorType::Grayscale => 1,
            png::ColorType::GrayscaleAlpha => 2,
            other => return Err(Error::Image(format!("unsupported PNG color type {other:?}"))),
        };
        let mut fb = Framebuffer::new(info.width, info.height);
        for (i, px) in buf[..info.buffer_size()].chunks(channels).enumerate() {
            for c in 0..3 {
                let v = if channels < 3 { px[0] } else { px[c] };
                fb.rgb[3 * i + c] = decode_srgb(v);
            }
        }
        Ok(fb)
    }

    pub fn read_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_png(&bytes)
    }

    /// Raw dump: `b"C3VF"`, then little-endian u32 width, height, channel
    /// count (3), then one f32 plane per channel in R, G, B order.
    pub fn to_raw_planar(&self) -> Vec<u8> {
        let n = self.pixel_count();
        let mut out = Vec::with_capacity(16 + 12 * n);
        out.extend_from_slice(b"C3VF");
        for v in [self.width, self.height, 3] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for c in 0..3 {
            for i in 0..n {
                out.extend_from_slice(&(self.rgb[3 * i + c] as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_raw_planar(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Image(format!("raw planar dump: {m}"));
        if bytes.len() < 16 || &bytes[..4] != b"C3VF" {
            return Err(bad("missing header"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        let (w, h, ch) = (word(0), word(1), word(2));
        if ch != 3 {
            return Err(bad("expected 3 channels"));
        }
        let n = (w * h) as usize;
        if bytes.len() != 16 + 12 * n {
            return Err(bad("size mismatch"));
        }
        let mut fb = Framebuffer::new(w, h);
        for c in 0..3 {
            for i in 0..n {
                let o = 16 + 4 * (c * n + i);
                fb.rgb[3 * i + c] = f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as f64;
            }
        }
        Ok(fb)
    }
}

pub fn encode_srgb(linear: f64) -> u8 {
    let c = linear.clamp(0.0, 1.0);
    let s = if c <= 0.003_130_8 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    };
    (s * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn decode_srgb(v: u8) -> f64 {
    let s = v as f64 / 255.0;
    if s <= 0.040_45 {
        s / 12.92
    } else {
        ((s + 0.055) / 1.055).powf(2.4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthOrigin {
    Rendered,
    External,
}

/// Per-pixel camera-space depth with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: u32,
    pub height: u32,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    pub origin: DepthOrigin,
}

impl DepthMap {
    pub fn invalid(width: u32, height: u32, origin: DepthOrigin) -> Self {
        let n = (width * height) as usize;
        Self {
            width,
            height,
            values: vec![0.0; n],
            valid: vec![false; n],
            origin,
        }
    }

    pub fn get(&self, x: u32, y: u32) -> Option<f64> {
        if x >= self.width || y >= self.height {
            return None;
        }
        let i = (y * self.width + x) as usize;
        self.valid[i].then_some(self.values[i])
    }

    pub fn set(&mut self, x: u32, y: u32, z: f64) {
        let i = (y * self.width + x) as usize;
        let ok = z.is_finite() && z > 0.0;
        self.values[i] = if ok { z } else { 0.0 };
        self.valid[i] = ok;
    }

    /// Multiplies every valid depth by `factor` (for relative external depth).
    pub fn scaled(mut self, factor: f64) -> Self {
        for (v, ok) in self.values.iter_mut().zip(&self.valid) {
            if *ok {
                *v *= factor;
            }
        }
        self
    }

    /// Single-channel little-endian PFM; invalid pixels are written as 0.
    pub fn to_pfm(&self) -> Vec<u8> {
        let mut out = format!("Pf\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                let z = self.get(x, y).unwrap_or(0.0) as f32;
                out.extend_from_slice(&z.to_le_bytes());
            }
        }
        out
    }

    /// Reads a single-channel PFM; non-positive or non-finite samples are invalid.
    pub fn from_pfm(bytes: &[u8], origin: DepthOrigin) -> Result<Self> {
        let bad = |m: &str| Error::Image(format!("PFM: {m}"));
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("header not ASCII"))?);
        }
        pos += 1;
        if fields[0] != "Pf" {
            return Err(bad("only single-channel 'Pf' maps are supported"));
        }
        let w: u32 = fields[1].parse().map_err(|_| bad("bad width"))?;
        let h: u32 = fields[2].parse().map_err(|_| bad("bad height"))?;
        let scale: f64 = fields[3].parse().map_err(|_| bad("bad scale"))?;
        let little = scale < 0.0;
        let n = (w * h) as usize;
        if bytes.len() < pos + 4 * n {
            return Err(bad("truncated data"));
        }
        let mut map = DepthMap::invalid(w, h, origin);
        for row in 0..h {
            let y = h - 1 - row;
            for x in 0..w {
                let o = pos + 4 * (row * w + x) as usize;
                let b: [u8; 4] = bytes[o..o + 4].try_into().unwrap();
                let z = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
                map.set(x, y, z as f64);
            }
        }
        Ok(map)
    }

    pub fn write_pfm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_pfm()).map_err(|e| Error::io(path, e))
    }

    pub fn read_pfm(path: impl AsRef<Path>, origin: DepthOrigin) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pfm(&bytes, origin)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn srgb_endpoints_and_midpoint() {
        assert_eq!(encode_srgb(0.0), 0);
        assert_eq!(encode_srgb(1.0), 255);
        assert_eq!(encode_srgb(0.5), 188);
        for v in 0..=255u8 {
            assert_eq!(encode_srgb(decode_srgb(v)), v);
        }
    }

    #[test]
    fn png_roundtrip_is_exact_on_8bit_values() {
        let mut fb = Framebuffer::new(5, 3);
        for (i, v) in fb.rgb.iter_mut().enumerate() {
            *v = decode_srgb((i * 17 % 256) as u8);
        }
        let back = Framebuffer::from_png(&fb.to_png().unwrap()).unwrap();
        assert!(back.max_abs_diff(&fb) < 1e-12);
    }

    #[test]
    fn raw_planar_layout() {
        let mut fb = Framebuffer::new(2, 1);
        fb.rgb = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let raw = fb.to_raw_planar();
        assert_eq!(raw.len(), 16 + 24);
        // first plane is red: pixel 0 then pixel 1
        assert_eq!(f32::from_le_bytes(raw[16..20].try_into().unwrap()), 0.1);
        assert_eq!(f32::from_le_bytes(raw[20..24].try_into().unwrap()), 0.4);
        let back = Framebuffer::from_raw_planar(&raw).unwrap();
        assert!(back.max_abs_diff(&fb) < 1e-7);
    }

    #[test]
    fn pfm_roundtrip_keeps_validity() {
        let mut d = DepthMap::invalid(3, 2, DepthOrigin::Rendered);
        d.set(0, 0, 1.5);
        d.set(2, 1, 7.25);
        let back = DepthMap::from_pfm(&d.to_pfm(), DepthOrigin::External).unwrap();
        assert_eq!(back.get(0, 0), Some(1.5));
        assert_eq!(back.get(2, 1), Some(7.25));
        assert_eq!(back.get(1, 0), None);
        assert_eq!(back.origin, DepthOrigin::External);
        assert_eq!(back.scaled(2.0).get(2, 1), Some(14.5));
    }
}
