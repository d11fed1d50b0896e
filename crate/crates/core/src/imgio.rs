//! Raster types and their on-disk codecs, plus the dataset manifest.
//!
//! Color images are binary PPM (P6, maxval 255). Depth maps are binary 16-bit
//! PGM (P5, maxval 65535, big-endian samples) with an inverted linear mapping:
//! 0 mm is the brightest value and 100 mm the darkest.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenegen::{Camera, Scene};

/// Depth ceiling in millimeters. Also the value given to missed pixels.
pub const MAX_DEPTH_MM: f64 = 100.0;

const DEPTH_MAXVAL: u32 = 65535;
const COLOR_MAXVAL: u32 = 255;

/// Row-major RGB image with channels in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct ColorImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl ColorImage {
    pub const MIN_SIDE: usize = 8;

    pub fn new(width: usize, height: usize) -> Result<Self> {
        Self::from_vec(width, height, vec![0.0; width * height * 3])
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width < Self::MIN_SIDE || height < Self::MIN_SIDE {
            return Err(Error::contract(
                "imgio",
                format!("color image {width}x{height} smaller than 8x8"),
            ));
        }
        if data.len() != width * height * 3 {
            return Err(Error::contract(
                "imgio",
                format!(
                    "color buffer has {} values, expected {}",
                    data.len(),
                    width * height * 3
                ),
            ));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            let p = i / 3;
            return Err(Error::contract(
                "imgio",
                format!(
                    "channel value {} at pixel ({}, {}) outside [0, 1]",
                    data[i],
                    p / width,
                    p % width
                ),
            ));
        }
        Ok(Self { width, height, data })
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [f64; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Mean of the three channels per pixel.
    pub fn luminance(&self) -> Vec<f64> {
        self.data.chunks_exact(3).map(|c| (c[0] + c[1] + c[2]) / 3.0).collect()
    }

    /// Planar (channel-major) copy, the layout the networks consume.
    pub fn to_planar(&self) -> Vec<f64> {
        let n = self.width * self.height;
        let mut out = vec![0.0; 3 * n];
        for (p, c) in self.data.chunks_exact(3).enumerate() {
            out[p] = c[0];
            out[n + p] = c[1];
            out[2 * n + p] = c[2];
        }
        out
    }

    pub fn from_planar(width: usize, height: usize, planar: &[f64]) -> Result<Self> {
        let n = width * height;
        if planar.len() != 3 * n {
            return Err(Error::contract("imgio", "planar buffer size mismatch"));
        }
        let mut data = vec![0.0; 3 * n];
        for p in 0..n {
            for ch in 0..3 {
                data[p * 3 + ch] = planar[ch * n + p].clamp(0.0, 1.0);
            }
        }
        Self::from_vec(width, height, data)
    }
}

/// Row-major depth map in millimeters.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DepthMap {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value.clamp(0.0, MAX_DEPTH_MM); width * height],
        }
    }

    /// Builds a map, rejecting values outside [0, 100].
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::contract(
                "imgio",
                format!("depth buffer has {} values, expected {}", data.len(), width * height),
            ));
        }
        let map = Self { width, height, data };
        map.check_range()?;
        Ok(map)
    }

    /// Builds a map, clamping every value into [0, 100]. NaN becomes 100.
    pub fn from_vec_clamped(width: usize, height: usize, mut data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height);
        for v in &mut data {
            *v = if v.is_nan() {
                MAX_DEPTH_MM
            } else {
                v.clamp(0.0, MAX_DEPTH_MM)
            };
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn check_range(&self) -> Result<()> {
        match self.data.iter().position(|v| !(0.0..=MAX_DEPTH_MM).contains(v)) {
            Some(i) => Err(Error::DepthRange {
                row: i / self.width,
                col: i % self.width,
                value: self.data[i],
            }),
            None => Ok(()),
        }
    }
}

/// Depth-to-intensity quantization. Near is bright.
#[inline]
pub fn depth_to_intensity(depth_mm: f64) -> u16 {
    // f64::round rounds half away from zero.
    (DEPTH_MAXVAL as f64 * (1.0 - depth_mm / MAX_DEPTH_MM)).round() as u16
}

#[inline]
pub fn intensity_to_depth(v: u16) -> f64 {
    MAX_DEPTH_MM * (1.0 - v as f64 / DEPTH_MAXVAL as f64)
}

/// Encodes a depth map as a 16-bit binary PGM.
pub fn encode_depth(d: &DepthMap) -> Result<Vec<u8>> {
    d.check_range()?;
    let header = format!("P5\n{} {}\n{}\n", d.width, d.height, DEPTH_MAXVAL);
    let mut out = Vec::with_capacity(header.len() + 2 * d.data.len());
    out.extend_from_slice(header.as_bytes());
    for &v in &d.data {
        out.extend_from_slice(&depth_to_intensity(v).to_be_bytes());
    }
    Ok(out)
}

pub fn decode_depth(bytes: &[u8]) -> Result<DepthMap> {
    let (w, h, maxval, body) = parse_header(bytes, b"P5")?;
    if maxval != DEPTH_MAXVAL {
        return Err(Error::Parse(format!(
            "depth raster maxval {maxval}, expected {DEPTH_MAXVAL}"
        )));
    }
    let n = w * h;
    if body.len() < 2 * n {
        return Err(Error::Parse(format!(
            "depth raster truncated: {} bytes for {n} samples",
            body.len()
        )));
    }
    let data = body[..2 * n]
        .chunks_exact(2)
        .map(|b| intensity_to_depth(u16::from_be_bytes([b[0], b[1]])))
        .collect();
    Ok(DepthMap {
        width: w,
        height: h,
        data,
    })
}

/// Encodes a color image as an 8-bit binary PPM.
pub fn encode_color(img: &ColorImage) -> Vec<u8> {
    let header = format!("P6\n{} {}\n{}\n", img.width, img.height, COLOR_MAXVAL);
    let mut out = Vec::with_capacity(header.len() + img.data.len());
    out.extend_from_slice(header.as_bytes());
    out.extend(
        img.data
            .iter()
            .map(|&v| (COLOR_MAXVAL as f64 * v.clamp(0.0, 1.0)).round() as u8),
    );
    out
}

pub fn decode_color(bytes: &[u8]) -> Result<ColorImage> {
    let (w, h, maxval, body) = parse_header(bytes, b"P6")?;
    if maxval != COLOR_MAXVAL {
        return Err(Error::Parse(format!(
            "color raster maxval {maxval}, expected {COLOR_MAXVAL}"
        )));
    }
    let n = w * h * 3;
    if body.len() < n {
        return Err(Error::Parse(format!(
            "color raster truncated: {} bytes for {n} samples",
            body.len()
        )));
    }
    let data = body[..n].iter().map(|&b| b as f64 / COLOR_MAXVAL as f64).collect();
    ColorImage::from_vec(w, h, data).map_err(|e| Error::Parse(e.to_string()))
}

/// Parses a binary PNM header: magic, width, height, maxval, separated by
/// whitespace with `#` comments, then exactly one whitespace byte.
fn parse_header<'a>(bytes: &'a [u8], magic: &[u8; 2]) -> Result<(usize, usize, u32, &'a [u8])> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::Parse(format!(
            "expected magic {}",
            String::from_utf8_lossy(magic)
        )));
    }
    let mut pos = 2;
    let mut fields = [0u64; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(Error::Parse("header ended early".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse(format!("expected a number at byte {start}")));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad number at byte {start}")))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Parse("missing whitespace after maxval".into())),
    }
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 || w > 1 << 16 || h > 1 << 16 {
        return Err(Error::Parse(format!("unsupported dimensions {w}x{h}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Parse(format!("maxval {maxval} out of range")));
    }
    Ok((w as usize, h as usize, maxval as u32, &bytes[pos..]))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_depth(path: &Path) -> Result<DepthMap> {
    decode_depth(&read_bytes(path)?)
}

pub fn write_depth(path: &Path, d: &DepthMap) -> Result<()> {
    write_bytes(path, &encode_depth(d)?)
}

pub fn read_color(path: &Path) -> Result<ColorImage> {
    decode_color(&read_bytes(path)?)
}

pub fn write_color(path: &Path, img: &ColorImage) -> Result<()> {
    write_bytes(path, &encode_color(img))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    #[serde(rename = "real-like")]
    RealLike,
    #[serde(rename = "lambertian")]
    Lambertian,
}

/// One dataset item. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub image: String,
    pub depth: Option<String>,
    pub label: Option<u8>,
    pub domain: Domain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<Scene>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<Camera>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub entries: Vec<Entry>,
}

impl Manifest {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.image.as_str()) {
                return Err(Error::Manifest(format!("duplicate image path {}", e.image)));
            }
            if let Some(l) = e.label {
                if l > 2 {
                    return Err(Error::Manifest(format!(
                        "label {l} for {} outside {{0, 1, 2}}",
                        e.image
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn by_domain(&self, domain: Domain) -> impl Iterator<Item = &Entry> {
        self.entries.iter().filter(move |e| e.domain == domain)
    }

    /// Checks that every paired lambertian entry's image and depth rasters
    /// have equal dimensions. Reads only the headers' payloads from `root`.
    pub fn verify_pairs(&self, root: &Path) -> Result<()> {
        for e in self.by_domain(Domain::Lambertian) {
            if let Some(depth) = &e.depth {
                let img = read_color(&root.join(&e.image))?;
                let d = read_depth(&root.join(depth))?;
                if (img.width, img.height) != (d.width, d.height) {
                    return Err(Error::Manifest(format!(
                        "{} is {}x{} but {} is {}x{}",
                        e.image, img.width, img.height, depth, d.width, d.height
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let m: Manifest = serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
    m.validate()?;
    Ok(m)
}

pub fn manifest_to_string(m: &Manifest) -> Result<String> {
    m.validate()?;
    let mut s = serde_json::to_string_pretty(m)?;
    s.push('\n');
    Ok(s)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

pub fn write_manifest(m: &Manifest, path: &Path) -> Result<()> {
    write_bytes(path, manifest_to_string(m)?.as_bytes())
}
