//! Grayscale raster, PGM I/O and the photometric / geometric perturbations
//! used by the experiments.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft;

/// Single-channel floating-point image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!("{width}x{height} is empty")));
        }
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "{} values for a {width}x{height} image",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Range(format!(
                "non-finite value at pixel ({}, {})",
                i % width,
                i / width
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "empty image");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Square `size x size` window centered on `(cx, cy)`; `None` if any part
    /// of it falls outside the image. `size` must be odd.
    pub fn window(&self, cx: usize, cy: usize, size: usize) -> Option<GrayImage> {
        let half = size / 2;
        if size % 2 == 0
            || cx < half
            || cy < half
            || cx + half >= self.width
            || cy + half >= self.height
        {
            return None;
        }
        let (x0, y0) = (cx - half, cy - half);
        Some(GrayImage::from_fn(size, size, |x, y| self.get(x0 + x, y0 + y)))
    }

    /// Whether a centered odd window of `size` fits at `(cx, cy)`.
    pub fn window_fits(&self, cx: usize, cy: usize, size: usize) -> bool {
        let half = size / 2;
        cx >= half && cy >= half && cx + half < self.width && cy + half < self.height
    }

    pub fn max_abs_diff(&self, other: &GrayImage) -> f64 {
        assert_eq!(self.dims(), other.dims(), "dimension mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Ground-truth translation for synthetic experiments, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ShiftSpec {
    pub dx: f64,
    pub dy: f64,
}

impl ShiftSpec {
    pub fn horizontal(dx: f64) -> Self {
        Self { dx, dy: 0.0 }
    }
}

/// Sample depth used when writing PGM files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_value(self) -> u32 {
        match self {
            BitDepth::Eight => 255,
            BitDepth::Sixteen => 65535,
        }
    }
}

impl TryFrom<u32> for BitDepth {
    type Error = Error;

    fn try_from(bits: u32) -> Result<Self> {
        match bits {
            8 => Ok(BitDepth::Eight),
            16 => Ok(BitDepth::Sixteen),
            other => Err(Error::Config(format!("bit depth must be 8 or 16, got {other}"))),
        }
    }
}

/// Reads a binary (P5) or ASCII (P2) PGM, normalizing intensities to `[0, 1]`.
pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

/// Writes `img` as a binary PGM. Values are clamped to `[0, 1]` before
/// quantization.
pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>, depth: BitDepth) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm(img, depth)).map_err(|e| Error::io(path, e))
}

pub fn encode_pgm(img: &GrayImage, depth: BitDepth) -> Vec<u8> {
    let maxval = depth.max_value();
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, maxval).into_bytes();
    let scale = maxval as f64;
    for &v in &img.data {
        let q = (v.clamp(0.0, 1.0) * scale).round() as u32;
        match depth {
            BitDepth::Eight => out.push(q as u8),
            BitDepth::Sixteen => out.extend_from_slice(&(q as u16).to_be_bytes()),
        }
    }
    out
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderReader<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format(format!("expected {what} at byte {start}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format(format!("{what} does not fit in 32 bits")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 2 {
        return Err(Error::Format("file too short for a PGM header".into()));
    }
    let binary = match &bytes[..2] {
        b"P5" => true,
        b"P2" => false,
        magic => {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected P2 or P5",
                String::from_utf8_lossy(magic)
            )))
        }
    };
    let mut header = HeaderReader { bytes, pos: 2 };
    let width = header.number("width")? as usize;
    let height = header.number("height")? as usize;
    let maxval = header.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("empty raster {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("maxval {maxval} outside 1..=65535")));
    }
    let count = width * height;
    let scale = 1.0 / maxval as f64;
    let mut data = Vec::with_capacity(count);

    if binary {
        // exactly one whitespace byte separates the header from the raster
        let start = header.pos + 1;
        let sample = if maxval < 256 { 1 } else { 2 };
        let payload = bytes.get(start..).unwrap_or(&[]);
        if payload.len() < count * sample {
            return Err(Error::Format(format!(
                "truncated raster: {} bytes, need {}",
                payload.len(),
                count * sample
            )));
        }
        for i in 0..count {
            let v = if sample == 1 {
                payload[i] as u32
            } else {
                u16::from_be_bytes([payload[2 * i], payload[2 * i + 1]]) as u32
            };
            if v > maxval {
                return Err(Error::Format(format!("sample {v} exceeds maxval {maxval}")));
            }
            data.push(v as f64 * scale);
        }
    } else {
        for i in 0..count {
            let v = header.number("sample").map_err(|_| {
                Error::Format(format!("truncated raster: {i} of {count} samples"))
            })?;
            if v > maxval {
                return Err(Error::Format(format!("sample {v} exceeds maxval {maxval}")));
            }
            data.push(v as f64 * scale);
        }
    }
    GrayImage::new(width, height, data)
}

/// Translates the image content by `(dx, dy)` pixels with periodic boundaries
/// using the Fourier shift theorem.
///
/// The result is the real part of the inverse transform. On even-length axes
/// the Nyquist bin therefore scales by `cos(pi * shift)`: integer shifts are
/// exact circular shifts (and are computed as such), while fractional shifts are exact only for content
/// without Nyquist energy.
pub fn subpixel_shift(img: &GrayImage, shift: ShiftSpec) -> Result<GrayImage> {
    let (w, h) = img.dims();
    if w < 8 || h < 8 {
        return Err(Error::Dimension(format!("{w}x{h} is smaller than 8x8")));
    }
    if !(shift.dx.is_finite() && shift.dy.is_finite())
        || shift.dx.abs() >= w as f64 / 2.0
        || shift.dy.abs() >= h as f64 / 2.0
    {
        return Err(Error::Range(format!(
            "shift ({}, {}) must stay below half the image size",
            shift.dx, shift.dy
        )));
    }
    if shift.dx.fract() == 0.0 && shift.dy.fract() == 0.0 {
        return Ok(circular_shift(img, shift.dx as i64, shift.dy as i64));
    }
    let plan = fft::plan(w, h);
    let mut spectrum = plan.forward_real(img.data());
    let phase_x: Vec<Complex64> = (0..w)
        .map(|k| Complex64::from_polar(1.0, -2.0 * PI * fft::frequency(k, w) * shift.dx))
        .collect();
    for y in 0..h {
        let phase_y = Complex64::from_polar(1.0, -2.0 * PI * fft::frequency(y, h) * shift.dy);
        for x in 0..w {
            spectrum[y * w + x] *= phase_x[x] * phase_y;
        }
    }
    plan.inverse(&mut spectrum);
    GrayImage::new(w, h, spectrum.iter().map(|c| c.re).collect())
}

/// Exact circular shift by whole pixels: `out(x, y) = img(x - dx, y - dy)`.
pub fn circular_shift(img: &GrayImage, dx: i64, dy: i64) -> GrayImage {
    let (w, h) = (img.width as i64, img.height as i64);
    GrayImage::from_fn(img.width, img.height, |x, y| {
        let sx = (x as i64 - dx).rem_euclid(w) as usize;
        let sy = (y as i64 - dy).rem_euclid(h) as usize;
        img.get(sx, sy)
    })
}

/// Linear photometric change `p -> alpha * p + beta`, without clipping.
pub fn apply_brightness(img: &GrayImage, alpha: f64, beta: f64) -> GrayImage {
    img.map(|p| alpha * p + beta)
}

/// Clamps every pixel to `[lo, hi]`.
pub fn clip(img: &GrayImage, lo: f64, hi: f64) -> GrayImage {
    img.map(|p| p.clamp(lo, hi))
}
