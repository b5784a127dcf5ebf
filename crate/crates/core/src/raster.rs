//! Pixel containers, PNG/JPEG codecs, bilinear resizing and sRGB → CIELAB.

use std::io::Cursor;

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder, ImageFormat};
use rayon::prelude::*;
use thiserror::Error;

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];
const JPEG_SOI: [u8; 3] = [0xff, 0xd8, 0xff];

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: u32, height: u32 },
    #[error("pixel buffer has {actual} bytes, expected {expected}")]
    BufferLength { expected: usize, actual: usize },
    #[error("unsupported image format (only PNG and baseline JPEG are accepted)")]
    UnsupportedFormat,
    #[error("failed to decode {format} stream: {reason}")]
    Decode {
        format: &'static str,
        reason: String,
    },
    #[error("failed to encode PNG: {0}")]
    Encode(String),
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// 8-bit interleaved RGB raster, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RasterImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl RasterImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidDimensions { width, height });
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(RasterError::BufferLength {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Image of the given size with every pixel set to `rgb`.
    ///
    /// Panics if either dimension is zero.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "zero-sized raster");
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "zero-sized raster");
        let mut pixels = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Per-pixel CIELAB triplets, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct LabImage {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl LabImage {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::InvalidDimensions { width, height });
        }
        let expected = width as usize * height as usize * 3;
        if values.len() != expected {
            return Err(RasterError::BufferLength {
                expected,
                actual: values.len(),
            });
        }
        if values
            .chunks_exact(3)
            .any(|c| !(0.0..=100.0).contains(&c[0]))
        {
            return Err(RasterError::Argument("L component outside [0, 100]".into()));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [f64; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.values[i], self.values[i + 1], self.values[i + 2]]
    }
}

fn sniff_format(bytes: &[u8]) -> Option<ImageFormat> {
    if bytes.starts_with(&PNG_SIGNATURE) {
        Some(ImageFormat::Png)
    } else if bytes.starts_with(&JPEG_SOI) {
        Some(ImageFormat::Jpeg)
    } else {
        None
    }
}

/// Decodes a PNG or baseline JPEG stream into 8-bit RGB.
///
/// Grayscale, 16-bit and alpha inputs are converted to 8-bit RGB; any other
/// container is rejected with [`RasterError::UnsupportedFormat`].
pub fn decode_image(bytes: &[u8]) -> Result<RasterImage, RasterError> {
    let format = sniff_format(bytes).ok_or(RasterError::UnsupportedFormat)?;
    let name = match format {
        ImageFormat::Png => "PNG",
        _ => "JPEG",
    };
    let decoded =
        image::load_from_memory_with_format(bytes, format).map_err(|e| RasterError::Decode {
            format: name,
            reason: e.to_string(),
        })?;
    let rgb = decoded.into_rgb8();
    let (width, height) = rgb.dimensions();
    RasterImage::new(width, height, rgb.into_raw())
}

fn encode_png_raw(
    width: u32,
    height: u32,
    data: &[u8],
    color: ExtendedColorType,
) -> Result<Vec<u8>, RasterError> {
    let mut out = Vec::new();
    // Fixed compression settings: identical input always yields identical bytes.
    let encoder = PngEncoder::new_with_quality(
        Cursor::new(&mut out),
        CompressionType::Fast,
        FilterType::Sub,
    );
    encoder
        .write_image(data, width, height, color)
        .map_err(|e| RasterError::Encode(e.to_string()))?;
    Ok(out)
}

/// Lossless 8-bit RGB PNG encoding.
pub fn encode_png(image: &RasterImage) -> Result<Vec<u8>, RasterError> {
    encode_png_raw(
        image.width,
        image.height,
        &image.pixels,
        ExtendedColorType::Rgb8,
    )
}

/// 8-bit grayscale PNG.
pub fn encode_gray8_png(width: u32, height: u32, data: &[u8]) -> Result<Vec<u8>, RasterError> {
    encode_png_raw(width, height, data, ExtendedColorType::L8)
}

/// 16-bit grayscale PNG. The encoder takes native-endian samples.
pub fn encode_gray16_png(width: u32, height: u32, data: &[u16]) -> Result<Vec<u8>, RasterError> {
    let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_ne_bytes()).collect();
    encode_png_raw(width, height, &bytes, ExtendedColorType::L16)
}

/// Decodes a grayscale PNG into 16-bit samples (8-bit inputs are widened
/// without rescaling).
pub fn decode_gray_png(bytes: &[u8]) -> Result<(u32, u32, Vec<u16>), RasterError> {
    if sniff_format(bytes) != Some(ImageFormat::Png) {
        return Err(RasterError::UnsupportedFormat);
    }
    let decoded = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| {
        RasterError::Decode {
            format: "PNG",
            reason: e.to_string(),
        }
    })?;
    let (w, h) = (decoded.width(), decoded.height());
    let values = match decoded {
        image::DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(u16::from).collect(),
        image::DynamicImage::ImageLuma16(buf) => buf.into_raw(),
        _ => {
            return Err(RasterError::Decode {
                format: "PNG",
                reason: "expected a grayscale image".into(),
            })
        }
    };
    Ok((w, h, values))
}

/// Source coordinate and weights for one output position under
/// half-pixel-centered sampling.
#[derive(Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn taps(in_len: u32, out_len: u32) -> Vec<Tap> {
    let scale = in_len as f64 / out_len as f64;
    let last = (in_len - 1) as f64;
    (0..out_len)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let lo = src.floor();
            let frac = src - lo;
            let lo = lo as usize;
            let hi = (lo + 1).min(in_len as usize - 1);
            Tap { lo, hi, frac }
        })
        .collect()
}

/// Bilinear resize with half-pixel sample centers (align-corners = false).
///
/// Sample positions outside the pixel-center lattice clamp to the border.
pub fn resize_bilinear(
    image: &RasterImage,
    out_w: u32,
    out_h: u32,
) -> Result<RasterImage, RasterError> {
    if out_w == 0 || out_h == 0 {
        return Err(RasterError::Argument(format!(
            "target size {out_w}x{out_h} has a zero dimension"
        )));
    }
    if (out_w, out_h) == image.dimensions() {
        return Ok(image.clone());
    }
    let xs = taps(image.width, out_w);
    let ys = taps(image.height, out_h);
    let in_w = image.width as usize;
    let src = &image.pixels;
    let mut pixels = vec![0u8; out_w as usize * out_h as usize * 3];
    pixels
        .par_chunks_mut(out_w as usize * 3)
        .zip(ys.par_iter())
        .for_each(|(row, ty)| {
            let r0 = ty.lo * in_w;
            let r1 = ty.hi * in_w;
            for (ox, tx) in xs.iter().enumerate() {
                for c in 0..3 {
                    let p00 = src[(r0 + tx.lo) * 3 + c] as f64;
                    let p01 = src[(r0 + tx.hi) * 3 + c] as f64;
                    let p10 = src[(r1 + tx.lo) * 3 + c] as f64;
                    let p11 = src[(r1 + tx.hi) * 3 + c] as f64;
                    let top = p00 + (p01 - p00) * tx.frac;
                    let bottom = p10 + (p11 - p10) * tx.frac;
                    let v = top + (bottom - top) * ty.frac;
                    row[ox * 3 + c] = v.round().clamp(0.0, 255.0) as u8;
                }
            }
        });
    RasterImage::new(out_w, out_h, pixels)
}

// sRGB primaries to XYZ, D65.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];
const WHITE_D65: [f64; 3] = [0.95047, 1.0, 1.08883];
const LAB_EPSILON: f64 = 216.0 / 24389.0;
const LAB_KAPPA: f64 = 24389.0 / 27.0;

fn srgb_to_linear(c: u8) -> f64 {
    let v = c as f64 / 255.0;
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    if t > LAB_EPSILON {
        t.cbrt()
    } else {
        (LAB_KAPPA * t + 16.0) / 116.0
    }
}

/// Converts one sRGB triplet to CIELAB (D65 white).
pub fn srgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let lin = rgb.map(srgb_to_linear);
    lab_from_linear(lin)
}

fn lab_from_linear(lin: [f64; 3]) -> [f64; 3] {
    let mut xyz = [0.0; 3];
    for (row, out) in RGB_TO_XYZ.iter().zip(xyz.iter_mut()) {
        *out = row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2];
    }
    let fx = lab_f(xyz[0] / WHITE_D65[0]);
    let fy = lab_f(xyz[1] / WHITE_D65[1]);
    let fz = lab_f(xyz[2] / WHITE_D65[2]);
    let l = (116.0 * fy - 16.0).clamp(0.0, 100.0);
    [l, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// sRGB → linear RGB → XYZ (D65) → CIELAB, per pixel.
pub fn rgb_to_lab(image: &RasterImage) -> LabImage {
    let mut lut = [0.0f64; 256];
    for (i, v) in lut.iter_mut().enumerate() {
        *v = srgb_to_linear(i as u8);
    }
    let mut values = vec![0.0; image.pixels.len()];
    values
        .par_chunks_mut(3 * 4096)
        .zip(image.pixels.par_chunks(3 * 4096))
        .for_each(|(dst, src)| {
            for (d, s) in dst.chunks_exact_mut(3).zip(src.chunks_exact(3)) {
                let lab =
                    lab_from_linear([lut[s[0] as usize], lut[s[1] as usize], lut[s[2] as usize]]);
                d.copy_from_slice(&lab);
            }
        });
    LabImage {
        width: image.width,
        height: image.height,
        values,
    }
}
