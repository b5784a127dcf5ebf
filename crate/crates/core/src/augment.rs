//! Classical training-time augmentations: flips, blurs, additive noise,
//! pixel dropout, hue/saturation shifts and contrast, plus a seeded random
//! pipeline that applies the flips and a random subset of the rest.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::raster::RasterImage;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("invalid augmentation config: {0}")]
    Config(String),
    #[error("unknown augmentation key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
}

pub type Range = (f64, f64);

/// Parameter ranges of the random pipeline.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AugmentConfig {
    pub flip_h_prob: f64,
    pub flip_v_prob: f64,
    pub optional_ops_min: usize,
    pub optional_ops_max: usize,
    pub gaussian_sigma_range: Range,
    /// Radius range for average and median blur (inclusive integers).
    pub blur_radius_range: (usize, usize),
    pub noise_sigma_range: Range,
    pub dropout_rate_range: Range,
    /// Shift range for hue and saturation on the 0–255 byte scale.
    pub hue_sat_range: (i32, i32),
    pub contrast_alpha_range: Range,
    /// Chance that noise, dropout and contrast act per channel.
    pub per_channel_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip_h_prob: 0.5,
            flip_v_prob: 0.5,
            optional_ops_min: 0,
            optional_ops_max: OptionalOp::ALL.len(),
            gaussian_sigma_range: (0.5, 1.5),
            blur_radius_range: (1, 2),
            noise_sigma_range: (2.55, 12.75),
            dropout_rate_range: (0.01, 0.10),
            hue_sat_range: (-20, 20),
            contrast_alpha_range: (0.5, 2.0),
            per_channel_prob: 0.5,
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<(), AugmentError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(AugmentError::Config(format!(
            "{name} = {p} is not a probability"
        )))
    }
}

fn check_range<T: PartialOrd + fmt::Debug>(name: &str, r: (T, T)) -> Result<(), AugmentError> {
    if r.0 <= r.1 {
        Ok(())
    } else {
        Err(AugmentError::Config(format!(
            "{name} {r:?} has lower bound above upper"
        )))
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, AugmentError>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse::<T>()
        .map_err(|e| AugmentError::BadValue {
            key: key.into(),
            value: value.into(),
            reason: e.to_string(),
        })
}

fn parse_pair<T: std::str::FromStr>(key: &str, value: &str) -> Result<(T, T), AugmentError>
where
    T::Err: fmt::Display,
{
    let (a, b) = value
        .split_once(',')
        .ok_or_else(|| AugmentError::BadValue {
            key: key.into(),
            value: value.into(),
            reason: "expected `low,high`".into(),
        })?;
    Ok((parse_num(key, a)?, parse_num(key, b)?))
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), AugmentError> {
        check_prob("flip_h_prob", self.flip_h_prob)?;
        check_prob("flip_v_prob", self.flip_v_prob)?;
        check_prob("per_channel_prob", self.per_channel_prob)?;
        check_range(
            "optional_ops",
            (self.optional_ops_min, self.optional_ops_max),
        )?;
        if self.optional_ops_max > OptionalOp::ALL.len() {
            return Err(AugmentError::Config(format!(
                "optional_ops_max = {} exceeds the {} optional ops",
                self.optional_ops_max,
                OptionalOp::ALL.len()
            )));
        }
        check_range("gaussian_sigma_range", self.gaussian_sigma_range)?;
        if self.gaussian_sigma_range.0 <= 0.0 {
            return Err(AugmentError::Config(
                "gaussian sigma must be positive".into(),
            ));
        }
        check_range("blur_radius_range", self.blur_radius_range)?;
        if self.blur_radius_range.0 < 1 {
            return Err(AugmentError::Config("blur radius must be ≥ 1".into()));
        }
        check_range("noise_sigma_range", self.noise_sigma_range)?;
        if self.noise_sigma_range.0 < 0.0 {
            return Err(AugmentError::Config(
                "noise sigma must be non-negative".into(),
            ));
        }
        check_range("dropout_rate_range", self.dropout_rate_range)?;
        check_prob("dropout_rate_range.0", self.dropout_rate_range.0)?;
        check_prob("dropout_rate_range.1", self.dropout_rate_range.1)?;
        check_range("hue_sat_range", self.hue_sat_range)?;
        check_range("contrast_alpha_range", self.contrast_alpha_range)?;
        if self.contrast_alpha_range.0 < 0.0 {
            return Err(AugmentError::Config(
                "contrast alpha must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Overrides one field from its textual form; ranges are `low,high`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), AugmentError> {
        match key {
            "flip_h_prob" => self.flip_h_prob = parse_num(key, value)?,
            "flip_v_prob" => self.flip_v_prob = parse_num(key, value)?,
            "optional_ops_min" => self.optional_ops_min = parse_num(key, value)?,
            "optional_ops_max" => self.optional_ops_max = parse_num(key, value)?,
            "gaussian_sigma_range" => self.gaussian_sigma_range = parse_pair(key, value)?,
            "blur_radius_range" => self.blur_radius_range = parse_pair(key, value)?,
            "noise_sigma_range" => self.noise_sigma_range = parse_pair(key, value)?,
            "dropout_rate_range" => self.dropout_rate_range = parse_pair(key, value)?,
            "hue_sat_range" => self.hue_sat_range = parse_pair(key, value)?,
            "contrast_alpha_range" => self.contrast_alpha_range = parse_pair(key, value)?,
            "per_channel_prob" => self.per_channel_prob = parse_num(key, value)?,
            other => return Err(AugmentError::UnknownKey(other.into())),
        }
        Ok(())
    }
}

pub fn flip_h(image: &RasterImage) -> RasterImage {
    let (w, h) = image.dimensions();
    RasterImage::from_fn(w, h, |x, y| image.get(w - 1 - x, y))
}

pub fn flip_v(image: &RasterImage) -> RasterImage {
    let (w, h) = image.dimensions();
    let row = w as usize * 3;
    let src = image.pixels();
    let mut pixels = Vec::with_capacity(src.len());
    for y in (0..h as usize).rev() {
        pixels.extend_from_slice(&src[y * row..(y + 1) * row]);
    }
    RasterImage::new(w, h, pixels).expect("same shape")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BlurKind {
    Gaussian,
    Average,
    Median,
}

#[inline]
fn clamp_index(v: i64, len: u32) -> usize {
    v.clamp(0, len as i64 - 1) as usize
}

/// Separable convolution with a symmetric 1-D kernel, clamp-to-edge.
fn convolve_separable(image: &RasterImage, kernel: &[f64]) -> RasterImage {
    let (w, h) = image.dimensions();
    let r = (kernel.len() / 2) as i64;
    let src = image.pixels();
    let mut tmp = vec![0.0f64; src.len()];
    for y in 0..h as usize {
        for x in 0..w as i64 {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, wgt) in kernel.iter().enumerate() {
                    let sx = clamp_index(x + k as i64 - r, w);
                    acc += wgt * src[(y * w as usize + sx) * 3 + c] as f64;
                }
                tmp[(y * w as usize + x as usize) * 3 + c] = acc;
            }
        }
    }
    let mut out = vec![0u8; src.len()];
    for y in 0..h as i64 {
        for x in 0..w as usize {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, wgt) in kernel.iter().enumerate() {
                    let sy = clamp_index(y + k as i64 - r, h);
                    acc += wgt * tmp[(sy * w as usize + x) * 3 + c];
                }
                out[(y as usize * w as usize + x) * 3 + c] = acc.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    RasterImage::new(w, h, out).expect("same shape")
}

fn gaussian_kernel(radius: usize, sigma: f64) -> Vec<f64> {
    let r = radius as i64;
    let raw: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

fn box_blur(image: &RasterImage, radius: usize) -> RasterImage {
    let (w, h) = image.dimensions();
    let r = radius as i64;
    let area = ((2 * r + 1) * (2 * r + 1)) as u32;
    let src = image.pixels();
    let mut out = vec![0u8; src.len()];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut sums = [0u32; 3];
            for dy in -r..=r {
                let sy = clamp_index(y + dy, h);
                for dx in -r..=r {
                    let sx = clamp_index(x + dx, w);
                    let i = (sy * w as usize + sx) * 3;
                    for c in 0..3 {
                        sums[c] += src[i + c] as u32;
                    }
                }
            }
            let o = (y as usize * w as usize + x as usize) * 3;
            for c in 0..3 {
                // round half up in integer arithmetic
                out[o + c] = ((2 * sums[c] + area) / (2 * area)) as u8;
            }
        }
    }
    RasterImage::new(w, h, out).expect("same shape")
}

fn median_blur(image: &RasterImage, radius: usize) -> RasterImage {
    let (w, h) = image.dimensions();
    let r = radius as i64;
    let src = image.pixels();
    let mut out = vec![0u8; src.len()];
    let mut window = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let o = (y as usize * w as usize + x as usize) * 3;
            for c in 0..3 {
                window.clear();
                for dy in -r..=r {
                    let sy = clamp_index(y + dy, h);
                    for dx in -r..=r {
                        let sx = clamp_index(x + dx, w);
                        window.push(src[(sy * w as usize + sx) * 3 + c]);
                    }
                }
                let mid = window.len() / 2;
                out[o + c] = *window.select_nth_unstable(mid).1;
            }
        }
    }
    RasterImage::new(w, h, out).expect("same shape")
}

/// Blurs with a `(2r+1)`-wide window and clamp-to-edge borders. `sigma` is
/// used only by the Gaussian kernel.
pub fn blur(image: &RasterImage, kind: BlurKind, radius: usize, sigma: f64) -> RasterImage {
    let radius = radius.max(1);
    match kind {
        BlurKind::Gaussian => convolve_separable(image, &gaussian_kernel(radius, sigma)),
        BlurKind::Average => box_blur(image, radius),
        BlurKind::Median => median_blur(image, radius),
    }
}

/// Gaussian blur truncated at 3σ.
pub fn gaussian_blur(image: &RasterImage, sigma: f64) -> RasterImage {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    blur(image, BlurKind::Gaussian, radius, sigma)
}

#[inline]
fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Adds `N(0, σ²)` noise, one draw per channel sample or one shared draw per
/// pixel.
pub fn add_gaussian_noise<R: Rng + ?Sized>(
    image: &RasterImage,
    sigma: f64,
    per_channel: bool,
    rng: &mut R,
) -> RasterImage {
    if sigma <= 0.0 {
        return image.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("finite positive sigma");
    let mut out = image.clone();
    for px in out.pixels_mut().chunks_exact_mut(3) {
        if per_channel {
            for v in px.iter_mut() {
                *v = to_u8(*v as f64 + normal.sample(rng));
            }
        } else {
            let n = normal.sample(rng);
            for v in px.iter_mut() {
                *v = to_u8(*v as f64 + n);
            }
        }
    }
    out
}

/// Zeroes each pixel (or each channel sample) with probability `rate`.
pub fn pixel_dropout<R: Rng + ?Sized>(
    image: &RasterImage,
    rate: f64,
    per_channel: bool,
    rng: &mut R,
) -> RasterImage {
    let rate = rate.clamp(0.0, 1.0);
    if rate == 0.0 {
        return image.clone();
    }
    let mut out = image.clone();
    for px in out.pixels_mut().chunks_exact_mut(3) {
        if per_channel {
            for v in px.iter_mut() {
                if rng.random_bool(rate) {
                    *v = 0;
                }
            }
        } else if rng.random_bool(rate) {
            px.fill(0);
        }
    }
    out
}

/// RGB → (H, S, V) with H on a wrapping `[0, 256)` scale and S, V in
/// `[0, 255]`.
pub fn rgb_to_hsv_bytes(rgb: [u8; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(f64::from);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max == 0.0 { 0.0 } else { delta / max * 255.0 };
    let hue_deg = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    [hue_deg / 360.0 * 256.0, s, max]
}

pub fn hsv_bytes_to_rgb(hsv: [f64; 3]) -> [u8; 3] {
    let hue_deg = hsv[0].rem_euclid(256.0) / 256.0 * 360.0;
    let s = (hsv[1] / 255.0).clamp(0.0, 1.0);
    let v = hsv[2];
    let c = v * s;
    let hp = hue_deg / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [to_u8(r + m), to_u8(g + m), to_u8(b + m)]
}

/// Adds `dh` to hue (wrapping mod 256) and `ds` to saturation (clamped).
pub fn hue_saturation_shift(image: &RasterImage, dh: i32, ds: i32) -> RasterImage {
    let mut out = image.clone();
    if dh.rem_euclid(256) == 0 && ds == 0 {
        return out;
    }
    for px in out.pixels_mut().chunks_exact_mut(3) {
        let [h, s, v] = rgb_to_hsv_bytes([px[0], px[1], px[2]]);
        if s == 0.0 && ds <= 0 {
            continue;
        }
        let rgb = hsv_bytes_to_rgb([
            (h + dh as f64).rem_euclid(256.0),
            (s + ds as f64).clamp(0.0, 255.0),
            v,
        ]);
        px.copy_from_slice(&rgb);
    }
    out
}

/// `v' = clamp(round(127 + α·(v − 127)))` with one α per channel.
pub fn contrast_per_channel(image: &RasterImage, alphas: [f64; 3]) -> RasterImage {
    let mut out = image.clone();
    for px in out.pixels_mut().chunks_exact_mut(3) {
        for (v, a) in px.iter_mut().zip(alphas) {
            *v = to_u8(127.0 + a * (*v as f64 - 127.0));
        }
    }
    out
}

/// `v' = clamp(round(127 + α·(v − 127)))` on every channel.
pub fn contrast(image: &RasterImage, alpha: f64) -> RasterImage {
    contrast_per_channel(image, [alpha; 3])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionalOp {
    Blur,
    Noise,
    Dropout,
    HueSaturation,
    Contrast,
}

impl OptionalOp {
    pub const ALL: [OptionalOp; 5] = [
        OptionalOp::Blur,
        OptionalOp::Noise,
        OptionalOp::Dropout,
        OptionalOp::HueSaturation,
        OptionalOp::Contrast,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptionalOp::Blur => "blur",
            OptionalOp::Noise => "noise",
            OptionalOp::Dropout => "dropout",
            OptionalOp::HueSaturation => "hue_saturation",
            OptionalOp::Contrast => "contrast",
        }
    }
}

/// What the random pipeline did to one image.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AppliedOps {
    pub flip_h: bool,
    pub flip_v: bool,
    pub ops: Vec<OptionalOp>,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): Range) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Applies each flip with its probability, then `n ~ U{min..max}` distinct
/// optional ops in random order with parameters drawn from `config`.
pub fn random_pipeline<R: Rng + ?Sized>(
    image: &RasterImage,
    config: &AugmentConfig,
    rng: &mut R,
) -> (RasterImage, AppliedOps) {
    let mut applied = AppliedOps::default();
    let mut out = image.clone();
    if rng.random_bool(config.flip_h_prob) {
        out = flip_h(&out);
        applied.flip_h = true;
    }
    if rng.random_bool(config.flip_v_prob) {
        out = flip_v(&out);
        applied.flip_v = true;
    }
    let n = rng.random_range(config.optional_ops_min..=config.optional_ops_max);
    let chosen = rand::seq::index::sample(rng, OptionalOp::ALL.len(), n);
    for i in chosen.iter() {
        let op = OptionalOp::ALL[i];
        out = match op {
            OptionalOp::Blur => match rng.random_range(0..3) {
                0 => gaussian_blur(&out, uniform(rng, config.gaussian_sigma_range)),
                1 => {
                    let (lo, hi) = config.blur_radius_range;
                    blur(&out, BlurKind::Average, rng.random_range(lo..=hi), 0.0)
                }
                _ => {
                    let (lo, hi) = config.blur_radius_range;
                    blur(&out, BlurKind::Median, rng.random_range(lo..=hi), 0.0)
                }
            },
            OptionalOp::Noise => {
                let sigma = uniform(rng, config.noise_sigma_range);
                let per_channel = rng.random_bool(config.per_channel_prob);
                add_gaussian_noise(&out, sigma, per_channel, rng)
            }
            OptionalOp::Dropout => {
                let rate = uniform(rng, config.dropout_rate_range);
                let per_channel = rng.random_bool(config.per_channel_prob);
                pixel_dropout(&out, rate, per_channel, rng)
            }
            OptionalOp::HueSaturation => {
                let (lo, hi) = config.hue_sat_range;
                let dh = rng.random_range(lo..=hi);
                let ds = rng.random_range(lo..=hi);
                hue_saturation_shift(&out, dh, ds)
            }
            OptionalOp::Contrast => {
                let per_channel = rng.random_bool(config.per_channel_prob);
                let range = config.contrast_alpha_range;
                let alphas = if per_channel {
                    [
                        uniform(rng, range),
                        uniform(rng, range),
                        uniform(rng, range),
                    ]
                } else {
                    [uniform(rng, range); 3]
                };
                contrast_per_channel(&out, alphas)
            }
        };
        applied.ops.push(op);
    }
    (out, applied)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use proptest::prelude::*;

    fn impulse(size: u32, at: (u32, u32)) -> RasterImage {
        RasterImage::from_fn(
            size,
            size,
            |x, y| if (x, y) == at { [255; 3] } else { [0; 3] },
        )
    }

    #[test]
    fn flips() {
        let img = RasterImage::new(2, 1, vec![1, 2, 3, 4, 5, 6]).unwrap();
        assert_eq!(flip_h(&img).pixels(), &[4, 5, 6, 1, 2, 3]);
        assert_eq!(flip_v(&img), img);
        let sym = RasterImage::from_fn(5, 4, |x, _| [(x as i32 - 2).unsigned_abs() as u8; 3]);
        assert_eq!(flip_h(&sym), sym);
    }

    #[test]
    fn blur_keeps_constants() {
        let img = RasterImage::filled(9, 7, [40, 90, 200]);
        for kind in [BlurKind::Gaussian, BlurKind::Average, BlurKind::Median] {
            assert_eq!(blur(&img, kind, 2, 1.0), img);
        }
    }

    #[test]
    fn median_removes_impulse() {
        let out = blur(&impulse(7, (3, 3)), BlurKind::Median, 1, 0.0);
        assert!(out.pixels().iter().all(|&v| v == 0));
    }

    #[test]
    fn average_spreads_impulse() {
        // round(255 / 9) = 28 over the 3×3 block, 0 elsewhere.
        let out = blur(&impulse(9, (4, 4)), BlurKind::Average, 1, 0.0);
        for y in 0..9 {
            for x in 0..9 {
                let want = if (3..=5).contains(&x) && (3..=5).contains(&y) {
                    28
                } else {
                    0
                };
                assert_eq!(out.get(x, y), [want; 3], "({x},{y})");
            }
        }
    }

    #[test]
    fn gaussian_kernel_is_normalized() {
        let k = gaussian_kernel(3, 1.0);
        assert_eq!(k.len(), 7);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(k[3] > k[2] && k[2] > k[1]);
        // Impulse response stays centered and mass-preserving (±rounding).
        let out = gaussian_blur(&impulse(11, (5, 5)), 1.0);
        let total: u32 = out.pixels().iter().step_by(3).map(|&v| v as u32).sum();
        assert!((total as i32 - 255).abs() <= 12, "{total}");
        assert_eq!(out, flip_h(&out));
    }

    #[test]
    fn noise_identity_and_shared_draw() {
        let img = RasterImage::filled(16, 16, [128, 100, 60]);
        let mut rng = rng_from_seed(1);
        assert_eq!(add_gaussian_noise(&img, 0.0, true, &mut rng), img);
        let out = add_gaussian_noise(&img, 5.0, false, &mut rng);
        for (a, b) in out.pixels().chunks(3).zip(img.pixels().chunks(3)) {
            let d: Vec<i32> = (0..3).map(|c| a[c] as i32 - b[c] as i32).collect();
            assert!(d[0] == d[1] && d[1] == d[2]);
        }
    }

    #[test]
    fn noise_mean_is_near_zero() {
        // CLT: |mean| < 3σ/√N over 256² samples of one channel.
        let img = RasterImage::filled(256, 256, [128; 3]);
        let out = add_gaussian_noise(&img, 10.0, true, &mut rng_from_seed(77));
        let n = 256.0 * 256.0;
        let mean: f64 = out
            .pixels()
            .iter()
            .step_by(3)
            .map(|&v| v as f64 - 128.0)
            .sum::<f64>()
            / n;
        assert!(mean.abs() < 3.0 * 10.0 / n.sqrt(), "{mean}");
    }

    #[test]
    fn dropout_extremes() {
        let img = RasterImage::filled(8, 8, [9, 8, 7]);
        let mut rng = rng_from_seed(2);
        assert_eq!(pixel_dropout(&img, 0.0, true, &mut rng), img);
        assert!(pixel_dropout(&img, 1.0, false, &mut rng)
            .pixels()
            .iter()
            .all(|&v| v == 0));
    }

    #[test]
    fn hue_shift_cases() {
        let img = RasterImage::from_fn(16, 16, |x, y| [(x * 16) as u8, (y * 16) as u8, 77]);
        assert_eq!(hue_saturation_shift(&img, 0, 0), img);
        assert_eq!(hue_saturation_shift(&img, 256, 0), img);
        // The HSV round trip alone is exact after rounding.
        for px in img.pixels().chunks(3) {
            let rgb = [px[0], px[1], px[2]];
            assert_eq!(hsv_bytes_to_rgb(rgb_to_hsv_bytes(rgb)), rgb);
        }
        let gray = RasterImage::filled(3, 3, [90, 90, 90]);
        assert_eq!(hue_saturation_shift(&gray, 17, 0), gray);
        let red = RasterImage::filled(1, 1, [255, 0, 0]);
        let shifted = hue_saturation_shift(&red, 85, 0).get(0, 0);
        for (got, want) in shifted.iter().zip([0, 255, 0]) {
            assert!((*got as i32 - want).abs() <= 2, "{shifted:?}");
        }
    }

    #[test]
    fn contrast_formula() {
        let img = RasterImage::new(1, 1, vec![127, 200, 0]).unwrap();
        assert_eq!(contrast(&img, 1.0), img);
        assert_eq!(contrast(&img, 2.0).get(0, 0), [127, 255, 0]);
        assert_eq!(contrast(&img, 0.5).get(0, 0), [127, 164, 64]);
    }

    #[test]
    fn pipeline_identity_and_determinism() {
        let img = RasterImage::from_fn(20, 10, |x, y| [x as u8 * 10, y as u8 * 20, 50]);
        let cfg = AugmentConfig {
            flip_h_prob: 0.0,
            flip_v_prob: 0.0,
            optional_ops_max: 0,
            ..AugmentConfig::default()
        };
        let (out, applied) = random_pipeline(&img, &cfg, &mut rng_from_seed(3));
        assert_eq!(out, img);
        assert_eq!(applied, AppliedOps::default());

        let cfg = AugmentConfig::default();
        let a = random_pipeline(&img, &cfg, &mut rng_from_seed(4));
        let b = random_pipeline(&img, &cfg, &mut rng_from_seed(4));
        assert_eq!(a, b);
    }

    #[test]
    fn pipeline_ops_are_distinct() {
        let img = RasterImage::filled(6, 6, [10, 120, 240]);
        let cfg = AugmentConfig {
            optional_ops_min: 5,
            ..AugmentConfig::default()
        };
        let (_, applied) = random_pipeline(&img, &cfg, &mut rng_from_seed(8));
        let mut ops = applied.ops.clone();
        ops.sort();
        assert_eq!(ops, OptionalOp::ALL.to_vec());
    }

    #[test]
    fn config_validation_and_overrides() {
        let mut cfg = AugmentConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.set("contrast_alpha_range", "0.8, 1.2").unwrap();
        assert_eq!(cfg.contrast_alpha_range, (0.8, 1.2));
        cfg.set("optional_ops_max", "2").unwrap();
        assert_eq!(cfg.optional_ops_max, 2);
        assert!(matches!(
            cfg.set("bogus", "1"),
            Err(AugmentError::UnknownKey(_))
        ));
        assert!(cfg.set("flip_h_prob", "abc").is_err());
        cfg.optional_ops_max = 6;
        assert!(cfg.validate().is_err());
        cfg.optional_ops_max = 2;
        cfg.flip_v_prob = 1.5;
        assert!(cfg.validate().is_err());
    }

    fn arb_image() -> impl Strategy<Value = RasterImage> {
        (1u32..10, 1u32..10).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<u8>(), (w * h * 3) as usize)
                .prop_map(move |px| RasterImage::new(w, h, px).unwrap())
        })
    }

    proptest! {
        #[test]
        fn flips_are_commuting_involutions(img in arb_image()) {
            prop_assert_eq!(flip_h(&flip_h(&img)), img.clone());
            prop_assert_eq!(flip_v(&flip_v(&img)), img.clone());
            prop_assert_eq!(flip_h(&flip_v(&img)), flip_v(&flip_h(&img)));
        }

        #[test]
        fn contrast_fixes_127(alpha in 0.5f64..=2.0) {
            let img = RasterImage::filled(2, 2, [127; 3]);
            prop_assert_eq!(contrast(&img, alpha), img);
        }

        #[test]
        fn pipeline_keeps_shape(img in arb_image(), seed in any::<u64>()) {
            let (out, _) = random_pipeline(&img, &AugmentConfig::default(), &mut rng_from_seed(seed));
            prop_assert_eq!(out.dimensions(), img.dimensions());
        }
    }
}
