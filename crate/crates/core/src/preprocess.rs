//! Tissue detection and tiling on plain raster images: HSV conversion,
//! per-channel Otsu (or fixed) thresholding, mask dilation, and grid tile
//! extraction.
//!
//! Otsu's objective is evaluated in exact integer arithmetic — the
//! between-class variance comparison reduces to comparing
//! `(S0*w1 - S1*w0)^2 / (w0*w1)` across thresholds, which is done with
//! 256-bit cross multiplication — so the argmax never depends on floating
//! point rounding.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// 8-bit RGB image, row-major, three bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::dimension(
                "raster image",
                format!("{} bytes ({width}x{height}x3)", width * height * 3),
                format!("{} bytes", data.len()),
            ));
        }
        Ok(RasterImage { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> (u8, u8, u8)) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                let (r, g, b) = f(x, y);
                data.extend_from_slice(&[r, g, b]);
            }
        }
        RasterImage { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> (u8, u8, u8) {
        let i = (y * self.width + x) * 3;
        (self.data[i], self.data[i + 1], self.data[i + 2])
    }

    /// Copies the `size x size` square whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, size: usize) -> Result<RasterImage> {
        if x + size > self.width || y + size > self.height {
            return Err(Error::parameter(format!(
                "crop ({x}, {y}, {size}) exceeds {}x{} image",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(size * size * 3);
        for row in y..y + size {
            let start = (row * self.width + x) * 3;
            data.extend_from_slice(&self.data[start..start + size * 3]);
        }
        RasterImage::new(size, size, data)
    }
}

/// Hue, saturation, and value planes in [0, 1] (hue in [0, 1)).
#[derive(Debug, Clone, PartialEq)]
pub struct HsvPlanes {
    pub width: usize,
    pub height: usize,
    pub h: Vec<f64>,
    pub s: Vec<f64>,
    pub v: Vec<f64>,
}

/// Standard hexcone RGB -> HSV. Achromatic pixels get `H = 0, S = 0`.
pub fn rgb_to_hsv(image: &RasterImage) -> HsvPlanes {
    let count = image.width * image.height;
    let mut h = Vec::with_capacity(count);
    let mut s = Vec::with_capacity(count);
    let mut v = Vec::with_capacity(count);
    for px in image.data.chunks_exact(3) {
        let r = px[0] as f64 / 255.0;
        let g = px[1] as f64 / 255.0;
        let b = px[2] as f64 / 255.0;
        let max = r.max(g).max(b);
        let min = r.min(g).min(b);
        let delta = max - min;
        v.push(max);
        s.push(if max > 0.0 { delta / max } else { 0.0 });
        if delta == 0.0 {
            h.push(0.0);
        } else {
            let mut sector = if max == r {
                (g - b) / delta
            } else if max == g {
                (b - r) / delta + 2.0
            } else {
                (r - g) / delta + 4.0
            };
            if sector < 0.0 {
                sector += 6.0;
            }
            h.push(sector / 6.0);
        }
    }
    HsvPlanes {
        width: image.width,
        height: image.height,
        h,
        s,
        v,
    }
}

/// 256-bin histogram of values in [0, 1]; bin = floor(v * 256), clamped.
pub fn histogram_256(values: &[f64]) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for &v in values {
        let bin = ((v.clamp(0.0, 1.0) * 256.0) as usize).min(255);
        hist[bin] += 1;
    }
    hist
}

/// 256-bit product of two u128s, as (high, low) limbs.
fn wide_mul(a: u128, b: u128) -> (u128, u128) {
    const MASK: u128 = (1u128 << 64) - 1;
    let (a1, a0) = (a >> 64, a & MASK);
    let (b1, b0) = (b >> 64, b & MASK);
    let lo = a0 * b0;
    let mid1 = a1 * b0;
    let mid2 = a0 * b1;
    let hi = a1 * b1;
    let (mid, mid_carry) = mid1.overflowing_add(mid2);
    let (low, low_carry) = lo.overflowing_add(mid << 64);
    let high = hi + (mid >> 64) + ((mid_carry as u128) << 64) + low_carry as u128;
    (high, low)
}

/// Compares `a/b` with `c/d` (positive denominators) exactly.
fn fraction_cmp(a: u128, b: u128, c: u128, d: u128) -> core::cmp::Ordering {
    wide_mul(a, d).cmp(&wide_mul(c, b))
}

/// Threshold bin maximizing the between-class variance; classes are bins
/// `<= t` versus `> t`. Ties resolve to the lowest bin.
pub fn otsu_threshold(histogram: &[u64; 256]) -> Result<usize> {
    let total: u64 = histogram.iter().sum();
    if total == 0 {
        return Err(Error::parameter("otsu on an empty histogram"));
    }
    let weighted_total: u128 = histogram.iter().enumerate().map(|(i, &c)| i as u128 * c as u128).sum();
    let total = total as u128;
    let mut best: Option<(usize, u128, u128)> = None; // (bin, numerator, denominator)
    let mut w0: u128 = 0;
    let mut s0: u128 = 0;
    for t in 0..255 {
        w0 += histogram[t] as u128;
        s0 += t as u128 * histogram[t] as u128;
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let s1 = weighted_total - s0;
        // between-class variance up to constant scale:
        // (s0*w1 - s1*w0)^2 / (w0*w1)
        let diff = s0 * w1;
        let other = s1 * w0;
        let delta = diff.abs_diff(other);
        let numerator = delta * delta;
        let denominator = w0 * w1;
        let better = match best {
            None => true,
            Some((_, bn, bd)) => fraction_cmp(numerator, denominator, bn, bd) == core::cmp::Ordering::Greater,
        };
        if better {
            best = Some((t, numerator, denominator));
        }
    }
    match best {
        Some((t, _, _)) => Ok(t),
        None => Err(Error::parameter(
            "degenerate histogram: all mass in a single bin, no threshold separates two classes",
        )),
    }
}

/// How channel thresholds are chosen when building the tissue mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdMode {
    /// Per-channel Otsu over the 256-bin histogram.
    Otsu,
    /// A fixed normalized threshold applied to both channels.
    Fixed(f64),
}

/// Binary tissue mask at detection resolution. `scale_factor` relates mask
/// pixels to full-resolution pixels (one mask pixel covers a
/// `scale_factor x scale_factor` square).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TissueMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
    pub scale_factor: usize,
}

/// Default mask-to-full-resolution ratio (detection at 1.25x, tiles at 20x).
pub const DEFAULT_SCALE_FACTOR: usize = 16;

impl TissueMask {
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn coverage(&self) -> f64 {
        self.bits.iter().filter(|b| **b).count() as f64 / self.bits.len() as f64
    }
}

fn dilate(mask: &mut TissueMask, radius: usize) {
    if radius == 0 {
        return;
    }
    let src = mask.bits.clone();
    let (w, h) = (mask.width, mask.height);
    for y in 0..h {
        for x in 0..w {
            if mask.bits[y * w + x] {
                continue;
            }
            let x0 = x.saturating_sub(radius);
            let y0 = y.saturating_sub(radius);
            let x1 = (x + radius).min(w - 1);
            let y1 = (y + radius).min(h - 1);
            'scan: for yy in y0..=y1 {
                for xx in x0..=x1 {
                    if src[yy * w + xx] {
                        mask.bits[y * w + x] = true;
                        break 'scan;
                    }
                }
            }
        }
    }
}

/// Tissue mask: a pixel is kept when both its hue and saturation exceed
/// their channel thresholds; the AND mask is then dilated with a square
/// structuring element of the given radius.
///
/// In Otsu mode "exceeds" compares histogram bins (`bin(v) > t`); in Fixed
/// mode it compares normalized values directly.
pub fn tissue_mask(
    image: &RasterImage,
    dilation_radius: usize,
    mode: ThresholdMode,
    scale_factor: usize,
) -> Result<TissueMask> {
    if scale_factor == 0 {
        return Err(Error::parameter("scale factor must be at least 1"));
    }
    let planes = rgb_to_hsv(image);
    let above: Vec<bool> = match mode {
        ThresholdMode::Otsu => {
            let t_h = otsu_threshold(&histogram_256(&planes.h))?;
            let t_s = otsu_threshold(&histogram_256(&planes.s))?;
            let bin = |v: f64| ((v.clamp(0.0, 1.0) * 256.0) as usize).min(255);
            planes
                .h
                .iter()
                .zip(planes.s.iter())
                .map(|(&h, &s)| bin(h) > t_h && bin(s) > t_s)
                .collect()
        }
        ThresholdMode::Fixed(threshold) => {
            if !(0.0..=1.0).contains(&threshold) {
                return Err(Error::parameter(format!(
                    "fixed threshold {threshold} outside [0, 1]"
                )));
            }
            planes
                .h
                .iter()
                .zip(planes.s.iter())
                .map(|(&h, &s)| h > threshold && s > threshold)
                .collect()
        }
    };
    let mut mask = TissueMask {
        width: image.width,
        height: image.height,
        bits: above,
        scale_factor,
    };
    dilate(&mut mask, dilation_radius);
    Ok(mask)
}

/// Grid tiles kept after coverage filtering. Coordinates are full-resolution
/// top-left corners in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct TileGrid {
    pub tile_size: usize,
    pub coords: Vec<(usize, usize)>,
    pub coverage_threshold: f64,
}

/// Non-overlapping full-resolution grid; a tile survives when the fraction
/// of its area covered by mask pixels reaches the threshold. The overlap
/// arithmetic is integer-exact, so threshold boundaries behave predictably.
pub fn tile_coords(mask: &TissueMask, tile_size: usize, coverage_threshold: f64) -> Result<TileGrid> {
    if tile_size == 0 {
        return Err(Error::parameter("tile size must be at least 1"));
    }
    if !(0.0..=1.0).contains(&coverage_threshold) {
        return Err(Error::parameter(format!(
            "coverage threshold {coverage_threshold} outside [0, 1]"
        )));
    }
    let sf = mask.scale_factor;
    let full_w = mask.width * sf;
    let full_h = mask.height * sf;
    let tile_area = (tile_size * tile_size) as u64;
    let mut coords = Vec::new();
    for row in 0..full_h / tile_size {
        for col in 0..full_w / tile_size {
            let x0 = col * tile_size;
            let y0 = row * tile_size;
            let x1 = x0 + tile_size;
            let y1 = y0 + tile_size;
            let mut covered: u64 = 0;
            for my in y0 / sf..y1.div_ceil(sf) {
                let oy = ((my + 1) * sf).min(y1) - (my * sf).max(y0);
                for mx in x0 / sf..x1.div_ceil(sf) {
                    if mask.get(mx, my) {
                        let ox = ((mx + 1) * sf).min(x1) - (mx * sf).max(x0);
                        covered += (ox * oy) as u64;
                    }
                }
            }
            if covered as f64 / tile_area as f64 >= coverage_threshold {
                coords.push((x0, y0));
            }
        }
    }
    Ok(TileGrid {
        tile_size,
        coords,
        coverage_threshold,
    })
}

/// Box-average downscale by an integer factor; edge remainders are dropped.
/// Stands in for loading a slide at a lower magnification level.
pub fn downscale_rgb(image: &RasterImage, factor: usize) -> Result<RasterImage> {
    if factor == 0 {
        return Err(Error::parameter("downscale factor must be at least 1"));
    }
    if factor == 1 {
        return Ok(image.clone());
    }
    let out_w = image.width / factor;
    let out_h = image.height / factor;
    if out_w == 0 || out_h == 0 {
        return Err(Error::parameter(format!(
            "image {}x{} too small for factor {factor}",
            image.width, image.height
        )));
    }
    let area = (factor * factor) as u32;
    Ok(RasterImage::from_fn(out_w, out_h, |x, y| {
        let mut acc = [0u32; 3];
        for yy in y * factor..(y + 1) * factor {
            for xx in x * factor..(x + 1) * factor {
                let (r, g, b) = image.pixel(xx, yy);
                acc[0] += r as u32;
                acc[1] += g as u32;
                acc[2] += b as u32;
            }
        }
        (
            (acc[0] / area) as u8,
            (acc[1] / area) as u8,
            (acc[2] / area) as u8,
        )
    }))
}
