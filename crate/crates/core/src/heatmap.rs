//! Binary PGM/PPM rendering of tile maps.
//!
//! The map is row-major with row 0 at the bottom of the die, so rows are
//! written top-down in reverse. Values map to gray levels by
//! `round(255 · clamp((v − lo) / (hi − lo), 0, 1))`, or 128 when `hi == lo`.
//! The false-colour map interpolates linearly through five stops:
//! blue (0,0,255), cyan (0,255,255), green (0,255,0), yellow (255,255,0)
//! and red (255,0,0), at gray levels 0, 63.75, 127.5, 191.25 and 255.

use crate::error::{Error, Result};

pub const STOPS: [[u8; 3]; 5] = [[0, 0, 255], [0, 255, 255], [0, 255, 0], [255, 255, 0], [255, 0, 0]];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatmapOptions {
    pub lo: f64,
    pub hi: f64,
    /// Pixels per tile side.
    pub scale: usize,
}

impl Default for HeatmapOptions {
    fn default() -> Self {
        HeatmapOptions {
            lo: 0.0,
            hi: 1.0,
            scale: 8,
        }
    }
}

impl HeatmapOptions {
    /// Range taken from the data instead of `[0, 1]`.
    pub fn auto(values: &[f64], scale: usize) -> Self {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        HeatmapOptions { lo, hi, scale }
    }
}

pub fn gray_level(v: f64, lo: f64, hi: f64) -> u8 {
    if hi <= lo {
        return 128;
    }
    (255.0 * ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).round() as u8
}

pub fn false_color(level: u8) -> [u8; 3] {
    let p = 4 * level as u32;
    let k = (p / 255).min(3) as usize;
    let f = p - 255 * k as u32;
    let (a, b) = (STOPS[k], STOPS[k + 1]);
    let mut out = [0u8; 3];
    for i in 0..3 {
        out[i] = ((a[i] as u32 * (255 - f) + b[i] as u32 * f + 127) / 255) as u8;
    }
    out
}

fn levels(map: &[f64], m: usize, n: usize, opts: &HeatmapOptions) -> Result<Vec<u8>> {
    if m == 0 || n == 0 || map.len() != m * n {
        return Err(Error::InvalidArgument(format!(
            "map of {} values does not match {m}x{n}",
            map.len()
        )));
    }
    if opts.scale == 0 {
        return Err(Error::InvalidArgument("heatmap scale must be >= 1".into()));
    }
    if map.iter().any(|v| !v.is_finite()) || !opts.lo.is_finite() || !opts.hi.is_finite() {
        return Err(Error::NonFinite("heatmap input must be finite".into()));
    }
    let s = opts.scale;
    let mut px = Vec::with_capacity(m * n * s * s);
    for row in (0..n).rev() {
        let line: Vec<u8> = (0..m)
            .flat_map(|c| std::iter::repeat_n(gray_level(map[row * m + c], opts.lo, opts.hi), s))
            .collect();
        for _ in 0..s {
            px.extend_from_slice(&line);
        }
    }
    Ok(px)
}

/// 8-bit grayscale binary PGM (`P5`).
pub fn render_pgm(map: &[f64], m: usize, n: usize, opts: &HeatmapOptions) -> Result<Vec<u8>> {
    let px = levels(map, m, n, opts)?;
    let mut out = format!("P5\n{} {}\n255\n", m * opts.scale, n * opts.scale).into_bytes();
    out.extend_from_slice(&px);
    Ok(out)
}

/// False-colour binary PPM (`P6`).
pub fn render_ppm(map: &[f64], m: usize, n: usize, opts: &HeatmapOptions) -> Result<Vec<u8>> {
    let px = levels(map, m, n, opts)?;
    let mut out = format!("P6\n{} {}\n255\n", m * opts.scale, n * opts.scale).into_bytes();
    for g in px {
        out.extend_from_slice(&false_color(g));
    }
    Ok(out)
}
