//! Per-pixel Gaussian noise with uniform or spatially variant strength.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::image::Image;

/// Largest noise standard deviation, in 8-bit units.
pub const SIGMA_LIMIT: f32 = 50.0;

/// Standard deviation per pixel, in 8-bit units.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
}

impl SigmaMap {
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn mean(&self) -> f32 {
        (self.values.iter().map(|v| *v as f64).sum::<f64>() / self.values.len().max(1) as f64) as f32
    }

    pub fn min(&self) -> f32 {
        self.values.iter().copied().fold(f32::INFINITY, f32::min)
    }

    pub fn max(&self) -> f32 {
        self.values.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> SigmaMap {
        let mut values = Vec::with_capacity(height * width);
        for y in top..top + height {
            values.extend_from_slice(&self.values[y * self.width + left..y * self.width + left + width]);
        }
        SigmaMap { height, width, values }
    }
}

pub fn noise_map_uniform(height: usize, width: usize, sigma: f32) -> Result<SigmaMap> {
    if !(0.0..=SIGMA_LIMIT).contains(&sigma) {
        return Err(Error::config(format!("noise sigma {sigma} outside [0, {SIGMA_LIMIT}]")));
    }
    Ok(SigmaMap {
        height,
        width,
        values: vec![sigma; height * width],
    })
}

/// Column ramp from 0 at the left edge to `sigma_max` at the right edge.
pub fn noise_map_linear(height: usize, width: usize, sigma_max: f32) -> Result<SigmaMap> {
    if width < 2 {
        return Err(Error::config("linear noise map needs at least two columns"));
    }
    if !(0.0..=SIGMA_LIMIT).contains(&sigma_max) {
        return Err(Error::config(format!(
            "noise sigma {sigma_max} outside [0, {SIGMA_LIMIT}]"
        )));
    }
    let row: Vec<f32> = (0..width).map(|c| sigma_max * c as f32 / (width - 1) as f32).collect();
    let mut values = Vec::with_capacity(height * width);
    for _ in 0..height {
        values.extend_from_slice(&row);
    }
    Ok(SigmaMap { height, width, values })
}

pub const PEAK_COUNT: usize = 4;

/// Sum of seeded 2-D Gaussian bumps, min-max rescaled to `[0, sigma_max]`.
/// A constant field maps to all zeros.
pub fn noise_map_peaks(height: usize, width: usize, sigma_max: f32, seed: u64) -> Result<SigmaMap> {
    if !(0.0..=SIGMA_LIMIT).contains(&sigma_max) {
        return Err(Error::config(format!(
            "noise sigma {sigma_max} outside [0, {SIGMA_LIMIT}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = height.min(width).max(1) as f32;
    let bumps: Vec<(f32, f32, f32, f32)> = (0..PEAK_COUNT)
        .map(|_| {
            let cy = rng.random_range(0.0..height as f32);
            let cx = rng.random_range(0.0..width as f32);
            let spread = rng.random_range(0.1..0.4) * side;
            let amp = rng.random_range(0.5..1.0);
            (cy, cx, spread, amp)
        })
        .collect();
    Ok(peaks_from_bumps(height, width, sigma_max, &bumps))
}

/// Rescaled bump field from explicit `(center_y, center_x, spread, amplitude)` bumps.
pub fn peaks_from_bumps(height: usize, width: usize, sigma_max: f32, bumps: &[(f32, f32, f32, f32)]) -> SigmaMap {
    let mut values = Vec::with_capacity(height * width);
    for y in 0..height {
        for x in 0..width {
            let v: f32 = bumps
                .iter()
                .map(|(cy, cx, s, a)| {
                    let d2 = (y as f32 - cy).powi(2) + (x as f32 - cx).powi(2);
                    a * (-d2 / (2.0 * s * s)).exp()
                })
                .sum();
            values.push(v);
        }
    }
    let lo = values.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if hi - lo <= f32::EPSILON * hi.abs().max(1.0) {
        values.fill(0.0);
    } else {
        values.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo) * sigma_max);
    }
    SigmaMap { height, width, values }
}

/// Adds `N(0, (σ/255)²)` per pixel, independently per channel, then clamps.
pub fn apply_noise(image: &Image, map: &SigmaMap, seed: u64) -> Result<Image> {
    if (map.height, map.width) != (image.height(), image.width()) {
        return Err(Error::config(format!(
            "noise map {}x{} for {}x{} image",
            map.height,
            map.width,
            image.height(),
            image.width()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = image.clone();
    for c in 0..image.channels() {
        for (v, s) in out.plane_mut(c).iter_mut().zip(&map.values) {
            let n: f32 = rng.sample(StandardNormal);
            *v += n * s / 255.0;
        }
    }
    out.clamp01();
    Ok(out)
}
