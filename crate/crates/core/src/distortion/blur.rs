//! Separable Gaussian blur with mirrored borders.

use crate::error::{Error, Result};
use crate::image::{reflect_index, Image};

/// Normalised taps for offsets `−r..=r`, `r = ceil(3σ)`.
pub fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma as f64 * sigma as f64)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter().map(|t| (t / sum) as f32).collect()
}

pub fn gaussian_blur(image: &Image, sigma: f32) -> Result<Image> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::config(format!("blur sigma must be non-negative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let (channels, h, w) = image.dims();
    let mut out = image.clone();
    let mut tmp = vec![0.0f32; h * w];
    for c in 0..channels {
        let src = image.plane(c);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0f32;
                for (k, t) in kernel.iter().enumerate() {
                    let xx = reflect_index(x as isize + k as isize - r, w);
                    acc += t * src[y * w + xx];
                }
                tmp[y * w + x] = acc;
            }
        }
        let dst = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0f32;
                for (k, t) in kernel.iter().enumerate() {
                    let yy = reflect_index(y as isize + k as isize - r, h);
                    acc += t * tmp[yy * w + x];
                }
                dst[y * w + x] = acc;
            }
        }
    }
    out.clamp01();
    Ok(out)
}
