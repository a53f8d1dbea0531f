//! JPEG-style block-DCT quantisation without entropy coding.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::image::Image;

pub const BLOCK: usize = 8;

/// Standard JPEG luminance quantisation table, row-major.
pub const LUMA_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Quantisation steps for `quality` in `[10, 100]`.
pub fn quant_table(quality: u32) -> Result<[f32; 64]> {
    if !(10..=100).contains(&quality) {
        return Err(Error::config(format!("quality {quality} outside [10, 100]")));
    }
    let q = quality as f32;
    let scale = if q < 50.0 { 50.0 / q } else { 2.0 - q / 50.0 };
    let mut out = [0.0f32; 64];
    for (o, t) in out.iter_mut().zip(LUMA_TABLE) {
        *o = (t as f32 * scale + 0.5).floor().max(1.0);
    }
    Ok(out)
}

fn basis() -> [[f64; BLOCK]; BLOCK] {
    let mut b = [[0.0; BLOCK]; BLOCK];
    for (u, row) in b.iter_mut().enumerate() {
        let a = if u == 0 {
            (1.0 / BLOCK as f64).sqrt()
        } else {
            (2.0 / BLOCK as f64).sqrt()
        };
        for (x, v) in row.iter_mut().enumerate() {
            *v = a * ((2 * x + 1) as f64 * u as f64 * PI / (2 * BLOCK) as f64).cos();
        }
    }
    b
}

/// Orthonormal 2-D DCT-II of one block.
pub fn dct8(block: &[f64; 64]) -> [f64; 64] {
    let b = basis();
    let mut tmp = [0.0; 64];
    for y in 0..BLOCK {
        for u in 0..BLOCK {
            tmp[y * BLOCK + u] = (0..BLOCK).map(|x| b[u][x] * block[y * BLOCK + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for v in 0..BLOCK {
        for u in 0..BLOCK {
            out[v * BLOCK + u] = (0..BLOCK).map(|y| b[v][y] * tmp[y * BLOCK + u]).sum();
        }
    }
    out
}

pub fn idct8(coef: &[f64; 64]) -> [f64; 64] {
    let b = basis();
    let mut tmp = [0.0; 64];
    for v in 0..BLOCK {
        for x in 0..BLOCK {
            tmp[v * BLOCK + x] = (0..BLOCK).map(|u| b[u][x] * coef[v * BLOCK + u]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..BLOCK {
        for x in 0..BLOCK {
            out[y * BLOCK + x] = (0..BLOCK).map(|v| b[v][y] * tmp[v * BLOCK + x]).sum();
        }
    }
    out
}

/// Quantises every 8×8 block of every channel on the 8-bit scale.
/// Partial edge blocks are padded by edge replication and cropped back.
pub fn dct_compress(image: &Image, quality: u32) -> Result<Image> {
    let table = quant_table(quality)?;
    let (channels, h, w) = image.dims();
    let mut out = image.clone();
    for c in 0..channels {
        let src = image.plane(c);
        let dst = out.plane_mut(c);
        for by in (0..h).step_by(BLOCK) {
            for bx in (0..w).step_by(BLOCK) {
                let mut block = [0.0f64; 64];
                for y in 0..BLOCK {
                    for x in 0..BLOCK {
                        let (yy, xx) = ((by + y).min(h - 1), (bx + x).min(w - 1));
                        block[y * BLOCK + x] = src[yy * w + xx] as f64 * 255.0 - 128.0;
                    }
                }
                let mut coef = dct8(&block);
                for (k, q) in coef.iter_mut().zip(table) {
                    *k = (*k / q as f64).round() * q as f64;
                }
                let rec = idct8(&coef);
                for y in 0..BLOCK.min(h - by) {
                    for x in 0..BLOCK.min(w - bx) {
                        dst[(by + y) * w + bx + x] = ((rec[y * BLOCK + x] + 128.0) / 255.0) as f32;
                    }
                }
            }
        }
    }
    out.clamp01();
    Ok(out)
}
