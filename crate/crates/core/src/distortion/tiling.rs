//! Overlapping patch extraction and averaging merge.

use crate::error::{Error, Result};
use crate::image::Image;

pub const PATCH: usize = 63;
pub const STRIDE: usize = 53;

/// Stride scaled from 53/63 for non-default patch sizes.
pub fn default_stride(patch: usize) -> usize {
    (patch * STRIDE / PATCH).max(1)
}

/// Anchors `0, s, 2s, …` with the last clamped to `dim − patch`.
pub fn anchors(dim: usize, patch: usize, stride: usize) -> Vec<usize> {
    if dim <= patch {
        return vec![0];
    }
    let last = dim - patch;
    let mut out: Vec<usize> = (0..).map(|i| i * stride).take_while(|a| *a < last).collect();
    out.push(last);
    out
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    pub patch: usize,
    pub stride: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    /// Size of the (possibly padded) canvas the anchors refer to.
    pub height: usize,
    pub width: usize,
}

impl PatchGrid {
    pub fn new(height: usize, width: usize, patch: usize, stride: usize) -> Result<Self> {
        if patch == 0 || stride == 0 || stride > patch {
            return Err(Error::config(format!("patch {patch} with stride {stride} leaves gaps")));
        }
        if height < patch || width < patch {
            return Err(Error::config(format!(
                "{height}x{width} canvas smaller than patch {patch}"
            )));
        }
        Ok(PatchGrid {
            patch,
            stride,
            rows: anchors(height, patch, stride),
            cols: anchors(width, patch, stride),
            height,
            width,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Anchors in row-major order.
    pub fn positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .flat_map(move |r| self.cols.iter().map(move |c| (*r, *c)))
    }
}

/// Tiles `image` into 63×63 regions at stride 53, reflect-padding small inputs.
pub fn extract_patches(image: &Image) -> Result<(PatchGrid, Vec<Image>)> {
    extract_patches_with(image, PATCH, STRIDE)
}

pub fn extract_patches_with(image: &Image, patch: usize, stride: usize) -> Result<(PatchGrid, Vec<Image>)> {
    let canvas = image.reflect_pad_to(patch);
    let grid = PatchGrid::new(canvas.height(), canvas.width(), patch, stride)?;
    let patches = grid
        .positions()
        .map(|(r, c)| canvas.crop(r, c, patch, patch))
        .collect::<Result<Vec<_>>>()?;
    Ok((grid, patches))
}

/// Averages overlapping patches onto the grid's canvas, then crops to `(height, width)`.
pub fn merge_patches(patches: &[Image], grid: &PatchGrid, height: usize, width: usize) -> Result<Image> {
    if patches.len() != grid.len() {
        return Err(Error::config(format!(
            "{} patches for a grid of {}",
            patches.len(),
            grid.len()
        )));
    }
    if height > grid.height || width > grid.width {
        return Err(Error::config(format!(
            "output {height}x{width} larger than canvas {}x{}",
            grid.height, grid.width
        )));
    }
    let channels = patches.first().map(Image::channels).unwrap_or(1);
    let (gh, gw) = (grid.height, grid.width);
    let mut sum = vec![0.0f64; channels * gh * gw];
    let mut count = vec![0u32; gh * gw];
    for (p, (r, c)) in patches.iter().zip(grid.positions()) {
        if p.dims() != (channels, grid.patch, grid.patch) {
            return Err(Error::config(format!("patch {:?} does not match the grid", p.dims())));
        }
        for y in 0..grid.patch {
            for x in 0..grid.patch {
                count[(r + y) * gw + c + x] += 1;
                for ch in 0..channels {
                    sum[(ch * gh + r + y) * gw + c + x] += p.get(ch, y, x) as f64;
                }
            }
        }
    }
    Ok(Image::from_fn(channels, height, width, |ch, y, x| {
        (sum[(ch * gh + y) * gw + x] / count[y * gw + x] as f64) as f32
    }))
}
