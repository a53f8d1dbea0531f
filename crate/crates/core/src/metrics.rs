//! PSNR, SSIM, tiled inference and per-region compute statistics.

use std::fmt::Write as _;

use crate::distortion::tiling::{default_stride, extract_patches_with, merge_patches};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::model::{Model, RouteMode};

/// Reported PSNR when the images are identical.
pub const PSNR_CAP: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn same_dims(a: &Image, b: &Image) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::config(format!("image {:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

pub fn mse_images(a: &Image, b: &Image) -> Result<f64> {
    same_dims(a, b)?;
    let n = a.data().len().max(1) as f64;
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
        .sum::<f64>()
        / n)
}

/// Peak signal-to-noise ratio for unit peak, capped at 99 dB.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let mse = mse_images(a, b)?;
    Ok(if mse == 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    })
}

fn ssim_kernel() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Valid-region separable filtering of an `h × w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = k.iter().enumerate().map(|(i, t)| t * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, t)| t * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity on luma, Gaussian 11×11 window with σ = 1.5.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    same_dims(a, b)?;
    let (_, h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::config(format!(
            "{h}x{w} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    let k = ssim_kernel();
    let la: Vec<f64> = a.luma().iter().map(|v| *v as f64).collect();
    let lb: Vec<f64> = b.luma().iter().map(|v| *v as f64).collect();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<f64>>();
    let mu_a = filter_valid(&la, h, w, &k);
    let mu_b = filter_valid(&lb, h, w, &k);
    let e_aa = filter_valid(&prod(&la, &la), h, w, &k);
    let e_bb = filter_valid(&prod(&lb, &lb), h, w, &k);
    let e_ab = filter_valid(&prod(&la, &lb), h, w, &k);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total +=
            ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2)) / ((ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2));
    }
    Ok(total / mu_a.len() as f64)
}

/// Path selection used for tiled inference.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Policy {
    Argmax,
    Forced(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionRoute {
    pub top: usize,
    pub left: usize,
    pub actions: Vec<usize>,
    pub flops: u64,
}

/// Tiles, restores every region independently and merges with averaging.
pub fn restore_image(model: &Model, image: &Image, policy: &Policy) -> Result<(Image, Vec<RegionRoute>)> {
    let patch = model.config().patch;
    let (grid, patches) = extract_patches_with(image, patch, default_stride(patch))?;
    let mut restored = Vec::with_capacity(patches.len());
    let mut routes = Vec::with_capacity(patches.len());
    for (p, (top, left)) in patches.iter().zip(grid.positions()) {
        let mode = match policy {
            Policy::Argmax => RouteMode::Test,
            Policy::Forced(route) => RouteMode::Forced(route),
        };
        let (out, actions, _) = model.restore_patch(&p.to_tensor(), mode)?;
        let flops = model.count_flops(&actions)?.total();
        restored.push(Image::from_tensor(&out)?);
        routes.push(RegionRoute {
            top,
            left,
            actions,
            flops,
        });
    }
    let mut merged = merge_patches(&restored, &grid, image.height(), image.width())?;
    merged.clamp01();
    Ok((merged, routes))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageReport {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
    pub input_psnr: f64,
    pub mean_flops: f64,
    pub n_regions: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub psnr: f64,
    pub ssim: f64,
    pub input_psnr: f64,
    pub mean_flops: f64,
    /// `route_histogram[block][action]` region counts.
    pub route_histogram: Vec<Vec<usize>>,
    pub n_regions: usize,
    pub images: Vec<ImageReport>,
}

pub const REPORT_HEADER: &str = "image,psnr,ssim,input_psnr,mean_flops,n_regions";

impl EvalReport {
    /// One row per image and a closing `mean` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(REPORT_HEADER);
        s.push('\n');
        for r in &self.images {
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{:.6},{:.1},{}",
                r.name, r.psnr, r.ssim, r.input_psnr, r.mean_flops, r.n_regions
            );
        }
        let _ = writeln!(
            s,
            "mean,{:.6},{:.6},{:.6},{:.1},{}",
            self.psnr, self.ssim, self.input_psnr, self.mean_flops, self.n_regions
        );
        s
    }

    /// Brace-delimited summary with fields in the order psnr, ssim,
    /// input_psnr, mean_flops, n_regions, route_histogram.
    pub fn to_text(&self) -> String {
        let hist: Vec<String> = self
            .route_histogram
            .iter()
            .map(|row| format!("[{}]", row.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", ")))
            .collect();
        format!(
            "{{\n  \"psnr\": {:.6},\n  \"ssim\": {:.6},\n  \"input_psnr\": {:.6},\n  \"mean_flops\": {:.1},\n  \"n_regions\": {},\n  \"route_histogram\": [{}]\n}}\n",
            self.psnr,
            self.ssim,
            self.input_psnr,
            self.mean_flops,
            self.n_regions,
            hist.join(", ")
        )
    }
}

/// A named (degraded, clean) pair.
#[derive(Clone, Debug)]
pub struct TestImage {
    pub name: String,
    pub degraded: Image,
    pub clean: Image,
}

/// Restores every test image and collects quality and compute statistics.
/// PSNR and SSIM are averaged over images, FLOPs over regions.
pub fn evaluate(model: &Model, set: &[TestImage], policy: &Policy) -> Result<(EvalReport, Vec<Image>)> {
    evaluate_with(model, set, policy, |_, _, _| Ok(()))
}

/// As [`evaluate`], calling `visit(index, restored, routes)` after each image.
pub fn evaluate_with(
    model: &Model,
    set: &[TestImage],
    policy: &Policy,
    mut visit: impl FnMut(usize, &Image, &[RegionRoute]) -> Result<()>,
) -> Result<(EvalReport, Vec<Image>)> {
    if set.is_empty() {
        return Err(Error::config("empty test set"));
    }
    let cfg = model.config();
    let mut hist = vec![vec![0usize; cfg.paths]; cfg.blocks];
    let mut images = Vec::with_capacity(set.len());
    let mut outputs = Vec::with_capacity(set.len());
    let mut flops_sum = 0u128;
    let mut regions = 0usize;
    for (i, t) in set.iter().enumerate() {
        same_dims(&t.degraded, &t.clean)?;
        let (restored, routes) = restore_image(model, &t.degraded, policy)?;
        for r in &routes {
            for (b, a) in r.actions.iter().enumerate() {
                hist[b][*a] += 1;
            }
        }
        let img_flops: u128 = routes.iter().map(|r| r.flops as u128).sum();
        flops_sum += img_flops;
        regions += routes.len();
        images.push(ImageReport {
            name: t.name.clone(),
            psnr: psnr(&restored, &t.clean)?,
            ssim: ssim(&restored, &t.clean)?,
            input_psnr: psnr(&t.degraded, &t.clean)?,
            mean_flops: img_flops as f64 / routes.len() as f64,
            n_regions: routes.len(),
        });
        visit(i, &restored, &routes)?;
        outputs.push(restored);
    }
    let n = images.len() as f64;
    let report = EvalReport {
        psnr: images.iter().map(|r| r.psnr).sum::<f64>() / n,
        ssim: images.iter().map(|r| r.ssim).sum::<f64>() / n,
        input_psnr: images.iter().map(|r| r.input_psnr).sum::<f64>() / n,
        mean_flops: flops_sum as f64 / regions as f64,
        route_histogram: hist,
        n_regions: regions,
        images,
    };
    Ok((report, outputs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_examples() {
        let a = Image::filled(1, 8, 8, 0.5);
        assert_eq!(psnr(&a, &a).unwrap(), 99.0);
        let b = Image::filled(1, 8, 8, 0.5 + 1.0 / 255.0);
        assert!((psnr(&a, &b).unwrap() - 20.0 * 255f64.log10()).abs() < 1e-4);
        let c = Image::filled(1, 8, 8, 0.5 + 0.001f32.sqrt());
        assert!((psnr(&a, &c).unwrap() - 30.0).abs() < 1e-3);
        assert!(psnr(&a, &Image::filled(1, 8, 9, 0.5)).is_err());
    }

    #[test]
    fn ssim_examples() {
        let a = Image::from_fn(1, 16, 16, |_, y, x| ((y * 3 + x * 7) % 11) as f32 / 10.0);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let zero = Image::filled(1, 16, 16, 0.0);
        let one = Image::filled(1, 16, 16, 1.0);
        let v = ssim(&zero, &one).unwrap();
        assert!((v - SSIM_C1 / (1.0 + SSIM_C1)).abs() < 1e-9);
        assert!(v < 0.01);
        assert!(ssim(&zero, &Image::filled(1, 10, 10, 0.0)).is_err());
    }

    #[test]
    fn ssim_kernel_sums_to_one() {
        let k = ssim_kernel();
        assert_eq!(k.len(), 11);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
