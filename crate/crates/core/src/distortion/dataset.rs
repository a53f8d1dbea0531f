//! Seeded (degraded, clean) patch streams.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::blur::gaussian_blur;
use super::dct::dct_compress;
use super::noise::{apply_noise, noise_map_linear, noise_map_peaks, noise_map_uniform, SigmaMap, SIGMA_LIMIT};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::seed::{derive_seed, derived_rng};

const TAG_SAMPLE: u64 = 0x5341_4d50;
const TAG_NOISE: u64 = 0x4e4f_4953;
const TAG_PEAKS: u64 = 0x5045_414b;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    Uniform,
    Linear,
    Peaks,
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(NoiseKind::Uniform),
            "linear" => Ok(NoiseKind::Linear),
            "peaks" => Ok(NoiseKind::Peaks),
            other => Err(Error::config(format!("unknown noise kind `{other}`"))),
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::Uniform => "uniform",
            NoiseKind::Linear => "linear",
            NoiseKind::Peaks => "peaks",
        })
    }
}

/// Noise level source. `Uniform` draws σ per sample from `[sigma_min, sigma_max]`;
/// `Linear` and `Peaks` lay a map over the whole source image and crop it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub sigma_min: f32,
    pub sigma_max: f32,
}

impl NoiseSpec {
    pub fn uniform(sigma_min: f32, sigma_max: f32) -> Self {
        NoiseSpec {
            kind: NoiseKind::Uniform,
            sigma_min,
            sigma_max,
        }
    }

    pub fn fixed(sigma: f32) -> Self {
        NoiseSpec::uniform(sigma, sigma)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |s: f32| (0.0..=SIGMA_LIMIT).contains(&s);
        if !ok(self.sigma_min) || !ok(self.sigma_max) || self.sigma_min > self.sigma_max {
            return Err(Error::config(format!(
                "noise range [{}, {}] must lie in [0, {SIGMA_LIMIT}]",
                self.sigma_min, self.sigma_max
            )));
        }
        Ok(())
    }
}

/// Blur → noise → compression, each optional except noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegradationSpec {
    pub blur: Option<(f32, f32)>,
    pub noise: NoiseSpec,
    pub quality: Option<(u32, u32)>,
}

impl DegradationSpec {
    /// Blind Gaussian denoising, σ ∈ [0, 50].
    pub fn denoising() -> Self {
        DegradationSpec {
            blur: None,
            noise: NoiseSpec::uniform(0.0, SIGMA_LIMIT),
            quality: None,
        }
    }

    /// Blur σ ∈ [0, 5], noise σ ∈ [0, 50], quality ∈ [10, 100].
    pub fn mixed() -> Self {
        DegradationSpec {
            blur: Some((0.0, 5.0)),
            noise: NoiseSpec::uniform(0.0, SIGMA_LIMIT),
            quality: Some((10, 100)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if let Some((lo, hi)) = self.blur {
            if !(0.0 <= lo && lo <= hi && hi.is_finite()) {
                return Err(Error::config(format!("blur range [{lo}, {hi}] is invalid")));
            }
        }
        if let Some((lo, hi)) = self.quality {
            if !(10 <= lo && lo <= hi && hi <= 100) {
                return Err(Error::config(format!(
                    "quality range [{lo}, {hi}] must lie in [10, 100]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleMeta {
    pub index: u64,
    pub source: usize,
    pub top: usize,
    pub left: usize,
    pub blur_sigma: f32,
    /// Mean σ over the patch, 8-bit units.
    pub noise_sigma: f32,
    pub quality: Option<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub degraded: Image,
    pub clean: Image,
    pub meta: SampleMeta,
}

/// Random-access patch source: sample `i` depends only on `(seed, i)`.
#[derive(Clone, Debug)]
pub struct Dataset {
    sources: Vec<Image>,
    spec: DegradationSpec,
    patch: usize,
    seed: u64,
}

impl Dataset {
    pub fn new(sources: Vec<Image>, spec: DegradationSpec, patch: usize, seed: u64) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::config("dataset needs at least one source image"));
        }
        spec.validate()?;
        if patch == 0 {
            return Err(Error::config("patch size must be positive"));
        }
        let channels = sources[0].channels();
        let sources: Vec<Image> = sources.into_iter().map(|s| s.reflect_pad_to(patch)).collect();
        if sources.iter().any(|s| s.channels() != channels) {
            return Err(Error::config("source images disagree on channel count"));
        }
        Ok(Dataset {
            sources,
            spec,
            patch,
            seed,
        })
    }

    pub fn spec(&self) -> &DegradationSpec {
        &self.spec
    }

    pub fn channels(&self) -> usize {
        self.sources[0].channels()
    }

    pub fn sample(&self, index: u64) -> Result<Sample> {
        let mut rng = derived_rng(self.seed, TAG_SAMPLE, index);
        let source = rng.random_range(0..self.sources.len());
        let img = &self.sources[source];
        let top = rng.random_range(0..=img.height() - self.patch);
        let left = rng.random_range(0..=img.width() - self.patch);
        let clean = img.crop(top, left, self.patch, self.patch)?;

        let blur_sigma = match self.spec.blur {
            Some((lo, hi)) if hi > lo => rng.random_range(lo..=hi),
            Some((lo, _)) => lo,
            None => 0.0,
        };
        let mut degraded = gaussian_blur(&clean, blur_sigma)?;

        let noise = self.spec.noise;
        let map = match noise.kind {
            NoiseKind::Uniform => {
                let s = if noise.sigma_max > noise.sigma_min {
                    rng.random_range(noise.sigma_min..=noise.sigma_max)
                } else {
                    noise.sigma_min
                };
                noise_map_uniform(self.patch, self.patch, s)?
            }
            NoiseKind::Linear => {
                noise_map_linear(img.height(), img.width(), noise.sigma_max)?.crop(top, left, self.patch, self.patch)
            }
            NoiseKind::Peaks => {
                let peaks_seed = derive_seed(self.seed, TAG_PEAKS, index);
                noise_map_peaks(img.height(), img.width(), noise.sigma_max, peaks_seed)?
                    .crop(top, left, self.patch, self.patch)
            }
        };
        degraded = apply_noise(&degraded, &map, derive_seed(self.seed, TAG_NOISE, index))?;

        let quality = self.spec.quality.map(|(lo, hi)| rng.random_range(lo..=hi));
        if let Some(q) = quality {
            degraded = dct_compress(&degraded, q)?;
        }
        Ok(Sample {
            degraded,
            clean,
            meta: SampleMeta {
                index,
                source,
                top,
                left,
                blur_sigma,
                noise_sigma: map.mean(),
                quality,
            },
        })
    }

    pub fn iter(&self, count: usize) -> impl Iterator<Item = Result<Sample>> + '_ {
        (0..count as u64).map(move |i| self.sample(i))
    }
}

/// `count` samples drawn from `sources`.
pub fn make_dataset(
    sources: &[Image],
    spec: &DegradationSpec,
    patch: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<Sample>> {
    let ds = Dataset::new(sources.to_vec(), *spec, patch, seed)?;
    ds.iter(count).collect()
}

/// Full-image degradation with one map over the whole frame.
pub fn degrade_image(clean: &Image, spec: &DegradationSpec, seed: u64) -> Result<(Image, SigmaMap)> {
    spec.validate()?;
    let mut rng = derived_rng(seed, TAG_SAMPLE, 0);
    let (h, w) = (clean.height(), clean.width());
    let blur = match spec.blur {
        Some((lo, hi)) if hi > lo => rng.random_range(lo..=hi),
        Some((lo, _)) => lo,
        None => 0.0,
    };
    let mut out = gaussian_blur(clean, blur)?;
    let n = spec.noise;
    let map = match n.kind {
        NoiseKind::Uniform => {
            let s = if n.sigma_max > n.sigma_min {
                rng.random_range(n.sigma_min..=n.sigma_max)
            } else {
                n.sigma_min
            };
            noise_map_uniform(h, w, s)?
        }
        NoiseKind::Linear => noise_map_linear(h, w, n.sigma_max)?,
        NoiseKind::Peaks => noise_map_peaks(h, w, n.sigma_max, derive_seed(seed, TAG_PEAKS, 0))?,
    };
    out = apply_noise(&out, &map, derive_seed(seed, TAG_NOISE, 0))?;
    if let Some((lo, hi)) = spec.quality {
        out = dct_compress(&out, rng.random_range(lo..=hi))?;
    }
    Ok((out, map))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::scene::scene;

    fn sources() -> Vec<Image> {
        (0..3).map(|i| scene(1, 96, 128, i)).collect()
    }

    #[test]
    fn empty_and_zero() {
        assert!(make_dataset(&[], &DegradationSpec::denoising(), 63, 1, 0).is_err());
        assert!(make_dataset(&sources(), &DegradationSpec::denoising(), 63, 0, 0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn seeded_and_random_access() {
        let spec = DegradationSpec::mixed();
        let a = make_dataset(&sources(), &spec, 63, 5, 17).unwrap();
        let b = make_dataset(&sources(), &spec, 63, 5, 17).unwrap();
        assert_eq!(a, b);
        let ds = Dataset::new(sources(), spec, 63, 17).unwrap();
        assert_eq!(ds.sample(3).unwrap(), a[3]);
        for s in &a {
            assert_eq!(s.degraded.dims(), (1, 63, 63));
            let q = s.meta.quality.unwrap();
            assert!((10..=100).contains(&q));
            assert!((0.0..=5.0).contains(&s.meta.blur_sigma));
        }
    }

    #[test]
    fn linear_spec_is_noisier_on_the_right() {
        let spec = DegradationSpec {
            noise: NoiseSpec {
                kind: NoiseKind::Linear,
                sigma_min: 0.0,
                sigma_max: 50.0,
            },
            ..DegradationSpec::denoising()
        };
        let ds = Dataset::new(sources(), spec, 63, 2).unwrap();
        let (mut left, mut right) = (Vec::new(), Vec::new());
        for s in ds.iter(1000) {
            let s = s.unwrap();
            let center = s.meta.left as f32 + 31.0;
            if center < 64.0 {
                left.push(s.meta.noise_sigma)
            } else {
                right.push(s.meta.noise_sigma)
            }
        }
        let mean = |v: &[f32]| v.iter().sum::<f32>() / v.len() as f32;
        assert!(!left.is_empty() && !right.is_empty());
        assert!(mean(&left) < mean(&right));
    }

    #[test]
    fn invalid_specs() {
        assert!(NoiseSpec::uniform(10.0, 5.0).validate().is_err());
        assert!(NoiseSpec::uniform(0.0, 60.0).validate().is_err());
        let bad = DegradationSpec {
            quality: Some((5, 50)),
            ..DegradationSpec::mixed()
        };
        assert!(bad.validate().is_err());
        assert_eq!("peaks".parse::<NoiseKind>().unwrap(), NoiseKind::Peaks);
        assert!("pink".parse::<NoiseKind>().is_err());
    }
}
