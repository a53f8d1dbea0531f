//! Builds datasets and test sets from a [`RunConfig`].

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::RunConfig;
use crate::distortion::{degrade_image, scene, Dataset, DegradationSpec, NoiseKind, NoiseSpec, SigmaMap};
use crate::error::{Error, Result};
use crate::image::{read_pnm, Image};
use crate::metrics::TestImage;
use crate::nn::Tensor;
use crate::seed::derive_seed;

const TAG_TRAIN_SCENE: u64 = 0x5452_4e53;
const TAG_HOLDOUT: u64 = 0x484f_4c44;
const TAG_TEST_SCENE: u64 = 0x5453_5453;
const TAG_TEST_NOISE: u64 = 0x5453_4e4f;
const TAG_DATA: u64 = 0x4441_5441;

/// Largest σ of the spatially variant test maps.
pub const VARIANT_SIGMA_MAX: f32 = 50.0;

fn is_pnm(p: &Path) -> bool {
    matches!(p.extension().and_then(|e| e.to_str()), Some("pgm" | "ppm" | "pnm"))
}

/// PGM/PPM files in `dir`, sorted by name.
pub fn pnm_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_pnm(p))
        .collect();
    files.sort();
    Ok(files)
}

/// Clean training images: `source_dir` if set, else procedural scenes.
pub fn training_sources(cfg: &RunConfig) -> Result<Vec<Image>> {
    let ch = cfg.model.channels;
    if let Some(dir) = &cfg.data.source_dir {
        let files = pnm_files(dir)?;
        if files.is_empty() {
            return Err(Error::config(format!("no PGM/PPM images in {}", dir.display())));
        }
        return files
            .iter()
            .map(|f| {
                let img = read_pnm(f)?;
                match (img.channels(), ch) {
                    (a, b) if a == b => Ok(img),
                    (3, 1) => Image::new(1, img.height(), img.width(), img.luma()),
                    (a, b) => Err(Error::config(format!(
                        "{} has {a} channels, model expects {b}",
                        f.display()
                    ))),
                }
            })
            .collect();
    }
    let n = cfg.data.scene_size;
    Ok((0..cfg.data.scenes)
        .map(|i| scene(ch, n, n, derive_seed(cfg.train.seed, TAG_TRAIN_SCENE, i as u64)))
        .collect())
}

pub fn training_dataset(cfg: &RunConfig) -> Result<Dataset> {
    Dataset::new(
        training_sources(cfg)?,
        cfg.degradation,
        cfg.model.patch,
        derive_seed(cfg.train.seed, TAG_DATA, 0),
    )
}

/// Held-out patches at a fixed noise level for the metrics log.
pub fn holdout_set(cfg: &RunConfig) -> Result<Vec<(Tensor, Tensor)>> {
    let p = cfg.model.patch;
    let spec = DegradationSpec {
        noise: NoiseSpec::fixed(cfg.data.holdout_sigma),
        ..cfg.degradation
    };
    (0..cfg.data.holdout)
        .map(|i| {
            let s = derive_seed(cfg.train.seed, TAG_HOLDOUT, i as u64);
            let clean = scene(cfg.model.channels, p, p, s);
            let (noisy, _) = degrade_image(&clean, &spec, s)?;
            Ok((noisy.to_tensor(), clean.to_tensor()))
        })
        .collect()
}

/// One procedural test image and its σ map. Uniform noise uses `test_sigma`;
/// linear and peaks maps span `[0, 50]`.
pub fn test_image(cfg: &RunConfig, index: usize) -> Result<(TestImage, SigmaMap)> {
    let n = cfg.eval.test_size;
    let seed = derive_seed(cfg.train.seed, TAG_TEST_SCENE, index as u64);
    let clean = scene(cfg.model.channels, n, n, seed);
    let noise = match cfg.eval.test_noise {
        NoiseKind::Uniform => NoiseSpec::fixed(cfg.eval.test_sigma),
        kind => NoiseSpec {
            kind,
            sigma_min: 0.0,
            sigma_max: VARIANT_SIGMA_MAX,
        },
    };
    let spec = DegradationSpec {
        noise,
        ..cfg.degradation
    };
    let (degraded, map) = degrade_image(&clean, &spec, derive_seed(cfg.train.seed, TAG_TEST_NOISE, index as u64))?;
    Ok((
        TestImage {
            name: format!("test{index:03}"),
            degraded,
            clean,
        },
        map,
    ))
}

/// `test_dir` pairs if set, else procedural test images.
pub fn test_set(cfg: &RunConfig) -> Result<Vec<TestImage>> {
    if let Some(dir) = &cfg.eval.test_dir {
        return read_pairs(dir);
    }
    (0..cfg.eval.test_images).map(|i| Ok(test_image(cfg, i)?.0)).collect()
}

/// Reads `<name>_degraded.<ext>` / `<name>_clean.<ext>` pairs.
pub fn read_pairs(dir: &Path) -> Result<Vec<TestImage>> {
    let mut out = Vec::new();
    for f in pnm_files(dir)? {
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let Some(name) = stem.strip_suffix("_degraded") else {
            continue;
        };
        let ext = f.extension().and_then(|e| e.to_str()).unwrap_or("pgm");
        let clean_path = dir.join(format!("{name}_clean.{ext}"));
        out.push(TestImage {
            name: name.to_string(),
            degraded: read_pnm(&f)?,
            clean: read_pnm(&clean_path)?,
        });
    }
    if out.is_empty() {
        return Err(Error::config(format!("no *_degraded images in {}", dir.display())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builders_are_seeded() {
        let mut cfg = RunConfig::parse("scenes = 3\nholdout = 2\ntest_images = 2\ntest_size = 70").unwrap();
        let a = holdout_set(&cfg).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].0.shape(), [1, 1, 63, 63]);
        assert_eq!(holdout_set(&cfg).unwrap(), a);
        let t = test_set(&cfg).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].degraded.dims(), (1, 70, 70));
        cfg.eval.test_noise = NoiseKind::Linear;
        let (_, map) = test_image(&cfg, 0).unwrap();
        assert_eq!(map.get(0, 69), 50.0);
        let ds = training_dataset(&cfg).unwrap();
        assert_eq!(
            ds.sample(4).unwrap(),
            training_dataset(&cfg).unwrap().sample(4).unwrap()
        );
    }
}
