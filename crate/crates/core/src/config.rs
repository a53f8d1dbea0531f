//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. `task` picks a preset and is
//! applied before every other key regardless of position. Unknown or
//! repeated keys are errors.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::distortion::{DegradationSpec, NoiseKind, NoiseSpec};
use crate::error::{Error, Result};
use crate::metrics::{Policy, SSIM_WINDOW};
use crate::model::{ModelConfig, BYPASS};
use crate::reward::RewardConfig;
use crate::trainer::TrainConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Denoising,
    Mixed,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "denoising" => Ok(Task::Denoising),
            "mixed" => Ok(Task::Mixed),
            other => Err(Error::config(format!("unknown task `{other}`"))),
        }
    }
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Denoising => "denoising",
            Task::Mixed => "mixed",
        }
    }
}

/// Which reward variants a sweep trains.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepVariants {
    Regulated,
    NonRegulated,
    Both,
}

impl FromStr for SweepVariants {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regulated" => Ok(SweepVariants::Regulated),
            "non_regulated" => Ok(SweepVariants::NonRegulated),
            "both" => Ok(SweepVariants::Both),
            other => Err(Error::config(format!("unknown sweep variants `{other}`"))),
        }
    }
}

impl SweepVariants {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariants::Regulated => "regulated",
            SweepVariants::NonRegulated => "non_regulated",
            SweepVariants::Both => "both",
        }
    }

    /// `non_regulated` flags in run order.
    pub fn flags(self) -> Vec<bool> {
        match self {
            SweepVariants::Regulated => vec![false],
            SweepVariants::NonRegulated => vec![true],
            SweepVariants::Both => vec![false, true],
        }
    }
}

/// Route choice for evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalPolicy {
    Argmax,
    Bypass,
    Full,
}

impl FromStr for EvalPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "argmax" => Ok(EvalPolicy::Argmax),
            "bypass" => Ok(EvalPolicy::Bypass),
            "full" => Ok(EvalPolicy::Full),
            other => Err(Error::config(format!("unknown policy `{other}`"))),
        }
    }
}

impl EvalPolicy {
    pub fn name(self) -> &'static str {
        match self {
            EvalPolicy::Argmax => "argmax",
            EvalPolicy::Bypass => "bypass",
            EvalPolicy::Full => "full",
        }
    }

    /// `Full` takes path 1 in every block.
    pub fn policy(self, blocks: usize) -> Policy {
        match self {
            EvalPolicy::Argmax => Policy::Argmax,
            EvalPolicy::Bypass => Policy::Forced(vec![BYPASS; blocks]),
            EvalPolicy::Full => Policy::Forced(vec![1; blocks]),
        }
    }
}

/// Training data: procedural scenes, optionally replaced by a directory of PGM/PPM files.
#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub source_dir: Option<PathBuf>,
    pub scenes: usize,
    pub scene_size: usize,
    /// Pairs written by `synth`.
    pub count: usize,
    /// Held-out patches scored in the metrics log.
    pub holdout: usize,
    pub holdout_sigma: f32,
}

/// Test set for `eval`, `route-map` and sweeps.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub checkpoint: Option<PathBuf>,
    /// Directory with `NNNN_degraded` / `NNNN_clean` pairs from `synth`.
    pub test_dir: Option<PathBuf>,
    pub test_images: usize,
    pub test_size: usize,
    pub test_noise: NoiseKind,
    pub test_sigma: f32,
    /// Input image for `route-map`; a procedural one is used when absent.
    pub image: Option<PathBuf>,
    pub save_images: bool,
    pub policy: EvalPolicy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub penalties: Vec<f32>,
    pub iters: usize,
    pub variants: SweepVariants,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub degradation: DegradationSpec,
    pub data: DataConfig,
    pub eval: EvalConfig,
    pub sweep: SweepConfig,
    pub out: Option<PathBuf>,
    pub stage: u8,
    pub init: Option<PathBuf>,
}

impl RunConfig {
    pub fn preset(task: Task) -> Self {
        let (model, reward, degradation) = match task {
            Task::Denoising => (
                ModelConfig::denoising(),
                RewardConfig::denoising(),
                DegradationSpec::denoising(),
            ),
            Task::Mixed => (ModelConfig::mixed(), RewardConfig::mixed(), DegradationSpec::mixed()),
        };
        RunConfig {
            task,
            model,
            train: TrainConfig {
                reward,
                ..TrainConfig::default()
            },
            degradation,
            data: DataConfig {
                source_dir: None,
                scenes: 256,
                scene_size: 128,
                count: 100,
                holdout: 8,
                holdout_sigma: 25.0,
            },
            eval: EvalConfig {
                checkpoint: None,
                test_dir: None,
                test_images: 8,
                test_size: 116,
                test_noise: NoiseKind::Uniform,
                test_sigma: 25.0,
                image: None,
                save_images: true,
                policy: EvalPolicy::Argmax,
            },
            sweep: SweepConfig {
                penalties: vec![3e-6, 5e-6, 8e-6],
                iters: 5000,
                variants: SweepVariants::Both,
            },
            out: None,
            stage: 1,
            init: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`, got `{line}`", no + 1)))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if k.is_empty() {
                return Err(Error::config(format!("line {}: empty key", no + 1)));
            }
            if entries.iter().any(|(_, seen, _)| *seen == k) {
                return Err(Error::config(format!("line {}: `{k}` given twice", no + 1)));
            }
            entries.push((no + 1, k, v));
        }
        let task = match entries.iter().find(|(_, k, _)| k == "task") {
            Some((_, _, v)) => v.parse()?,
            None => Task::Denoising,
        };
        let mut cfg = RunConfig::preset(task);
        for (no, k, v) in &entries {
            if k == "task" {
                continue;
            }
            cfg.set(k, v).map_err(|e| match e {
                Error::Config(msg) => Error::config(format!("line {no}: {msg}")),
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key; the task preset is not reapplied.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::config(format!("`{key}`: cannot parse `{v}`")))
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(Error::config(format!("`{key}`: expected true or false, got `{v}`"))),
            }
        }
        let path = |v: &str| if v.is_empty() { None } else { Some(PathBuf::from(v)) };
        let k = key;
        match k {
            "blocks" => self.model.blocks = num(k, value)?,
            "paths" => self.model.paths = num(k, value)?,
            "pathfinder_convs" => self.model.pathfinder_convs = num(k, value)?,
            "features" => self.model.features = num(k, value)?,
            "hidden" => self.model.hidden = num(k, value)?,
            "pathfinder_width" => self.model.pathfinder_width = num(k, value)?,
            "channels" => self.model.channels = num(k, value)?,
            "patch" => self.model.patch = num(k, value)?,

            "penalty" => self.train.reward.penalty = num(k, value)?,
            "threshold" => self.train.reward.threshold = num(k, value)?,
            "non_regulated" => self.train.reward.non_regulated = flag(k, value)?,

            "alpha" => self.train.alpha = num(k, value)?,
            "lr0" => self.train.lr0 = num(k, value)?,
            "iters_stage1" => self.train.iters_stage1 = num(k, value)?,
            "iters_stage2" => self.train.iters_stage2 = num(k, value)?,
            "batch" => self.train.batch = num(k, value)?,
            "seed" => self.train.seed = num(k, value)?,
            "cnn_lr_scale" => self.train.cnn_lr_scale = num(k, value)?,
            "pathfinder_lr_scale" => self.train.pathfinder_lr_scale = num(k, value)?,
            "log_every" => self.train.log_every = num(k, value)?,
            "checkpoint_every" => self.train.checkpoint_every = num(k, value)?,

            "noise" => self.degradation.noise.kind = value.parse()?,
            "sigma_min" => self.degradation.noise.sigma_min = num(k, value)?,
            "sigma_max" => self.degradation.noise.sigma_max = num(k, value)?,
            "blur_min" => self.degradation.blur = Some((num(k, value)?, self.degradation.blur.map_or(0.0, |b| b.1))),
            "blur_max" => self.degradation.blur = Some((self.degradation.blur.map_or(0.0, |b| b.0), num(k, value)?)),
            "blur" => {
                if !flag(k, value)? {
                    self.degradation.blur = None;
                } else if self.degradation.blur.is_none() {
                    self.degradation.blur = Some((0.0, 5.0));
                }
            }
            "quality_min" => {
                self.degradation.quality = Some((num(k, value)?, self.degradation.quality.map_or(100, |q| q.1)))
            }
            "quality_max" => {
                self.degradation.quality = Some((self.degradation.quality.map_or(10, |q| q.0), num(k, value)?))
            }
            "compress" => {
                if !flag(k, value)? {
                    self.degradation.quality = None;
                } else if self.degradation.quality.is_none() {
                    self.degradation.quality = Some((10, 100));
                }
            }

            "source_dir" => self.data.source_dir = path(value),
            "scenes" => self.data.scenes = num(k, value)?,
            "scene_size" => self.data.scene_size = num(k, value)?,
            "count" => self.data.count = num(k, value)?,
            "holdout" => self.data.holdout = num(k, value)?,
            "holdout_sigma" => self.data.holdout_sigma = num(k, value)?,

            "checkpoint" => self.eval.checkpoint = path(value),
            "test_dir" => self.eval.test_dir = path(value),
            "test_images" => self.eval.test_images = num(k, value)?,
            "test_size" => self.eval.test_size = num(k, value)?,
            "test_noise" => self.eval.test_noise = value.parse()?,
            "test_sigma" => self.eval.test_sigma = num(k, value)?,
            "image" => self.eval.image = path(value),
            "save_images" => self.eval.save_images = flag(k, value)?,
            "policy" => self.eval.policy = value.parse()?,

            "penalties" => {
                self.sweep.penalties = value
                    .split(',')
                    .map(|p| num::<f32>(k, p.trim()))
                    .collect::<Result<Vec<_>>>()?
            }
            "sweep_iters" => self.sweep.iters = num(k, value)?,
            "sweep_variants" => self.sweep.variants = value.parse()?,

            "out" => self.out = path(value),
            "stage" => self.stage = num(k, value)?,
            "init" => self.init = path(value),
            "task" => return Err(Error::config("`task` must be set in the config file")),
            other => return Err(Error::config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.degradation.validate()?;
        if !matches!(self.stage, 1 | 2) {
            return Err(Error::config(format!("stage must be 1 or 2, got {}", self.stage)));
        }
        if self.data.scenes == 0 && self.data.source_dir.is_none() {
            return Err(Error::config("need procedural scenes or a source_dir"));
        }
        if self.data.scene_size < self.model.patch || self.eval.test_size < SSIM_WINDOW {
            return Err(Error::config(format!(
                "scene_size must cover a patch and test_size must be at least {SSIM_WINDOW}"
            )));
        }
        if !(0.0..=50.0).contains(&self.data.holdout_sigma) || !(0.0..=50.0).contains(&self.eval.test_sigma) {
            return Err(Error::config("holdout and test sigma must lie in [0, 50]"));
        }
        if self.sweep.penalties.is_empty() || self.sweep.penalties.iter().any(|p| p.is_nan() || *p <= 0.0) {
            return Err(Error::config("penalties must be a non-empty list of positive values"));
        }
        Ok(())
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        self.degradation.noise
    }

    /// Every key with its effective value, in a form [`RunConfig::parse`] accepts.
    pub fn to_text(&self) -> String {
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let m = &self.model;
        let t = &self.train;
        let d = &self.degradation;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("task", self.task.name().into());
        kv("blocks", m.blocks.to_string());
        kv("paths", m.paths.to_string());
        kv("pathfinder_convs", m.pathfinder_convs.to_string());
        kv("features", m.features.to_string());
        kv("hidden", m.hidden.to_string());
        kv("pathfinder_width", m.pathfinder_width.to_string());
        kv("channels", m.channels.to_string());
        kv("patch", m.patch.to_string());
        kv("penalty", t.reward.penalty.to_string());
        kv("threshold", t.reward.threshold.to_string());
        kv("non_regulated", t.reward.non_regulated.to_string());
        kv("alpha", t.alpha.to_string());
        kv("lr0", t.lr0.to_string());
        kv("iters_stage1", t.iters_stage1.to_string());
        kv("iters_stage2", t.iters_stage2.to_string());
        kv("batch", t.batch.to_string());
        kv("seed", t.seed.to_string());
        kv("cnn_lr_scale", t.cnn_lr_scale.to_string());
        kv("pathfinder_lr_scale", t.pathfinder_lr_scale.to_string());
        kv("log_every", t.log_every.to_string());
        kv("checkpoint_every", t.checkpoint_every.to_string());
        kv("noise", d.noise.kind.to_string());
        kv("sigma_min", d.noise.sigma_min.to_string());
        kv("sigma_max", d.noise.sigma_max.to_string());
        kv("blur", d.blur.is_some().to_string());
        if let Some((lo, hi)) = d.blur {
            kv("blur_min", lo.to_string());
            kv("blur_max", hi.to_string());
        }
        kv("compress", d.quality.is_some().to_string());
        if let Some((lo, hi)) = d.quality {
            kv("quality_min", lo.to_string());
            kv("quality_max", hi.to_string());
        }
        kv("source_dir", opt(&self.data.source_dir));
        kv("scenes", self.data.scenes.to_string());
        kv("scene_size", self.data.scene_size.to_string());
        kv("count", self.data.count.to_string());
        kv("holdout", self.data.holdout.to_string());
        kv("holdout_sigma", self.data.holdout_sigma.to_string());
        kv("checkpoint", opt(&self.eval.checkpoint));
        kv("test_dir", opt(&self.eval.test_dir));
        kv("test_images", self.eval.test_images.to_string());
        kv("test_size", self.eval.test_size.to_string());
        kv("test_noise", self.eval.test_noise.to_string());
        kv("test_sigma", self.eval.test_sigma.to_string());
        kv("image", opt(&self.eval.image));
        kv("save_images", self.eval.save_images.to_string());
        kv("policy", self.eval.policy.name().into());
        kv(
            "penalties",
            self.sweep
                .penalties
                .iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("sweep_iters", self.sweep.iters.to_string());
        kv("sweep_variants", self.sweep.variants.name().into());
        kv("out", opt(&self.out));
        kv("stage", self.stage.to_string());
        kv("init", opt(&self.init));
        s
    }
}
