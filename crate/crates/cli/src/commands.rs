use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use pathroute::checkpoint::{self, model_config_from_meta};
use pathroute::config::RunConfig;
use pathroute::distortion::{default_stride, extract_patches_with, merge_patches};
use pathroute::image::{encode_pnm, read_pnm, write_pnm, Image};
use pathroute::metrics::{evaluate, evaluate_with, restore_image, Policy, RegionRoute};
use pathroute::model::{flop_bounds, Model};
use pathroute::pipeline::{holdout_set, test_image, test_set, training_dataset};
use pathroute::seed::derived_rng;
use pathroute::trainer::{checkpoint_meta, resume_point, train, Stage, TrainConfig, METRICS_HEADER};
use pathroute::{Error, Result};

use crate::output::{CsvLog, OutDir};
use crate::{Cli, Command};

const TAG_INIT: u64 = 0x494e_4954;

pub const MANIFEST_HEADER: &str = "index,degraded,clean,source,top,left,blur_sigma,noise_sigma,quality";
pub const ROUTES_HEADER_PREFIX: &str = "top,left";
pub const SWEEP_HEADER: &str = "penalty,variant,psnr,ssim,input_psnr,mean_flops,active_fraction";

/// Heatmap endpoints: cheapest route green, most expensive red.
pub const CHEAP: [u8; 3] = [0, 200, 0];
pub const COSTLY: [u8; 3] = [220, 0, 0];

pub fn run(cli: &Cli) -> Result<()> {
    let text = fs::read_to_string(&cli.config)
        .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", cli.config.display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    if let Some(stage) = cli.stage {
        cfg.stage = stage;
    }
    if let Some(init) = &cli.init {
        cfg.init = Some(init.clone());
    }
    if cli.non_regulated {
        cfg.train.reward.non_regulated = true;
    }
    cfg.validate()?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| Error::Usage("no output directory: set `out` or pass --out".into()))?;
    preflight(cli.command, &cfg)?;

    let dir = OutDir::create(&out, cli.force)?;
    dir.write("config.txt", &text)?;
    dir.write("resolved_config.txt", cfg.to_text())?;
    match cli.command {
        Command::Synth => synth(&cfg, &dir),
        Command::Train => train_cmd(&cfg, &dir),
        Command::Eval => eval(&cfg, &dir),
        Command::RouteMap => route_map(&cfg, &dir),
        Command::Sweep => sweep(&cfg, &dir, cli.non_regulated),
    }
}

/// Checks that required inputs exist before the output directory is touched.
fn preflight(command: Command, cfg: &RunConfig) -> Result<()> {
    let need = |p: &Option<PathBuf>, what: &str| -> Result<()> {
        match p {
            None => Err(Error::Usage(format!("{what} is required"))),
            Some(p) if !p.exists() => Err(Error::Usage(format!("{} does not exist", p.display()))),
            Some(_) => Ok(()),
        }
    };
    match command {
        Command::Train if cfg.stage == 2 => need(&cfg.init, "--init (a stage-1 checkpoint) for stage 2"),
        Command::Train => match &cfg.init {
            Some(_) => need(&cfg.init, "--init"),
            None => Ok(()),
        },
        Command::Eval | Command::RouteMap => need(&model_path(cfg), "a checkpoint (`checkpoint` key or --init)"),
        Command::Sweep => need(&cfg.init, "--init (a stage-1 checkpoint) for sweeps"),
        Command::Synth => Ok(()),
    }?;
    if let Some(dir) = &cfg.data.source_dir {
        if !dir.is_dir() {
            return Err(Error::Usage(format!("source_dir {} is not a directory", dir.display())));
        }
    }
    if let Some(img) = &cfg.eval.image {
        if matches!(command, Command::RouteMap) && !img.exists() {
            return Err(Error::Usage(format!("image {} does not exist", img.display())));
        }
    }
    Ok(())
}

fn model_path(cfg: &RunConfig) -> Option<PathBuf> {
    cfg.init.clone().or_else(|| cfg.eval.checkpoint.clone())
}

fn ext(channels: usize) -> &'static str {
    if channels == 1 {
        "pgm"
    } else {
        "ppm"
    }
}

/// Loads a checkpoint whose architecture must match the config.
pub fn load_model(path: &Path, cfg: &RunConfig) -> Result<(Model, checkpoint::Checkpoint)> {
    let ck = checkpoint::load(path)?;
    let arch = model_config_from_meta(&ck.meta)?;
    if arch != cfg.model {
        return Err(Error::Config(format!(
            "{} was trained with {arch:?}, config describes {:?}",
            path.display(),
            cfg.model
        )));
    }
    let mut model = Model::new(arch, &mut derived_rng(cfg.train.seed, TAG_INIT, 0))?;
    model.load_params(ck.params.clone())?;
    Ok((model, ck))
}

fn synth(cfg: &RunConfig, dir: &OutDir) -> Result<()> {
    let data = training_dataset(cfg)?;
    let e = ext(cfg.model.channels);
    let mut manifest = String::from(MANIFEST_HEADER);
    manifest.push('\n');
    for sample in data.iter(cfg.data.count) {
        let s = sample?;
        let i = s.meta.index;
        let (deg, clean) = (format!("{i:04}_degraded.{e}"), format!("{i:04}_clean.{e}"));
        dir.write(&deg, encode_pnm(&s.degraded)?)?;
        dir.write(&clean, encode_pnm(&s.clean)?)?;
        let q = s.meta.quality.map(|q| q.to_string()).unwrap_or_default();
        let _ = writeln!(
            manifest,
            "{i},{deg},{clean},{},{},{},{:.4},{:.4},{q}",
            s.meta.source, s.meta.top, s.meta.left, s.meta.blur_sigma, s.meta.noise_sigma
        );
    }
    dir.write("manifest.csv", manifest)?;
    eprintln!("wrote {} pairs", cfg.data.count);
    Ok(())
}

/// Model and starting iteration for a training stage.
fn initial_model(cfg: &RunConfig, stage: Stage) -> Result<(Model, usize)> {
    let Some(init) = &cfg.init else {
        return Ok((
            Model::new(cfg.model.clone(), &mut derived_rng(cfg.train.seed, TAG_INIT, 0))?,
            0,
        ));
    };
    let (mut model, ck) = load_model(init, cfg)?;
    let start = match (resume_point(&ck.meta)?, stage) {
        (Some((from, iter)), to) if from == to => iter,
        (Some((Stage::Two, _)), Stage::One) => {
            return Err(Error::Usage("cannot run stage 1 from a stage-2 checkpoint".into()));
        }
        _ => {
            model.params_mut().reset_optimizer();
            0
        }
    };
    Ok((model, start))
}

fn run_stage(
    model: &mut Model,
    train_cfg: &TrainConfig,
    cfg: &RunConfig,
    stage: Stage,
    start: usize,
    dir: &Path,
    quiet: bool,
) -> Result<()> {
    let data = training_dataset(cfg)?;
    let holdout = holdout_set(cfg)?;
    let mut log = CsvLog::create(dir.join("metrics.csv"), METRICS_HEADER)?;
    let ckpt_dir = dir.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(|e| Error::Io {
        path: ckpt_dir.clone(),
        source: e,
    })?;
    let len = train_cfg.stage_len(stage);
    train(
        model,
        train_cfg,
        &data,
        &holdout,
        stage,
        start,
        |row| {
            if !quiet {
                eprintln!("{}", row.to_csv());
            }
            log.line(&row.to_csv())
        },
        |iter, m| {
            let meta = checkpoint_meta(m, train_cfg, stage, iter);
            let path = if iter == len {
                dir.join(format!("stage{stage}.prst"))
            } else {
                ckpt_dir.join(format!("stage{stage}_iter{iter:06}.prst"))
            };
            checkpoint::save(&path, m.params(), &meta)
        },
    )?;
    Ok(())
}

fn train_cmd(cfg: &RunConfig, dir: &OutDir) -> Result<()> {
    let stage = Stage::from_number(cfg.stage)?;
    let (mut model, start) = initial_model(cfg, stage)?;
    eprintln!(
        "stage {stage}: iterations {start}..{} with batch {}",
        cfg.train.stage_len(stage),
        cfg.train.batch
    );
    run_stage(&mut model, &cfg.train, cfg, stage, start, &dir.path(""), false)
}

fn eval(cfg: &RunConfig, dir: &OutDir) -> Result<()> {
    let path = model_path(cfg).expect("checked in preflight");
    let (model, _) = load_model(&path, cfg)?;
    let set = test_set(cfg)?;
    let policy = cfg.eval.policy.policy(cfg.model.blocks);
    let e = ext(cfg.model.channels);
    let (report, _) = evaluate_with(&model, &set, &policy, |i, restored, _| {
        if cfg.eval.save_images {
            write_pnm(&dir.path(&format!("{}_restored.{e}", set[i].name)), restored)?;
        }
        Ok(())
    })?;
    dir.write("report.csv", report.to_csv())?;
    dir.write("report.txt", report.to_text())?;
    print!("{}", report.to_text());
    Ok(())
}

/// Green-to-red colour for a route-cost fraction in `[0, 1]`.
pub fn route_color(fraction: f32) -> [f32; 3] {
    let t = fraction.clamp(0.0, 1.0);
    let lerp = |a: u8, b: u8| (a as f32 + t * (b as f32 - a as f32)) / 255.0;
    [
        lerp(CHEAP[0], COSTLY[0]),
        lerp(CHEAP[1], COSTLY[1]),
        lerp(CHEAP[2], COSTLY[2]),
    ]
}

fn heatmap(model: &Model, image: &Image, routes: &[RegionRoute]) -> Result<Image> {
    let patch = model.config().patch;
    let (grid, _) = extract_patches_with(
        &Image::filled(1, image.height(), image.width(), 0.0),
        patch,
        default_stride(patch),
    )?;
    let (lo, hi) = flop_bounds(model.config());
    let span = (hi - lo).max(1) as f32;
    let tiles: Vec<Image> = routes
        .iter()
        .map(|r| Image::filled(1, patch, patch, (r.flops - lo) as f32 / span))
        .collect();
    let fractions = merge_patches(&tiles, &grid, image.height(), image.width())?;
    let (h, w) = (image.height(), image.width());
    Ok(Image::from_fn(3, h, w, |c, y, x| {
        route_color(fractions.get(0, y, x))[c]
    }))
}

fn route_map(cfg: &RunConfig, dir: &OutDir) -> Result<()> {
    let path = model_path(cfg).expect("checked in preflight");
    let (model, _) = load_model(&path, cfg)?;
    let e = ext(cfg.model.channels);
    let input = match &cfg.eval.image {
        Some(p) => read_pnm(p)?,
        None => {
            let (t, map) = test_image(cfg, 0)?;
            write_pnm(&dir.path(&format!("clean.{e}")), &t.clean)?;
            let sigma = Image::new(1, map.height, map.width, map.values.iter().map(|s| s / 50.0).collect())?;
            write_pnm(&dir.path("sigma_map.pgm"), &sigma)?;
            t.degraded
        }
    };
    if input.channels() != cfg.model.channels {
        return Err(Error::Config(format!(
            "input has {} channels, model expects {}",
            input.channels(),
            cfg.model.channels
        )));
    }
    let policy = cfg.eval.policy.policy(cfg.model.blocks);
    let (restored, routes) = restore_image(&model, &input, &policy)?;
    write_pnm(&dir.path(&format!("input.{e}")), &input)?;
    write_pnm(&dir.path(&format!("restored.{e}")), &restored)?;
    write_pnm(&dir.path("route_map.ppm"), &heatmap(&model, &input, &routes)?)?;

    let (lo, hi) = flop_bounds(&cfg.model);
    let mut csv = String::from(ROUTES_HEADER_PREFIX);
    for b in 1..=cfg.model.blocks {
        let _ = write!(csv, ",a{b}");
    }
    csv.push_str(",flops,cost_fraction\n");
    for r in &routes {
        let acts: Vec<String> = r.actions.iter().map(|a| a.to_string()).collect();
        let frac = (r.flops - lo) as f64 / (hi - lo).max(1) as f64;
        let _ = writeln!(csv, "{},{},{},{},{:.4}", r.top, r.left, acts.join(","), r.flops, frac);
    }
    dir.write("routes.csv", csv)?;
    let mean = routes.iter().map(|r| r.flops as f64).sum::<f64>() / routes.len() as f64;
    println!("regions = {}\nmean_flops = {mean:.1}", routes.len());
    Ok(())
}

fn variant_name(non_regulated: bool) -> &'static str {
    if non_regulated {
        "non_regulated"
    } else {
        "regulated"
    }
}

fn sweep(cfg: &RunConfig, dir: &OutDir, only_non_regulated: bool) -> Result<()> {
    let init = cfg.init.clone().expect("checked in preflight");
    let (base, ck) = load_model(&init, cfg)?;
    if !matches!(resume_point(&ck.meta)?, Some((Stage::One, _)) | None) {
        return Err(Error::Usage("sweeps fine-tune from a stage-1 checkpoint".into()));
    }
    let variants = if only_non_regulated {
        vec![true]
    } else {
        cfg.sweep.variants.flags()
    };
    let set = test_set(cfg)?;
    let mut csv = CsvLog::create(dir.path("sweep.csv"), SWEEP_HEADER)?;
    for non_regulated in variants {
        for &penalty in &cfg.sweep.penalties {
            let name = format!("{}_p{penalty:e}", variant_name(non_regulated));
            let run_dir = dir.subdir(&format!("runs/{name}"))?;
            let mut train_cfg = cfg.train.clone();
            train_cfg.reward.penalty = penalty;
            train_cfg.reward.non_regulated = non_regulated;
            train_cfg.iters_stage2 = cfg.sweep.iters;
            train_cfg.checkpoint_every =
                cfg.sweep.iters.max(train_cfg.log_every) / train_cfg.log_every * train_cfg.log_every;
            let mut model = base.clone();
            model.params_mut().reset_optimizer();
            eprintln!("sweep {name}: {} iterations", cfg.sweep.iters);
            run_stage(&mut model, &train_cfg, cfg, Stage::Two, 0, &run_dir, true)?;
            let (report, _) = evaluate(&model, &set, &Policy::Argmax)?;
            let total: usize = report.route_histogram.iter().map(|r| r.iter().sum::<usize>()).sum();
            let active: usize = report
                .route_histogram
                .iter()
                .map(|r| r[1..].iter().sum::<usize>())
                .sum();
            let line = format!(
                "{penalty:e},{},{:.6},{:.6},{:.6},{:.1},{:.6}",
                variant_name(non_regulated),
                report.psnr,
                report.ssim,
                report.input_psnr,
                report.mean_flops,
                active as f64 / total.max(1) as f64
            );
            eprintln!("{line}");
            csv.line(&line)?;
            fs::write(run_dir.join("report.csv"), report.to_csv()).map_err(|e| Error::Io {
                path: run_dir.clone(),
                source: e,
            })?;
        }
    }
    Ok(())
}
