use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pathroute::checkpoint::{model_meta, save};
use pathroute::config::RunConfig;
use pathroute::image::read_pnm;
use pathroute::model::Model;
use rand::SeedableRng;
use tempfile::TempDir;

const SMALL: &str = "\
blocks = 2
paths = 2
features = 2
hidden = 2
pathfinder_width = 2
patch = 11
scenes = 3
scene_size = 24
count = 5
holdout = 2
iters_stage1 = 10
iters_stage2 = 10
batch = 2
log_every = 5
checkpoint_every = 5
lr0 = 1e-3
test_images = 2
test_size = 30
penalties = 1e-5, 3e-5
sweep_iters = 5
";

struct Sandbox {
    dir: TempDir,
}

impl Sandbox {
    fn new(extra: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("run.conf"), format!("{SMALL}{extra}")).unwrap();
        Sandbox { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        let conf = self.path("run.conf");
        Command::new(env!("CARGO_BIN_EXE_pathroute"))
            .args(args)
            .arg("--config")
            .arg(&conf)
            .current_dir(self.dir.path())
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> Output {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        out
    }

    fn code(&self, args: &[&str]) -> i32 {
        self.run(args).status.code().unwrap()
    }

    fn config(&self) -> RunConfig {
        RunConfig::parse(&fs::read_to_string(self.path("run.conf")).unwrap()).unwrap()
    }

    /// A freshly initialised model: zero end conv, so it returns its input.
    fn identity_checkpoint(&self) -> PathBuf {
        let cfg = self.config();
        let model = Model::new(cfg.model.clone(), &mut rand_chacha::ChaCha8Rng::seed_from_u64(0)).unwrap();
        let path = self.path("identity.prst");
        save(&path, model.params(), &model_meta(&cfg.model)).unwrap();
        path
    }
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn usage_errors_exit_with_two() {
    let sb = Sandbox::new("");
    assert_eq!(sb.code(&["train", "--stage", "2", "--out", "a"]), 2);
    assert_eq!(sb.code(&["train", "--stage", "3", "--out", "a"]), 2);
    assert_eq!(sb.code(&["eval", "--out", "a"]), 2);
    assert_eq!(sb.code(&["sweep", "--out", "a"]), 2);
    assert_eq!(sb.code(&["synth"]), 2);
    assert_eq!(sb.code(&["paint", "--out", "a"]), 2);
    assert_eq!(sb.code(&["eval", "--out", "a", "--init", "missing.prst"]), 2);
    assert!(!sb.path("a").exists());

    let bad = Sandbox::new("colour = red\n");
    assert_eq!(bad.code(&["synth", "--out", "s"]), 2);
    let dup = Sandbox::new("seed = 3\n");
    assert_eq!(dup.code(&["synth", "--out", "s", "--seed", "5"]), 0);
}

#[test]
fn outputs_are_not_overwritten_without_force() {
    let sb = Sandbox::new("");
    sb.ok(&["synth", "--out", "s"]);
    assert_eq!(sb.code(&["synth", "--out", "s"]), 2);
    sb.ok(&["synth", "--out", "s", "--force"]);
}

#[test]
fn runtime_failures_exit_with_one() {
    let sb = Sandbox::new("");
    fs::write(sb.path("junk.prst"), b"not a checkpoint").unwrap();
    assert_eq!(sb.code(&["eval", "--out", "e", "--init", "junk.prst"]), 1);
}

#[test]
fn synth_is_reproducible() {
    let sb = Sandbox::new("");
    sb.ok(&["synth", "--out", "a"]);
    sb.ok(&["synth", "--out", "b"]);
    let rows = csv_rows(&sb.path("a/manifest.csv"));
    assert_eq!(
        rows[0].join(","),
        "index,degraded,clean,source,top,left,blur_sigma,noise_sigma,quality"
    );
    assert_eq!(rows.len(), 6);
    for row in &rows[1..] {
        let deg = read_pnm(&sb.path("a").join(&row[1])).unwrap();
        let clean = read_pnm(&sb.path("a").join(&row[2])).unwrap();
        assert_eq!((deg.dims(), clean.dims()), ((1, 11, 11), (1, 11, 11)));
    }
    for entry in fs::read_dir(sb.path("a")).unwrap() {
        let name = entry.unwrap().file_name();
        if name == "resolved_config.txt" {
            continue;
        }
        assert_eq!(
            fs::read(sb.path("a").join(&name)).unwrap(),
            fs::read(sb.path("b").join(&name)).unwrap()
        );
    }
    sb.ok(&["synth", "--out", "c", "--seed", "9"]);
    assert_ne!(
        fs::read(sb.path("a/0000_degraded.pgm")).unwrap(),
        fs::read(sb.path("c/0000_degraded.pgm")).unwrap()
    );
}

#[test]
fn training_chains_through_both_stages() {
    let sb = Sandbox::new("");
    sb.ok(&["train", "--out", "s1"]);
    assert!(sb.path("s1/stage1.prst").exists());
    assert!(sb.path("s1/checkpoints/stage1_iter000005.prst").exists());
    let rows = csv_rows(&sb.path("s1/metrics.csv"));
    assert_eq!(rows[0].join(","), "iter,stage,loss,mean_reward,mean_flops,psnr");
    let iters: Vec<usize> = rows[1..].iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(iters, vec![5, 10]);
    assert!(rows[1..].iter().all(|r| r[2].parse::<f64>().unwrap().is_finite()));

    sb.ok(&["train", "--stage", "2", "--init", "s1/stage1.prst", "--out", "s2"]);
    let rows = csv_rows(&sb.path("s2/metrics.csv"));
    assert!(rows[1..]
        .iter()
        .all(|r| r[1] == "2" && r[3].parse::<f64>().unwrap().is_finite()));
    assert_eq!(
        sb.code(&["train", "--stage", "1", "--init", "s2/stage2.prst", "--out", "bad"]),
        2
    );

    // resuming a stage from its own mid-run checkpoint reproduces the final rows
    sb.ok(&[
        "train",
        "--stage",
        "2",
        "--init",
        "s2/checkpoints/stage2_iter000005.prst",
        "--out",
        "s2r",
    ]);
    let full = fs::read_to_string(sb.path("s2/metrics.csv")).unwrap();
    let tail = fs::read_to_string(sb.path("s2r/metrics.csv")).unwrap();
    assert_eq!(tail.lines().last(), full.lines().last());
    assert_eq!(
        fs::read(sb.path("s2r/stage2.prst")).unwrap(),
        fs::read(sb.path("s2/stage2.prst")).unwrap()
    );
}

#[test]
fn eval_of_an_identity_model_matches_the_input() {
    let sb = Sandbox::new("");
    let ck = sb.identity_checkpoint();
    sb.ok(&["eval", "--out", "e", "--init", ck.to_str().unwrap()]);
    let rows = csv_rows(&sb.path("e/report.csv"));
    assert_eq!(rows[0].join(","), "image,psnr,ssim,input_psnr,mean_flops,n_regions");
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[3][0], "mean");
    for r in &rows[1..] {
        assert_eq!(r[1], r[3]);
    }
    assert!(sb.path(&format!("e/{}_restored.pgm", rows[1][0])).exists());
    let text = fs::read_to_string(sb.path("e/report.txt")).unwrap();
    for key in [
        "psnr",
        "ssim",
        "input_psnr",
        "mean_flops",
        "n_regions",
        "route_histogram",
    ] {
        assert!(text.contains(&format!("\"{key}\"")), "{key}");
    }

    let other = Sandbox::new("features = 3\n");
    assert_eq!(other.code(&["eval", "--out", "e", "--init", ck.to_str().unwrap()]), 2);
}

#[test]
fn forced_bypass_route_map_is_uniformly_cheap() {
    let sb = Sandbox::new("policy = bypass\n");
    let ck = sb.identity_checkpoint();
    sb.ok(&["route-map", "--out", "r", "--init", ck.to_str().unwrap()]);
    let map = read_pnm(&sb.path("r/route_map.ppm")).unwrap();
    assert_eq!(map.dims(), (3, 30, 30));
    for y in 0..30 {
        for x in 0..30 {
            let px: Vec<u8> = (0..3).map(|c| (map.get(c, y, x) * 255.0).round() as u8).collect();
            assert_eq!(px, vec![0, 200, 0]);
        }
    }
    let rows = csv_rows(&sb.path("r/routes.csv"));
    assert_eq!(rows[0].join(","), "top,left,a1,a2,flops,cost_fraction");
    // 30 px at patch 11, stride 9: anchors 0, 9, 18, 19
    assert_eq!(rows.len() - 1, 16);
    assert!(rows[1..].iter().all(|r| r[2] == "0" && r[3] == "0" && r[5] == "0.0000"));
    assert!(sb.path("r/sigma_map.pgm").exists());
}

#[test]
fn sweep_writes_one_row_per_run() {
    let sb = Sandbox::new("");
    sb.ok(&["train", "--out", "s1"]);
    sb.ok(&["sweep", "--init", "s1/stage1.prst", "--out", "sw"]);
    let rows = csv_rows(&sb.path("sw/sweep.csv"));
    assert_eq!(
        rows[0].join(","),
        "penalty,variant,psnr,ssim,input_psnr,mean_flops,active_fraction"
    );
    assert_eq!(rows.len(), 5);
    let variants: Vec<&str> = rows[1..].iter().map(|r| r[1].as_str()).collect();
    assert_eq!(
        variants,
        vec!["regulated", "regulated", "non_regulated", "non_regulated"]
    );
    assert!(sb.path("sw/runs/regulated_p1e-5/stage2.prst").exists());

    sb.ok(&["sweep", "--init", "s1/stage1.prst", "--out", "nr", "--non-regulated"]);
    let rows = csv_rows(&sb.path("nr/sweep.csv"));
    assert_eq!(rows.len(), 3);
    assert!(rows[1..].iter().all(|r| r[1] == "non_regulated"));
}
