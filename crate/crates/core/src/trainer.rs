//! Two-stage training: random-route supervision, then joint REINFORCE.

use std::fmt;

use rand::{Rng, RngCore};

use crate::checkpoint::{meta_get, model_meta, Meta};
use crate::distortion::Dataset;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::psnr;
use crate::model::{Model, RouteMode, BYPASS};
use crate::nn::{ParamId, Tape, Tensor, Var};
use crate::reward::{baseline, trajectory_rewards, RewardConfig, TrajectoryReward};
use crate::seed::derived_rng;

const TAG_ROUTE: u64 = 0x524f_5554;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Weight of the intermediate decoding loss in stage 1.
    pub alpha: f32,
    pub lr0: f32,
    pub iters_stage1: usize,
    pub iters_stage2: usize,
    /// Patches per iteration.
    pub batch: usize,
    pub reward: RewardConfig,
    pub seed: u64,
    /// Multiplier on the CNN learning rate in stage 2.
    pub cnn_lr_scale: f32,
    /// Multiplier on the pathfinder learning rate in stage 2.
    pub pathfinder_lr_scale: f32,
    pub log_every: usize,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.1,
            lr0: 2e-4,
            iters_stage1: 20_000,
            iters_stage2: 20_000,
            batch: 4,
            reward: RewardConfig::denoising(),
            seed: 0,
            cnn_lr_scale: 1.0,
            pathfinder_lr_scale: 1.0,
            log_every: 100,
            checkpoint_every: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch < 1 {
            return Err(Error::config("batch must be at least 1"));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::config(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        if !(self.cnn_lr_scale >= 0.0 && self.pathfinder_lr_scale >= 0.0) {
            return Err(Error::config("learning-rate scales must be non-negative"));
        }
        if self.log_every == 0 || self.checkpoint_every == 0 {
            return Err(Error::config("log and checkpoint intervals must be positive"));
        }
        if !self.checkpoint_every.is_multiple_of(self.log_every) {
            return Err(Error::config(
                "checkpoint interval must be a multiple of the log interval",
            ));
        }
        self.reward.validate()
    }

    pub fn stage_len(&self, stage: Stage) -> usize {
        match stage {
            Stage::One => self.iters_stage1,
            Stage::Two => self.iters_stage2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    One,
    Two,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::One => 1,
            Stage::Two => 2,
        }
    }

    pub fn from_number(n: u8) -> Result<Stage> {
        match n {
            1 => Ok(Stage::One),
            2 => Ok(Stage::Two),
            other => Err(Error::usage(format!("stage must be 1 or 2, got {other}"))),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// `lr0 · 2^−min(3, ⌊4·iter / stage_len⌋)`.
pub fn lr_schedule(iter: usize, lr0: f32, stage_len: usize) -> f32 {
    let quarter = (4 * iter).checked_div(stage_len).map_or(0, |q| q.min(3));
    lr0 / (1u32 << quarter) as f32
}

/// `final + α · Σ intermediate`.
pub fn stage1_objective(final_mse: f32, intermediate: &[f32], alpha: f32) -> f32 {
    final_mse + alpha * intermediate.iter().sum::<f32>()
}

/// Recorded form of [`stage1_objective`]; each block input is decoded by the end conv.
pub fn stage1_loss(
    tape: &mut Tape,
    model: &Model,
    patch: Var,
    target: Var,
    restored: Var,
    block_inputs: &[Var],
    alpha: f32,
) -> Result<Var> {
    let final_loss = tape.mse(restored, target)?;
    if alpha == 0.0 || block_inputs.is_empty() {
        return Ok(final_loss);
    }
    let mut terms = Vec::with_capacity(block_inputs.len());
    for x in block_inputs {
        let decoded = model.decode(tape, patch, *x)?;
        terms.push(tape.mse(decoded, target)?);
    }
    let inter = tape.sum(&terms)?;
    let weighted = tape.scale(inter, alpha);
    tape.add(final_loss, weighted)
}

/// Each block's path drawn uniformly from all paths.
pub fn uniform_route(blocks: usize, paths: usize, rng: &mut dyn RngCore) -> Vec<usize> {
    (0..blocks).map(|_| rng.random_range(0..paths)).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepStats {
    pub loss: f32,
    pub mean_reward: f32,
    pub mean_flops: f64,
}

fn check_batch(batch: &[(Tensor, Tensor)]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::usage("empty batch"));
    }
    Ok(())
}

fn finite_loss(v: f32) -> Result<f32> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::numeric(format!("training loss became {v}")))
    }
}

/// One stage-1 update of the CNN; the pathfinder is untouched.
pub fn stage1_step(
    model: &mut Model,
    batch: &[(Tensor, Tensor)],
    lr: f32,
    alpha: f32,
    rng: &mut dyn RngCore,
) -> Result<StepStats> {
    check_batch(batch)?;
    let k = batch.len() as f32;
    let cfg = model.config().clone();
    let mut loss_sum = 0.0;
    let mut flops = 0.0;
    model.params_mut().clear_grads();
    for (input, target) in batch {
        let route = uniform_route(cfg.blocks, cfg.paths, rng);
        let mut tape = Tape::new();
        let x = tape.leaf(input.clone());
        let y = tape.leaf(target.clone());
        let (restored, inputs) = model.forward_intermediate(&mut tape, x, &route)?;
        let loss = stage1_loss(&mut tape, model, x, y, restored, &inputs, alpha)?;
        loss_sum += finite_loss(tape.scalar(loss))?;
        let grads = tape.backward(loss)?;
        model.params_mut().accumulate(&grads, 1.0 / k)?;
        flops += model.count_flops(&route)?.total() as f64;
    }
    let ids = model.cnn_ids();
    model.params_mut().adam_step(&ids, lr)?;
    model.params_mut().clear_grads();
    Ok(StepStats {
        loss: loss_sum / k,
        mean_reward: f32::NAN,
        mean_flops: flops / k as f64,
    })
}

/// Reward model for stage 2.
pub trait RewardSource {
    fn trajectory(
        &mut self,
        model: &Model,
        input: &Tensor,
        restored: &Tensor,
        target: &Tensor,
        actions: &[usize],
    ) -> Result<TrajectoryReward>;
}

/// Difficulty-regulated rewards with the all-bypass baseline recomputed per image.
#[derive(Clone, Copy, Debug)]
pub struct ImageReward(pub RewardConfig);

impl RewardSource for ImageReward {
    fn trajectory(
        &mut self,
        model: &Model,
        input: &Tensor,
        restored: &Tensor,
        target: &Tensor,
        actions: &[usize],
    ) -> Result<TrajectoryReward> {
        let mut tr = trajectory_rewards(actions, input, restored, target, &self.0)?;
        tr.baseline = baseline(model, input, target, &self.0)?;
        Ok(tr)
    }
}

/// `−scale · Σ_i log π(a_i) · advantage_i`; its gradient is `−scale · Δθ`.
fn surrogate(tape: &mut Tape, log_probs: &[Var], advantages: &[f32], scale: f32) -> Result<Option<Var>> {
    if log_probs.len() != advantages.len() {
        return Err(Error::usage(format!(
            "{} log-probabilities for {} advantages",
            log_probs.len(),
            advantages.len()
        )));
    }
    let terms: Vec<Var> = log_probs
        .iter()
        .zip(advantages)
        .map(|(lp, a)| tape.scale(*lp, -scale * a))
        .collect();
    if terms.is_empty() {
        return Ok(None);
    }
    Ok(Some(tape.sum(&terms)?))
}

/// Ascent direction for the pathfinder, one buffer per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyGradient {
    pub grads: Vec<(ParamId, Vec<f32>)>,
}

impl PolicyGradient {
    fn zeros(model: &Model) -> Self {
        PolicyGradient {
            grads: model
                .pathfinder_ids()
                .into_iter()
                .map(|id| (id, vec![0.0; model.params().get(id).value.len()]))
                .collect(),
        }
    }

    fn add(&mut self, id: ParamId, g: &[f32], scale: f32) {
        if let Some((_, buf)) = self.grads.iter_mut().find(|(i, _)| *i == id) {
            buf.iter_mut().zip(g).for_each(|(b, v)| *b += scale * v);
        }
    }

    /// All components, parameter by parameter.
    pub fn flatten(&self) -> Vec<f32> {
        self.grads.iter().flat_map(|(_, g)| g.iter().copied()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.grads.iter().all(|(_, g)| g.iter().all(|v| *v == 0.0))
    }
}

/// Samples one trajectory per batch item from the live policy and returns
/// `Δθ = (1/K) Σ_k Σ_i ∇ log π(a_i|s_i) (R_i − b)` with the sampled routes.
pub fn reinforce_gradient(
    model: &Model,
    batch: &[(Tensor, Tensor)],
    rng: &mut dyn RngCore,
    rewards: &mut dyn RewardSource,
) -> Result<(PolicyGradient, Vec<Vec<usize>>)> {
    check_batch(batch)?;
    let k = batch.len() as f32;
    let mut delta = PolicyGradient::zeros(model);
    let mut routes = Vec::with_capacity(batch.len());
    for (input, target) in batch {
        let mut tape = Tape::new();
        let x = tape.leaf(input.clone());
        let pass = model.forward(&mut tape, x, RouteMode::Train(&mut *rng))?;
        let restored = tape.value(pass.restored).clone();
        let tr = rewards.trajectory(model, input, &restored, target, &pass.actions)?;
        if let Some(loss) = surrogate(&mut tape, &pass.log_probs, &tr.advantages(), 1.0 / k)? {
            let grads = tape.backward(loss)?;
            for (id, g) in grads.params() {
                delta.add(id, &g, -1.0);
            }
        }
        routes.push(pass.actions);
    }
    Ok((delta, routes))
}

/// `θ ← θ + β Δθ` carried out as an Adam step on `−Δθ`; the CNN is untouched.
pub fn reinforce_update(model: &mut Model, delta: &PolicyGradient, lr: f32) -> Result<()> {
    let store = model.params_mut();
    for (id, g) in &delta.grads {
        let neg: Vec<f32> = g.iter().map(|v| -v).collect();
        store.get_mut(*id).value.set_grad(Some(neg))?;
    }
    let ids: Vec<ParamId> = delta.grads.iter().map(|(id, _)| *id).collect();
    store.adam_step(&ids, lr)
}

/// Joint stage-2 update. Routes are sampled from the policy; the same
/// trajectories drive the CNN's MSE step and the pathfinder's REINFORCE step.
/// A zero learning rate leaves that parameter group (and its optimiser state) alone.
pub fn stage2_step(
    model: &mut Model,
    batch: &[(Tensor, Tensor)],
    lr_cnn: f32,
    lr_pathfinder: f32,
    rng: &mut dyn RngCore,
    rewards: &mut dyn RewardSource,
) -> Result<StepStats> {
    check_batch(batch)?;
    let k = batch.len() as f32;
    let mut loss_sum = 0.0;
    let mut reward_sum = 0.0;
    let mut flops = 0.0;
    model.params_mut().clear_grads();
    for (input, target) in batch {
        let mut tape = Tape::new();
        let x = tape.leaf(input.clone());
        let y = tape.leaf(target.clone());
        let pass = model.forward(&mut tape, x, RouteMode::Train(&mut *rng))?;
        let restored = tape.value(pass.restored).clone();
        let tr = rewards.trajectory(model, input, &restored, target, &pass.actions)?;
        reward_sum += tr.total();
        let mse = tape.mse(pass.restored, y)?;
        loss_sum += finite_loss(tape.scalar(mse))?;
        let mse_term = tape.scale(mse, 1.0 / k);
        let loss = match surrogate(&mut tape, &pass.log_probs, &tr.advantages(), 1.0 / k)? {
            Some(pg) => tape.add(mse_term, pg)?,
            None => mse_term,
        };
        let grads = tape.backward(loss)?;
        model.params_mut().accumulate(&grads, 1.0)?;
        flops += model.count_flops(&pass.actions)?.total() as f64;
    }
    if lr_cnn > 0.0 {
        let ids = model.cnn_ids();
        model.params_mut().adam_step(&ids, lr_cnn)?;
    }
    if lr_pathfinder > 0.0 {
        let ids = model.pathfinder_ids();
        model.params_mut().adam_step(&ids, lr_pathfinder)?;
    }
    model.params_mut().clear_grads();
    Ok(StepStats {
        loss: loss_sum / k,
        mean_reward: reward_sum / k,
        mean_flops: flops / k as f64,
    })
}

/// One line of the metrics log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub iter: usize,
    pub stage: Stage,
    pub loss: f32,
    pub mean_reward: f32,
    pub mean_flops: f64,
    pub psnr: f64,
}

pub const METRICS_HEADER: &str = "iter,stage,loss,mean_reward,mean_flops,psnr";

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:.1},{:.4}",
            self.iter, self.stage, self.loss, self.mean_reward, self.mean_flops, self.psnr
        )
    }
}

/// Mean PSNR of the model on held-out pairs: all-residual routes in stage 1,
/// argmax routes in stage 2.
pub fn holdout_psnr(model: &Model, holdout: &[(Tensor, Tensor)], stage: Stage) -> Result<f64> {
    if holdout.is_empty() {
        return Ok(f64::NAN);
    }
    let full = vec![1; model.config().blocks];
    let mut total = 0.0;
    for (input, target) in holdout {
        let mode = match stage {
            Stage::One => RouteMode::Forced(&full),
            Stage::Two => RouteMode::Test,
        };
        let (out, _, _) = model.restore_patch(input, mode)?;
        let mut restored = Image::from_tensor(&out)?;
        restored.clamp01();
        total += psnr(&restored, &Image::from_tensor(target)?)?;
    }
    Ok(total / holdout.len() as f64)
}

/// Training batch for `iter`: samples `iter·K .. iter·K + K` of `data`.
pub fn batch_at(data: &Dataset, iter: usize, k: usize) -> Result<Vec<(Tensor, Tensor)>> {
    (0..k)
        .map(|j| {
            let s = data.sample((iter * k + j) as u64)?;
            Ok((s.degraded.to_tensor(), s.clean.to_tensor()))
        })
        .collect()
}

/// Checkpoint metadata: architecture, stage and completed iterations.
pub fn checkpoint_meta(model: &Model, cfg: &TrainConfig, stage: Stage, iter: usize) -> Meta {
    let mut meta = model_meta(model.config());
    for (k, v) in [
        ("train.stage", stage.to_string()),
        ("train.iter", iter.to_string()),
        ("train.seed", cfg.seed.to_string()),
        ("train.batch", cfg.batch.to_string()),
    ] {
        meta.push((k.to_string(), v));
    }
    meta
}

/// `(stage, completed iterations)` recorded in a checkpoint, if any.
pub fn resume_point(meta: &Meta) -> Result<Option<(Stage, usize)>> {
    let (Some(stage), Some(iter)) = (meta_get(meta, "train.stage"), meta_get(meta, "train.iter")) else {
        return Ok(None);
    };
    let stage = stage
        .parse::<u8>()
        .map_err(|_| Error::format("checkpoint", "bad train.stage"))?;
    let iter = iter
        .parse()
        .map_err(|_| Error::format("checkpoint", "bad train.iter"))?;
    Ok(Some((Stage::from_number(stage)?, iter)))
}

/// Runs `stage` from iteration `start` to the end of the stage.
///
/// Per-iteration randomness is derived from `(seed, stage, iter)`, so resuming
/// from a checkpoint taken at iteration `n` repeats an uninterrupted run exactly.
/// `on_row` receives every log row and `on_checkpoint` is called at each
/// checkpoint interval and once at the end.
#[allow(clippy::too_many_arguments)]
pub fn train(
    model: &mut Model,
    cfg: &TrainConfig,
    data: &Dataset,
    holdout: &[(Tensor, Tensor)],
    stage: Stage,
    start: usize,
    mut on_row: impl FnMut(&MetricsRow) -> Result<()>,
    mut on_checkpoint: impl FnMut(usize, &Model) -> Result<()>,
) -> Result<Vec<MetricsRow>> {
    cfg.validate()?;
    if data.channels() != model.config().channels {
        return Err(Error::config(format!(
            "dataset has {} channels, model expects {}",
            data.channels(),
            model.config().channels
        )));
    }
    let len = cfg.stage_len(stage);
    if start > len {
        return Err(Error::usage(format!("resume point {start} beyond stage length {len}")));
    }
    if !start.is_multiple_of(cfg.log_every) && start != len {
        return Err(Error::usage(format!("resume point {start} is not on a log boundary")));
    }
    let mut rewards = ImageReward(cfg.reward);
    let mut rows = Vec::new();
    let (mut loss, mut reward, mut flops, mut n) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    for iter in start..len {
        let batch = batch_at(data, iter, cfg.batch)?;
        let mut rng = derived_rng(cfg.seed, TAG_ROUTE + stage.number() as u64, iter as u64);
        let lr = lr_schedule(iter, cfg.lr0, len);
        let stats = match stage {
            Stage::One => stage1_step(model, &batch, lr, cfg.alpha, &mut rng)?,
            Stage::Two => stage2_step(
                model,
                &batch,
                lr * cfg.cnn_lr_scale,
                lr * cfg.pathfinder_lr_scale,
                &mut rng,
                &mut rewards,
            )?,
        };
        loss += stats.loss as f64;
        reward += stats.mean_reward as f64;
        flops += stats.mean_flops;
        n += 1;
        let done = iter + 1;
        if done % cfg.log_every == 0 {
            let row = MetricsRow {
                iter: done,
                stage,
                loss: (loss / n as f64) as f32,
                mean_reward: (reward / n as f64) as f32,
                mean_flops: flops / n as f64,
                psnr: holdout_psnr(model, holdout, stage)?,
            };
            on_row(&row)?;
            rows.push(row);
            (loss, reward, flops, n) = (0.0, 0.0, 0.0, 0);
        }
        if done % cfg.checkpoint_every == 0 && done != len {
            on_checkpoint(done, model)?;
        }
    }
    on_checkpoint(len, model)?;
    Ok(rows)
}

/// Share of non-bypass choices in a set of routes.
pub fn active_fraction(routes: &[Vec<usize>]) -> f64 {
    let total: usize = routes.iter().map(Vec::len).sum();
    if total == 0 {
        return 0.0;
    }
    let active = routes.iter().flatten().filter(|a| **a != BYPASS).count();
    active as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        assert_eq!(lr_schedule(0, 2e-4, 1000), 2e-4);
        assert_eq!(lr_schedule(249, 2e-4, 1000), 2e-4);
        assert_eq!(lr_schedule(250, 2e-4, 1000), 1e-4);
        assert_eq!(lr_schedule(500, 2e-4, 1000), 5e-5);
        assert_eq!(lr_schedule(999, 2e-4, 1000), 2.5e-5);
        assert_eq!(lr_schedule(5000, 2e-4, 1000), 2.5e-5);
    }

    #[test]
    fn objective_examples() {
        assert_eq!(stage1_objective(0.01, &[0.5, 0.7], 0.0), 0.01);
        assert_eq!(stage1_objective(0.0, &[0.0, 0.0], 0.1), 0.0);
        assert!((stage1_objective(0.01, &[0.02, 0.03], 0.1) - 0.015).abs() < 1e-9);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig {
            batch: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            lr0: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            log_every: 30,
            checkpoint_every: 100,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn stage_numbers() {
        assert_eq!(Stage::from_number(2).unwrap(), Stage::Two);
        assert!(Stage::from_number(3).is_err());
    }

    #[test]
    fn active_fraction_counts_non_bypass() {
        assert_eq!(active_fraction(&[vec![0, 1], vec![1, 1]]), 0.75);
        assert_eq!(active_fraction(&[]), 0.0);
    }
}
