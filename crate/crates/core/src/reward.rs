//! Difficulty-regulated reward and the all-bypass baseline.

use crate::error::{Error, Result};
use crate::model::{Model, RouteMode, BYPASS};
use crate::nn::{mse, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardConfig {
    /// Penalty per non-bypass block.
    pub penalty: f32,
    /// Loss at which a region counts as fully difficult.
    pub threshold: f32,
    /// Force difficulty to 1 (the non-regulated ablation).
    pub non_regulated: bool,
}

impl RewardConfig {
    pub fn denoising() -> Self {
        RewardConfig {
            penalty: 8e-6,
            threshold: 5e-4,
            non_regulated: false,
        }
    }

    pub fn mixed() -> Self {
        RewardConfig {
            penalty: 4e-5,
            threshold: 0.01,
            non_regulated: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            return Err(Error::config(format!(
                "reward penalty must be positive, got {}",
                self.penalty
            )));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::config(format!(
                "difficulty threshold must be positive, got {}",
                self.threshold
            )));
        }
        Ok(())
    }

    fn difficulty_of(&self, loss: f32) -> Result<f32> {
        if self.non_regulated {
            if loss < 0.0 {
                return Err(Error::usage(format!("negative loss {loss}")));
            }
            Ok(1.0)
        } else {
            difficulty(loss, self.threshold)
        }
    }
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig::denoising()
    }
}

/// `loss / threshold` below the threshold, 1 at or above it.
pub fn difficulty(loss: f32, threshold: f32) -> Result<f32> {
    if loss < 0.0 || loss.is_nan() {
        return Err(Error::usage(format!("difficulty of negative loss {loss}")));
    }
    if threshold <= 0.0 {
        return Err(Error::usage(format!(
            "difficulty threshold must be positive, got {threshold}"
        )));
    }
    Ok(if loss < threshold { loss / threshold } else { 1.0 })
}

/// Reward for block `block` (0-based) of `blocks`. Only the last block sees
/// the regulated gain `difficulty · (−ΔL2)`.
pub fn step_reward(block: usize, blocks: usize, action: usize, penalty: f32, difficulty: f32, delta_l2: f32) -> f32 {
    let cost = if action == BYPASS { 0.0 } else { -penalty };
    if block + 1 == blocks {
        cost + difficulty * -delta_l2
    } else {
        cost
    }
}

/// `mse(restored, y) − mse(x, y)`; negative when restoration helped.
pub fn delta_l2(input: &Tensor, restored: &Tensor, target: &Tensor) -> Result<f32> {
    if input.shape() != target.shape() {
        return Err(Error::config(format!(
            "input {:?} vs target {:?}",
            input.shape(),
            target.shape()
        )));
    }
    Ok(mse(restored, target)? - mse(input, target)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryReward {
    pub rewards: Vec<f32>,
    /// Reward-to-go `Σ_{j≥i} r_j`.
    pub returns: Vec<f32>,
    pub baseline: f32,
}

impl TrajectoryReward {
    pub fn total(&self) -> f32 {
        self.returns.first().copied().unwrap_or(0.0)
    }

    /// `R_i − b` per block.
    pub fn advantages(&self) -> Vec<f32> {
        self.returns.iter().map(|r| r - self.baseline).collect()
    }
}

/// Suffix sums, accumulated from the last block backwards.
pub fn returns(rewards: &[f32]) -> Vec<f32> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (i, r) in rewards.iter().enumerate().rev() {
        acc += r;
        out[i] = acc;
    }
    out
}

/// Rewards for one trajectory. The baseline is left at zero; see [`baseline`].
pub fn trajectory_rewards(
    actions: &[usize],
    input: &Tensor,
    restored: &Tensor,
    target: &Tensor,
    cfg: &RewardConfig,
) -> Result<TrajectoryReward> {
    if actions.is_empty() {
        return Err(Error::usage("empty trajectory"));
    }
    let loss = mse(restored, target)?;
    let d = cfg.difficulty_of(loss)?;
    let gain = delta_l2(input, restored, target)?;
    let n = actions.len();
    let rewards: Vec<f32> = actions
        .iter()
        .enumerate()
        .map(|(i, a)| step_reward(i, n, *a, cfg.penalty, d, gain))
        .collect();
    Ok(TrajectoryReward {
        returns: returns(&rewards),
        rewards,
        baseline: 0.0,
    })
}

/// Total reward of the all-bypass route on `(input, target)`.
pub fn baseline(model: &Model, input: &Tensor, target: &Tensor, cfg: &RewardConfig) -> Result<f32> {
    let route = vec![BYPASS; model.config().blocks];
    let (restored, _, _) = model.restore_patch(input, RouteMode::Forced(&route))?;
    Ok(trajectory_rewards(&route, input, &restored, target, cfg)?.total())
}
