//! Trajectory reward `R = R_task + R_fmt + R_div + R_eff`.
//!
//! * `R_task`: 1 when the normalized final answer equals the normalized
//!   ground truth.
//! * `R_fmt`: mean over rounds of the binary format check.
//! * `R_div`: mean of `R_par` (mean calls per round ≥ `theta_par`) and
//!   `R_tool` (distinct non-final tools ≥ `theta_tool`).
//! * `R_eff`: mean of the soft length and cost budgets, each 1 up to its
//!   target and falling linearly to 0 at twice the target.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::answer::normalize_answer;
use crate::protocol::{check_format, Trajectory, FINAL_ANSWER};
use crate::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub theta_par: f64,
    pub theta_tool: u32,
    pub length_target: u64,
    pub cost_target: f64,
    /// Must equal `2 * length_target`.
    pub length_max: u64,
    /// Must equal `2 * cost_target`.
    pub cost_max: f64,
    /// Count tokens spent inside agent tools toward the trajectory length.
    pub include_tool_tokens: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            theta_par: 1.25,
            theta_tool: 3,
            length_target: 12_288,
            cost_target: 8.0,
            length_max: 24_576,
            cost_max: 16.0,
            include_tool_tokens: false,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.theta_par.is_finite() && self.theta_par > 0.0) {
            return Err(ConfigError::invalid(
                "rewards.theta_par",
                "must be a positive number",
            ));
        }
        if self.length_target == 0 {
            return Err(ConfigError::invalid(
                "rewards.length_target",
                "must be positive",
            ));
        }
        if !(self.cost_target.is_finite() && self.cost_target > 0.0) {
            return Err(ConfigError::invalid(
                "rewards.cost_target",
                "must be a positive number",
            ));
        }
        if self.length_max != 2 * self.length_target {
            return Err(ConfigError::invalid(
                "rewards.length_max",
                format!("must equal 2 * length_target = {}", 2 * self.length_target),
            ));
        }
        if self.cost_max != 2.0 * self.cost_target {
            return Err(ConfigError::invalid(
                "rewards.cost_max",
                format!("must equal 2 * cost_target = {}", 2.0 * self.cost_target),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub task: f64,
    pub format: f64,
    pub diversity: f64,
    pub parallel: f64,
    pub tool: f64,
    pub efficiency: f64,
    pub length: f64,
    pub cost: f64,
    pub total: f64,
}

pub fn reward_task(traj: &Trajectory, ground_truth: &str) -> f64 {
    match &traj.final_answer {
        Some(answer) if normalize_answer(answer) == normalize_answer(ground_truth) => 1.0,
        _ => 0.0,
    }
}

pub fn reward_format(traj: &Trajectory) -> f64 {
    if traj.rounds.is_empty() {
        return 0.0;
    }
    let sum: u32 = traj
        .rounds
        .iter()
        .map(|r| u32::from(check_format(&r.turn)))
        .sum();
    f64::from(sum) / traj.rounds.len() as f64
}

/// Mean number of parsed calls per round.
pub fn mean_parallelism(traj: &Trajectory) -> f64 {
    if traj.rounds.is_empty() {
        return 0.0;
    }
    let calls: usize = traj.rounds.iter().map(|r| r.turn.calls.len()).sum();
    calls as f64 / traj.rounds.len() as f64
}

/// Distinct tool names called, `final_answer` excluded.
pub fn unique_tools(traj: &Trajectory) -> BTreeSet<&str> {
    traj.calls()
        .map(|c| c.name.as_str())
        .filter(|n| *n != FINAL_ANSWER)
        .collect()
}

pub fn reward_parallel(traj: &Trajectory, cfg: &RewardConfig) -> f64 {
    if !traj.rounds.is_empty() && mean_parallelism(traj) >= cfg.theta_par {
        1.0
    } else {
        0.0
    }
}

pub fn reward_tool(traj: &Trajectory, cfg: &RewardConfig) -> f64 {
    if unique_tools(traj).len() >= cfg.theta_tool as usize {
        1.0
    } else {
        0.0
    }
}

pub fn reward_diversity(traj: &Trajectory, cfg: &RewardConfig) -> f64 {
    0.5 * (reward_parallel(traj, cfg) + reward_tool(traj, cfg))
}

/// Soft budget: 1 up to `target`, linear down to 0 at `2 * target`.
pub fn soft_budget(value: f64, target: f64) -> f64 {
    if value <= target {
        1.0
    } else {
        ((2.0 * target - value) / target).max(0.0)
    }
}

pub fn reward_length(length: u64, cfg: &RewardConfig) -> f64 {
    soft_budget(length as f64, cfg.length_target as f64)
}

pub fn reward_cost(cost: f64, cfg: &RewardConfig) -> f64 {
    soft_budget(cost, cfg.cost_target)
}

/// `L(τ)`: manager-side tokens, plus tool-internal tokens when configured.
pub fn trajectory_length(traj: &Trajectory, cfg: &RewardConfig) -> u64 {
    if cfg.include_tool_tokens {
        traj.total_tokens + traj.tool_tokens()
    } else {
        traj.total_tokens
    }
}

pub fn reward_efficiency(traj: &Trajectory, cfg: &RewardConfig) -> f64 {
    0.5 * (reward_length(trajectory_length(traj, cfg), cfg) + reward_cost(traj.total_cost, cfg))
}

pub fn reward_total(traj: &Trajectory, ground_truth: &str, cfg: &RewardConfig) -> RewardBreakdown {
    let task = reward_task(traj, ground_truth);
    let format = reward_format(traj);
    let parallel = reward_parallel(traj, cfg);
    let tool = reward_tool(traj, cfg);
    let diversity = 0.5 * (parallel + tool);
    let length = reward_length(trajectory_length(traj, cfg), cfg);
    let cost = reward_cost(traj.total_cost, cfg);
    let efficiency = 0.5 * (length + cost);
    RewardBreakdown {
        task,
        format,
        diversity,
        parallel,
        tool,
        efficiency,
        length,
        cost,
        total: task + format + diversity + efficiency,
    }
}
