//! Dataset curation: RL instances filtered by outcome dispersion, at most one
//! SFT trajectory per question with recoveries preferred, a cap on any
//! single dominant tool, and removal of SFT questions that leak into the RL
//! set.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::answer::collapse_whitespace;
use crate::protocol::{Trajectory, FINAL_ANSWER};
use crate::rewards::reward_task;
use crate::ConfigError;

/// Label for trajectories that call no tool besides `final_answer`.
pub const NO_TOOL: &str = "none";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DedupKey {
    /// Lower-case, then collapse runs of whitespace.
    #[default]
    CasefoldWhitespace,
    /// Exact text.
    Exact,
}

impl DedupKey {
    pub fn normalize(self, question: &str) -> String {
        match self {
            DedupKey::CasefoldWhitespace => collapse_whitespace(&question.to_lowercase()),
            DedupKey::Exact => question.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationConfig {
    pub samples_per_instance: usize,
    /// Largest share of the SFT set any one dominant-tool class may hold.
    pub balance_cap: f64,
    pub dedup_key: DedupKey,
    /// Number of tool classes the cap must leave room for.
    pub tool_count: usize,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self {
            samples_per_instance: 8,
            balance_cap: 0.35,
            dedup_key: DedupKey::CasefoldWhitespace,
            tool_count: 7,
        }
    }
}

impl CurationConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.samples_per_instance < 2 {
            return Err(ConfigError::invalid(
                "curation.samples_per_instance",
                "must be at least 2",
            ));
        }
        if !(self.balance_cap > 0.0 && self.balance_cap <= 1.0) {
            return Err(ConfigError::invalid(
                "curation.balance_cap",
                "must lie in (0, 1]",
            ));
        }
        if self.balance_cap * (self.tool_count as f64) < 1.0 {
            return Err(ConfigError::invalid(
                "curation.balance_cap",
                format!(
                    "cap {} cannot cover {} tool classes",
                    self.balance_cap, self.tool_count
                ),
            ));
        }
        Ok(())
    }
}

/// One question with its sampled trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledInstance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub question: String,
    pub ground_truth: String,
    pub trajectories: Vec<Trajectory>,
    /// Per-trajectory correctness; scored from `ground_truth` when empty.
    #[serde(default)]
    pub correctness: Vec<u8>,
}

impl SampledInstance {
    /// Fills in `correctness` from the task reward when it is missing.
    pub fn scored(mut self) -> Self {
        if self.correctness.is_empty() {
            self.correctness = self
                .trajectories
                .iter()
                .map(|t| reward_task(t, &self.ground_truth) as u8)
                .collect();
        }
        self
    }

    pub fn correct_count(&self) -> usize {
        self.correctness.iter().filter(|&&c| c == 1).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RlDrop {
    AllCorrect,
    AllIncorrect,
    Incomplete,
}

pub fn rl_verdict(instance: &SampledInstance, cfg: &CurationConfig) -> Option<RlDrop> {
    let n = cfg.samples_per_instance;
    if instance.correctness.len() != n || instance.trajectories.len() != n {
        return Some(RlDrop::Incomplete);
    }
    match instance.correct_count() {
        0 => Some(RlDrop::AllIncorrect),
        c if c == n => Some(RlDrop::AllCorrect),
        _ => None,
    }
}

/// Keeps instances with `1 ≤ Σ correct ≤ samples_per_instance − 1`.
pub fn filter_rl_instances(
    instances: &[SampledInstance],
    cfg: &CurationConfig,
) -> Vec<SampledInstance> {
    instances
        .iter()
        .filter(|i| rl_verdict(i, cfg).is_none())
        .cloned()
        .collect()
}

/// A round with a non-OK observation followed by a strictly later round
/// whose observations are all OK.
pub fn is_recovery(traj: &Trajectory) -> bool {
    let Some(first_fail) = traj.rounds.iter().position(|r| r.has_failure()) else {
        return false;
    };
    traj.rounds[first_fail + 1..].iter().any(|r| r.all_ok())
}

/// Selection order: recoveries first, then fewer rounds, then lower cost.
/// Equal keys keep input order when used with a stable sort.
pub fn selection_order(a: &Trajectory, b: &Trajectory) -> Ordering {
    is_recovery(b)
        .cmp(&is_recovery(a))
        .then(a.rounds.len().cmp(&b.rounds.len()))
        .then(a.total_cost.total_cmp(&b.total_cost))
}

/// Index of the preferred correct trajectory.
pub fn select_sft_index(instance: &SampledInstance) -> Option<usize> {
    (0..instance.trajectories.len())
        .filter(|&i| instance.correctness.get(i) == Some(&1))
        .min_by(|&i, &j| {
            selection_order(&instance.trajectories[i], &instance.trajectories[j]).then(i.cmp(&j))
        })
}

pub fn select_sft_trajectory(instance: &SampledInstance) -> Option<&Trajectory> {
    select_sft_index(instance).map(|i| &instance.trajectories[i])
}

/// Most-called tool other than `final_answer`; ties go to the smallest name.
pub fn dominant_tool(traj: &Trajectory) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for call in traj.calls().filter(|c| c.name != FINAL_ANSWER) {
        *counts.entry(call.name.as_str()).or_default() += 1;
    }
    counts
        .iter()
        .fold(None::<(&str, usize)>, |best, (&name, &n)| match best {
            Some((_, m)) if m >= n => best,
            _ => Some((name, n)),
        })
        .map_or_else(|| NO_TOOL.to_string(), |(name, _)| name.to_string())
}

/// Share of each dominant-tool class.
pub fn class_shares(trajs: &[Trajectory]) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for t in trajs {
        *counts.entry(dominant_tool(t)).or_default() += 1;
    }
    let total = trajs.len().max(1) as f64;
    counts
        .into_iter()
        .map(|(k, n)| (k, n as f64 / total))
        .collect()
}

/// Greedy cap on dominant-tool classes. While some class with more than one
/// member exceeds the cap, the largest such class loses its lowest-priority
/// member. Returns `(kept, dropped)`, each in input order.
pub fn enforce_tool_balance(
    selected: &[Trajectory],
    cfg: &CurationConfig,
) -> (Vec<Trajectory>, Vec<Trajectory>) {
    let labels: Vec<String> = selected.iter().map(dominant_tool).collect();
    let mut alive = vec![true; selected.len()];
    let mut retained = selected.len();
    loop {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, label) in labels.iter().enumerate() {
            if alive[i] {
                *counts.entry(label.as_str()).or_default() += 1;
            }
        }
        let over = counts
            .iter()
            .filter(|(_, &n)| n > 1 && n as f64 > cfg.balance_cap * retained as f64)
            .fold(None::<(&str, usize)>, |best, (&name, &n)| match best {
                Some((_, m)) if m >= n => best,
                _ => Some((name, n)),
            });
        let Some((class, _)) = over else { break };
        let victim = (0..selected.len())
            .filter(|&i| alive[i] && labels[i] == class)
            .max_by(|&i, &j| selection_order(&selected[i], &selected[j]).then(i.cmp(&j)))
            .expect("class has members");
        alive[victim] = false;
        retained -= 1;
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (t, keep) in selected.iter().zip(alive) {
        if keep {
            kept.push(t.clone());
        } else {
            dropped.push(t.clone());
        }
    }
    (kept, dropped)
}

/// SFT questions whose normalized form does not occur in the RL set.
pub fn dedup_against(
    sft_questions: &[String],
    rl_questions: &[String],
    key: DedupKey,
) -> Vec<String> {
    let rl: BTreeSet<String> = rl_questions.iter().map(|q| key.normalize(q)).collect();
    sft_questions
        .iter()
        .filter(|q| !rl.contains(&key.normalize(q)))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CurationReport {
    pub balance_cap: f64,
    pub samples_per_instance: usize,
    pub rl_input: usize,
    pub rl_kept: usize,
    pub rl_dropped: BTreeMap<String, usize>,
    pub sft_input: usize,
    pub sft_dropped_overlap: usize,
    pub sft_dropped_no_correct: usize,
    pub sft_selected: usize,
    pub sft_dropped_balance: usize,
    pub sft_kept: usize,
    pub sft_recoveries: usize,
    /// Dominant-tool shares of the selected set before balancing.
    pub tool_share_before: BTreeMap<String, f64>,
    /// Dominant-tool shares of the final SFT set.
    pub tool_share_after: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurationOutput {
    pub rl: Vec<SampledInstance>,
    pub sft: Vec<Trajectory>,
    pub report: CurationReport,
}

/// Full pipeline. `rl_pool` feeds the RL filter; `sft_pool` feeds SFT
/// selection after questions overlapping the kept RL set are removed.
pub fn curate(
    rl_pool: &[SampledInstance],
    sft_pool: &[SampledInstance],
    cfg: &CurationConfig,
) -> CurationOutput {
    let mut report = CurationReport {
        balance_cap: cfg.balance_cap,
        samples_per_instance: cfg.samples_per_instance,
        rl_input: rl_pool.len(),
        sft_input: sft_pool.len(),
        ..CurationReport::default()
    };

    let rl_pool: Vec<SampledInstance> = rl_pool
        .iter()
        .cloned()
        .map(SampledInstance::scored)
        .collect();
    let mut rl = Vec::new();
    for inst in &rl_pool {
        match rl_verdict(inst, cfg) {
            None => rl.push(inst.clone()),
            Some(reason) => {
                let key = serde_json::to_value(reason)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string));
                *report
                    .rl_dropped
                    .entry(key.unwrap_or_default())
                    .or_default() += 1;
            }
        }
    }
    report.rl_kept = rl.len();

    let rl_keys: BTreeSet<String> = rl
        .iter()
        .map(|i| cfg.dedup_key.normalize(&i.question))
        .collect();
    let mut selected = Vec::new();
    for inst in sft_pool.iter().cloned().map(SampledInstance::scored) {
        if rl_keys.contains(&cfg.dedup_key.normalize(&inst.question)) {
            report.sft_dropped_overlap += 1;
            continue;
        }
        match select_sft_trajectory(&inst) {
            Some(t) => selected.push(t.clone()),
            None => report.sft_dropped_no_correct += 1,
        }
    }
    report.sft_selected = selected.len();
    report.tool_share_before = class_shares(&selected);

    let (sft, dropped) = enforce_tool_balance(&selected, cfg);
    report.sft_dropped_balance = dropped.len();
    report.sft_kept = sft.len();
    report.sft_recoveries = sft.iter().filter(|t| is_recovery(t)).count();
    report.tool_share_after = class_shares(&sft);

    CurationOutput { rl, sft, report }
}
