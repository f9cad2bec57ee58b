//! Fault injection and usage analysis.
//!
//! A [`FaultSchedule`] forces a status on chosen `(round, slot)` positions
//! (both 1-based). [`wrap_registry`] installs it around every adapter, so the
//! executor itself is untouched. Schedules are TOML:
//!
//! ```toml
//! [[fault]]
//! round = 1
//! slot = 1
//! status = "EXEC_ERR"
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::protocol::{Observation, Status, Trajectory};
use crate::rewards::mean_parallelism;
use crate::tools::{CallContext, ToolAdapter, ToolRegistry, ToolSpec};
use crate::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultEntry {
    pub round: usize,
    pub slot: usize,
    pub status: Status,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSchedule {
    #[serde(default, rename = "fault")]
    pub entries: Vec<FaultEntry>,
}

impl FaultSchedule {
    pub fn new(entries: Vec<FaultEntry>) -> Self {
        Self { entries }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Checks bounds, statuses and uniqueness of positions.
    pub fn validate(&self, max_rounds: usize, max_slots: usize) -> Result<(), ConfigError> {
        let mut seen = BTreeSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            let field = format!("fault[{i}]");
            if e.round == 0 || e.round > max_rounds {
                return Err(ConfigError::invalid(
                    field,
                    format!("round {} outside 1..={max_rounds}", e.round),
                ));
            }
            if e.slot == 0 || e.slot > max_slots {
                return Err(ConfigError::invalid(
                    field,
                    format!("slot {} outside 1..={max_slots}", e.slot),
                ));
            }
            if e.status == Status::Ok {
                return Err(ConfigError::invalid(
                    field,
                    "forced status must be a failure",
                ));
            }
            if !seen.insert((e.round, e.slot)) {
                return Err(ConfigError::invalid(
                    field,
                    format!("duplicate entry for round {} slot {}", e.round, e.slot),
                ));
            }
        }
        Ok(())
    }

    pub fn forced(&self, round: usize, slot: usize) -> Option<Status> {
        self.entries
            .iter()
            .find(|e| e.round == round && e.slot == slot)
            .map(|e| e.status)
    }
}

fn injected(status: Status) -> Observation {
    let diag = format!("injected fault: {status}");
    match status {
        Status::ParseErr => Observation::rejected(diag),
        other => Observation::failure(other, diag),
    }
}

struct FaultAdapter {
    inner: Arc<dyn ToolAdapter>,
    schedule: Arc<FaultSchedule>,
}

#[async_trait]
impl ToolAdapter for FaultAdapter {
    async fn invoke(
        &self,
        spec: &ToolSpec,
        args: &Map<String, Value>,
        ctx: &CallContext,
    ) -> Observation {
        match self.schedule.forced(ctx.round_index, ctx.slot) {
            Some(status) => injected(status),
            None => self.inner.invoke(spec, args, ctx).await,
        }
    }
}

/// Registry whose adapters return the scheduled status instead of running.
pub fn wrap_registry(registry: &ToolRegistry, schedule: FaultSchedule) -> ToolRegistry {
    let schedule = Arc::new(schedule);
    registry.map_adapters(|_, inner| {
        Arc::new(FaultAdapter {
            inner,
            schedule: schedule.clone(),
        }) as Arc<dyn ToolAdapter>
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageReport {
    pub trajectories: usize,
    pub total_calls: usize,
    /// Percent of all calls per tool.
    pub tool_share: BTreeMap<String, f64>,
    /// Percent of model-routed calls per model.
    pub model_share: BTreeMap<String, f64>,
    pub status_counts: BTreeMap<String, usize>,
    pub mean_rounds: f64,
    pub mean_parallelism: f64,
    pub mean_cost: f64,
    pub mean_tokens: f64,
}

fn percentages(counts: BTreeMap<String, usize>) -> BTreeMap<String, f64> {
    let total: usize = counts.values().sum();
    counts
        .into_iter()
        .map(|(k, n)| (k, 100.0 * n as f64 / total.max(1) as f64))
        .collect()
}

/// Tool and model call shares plus per-trajectory means. `model_tools` names
/// the tools that route to a model; their calls without a `model_id` (or
/// `model`) argument are charged to `default_model`.
pub fn usage_report(
    trajs: &[Trajectory],
    model_tools: &[&str],
    default_model: &str,
) -> Option<UsageReport> {
    if trajs.is_empty() {
        return None;
    }
    let mut tools: BTreeMap<String, usize> = BTreeMap::new();
    let mut models: BTreeMap<String, usize> = BTreeMap::new();
    let mut statuses: BTreeMap<String, usize> = BTreeMap::new();
    let mut total_calls = 0;
    for t in trajs {
        for call in t.calls() {
            total_calls += 1;
            *tools.entry(call.name.clone()).or_default() += 1;
            if model_tools.contains(&call.name.as_str()) {
                let model = call
                    .arguments
                    .get("model_id")
                    .or_else(|| call.arguments.get("model"))
                    .and_then(Value::as_str)
                    .unwrap_or(default_model);
                *models.entry(model.to_string()).or_default() += 1;
            }
        }
        for obs in t.observations() {
            *statuses.entry(obs.status.to_string()).or_default() += 1;
        }
    }
    let n = trajs.len() as f64;
    Some(UsageReport {
        trajectories: trajs.len(),
        total_calls,
        tool_share: percentages(tools),
        model_share: percentages(models),
        status_counts: statuses,
        mean_rounds: trajs.iter().map(|t| t.rounds.len() as f64).sum::<f64>() / n,
        mean_parallelism: trajs.iter().map(mean_parallelism).sum::<f64>() / n,
        mean_cost: trajs.iter().map(|t| t.total_cost).sum::<f64>() / n,
        mean_tokens: trajs.iter().map(|t| t.total_tokens as f64).sum::<f64>() / n,
    })
}

/// Horizontal bar chart of the tool and model shares as a standalone SVG.
pub fn usage_svg(report: &UsageReport) -> String {
    const ROW: usize = 22;
    const LABEL: usize = 170;
    const BAR: f64 = 360.0;
    let sections = [
        ("Tool calls (%)", &report.tool_share),
        ("Model calls (%)", &report.model_share),
    ];
    let rows: usize = sections.iter().map(|(_, m)| m.len() + 2).sum();
    let height = rows * ROW + 10;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" font-family="sans-serif" font-size="12">"#,
        LABEL + BAR as usize + 70
    );
    let mut y = ROW;
    for (title, shares) in sections {
        let _ = writeln!(
            svg,
            r#"<text x="4" y="{y}" font-weight="bold">{title}</text>"#
        );
        y += ROW;
        for (name, pct) in shares.iter() {
            let w = BAR * pct / 100.0;
            let _ = writeln!(
                svg,
                r#"<text x="4" y="{}">{}</text>"#,
                y - 6,
                xml_escape(name)
            );
            let _ = writeln!(
                svg,
                r##"<rect x="{LABEL}" y="{}" width="{w:.1}" height="{}" fill="#4a78b5"/>"##,
                y - 18,
                ROW - 6
            );
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{}">{pct:.1}</text>"#,
                LABEL as f64 + w + 4.0,
                y - 6
            );
            y += ROW;
        }
        y += ROW;
    }
    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
