//! Per-call validation and bounded-parallel execution of one round.
//!
//! Calls that fail validation are never dispatched and come back as
//! `(∅, PARSE_ERR)`. Valid calls run concurrently with at most
//! `parallel_limit` in flight, each under its tool's deadline; one call's
//! failure, timeout or panic never affects its siblings.

use std::sync::Arc;
use std::time::Instant;

use tokio::sync::Semaphore;

use crate::protocol::{Observation, Status, ToolCallRequest};
use crate::tools::{CallContext, ToolRegistry};

pub const DEFAULT_MAX_PARALLEL: usize = 4;

pub const UNREGISTERED_TOOL: &str = "unregistered tool";
pub const BUDGET_EXCEEDED: &str = "parallelism budget exceeded";

/// Per-call validity `ν` with aligned diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationReport {
    pub per_call: Vec<u8>,
    pub reasons: Vec<Option<String>>,
}

impl ValidationReport {
    pub fn is_valid(&self, j: usize) -> bool {
        self.per_call[j] == 1
    }

    pub fn valid_count(&self) -> usize {
        self.per_call.iter().filter(|&&v| v == 1).count()
    }
}

/// Judges every call on its own: the tool must be registered and the
/// arguments must match its schema.
pub fn validate(registry: &ToolRegistry, calls: &[ToolCallRequest]) -> ValidationReport {
    let (per_call, reasons) = calls
        .iter()
        .map(|call| match registry.spec(&call.name) {
            None => (0, Some(format!("{UNREGISTERED_TOOL}: `{}`", call.name))),
            Some(spec) => match spec.parameter_schema.validate(&call.arguments) {
                Ok(()) => (1, None),
                Err(reason) => (0, Some(reason)),
            },
        })
        .unzip();
    ValidationReport { per_call, reasons }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecOptions {
    /// Maximum calls in flight at once.
    pub parallel_limit: usize,
    /// Calls past this many slots in one turn are rejected, not run.
    pub max_calls: Option<usize>,
    /// Record wall-clock time per call. Off for byte-reproducible output.
    pub record_timing: bool,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self {
            parallel_limit: DEFAULT_MAX_PARALLEL,
            max_calls: Some(DEFAULT_MAX_PARALLEL),
            record_timing: true,
        }
    }
}

impl ExecOptions {
    pub fn with_limit(limit: usize) -> Self {
        Self {
            parallel_limit: limit,
            max_calls: Some(limit),
            ..Self::default()
        }
    }
}

/// Executes one round. The result is aligned with `calls`.
///
/// `ctx` describes the round; each call receives a copy with its 1-based
/// slot filled in.
pub async fn execute_round(
    registry: &ToolRegistry,
    calls: &[ToolCallRequest],
    ctx: &CallContext,
    opts: ExecOptions,
) -> Vec<Observation> {
    let report = validate(registry, calls);
    let semaphore = Arc::new(Semaphore::new(opts.parallel_limit.max(1)));
    let mut pending = Vec::with_capacity(calls.len());

    for (j, call) in calls.iter().enumerate() {
        if !report.is_valid(j) {
            let reason = report.reasons[j].clone().unwrap_or_default();
            pending.push(Slot::Done(Observation::rejected(reason)));
            continue;
        }
        if opts.max_calls.is_some_and(|max| j >= max) {
            pending.push(Slot::Done(Observation::rejected(BUDGET_EXCEEDED)));
            continue;
        }
        let (spec, adapter) = registry
            .get(&call.name)
            .expect("validated call has a registered tool");
        let (spec, adapter) = (spec.clone(), adapter.clone());
        let args = call.arguments.clone();
        let call_ctx = CallContext {
            slot: j + 1,
            ..ctx.clone()
        };
        let semaphore = semaphore.clone();
        let cost = spec.cost_units;
        let handle = tokio::spawn(async move {
            let _permit = semaphore
                .acquire_owned()
                .await
                .expect("semaphore is never closed");
            let started = Instant::now();
            let obs =
                match tokio::time::timeout(spec.timeout, adapter.invoke(&spec, &args, &call_ctx))
                    .await
                {
                    Ok(obs) => obs,
                    Err(_) => Observation::failure(
                        Status::Timeout,
                        format!(
                            "`{}` exceeded its {}ms deadline",
                            spec.name,
                            spec.timeout.as_millis()
                        ),
                    ),
                };
            (obs, started.elapsed().as_millis() as u64)
        });
        pending.push(Slot::Running(handle, cost, call.name.clone()));
    }

    let mut out = Vec::with_capacity(calls.len());
    for slot in pending {
        let obs = match slot {
            Slot::Done(obs) => obs,
            Slot::Running(handle, cost, name) => {
                let (obs, elapsed) = match handle.await {
                    Ok(pair) => pair,
                    Err(e) => (
                        Observation::failure(
                            Status::ExecErr,
                            format!("`{name}` adapter crashed: {e}"),
                        ),
                        0,
                    ),
                };
                Observation {
                    cost_units: cost,
                    elapsed_ms: if opts.record_timing { elapsed } else { 0 },
                    ..obs
                }
            }
        };
        out.push(obs);
    }
    out
}

enum Slot {
    Done(Observation),
    Running(tokio::task::JoinHandle<(Observation, u64)>, f64, String),
}
