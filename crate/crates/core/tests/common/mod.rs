#![allow(dead_code)]

pub mod format_corpus;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use serde_json::json;

use unitool::orchestrator::{Orchestrator, OrchestratorConfig, Summarizer};
use unitool::prompts::PromptSet;
use unitool::protocol::{
    parse_manager_turn, Observation, RoundRecord, Status, ToolCallRequest, Trajectory,
};
use unitool::rewards::RewardConfig;
use unitool::tools::{
    fn_adapter, ModelEndpoint, ParamSchema, ParamType, ScriptedChatBackend, ToolKind, ToolRegistry,
    ToolSpec,
};

pub fn spec(name: &str, schema: ParamSchema, cost: f64, timeout: Duration) -> ToolSpec {
    ToolSpec {
        name: name.into(),
        description: format!("{name} test tool"),
        parameter_schema: schema,
        subtool: None,
        cost_units: cost,
        kind: ToolKind::Sandbox,
        timeout,
    }
}

pub fn final_answer_spec() -> ToolSpec {
    spec(
        "final_answer",
        ParamSchema::open(),
        1.0,
        Duration::from_secs(5),
    )
}

/// Per-tool invocation counters.
#[derive(Clone, Default)]
pub struct Counters(Arc<std::sync::Mutex<BTreeMap<String, usize>>>);

impl Counters {
    pub fn bump(&self, name: &str) {
        *self.0.lock().unwrap().entry(name.to_string()).or_default() += 1;
    }

    pub fn get(&self, name: &str) -> usize {
        self.0.lock().unwrap().get(name).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.0.lock().unwrap().values().sum()
    }
}

/// `echo` returns its `id` argument after `delay_ms` (both required), so the
/// position of each observation can be checked against its call.
pub fn echo_registry(counters: Counters) -> ToolRegistry {
    let mut reg = ToolRegistry::new();
    for name in ["echo_a", "echo_b", "echo_c"] {
        let c = counters.clone();
        let tool = name.to_string();
        reg.register(
            spec(
                name,
                ParamSchema::empty()
                    .field("id", ParamType::Any, true)
                    .field("delay_ms", ParamType::Any, true),
                1.0,
                Duration::from_secs(5),
            ),
            fn_adapter(move |args, _| {
                let c = c.clone();
                let tool = tool.clone();
                async move {
                    c.bump(&tool);
                    let delay = args["delay_ms"].as_u64().unwrap_or(0);
                    tokio::time::sleep(Duration::from_millis(delay)).await;
                    Observation::ok(json!({"tool": tool, "id": args["id"]}))
                }
            }),
        )
        .unwrap();
    }
    reg
}

/// Tools `alpha`, `beta`, `gamma` sleeping `delay` and returning `OK`, plus
/// `final_answer`.
pub fn sleepy_registry(delay: Duration, counters: Counters) -> ToolRegistry {
    let mut reg = ToolRegistry::new();
    for name in ["alpha", "beta", "gamma"] {
        let c = counters.clone();
        let tool = name.to_string();
        reg.register(
            spec(name, ParamSchema::open(), 1.0, Duration::from_secs(5)),
            fn_adapter(move |_, ctx| {
                let c = c.clone();
                let tool = tool.clone();
                async move {
                    c.bump(&tool);
                    tokio::time::sleep(delay).await;
                    Observation::ok(json!(format!(
                        "{tool} done in round {} slot {}",
                        ctx.round_index, ctx.slot
                    )))
                }
            }),
        )
        .unwrap();
    }
    let c = counters.clone();
    reg.register(
        final_answer_spec(),
        fn_adapter(move |_, _| {
            let c = c.clone();
            async move {
                c.bump("final_answer");
                Observation::ok(json!("termination requested"))
            }
        }),
    )
    .unwrap();
    reg
}

pub fn summarizer(reply: &str) -> Summarizer {
    Summarizer {
        backend: Arc::new(ScriptedChatBackend::constant(reply.to_string())),
        endpoint: ModelEndpoint::new("http://unused.invalid/v1", "summarizer"),
    }
}

pub fn orchestrator(registry: ToolRegistry, summary: &str) -> Orchestrator {
    let cfg = OrchestratorConfig {
        record_timing: false,
        ..OrchestratorConfig::default()
    };
    Orchestrator::new(
        cfg,
        registry,
        summarizer(summary),
        Arc::new(PromptSet::default()),
    )
    .unwrap()
}

pub fn turn(names: &[&str]) -> String {
    let mut s = "<reasoning>plan</reasoning>".to_string();
    for n in names {
        s.push_str(&format!(
            "\n<tool_call>{}</tool_call>",
            ToolCallRequest::new(*n, json!({})).to_wire()
        ));
    }
    s
}

pub fn count_calls(counter: &AtomicUsize) -> usize {
    counter.load(Ordering::SeqCst)
}

/// Cost table used by the random generator.
pub const TOOL_COSTS: [(&str, f64); 9] = [
    ("standard_reasoner", 1.0),
    ("critical_reviewer", 1.0),
    ("knowledge_searcher", 1.0),
    ("search", 0.0),
    ("code_reasoner", 1.0),
    ("python", 0.0),
    ("ensemble_solver", 4.0),
    ("final_answer", 1.0),
    ("web_browser", 0.0),
];

/// A generated trajectory with the ground-truth facts the oracle needs,
/// recorded at generation time rather than recomputed from the record.
pub struct Generated {
    pub traj: Trajectory,
    pub ground_truth: String,
    pub answer_matches: bool,
    pub fmt_labels: Vec<u8>,
    pub calls_per_round: Vec<usize>,
    pub names: Vec<String>,
    pub costs: Vec<f64>,
    pub manager_tokens: u64,
    pub tool_tokens: u64,
    pub include_tool_tokens: bool,
}

const TOKEN_POINTS: [u64; 7] = [0, 12_287, 12_288, 12_289, 18_432, 24_576, 24_577];

pub fn random_trajectory<R: Rng>(rng: &mut R) -> Generated {
    let truth: u32 = rng.random_range(0..1000);
    let ground_truth = truth.to_string();
    let (final_answer, answer_matches) = match rng.random_range(0..6) {
        0 => (None, false),
        1 => (Some(format!(" \\boxed{{{truth}}} ")), true),
        2 => (Some(format!("${truth}$")), true),
        3 => (Some((truth + 1).to_string()), false),
        4 => (Some(format!("{truth}.0")), false),
        _ => (Some(truth.to_string()), true),
    };

    let mut traj = Trajectory::new(format!("question {truth}"));
    let mut fmt_labels = Vec::new();
    let mut calls_per_round = Vec::new();
    let mut names = Vec::new();
    let mut costs = Vec::new();
    let mut tool_tokens = 0;
    let rounds = rng.random_range(1..=12);
    for t in 1..=rounds {
        let n = rng.random_range(0..=4usize);
        let well_formed = n > 0 && rng.random_bool(0.7);
        let mut body = String::new();
        let mut observations = Vec::new();
        for _ in 0..n {
            let (name, cost) = TOOL_COSTS[rng.random_range(0..TOOL_COSTS.len())];
            names.push(name.to_string());
            body.push_str(&format!(
                "<tool_call>{}</tool_call>\n",
                ToolCallRequest::new(name, json!({"subtask": "s"})).to_wire()
            ));
            let status = [
                Status::Ok,
                Status::ParseErr,
                Status::ExecErr,
                Status::Timeout,
            ][rng.random_range(0..4)];
            let charged = if status == Status::ParseErr {
                0.0
            } else {
                cost
            };
            costs.push(charged);
            let tokens = rng.random_range(0..3000u64);
            tool_tokens += tokens;
            observations.push(Observation {
                value: Some(json!("v")),
                status,
                reason: None,
                elapsed_ms: 0,
                cost_units: charged,
                tool_tokens: tokens,
            });
        }
        if n == 0 {
            observations.push(Observation::rejected("no parseable tool call in the turn"));
        }
        let raw = match (well_formed, n, rng.random_range(0..3)) {
            (true, _, _) => format!("<reasoning>round {t}</reasoning>\n{body}"),
            (false, 0, _) => format!("<reasoning>round {t} has no call</reasoning>"),
            (false, _, 0) => format!("round {t} without tags\n{body}"),
            (false, _, 1) => format!("<reasoning>round {t}</reasoning>\n{body}trailing words"),
            (false, _, _) => format!("Plan first.\n<reasoning>round {t}</reasoning>\n{body}"),
        };
        fmt_labels.push(u8::from(well_formed));
        calls_per_round.push(n);
        traj.push_round(RoundRecord {
            round_index: t,
            turn: parse_manager_turn(&raw),
            observations,
            prompt_tokens: 0,
            completion_tokens: 0,
        });
    }
    let manager_tokens = if rng.random_bool(0.3) {
        TOKEN_POINTS[rng.random_range(0..TOKEN_POINTS.len())]
    } else {
        rng.random_range(0..30_000)
    };
    traj.total_tokens = manager_tokens;
    traj.final_answer = final_answer;
    Generated {
        traj,
        ground_truth,
        answer_matches,
        fmt_labels,
        calls_per_round,
        names,
        costs,
        manager_tokens,
        tool_tokens,
        include_tool_tokens: rng.random_bool(0.5),
    }
}

/// Straight-line reward from the generator's own facts.
/// Returns `[task, format, parallel, tool, length, cost, total]`.
pub fn oracle_reward(
    g: &Generated,
    theta_par: f64,
    theta_tool: usize,
    l_tar: f64,
    c_tar: f64,
) -> [f64; 7] {
    let l_max = 2.0 * l_tar;
    let c_max = 2.0 * c_tar;
    let task = if g.answer_matches { 1.0 } else { 0.0 };
    let rounds = g.fmt_labels.len() as f64;
    let format = g.fmt_labels.iter().map(|&b| b as f64).sum::<f64>() / rounds;
    let p = g.calls_per_round.iter().sum::<usize>() as f64 / rounds;
    let parallel = if p >= theta_par { 1.0 } else { 0.0 };
    let distinct: BTreeSet<&str> = g
        .names
        .iter()
        .map(String::as_str)
        .filter(|n| *n != "final_answer")
        .collect();
    let tool = if distinct.len() >= theta_tool {
        1.0
    } else {
        0.0
    };
    let length = if g.include_tool_tokens {
        (g.manager_tokens + g.tool_tokens) as f64
    } else {
        g.manager_tokens as f64
    };
    let r_len = if length <= l_tar {
        1.0
    } else if length >= l_max {
        0.0
    } else {
        (l_max - length) / (l_max - l_tar)
    };
    let cost: f64 = g.costs.iter().sum();
    let r_cost = if cost <= c_tar {
        1.0
    } else if cost >= c_max {
        0.0
    } else {
        (c_max - cost) / (c_max - c_tar)
    };
    let total = task + format + 0.5 * (parallel + tool) + 0.5 * (r_len + r_cost);
    [task, format, parallel, tool, r_len, r_cost, total]
}

pub fn reward_config_for(g: &Generated) -> RewardConfig {
    RewardConfig {
        include_tool_tokens: g.include_tool_tokens,
        ..RewardConfig::default()
    }
}
