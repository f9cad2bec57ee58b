//! Injects an execution failure into the first call of round 1 and shows the
//! manager recovering in the next round. The recovered trajectory is then
//! preferred by SFT selection over a clean sibling.

use std::sync::Arc;
use std::time::Duration;

use serde_json::json;
use unitool::curation::{is_recovery, select_sft_index, SampledInstance};
use unitool::fault::{wrap_registry, FaultEntry, FaultSchedule};
use unitool::orchestrator::{Orchestrator, OrchestratorConfig, ScriptedPolicy, Summarizer};
use unitool::prompts::PromptSet;
use unitool::protocol::{Observation, Status};
use unitool::tools::{
    fn_adapter, ModelEndpoint, ParamSchema, ScriptedChatBackend, ToolKind, ToolRegistry, ToolSpec,
};

fn tool(name: &str, kind: ToolKind) -> ToolSpec {
    ToolSpec {
        name: name.into(),
        description: format!("{name} stub"),
        parameter_schema: ParamSchema::open(),
        subtool: None,
        cost_units: 1.0,
        kind,
        timeout: Duration::from_secs(1),
    }
}

fn call(name: &str) -> String {
    format!(
        "<tool_call>{}</tool_call>",
        json!({"name": name, "arguments": {}})
    )
}

#[tokio::main]
async fn main() {
    let mut registry = ToolRegistry::new();
    for name in ["standard_reasoner", "critical_reviewer"] {
        registry
            .register(
                tool(name, ToolKind::ModelBacked),
                fn_adapter(|_, _| async { Observation::ok(json!("<answer>\\boxed{12}</answer>")) }),
            )
            .unwrap();
    }
    registry
        .register(
            tool("final_answer", ToolKind::Terminal),
            fn_adapter(|_, _| async { Observation::ok(json!("done")) }),
        )
        .unwrap();

    let summarizer = Summarizer {
        backend: Arc::new(ScriptedChatBackend::constant("\\boxed{12}")),
        endpoint: ModelEndpoint::new("http://unused.invalid/v1", "summarizer"),
    };
    let cfg = OrchestratorConfig {
        record_timing: false,
        ..OrchestratorConfig::default()
    };
    let turns = vec![
        format!(
            "<reasoning>Ask two agents.</reasoning>\n{}\n{}",
            call("standard_reasoner"),
            call("critical_reviewer")
        ),
        format!(
            "<reasoning>Slot 1 failed, retry it.</reasoning>\n{}",
            call("standard_reasoner")
        ),
        format!(
            "<reasoning>Consistent.</reasoning>\n{}",
            call("final_answer")
        ),
    ];

    let schedule = FaultSchedule::new(vec![FaultEntry {
        round: 1,
        slot: 1,
        status: Status::ExecErr,
    }]);
    let faulty = Orchestrator::new(
        cfg.clone(),
        wrap_registry(&registry, schedule),
        summarizer.clone(),
        Arc::new(PromptSet::default()),
    )
    .unwrap();
    let clean =
        Orchestrator::new(cfg, registry, summarizer, Arc::new(PromptSet::default())).unwrap();

    let q = "What is 3 * 4?";
    let recovered = faulty
        .run_episode(q, &ScriptedPolicy::from_turns(turns.clone()))
        .await
        .unwrap();
    let plain = clean
        .run_episode(
            q,
            &ScriptedPolicy::from_turns([turns[0].clone(), turns[2].clone()]),
        )
        .await
        .unwrap();

    for r in &recovered.rounds {
        let statuses: Vec<&str> = r.observations.iter().map(|o| o.status.as_str()).collect();
        println!("round {}: {statuses:?}", r.round_index);
    }
    println!(
        "answer {:?}, recovery {}",
        recovered.final_answer,
        is_recovery(&recovered)
    );

    let instance = SampledInstance {
        id: Some("mul".into()),
        question: q.into(),
        ground_truth: "12".into(),
        trajectories: vec![plain, recovered],
        correctness: Vec::new(),
    }
    .scored();
    println!(
        "selected trajectory index: {:?}",
        select_sft_index(&instance)
    );
}
