//! Executes one round of four slow calls under the parallel limit, plus an
//! invalid call and one past the call budget.

use std::time::{Duration, Instant};

use serde_json::json;
use unitool::executor::{execute_round, ExecOptions};
use unitool::protocol::{Observation, ToolCallRequest};
use unitool::tools::{
    fn_adapter, CallContext, ParamSchema, ParamType, ToolKind, ToolRegistry, ToolSpec,
};

#[tokio::main]
async fn main() {
    let mut registry = ToolRegistry::new();
    registry
        .register(
            ToolSpec {
                name: "lookup".into(),
                description: "Slow key lookup".into(),
                parameter_schema: ParamSchema::empty().field("key", ParamType::Text, true),
                subtool: None,
                cost_units: 1.0,
                kind: ToolKind::Retrieval,
                timeout: Duration::from_secs(2),
            },
            fn_adapter(|args, ctx| async move {
                tokio::time::sleep(Duration::from_millis(200)).await;
                Observation::ok(json!(format!("slot {} -> {}", ctx.slot, args["key"])))
            }),
        )
        .unwrap();

    let mut calls: Vec<ToolCallRequest> = (1..=4)
        .map(|i| ToolCallRequest::new("lookup", json!({"key": format!("k{i}")})))
        .collect();
    calls.insert(1, ToolCallRequest::new("lookup", json!({"key": 7})));
    calls.push(ToolCallRequest::new("lookup", json!({"key": "k5"})));

    let ctx = CallContext {
        question: "demo".into(),
        round_index: 1,
        ..CallContext::default()
    };
    let start = Instant::now();
    let obs = execute_round(&registry, &calls, &ctx, ExecOptions::with_limit(4)).await;
    println!("{} calls in {:?}", calls.len(), start.elapsed());
    for (call, o) in calls.iter().zip(&obs) {
        println!(
            "{:>10} {:<9} {}",
            call.arguments["key"].to_string(),
            o.status.as_str(),
            o.render_value()
        );
    }
}
