//! Runs the curation pipeline on a synthetic pool: RL difficulty filter,
//! recovery-first SFT selection, overlap removal and the tool-balance cap.

use serde_json::json;
use unitool::curation::{curate, CurationConfig, SampledInstance};
use unitool::protocol::{parse_manager_turn, Observation, RoundRecord, Status, Trajectory};

const TOOLS: [&str; 4] = [
    "standard_reasoner",
    "knowledge_searcher",
    "code_reasoner",
    "critical_reviewer",
];

fn trajectory(question: &str, tool: &str, answer: &str, failed_first: bool) -> Trajectory {
    let mut t = Trajectory::new(question);
    let call = format!(
        "<tool_call>{}</tool_call>",
        json!({"name": tool, "arguments": {}})
    );
    let first = if failed_first {
        Observation::failure(Status::ExecErr, "tool crashed")
    } else {
        Observation::ok(json!(answer))
    };
    t.push_round(RoundRecord {
        round_index: 1,
        turn: parse_manager_turn(&format!("<reasoning>try</reasoning>\n{call}")),
        observations: vec![first],
        prompt_tokens: 0,
        completion_tokens: 0,
    });
    if failed_first {
        t.push_round(RoundRecord {
            round_index: 2,
            turn: parse_manager_turn(&format!("<reasoning>retry</reasoning>\n{call}")),
            observations: vec![Observation::ok(json!(answer))],
            prompt_tokens: 0,
            completion_tokens: 0,
        });
    }
    t.final_answer = Some(answer.to_string());
    t
}

fn main() {
    let cfg = CurationConfig {
        samples_per_instance: 4,
        ..CurationConfig::default()
    };
    let pool: Vec<SampledInstance> = (0..24)
        .map(|i| {
            let question = format!("Question number {i}?");
            // i % 5 correct samples out of 4 (capped), so some are all-wrong or all-right.
            let correct = (i % 5).min(4);
            let trajectories = (0..4)
                .map(|s| {
                    let tool = TOOLS[(i + s) % TOOLS.len()];
                    let answer = if s < correct { "yes" } else { "no" };
                    trajectory(&question, tool, answer, s == 0 && i % 3 == 0)
                })
                .collect();
            SampledInstance {
                id: Some(format!("q{i}")),
                question,
                ground_truth: "yes".into(),
                trajectories,
                correctness: Vec::new(),
            }
        })
        .collect();

    // The pools overlap on questions 6..12; those leave the SFT side if RL keeps them.
    let (rl_pool, sft_pool) = (&pool[..12], &pool[6..]);
    let out = curate(rl_pool, sft_pool, &cfg);
    println!("{}", serde_json::to_string_pretty(&out.report).unwrap());
}
