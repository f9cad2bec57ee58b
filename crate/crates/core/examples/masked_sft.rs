//! Linearizes a trajectory and shows which tokens the SFT and RL losses see:
//! manager tokens are supervised, observation tokens are masked out.

use serde_json::json;
use unitool::protocol::{
    linearize, parse_manager_turn, Observation, RoundRecord, Trajectory, WhitespaceTokenizer,
};
use unitool::rl_math::masked_sft_nll_of;

fn main() {
    let mut traj = Trajectory::new("Name the capital of France.");
    traj.push_round(RoundRecord {
        round_index: 1,
        turn: parse_manager_turn(
            "<reasoning>One lookup suffices.</reasoning>\n<tool_call>{\"name\": \"knowledge_searcher\", \"arguments\": {}}</tool_call>",
        ),
        observations: vec![Observation::ok(json!("Paris is the capital and largest city of France."))],
        prompt_tokens: 0,
        completion_tokens: 0,
    });
    traj.push_round(RoundRecord {
        round_index: 2,
        turn: parse_manager_turn("<reasoning>Found it.</reasoning>\n<tool_call>{\"name\": \"final_answer\", \"arguments\": {}}</tool_call>"),
        observations: vec![Observation::ok(json!("ok"))],
        prompt_tokens: 0,
        completion_tokens: 0,
    });

    let seq = linearize(&traj, &WhitespaceTokenizer).unwrap();
    println!("{} tokens, {} supervised", seq.len(), seq.masked_count());
    let mask: String = seq
        .mask
        .iter()
        .map(|&m| if m == 1 { '#' } else { '.' })
        .collect();
    println!("mask {mask}");

    // A fake policy: confident on supervised tokens, clueless elsewhere.
    let logp: Vec<f64> = seq
        .mask
        .iter()
        .map(|&m| if m == 1 { -0.05 } else { -12.0 })
        .collect();
    let seq = seq.with_logprobs(logp.clone(), logp);
    println!("masked SFT NLL {:.4}", masked_sft_nll_of(&seq).unwrap());
}
