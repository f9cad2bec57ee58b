//! Parses two manager turns, assembles a trajectory and prints its reward
//! breakdown.

use serde_json::json;
use unitool::protocol::{check_format, parse_manager_turn, Observation, RoundRecord, Trajectory};
use unitool::rewards::{reward_total, RewardConfig};

fn main() {
    let turns = [
        "<reasoning>Look the value up and compute it.</reasoning>\n\
         <tool_call>{\"name\": \"knowledge_searcher\", \"arguments\": {\"subtask\": \"boiling point of water in F\"}}</tool_call>\n\
         <tool_call>{\"name\": \"code_reasoner\", \"arguments\": {\"subtask\": \"convert 100 C to F\"}}</tool_call>",
        // Text outside the tags: the call is salvaged but the format bit is 0.
        "Done.\n<reasoning>Both agree.</reasoning>\n<tool_call>{\"name\": \"final_answer\", \"arguments\": {}}</tool_call>",
    ];

    let mut traj = Trajectory::new("What is the boiling point of water in Fahrenheit?");
    for (i, raw) in turns.iter().enumerate() {
        let turn = parse_manager_turn(raw);
        println!(
            "round {}: fmt={} calls={:?}",
            i + 1,
            check_format(&turn),
            turn.calls
                .iter()
                .map(|c| c.name.as_str())
                .collect::<Vec<_>>()
        );
        let observations = turn
            .calls
            .iter()
            .map(|_| Observation::ok(json!("212")).with_cost(1.0))
            .collect();
        traj.push_round(RoundRecord {
            round_index: i + 1,
            turn,
            observations,
            prompt_tokens: 900,
            completion_tokens: 150,
        });
    }
    traj.total_tokens = 2100;
    traj.final_answer = Some("212".into());

    let r = reward_total(&traj, "212", &RewardConfig::default());
    println!("{}", serde_json::to_string_pretty(&r).unwrap());
}
