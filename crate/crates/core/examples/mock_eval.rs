//! Runs the offline mock world over the bundled questions and prints mean@k.
//! Deterministic for a fixed seed regardless of episode parallelism.

use std::path::Path;

use unitool::config::load_config;
use unitool::eval::{attach_ground_truth, factory_for, read_jsonl_file, run_eval, Question};

#[tokio::main]
async fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let cfg = load_config(Some(&root.join("config/mock.toml")), &[]).unwrap();
    let questions: Vec<Question> = read_jsonl_file(&root.join("data/questions.jsonl")).unwrap();
    let questions = attach_ground_truth(questions, &[]).unwrap();

    for parallelism in [1, 8] {
        let factory = factory_for(&cfg, None).unwrap();
        let outcome = run_eval(&questions, cfg.eval.k, parallelism, factory).await;
        println!(
            "parallelism {parallelism}: mean@{} = {:.4}",
            outcome.summary.k, outcome.summary.mean_at_k
        );
        for q in &outcome.summary.per_question {
            println!("  {:<8} {}/{}", q.id, q.correct, q.samples);
        }
    }
}
