//! Batch evaluation: `k` independent episodes per question, scored with the
//! strict task reward and reported as mean@k.
//!
//! Episodes are built by an [`EpisodeFactory`]. The remote factory talks to
//! real chat, retrieval and sandbox services; [`MockWorld`] is an offline
//! stand-in whose every reply is a pure function of the seed, the episode
//! and the request, so runs with the same seed are byte-identical.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use futures::StreamExt;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::answer::{all_boxed, first_tag_block, normalize_answer};
use crate::config::RuntimeConfig;
use crate::fault::{wrap_registry, FaultSchedule};
use crate::orchestrator::{ChatPolicy, Orchestrator, PolicyBackend, ScriptedPolicy, Summarizer};
use crate::prompts::PromptSet;
use crate::protocol::{read_jsonl, write_trajectories, JsonlError, ToolCallRequest, Trajectory};
use crate::rewards::{reward_task, reward_total, RewardBreakdown, RewardConfig};
use crate::tools::{
    register_builtin_tools, BackendError, ChatBackend, ChatRequest, HttpChatBackend, HttpRetrieval,
    HttpSandbox, MockRetrieval, MockSandbox, ModelPool, ScriptedChatBackend, ToolRegistry,
    ToolServices, CODE_REASONER, CRITICAL_REVIEWER, ENSEMBLE_SOLVER, FINAL_ANSWER,
    KNOWLEDGE_SEARCHER, PYTHON, SEARCH, STANDARD_REASONER,
};
use crate::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    #[default]
    Remote,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Episodes per question.
    pub k: usize,
    pub episode_parallelism: usize,
    pub backend_mode: BackendMode,
    /// Required in mock mode.
    pub seed: Option<u64>,
    pub questions_file: Option<PathBuf>,
    pub ground_truth_file: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: 8,
            episode_parallelism: 4,
            backend_mode: BackendMode::Remote,
            seed: None,
            questions_file: None,
            ground_truth_file: None,
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k == 0 {
            return Err(ConfigError::invalid("eval.k", "must be at least 1"));
        }
        if self.episode_parallelism == 0 {
            return Err(ConfigError::invalid(
                "eval.episode_parallelism",
                "must be at least 1",
            ));
        }
        if self.backend_mode == BackendMode::Mock && self.seed.is_none() {
            return Err(ConfigError::invalid(
                "eval.seed",
                "mock mode requires a seed",
            ));
        }
        Ok(())
    }
}

/// Behavior of the offline mock world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockConfig {
    /// Probability that a mock agent tool answers correctly.
    pub tool_accuracy: f64,
    /// Probability that the mock manager opens with a malformed turn.
    pub malformed_rate: f64,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            tool_accuracy: 0.7,
            malformed_rate: 0.1,
        }
    }
}

impl MockConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, p) in [
            ("mock.tool_accuracy", self.tool_accuracy),
            ("mock.malformed_rate", self.malformed_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::invalid(field, "must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// One line of a questions file. `answer` may carry the ground truth inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    #[serde(default)]
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
}

/// One line of a ground-truth file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub id: String,
    pub answer: String,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Input {
        path: String,
        #[source]
        source: JsonlError,
    },
    #[error("cannot write `{path}`: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no ground truth for question `{0}`")]
    MissingGroundTruth(String),
    #[error("duplicate question id `{0}`")]
    DuplicateQuestion(String),
    #[error("no questions to evaluate")]
    NoQuestions,
}

pub fn read_jsonl_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, EvalError> {
    let input = |source| EvalError::Input {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::open(path).map_err(|e| input(JsonlError::Io(e)))?;
    read_jsonl(std::io::BufReader::new(file)).map_err(input)
}

/// Attaches ground truth from `truth` (by id) to questions lacking an inline
/// answer. Fails on a question with neither.
pub fn attach_ground_truth(
    mut questions: Vec<Question>,
    truth: &[GroundTruth],
) -> Result<Vec<Question>, EvalError> {
    if questions.is_empty() {
        return Err(EvalError::NoQuestions);
    }
    let by_id: BTreeMap<&str, &str> = truth
        .iter()
        .map(|g| (g.id.as_str(), g.answer.as_str()))
        .collect();
    let mut seen = std::collections::BTreeSet::new();
    for q in &mut questions {
        if !seen.insert(q.id.clone()) {
            return Err(EvalError::DuplicateQuestion(q.id.clone()));
        }
        if let Some(a) = by_id.get(q.id.as_str()) {
            q.answer = Some(a.to_string());
        }
        if q.answer.is_none() {
            return Err(EvalError::MissingGroundTruth(q.id.clone()));
        }
    }
    Ok(questions)
}

/// What one episode needs.
pub struct EpisodeKit {
    pub policy: Arc<dyn PolicyBackend>,
    pub orchestrator: Arc<Orchestrator>,
}

pub trait EpisodeFactory: Send + Sync {
    fn build(&self, question: &Question, sample: u32) -> Result<EpisodeKit, ConfigError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionScore {
    pub id: String,
    pub samples: usize,
    pub correct: usize,
    pub mean: f64,
    pub failed_episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub k: usize,
    pub questions: usize,
    pub episodes: usize,
    pub failed_episodes: usize,
    /// Mean over questions of the per-question accuracy.
    pub mean_at_k: f64,
    pub per_question: Vec<QuestionScore>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    /// Ordered by question, then sample index.
    pub trajectories: Vec<Trajectory>,
    pub summary: EvalSummary,
}

/// Runs `k` episodes for every question, at most `parallelism` at a time.
/// Questions must carry their answers (see [`attach_ground_truth`]).
pub async fn run_eval(
    questions: &[Question],
    k: usize,
    parallelism: usize,
    factory: Arc<dyn EpisodeFactory>,
) -> EvalOutcome {
    let jobs: Vec<(usize, u32)> = (0..questions.len())
        .flat_map(|qi| (0..k as u32).map(move |s| (qi, s)))
        .collect();
    let mut results: Vec<(usize, u32, Trajectory)> = futures::stream::iter(jobs)
        .map(|(qi, sample)| {
            let factory = factory.clone();
            let q = questions[qi].clone();
            async move { (qi, sample, run_one(&q, sample, factory.as_ref()).await) }
        })
        .buffer_unordered(parallelism.max(1))
        .collect()
        .await;
    results.sort_by_key(|(qi, s, _)| (*qi, *s));

    let mut per_question: Vec<QuestionScore> = questions
        .iter()
        .map(|q| QuestionScore {
            id: q.id.clone(),
            samples: 0,
            correct: 0,
            mean: 0.0,
            failed_episodes: 0,
        })
        .collect();
    for (qi, _, traj) in &results {
        let score = &mut per_question[*qi];
        score.samples += 1;
        if traj.error.is_some() {
            score.failed_episodes += 1;
        }
        let answer = questions[*qi].answer.as_deref().unwrap_or_default();
        score.correct += reward_task(traj, answer) as usize;
    }
    for s in &mut per_question {
        s.mean = s.correct as f64 / s.samples.max(1) as f64;
    }
    let mean_at_k =
        per_question.iter().map(|s| s.mean).sum::<f64>() / per_question.len().max(1) as f64;
    let summary = EvalSummary {
        k,
        questions: questions.len(),
        episodes: results.len(),
        failed_episodes: per_question.iter().map(|s| s.failed_episodes).sum(),
        mean_at_k,
        per_question,
    };
    EvalOutcome {
        trajectories: results.into_iter().map(|(_, _, t)| t).collect(),
        summary,
    }
}

async fn run_one(q: &Question, sample: u32, factory: &dyn EpisodeFactory) -> Trajectory {
    let outcome = match factory.build(q, sample) {
        Ok(kit) => kit
            .orchestrator
            .run_episode(&q.question, kit.policy.as_ref())
            .await
            .map_err(|e| e.to_string()),
        Err(e) => Err(e.to_string()),
    };
    let mut traj = outcome.unwrap_or_else(|error| Trajectory {
        error: Some(error),
        ..Trajectory::new(q.question.clone())
    });
    traj.question_id = Some(q.id.clone());
    traj.sample_index = Some(sample);
    traj
}

/// Writes `trajectories.jsonl` and `summary.json` under `dir`.
pub fn write_outputs(dir: &Path, outcome: &EvalOutcome) -> Result<(), EvalError> {
    let out = |path: &Path, source| EvalError::Output {
        path: path.display().to_string(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(|e| out(dir, e))?;
    let traj_path = dir.join("trajectories.jsonl");
    let file = std::fs::File::create(&traj_path).map_err(|e| out(&traj_path, e))?;
    write_trajectories(std::io::BufWriter::new(file), &outcome.trajectories).map_err(
        |e| match e {
            JsonlError::Io(io) => out(&traj_path, io),
            other => out(&traj_path, std::io::Error::other(other.to_string())),
        },
    )?;
    let summary_path = dir.join("summary.json");
    let text = serde_json::to_string_pretty(&outcome.summary).expect("summary serializes");
    std::fs::write(&summary_path, text + "\n").map_err(|e| out(&summary_path, e))?;
    Ok(())
}

fn summarizer_for(cfg: &RuntimeConfig, backend: Arc<dyn ChatBackend>) -> Summarizer {
    let endpoint = cfg
        .models
        .endpoint(&cfg.models.summarizer_model)
        .expect("validated summarizer model")
        .clone();
    Summarizer { backend, endpoint }
}

/// Factory for real services. The registry and orchestrator are shared by
/// every episode.
pub struct RemoteFactory {
    orchestrator: Arc<Orchestrator>,
    policy: Arc<dyn PolicyBackend>,
}

impl RemoteFactory {
    pub fn new(cfg: &RuntimeConfig, schedule: Option<FaultSchedule>) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let prompts = Arc::new(cfg.prompt_set()?);
        let backend: Arc<dyn ChatBackend> = Arc::new(HttpChatBackend::new());
        let pool = ModelPool::new(
            cfg.models
                .endpoints
                .iter()
                .map(|e| (e.model_id.clone(), e.clone()))
                .collect(),
            cfg.models.default_model.clone(),
            backend.clone(),
        )?;
        let services = ToolServices {
            retrieval: Arc::new(HttpRetrieval::new(
                cfg.tools.retrieval_url.clone(),
                cfg.tools.retrieval_topk,
                cfg.tools.timeouts.retrieval(),
            )),
            sandbox: Arc::new(HttpSandbox::new(cfg.tools.sandbox_url.clone())),
        };
        let mut registry =
            register_builtin_tools(pool, services, cfg.agent_options(prompts.clone()))?;
        if let Some(s) = schedule {
            registry = wrap_registry(&registry, s);
        }
        let mut policy_endpoint = cfg
            .models
            .endpoint(&cfg.models.policy_model)
            .expect("validated policy model")
            .clone();
        policy_endpoint.max_tokens = cfg.orchestrator.max_response_tokens;
        let orchestrator = Orchestrator::new(
            cfg.orchestrator.clone(),
            registry,
            summarizer_for(cfg, backend.clone()),
            prompts,
        )?;
        Ok(Self {
            orchestrator: Arc::new(orchestrator),
            policy: Arc::new(ChatPolicy::new(backend, policy_endpoint)),
        })
    }
}

impl EpisodeFactory for RemoteFactory {
    fn build(&self, _question: &Question, _sample: u32) -> Result<EpisodeKit, ConfigError> {
        Ok(EpisodeKit {
            policy: self.policy.clone(),
            orchestrator: self.orchestrator.clone(),
        })
    }
}

/// Uniform draw in `[0, 1)` from the SHA-256 of the parts.
pub fn hash_unit(parts: &[&str]) -> f64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(bytes) >> 11) as f64 / (1u64 << 53) as f64
}

fn wrong_answer(truth: &str, u: f64) -> String {
    let offset = 1 + (u * 3.0) as i64;
    match truth.trim().parse::<i64>() {
        Ok(n) => (n + offset).to_string(),
        Err(_) => format!("{}-{offset}", truth.trim()),
    }
}

/// Boxed answers in the history, majority vote, ties to the smallest.
fn majority(text: &str) -> Option<String> {
    let mut votes: BTreeMap<String, usize> = BTreeMap::new();
    for b in all_boxed(text) {
        *votes.entry(normalize_answer(&b)).or_default() += 1;
    }
    votes
        .into_iter()
        .fold(None::<(String, usize)>, |best, (a, n)| match best {
            Some((_, m)) if m >= n => best,
            _ => Some((a, n)),
        })
        .map(|(a, _)| a)
}

/// Offline world: mock manager, mock agent models, mock summarizer, mock
/// retrieval and a toy sandbox.
pub struct MockWorld {
    cfg: RuntimeConfig,
    seed: u64,
    prompts: Arc<PromptSet>,
    schedule: Option<FaultSchedule>,
}

const MOCK_TOOLS: [&str; 7] = [
    STANDARD_REASONER,
    CODE_REASONER,
    CRITICAL_REVIEWER,
    KNOWLEDGE_SEARCHER,
    ENSEMBLE_SOLVER,
    PYTHON,
    SEARCH,
];

impl MockWorld {
    pub fn new(cfg: &RuntimeConfig, schedule: Option<FaultSchedule>) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let seed = cfg
            .eval
            .seed
            .ok_or_else(|| ConfigError::invalid("eval.seed", "mock mode requires a seed"))?;
        let mut cfg = cfg.clone();
        // Wall-clock timings would break byte-identical output.
        cfg.orchestrator.record_timing = false;
        Ok(Self {
            prompts: Arc::new(cfg.prompt_set()?),
            cfg,
            seed,
            schedule,
        })
    }

    fn model_ids(&self) -> Vec<String> {
        self.cfg
            .models
            .endpoints
            .iter()
            .map(|e| e.model_id.clone())
            .collect()
    }

    /// Chat backend answering agent tools and the summarizer for one episode.
    fn chat_backend(&self, question: &Question, sample: u32) -> ScriptedChatBackend {
        let seed = self.seed.to_string();
        let qid = question.id.clone();
        let sample = sample.to_string();
        let truth = question.answer.clone().unwrap_or_default();
        let accuracy = self.cfg.mock.tool_accuracy;
        let prompts = self.prompts.clone();
        ScriptedChatBackend::new(move |req: &ChatRequest| {
            let system = req.system_text();
            let user = req.last_user_text();
            let u = hash_unit(&[&seed, &qid, &sample, &req.model, system, user]);
            let answer = if u < accuracy {
                truth.clone()
            } else {
                wrong_answer(&truth, u)
            };
            let reply = if system == prompts.final_answer {
                let history = first_tag_block(user, "conversation_history").unwrap_or("");
                let chosen = majority(history).unwrap_or(answer);
                format!("<reasoning>weighed the evidence</reasoning>\n<answer>\n\\boxed{{{chosen}}}\n</answer>")
            } else if system == prompts.code_reasoner {
                format!("<reasoning>print the result</reasoning>\n<code>\nprint(\"\\boxed{{{answer}}}\")\n</code>")
            } else if system == prompts.knowledge_searcher {
                let subtask = first_tag_block(user, "user_query").unwrap_or("").trim();
                format!(
                    "<reasoning>look it up</reasoning>\n<query>\n{}\n</query>",
                    subtask.lines().next().unwrap_or("")
                )
            } else if system == prompts.critical_reviewer {
                format!("<reasoning>checked each step</reasoning>\n<answer>\n- the supported result is \\boxed{{{answer}}}\n</answer>")
            } else {
                format!("<reasoning>worked it out</reasoning>\n<answer>\n\\boxed{{{answer}}}\n</answer>")
            };
            Ok::<_, BackendError>(reply)
        })
    }

    /// Turn texts of the mock manager for one episode.
    pub fn manager_script(&self, question: &Question, sample: u32) -> Vec<String> {
        let seed = self.seed.to_string();
        let sample_s = sample.to_string();
        let draw = |tag: &str| hash_unit(&[&seed, &question.id, &sample_s, tag]);
        let models = self.model_ids();
        let mut turns = Vec::new();
        if draw("malformed") < self.cfg.mock.malformed_rate {
            turns.push(format!(
                "I should call a tool. {{\"name\": \"{STANDARD_REASONER}\", \"arguments\": {{\"subtask\": \"solve it\"}}}}"
            ));
        }
        let tool_rounds = 1 + (draw("rounds") * 2.0) as usize;
        let max_calls = self.cfg.orchestrator.max_parallel.clamp(1, 3);
        for r in 0..tool_rounds {
            let n = 1 + (draw(&format!("n{r}")) * max_calls as f64) as usize;
            let mut text = format!(
                "<reasoning>\nround {} plan: {} call(s)\n</reasoning>",
                r + 1,
                n
            );
            for c in 0..n {
                let tool =
                    MOCK_TOOLS[(draw(&format!("tool{r}.{c}")) * MOCK_TOOLS.len() as f64) as usize];
                let model =
                    &models[(draw(&format!("model{r}.{c}")) * models.len() as f64) as usize];
                let args = match tool {
                    PYTHON => json!({"code": "print(1+1)"}),
                    SEARCH => json!({"query_list": [question.question]}),
                    ENSEMBLE_SOLVER => json!({}),
                    _ => json!({"subtask": question.question, "model_id": model}),
                };
                text.push_str(&format!(
                    "\n<tool_call>\n{}\n</tool_call>",
                    ToolCallRequest::new(tool, args).to_wire()
                ));
            }
            turns.push(text);
        }
        turns.push(format!(
            "<reasoning>\nthe evidence is consistent\n</reasoning>\n<tool_call>\n{}\n</tool_call>",
            ToolCallRequest::new(FINAL_ANSWER, json!({})).to_wire()
        ));
        turns
    }

    fn registry(&self, backend: Arc<dyn ChatBackend>) -> Result<ToolRegistry, ConfigError> {
        let pool = ModelPool::new(
            self.cfg
                .models
                .endpoints
                .iter()
                .map(|e| (e.model_id.clone(), e.clone()))
                .collect(),
            self.cfg.models.default_model.clone(),
            backend,
        )?;
        let services = ToolServices {
            retrieval: Arc::new(
                MockRetrieval::new().with_fallback("No matching passage in the mock index."),
            ),
            sandbox: Arc::new(MockSandbox::toy()),
        };
        let registry =
            register_builtin_tools(pool, services, self.cfg.agent_options(self.prompts.clone()))?;
        Ok(match &self.schedule {
            Some(s) => wrap_registry(&registry, s.clone()),
            None => registry,
        })
    }
}

impl EpisodeFactory for MockWorld {
    fn build(&self, question: &Question, sample: u32) -> Result<EpisodeKit, ConfigError> {
        let backend: Arc<dyn ChatBackend> = Arc::new(self.chat_backend(question, sample));
        let registry = self.registry(backend.clone())?;
        let orchestrator = Orchestrator::new(
            self.cfg.orchestrator.clone(),
            registry,
            summarizer_for(&self.cfg, backend),
            self.prompts.clone(),
        )?;
        Ok(EpisodeKit {
            policy: Arc::new(ScriptedPolicy::from_turns(
                self.manager_script(question, sample),
            )),
            orchestrator: Arc::new(orchestrator),
        })
    }
}

/// Factory for the configured backend mode.
pub fn factory_for(
    cfg: &RuntimeConfig,
    schedule: Option<FaultSchedule>,
) -> Result<Arc<dyn EpisodeFactory>, ConfigError> {
    Ok(match cfg.eval.backend_mode {
        BackendMode::Mock => Arc::new(MockWorld::new(cfg, schedule)?),
        BackendMode::Remote => Arc::new(RemoteFactory::new(cfg, schedule)?),
    })
}

/// Per-trajectory reward record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_index: Option<u32>,
    pub reward: RewardBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub count: usize,
    pub mean_total: f64,
    pub mean_task: f64,
    pub mean_format: f64,
    pub mean_diversity: f64,
    pub mean_efficiency: f64,
}

/// Scores trajectories against ground truth matched by question id, or by
/// question text when the id is absent.
pub fn score_trajectories(
    trajs: &[Trajectory],
    truth: &[Question],
    cfg: &RewardConfig,
) -> Result<(Vec<ScoreRecord>, ScoreSummary), EvalError> {
    let by_id: BTreeMap<&str, &str> = truth
        .iter()
        .filter_map(|q| q.answer.as_deref().map(|a| (q.id.as_str(), a)))
        .collect();
    let by_text: BTreeMap<&str, &str> = truth
        .iter()
        .filter_map(|q| q.answer.as_deref().map(|a| (q.question.as_str(), a)))
        .collect();
    let mut records = Vec::with_capacity(trajs.len());
    for t in trajs {
        let gt = match &t.question_id {
            Some(id) => by_id.get(id.as_str()),
            None => by_text.get(t.question.as_str()),
        }
        .ok_or_else(|| {
            EvalError::MissingGroundTruth(
                t.question_id.clone().unwrap_or_else(|| t.question.clone()),
            )
        })?;
        records.push(ScoreRecord {
            question_id: t.question_id.clone(),
            sample_index: t.sample_index,
            reward: reward_total(t, gt, cfg),
        });
    }
    let n = records.len().max(1) as f64;
    let mean =
        |f: fn(&RewardBreakdown) -> f64| records.iter().map(|r| f(&r.reward)).sum::<f64>() / n;
    let summary = ScoreSummary {
        count: records.len(),
        mean_total: mean(|r| r.total),
        mean_task: mean(|r| r.task),
        mean_format: mean(|r| r.format),
        mean_diversity: mean(|r| r.diversity),
        mean_efficiency: mean(|r| r.efficiency),
    };
    Ok((records, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tools::ModelEndpoint;

    fn q(id: &str, answer: &str) -> Question {
        Question {
            id: id.into(),
            question: format!("question {id}"),
            answer: Some(answer.into()),
        }
    }

    const FINAL: &str = r#"<reasoning>done</reasoning><tool_call>{"name":"final_answer","arguments":{}}</tool_call>"#;

    /// Summarizer answers correctly unless the (question, sample) pair is
    /// listed in `wrong`.
    struct Scripted {
        wrong: Vec<(String, u32)>,
        fail: Vec<(String, u32)>,
    }

    impl EpisodeFactory for Scripted {
        fn build(&self, question: &Question, sample: u32) -> Result<EpisodeKit, ConfigError> {
            let key = (question.id.clone(), sample);
            let answer = if self.wrong.contains(&key) {
                "wrong".to_string()
            } else {
                question.answer.clone().unwrap()
            };
            let summarizer = Summarizer {
                backend: Arc::new(ScriptedChatBackend::constant(format!(
                    "<answer>\\boxed{{{answer}}}</answer>"
                ))),
                endpoint: ModelEndpoint::new("http://unused", "s"),
            };
            let mut registry = ToolRegistry::new();
            let spec = crate::tools::builtin_specs(&Default::default())
                .pop()
                .unwrap();
            registry
                .register(
                    spec,
                    crate::tools::fn_adapter(|_, _| async {
                        crate::protocol::Observation::ok(json!("ok"))
                    }),
                )
                .unwrap();
            let policy: Arc<dyn PolicyBackend> = if self.fail.contains(&key) {
                Arc::new(ScriptedPolicy::from_fn(|_| {
                    Err(BackendError::Http {
                        status: 400,
                        body: "bad".into(),
                    })
                }))
            } else {
                Arc::new(ScriptedPolicy::from_turns([FINAL]))
            };
            Ok(EpisodeKit {
                policy,
                orchestrator: Arc::new(Orchestrator::new(
                    Default::default(),
                    registry,
                    summarizer,
                    Arc::new(PromptSet::default()),
                )?),
            })
        }
    }

    #[tokio::test]
    async fn mean_at_k_fixture() {
        let questions = vec![q("a", "1"), q("b", "2")];
        let factory = Arc::new(Scripted {
            wrong: vec![("b".into(), 1)],
            fail: vec![],
        });
        let out = run_eval(&questions, 2, 3, factory).await;
        assert_eq!(out.summary.mean_at_k, 0.75);
        assert_eq!(out.trajectories.len(), 4);
        assert_eq!(out.trajectories[3].question_id.as_deref(), Some("b"));
        assert_eq!(out.trajectories[3].sample_index, Some(1));
    }

    #[tokio::test]
    async fn failed_episode_counts_as_incorrect() {
        let questions = vec![q("a", "1")];
        let factory = Arc::new(Scripted {
            wrong: vec![],
            fail: vec![("a".into(), 0)],
        });
        let out = run_eval(&questions, 2, 1, factory).await;
        assert_eq!(out.summary.mean_at_k, 0.5);
        assert_eq!(out.summary.failed_episodes, 1);
        assert!(out.trajectories[0].error.is_some());
    }

    #[tokio::test]
    async fn k1_all_correct() {
        let factory = Arc::new(Scripted {
            wrong: vec![],
            fail: vec![],
        });
        let out = run_eval(&[q("a", "1"), q("b", "x")], 1, 2, factory).await;
        assert_eq!(out.summary.mean_at_k, 1.0);
    }

    fn mock_cfg(seed: u64) -> RuntimeConfig {
        let mut cfg = RuntimeConfig::default();
        cfg.eval.backend_mode = BackendMode::Mock;
        cfg.eval.seed = Some(seed);
        cfg.models.endpoints = ["alpha", "beta", "gamma"]
            .iter()
            .map(|m| ModelEndpoint::new("http://mock", *m))
            .collect();
        cfg.models.default_model = "alpha".into();
        cfg.models.policy_model = "alpha".into();
        cfg.models.summarizer_model = "gamma".into();
        cfg
    }

    #[tokio::test]
    async fn mock_world_is_deterministic_across_parallelism() {
        let questions = vec![q("a", "12"), q("b", "7"), q("c", "Paris")];
        let cfg = mock_cfg(3);
        let one = run_eval(&questions, 3, 1, factory_for(&cfg, None).unwrap()).await;
        let many = run_eval(&questions, 3, 8, factory_for(&cfg, None).unwrap()).await;
        assert_eq!(one, many);
        let other = run_eval(&questions, 3, 8, factory_for(&mock_cfg(4), None).unwrap()).await;
        assert_ne!(one.trajectories, other.trajectories);
        assert!(one
            .trajectories
            .iter()
            .all(|t| t.error.is_none() && t.final_answer.is_some()));
    }

    #[test]
    fn mock_mode_requires_seed() {
        let mut cfg = mock_cfg(1);
        cfg.eval.seed = None;
        assert_eq!(cfg.validate().unwrap_err().field(), Some("eval.seed"));
    }

    #[test]
    fn ground_truth_attachment() {
        let qs = vec![Question {
            id: "a".into(),
            question: "?".into(),
            answer: None,
        }];
        let gt = vec![GroundTruth {
            id: "a".into(),
            answer: "5".into(),
        }];
        assert_eq!(
            attach_ground_truth(qs.clone(), &gt).unwrap()[0]
                .answer
                .as_deref(),
            Some("5")
        );
        assert!(matches!(
            attach_ground_truth(qs, &[]),
            Err(EvalError::MissingGroundTruth(_))
        ));
    }

    #[test]
    fn hash_unit_range() {
        for i in 0..1000 {
            let u = hash_unit(&["x", &i.to_string()]);
            assert!((0.0..1.0).contains(&u));
        }
    }
}
