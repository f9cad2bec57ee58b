//! The episode loop.
//!
//! Each round renders the state (question, history, remaining rounds),
//! asks the policy for one turn, executes its calls and appends the round.
//! The episode ends when a `final_answer` call comes back `OK` or the round
//! budget runs out; either way the summarizer then writes the answer from
//! the full history. Tool failures never end an episode; only a policy
//! backend that keeps failing does.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::extract_boxed;
use crate::executor::{execute_round, ExecOptions, DEFAULT_MAX_PARALLEL};
use crate::prompts::PromptSet;
use crate::protocol::{
    parse_manager_turn, Observation, RoundRecord, Status, Termination, Trajectory, FINAL_ANSWER,
};
use crate::tools::backend::word_count;
use crate::tools::{
    BackendError, CallContext, ChatBackend, ChatCompletion, ChatMessage, ChatRequest,
    ModelEndpoint, ToolRegistry,
};
use crate::ConfigError;

pub const DEFAULT_MAX_ROUNDS: usize = 12;
pub const NO_CALL_REASON: &str = "no parseable tool call in the turn";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrchestratorConfig {
    /// Round budget `H`.
    pub max_rounds: usize,
    /// Calls per round `n_max`; also the in-flight bound.
    pub max_parallel: usize,
    pub max_response_tokens: u32,
    /// Token budget reported in the state (not shown to the policy).
    pub token_budget: u64,
    /// Store per-call wall-clock time in observations.
    pub record_timing: bool,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        Self {
            max_rounds: DEFAULT_MAX_ROUNDS,
            max_parallel: DEFAULT_MAX_PARALLEL,
            max_response_tokens: 24_576,
            token_budget: 24_576,
            record_timing: true,
        }
    }
}

impl OrchestratorConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_rounds == 0 {
            return Err(ConfigError::invalid(
                "orchestrator.max_rounds",
                "must be at least 1",
            ));
        }
        if self.max_parallel == 0 {
            return Err(ConfigError::invalid(
                "orchestrator.max_parallel",
                "must be at least 1",
            ));
        }
        if self.max_response_tokens == 0 {
            return Err(ConfigError::invalid(
                "orchestrator.max_response_tokens",
                "must be positive",
            ));
        }
        Ok(())
    }

    pub fn exec_options(&self) -> ExecOptions {
        ExecOptions {
            parallel_limit: self.max_parallel,
            max_calls: Some(self.max_parallel),
            record_timing: self.record_timing,
        }
    }
}

/// `s_t = (q, H_t, b_t)`.
#[derive(Debug, Clone, Copy)]
pub struct OrchestratorState<'a> {
    pub question: &'a str,
    pub history: &'a [RoundRecord],
    pub rounds_left: usize,
    pub tokens_left: u64,
}

/// Rendered policy input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyPrompt {
    pub system: String,
    pub user: String,
    /// 1-based index of the round being generated.
    pub round_index: usize,
}

impl PolicyPrompt {
    pub fn text(&self) -> String {
        format!("{}\n\n{}", self.system, self.user)
    }
}

#[async_trait]
pub trait PolicyBackend: Send + Sync {
    async fn generate(&self, prompt: &PolicyPrompt) -> Result<ChatCompletion, BackendError>;
}

type TurnFn = dyn Fn(&PolicyPrompt) -> Result<String, BackendError> + Send + Sync;

/// Deterministic policy for tests and mock runs. Usage is counted in
/// whitespace-separated words.
pub struct ScriptedPolicy {
    script: Box<TurnFn>,
    calls: AtomicUsize,
}

impl ScriptedPolicy {
    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(&PolicyPrompt) -> Result<String, BackendError> + Send + Sync + 'static,
    {
        Self {
            script: Box::new(f),
            calls: AtomicUsize::new(0),
        }
    }

    /// Turn `i` answers round `i + 1`; the last turn repeats afterwards.
    pub fn from_turns<S: Into<String>>(turns: impl IntoIterator<Item = S>) -> Self {
        let turns: Vec<String> = turns.into_iter().map(Into::into).collect();
        assert!(!turns.is_empty(), "scripted policy needs at least one turn");
        Self::from_fn(move |p| Ok(turns[(p.round_index - 1).min(turns.len() - 1)].clone()))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl PolicyBackend for ScriptedPolicy {
    async fn generate(&self, prompt: &PolicyPrompt) -> Result<ChatCompletion, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = (self.script)(prompt)?;
        Ok(ChatCompletion {
            prompt_tokens: word_count(&prompt.system) + word_count(&prompt.user),
            completion_tokens: word_count(&text),
            text,
        })
    }
}

/// Policy served by a chat-completions backend.
pub struct ChatPolicy {
    backend: Arc<dyn ChatBackend>,
    endpoint: ModelEndpoint,
}

impl ChatPolicy {
    pub fn new(backend: Arc<dyn ChatBackend>, endpoint: ModelEndpoint) -> Self {
        Self { backend, endpoint }
    }
}

#[async_trait]
impl PolicyBackend for ChatPolicy {
    async fn generate(&self, prompt: &PolicyPrompt) -> Result<ChatCompletion, BackendError> {
        let request = ChatRequest::new(
            &self.endpoint,
            vec![
                ChatMessage::system(prompt.system.clone()),
                ChatMessage::user(prompt.user.clone()),
            ],
        );
        self.backend.complete(&self.endpoint, &request).await
    }
}

/// The frozen answer-synthesis model.
#[derive(Clone)]
pub struct Summarizer {
    pub backend: Arc<dyn ChatBackend>,
    pub endpoint: ModelEndpoint,
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("policy backend failed: {0}")]
    Policy(BackendError),
}

/// History block shared by the policy prompt, the reviewer and the
/// summarizer.
pub fn render_history(rounds: &[RoundRecord]) -> String {
    let mut out = String::new();
    for round in rounds {
        out.push_str(&format!("### Round {}\n", round.round_index));
        out.push_str(round.turn.raw_text.trim());
        out.push('\n');
        let names: Vec<&str> = if round.turn.calls.is_empty() {
            vec!["-"]
        } else {
            round.turn.calls.iter().map(|c| c.name.as_str()).collect()
        };
        for (slot, obs) in round.observations.iter().enumerate() {
            let tool = names.get(slot).copied().unwrap_or("-");
            out.push_str(&format!(
                "<observation slot=\"{}\" tool=\"{}\" status=\"{}\">\n{}\n</observation>\n",
                slot + 1,
                tool,
                obs.status,
                obs.render_value().trim_end()
            ));
        }
    }
    out
}

pub struct Orchestrator {
    pub config: OrchestratorConfig,
    pub registry: ToolRegistry,
    pub summarizer: Summarizer,
    pub prompts: Arc<PromptSet>,
}

impl Orchestrator {
    pub fn new(
        config: OrchestratorConfig,
        registry: ToolRegistry,
        summarizer: Summarizer,
        prompts: Arc<PromptSet>,
    ) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(Self {
            config,
            registry,
            summarizer,
            prompts,
        })
    }

    /// Deterministic rendering of `state`.
    pub fn render_state(&self, state: &OrchestratorState<'_>) -> PolicyPrompt {
        let system = format!(
            "{}\n\n# Available Tools\n{}",
            self.prompts
                .manager_prompt(self.config.max_parallel)
                .trim_end(),
            self.registry.catalog()
        );
        let mut user = format!("<user_query>\n{}\n</user_query>\n", state.question);
        if !state.history.is_empty() {
            user.push_str(&format!(
                "\n<conversation_history>\n{}</conversation_history>\n",
                render_history(state.history)
            ));
        }
        user.push_str(&format!("\nremaining rounds: {}\n", state.rounds_left));
        PolicyPrompt {
            system,
            user,
            round_index: state.history.len() + 1,
        }
    }

    async fn generate(
        &self,
        policy: &dyn PolicyBackend,
        prompt: &PolicyPrompt,
    ) -> Result<ChatCompletion, EpisodeError> {
        match policy.generate(prompt).await {
            Ok(c) => Ok(c),
            Err(e) if e.is_transient() => {
                policy.generate(prompt).await.map_err(EpisodeError::Policy)
            }
            Err(e) => Err(EpisodeError::Policy(e)),
        }
    }

    pub async fn run_episode(
        &self,
        question: &str,
        policy: &dyn PolicyBackend,
    ) -> Result<Trajectory, EpisodeError> {
        if question.trim().is_empty() {
            return Err(EpisodeError::EmptyQuestion);
        }
        let mut traj = Trajectory::new(question);
        let mut terminated = false;
        for t in 1..=self.config.max_rounds {
            let state = OrchestratorState {
                question,
                history: &traj.rounds,
                rounds_left: self.config.max_rounds - traj.rounds.len(),
                tokens_left: self.config.token_budget.saturating_sub(traj.total_tokens),
            };
            let prompt = self.render_state(&state);
            let reply = self.generate(policy, &prompt).await?;
            let turn = parse_manager_turn(&reply.text);
            let observations = if turn.calls.is_empty() {
                vec![Observation::rejected(NO_CALL_REASON)]
            } else {
                let ctx = CallContext {
                    question: question.to_string(),
                    history: render_history(&traj.rounds),
                    round_index: t,
                    slot: 0,
                };
                execute_round(
                    &self.registry,
                    &turn.calls,
                    &ctx,
                    self.config.exec_options(),
                )
                .await
            };
            terminated = turn
                .calls
                .iter()
                .zip(&observations)
                .any(|(c, o)| c.name == FINAL_ANSWER && o.status == Status::Ok);
            traj.total_tokens += reply.prompt_tokens + reply.completion_tokens;
            traj.push_round(RoundRecord {
                round_index: t,
                turn,
                observations,
                prompt_tokens: reply.prompt_tokens,
                completion_tokens: reply.completion_tokens,
            });
            if terminated {
                break;
            }
        }
        traj.termination = Some(if terminated {
            Termination::FinalAnswer
        } else {
            Termination::BudgetExhausted
        });
        traj.final_answer = self.synthesize_final_answer(&traj).await;
        Ok(traj)
    }

    /// Asks the summarizer for the answer given the whole history. `None`
    /// when the summarizer fails or gives no boxed answer.
    pub async fn synthesize_final_answer(&self, traj: &Trajectory) -> Option<String> {
        assert!(
            !traj.rounds.is_empty(),
            "synthesis needs at least one round"
        );
        let user = format!(
            "<conversation_history>\n{}</conversation_history>\n<user_query>\n{}\n</user_query>\n\n{}",
            render_history(&traj.rounds),
            traj.question,
            self.prompts.termination
        );
        let request = ChatRequest::new(
            &self.summarizer.endpoint,
            vec![
                ChatMessage::system(self.prompts.final_answer.clone()),
                ChatMessage::user(user),
            ],
        );
        let reply = self
            .summarizer
            .backend
            .complete(&self.summarizer.endpoint, &request)
            .await
            .ok()?;
        extract_boxed(&reply.text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tools::{
        fn_adapter, ParamSchema, ParamType, ScriptedChatBackend, ToolKind, ToolSpec,
    };
    use serde_json::json;
    use std::time::Duration;

    fn registry() -> ToolRegistry {
        let mut reg = ToolRegistry::new();
        let spec = |name: &str, schema, cost| ToolSpec {
            name: name.into(),
            description: format!("{name} tool"),
            parameter_schema: schema,
            subtool: None,
            cost_units: cost,
            kind: ToolKind::Sandbox,
            timeout: Duration::from_secs(5),
        };
        reg.register(
            spec(
                "python",
                ParamSchema::empty().field("code", ParamType::Text, true),
                0.0,
            ),
            fn_adapter(|args, _| async move {
                if args["code"] == "fail" {
                    Observation::failure(Status::ExecErr, "boom")
                } else {
                    Observation::ok(json!("55"))
                }
            }),
        )
        .unwrap();
        reg.register(
            spec(FINAL_ANSWER, ParamSchema::open(), 1.0),
            fn_adapter(|_, _| async { Observation::ok(json!("terminating")) }),
        )
        .unwrap();
        reg
    }

    fn orchestrator(summary: &str) -> Orchestrator {
        let summarizer = Summarizer {
            backend: Arc::new(ScriptedChatBackend::constant(summary)),
            endpoint: ModelEndpoint::new("http://unused", "summarizer"),
        };
        Orchestrator::new(
            OrchestratorConfig::default(),
            registry(),
            summarizer,
            Arc::new(PromptSet::default()),
        )
        .unwrap()
    }

    const PY: &str = r#"<reasoning>compute</reasoning><tool_call>{"name":"python","arguments":{"code":"print(55)"}}</tool_call>"#;
    const FINAL: &str = r#"<reasoning>done</reasoning><tool_call>{"name":"final_answer","arguments":{}}</tool_call>"#;

    #[tokio::test]
    async fn two_turn_episode() {
        let o = orchestrator("<answer>\\boxed{55}</answer>");
        let policy = ScriptedPolicy::from_turns([PY, FINAL]);
        let t = o.run_episode("q", &policy).await.unwrap();
        assert_eq!(t.round_count, 2);
        assert_eq!(t.rounds[1].turn.calls[0].name, FINAL_ANSWER);
        assert_eq!(t.termination, Some(Termination::FinalAnswer));
        assert_eq!(t.final_answer.as_deref(), Some("55"));
        assert_eq!(t.total_cost, 1.0);
        let sum: u64 = t
            .rounds
            .iter()
            .map(|r| r.prompt_tokens + r.completion_tokens)
            .sum();
        assert_eq!(t.total_tokens, sum);
    }

    #[tokio::test]
    async fn never_terminating_policy_is_cut_at_budget() {
        let o = orchestrator("<answer>\\boxed{1}</answer>");
        let policy = ScriptedPolicy::from_turns([PY]);
        let t = o.run_episode("q", &policy).await.unwrap();
        assert_eq!(t.round_count, 12);
        assert_eq!(policy.calls(), 12);
        assert_eq!(t.termination, Some(Termination::BudgetExhausted));
        assert_eq!(t.final_answer.as_deref(), Some("1"));
    }

    #[tokio::test]
    async fn malformed_then_corrected() {
        let o = orchestrator("<answer>\\boxed{55}</answer>");
        let policy = ScriptedPolicy::from_turns(["I will call python now", PY, FINAL]);
        let t = o.run_episode("q", &policy).await.unwrap();
        assert!(t.rounds[0]
            .observations
            .iter()
            .all(|o| o.status == Status::ParseErr));
        assert!(t.rounds[1].all_ok());
    }

    #[tokio::test]
    async fn summarizer_without_box_leaves_unanswered() {
        let o = orchestrator("I am not sure");
        let t = o
            .run_episode("q", &ScriptedPolicy::from_turns([FINAL]))
            .await
            .unwrap();
        assert_eq!(t.final_answer, None);
    }

    #[tokio::test]
    async fn state_rendering() {
        let o = orchestrator("x");
        let fresh = o.render_state(&OrchestratorState {
            question: "What is 2+2?",
            history: &[],
            rounds_left: 12,
            tokens_left: 0,
        });
        assert!(fresh.user.contains("What is 2+2?"));
        assert!(!fresh.user.contains("<conversation_history>"));
        assert!(fresh.user.contains("remaining rounds: 12"));

        let policy = ScriptedPolicy::from_turns([
            r#"<reasoning>x</reasoning><tool_call>{"name":"ghost","arguments":{}}</tool_call>"#,
        ]);
        let mut o1 = orchestrator("x");
        o1.config.max_rounds = 1;
        let t = o1.run_episode("q", &policy).await.unwrap();
        let state = OrchestratorState {
            question: "q",
            history: &t.rounds,
            rounds_left: 0,
            tokens_left: 0,
        };
        let a = o.render_state(&state);
        let b = o.render_state(&state);
        assert_eq!(a, b);
        assert!(a.user.contains("unregistered tool: `ghost`"));
        assert!(a.user.contains("status=\"PARSE_ERR\""));
    }

    #[tokio::test]
    async fn policy_retry_then_abort() {
        let o = orchestrator("<answer>\\boxed{1}</answer>");
        let flaky = Arc::new(AtomicUsize::new(0));
        let f = flaky.clone();
        let policy = ScriptedPolicy::from_fn(move |_| {
            if f.fetch_add(1, Ordering::SeqCst) == 0 {
                Err(BackendError::Network("reset".into()))
            } else {
                Ok(FINAL.to_string())
            }
        });
        assert!(o.run_episode("q", &policy).await.is_ok());

        let down = ScriptedPolicy::from_fn(|_| Err(BackendError::Network("down".into())));
        assert!(matches!(
            o.run_episode("q", &down).await,
            Err(EpisodeError::Policy(_))
        ));
        assert_eq!(down.calls(), 2);
    }
}
