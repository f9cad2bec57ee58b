//! Model-backed agent tools: each sends its system prompt plus the subtask to
//! a pool endpoint and parses the tag-delimited reply its prompt asks for.

use std::collections::BTreeMap;
use std::sync::Arc;

use async_trait::async_trait;
use serde_json::{json, Map, Value};

use super::backend::{BackendError, ChatMessage, ModelPool, PoolError};
use super::services::ServiceError;
use super::{
    invoke_search, CallContext, ToolAdapter, ToolServices, ToolSpec, ToolTimeouts, CODE_REASONER,
    CRITICAL_REVIEWER, ENSEMBLE_SOLVER, KNOWLEDGE_SEARCHER, STANDARD_REASONER,
};
use crate::answer::{extract_boxed, first_tag_block, last_tag_block, normalize_answer};
use crate::prompts::PromptSet;
use crate::protocol::{Observation, Status};
use crate::ConfigError;

#[derive(Debug, Clone)]
pub struct AgentOptions {
    pub prompts: Arc<PromptSet>,
    pub timeouts: ToolTimeouts,
    /// Samples drawn by `ensemble_solver`.
    pub ensemble_samples: usize,
    /// Model used by `ensemble_solver`; the pool default when unset.
    pub ensemble_model: Option<String>,
    /// Upper bound on generate/execute iterations inside `code_reasoner`.
    pub code_max_iterations: usize,
}

impl Default for AgentOptions {
    fn default() -> Self {
        Self {
            prompts: super::default_prompts(),
            timeouts: ToolTimeouts::default(),
            ensemble_samples: 4,
            ensemble_model: None,
            code_max_iterations: 3,
        }
    }
}

impl AgentOptions {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.timeouts.validate()?;
        if self.ensemble_samples == 0 {
            return Err(ConfigError::invalid(
                "tools.ensemble_samples",
                "must be positive",
            ));
        }
        if self.code_max_iterations == 0 {
            return Err(ConfigError::invalid(
                "tools.code_max_iterations",
                "must be positive",
            ));
        }
        Ok(())
    }
}

/// Shared state behind every agent tool adapter.
pub struct AgentTools {
    pool: ModelPool,
    services: ToolServices,
    options: AgentOptions,
}

struct Reply {
    text: String,
    tokens: u64,
}

fn pool_failure(err: PoolError) -> Observation {
    match err {
        PoolError::Backend(BackendError::Timeout) => {
            Observation::failure(Status::Timeout, "model call timed out")
        }
        other => Observation::failure(Status::ExecErr, format!("model call failed: {other}")),
    }
}

fn user_query(subtask: &str) -> String {
    format!("<user_query>\n{subtask}\n</user_query>")
}

impl AgentTools {
    pub fn new(pool: ModelPool, services: ToolServices, options: AgentOptions) -> Self {
        Self {
            pool,
            services,
            options,
        }
    }

    pub fn pool(&self) -> &ModelPool {
        &self.pool
    }

    async fn ask(&self, model_id: &str, system: &str, user: String) -> Result<Reply, Observation> {
        let messages = vec![ChatMessage::system(system), ChatMessage::user(user)];
        match self.pool.complete(model_id, messages).await {
            Ok(c) => Ok(Reply {
                tokens: c.total_tokens(),
                text: c.text,
            }),
            Err(e) => Err(pool_failure(e)),
        }
    }

    /// Runs the agent tool named by `spec` on `subtask` with `model_id`.
    pub async fn invoke_agent_tool(
        &self,
        spec: &ToolSpec,
        subtask: &str,
        model_id: &str,
        ctx: &CallContext,
    ) -> Observation {
        if self.pool.endpoint(model_id).is_none() {
            return Observation::failure(Status::ExecErr, format!("unknown model `{model_id}`"));
        }
        let obs = match spec.name.as_str() {
            STANDARD_REASONER => self.reason(model_id, subtask).await,
            CRITICAL_REVIEWER => self.review(model_id, subtask, &ctx.history).await,
            KNOWLEDGE_SEARCHER => self.knowledge(model_id, subtask).await,
            CODE_REASONER => self.code(model_id, subtask).await,
            ENSEMBLE_SOLVER => self.invoke_ensemble(&ctx.question).await,
            other => {
                Observation::failure(Status::ExecErr, format!("`{other}` is not an agent tool"))
            }
        };
        obs.with_cost(spec.cost_units)
    }

    async fn reason(&self, model_id: &str, subtask: &str) -> Observation {
        let prompt = self.options.prompts.standard_reasoner.clone();
        match self.ask(model_id, &prompt, user_query(subtask)).await {
            Ok(reply) => answer_observation(reply),
            Err(obs) => obs,
        }
    }

    async fn review(&self, model_id: &str, subtask: &str, history: &str) -> Observation {
        let prompt = self.options.prompts.critical_reviewer.clone();
        let user = format!(
            "<conversation_history>\n{history}\n</conversation_history>\n{}",
            user_query(subtask)
        );
        match self.ask(model_id, &prompt, user).await {
            Ok(reply) => answer_observation(reply),
            Err(obs) => obs,
        }
    }

    async fn knowledge(&self, model_id: &str, subtask: &str) -> Observation {
        let prompt = self.options.prompts.knowledge_searcher.clone();
        let reply = match self.ask(model_id, &prompt, user_query(subtask)).await {
            Ok(r) => r,
            Err(obs) => return obs,
        };
        let Some(block) = last_tag_block(&reply.text, "query") else {
            return Observation::failure(
                Status::ExecErr,
                "malformed tool output: no <query> block",
            )
            .with_tool_tokens(reply.tokens);
        };
        let queries: Vec<String> = block
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        if queries.is_empty() {
            return Observation::failure(
                Status::ExecErr,
                "malformed tool output: empty <query> block",
            )
            .with_tool_tokens(reply.tokens);
        }
        let found = invoke_search(self.services.retrieval.as_ref(), &queries).await;
        if !found.status.is_ok() {
            return found.with_tool_tokens(reply.tokens);
        }
        let text = format!(
            "<query>\n{}\n</query>\n<evidence>\n{}</evidence>",
            queries.join("\n"),
            found.render_value()
        );
        Observation::ok(Value::String(text)).with_tool_tokens(reply.tokens)
    }

    async fn code(&self, model_id: &str, subtask: &str) -> Observation {
        let prompt = self.options.prompts.code_reasoner.clone();
        let limit = self.options.timeouts.sandbox();
        let mut tokens = 0;
        let mut feedback: Option<(String, String)> = None;
        let mut last: Option<(String, String)> = None;
        for _ in 0..self.options.code_max_iterations {
            let mut user = user_query(subtask);
            if let Some((code, result)) = &feedback {
                user.push_str(&format!(
                    "\n<code>\n{code}\n</code>\n<execution_result>\n{result}\n</execution_result>"
                ));
            }
            let reply = match self.ask(model_id, &prompt, user).await {
                Ok(r) => r,
                Err(obs) => return obs.with_tool_tokens(tokens),
            };
            tokens += reply.tokens;
            let Some(code) = last_tag_block(&reply.text, "code").map(|c| c.trim().to_string())
            else {
                if last.is_some() {
                    break;
                }
                return Observation::failure(
                    Status::ExecErr,
                    "malformed tool output: no <code> block",
                )
                .with_tool_tokens(tokens);
            };
            let (result, done) = match self.services.sandbox.run(&code, limit).await {
                Ok(out) if out.timed_out => (
                    format!(
                        "execution exceeded the {:.1}s wall-clock limit",
                        limit.as_secs_f64()
                    ),
                    false,
                ),
                Ok(out) => (out.combined(), out.succeeded()),
                Err(ServiceError::Timeout) => ("sandbox deadline exceeded".to_string(), false),
                Err(e) => {
                    return Observation::failure(Status::ExecErr, format!("sandbox failure: {e}"))
                        .with_tool_tokens(tokens)
                }
            };
            last = Some((code.clone(), result.clone()));
            if done {
                break;
            }
            feedback = Some((code, result));
        }
        let (code, result) = last.expect("at least one iteration ran");
        let text =
            format!("<code>\n{code}\n</code>\n<execution_result>\n{result}\n</execution_result>");
        Observation::ok(Value::String(text)).with_tool_tokens(tokens)
    }

    /// Draws independent standard-reasoner samples for `question` and votes
    /// on their boxed answers. Ties go to the lexicographically smallest
    /// normalized answer.
    pub async fn invoke_ensemble(&self, question: &str) -> Observation {
        let model = self
            .options
            .ensemble_model
            .clone()
            .unwrap_or_else(|| self.pool.default_model().to_string());
        let samples = futures::future::join_all(
            (0..self.options.ensemble_samples).map(|_| self.reason(&model, question)),
        )
        .await;
        let tokens: u64 = samples.iter().map(|o| o.tool_tokens).sum();
        let mut votes: BTreeMap<String, usize> = BTreeMap::new();
        for s in samples.iter().filter(|s| s.status.is_ok()) {
            if let Some(ans) = extract_boxed(&s.render_value()) {
                *votes.entry(normalize_answer(&ans)).or_default() += 1;
            }
        }
        let valid: usize = votes.values().sum();
        // BTreeMap iterates in ascending key order; keep the first maximum.
        let Some((answer, count)) = votes
            .iter()
            .fold(None::<(&String, usize)>, |best, (a, &n)| match best {
                Some((_, m)) if m >= n => best,
                _ => Some((a, n)),
            })
        else {
            return Observation::failure(Status::ExecErr, "ensemble: every sample failed")
                .with_tool_tokens(tokens);
        };
        let value = json!({
            "answer": answer,
            "votes": count,
            "valid_samples": valid,
            "candidates": votes,
            "summary": format!("\\boxed{{{answer}}}"),
        });
        Observation::ok(value).with_tool_tokens(tokens)
    }
}

fn answer_observation(reply: Reply) -> Observation {
    let Some(answer) = last_tag_block(&reply.text, "answer") else {
        return Observation::failure(Status::ExecErr, "malformed tool output: no <answer> block")
            .with_tool_tokens(reply.tokens);
    };
    let mut text = String::new();
    if let Some(reasoning) = first_tag_block(&reply.text, "reasoning") {
        text.push_str(&format!(
            "<reasoning>\n{}\n</reasoning>\n",
            reasoning.trim()
        ));
    }
    text.push_str(&format!("<answer>\n{}\n</answer>", answer.trim()));
    Observation::ok(Value::String(text)).with_tool_tokens(reply.tokens)
}

/// Resolves `subtask`/`model_id` with their fallbacks and dispatches.
pub(crate) struct AgentToolAdapter {
    tools: Arc<AgentTools>,
}

impl AgentToolAdapter {
    pub(crate) fn new(tools: Arc<AgentTools>) -> Self {
        Self { tools }
    }
}

#[async_trait]
impl ToolAdapter for AgentToolAdapter {
    async fn invoke(
        &self,
        spec: &ToolSpec,
        args: &Map<String, Value>,
        ctx: &CallContext,
    ) -> Observation {
        let schema = &spec.parameter_schema;
        let subtask = schema
            .text(args, "subtask")
            .filter(|s| !s.trim().is_empty())
            .unwrap_or(&ctx.question);
        let model = schema
            .text(args, "model_id")
            .filter(|s| !s.trim().is_empty())
            .unwrap_or(self.tools.pool.default_model());
        self.tools
            .invoke_agent_tool(spec, subtask, model, ctx)
            .await
    }
}
