//! Tool pool: the eight built-in tools behind one call protocol.
//!
//! | tool               | kind        | parameters          | subtool | cost |
//! |--------------------|-------------|---------------------|---------|------|
//! | standard_reasoner  | model       | subtask, model_id   | -       | 1    |
//! | critical_reviewer  | model       | subtask, model_id   | -       | 1    |
//! | knowledge_searcher | model       | subtask, model_id   | search  | 1    |
//! | search             | retrieval   | query_list          | -       | 0    |
//! | code_reasoner      | model       | subtask, model_id   | python  | 1    |
//! | python             | sandbox     | code                | -       | 0    |
//! | ensemble_solver    | model       | -                   | -       | 4    |
//! | final_answer       | terminal    | -                   | -       | 1    |
//!
//! Agent tools fall back to the original question when `subtask` is missing
//! and to the pool's default model when `model_id` is missing.

mod agents;
pub mod backend;
pub mod schema;
pub mod services;

use std::collections::BTreeMap;
use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::prompts::PromptSet;
use crate::protocol::{Observation, Status};
use crate::ConfigError;

pub use agents::{AgentOptions, AgentTools};
pub use backend::{
    BackendError, ChatBackend, ChatCompletion, ChatMessage, ChatRequest, HttpChatBackend,
    ModelEndpoint, ModelPool, PoolError, ScriptedChatBackend,
};
pub use schema::{ParamSchema, ParamType};
pub use services::{
    HttpRetrieval, HttpSandbox, MockRetrieval, MockRun, MockSandbox, RetrievalService,
    SandboxOutput, SandboxService, ServiceError,
};

pub const STANDARD_REASONER: &str = "standard_reasoner";
pub const CRITICAL_REVIEWER: &str = "critical_reviewer";
pub const KNOWLEDGE_SEARCHER: &str = "knowledge_searcher";
pub const SEARCH: &str = "search";
pub const CODE_REASONER: &str = "code_reasoner";
pub const PYTHON: &str = "python";
pub const ENSEMBLE_SOLVER: &str = "ensemble_solver";
pub use crate::protocol::FINAL_ANSWER;

/// Tools whose calls are routed to a model in the pool.
pub const MODEL_ROUTED_TOOLS: [&str; 5] = [
    STANDARD_REASONER,
    CRITICAL_REVIEWER,
    KNOWLEDGE_SEARCHER,
    CODE_REASONER,
    ENSEMBLE_SOLVER,
];

/// Names of the built-in tools with their cost units.
pub const BUILTIN_COSTS: [(&str, f64); 8] = [
    (STANDARD_REASONER, 1.0),
    (CRITICAL_REVIEWER, 1.0),
    (KNOWLEDGE_SEARCHER, 1.0),
    (SEARCH, 0.0),
    (CODE_REASONER, 1.0),
    (PYTHON, 0.0),
    (ENSEMBLE_SOLVER, 4.0),
    (FINAL_ANSWER, 1.0),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    ModelBacked,
    Sandbox,
    Retrieval,
    Terminal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub parameter_schema: ParamSchema,
    pub subtool: Option<String>,
    pub cost_units: f64,
    pub kind: ToolKind,
    /// Per-call deadline enforced by the executor.
    pub timeout: Duration,
}

/// Where a call sits in the episode, plus the context agent tools may need.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CallContext {
    pub question: String,
    /// Rendered interaction history, for tools that review it.
    pub history: String,
    /// 1-based round index.
    pub round_index: usize,
    /// 1-based call slot within the round.
    pub slot: usize,
}

#[async_trait]
pub trait ToolAdapter: Send + Sync {
    async fn invoke(
        &self,
        spec: &ToolSpec,
        args: &Map<String, Value>,
        ctx: &CallContext,
    ) -> Observation;
}

/// Adapter built from an async closure.
pub struct FnAdapter<F> {
    f: F,
}

pub fn fn_adapter<F, Fut>(f: F) -> Arc<dyn ToolAdapter>
where
    F: Fn(Map<String, Value>, CallContext) -> Fut + Send + Sync + 'static,
    Fut: Future<Output = Observation> + Send + 'static,
{
    Arc::new(FnAdapter { f })
}

#[async_trait]
impl<F, Fut> ToolAdapter for FnAdapter<F>
where
    F: Fn(Map<String, Value>, CallContext) -> Fut + Send + Sync,
    Fut: Future<Output = Observation> + Send,
{
    async fn invoke(
        &self,
        _spec: &ToolSpec,
        args: &Map<String, Value>,
        ctx: &CallContext,
    ) -> Observation {
        (self.f)(args.clone(), ctx.clone()).await
    }
}

/// Immutable-after-build mapping from tool name to spec and adapter.
#[derive(Clone, Default)]
pub struct ToolRegistry {
    entries: BTreeMap<String, (ToolSpec, Arc<dyn ToolAdapter>)>,
}

impl std::fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToolRegistry")
            .field("tools", &self.entries.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        spec: ToolSpec,
        adapter: Arc<dyn ToolAdapter>,
    ) -> Result<(), ConfigError> {
        if spec.name.trim().is_empty() {
            return Err(ConfigError::invalid("tool.name", "must be non-empty"));
        }
        if spec.cost_units.is_nan() || spec.cost_units < 0.0 {
            return Err(ConfigError::invalid("tool.cost_units", "must be >= 0"));
        }
        if self.entries.contains_key(&spec.name) {
            return Err(ConfigError::invalid(
                "tool.name",
                format!("duplicate tool `{}`", spec.name),
            ));
        }
        self.entries.insert(spec.name.clone(), (spec, adapter));
        Ok(())
    }

    pub fn spec(&self, name: &str) -> Option<&ToolSpec> {
        self.entries.get(name).map(|(s, _)| s)
    }

    pub fn adapter(&self, name: &str) -> Option<&Arc<dyn ToolAdapter>> {
        self.entries.get(name).map(|(_, a)| a)
    }

    pub fn get(&self, name: &str) -> Option<(&ToolSpec, &Arc<dyn ToolAdapter>)> {
        self.entries.get(name).map(|(s, a)| (s, a))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn specs(&self) -> impl Iterator<Item = &ToolSpec> {
        self.entries.values().map(|(s, _)| s)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Replaces the adapter of a registered tool.
    pub fn replace_adapter(&mut self, name: &str, adapter: Arc<dyn ToolAdapter>) -> bool {
        match self.entries.get_mut(name) {
            Some(entry) => {
                entry.1 = adapter;
                true
            }
            None => false,
        }
    }

    /// New registry with every adapter passed through `wrap`.
    pub fn map_adapters<F>(&self, mut wrap: F) -> Self
    where
        F: FnMut(&ToolSpec, Arc<dyn ToolAdapter>) -> Arc<dyn ToolAdapter>,
    {
        let entries = self
            .entries
            .iter()
            .map(|(name, (spec, adapter))| {
                (name.clone(), (spec.clone(), wrap(spec, adapter.clone())))
            })
            .collect();
        Self { entries }
    }

    /// Tool catalog text shown to the manager.
    pub fn catalog(&self) -> String {
        let mut out = String::new();
        for spec in self.specs() {
            let params: Vec<&str> = spec
                .parameter_schema
                .fields
                .iter()
                .map(|f| f.name)
                .collect();
            out.push_str(&format!(
                "- {}: {} (arguments: {}; cost units: {})\n",
                spec.name,
                spec.description,
                if params.is_empty() {
                    "none".to_string()
                } else {
                    params.join(", ")
                },
                spec.cost_units
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolTimeouts {
    #[serde(default = "default_model_ms")]
    pub model_ms: u64,
    #[serde(default = "default_sandbox_ms")]
    pub sandbox_ms: u64,
    #[serde(default = "default_retrieval_ms")]
    pub retrieval_ms: u64,
}

fn default_model_ms() -> u64 {
    120_000
}
fn default_sandbox_ms() -> u64 {
    30_000
}
fn default_retrieval_ms() -> u64 {
    15_000
}

impl Default for ToolTimeouts {
    fn default() -> Self {
        Self {
            model_ms: default_model_ms(),
            sandbox_ms: default_sandbox_ms(),
            retrieval_ms: default_retrieval_ms(),
        }
    }
}

impl ToolTimeouts {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, v) in [
            ("tools.timeouts.model_ms", self.model_ms),
            ("tools.timeouts.sandbox_ms", self.sandbox_ms),
            ("tools.timeouts.retrieval_ms", self.retrieval_ms),
        ] {
            if v == 0 {
                return Err(ConfigError::invalid(field, "must be positive"));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Duration {
        Duration::from_millis(self.model_ms)
    }
    pub fn sandbox(&self) -> Duration {
        Duration::from_millis(self.sandbox_ms)
    }
    pub fn retrieval(&self) -> Duration {
        Duration::from_millis(self.retrieval_ms)
    }
}

/// External services used by the basic tools.
#[derive(Clone)]
pub struct ToolServices {
    pub retrieval: Arc<dyn RetrievalService>,
    pub sandbox: Arc<dyn SandboxService>,
}

fn agent_schema() -> ParamSchema {
    ParamSchema::empty()
        .field_with_aliases("subtask", &["sub_task"], ParamType::Text, false)
        .field_with_aliases("model_id", &["model"], ParamType::Text, false)
}

/// Specs of the eight built-in tools.
pub fn builtin_specs(timeouts: &ToolTimeouts) -> Vec<ToolSpec> {
    let spec = |name: &str,
                description: &str,
                schema: ParamSchema,
                subtool: Option<&str>,
                kind: ToolKind,
                timeout: Duration| {
        let cost_units = BUILTIN_COSTS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, c)| *c)
            .expect("builtin cost");
        ToolSpec {
            name: name.to_string(),
            description: description.to_string(),
            parameter_schema: schema,
            subtool: subtool.map(str::to_string),
            cost_units,
            kind,
            timeout,
        }
    };
    let model = timeouts.model();
    vec![
        spec(
            STANDARD_REASONER,
            "General logic reasoning without external tools",
            agent_schema(),
            None,
            ToolKind::ModelBacked,
            model,
        ),
        spec(
            CRITICAL_REVIEWER,
            "Consistency and fact checker over the reasoning history",
            agent_schema(),
            None,
            ToolKind::ModelBacked,
            model,
        ),
        spec(
            KNOWLEDGE_SEARCHER,
            "Fact retrieval: generates queries and runs the search tool",
            agent_schema(),
            Some(SEARCH),
            ToolKind::ModelBacked,
            model,
        ),
        spec(
            SEARCH,
            "Concurrent wiki search over a list of queries",
            ParamSchema::empty().field("query_list", ParamType::TextList, true),
            None,
            ToolKind::Retrieval,
            timeouts.retrieval(),
        ),
        spec(
            CODE_REASONER,
            "Solves the subtask by writing and running Python code",
            agent_schema(),
            Some(PYTHON),
            ToolKind::ModelBacked,
            model,
        ),
        spec(
            PYTHON,
            "Isolated Python execution; returns stdout/stderr verbatim",
            ParamSchema::empty().field("code", ParamType::Text, true),
            None,
            ToolKind::Sandbox,
            timeouts.sandbox(),
        ),
        spec(
            ENSEMBLE_SOLVER,
            "Samples several solutions of the original problem and aggregates them",
            ParamSchema::empty(),
            None,
            ToolKind::ModelBacked,
            model,
        ),
        // Arguments are ignored; accepting any record keeps termination from
        // failing on decorative fields.
        spec(
            FINAL_ANSWER,
            "Ends the reasoning and produces the final answer",
            ParamSchema::open(),
            None,
            ToolKind::Terminal,
            model,
        ),
    ]
}

/// Builds the registry of all eight built-in tools.
pub fn register_builtin_tools(
    pool: ModelPool,
    services: ToolServices,
    options: AgentOptions,
) -> Result<ToolRegistry, ConfigError> {
    options.validate()?;
    let agents = Arc::new(AgentTools::new(pool, services.clone(), options.clone()));
    let mut registry = ToolRegistry::new();
    for spec in builtin_specs(&options.timeouts) {
        let adapter: Arc<dyn ToolAdapter> = match spec.kind {
            ToolKind::ModelBacked => Arc::new(agents::AgentToolAdapter::new(agents.clone())),
            ToolKind::Retrieval => Arc::new(SearchAdapter {
                retrieval: services.retrieval.clone(),
            }),
            ToolKind::Sandbox => Arc::new(PythonAdapter {
                sandbox: services.sandbox.clone(),
                limit: options.timeouts.sandbox(),
            }),
            ToolKind::Terminal => Arc::new(TerminalAdapter),
        };
        registry.register(spec, adapter)?;
    }
    Ok(registry)
}

/// Runs every query concurrently and concatenates the passages.
pub async fn invoke_search(retrieval: &dyn RetrievalService, query_list: &[String]) -> Observation {
    if query_list.is_empty() {
        return Observation::rejected(
            "schema mismatch: `query_list` must be a non-empty list of text",
        );
    }
    let results = futures::future::join_all(query_list.iter().map(|q| retrieval.retrieve(q))).await;
    let mut out = String::new();
    for (query, result) in query_list.iter().zip(results) {
        match result {
            Ok(passages) => {
                out.push_str(&format!("[query] {query}\n"));
                if passages.is_empty() {
                    out.push_str("(no passages)\n");
                }
                for (i, p) in passages.iter().enumerate() {
                    out.push_str(&format!("({}) {}\n", i + 1, p));
                }
            }
            Err(ServiceError::Timeout) => {
                return Observation::failure(
                    Status::Timeout,
                    format!("search for `{query}` timed out"),
                );
            }
            Err(e) => {
                return Observation::failure(
                    Status::ExecErr,
                    format!("search for `{query}` failed: {e}"),
                )
            }
        }
    }
    Observation::ok(Value::String(out))
}

/// Runs code in the sandbox. A program that errors is still `OK`: its
/// stderr is the result.
pub async fn invoke_python(
    sandbox: &dyn SandboxService,
    code: &str,
    limit: Duration,
) -> Observation {
    match sandbox.run(code, limit).await {
        Ok(out) if out.timed_out => Observation::failure(
            Status::Timeout,
            format!(
                "execution exceeded the {:.1}s wall-clock limit",
                limit.as_secs_f64()
            ),
        ),
        Ok(out) => Observation::ok(Value::String(out.combined())),
        Err(ServiceError::Timeout) => {
            Observation::failure(Status::Timeout, "sandbox deadline exceeded")
        }
        Err(e) => Observation::failure(Status::ExecErr, format!("sandbox failure: {e}")),
    }
}

struct SearchAdapter {
    retrieval: Arc<dyn RetrievalService>,
}

#[async_trait]
impl ToolAdapter for SearchAdapter {
    async fn invoke(
        &self,
        _spec: &ToolSpec,
        args: &Map<String, Value>,
        _ctx: &CallContext,
    ) -> Observation {
        let queries: Vec<String> = args
            .get("query_list")
            .and_then(Value::as_array)
            .map(|a| {
                a.iter()
                    .filter_map(Value::as_str)
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default();
        invoke_search(self.retrieval.as_ref(), &queries).await
    }
}

struct PythonAdapter {
    sandbox: Arc<dyn SandboxService>,
    limit: Duration,
}

#[async_trait]
impl ToolAdapter for PythonAdapter {
    async fn invoke(
        &self,
        _spec: &ToolSpec,
        args: &Map<String, Value>,
        _ctx: &CallContext,
    ) -> Observation {
        let code = args.get("code").and_then(Value::as_str).unwrap_or_default();
        invoke_python(self.sandbox.as_ref(), code, self.limit).await
    }
}

/// `final_answer`: acknowledges termination; the orchestrator runs synthesis
/// once the round's other calls are done.
struct TerminalAdapter;

#[async_trait]
impl ToolAdapter for TerminalAdapter {
    async fn invoke(
        &self,
        _spec: &ToolSpec,
        _args: &Map<String, Value>,
        _ctx: &CallContext,
    ) -> Observation {
        Observation::ok(Value::String(
            "termination requested; final answer will be synthesized".into(),
        ))
    }
}

/// Default prompt set shared by tools that are built without an explicit one.
pub(crate) fn default_prompts() -> Arc<PromptSet> {
    Arc::new(PromptSet::default())
}
