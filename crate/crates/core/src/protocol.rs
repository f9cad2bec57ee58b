//! Unified tool protocol: call requests, per-call observations with an
//! explicit execution status, the manager output grammar, and trajectory
//! records with their linearized (masked) token form.
//!
//! The manager emits one round of output as tag-delimited text:
//!
//! ```text
//! <reasoning>...</reasoning>
//! <tool_call>{"name": "python", "arguments": {"code": "print(1)"}}</tool_call>
//! <tool_call>{"name": "search", "arguments": {"query_list": ["a"]}}</tool_call>
//! ```
//!
//! Malformed output is data, not an error: [`parse_manager_turn`] never
//! fails, it reports `well_formed = false` and salvages whatever call blocks
//! still parse so the executor can run them and report the rest as
//! `PARSE_ERR`.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const REASONING_OPEN: &str = "<reasoning>";
pub const REASONING_CLOSE: &str = "</reasoning>";
pub const TOOL_CALL_OPEN: &str = "<tool_call>";
pub const TOOL_CALL_CLOSE: &str = "</tool_call>";

/// Name of the termination tool.
pub const FINAL_ANSWER: &str = "final_answer";

/// Execution status carried by every observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    #[serde(rename = "OK")]
    Ok,
    #[serde(rename = "PARSE_ERR")]
    ParseErr,
    #[serde(rename = "EXEC_ERR")]
    ExecErr,
    #[serde(rename = "TIMEOUT")]
    Timeout,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "OK",
            Status::ParseErr => "PARSE_ERR",
            Status::ExecErr => "EXEC_ERR",
            Status::Timeout => "TIMEOUT",
        }
    }

    pub fn is_ok(self) -> bool {
        self == Status::Ok
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "OK" => Ok(Status::Ok),
            "PARSE_ERR" => Ok(Status::ParseErr),
            "EXEC_ERR" => Ok(Status::ExecErr),
            "TIMEOUT" => Ok(Status::Timeout),
            other => Err(format!("unknown status `{other}`")),
        }
    }
}

/// One parsed call: tool name plus argument record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallRequest {
    pub name: String,
    pub arguments: Map<String, Value>,
}

impl ToolCallRequest {
    pub fn new(name: impl Into<String>, arguments: Value) -> Self {
        let arguments = match arguments {
            Value::Object(map) => map,
            Value::Null => Map::new(),
            other => {
                let mut map = Map::new();
                map.insert("value".into(), other);
                map
            }
        };
        Self {
            name: name.into(),
            arguments,
        }
    }

    /// Wire form of the call block body, e.g. `{"name":"python","arguments":{...}}`.
    pub fn to_wire(&self) -> String {
        let mut obj = Map::new();
        obj.insert("name".into(), Value::String(self.name.clone()));
        obj.insert("arguments".into(), Value::Object(self.arguments.clone()));
        Value::Object(obj).to_string()
    }

    /// Strict parse of a call block body. Exactly `name` (non-empty text) and
    /// `arguments` (record) are accepted.
    pub fn from_wire(body: &str) -> Result<Self, String> {
        let value: Value =
            serde_json::from_str(body.trim()).map_err(|e| format!("invalid call record: {e}"))?;
        let Value::Object(mut obj) = value else {
            return Err("call block is not a record".into());
        };
        if let Some(extra) = obj.keys().find(|k| *k != "name" && *k != "arguments") {
            return Err(format!("unexpected field `{extra}` in call record"));
        }
        let name = match obj.remove("name") {
            Some(Value::String(s)) if !s.trim().is_empty() => s,
            Some(Value::String(_)) => return Err("empty tool name".into()),
            Some(_) => return Err("field `name` is not text".into()),
            None => return Err("missing field `name`".into()),
        };
        let arguments = match obj.remove("arguments") {
            Some(Value::Object(map)) => map,
            Some(_) => return Err("field `arguments` is not a record".into()),
            None => return Err("missing field `arguments`".into()),
        };
        Ok(Self { name, arguments })
    }
}

/// Per-call result `(value, status)` plus accounting.
///
/// A call rejected by validation has no value; its reason is kept in
/// `reason` so it can be fed back to the manager. Executed calls that fail
/// carry the diagnostic text as their value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub value: Option<Value>,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default)]
    pub elapsed_ms: u64,
    #[serde(default)]
    pub cost_units: f64,
    /// Model tokens spent inside the tool (agent tools only).
    #[serde(default)]
    pub tool_tokens: u64,
}

impl Observation {
    pub fn ok(value: Value) -> Self {
        Self {
            value: Some(value),
            status: Status::Ok,
            reason: None,
            elapsed_ms: 0,
            cost_units: 0.0,
            tool_tokens: 0,
        }
    }

    /// A failed execution: the value is the diagnostic message.
    pub fn failure(status: Status, diagnostic: impl Into<String>) -> Self {
        debug_assert!(status != Status::Ok);
        let diagnostic = diagnostic.into();
        Self {
            value: Some(Value::String(diagnostic.clone())),
            status,
            reason: Some(diagnostic),
            elapsed_ms: 0,
            cost_units: 0.0,
            tool_tokens: 0,
        }
    }

    /// `(∅, PARSE_ERR)` for a call that was never dispatched.
    pub fn rejected(reason: impl Into<String>) -> Self {
        Self {
            value: None,
            status: Status::ParseErr,
            reason: Some(reason.into()),
            elapsed_ms: 0,
            cost_units: 0.0,
            tool_tokens: 0,
        }
    }

    pub fn with_cost(mut self, cost_units: f64) -> Self {
        self.cost_units = cost_units;
        self
    }

    pub fn with_tool_tokens(mut self, tokens: u64) -> Self {
        self.tool_tokens = tokens;
        self
    }

    /// Text shown to the manager for this observation.
    pub fn render_value(&self) -> String {
        match (&self.value, &self.reason) {
            (Some(Value::String(s)), _) => s.clone(),
            (Some(v), _) => v.to_string(),
            (None, Some(reason)) => reason.clone(),
            (None, None) => String::new(),
        }
    }
}

/// One parsed manager output `y_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManagerTurn {
    pub raw_text: String,
    pub reasoning: Option<String>,
    pub calls: Vec<ToolCallRequest>,
    pub well_formed: bool,
}

impl ManagerTurn {
    /// Canonical wire text for this turn.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(REASONING_OPEN);
        out.push_str(self.reasoning.as_deref().unwrap_or(""));
        out.push_str(REASONING_CLOSE);
        for call in &self.calls {
            out.push('\n');
            out.push_str(TOOL_CALL_OPEN);
            out.push_str(&call.to_wire());
            out.push_str(TOOL_CALL_CLOSE);
        }
        out
    }

    pub fn contains_final_answer(&self) -> bool {
        self.calls.iter().any(|c| c.name == FINAL_ANSWER)
    }
}

/// A manager turn together with its aligned observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: usize,
    pub turn: ManagerTurn,
    pub observations: Vec<Observation>,
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
}

impl RoundRecord {
    pub fn has_failure(&self) -> bool {
        self.observations.iter().any(|o| !o.status.is_ok())
    }

    pub fn all_ok(&self) -> bool {
        !self.observations.is_empty() && self.observations.iter().all(|o| o.status.is_ok())
    }
}

/// How an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The manager dispatched `final_answer`.
    FinalAnswer,
    /// The round budget ran out and synthesis was forced.
    BudgetExhausted,
}

/// Full episode record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_index: Option<u32>,
    pub question: String,
    pub rounds: Vec<RoundRecord>,
    pub final_answer: Option<String>,
    pub round_count: usize,
    pub total_tokens: u64,
    pub total_cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<Termination>,
    /// Set when the episode was aborted by a policy-backend failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Trajectory {
    pub fn new(question: impl Into<String>) -> Self {
        Self {
            question_id: None,
            sample_index: None,
            question: question.into(),
            rounds: Vec::new(),
            final_answer: None,
            round_count: 0,
            total_tokens: 0,
            total_cost: 0.0,
            termination: None,
            error: None,
        }
    }

    /// Appends a round and refreshes `round_count` and `total_cost`.
    pub fn push_round(&mut self, round: RoundRecord) {
        self.total_cost += round.observations.iter().map(|o| o.cost_units).sum::<f64>();
        self.rounds.push(round);
        self.round_count = self.rounds.len();
    }

    pub fn recompute_cost(&self) -> f64 {
        self.rounds
            .iter()
            .flat_map(|r| r.observations.iter())
            .map(|o| o.cost_units)
            .sum()
    }

    pub fn observations(&self) -> impl Iterator<Item = &Observation> {
        self.rounds.iter().flat_map(|r| r.observations.iter())
    }

    pub fn calls(&self) -> impl Iterator<Item = &ToolCallRequest> {
        self.rounds.iter().flat_map(|r| r.turn.calls.iter())
    }

    pub fn tool_tokens(&self) -> u64 {
        self.observations().map(|o| o.tool_tokens).sum()
    }
}

/// Reads a trajectory JSONL stream, one record per line. Blank lines are skipped.
pub fn read_trajectories<R: BufRead>(reader: R) -> Result<Vec<Trajectory>, JsonlError> {
    read_jsonl(reader)
}

pub fn write_trajectories<W: Write>(mut writer: W, trajs: &[Trajectory]) -> Result<(), JsonlError> {
    for t in trajs {
        serde_json::to_writer(&mut writer, t)
            .map_err(|e| JsonlError::Json { line: 0, source: e })?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

pub fn read_jsonl<T: serde::de::DeserializeOwned, R: BufRead>(
    reader: R,
) -> Result<Vec<T>, JsonlError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| JsonlError::Json {
            line: i + 1,
            source: e,
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(mut writer: W, items: &[T]) -> Result<(), JsonlError> {
    for item in items {
        serde_json::to_writer(&mut writer, item)
            .map_err(|e| JsonlError::Json { line: 0, source: e })?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses one manager output. Never fails; see module docs.
pub fn parse_manager_turn(raw: &str) -> ManagerTurn {
    if let Some((reasoning, calls)) = parse_strict(raw) {
        return ManagerTurn {
            raw_text: raw.to_string(),
            reasoning: Some(reasoning),
            calls,
            well_formed: true,
        };
    }
    ManagerTurn {
        raw_text: raw.to_string(),
        reasoning: first_block(raw, REASONING_OPEN, REASONING_CLOSE).map(str::to_string),
        calls: salvage_calls(raw),
        well_formed: false,
    }
}

/// `Fmt(y_t)`: 1 iff the turn's raw text matches the output template exactly.
pub fn check_format(turn: &ManagerTurn) -> u8 {
    u8::from(parse_strict(&turn.raw_text).is_some())
}

fn parse_strict(raw: &str) -> Option<(String, Vec<ToolCallRequest>)> {
    let rest = raw.trim_start().strip_prefix(REASONING_OPEN)?;
    let end = rest.find(REASONING_CLOSE)?;
    let reasoning = &rest[..end];
    if reasoning.contains(REASONING_OPEN) {
        return None;
    }
    let mut rest = &rest[end + REASONING_CLOSE.len()..];
    let mut calls = Vec::new();
    loop {
        let trimmed = rest.trim_start();
        if trimmed.is_empty() {
            break;
        }
        let body_start = trimmed.strip_prefix(TOOL_CALL_OPEN)?;
        let close = body_start.find(TOOL_CALL_CLOSE)?;
        let body = &body_start[..close];
        if body.contains(TOOL_CALL_OPEN) {
            return None;
        }
        calls.push(ToolCallRequest::from_wire(body).ok()?);
        rest = &body_start[close + TOOL_CALL_CLOSE.len()..];
    }
    if calls.is_empty() {
        return None;
    }
    Some((reasoning.to_string(), calls))
}

fn first_block<'a>(raw: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = raw.find(open)? + open.len();
    let len = raw[start..].find(close)?;
    Some(&raw[start..start + len])
}

fn salvage_calls(raw: &str) -> Vec<ToolCallRequest> {
    let mut calls = Vec::new();
    let mut rest = raw;
    while let Some(pos) = rest.find(TOOL_CALL_OPEN) {
        let after = &rest[pos + TOOL_CALL_OPEN.len()..];
        let Some(close) = after.find(TOOL_CALL_CLOSE) else {
            break;
        };
        let mut body = &after[..close];
        // An unclosed opener followed by a closed block: keep the innermost body.
        if let Some(inner) = body.rfind(TOOL_CALL_OPEN) {
            body = &body[inner + TOOL_CALL_OPEN.len()..];
        }
        if let Ok(call) = ToolCallRequest::from_wire(body) {
            calls.push(call);
        }
        rest = &after[close + TOOL_CALL_CLOSE.len()..];
    }
    calls
}

/// Maps text to token ids.
pub trait Tokenizer {
    fn tokenize(&self, text: &str) -> Vec<u32>;
}

/// One whitespace-separated word = one token; ids are a stable hash of the word.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn tokenize(&self, text: &str) -> Vec<u32> {
        text.split_whitespace().map(word_id).collect()
    }
}

fn word_id(word: &str) -> u32 {
    let digest = Sha256::digest(word.as_bytes());
    u32::from_le_bytes([digest[0], digest[1], digest[2], digest[3]])
}

impl<F> Tokenizer for F
where
    F: Fn(&str) -> Vec<u32>,
{
    fn tokenize(&self, text: &str) -> Vec<u32> {
        self(text)
    }
}

/// Token sequence `Seq(τ)` with its supervision mask and optional log-probs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearizedSequence {
    pub tokens: Vec<u32>,
    pub mask: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logp_new: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logp_old: Option<Vec<f64>>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SequenceError {
    #[error("trajectory has no rounds")]
    EmptyTrajectory,
    #[error("length mismatch: {field} has {got} entries, expected {expected}")]
    LengthMismatch {
        field: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("mask entries must be 0 or 1 (position {0})")]
    InvalidMask(usize),
}

impl LinearizedSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }

    pub fn with_logprobs(mut self, logp_new: Vec<f64>, logp_old: Vec<f64>) -> Self {
        self.logp_new = Some(logp_new);
        self.logp_old = Some(logp_old);
        self
    }

    pub fn validate(&self) -> Result<(), SequenceError> {
        let n = self.tokens.len();
        if self.mask.len() != n {
            return Err(SequenceError::LengthMismatch {
                field: "mask",
                got: self.mask.len(),
                expected: n,
            });
        }
        if let Some(pos) = self.mask.iter().position(|&m| m > 1) {
            return Err(SequenceError::InvalidMask(pos));
        }
        for (field, lp) in [("logp_new", &self.logp_new), ("logp_old", &self.logp_old)] {
            if let Some(lp) = lp {
                if lp.len() != n {
                    return Err(SequenceError::LengthMismatch {
                        field,
                        got: lp.len(),
                        expected: n,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Environment-side text for one observation inside the linearized sequence:
/// `STATUS: value`.
pub fn render_observation(obs: &Observation) -> String {
    format!("{}: {}", obs.status, obs.render_value())
}

/// Linearizes a trajectory: question, then per round the manager turn
/// (mask 1) followed by its observations (mask 0).
pub fn linearize(
    traj: &Trajectory,
    tokenizer: &dyn Tokenizer,
) -> Result<LinearizedSequence, SequenceError> {
    if traj.rounds.is_empty() {
        return Err(SequenceError::EmptyTrajectory);
    }
    let mut tokens = Vec::new();
    let mut mask = Vec::new();
    let mut push = |text: &str, m: u8| {
        let ids = tokenizer.tokenize(text);
        mask.extend(std::iter::repeat_n(m, ids.len()));
        tokens.extend(ids);
    };
    push(&traj.question, 0);
    for round in &traj.rounds {
        push(&round.turn.raw_text, 1);
        for obs in &round.observations {
            push(&render_observation(obs), 0);
        }
    }
    Ok(LinearizedSequence {
        tokens,
        mask,
        logp_new: None,
        logp_old: None,
    })
}
