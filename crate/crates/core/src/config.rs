//! Runtime configuration: one TOML file with a section per component.
//!
//! Sources are merged in increasing precedence: built-in defaults, the
//! file, `UNITOOL__SECTION__KEY` environment variables, then
//! `section.key=value` overrides. Override values are read as TOML values
//! and fall back to plain strings, so `eval.seed=7` is an integer and
//! `models.default_model=gpt` a string. Every constant is validated after
//! merging; errors name the offending field.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curation::CurationConfig;
use crate::eval::{EvalConfig, MockConfig};
use crate::orchestrator::OrchestratorConfig;
use crate::prompts::PromptSet;
use crate::rewards::RewardConfig;
use crate::rl_math::GrpoConfig;
use crate::tools::{AgentOptions, ModelEndpoint, ToolTimeouts};

pub const ENV_PREFIX: &str = "UNITOOL__";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("bad override `{key}`: {message}")]
    Override { key: String, message: String },
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Name of the offending field, when there is one.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { field, .. } => Some(field),
            ConfigError::Override { key, .. } => Some(key),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    /// Model used when a call names none.
    pub default_model: String,
    /// Model serving the manager policy in remote mode.
    pub policy_model: String,
    /// Frozen model that writes the final answer.
    pub summarizer_model: String,
    pub endpoints: Vec<ModelEndpoint>,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        Self {
            default_model: "default".into(),
            policy_model: "default".into(),
            summarizer_model: "default".into(),
            endpoints: vec![ModelEndpoint::new("http://127.0.0.1:8000/v1", "default")],
        }
    }
}

impl ModelsConfig {
    pub fn endpoint(&self, model_id: &str) -> Option<&ModelEndpoint> {
        self.endpoints.iter().find(|e| e.model_id == model_id)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.endpoints.is_empty() {
            return Err(ConfigError::invalid(
                "models.endpoints",
                "model pool is empty",
            ));
        }
        for (i, ep) in self.endpoints.iter().enumerate() {
            ep.validate()?;
            if self.endpoints[..i]
                .iter()
                .any(|e| e.model_id == ep.model_id)
            {
                return Err(ConfigError::invalid(
                    "models.endpoints",
                    format!("duplicate model `{}`", ep.model_id),
                ));
            }
        }
        for (field, id) in [
            ("models.default_model", &self.default_model),
            ("models.policy_model", &self.policy_model),
            ("models.summarizer_model", &self.summarizer_model),
        ] {
            if self.endpoint(id).is_none() {
                return Err(ConfigError::invalid(
                    field,
                    format!("`{id}` is not in models.endpoints"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolsConfig {
    pub timeouts: ToolTimeouts,
    pub ensemble_samples: usize,
    /// Model for `ensemble_solver`; `models.default_model` when unset.
    pub ensemble_model: Option<String>,
    pub code_max_iterations: usize,
    pub retrieval_url: String,
    pub retrieval_topk: usize,
    pub sandbox_url: String,
}

impl Default for ToolsConfig {
    fn default() -> Self {
        Self {
            timeouts: ToolTimeouts::default(),
            ensemble_samples: 4,
            ensemble_model: None,
            code_max_iterations: 3,
            retrieval_url: "http://127.0.0.1:8001".into(),
            retrieval_topk: 3,
            sandbox_url: "http://127.0.0.1:8002".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptsConfig {
    /// Directory of `<name>.txt` files replacing the shipped prompts.
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuntimeConfig {
    pub orchestrator: OrchestratorConfig,
    pub rewards: RewardConfig,
    pub grpo: GrpoConfig,
    pub curation: CurationConfig,
    pub eval: EvalConfig,
    pub models: ModelsConfig,
    pub tools: ToolsConfig,
    pub mock: MockConfig,
    pub prompts: PromptsConfig,
}

impl RuntimeConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.orchestrator.validate()?;
        self.rewards.validate()?;
        self.grpo.validate()?;
        self.curation.validate()?;
        self.eval.validate()?;
        self.models.validate()?;
        self.agent_options(Arc::new(PromptSet::default()))
            .validate()?;
        if let Some(m) = &self.tools.ensemble_model {
            if self.models.endpoint(m).is_none() {
                return Err(ConfigError::invalid(
                    "tools.ensemble_model",
                    format!("`{m}` is not in models.endpoints"),
                ));
            }
        }
        if self.tools.retrieval_topk == 0 {
            return Err(ConfigError::invalid(
                "tools.retrieval_topk",
                "must be positive",
            ));
        }
        self.mock.validate()?;
        Ok(())
    }

    pub fn agent_options(&self, prompts: Arc<PromptSet>) -> AgentOptions {
        AgentOptions {
            prompts,
            timeouts: self.tools.timeouts,
            ensemble_samples: self.tools.ensemble_samples,
            ensemble_model: self.tools.ensemble_model.clone(),
            code_max_iterations: self.tools.code_max_iterations,
        }
    }

    /// Shipped prompts with any overrides from `prompts.dir`.
    pub fn prompt_set(&self) -> Result<PromptSet, ConfigError> {
        match &self.prompts.dir {
            None => Ok(PromptSet::default()),
            Some(dir) => PromptSet::load_dir(dir).map_err(|source| ConfigError::Io {
                path: dir.display().to_string(),
                source,
            }),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }
}

/// Loads the configuration using the process environment.
pub fn load_config(
    path: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<RuntimeConfig, ConfigError> {
    load_config_with_env(path, std::env::vars(), overrides)
}

pub fn load_config_with_env(
    path: Option<&Path>,
    env: impl IntoIterator<Item = (String, String)>,
    overrides: &[(String, String)],
) -> Result<RuntimeConfig, ConfigError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
                path: p.display().to_string(),
                source,
            })?;
            toml::from_str::<toml::Table>(&text).map_err(|e| ConfigError::Parse(e.to_string()))?
        }
        None => toml::Table::new(),
    };
    let mut env_pairs: Vec<(String, String)> = env
        .into_iter()
        .filter_map(|(k, v)| {
            let rest = k.strip_prefix(ENV_PREFIX)?;
            Some((
                rest.split("__")
                    .map(str::to_lowercase)
                    .collect::<Vec<_>>()
                    .join("."),
                v,
            ))
        })
        .collect();
    env_pairs.sort();
    for (key, value) in env_pairs.iter().chain(overrides) {
        set_path(&mut table, key, value)?;
    }
    let cfg: RuntimeConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String), ConfigError> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.to_string())),
        _ => Err(ConfigError::Override {
            key: s.to_string(),
            message: "expected section.key=value".into(),
        }),
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, key: &str, raw: &str) -> Result<(), ConfigError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Override {
            key: key.to_string(),
            message: "empty path segment".into(),
        });
    }
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| ConfigError::Override {
            key: key.to_string(),
            message: format!("`{p}` is not a section"),
        })?;
    }
    cur.insert(last.to_string(), parse_value(raw));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ov(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn defaults_validate() {
        let cfg = load_config_with_env(None, Vec::new(), &[]).unwrap();
        assert_eq!(cfg, RuntimeConfig::default());
    }

    #[test]
    fn precedence_file_env_flag() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(
            &path,
            "[rewards]\ntheta_tool = 5\n[orchestrator]\nmax_rounds = 6\n",
        )
        .unwrap();
        let env = vec![
            ("UNITOOL__REWARDS__THETA_TOOL".to_string(), "4".to_string()),
            ("UNRELATED".to_string(), "x".to_string()),
        ];
        let cfg = load_config_with_env(Some(&path), env.clone(), &[]).unwrap();
        assert_eq!(cfg.rewards.theta_tool, 4);
        assert_eq!(cfg.orchestrator.max_rounds, 6);
        let cfg =
            load_config_with_env(Some(&path), env, &ov(&[("rewards.theta_tool", "2")])).unwrap();
        assert_eq!(cfg.rewards.theta_tool, 2);
    }

    #[test]
    fn invariant_violation_names_field() {
        let err = load_config_with_env(None, Vec::new(), &ov(&[("rewards.length_max", "20000")]))
            .unwrap_err();
        assert_eq!(err.field(), Some("rewards.length_max"));
        let err = load_config_with_env(None, Vec::new(), &ov(&[("models.default_model", "nope")]))
            .unwrap_err();
        assert_eq!(err.field(), Some("models.default_model"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            load_config_with_env(None, Vec::new(), &ov(&[("rewards.theta_typo", "1")])),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn string_fallback_and_override_syntax() {
        let cfg = load_config_with_env(
            None,
            Vec::new(),
            &ov(&[
                (
                    "models.endpoints",
                    r#"[{base_url = "http://h", model_id = "m"}]"#,
                ),
                ("models.default_model", "m"),
                ("models.policy_model", "m"),
                ("models.summarizer_model", "m"),
            ]),
        )
        .unwrap();
        assert_eq!(cfg.models.default_model, "m");
        assert!(parse_override("novalue").is_err());
        assert_eq!(
            parse_override("a.b=c=d").unwrap(),
            ("a.b".into(), "c=d".into())
        );
    }

    #[test]
    fn roundtrips_through_toml() {
        let cfg = RuntimeConfig::default();
        let back: RuntimeConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }
}
