pub mod answer;
pub mod config;
pub mod curation;
pub mod eval;
pub mod executor;
pub mod fault;
pub mod orchestrator;
pub mod prompts;
pub mod protocol;
pub mod rewards;
pub mod rl_math;
pub mod tools;

pub use config::ConfigError;
