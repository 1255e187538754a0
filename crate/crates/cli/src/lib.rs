//! Command-line front end and HTTP server for the exploration engine.

pub mod commands;
pub mod server;

/// Directory for sessions, jobs and artifacts.
pub const DATA_DIR_ENV: &str = "CIMDSE_DATA_DIR";
/// URL of an external interpreter service; the deterministic interpreter is
/// used when unset.
pub const LLM_ENDPOINT_ENV: &str = "CIMDSE_LLM_ENDPOINT";
pub const LLM_MODEL_ENV: &str = "CIMDSE_LLM_MODEL";
