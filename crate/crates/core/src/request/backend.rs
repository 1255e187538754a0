//! Interpreter backends. The deterministic backend is the reference; the
//! HTTP backend forwards the same structured calls to an external model
//! service and is not used for correctness checks.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::schema::ParamSchema;
use super::{adjust, classify, parse, AdjustmentRequest, Classification, ParsedRequest, RequestCategory};
use crate::error::{Error, Result};

/// Environment variable holding the HTTP backend's API key.
pub const API_KEY_ENV: &str = "CIMDSE_LLM_API_KEY";

pub trait Backend: Send + Sync {
    fn name(&self) -> &str;

    fn classify(&self, text: &str, schema: &ParamSchema) -> Result<Classification>;

    fn parse(&self, text: &str, category: RequestCategory, schema: &ParamSchema) -> Result<ParsedRequest>;

    /// Reads a free-text adjustment; `None` when the text is not one.
    fn interpret_adjustment(
        &self,
        text: &str,
        parsed: &ParsedRequest,
        schema: &ParamSchema,
    ) -> Result<Option<AdjustmentRequest>>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct DeterministicBackend;

impl Backend for DeterministicBackend {
    fn name(&self) -> &str {
        "deterministic"
    }

    fn classify(&self, text: &str, schema: &ParamSchema) -> Result<Classification> {
        Ok(classify::classify(text, schema))
    }

    fn parse(&self, text: &str, category: RequestCategory, schema: &ParamSchema) -> Result<ParsedRequest> {
        Ok(parse::build(text, category, schema))
    }

    fn interpret_adjustment(
        &self,
        text: &str,
        parsed: &ParsedRequest,
        schema: &ParamSchema,
    ) -> Result<Option<AdjustmentRequest>> {
        Ok(adjust::interpret_adjustment(text, parsed, schema))
    }
}

#[derive(Serialize)]
struct Envelope<'a> {
    version: u32,
    task: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
    input: serde_json::Value,
}

#[derive(Deserialize)]
struct Reply {
    ok: bool,
    #[serde(default)]
    output: Option<serde_json::Value>,
    #[serde(default)]
    error: Option<String>,
}

/// Calls an external service with a fixed JSON envelope:
/// `{"version":1,"task":..,"model":..,"input":{..}}` answered by
/// `{"ok":true,"output":..}` or `{"ok":false,"error":".."}`.
pub struct HttpLlmBackend {
    endpoint: String,
    api_key_env: String,
    model: Option<String>,
    agent: ureq::Agent,
}

impl HttpLlmBackend {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self::with_timeout(endpoint, Duration::from_secs(60))
    }

    pub fn with_timeout(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            endpoint: endpoint.into(),
            api_key_env: API_KEY_ENV.to_string(),
            model: None,
            agent: ureq::Agent::new_with_config(config),
        }
    }

    pub fn api_key_env(mut self, var: impl Into<String>) -> Self {
        self.api_key_env = var.into();
        self
    }

    pub fn model(mut self, model: impl Into<String>) -> Self {
        self.model = Some(model.into());
        self
    }

    fn call<T: DeserializeOwned>(&self, task: &str, input: serde_json::Value) -> Result<T> {
        let envelope = Envelope {
            version: 1,
            task,
            model: self.model.as_deref(),
            input,
        };
        let mut req = self.agent.post(&self.endpoint);
        if let Ok(key) = std::env::var(&self.api_key_env) {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(&envelope)
            .map_err(|e| Error::Backend(format!("{}: {e}", self.endpoint)))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Error::Backend(format!("{} answered HTTP {status}", self.endpoint)));
        }
        let reply: Reply = resp
            .body_mut()
            .read_json()
            .map_err(|e| Error::Backend(format!("malformed reply: {e}")))?;
        if !reply.ok {
            return Err(Error::Backend(reply.error.unwrap_or_else(|| "backend reported failure".into())));
        }
        let output = reply.output.unwrap_or(serde_json::Value::Null);
        serde_json::from_value(output).map_err(|e| Error::Backend(format!("unexpected {task} output: {e}")))
    }
}

impl Backend for HttpLlmBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn classify(&self, text: &str, schema: &ParamSchema) -> Result<Classification> {
        self.call("classify", serde_json::json!({ "text": text, "schema": schema }))
    }

    fn parse(&self, text: &str, category: RequestCategory, schema: &ParamSchema) -> Result<ParsedRequest> {
        self.call(
            "parse",
            serde_json::json!({ "text": text, "category": category, "schema": schema }),
        )
    }

    fn interpret_adjustment(
        &self,
        text: &str,
        parsed: &ParsedRequest,
        schema: &ParamSchema,
    ) -> Result<Option<AdjustmentRequest>> {
        self.call(
            "adjust",
            serde_json::json!({ "text": text, "parsed": parsed, "schema": schema }),
        )
    }
}
