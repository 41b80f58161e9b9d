//! Tool-calling loop against an OpenAI-compatible `/chat/completions`
//! endpoint. Tool calls are executed locally and fed back as `tool`
//! messages until the model answers in plain text or the turn budget runs
//! out.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;
use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::tools::{execute_tool_lossy, Args};
use super::Agent;
use crate::error::{Error, Result};
use crate::model::{AgentResponse, Coalition, ResponseSource, Tool, ToolCall, ToolCatalog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveAgentConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_max_turns")]
    pub max_turns: u32,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff")]
    pub retry_backoff_ms: u64,
    #[serde(default)]
    pub temperature: f64,
}

fn default_max_turns() -> u32 {
    4
}
fn default_timeout() -> u64 {
    60
}
fn default_retries() -> u32 {
    2
}
fn default_backoff() -> u64 {
    500
}

impl LiveAgentConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        LiveAgentConfig {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: None,
            max_turns: default_max_turns(),
            request_timeout_secs: default_timeout(),
            max_retries: default_retries(),
            retry_backoff_ms: default_backoff(),
            temperature: 0.0,
        }
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Function declaration for one tool in the chat-completions `tools` array.
pub fn tool_declaration(tool: &Tool) -> Value {
    let mut properties = serde_json::Map::new();
    let mut required = Vec::new();
    for p in &tool.parameters {
        properties.insert(
            p.name.clone(),
            json!({"type": p.kind, "description": p.description}),
        );
        if p.required {
            required.push(Value::String(p.name.clone()));
        }
    }
    json!({
        "type": "function",
        "function": {
            "name": tool.name,
            "description": tool.description,
            "parameters": {
                "type": "object",
                "properties": properties,
                "required": required,
            }
        }
    })
}

pub(crate) struct ChatClient {
    cfg: LiveAgentConfig,
    http: ureq::Agent,
    requests: AtomicUsize,
}

impl ChatClient {
    pub(crate) fn new(cfg: LiveAgentConfig) -> Self {
        let http: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.request_timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        ChatClient {
            cfg,
            http,
            requests: AtomicUsize::new(0),
        }
    }

    fn post(&self, body: &Value) -> Result<Value> {
        let url = self.cfg.endpoint();
        let key = match &self.cfg.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::AgentUnavailable(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let mut last_err = String::new();
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 {
                let backoff = self.cfg.retry_backoff_ms << (attempt - 1).min(6);
                thread::sleep(Duration::from_millis(backoff));
            }
            self.requests.fetch_add(1, Ordering::Relaxed);
            let mut req = self.http.post(&url);
            if let Some(k) = &key {
                req = req.header("Authorization", format!("Bearer {k}"));
            }
            match req.send_json(body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if status == 200 {
                        return resp
                            .body_mut()
                            .read_json::<Value>()
                            .map_err(|e| Error::AgentUnavailable(format!("bad response body: {e}")));
                    }
                    let text = resp.body_mut().read_to_string().unwrap_or_default();
                    last_err = format!("HTTP {status}: {}", truncate(&text, 200));
                    if status != 429 && status < 500 {
                        break;
                    }
                }
                Err(e) => last_err = e.to_string(),
            }
            warn!("chat request to {url} failed (attempt {}): {last_err}", attempt + 1);
        }
        Err(Error::AgentUnavailable(last_err))
    }

    pub(crate) fn tool_loop(&self, prompt: &str, tools: &[&Tool]) -> Result<AgentResponse> {
        let mut messages = vec![json!({"role": "user", "content": prompt})];
        let declarations: Vec<Value> = tools.iter().map(|t| tool_declaration(t)).collect();
        let mut calls_made = Vec::new();
        let mut turns = 0u32;
        loop {
            if turns >= self.cfg.max_turns {
                return Err(Error::MaxTurnsExceeded(self.cfg.max_turns as usize));
            }
            let mut body = json!({
                "model": self.cfg.model,
                "messages": messages,
                "temperature": self.cfg.temperature,
            });
            if !declarations.is_empty() {
                body["tools"] = Value::Array(declarations.clone());
                body["tool_choice"] = json!("auto");
            }
            let reply = self.post(&body)?;
            turns += 1;
            let message = reply
                .pointer("/choices/0/message")
                .cloned()
                .ok_or_else(|| Error::AgentUnavailable("response has no choices".into()))?;
            let tool_calls = message
                .get("tool_calls")
                .and_then(Value::as_array)
                .cloned()
                .unwrap_or_default();
            if tool_calls.is_empty() {
                let text = message
                    .get("content")
                    .and_then(Value::as_str)
                    .unwrap_or_default()
                    .to_string();
                return Ok(AgentResponse {
                    text,
                    tool_calls_made: calls_made,
                    turns,
                    source: ResponseSource::Live,
                });
            }
            messages.push(message);
            for call in tool_calls {
                let id = call.get("id").and_then(Value::as_str).unwrap_or_default();
                let name = call
                    .pointer("/function/name")
                    .and_then(Value::as_str)
                    .unwrap_or_default();
                let raw_args = call
                    .pointer("/function/arguments")
                    .and_then(Value::as_str)
                    .unwrap_or("{}");
                let result = match tools.iter().find(|t| t.name == name) {
                    None => {
                        warn!("model called tool `{name}` which was not offered");
                        format!("error: tool {name} is not available")
                    }
                    Some(tool) => {
                        let result = match parse_arguments(raw_args) {
                            Ok(args) => execute_tool_lossy(&tool.executor_id, &args),
                            Err(e) => {
                                debug!("malformed arguments for {name}: {e}");
                                format!("error: malformed tool call arguments: {e}")
                            }
                        };
                        calls_made.push(ToolCall {
                            tool: tool.name.clone(),
                            arguments: raw_args.to_string(),
                            result: result.clone(),
                        });
                        result
                    }
                };
                messages.push(json!({"role": "tool", "tool_call_id": id, "content": result}));
            }
        }
    }
}

fn parse_arguments(raw: &str) -> std::result::Result<Args, String> {
    if raw.trim().is_empty() {
        return Ok(Args::new());
    }
    match serde_json::from_str::<Value>(raw) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(other) => Err(format!("expected a JSON object, got {other}")),
        Err(e) => Err(e.to_string()),
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Runs the function-calling loop once with `tools` offered.
pub fn run_tool_loop(cfg: &LiveAgentConfig, prompt: &str, tools: &[Tool]) -> Result<AgentResponse> {
    let refs: Vec<&Tool> = tools.iter().collect();
    ChatClient::new(cfg.clone()).tool_loop(prompt, &refs)
}

/// An agent served by a chat-completions endpoint.
pub struct LiveAgent {
    client: ChatClient,
    id: String,
}

impl LiveAgent {
    pub fn new(cfg: LiveAgentConfig) -> Self {
        let id = format!("live:{}@{}", cfg.model, cfg.base_url.trim_end_matches('/'));
        LiveAgent {
            client: ChatClient::new(cfg),
            id,
        }
    }
}

impl Agent for LiveAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn respond(
        &self,
        prompt: &str,
        coalition: &Coalition,
        catalog: &ToolCatalog,
    ) -> Result<AgentResponse> {
        let tools = coalition.members(catalog)?;
        self.client.tool_loop(prompt, &tools)
    }

    fn request_count(&self) -> usize {
        self.client.requests.load(Ordering::Relaxed)
    }
}
