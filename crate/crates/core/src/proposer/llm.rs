//! Chat-completion client and the model-backed proposer.

use std::collections::BTreeMap;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::controller::edit::canonicalize;
use crate::controller::{
    default_space, deserialize, find_structure_block, serialize, template, DocumentError,
    TemplateName, SIGNAL_NAMES,
};

use super::prompts::PromptLibrary;
use super::rules::propose_rules;
use super::{Action, Proposal, ProposalSource, Proposer, ProposerError, ProposerState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token; empty sends no token.
    pub token_env: String,
    pub temperature: f64,
    /// Re-prompts after an invalid reply, and retries after a failed request.
    pub max_retries: u32,
    pub timeout_s: f64,
    /// First backoff delay; doubles on each retry.
    pub backoff_ms: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            endpoint: "http://127.0.0.1:8080/v1/chat/completions".into(),
            model: "default".into(),
            token_env: "CTRLSYNTH_LLM_TOKEN".into(),
            temperature: 0.2,
            max_retries: 3,
            timeout_s: 60.0,
            backoff_ms: 500,
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.endpoint.is_empty() {
            return Err("endpoint: must not be empty".into());
        }
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(format!(
                "timeout_s: must be positive, got {}",
                self.timeout_s
            ));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(format!(
                "temperature: must be non-negative, got {}",
                self.temperature
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LlmError {
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("gave up after {attempts} attempt(s); last status {}", .last_status.map_or("none".to_string(), |s| s.to_string()))]
    RetryExhausted {
        attempts: u32,
        last_status: Option<u16>,
    },
    #[error("endpoint rejected the request with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed response: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.into(),
            content: content.into(),
        }
    }
}

enum Attempt {
    Done(String),
    Retry { status: Option<u16>, timeout: bool },
    Fatal(LlmError),
}

fn send_once(
    agent: &ureq::Agent,
    cfg: &LlmConfig,
    token: Option<&str>,
    body: &serde_json::Value,
) -> Attempt {
    let mut req = agent
        .post(&cfg.endpoint)
        .header("Content-Type", "application/json");
    if let Some(t) = token {
        req = req.header("Authorization", &format!("Bearer {t}"));
    }
    let mut resp = match req.send_json(body) {
        Ok(r) => r,
        Err(ureq::Error::Timeout(_)) => {
            return Attempt::Retry {
                status: None,
                timeout: true,
            }
        }
        Err(_) => {
            return Attempt::Retry {
                status: None,
                timeout: false,
            }
        }
    };
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().unwrap_or_default();
    match status {
        200..=299 => match extract_content(&text) {
            Ok(content) => Attempt::Done(content),
            Err(e) => Attempt::Fatal(e),
        },
        401 | 403 => Attempt::Fatal(LlmError::Auth(format!("status {status}"))),
        429 | 500..=599 => Attempt::Retry {
            status: Some(status),
            timeout: false,
        },
        _ => Attempt::Fatal(LlmError::Rejected { status, body: text }),
    }
}

fn extract_content(text: &str) -> Result<String, LlmError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| LlmError::Protocol(e.to_string()))?;
    value
        .pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| LlmError::Protocol("no choices[0].message.content".into()))
}

/// Sends one chat-completion request, retrying transport failures, 429 and
/// 5xx with exponential backoff.
pub fn complete(messages: &[ChatMessage], cfg: &LlmConfig) -> Result<String, LlmError> {
    let token = if cfg.token_env.is_empty() {
        None
    } else {
        Some(std::env::var(&cfg.token_env).map_err(|_| {
            LlmError::Auth(format!("environment variable {} is not set", cfg.token_env))
        })?)
    };
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_s)))
        .http_status_as_error(false)
        .build()
        .into();
    let body = json!({
        "model": cfg.model,
        "messages": messages,
        "temperature": cfg.temperature,
    });
    let attempts = cfg.max_retries + 1;
    let mut last_status = None;
    let mut last_timeout = false;
    for attempt in 0..attempts {
        if attempt > 0 {
            thread::sleep(Duration::from_millis(
                cfg.backoff_ms.saturating_mul(1 << (attempt - 1).min(16)),
            ));
        }
        match send_once(&agent, cfg, token.as_deref(), &body) {
            Attempt::Done(text) => return Ok(text),
            Attempt::Fatal(e) => return Err(e),
            Attempt::Retry { status, timeout } => {
                last_status = status;
                last_timeout = timeout;
            }
        }
    }
    if last_timeout {
        Err(LlmError::Timeout { attempts })
    } else {
        Err(LlmError::RetryExhausted {
            attempts,
            last_status,
        })
    }
}

/// Extracts and validates the first structure document in a model reply.
/// Failures are returned as text suitable for a corrective re-prompt.
pub fn parse_action(
    text: &str,
    current: Option<&crate::controller::ControllerStructure>,
) -> Result<Action, String> {
    let block = find_structure_block(text).ok_or_else(|| "no structure block found".to_string())?;
    let structure = deserialize(block).map_err(|e| match e {
        DocumentError::Parse { .. } => e.to_string(),
        DocumentError::Invalid(_) => e.to_string(),
    })?;
    let (structure, space) = canonicalize(&structure, &default_space(&structure));
    if current.is_some_and(|c| c.nodes == structure.nodes && c.output == structure.output) {
        return Err(
            "the proposed structure is identical to the current one; propose a structural change"
                .into(),
        );
    }
    Ok(Action::ModifyStructure {
        structure,
        space,
        rationale: "proposed by the language model".into(),
    })
}

/// One line per primitive: name, children, meaning.
pub fn primitive_catalog() -> String {
    let rows = [
        ("Const", "none; const_value holds the literal"),
        ("Param", "none; param_index selects a tuned parameter"),
        ("Signal", "none; signal is one of the measured signals"),
        ("Add", "[a, b] -> a + b"),
        ("Sub", "[a, b] -> a - b"),
        ("Mul", "[a, b] -> a * b"),
        ("SafeDiv", "[a, b] -> a / b with |b| floored at 1e-9"),
        ("Neg", "[a] -> -a"),
        ("Abs", "[a] -> |a|"),
        ("Sign", "[a] -> sign(a)"),
        ("Sat", "[x, width] -> clamp(x / |width|, -1, 1)"),
        ("Integrator", "[x] -> clamped running integral; const_value is the clamp limit"),
        ("FilteredDeriv", "[x, smoothing] -> smoothed time derivative, smoothing in [0, 1]"),
        ("Gain", "[x] -> theta[param_index] * x"),
        ("Min", "[a, b] -> min(a, b)"),
        ("Max", "[a, b] -> max(a, b)"),
        ("AdaptiveGain", "[driver, rate, leak] -> K with dK/dt = rate*|driver| - leak*K, K >= 0; const_value is K(0)"),
    ];
    let mut out = String::new();
    for (name, desc) in rows {
        out.push_str(&format!("- {name}: {desc}\n"));
    }
    out.push_str(&format!("Signals: {}\n", SIGNAL_NAMES.join(", ")));
    out.push_str("The output node gives the duty cycle, clamped to the converter's duty range.\n");
    out
}

/// Reply-format instructions with an example document.
pub fn output_schema() -> String {
    let (example, _) = template(TemplateName::Smc);
    format!(
        "Reply with exactly one JSON structure document and nothing else that contains braces. \
         Fields: name, output (id of the output node), nodes (list of {{id, kind, children, \
         param_index?, const_value?, signal?}}). Children refer to node ids; the graph must be \
         acyclic and parameter indices must be 0..d-1 without gaps. Example:\n{}",
        serialize(&example)
    )
}

/// Placeholder values for the current state.
pub fn render_values(state: &ProposerState) -> BTreeMap<&'static str, String> {
    let mut values = BTreeMap::new();
    values.insert("spec", state.spec.describe(state.plant.v_ref));
    values.insert("plant", state.plant.summary());
    if let Some(cur) = state.current() {
        values.insert("structure_doc", serialize(&cur.structure));
        values.insert("feedback_doc", cur.feedback.to_document());
    }
    values.insert("primitive_catalog", primitive_catalog());
    values.insert("output_schema", output_schema());
    values
}

/// Transport used by [`LlmProposer`]; swapped out in tests.
pub trait ChatTransport {
    fn send(&mut self, messages: &[ChatMessage]) -> Result<String, LlmError>;
}

pub struct HttpTransport {
    pub config: LlmConfig,
}

impl ChatTransport for HttpTransport {
    fn send(&mut self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        complete(messages, &self.config)
    }
}

pub struct LlmProposer<T: ChatTransport = HttpTransport> {
    pub transport: T,
    pub library: PromptLibrary,
    pub max_retries: u32,
    /// Use the rule table when the model fails; otherwise terminate.
    pub fallback: bool,
}

impl LlmProposer<HttpTransport> {
    pub fn http(config: LlmConfig, library: PromptLibrary, fallback: bool) -> Self {
        Self {
            max_retries: config.max_retries,
            transport: HttpTransport { config },
            library,
            fallback,
        }
    }
}

impl<T: ChatTransport> LlmProposer<T> {
    fn give_up(
        &self,
        state: &ProposerState,
        why: String,
        requests: usize,
    ) -> Result<Proposal, ProposerError> {
        if self.fallback {
            Ok(Proposal {
                action: propose_rules(state)?,
                source: ProposalSource::LlmFallback,
                requests,
            })
        } else {
            Ok(Proposal {
                action: Action::Terminate {
                    reason: format!("language model failed: {why}"),
                },
                source: ProposalSource::Llm,
                requests,
            })
        }
    }
}

impl<T: ChatTransport> Proposer for LlmProposer<T> {
    fn propose(&mut self, state: &ProposerState) -> Result<Proposal, ProposerError> {
        let current = state.current().ok_or(ProposerError::EmptyHistory)?;
        if current.feedback.specs_met {
            return Ok(Proposal {
                action: Action::Terminate {
                    reason: "specs met".into(),
                },
                source: ProposalSource::Llm,
                requests: 0,
            });
        }
        let template = self.library.select(&current.feedback.spec_flags);
        let prompt = template.render(&render_values(state))?;
        let system = format!(
            "You design control laws as expression graphs.\nPrimitives:\n{}\n{}",
            primitive_catalog(),
            output_schema()
        );
        let mut messages = vec![
            ChatMessage::new("system", system),
            ChatMessage::new("user", prompt),
        ];
        let mut requests = 0;
        let mut last_detail = String::new();
        for _ in 0..=self.max_retries {
            requests += 1;
            let reply = match self.transport.send(&messages) {
                Ok(r) => r,
                Err(e) => return self.give_up(state, e.to_string(), requests),
            };
            match parse_action(&reply, Some(&current.structure)) {
                Ok(action) => {
                    return Ok(Proposal {
                        action,
                        source: ProposalSource::Llm,
                        requests,
                    })
                }
                Err(detail) => {
                    messages.push(ChatMessage::new("assistant", reply));
                    messages.push(ChatMessage::new(
                        "user",
                        format!(
                            "The structure was rejected by the validator:\n{detail}\nReturn exactly one corrected structure document."
                        ),
                    ));
                    last_detail = detail;
                }
            }
        }
        self.give_up(state, format!("invalid replies: {last_detail}"), requests)
    }
}
