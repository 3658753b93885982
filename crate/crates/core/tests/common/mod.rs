#![allow(dead_code)]

pub mod oracle;
pub mod strategies;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use ctrlsynth::controller::{serialize, template, TemplateName};
use ctrlsynth::proposer::LlmConfig;

pub const CONST_DUTY_DOC: &str = r#"{"name":"ConstDuty","output":0,"nodes":[{"id":0,"kind":"Param","children":[],"param_index":0}]}"#;

/// Minimal config text: plant block plus a short scenario.
pub fn small_config(t_end: f64, extra: &str) -> String {
    format!(
        r#"
[plant]
v_in = 50.0
l = 0.001
c = 0.0011
r_load_nominal = 50.0
f_sw = 20000.0
v_ref = 100.0

[scenario]
t_end = {t_end}
{extra}
"#
    )
}

pub fn bundled_config_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/boost_rules.cfg")
}

/// One scripted HTTP reply.
#[derive(Clone)]
pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl Reply {
    pub fn chat(content: &str) -> Self {
        let body = serde_json::json!({
            "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]
        });
        Self {
            status: 200,
            body: body.to_string(),
        }
    }

    pub fn status(status: u16) -> Self {
        Self {
            status,
            body: "{\"error\":\"scripted\"}".into(),
        }
    }
}

/// Chat-completions stand-in on a loopback port. Replies follow the script
/// and the last reply repeats once it runs out.
pub struct MockEndpoint {
    pub url: String,
    requests: Arc<Mutex<Vec<serde_json::Value>>>,
}

impl MockEndpoint {
    pub fn start(script: Vec<Reply>) -> Self {
        assert!(!script.is_empty());
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!(
            "http://{}/v1/chat/completions",
            listener.local_addr().unwrap()
        );
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&requests);
        thread::spawn(move || {
            let mut n = 0;
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let Some(body) = read_request(&mut stream) else {
                    continue;
                };
                log.lock()
                    .unwrap()
                    .push(serde_json::from_str(&body).unwrap_or(serde_json::Value::Null));
                let reply = &script[n.min(script.len() - 1)];
                n += 1;
                let _ = write!(
                    stream,
                    "HTTP/1.1 {} Scripted\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                    reply.status,
                    reply.body.len(),
                    reply.body
                );
                let _ = stream.flush();
            }
        });
        Self { url, requests }
    }

    pub fn requests(&self) -> Vec<serde_json::Value> {
        self.requests.lock().unwrap().clone()
    }

    pub fn config(&self, max_retries: u32) -> LlmConfig {
        LlmConfig {
            endpoint: self.url.clone(),
            token_env: String::new(),
            max_retries,
            timeout_s: 10.0,
            backoff_ms: 20,
            ..LlmConfig::default()
        }
    }
}

fn read_request(stream: &mut std::net::TcpStream) -> Option<String> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut len = 0;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).ok()?;
    String::from_utf8(body).ok()
}

/// Model reply carrying the adaptive sliding-mode template.
pub fn adaptive_smc_reply() -> String {
    let (s, _) = template(TemplateName::AdaptiveSmc);
    format!(
        "Replace the sign switching term with a saturated boundary layer and let the gain adapt.\n```json\n{}\n```\n",
        serialize(&s)
    )
}

/// Text of the last user message in a recorded request.
pub fn last_user_message(request: &serde_json::Value) -> String {
    request["messages"]
        .as_array()
        .and_then(|m| m.iter().rev().find(|m| m["role"] == "user"))
        .and_then(|m| m["content"].as_str())
        .unwrap_or_default()
        .to_string()
}
