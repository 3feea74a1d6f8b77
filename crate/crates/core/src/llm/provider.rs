//! Completion backends.

use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub model: String,
    pub temperature: f32,
    pub max_tokens: Option<u32>,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            model: "gpt-4.1".to_string(),
            temperature: 0.0,
            max_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("provider unavailable: {0}")]
pub struct ProviderError(pub String);

/// A completion endpoint: prompt in, text out.
pub trait LlmProvider: Send + Sync {
    /// Short backend name, such as `openai` or `mock`.
    fn name(&self) -> &str;
    fn complete(&self, prompt: &str, params: &GenParams) -> Result<String, ProviderError>;
}

/// Client for the chat-completions endpoint shared by OpenAI and most
/// self-hosted servers (Ollama, vLLM, llama.cpp).
pub struct OpenAiProvider {
    name: String,
    base_url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl OpenAiProvider {
    pub const OPENAI_URL: &'static str = "https://api.openai.com/v1";
    pub const SELF_HOSTED_URL: &'static str = "http://localhost:11434/v1";

    pub fn new(name: &str, base_url: &str, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(300)))
            .http_status_as_error(false)
            .build()
            .into();
        OpenAiProvider {
            name: name.to_string(),
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            agent,
        }
    }
}

impl LlmProvider for OpenAiProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, prompt: &str, params: &GenParams) -> Result<String, ProviderError> {
        let mut body = json!({
            "model": params.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
        });
        if let Some(max) = params.max_tokens {
            body["max_tokens"] = json!(max);
        }
        let url = format!("{}/chat/completions", self.base_url);
        let mut request = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send_json(&body).map_err(|e| ProviderError(format!("{url}: {e}")))?;
        let status = response.status();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderError(format!("{url}: {e}")))?;
        if !status.is_success() {
            return Err(ProviderError(format!("{url} answered {status}: {}", text.trim())));
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| ProviderError(format!("malformed response: {e}")))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ProviderError("response has no choices[0].message.content".to_string()))
    }
}

enum Replay {
    Script(VecDeque<String>),
    Dir(PathBuf),
    Fail(String),
}

/// Deterministic provider for tests and offline use. Records every prompt
/// it receives.
///
/// In directory mode the answer to call `n` (counting from 0) with prompt
/// `p` is read from `<hash>-<n>.txt`, where `<hash>` is the first 16 hex
/// digits of the SHA-256 of `p`. When that file does not exist,
/// `any-<n>.txt` and then `any.txt` are tried.
pub struct MockProvider {
    replay: Mutex<Replay>,
    prompts: Mutex<Vec<String>>,
}

impl MockProvider {
    /// Answers calls with the given responses in order. Calls beyond the
    /// end of the list fail.
    pub fn scripted<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        Self::with(Replay::Script(responses.into_iter().map(Into::into).collect()))
    }

    pub fn from_dir(dir: impl Into<PathBuf>) -> Self {
        Self::with(Replay::Dir(dir.into()))
    }

    /// Fails every call, like an unreachable server.
    pub fn failing(message: &str) -> Self {
        Self::with(Replay::Fail(message.to_string()))
    }

    fn with(replay: Replay) -> Self {
        MockProvider {
            replay: Mutex::new(replay),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> usize {
        self.prompts.lock().unwrap().len()
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap().clone()
    }

    pub fn last_prompt(&self) -> Option<String> {
        self.prompts.lock().unwrap().last().cloned()
    }

    /// The fixture file name that answers `prompt` as call `n`.
    pub fn fixture_name(prompt: &str, n: usize) -> String {
        let digest = Sha256::digest(prompt.as_bytes());
        let hash: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
        format!("{hash}-{n}.txt")
    }
}

impl LlmProvider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, prompt: &str, _params: &GenParams) -> Result<String, ProviderError> {
        let mut replay = self.replay.lock().unwrap();
        let n = {
            let mut prompts = self.prompts.lock().unwrap();
            prompts.push(prompt.to_string());
            prompts.len() - 1
        };
        match &mut *replay {
            Replay::Script(queue) => queue
                .pop_front()
                .ok_or_else(|| ProviderError(format!("mock has no response for call {n}"))),
            Replay::Fail(message) => Err(ProviderError(message.clone())),
            Replay::Dir(dir) => {
                let exact = Self::fixture_name(prompt, n);
                for name in [exact.clone(), format!("any-{n}.txt"), "any.txt".to_string()] {
                    let path = dir.join(&name);
                    if path.is_file() {
                        return std::fs::read_to_string(&path).map_err(|e| ProviderError(format!("{}: {e}", path.display())));
                    }
                }
                Err(ProviderError(format!("no mock response {} in {}", exact, dir.display())))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use std::io::{Read, Write};
    use std::net::TcpListener;

    use super::*;

    #[test]
    fn scripted_mock_replays_in_order_and_counts() {
        let mock = MockProvider::scripted(["a", "b"]);
        let p = GenParams::default();
        assert_eq!(mock.complete("x", &p).unwrap(), "a");
        assert_eq!(mock.complete("y", &p).unwrap(), "b");
        assert!(mock.complete("z", &p).is_err());
        assert_eq!(mock.calls(), 3);
        assert_eq!(mock.prompts(), vec!["x", "y", "z"]);
    }

    #[test]
    fn directory_mock_prefers_the_hashed_file() {
        let dir = std::env::temp_dir().join(format!("litterbox-mock-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(dir.join(MockProvider::fixture_name("hello", 0)), "exact").unwrap();
        std::fs::write(dir.join("any.txt"), "fallback").unwrap();
        let mock = MockProvider::from_dir(&dir);
        let p = GenParams::default();
        assert_eq!(mock.complete("hello", &p).unwrap(), "exact");
        assert_eq!(mock.complete("hello", &p).unwrap(), "fallback");
        std::fs::remove_dir_all(&dir).unwrap();
        assert!(mock.complete("hello", &p).is_err());
    }

    fn serve_once(status: &str, body: &str) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let response = format!(
            "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
            body.len()
        );
        let handle = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut request = Vec::new();
            let mut buf = [0u8; 4096];
            loop {
                let n = stream.read(&mut buf).unwrap();
                request.extend_from_slice(&buf[..n]);
                let text = String::from_utf8_lossy(&request);
                if let Some(end) = text.find("\r\n\r\n") {
                    let length = text[..end]
                        .lines()
                        .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse::<usize>().unwrap()))
                        .unwrap_or(0);
                    if request.len() >= end + 4 + length {
                        break;
                    }
                }
            }
            stream.write_all(response.as_bytes()).unwrap();
            String::from_utf8(request).unwrap()
        });
        (url, handle)
    }

    #[test]
    fn openai_client_sends_chat_request() {
        let (url, server) = serve_once("200 OK", r#"{"choices":[{"message":{"role":"assistant","content":"hi there"}}]}"#);
        let provider = OpenAiProvider::new("openai", &url, Some("sk-test".into()));
        let params = GenParams { model: "m1".into(), temperature: 0.0, max_tokens: Some(50) };
        assert_eq!(provider.complete("hello", &params).unwrap(), "hi there");
        let request = server.join().unwrap();
        assert!(request.starts_with("POST /v1/chat/completions"));
        assert!(request.to_ascii_lowercase().contains("authorization: bearer sk-test"));
        let body: Value = serde_json::from_str(&request[request.find("\r\n\r\n").unwrap() + 4..]).unwrap();
        assert_eq!(body["model"], "m1");
        assert_eq!(body["messages"][0]["content"], "hello");
        assert_eq!(body["max_tokens"], 50);
    }

    #[test]
    fn openai_client_reports_http_errors() {
        let (url, server) = serve_once("500 Internal Server Error", r#"{"error":"boom"}"#);
        let provider = OpenAiProvider::new("selfhosted", &url, None);
        let err = provider.complete("hello", &GenParams::default()).unwrap_err();
        assert!(err.0.contains("500"), "{err}");
        server.join().unwrap();
    }

    #[test]
    fn unreachable_server_is_unavailable() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let provider = OpenAiProvider::new("selfhosted", &format!("http://127.0.0.1:{port}/v1"), None);
        assert!(provider.complete("hello", &GenParams::default()).is_err());
    }
}
