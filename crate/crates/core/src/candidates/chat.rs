//! Chat-completion providers: an OpenAI-compatible HTTP client and a fixture-backed mock.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChatError {
    #[error("network error talking to {url}: {message}")]
    Network { url: String, message: String },

    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },

    #[error("malformed completion payload: {0}")]
    Payload(String),

    #[error("API key variable `{0}` is not set")]
    MissingApiKey(String),

    #[error("mock fixture has no response for call #{call} (hash {hash})")]
    MockExhausted { call: usize, hash: String },

    #[error("mock fixture: {0}")]
    Fixture(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// Anything that can complete a conversation with a single assistant message.
pub trait ChatProvider: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, ChatError>;
}

/// Hex SHA-256 over `role\ncontent\n` of every message, used to key mock fixtures.
pub fn conversation_hash(messages: &[ChatMessage]) -> String {
    let mut h = Sha256::new();
    for m in messages {
        let role = match m.role {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        };
        h.update(role.as_bytes());
        h.update(b"\n");
        h.update(m.content.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatEndpointConfig {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key; empty for none.
    pub api_key_env_var: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub temperature: Option<f64>,
}

impl Default for ChatEndpointConfig {
    fn default() -> Self {
        ChatEndpointConfig {
            base_url: "https://api.openai.com/v1".into(),
            model_name: "gpt-4".into(),
            api_key_env_var: "OPENAI_API_KEY".into(),
            timeout_secs: 60.0,
            max_retries: 2,
            temperature: None,
        }
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

/// Blocking client for `POST {base_url}/chat/completions`.
pub struct HttpChatProvider {
    http: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: Option<String>,
    temperature: Option<f64>,
}

impl HttpChatProvider {
    pub fn new(config: &ChatEndpointConfig) -> Result<Self, ChatError> {
        let api_key = if config.api_key_env_var.is_empty() {
            None
        } else {
            Some(
                std::env::var(&config.api_key_env_var)
                    .map_err(|_| ChatError::MissingApiKey(config.api_key_env_var.clone()))?,
            )
        };
        let url = format!("{}/chat/completions", config.base_url.trim_end_matches('/'));
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs.max(0.001)))
            .build()
            .map_err(|e| ChatError::Network {
                url: url.clone(),
                message: e.to_string(),
            })?;
        Ok(HttpChatProvider {
            http,
            url,
            model: config.model_name.clone(),
            api_key,
            temperature: config.temperature,
        })
    }
}

impl ChatProvider for HttpChatProvider {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, ChatError> {
        let body = CompletionRequest {
            model: &self.model,
            messages,
            temperature: self.temperature,
        };
        let mut req = self.http.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let network = |e: reqwest::Error| ChatError::Network {
            url: self.url.clone(),
            message: e.to_string(),
        };
        let resp = req.send().map_err(network)?;
        let status = resp.status();
        let text = resp.text().map_err(network)?;
        if !status.is_success() {
            return Err(ChatError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        let parsed: CompletionResponse =
            serde_json::from_str(&text).map_err(|e| ChatError::Payload(format!("{e}: {text}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ChatError::Payload(format!("no message content in {text}")))
    }
}

/// Canned responses for offline runs.
///
/// `by_hash` maps a [`conversation_hash`] to its response and takes precedence;
/// otherwise the n-th call on a provider instance gets `sequence[n]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockFixture {
    pub sequence: Vec<String>,
    pub by_hash: HashMap<String, String>,
}

impl MockFixture {
    pub fn load(path: &Path) -> Result<Self, ChatError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ChatError::Fixture(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| ChatError::Fixture(format!("{}: {e}", path.display())))
    }

    pub fn from_sequence<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        MockFixture {
            sequence: responses.into_iter().map(Into::into).collect(),
            by_hash: HashMap::new(),
        }
    }
}

/// Replays a [`MockFixture`]. Each instance keeps its own call counter, so a
/// fresh instance per experiment cell replays deterministically.
#[derive(Debug)]
pub struct MockChatProvider {
    fixture: Arc<MockFixture>,
    calls: AtomicUsize,
}

impl MockChatProvider {
    pub fn new(fixture: Arc<MockFixture>) -> Self {
        MockChatProvider {
            fixture,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatProvider for MockChatProvider {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, ChatError> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst);
        let hash = conversation_hash(messages);
        if let Some(r) = self.fixture.by_hash.get(&hash) {
            return Ok(r.clone());
        }
        self.fixture
            .sequence
            .get(call)
            .cloned()
            .ok_or(ChatError::MockExhausted { call, hash })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::thread;

    #[test]
    fn mock_prefers_hash_then_sequence() {
        let msgs = vec![ChatMessage::user("hello")];
        let mut fixture = MockFixture::from_sequence(["first", "second"]);
        let mock = MockChatProvider::new(Arc::new(fixture.clone()));
        assert_eq!(mock.complete(&msgs).unwrap(), "first");
        assert_eq!(mock.complete(&msgs).unwrap(), "second");
        assert!(matches!(
            mock.complete(&msgs),
            Err(ChatError::MockExhausted { call: 2, .. })
        ));

        fixture
            .by_hash
            .insert(conversation_hash(&msgs), "keyed".into());
        let mock = MockChatProvider::new(Arc::new(fixture));
        assert_eq!(mock.complete(&msgs).unwrap(), "keyed");
        assert_eq!(
            mock.complete(&[ChatMessage::user("other")]).unwrap(),
            "second"
        );
    }

    #[test]
    fn hash_depends_on_role_and_order() {
        let a = conversation_hash(&[ChatMessage::user("x"), ChatMessage::assistant("y")]);
        let b = conversation_hash(&[ChatMessage::assistant("x"), ChatMessage::user("y")]);
        let c = conversation_hash(&[ChatMessage::user("x"), ChatMessage::assistant("y")]);
        assert_ne!(a, b);
        assert_eq!(a, c);
        assert_eq!(a.len(), 64);
    }

    /// Serves exactly one HTTP request with a canned status and body, returning
    /// the raw request text through the join handle.
    fn one_shot_server(status: &'static str, body: String) -> (String, thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = thread::spawn(move || {
            let (mut sock, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            loop {
                let n = sock.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
                let text = String::from_utf8_lossy(&buf);
                if let Some(head_end) = text.find("\r\n\r\n") {
                    let len = text[..head_end]
                        .lines()
                        .find_map(|l| {
                            l.to_ascii_lowercase()
                                .strip_prefix("content-length:")
                                .map(|v| v.trim().parse::<usize>().unwrap())
                        })
                        .unwrap_or(0);
                    if buf.len() >= head_end + 4 + len {
                        break;
                    }
                }
                if n == 0 {
                    break;
                }
            }
            let reply = format!(
                "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            sock.write_all(reply.as_bytes()).unwrap();
            String::from_utf8_lossy(&buf).into_owned()
        });
        (format!("http://{addr}"), handle)
    }

    #[test]
    fn http_provider_posts_chat_completion() {
        let body = serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": "[[1,0,1,0,0]]"}}]
        })
        .to_string();
        let (base, server) = one_shot_server("200 OK", body);
        std::env::set_var("GAITPREF_TEST_KEY", "sk-test");
        let provider = HttpChatProvider::new(&ChatEndpointConfig {
            base_url: format!("{base}/"),
            model_name: "test-model".into(),
            api_key_env_var: "GAITPREF_TEST_KEY".into(),
            timeout_secs: 5.0,
            max_retries: 0,
            temperature: None,
        })
        .unwrap();
        let out = provider.complete(&[ChatMessage::user("go")]).unwrap();
        assert_eq!(out, "[[1,0,1,0,0]]");
        let request = server.join().unwrap();
        assert!(request.starts_with("POST /chat/completions"));
        assert!(request
            .to_ascii_lowercase()
            .contains("authorization: bearer sk-test"));
        assert!(request.contains("\"model\":\"test-model\""));
        assert!(request.contains("\"role\":\"user\""));
    }

    #[test]
    fn http_status_and_network_errors_are_distinct() {
        let (base, server) = one_shot_server("500 Internal Server Error", "{\"error\":1}".into());
        let cfg = ChatEndpointConfig {
            base_url: base,
            api_key_env_var: String::new(),
            timeout_secs: 5.0,
            ..Default::default()
        };
        let provider = HttpChatProvider::new(&cfg).unwrap();
        assert!(matches!(
            provider.complete(&[ChatMessage::user("go")]),
            Err(ChatError::Status { status: 500, .. })
        ));
        server.join().unwrap();

        // nothing listens on a freshly released port
        let port = TcpListener::bind("127.0.0.1:0")
            .unwrap()
            .local_addr()
            .unwrap()
            .port();
        let provider = HttpChatProvider::new(&ChatEndpointConfig {
            base_url: format!("http://127.0.0.1:{port}"),
            ..cfg
        })
        .unwrap();
        assert!(matches!(
            provider.complete(&[ChatMessage::user("go")]),
            Err(ChatError::Network { .. })
        ));
    }

    #[test]
    fn missing_key_is_reported() {
        let cfg = ChatEndpointConfig {
            api_key_env_var: "GAITPREF_DEFINITELY_UNSET_VAR".into(),
            ..Default::default()
        };
        assert!(matches!(
            HttpChatProvider::new(&cfg),
            Err(ChatError::MissingApiKey(_))
        ));
    }
}
