use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::domain::{ContentHash, TokenUsage};

use super::cache::Recorder;
use super::images::ImageStore;
use super::transport::{HttpRequest, Transport};
use super::BackendError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<ContentHash>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, text: text.into(), images: vec![] }
    }

    pub fn user(text: impl Into<String>, images: Vec<ContentHash>) -> Self {
        ChatMessage { role: Role::User, text: text.into(), images }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub max_tokens: u32,
}

impl LlmRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return Err(BackendError::InvalidRequest("no user message".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::InvalidRequest(format!("temperature {}", self.temperature)));
        }
        Ok(())
    }

    /// Concatenated text of all user messages.
    pub fn user_text(&self) -> String {
        self.messages.iter().filter(|m| m.role == Role::User).map(|m| m.text.as_str()).collect::<Vec<_>>().join("\n")
    }

    /// Rough prompt size: four characters per token plus a flat cost per image.
    pub fn estimated_tokens(&self) -> u64 {
        self.messages.iter().map(|m| (m.text.chars().count() as u64).div_ceil(4) + 4 + 85 * m.images.len() as u64).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub usage: TokenUsage,
}

pub trait LlmBackend: Send + Sync {
    fn complete(&self, req: &LlmRequest) -> Result<Completion, BackendError>;
}

fn estimate_usage(req: &LlmRequest, text: &str) -> TokenUsage {
    TokenUsage { prompt: req.estimated_tokens(), completion: (text.chars().count() as u64).div_ceil(4) }
}

/// OpenAI-compatible `POST {endpoint}/chat/completions`. Images are sent as
/// base64 data URLs.
pub struct ChatCompletionsBackend {
    endpoint: String,
    api_key: Option<String>,
    transport: Arc<dyn Transport>,
    images: Arc<ImageStore>,
}

impl ChatCompletionsBackend {
    pub fn new(
        endpoint: impl Into<String>,
        api_key: Option<String>,
        transport: Arc<dyn Transport>,
        images: Arc<ImageStore>,
    ) -> Self {
        ChatCompletionsBackend { endpoint: endpoint.into(), api_key, transport, images }
    }

    fn message_json(&self, m: &ChatMessage) -> Result<Value, BackendError> {
        if m.images.is_empty() {
            return Ok(json!({ "role": m.role, "content": m.text }));
        }
        let mut parts = vec![json!({ "type": "text", "text": m.text })];
        for h in &m.images {
            let bytes = self.images.bytes(h)?;
            let data = base64::engine::general_purpose::STANDARD.encode(bytes);
            parts
                .push(json!({ "type": "image_url", "image_url": { "url": format!("data:image/jpeg;base64,{data}") } }));
        }
        Ok(json!({ "role": m.role, "content": parts }))
    }
}

impl LlmBackend for ChatCompletionsBackend {
    fn complete(&self, req: &LlmRequest) -> Result<Completion, BackendError> {
        let messages = req.messages.iter().map(|m| self.message_json(m)).collect::<Result<Vec<_>, _>>()?;
        let mut body = json!({
            "model": req.model_id,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        if let Some(seed) = req.seed {
            body["seed"] = json!(seed);
        }
        let url = format!("{}/chat/completions", self.endpoint.trim_end_matches('/'));
        let resp =
            self.transport.send(HttpRequest::post_json(url, &body).bearer(self.api_key.as_deref()))?.ok()?.json()?;
        let text = resp
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| BackendError::Decode("no choices[0].message.content".into()))?
            .to_string();
        let usage = match resp.get("usage") {
            Some(u) => TokenUsage {
                prompt: u.get("prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
                completion: u.get("completion_tokens").and_then(Value::as_u64).unwrap_or(0),
            },
            None => estimate_usage(req, &text),
        };
        Ok(Completion { text, usage })
    }
}

/// Record/replay in front of a live model.
pub struct RecordReplayLlm {
    id: String,
    inner: Option<Arc<dyn LlmBackend>>,
    recorder: Recorder,
}

impl RecordReplayLlm {
    pub fn new(id: impl Into<String>, inner: Option<Arc<dyn LlmBackend>>, recorder: Recorder) -> Self {
        RecordReplayLlm { id: id.into(), inner, recorder }
    }
}

impl LlmBackend for RecordReplayLlm {
    fn complete(&self, req: &LlmRequest) -> Result<Completion, BackendError> {
        req.validate()?;
        let canonical = serde_json::to_value(req).map_err(|e| BackendError::Decode(e.to_string()))?;
        let (c, _) = self.recorder.call(&self.id, "chat", &canonical, || {
            self.inner
                .as_ref()
                .ok_or_else(|| BackendError::BackendUnavailable(format!("llm {} not configured", self.id)))?
                .complete(req)
        })?;
        Ok(c)
    }
}

/// Rejects prompts whose estimated size exceeds the model's context.
pub struct ContextLimit {
    inner: Arc<dyn LlmBackend>,
    max_context_tokens: u64,
}

impl ContextLimit {
    pub fn new(inner: Arc<dyn LlmBackend>, max_context_tokens: u64) -> Self {
        ContextLimit { inner, max_context_tokens }
    }
}

impl LlmBackend for ContextLimit {
    fn complete(&self, req: &LlmRequest) -> Result<Completion, BackendError> {
        let needed = req.estimated_tokens() + req.max_tokens as u64;
        if needed > self.max_context_tokens {
            return Err(BackendError::ContextTooLong { tokens: needed, limit: self.max_context_tokens });
        }
        self.inner.complete(req)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scripted {
    Reply(String),
    Fail(String),
}

/// Pops canned replies in order; fails once the queue runs dry.
#[derive(Default)]
pub struct ScriptedLlm {
    queue: Mutex<VecDeque<Scripted>>,
}

impl ScriptedLlm {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedLlm { queue: Mutex::new(replies.into_iter().map(|s| Scripted::Reply(s.into())).collect()) }
    }

    pub fn from_script(script: Vec<Scripted>) -> Self {
        ScriptedLlm { queue: Mutex::new(script.into()) }
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().unwrap_or_else(|p| p.into_inner()).len()
    }
}

impl LlmBackend for ScriptedLlm {
    fn complete(&self, req: &LlmRequest) -> Result<Completion, BackendError> {
        req.validate()?;
        let next = self.queue.lock().unwrap_or_else(|p| p.into_inner()).pop_front();
        match next {
            Some(Scripted::Reply(text)) => Ok(Completion { usage: estimate_usage(req, &text), text }),
            Some(Scripted::Fail(why)) => Err(BackendError::BackendUnavailable(why)),
            None => Err(BackendError::BackendUnavailable("script exhausted".into())),
        }
    }
}

/// Answers from a function of the request. Deterministic when `F` is.
pub struct FnLlm<F>(pub F);

impl<F> LlmBackend for FnLlm<F>
where
    F: Fn(&LlmRequest) -> Result<String, BackendError> + Send + Sync,
{
    fn complete(&self, req: &LlmRequest) -> Result<Completion, BackendError> {
        req.validate()?;
        let text = (self.0)(req)?;
        Ok(Completion { usage: estimate_usage(req, &text), text })
    }
}

/// Counts calls and keeps every request for inspection.
pub struct CountingLlm {
    inner: Arc<dyn LlmBackend>,
    calls: AtomicUsize,
    seen: Mutex<Vec<LlmRequest>>,
}

impl CountingLlm {
    pub fn new(inner: Arc<dyn LlmBackend>) -> Self {
        CountingLlm { inner, calls: AtomicUsize::new(0), seen: Mutex::new(vec![]) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<LlmRequest> {
        self.seen.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }
}

impl LlmBackend for CountingLlm {
    fn complete(&self, req: &LlmRequest) -> Result<Completion, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.seen.lock().unwrap_or_else(|p| p.into_inner()).push(req.clone());
        self.inner.complete(req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::transport::{CountingTransport, FnTransport, HttpResponse};
    use crate::backends::{BackendMode, ResponseCache};

    fn req(text: &str, temperature: f64) -> LlmRequest {
        LlmRequest {
            model_id: "m".into(),
            messages: vec![ChatMessage::system("sys"), ChatMessage::user(text, vec![])],
            temperature,
            seed: Some(1),
            max_tokens: 64,
        }
    }

    #[test]
    fn scripted_returns_head_of_queue() {
        let llm = ScriptedLlm::new(["fake|85|image reused", "real|10|x"]);
        assert_eq!(llm.complete(&req("a", 0.0)).unwrap().text, "fake|85|image reused");
        assert_eq!(llm.remaining(), 1);
    }

    #[test]
    fn needs_a_user_message() {
        let llm = ScriptedLlm::new(["x"]);
        let mut r = req("a", 0.0);
        r.messages.retain(|m| m.role != Role::User);
        assert!(matches!(llm.complete(&r), Err(BackendError::InvalidRequest(_))));
    }

    #[test]
    fn context_limit() {
        let llm = ContextLimit::new(Arc::new(ScriptedLlm::new(["x"])), 100);
        let long = "word ".repeat(400);
        assert!(matches!(llm.complete(&req(&long, 0.0)), Err(BackendError::ContextTooLong { .. })));
    }

    #[test]
    fn replay_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Arc::new(ResponseCache::open(dir.path()).unwrap());
        let n = AtomicUsize::new(0);
        let live: Arc<dyn LlmBackend> = Arc::new(FnLlm(move |_: &LlmRequest| {
            Ok(format!("real|{}|sampled", 50 + n.fetch_add(1, Ordering::SeqCst)))
        }));
        let recorder = Recorder::new(BackendMode::Record, Some(cache.clone())).unwrap();
        let rec = RecordReplayLlm::new("gpt", Some(live), recorder);
        let first = rec.complete(&req("claim", 0.0)).unwrap();

        let replay = RecordReplayLlm::new("gpt", None, Recorder::new(BackendMode::Replay, Some(cache)).unwrap());
        for _ in 0..3 {
            assert_eq!(replay.complete(&req("claim", 0.0)).unwrap(), first);
        }
        assert!(matches!(replay.complete(&req("other", 0.0)), Err(BackendError::CacheMiss { .. })));
    }

    #[test]
    fn chat_completions_wire_format() {
        let transport = Arc::new(CountingTransport::new(Arc::new(FnTransport(|r: &HttpRequest| {
            assert!(r.url.ends_with("/chat/completions"));
            let body: Value = serde_json::from_slice(r.body.as_ref().unwrap()).unwrap();
            assert_eq!(body["model"], "m");
            assert_eq!(body["seed"], 1);
            assert_eq!(body["messages"][1]["role"], "user");
            let out = json!({
                "choices": [{"message": {"content": "fake|90|x"}}],
                "usage": {"prompt_tokens": 12, "completion_tokens": 3}
            });
            Ok(HttpResponse { status: 200, body: serde_json::to_vec(&out).unwrap() })
        }))));
        let llm = ChatCompletionsBackend::new("http://llm/v1", None, transport.clone(), Arc::new(ImageStore::new()));
        let c = llm.complete(&req("a", 0.0)).unwrap();
        assert_eq!(c.text, "fake|90|x");
        assert_eq!(c.usage, TokenUsage { prompt: 12, completion: 3 });
        assert_eq!(transport.calls(), 1);
    }
}
