use std::collections::BTreeMap;
use std::io::Read;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use super::BackendError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

#[derive(Debug, Clone)]
pub struct HttpRequest {
    pub method: Method,
    pub url: String,
    pub headers: BTreeMap<String, String>,
    pub body: Option<Vec<u8>>,
}

impl HttpRequest {
    pub fn get(url: impl Into<String>) -> Self {
        HttpRequest { method: Method::Get, url: url.into(), headers: BTreeMap::new(), body: None }
    }

    pub fn post_json(url: impl Into<String>, body: &serde_json::Value) -> Self {
        let mut headers = BTreeMap::new();
        headers.insert("content-type".into(), "application/json".into());
        HttpRequest {
            method: Method::Post,
            url: url.into(),
            headers,
            body: Some(serde_json::to_vec(body).expect("json value serializes")),
        }
    }

    pub fn bearer(mut self, token: Option<&str>) -> Self {
        if let Some(t) = token {
            self.headers.insert("authorization".into(), format!("Bearer {t}"));
        }
        self
    }
}

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn json(&self) -> Result<serde_json::Value, BackendError> {
        serde_json::from_slice(&self.body).map_err(|e| BackendError::Decode(e.to_string()))
    }

    /// Maps non-2xx statuses onto backend errors.
    pub fn ok(self) -> Result<Self, BackendError> {
        match self.status {
            200..=299 => Ok(self),
            429 => Err(BackendError::QuotaExceeded),
            s => Err(BackendError::BackendUnavailable(format!(
                "HTTP {s}: {}",
                String::from_utf8_lossy(&self.body).chars().take(200).collect::<String>()
            ))),
        }
    }
}

/// The only path to the network. Everything live goes through one of these.
pub trait Transport: Send + Sync {
    fn send(&self, req: HttpRequest) -> Result<HttpResponse, BackendError>;
}

/// Blocking HTTP via `ureq`.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        UreqTransport { agent: ureq::AgentBuilder::new().timeout(timeout).build() }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        UreqTransport::new(Duration::from_secs(30))
    }
}

impl Transport for UreqTransport {
    fn send(&self, req: HttpRequest) -> Result<HttpResponse, BackendError> {
        let mut r = match req.method {
            Method::Get => self.agent.get(&req.url),
            Method::Post => self.agent.post(&req.url),
        };
        for (k, v) in &req.headers {
            r = r.set(k, v);
        }
        let result = match &req.body {
            Some(b) => r.send_bytes(b),
            None => r.call(),
        };
        let resp = match result {
            Ok(resp) => resp,
            Err(ureq::Error::Status(_, resp)) => resp,
            Err(e) => return Err(BackendError::BackendUnavailable(e.to_string())),
        };
        let status = resp.status();
        let mut body = Vec::new();
        resp.into_reader()
            .take(64 << 20)
            .read_to_end(&mut body)
            .map_err(|e| BackendError::BackendUnavailable(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

/// Wraps a transport and counts every request that reaches it.
pub struct CountingTransport {
    inner: Arc<dyn Transport>,
    calls: AtomicUsize,
}

impl CountingTransport {
    pub fn new(inner: Arc<dyn Transport>) -> Self {
        CountingTransport { inner, calls: AtomicUsize::new(0) }
    }

    /// A counter in front of a transport that always fails.
    pub fn offline() -> Self {
        CountingTransport::new(Arc::new(OfflineTransport))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for CountingTransport {
    fn send(&self, req: HttpRequest) -> Result<HttpResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.send(req)
    }
}

/// Fails every request.
pub struct OfflineTransport;

impl Transport for OfflineTransport {
    fn send(&self, req: HttpRequest) -> Result<HttpResponse, BackendError> {
        Err(BackendError::BackendUnavailable(format!("offline: {}", req.url)))
    }
}

/// Answers requests from a closure. Used to stand in for remote services.
pub struct FnTransport<F>(pub F);

impl<F> Transport for FnTransport<F>
where
    F: Fn(&HttpRequest) -> Result<HttpResponse, BackendError> + Send + Sync,
{
    fn send(&self, req: HttpRequest) -> Result<HttpResponse, BackendError> {
        (self.0)(&req)
    }
}
