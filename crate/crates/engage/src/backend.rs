//! HTTP backend and the global in-flight request cap.
//!
//! Wire contract: `POST <endpoint>` with a JSON body
//!
//! ```json
//! {"model": "<model id>", "media": "<media reference>", "prompt": "<text>", "temperature": 0.7}
//! ```
//!
//! and `Authorization: Bearer <token>`, where the token comes from the
//! `ENGAGE_VLM_TOKEN` environment variable. A 2xx reply carries
//! `{"text": "<completion>"}`. Timeouts, connection failures, 429 and 5xx are
//! retryable; everything else is fatal.
//!
//! The media reference is the clip's own when set, otherwise
//! `<episode_id>#t=<start>,<end>` with the clip bounds in seconds.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use engage_core::vlm::{BackendError, ClipRef, VlmBackend, VlmRequest};
use serde::{Deserialize, Serialize};

pub const TOKEN_ENV: &str = "ENGAGE_VLM_TOKEN";

#[derive(Debug, Serialize)]
pub struct WireRequest<'a> {
    pub model: &'a str,
    pub media: String,
    pub prompt: &'a str,
    pub temperature: f64,
}

#[derive(Debug, Deserialize)]
pub struct WireResponse {
    pub text: String,
}

pub fn media_reference(clip: &ClipRef) -> String {
    clip.media_ref.clone().unwrap_or_else(|| {
        format!(
            "{}#t={:.3},{:.3}",
            clip.episode_id, clip.span.start_s, clip.span.end_s
        )
    })
}

#[derive(Debug)]
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    model: String,
    token: String,
}

impl HttpBackend {
    pub fn new(
        endpoint: &str,
        model: &str,
        token: &str,
        timeout: Duration,
    ) -> Result<Self, reqwest::Error> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()?;
        Ok(Self {
            client,
            endpoint: endpoint.into(),
            model: model.into(),
            token: token.into(),
        })
    }
}

impl VlmBackend for HttpBackend {
    fn complete(&self, req: &VlmRequest) -> Result<String, BackendError> {
        let body = WireRequest {
            model: &self.model,
            media: media_reference(&req.clip),
            prompt: &req.prompt,
            temperature: req.temperature,
        };
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.token)
            .json(&body)
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS {
            return Err(BackendError::Transport(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(BackendError::Fatal(format!(
                "HTTP {status}: {}",
                text.trim()
            )));
        }
        resp.json::<WireResponse>()
            .map(|r| r.text)
            .map_err(|e| BackendError::Fatal(format!("malformed response body: {e}")))
    }

    fn backoff(&self, _retry: u32, delay_ms: u64) {
        thread::sleep(Duration::from_millis(delay_ms));
    }
}

/// Caps concurrent requests to the wrapped backend across threads.
#[derive(Debug)]
pub struct InFlightLimit<B> {
    inner: B,
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

impl<B> InFlightLimit<B> {
    pub fn new(inner: B, limit: usize) -> Self {
        Self {
            inner,
            limit: limit.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

struct Slot<'a> {
    active: &'a Mutex<usize>,
    freed: &'a Condvar,
}

impl Drop for Slot<'_> {
    fn drop(&mut self) {
        *self.active.lock().unwrap_or_else(|e| e.into_inner()) -= 1;
        self.freed.notify_one();
    }
}

impl<B: VlmBackend + Send> VlmBackend for InFlightLimit<B> {
    fn complete(&self, req: &VlmRequest) -> Result<String, BackendError> {
        let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
        while *active >= self.limit {
            active = self.freed.wait(active).unwrap_or_else(|e| e.into_inner());
        }
        *active += 1;
        drop(active);
        let _slot = Slot {
            active: &self.active,
            freed: &self.freed,
        };
        self.inner.complete(req)
    }

    fn backoff(&self, retry: u32, delay_ms: u64) {
        self.inner.backoff(retry, delay_ms)
    }
}
