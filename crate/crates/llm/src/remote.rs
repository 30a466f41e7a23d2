//! OpenAI-compatible HTTP backend with a sliding-window rate limiter and
//! exponential backoff.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use crate::{ChatExchange, LlmBackend, LlmError};

pub const API_KEY_ENV: &str = "TSA_LLM_API_KEY";

/// Monotonic time source; `now` is measured from an arbitrary origin.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Virtual clock that advances only when slept on.
#[derive(Debug, Default)]
pub struct FakeClock {
    now: Mutex<Duration>,
    sleeps: Mutex<Vec<Duration>>,
}

impl FakeClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, d: Duration) {
        *self.now.lock().unwrap() += d;
    }

    /// Every sleep requested so far, in order.
    pub fn sleeps(&self) -> Vec<Duration> {
        self.sleeps.lock().unwrap().clone()
    }
}

impl Clock for FakeClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn sleep(&self, d: Duration) {
        self.sleeps.lock().unwrap().push(d);
        self.advance(d);
    }
}

/// At most `max_requests` admissions in any window of length `window`.
#[derive(Debug, Clone)]
pub struct RateLimiter {
    max_requests: usize,
    window: Duration,
    admitted: VecDeque<Duration>,
}

impl RateLimiter {
    pub fn new(max_requests: usize, window: Duration) -> Self {
        assert!(max_requests > 0, "rate limit must admit at least one request");
        Self { max_requests, window, admitted: VecDeque::new() }
    }

    pub fn per_minute(max_requests: usize) -> Self {
        Self::new(max_requests, Duration::from_secs(60))
    }

    /// Blocks on `clock` until a slot is free, then records the admission.
    pub fn acquire(&mut self, clock: &dyn Clock) -> Duration {
        loop {
            let now = clock.now();
            while self.admitted.front().is_some_and(|&t| t + self.window <= now) {
                self.admitted.pop_front();
            }
            if self.admitted.len() < self.max_requests {
                self.admitted.push_back(now);
                return now;
            }
            let oldest = self.admitted[0];
            clock.sleep(oldest + self.window - now);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: usize,
    pub base_delay: Duration,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, base_delay: Duration::from_secs(1), factor: 2.0 }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based).
    pub fn delay(&self, retry: usize) -> Duration {
        self.base_delay.mul_f64(self.factor.powi(retry as i32))
    }

    pub fn is_transient(status: u16) -> bool {
        status == 408 || status == 429 || (500..600).contains(&status)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("transport error: {0}")]
pub struct TransportError(pub String);

pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: &str, body: &Value) -> Result<HttpReply, TransportError>;
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn post_json(&self, url: &str, bearer: &str, body: &Value) -> Result<HttpReply, TransportError> {
        (**self).post_json(url, bearer, body)
    }
}

#[derive(Debug)]
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().http_status_as_error(false).timeout_global(Some(timeout)).build().into();
        Self { agent }
    }
}

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, bearer: &str, body: &Value) -> Result<HttpReply, TransportError> {
        let mut resp = self
            .agent
            .post(url)
            .header("Authorization", format!("Bearer {bearer}"))
            .send_json(body)
            .map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpReply { status, body })
    }
}

type Responder = Box<dyn Fn(&str, &Value) -> HttpReply + Send + Sync>;

/// Scripted transport for tests: replays queued outcomes, then a fallback.
pub struct FakeTransport {
    queue: Mutex<VecDeque<Result<HttpReply, TransportError>>>,
    fallback: Responder,
    clock: Option<Arc<dyn Clock>>,
    log: Mutex<Vec<(Duration, String, Value)>>,
}

impl FakeTransport {
    pub fn new(fallback: impl Fn(&str, &Value) -> HttpReply + Send + Sync + 'static) -> Self {
        Self { queue: Mutex::new(VecDeque::new()), fallback: Box::new(fallback), clock: None, log: Mutex::new(Vec::new()) }
    }

    /// Always answers with a chat completion whose content is `content`.
    pub fn answering(content: &str) -> Self {
        let body = chat_reply_body(content);
        Self::new(move |_, _| HttpReply { status: 200, body: body.clone() })
    }

    /// Stamps each request with the time read from `clock`.
    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = Some(clock);
        self
    }

    pub fn enqueue(&self, outcome: Result<HttpReply, TransportError>) {
        self.queue.lock().unwrap().push_back(outcome);
    }

    pub fn enqueue_status(&self, status: u16, body: &str) {
        self.enqueue(Ok(HttpReply { status, body: body.to_string() }));
    }

    pub fn attempts(&self) -> usize {
        self.log.lock().unwrap().len()
    }

    /// Request times, zero when no clock was attached.
    pub fn request_times(&self) -> Vec<Duration> {
        self.log.lock().unwrap().iter().map(|(t, _, _)| *t).collect()
    }

    pub fn requests(&self) -> Vec<(String, Value)> {
        self.log.lock().unwrap().iter().map(|(_, u, b)| (u.clone(), b.clone())).collect()
    }
}

impl Transport for FakeTransport {
    fn post_json(&self, url: &str, _bearer: &str, body: &Value) -> Result<HttpReply, TransportError> {
        let t = self.clock.as_ref().map(|c| c.now()).unwrap_or_default();
        self.log.lock().unwrap().push((t, url.to_string(), body.clone()));
        match self.queue.lock().unwrap().pop_front() {
            Some(outcome) => outcome,
            None => Ok((self.fallback)(url, body)),
        }
    }
}

/// JSON body of a minimal chat completion response.
pub fn chat_reply_body(content: &str) -> String {
    json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]}).to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    pub embed_model: String,
    pub timeout: Duration,
    pub max_requests_per_minute: usize,
    pub retry: RetryPolicy,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            embed_model: "text-embedding-3-small".into(),
            timeout: Duration::from_secs(120),
            max_requests_per_minute: 10,
            retry: RetryPolicy::default(),
        }
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    api_key: String,
    transport: Box<dyn Transport>,
    clock: Arc<dyn Clock>,
    limiter: Mutex<RateLimiter>,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend").field("config", &self.config).finish_non_exhaustive()
    }
}

impl RemoteBackend {
    /// Reads the key from the environment and talks HTTP over ureq.
    pub fn from_env(config: RemoteConfig) -> Result<Self, LlmError> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or(LlmError::MissingApiKey(API_KEY_ENV))?;
        let transport = UreqTransport::new(config.timeout);
        Ok(Self::with_parts(config, key, Box::new(transport), Arc::new(SystemClock::default())))
    }

    pub fn with_parts(config: RemoteConfig, api_key: String, transport: Box<dyn Transport>, clock: Arc<dyn Clock>) -> Self {
        let limiter = Mutex::new(RateLimiter::per_minute(config.max_requests_per_minute));
        Self { config, api_key, transport, clock, limiter }
    }

    fn url(&self, endpoint: &str) -> String {
        format!("{}/{endpoint}", self.config.base_url.trim_end_matches('/'))
    }

    /// One logical request: rate-limited attempts with backoff on transient
    /// failures. Requests are serialized through the limiter's lock.
    fn post(&self, endpoint: &str, body: &Value) -> Result<Value, LlmError> {
        let url = self.url(endpoint);
        let mut limiter = self.limiter.lock().unwrap();
        let policy = &self.config.retry;
        let mut last = String::new();
        for attempt in 0..=policy.max_retries {
            if attempt > 0 {
                let d = policy.delay(attempt - 1);
                log::warn!("retrying {endpoint} in {d:?} after: {last}");
                self.clock.sleep(d);
            }
            limiter.acquire(self.clock.as_ref());
            match self.transport.post_json(&url, &self.api_key, body) {
                Ok(reply) if (200..300).contains(&reply.status) => {
                    return serde_json::from_str(&reply.body).map_err(|e| LlmError::Decode(e.to_string()));
                }
                Ok(reply) if reply.status == 401 || reply.status == 403 => {
                    return Err(LlmError::Auth { status: reply.status });
                }
                Ok(reply) if RetryPolicy::is_transient(reply.status) => {
                    last = format!("HTTP {}", reply.status);
                }
                Ok(reply) => return Err(LlmError::Http { status: reply.status, body: reply.body }),
                Err(e) => last = e.to_string(),
            }
        }
        Err(LlmError::RetriesExhausted { attempts: policy.max_retries + 1, last })
    }
}

impl LlmBackend for RemoteBackend {
    fn chat(&self, exchange: &ChatExchange) -> Result<String, LlmError> {
        exchange.validate()?;
        let body = json!({
            "model": self.config.model,
            "messages": exchange.messages,
            "temperature": exchange.params.temperature,
            "max_tokens": exchange.params.max_tokens,
            "top_p": exchange.params.top_p,
        });
        let resp = self.post("chat/completions", &body)?;
        resp.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| LlmError::Decode("missing choices[0].message.content".into()))
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, LlmError> {
        if texts.is_empty() {
            return Err(LlmError::EmptyInput);
        }
        let body = json!({"model": self.config.embed_model, "input": texts});
        let resp = self.post("embeddings", &body)?;
        let data = resp.get("data").and_then(Value::as_array).ok_or_else(|| LlmError::Decode("missing data".into()))?;
        let mut out = vec![Vec::new(); texts.len()];
        for (pos, item) in data.iter().enumerate() {
            let index = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
            let vec = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| LlmError::Decode("missing embedding".into()))?
                .iter()
                .map(|v| v.as_f64().map(|x| x as f32).ok_or_else(|| LlmError::Decode("non-numeric embedding".into())))
                .collect::<Result<Vec<f32>, _>>()?;
            *out.get_mut(index).ok_or_else(|| LlmError::Decode(format!("embedding index {index} out of range")))? = vec;
        }
        if out.iter().any(Vec::is_empty) {
            return Err(LlmError::Decode("embedding count does not match input".into()));
        }
        Ok(out)
    }

    fn describe(&self) -> String {
        format!("remote {} ({})", self.config.base_url, self.config.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Message;

    fn exchange() -> ChatExchange {
        ChatExchange::new(vec![Message::system("s"), Message::user("u")])
    }

    fn backend(transport: FakeTransport, clock: Arc<FakeClock>) -> RemoteBackend {
        RemoteBackend::with_parts(RemoteConfig::default(), "k".into(), Box::new(transport), clock)
    }

    #[test]
    fn limiter_never_admits_more_than_max_in_a_window() {
        let clock = FakeClock::new();
        let mut rl = RateLimiter::per_minute(10);
        let times: Vec<Duration> = (0..35).map(|_| rl.acquire(&clock)).collect();
        for (i, &t) in times.iter().enumerate() {
            let in_window = times[i..].iter().filter(|&&u| u < t + Duration::from_secs(60)).count();
            assert!(in_window <= 10, "{in_window} requests in the minute after {t:?}");
        }
        assert_eq!(times[10], Duration::from_secs(60));
        assert_eq!(times[34], Duration::from_secs(180));
    }

    #[test]
    fn limiter_does_not_wait_when_spread_out() {
        let clock = FakeClock::new();
        let mut rl = RateLimiter::per_minute(10);
        for _ in 0..30 {
            rl.acquire(&clock);
            clock.advance(Duration::from_secs(6));
        }
        assert!(clock.sleeps().is_empty());
    }

    #[test]
    fn two_429_then_success() {
        let clock = Arc::new(FakeClock::new());
        let t = FakeTransport::answering("ok");
        t.enqueue_status(429, "slow down");
        t.enqueue_status(429, "slow down");
        let t = Arc::new(t);
        let b = RemoteBackend::with_parts(RemoteConfig::default(), "k".into(), Box::new(t.clone()), clock.clone());
        assert_eq!(b.chat(&exchange()).unwrap(), "ok");
        assert_eq!(t.attempts(), 3);
        assert_eq!(clock.sleeps(), vec![Duration::from_secs(1), Duration::from_secs(2)]);
    }

    #[test]
    fn four_failures_exhaust_three_retries() {
        let clock = Arc::new(FakeClock::new());
        let t = Arc::new(FakeTransport::new(|_, _| HttpReply { status: 503, body: String::new() }));
        let b = RemoteBackend::with_parts(RemoteConfig::default(), "k".into(), Box::new(t.clone()), clock.clone());
        match b.chat(&exchange()) {
            Err(LlmError::RetriesExhausted { attempts, .. }) => assert_eq!(attempts, 4),
            other => panic!("{other:?}"),
        }
        assert_eq!(t.attempts(), 4);
        assert_eq!(clock.sleeps(), vec![Duration::from_secs(1), Duration::from_secs(2), Duration::from_secs(4)]);
    }

    #[test]
    fn auth_failure_is_not_retried() {
        let clock = Arc::new(FakeClock::new());
        let t = Arc::new(FakeTransport::new(|_, _| HttpReply { status: 401, body: String::new() }));
        let b = RemoteBackend::with_parts(RemoteConfig::default(), "k".into(), Box::new(t.clone()), clock);
        assert!(matches!(b.chat(&exchange()), Err(LlmError::Auth { status: 401 })));
        assert_eq!(t.attempts(), 1);
    }

    #[test]
    fn transport_errors_are_retried() {
        let clock = Arc::new(FakeClock::new());
        let t = FakeTransport::answering("fine");
        t.enqueue(Err(TransportError("connection reset".into())));
        assert_eq!(backend(t, clock.clone()).chat(&exchange()).unwrap(), "fine");
        assert_eq!(clock.sleeps(), vec![Duration::from_secs(1)]);
    }

    #[test]
    fn chat_body_carries_parameters() {
        let t = Arc::new(FakeTransport::answering("x"));
        let b = RemoteBackend::with_parts(RemoteConfig::default(), "k".into(), Box::new(t.clone()), Arc::new(FakeClock::new()));
        b.chat(&exchange()).unwrap();
        let (url, body) = &t.requests()[0];
        assert!(url.ends_with("/chat/completions"));
        assert_eq!(body["temperature"], 0.5);
        assert_eq!(body["max_tokens"], 2048);
        assert_eq!(body["messages"][0]["role"], "system");
    }

    #[test]
    fn embeddings_are_reordered_by_index() {
        let reply = json!({"data": [
            {"index": 1, "embedding": [0.0, 1.0]},
            {"index": 0, "embedding": [1.0, 0.0]},
        ]})
        .to_string();
        let t = FakeTransport::new(move |_, _| HttpReply { status: 200, body: reply.clone() });
        let v = backend(t, Arc::new(FakeClock::new())).embed(&["a".into(), "b".into()]).unwrap();
        assert_eq!(v, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn malformed_reply_is_a_decode_error() {
        let t = FakeTransport::new(|_, _| HttpReply { status: 200, body: "{}".into() });
        assert!(matches!(backend(t, Arc::new(FakeClock::new())).chat(&exchange()), Err(LlmError::Decode(_))));
    }
}
