//! Blocking client for exposed services.

use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::Serialize;
use ureq::Agent;

use crate::model::{ElementType, Elements};
use crate::wire::{
    DataFrame, ErrorBody, PullResponse, ServiceDescriptor, ServiceUrl, StatusResponse, SubscribeResponse,
    UnsubscribeRequest, SERVICE_ROOT,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ClientError {
    #[error("malformed service URL {0:?}")]
    MalformedUrl(String),
    #[error("cannot reach {0}")]
    Unreachable(String),
    #[error("service not found: {0}")]
    NotFound(String),
    #[error("protocol error: {0}")]
    ProtocolError(String),
    #[error("service expects {expected} elements, got {actual}")]
    TypeMismatch { expected: ElementType, actual: ElementType },
    #[error("server error {status} {code}: {detail}")]
    Server { status: u16, code: String, detail: String },
    #[error("timed out waiting for end of stream")]
    Timeout,
}

impl ClientError {
    /// The server's error code, for errors the server reported.
    pub fn server_code(&self) -> Option<&str> {
        match self {
            ClientError::Server { code, .. } => Some(code),
            _ => None,
        }
    }
}

type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timeouts {
    pub connect: Duration,
    /// Budget for one response beyond any long-poll wait it asked for.
    pub read: Duration,
}

impl Default for Timeouts {
    fn default() -> Self {
        Timeouts {
            connect: Duration::from_secs(5),
            read: Duration::from_secs(30),
        }
    }
}

/// Longest single long-poll the client asks for.
const PULL_SLICE: Duration = Duration::from_secs(5);

#[derive(Clone)]
struct Http {
    agent: Agent,
}

impl Http {
    fn new(timeouts: Timeouts) -> Self {
        let agent: Agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_connect(Some(timeouts.connect))
            .timeout_recv_response(Some(timeouts.read + PULL_SLICE))
            .timeout_recv_body(Some(timeouts.read))
            .build()
            .into();
        Http { agent }
    }

    fn get<T: DeserializeOwned>(&self, url: &str, query: &[(&str, String)]) -> Result<T> {
        let mut req = self.agent.get(url);
        for (k, v) in query {
            req = req.query(*k, v);
        }
        read(url, req.call())
    }

    fn post<T: DeserializeOwned>(&self, url: &str, body: Option<&impl Serialize>) -> Result<T> {
        let req = self.agent.post(url);
        let resp = match body {
            Some(b) => req.send_json(b),
            None => req.send_empty(),
        };
        read(url, resp)
    }
}

fn read<T: DeserializeOwned>(url: &str, resp: std::result::Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Result<T> {
    let mut resp = resp.map_err(|e| match e {
        ureq::Error::Timeout(_) => ClientError::Timeout,
        e => ClientError::Unreachable(format!("{url}: {e}")),
    })?;
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| ClientError::ProtocolError(e.to_string()))?;
    if !(200..300).contains(&status) {
        return Err(match serde_json::from_str::<ErrorBody>(&text) {
            Ok(body) => ClientError::Server {
                status,
                code: body.error,
                detail: body.detail,
            },
            Err(_) => ClientError::Server {
                status,
                code: String::new(),
                detail: text,
            },
        });
    }
    serde_json::from_str(&text).map_err(|e| ClientError::ProtocolError(format!("{url}: {e}")))
}

/// One subscription to a service.
pub struct ClientSession {
    url: ServiceUrl,
    descriptor: ServiceDescriptor,
    sub_id: String,
    next_input_seq: u64,
    next_output_seq: u64,
    eos_seen: bool,
    http: Http,
}

impl std::fmt::Debug for ClientSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientSession")
            .field("url", &self.url.to_string())
            .field("sub_id", &self.sub_id)
            .field("next_input_seq", &self.next_input_seq)
            .finish()
    }
}

impl ClientSession {
    pub fn connect(url_text: &str) -> Result<Self> {
        Self::connect_with(url_text, Timeouts::default())
    }

    /// Fetches the descriptor and opens a subscription.
    pub fn connect_with(url_text: &str, timeouts: Timeouts) -> Result<Self> {
        let url: ServiceUrl = url_text
            .parse()
            .map_err(|_| ClientError::MalformedUrl(url_text.to_string()))?;
        let http = Http::new(timeouts);
        let descriptor: ServiceDescriptor = http.get(&url.to_string(), &[]).map_err(|e| match e {
            ClientError::Server { status: 404, .. } => ClientError::NotFound(url.to_string()),
            other => other,
        })?;
        if descriptor.service_name != url.service_name {
            return Err(ClientError::ProtocolError(format!(
                "descriptor names {:?}, expected {:?}",
                descriptor.service_name, url.service_name
            )));
        }
        let sub: SubscribeResponse = http.post(&url.endpoint("subscribe"), None::<&()>)?;
        Ok(ClientSession {
            url,
            descriptor,
            sub_id: sub.sub_id,
            next_input_seq: 0,
            next_output_seq: 0,
            eos_seen: false,
            http,
        })
    }

    pub fn url(&self) -> &ServiceUrl {
        &self.url
    }

    pub fn descriptor(&self) -> &ServiceDescriptor {
        &self.descriptor
    }

    pub fn sub_id(&self) -> &str {
        &self.sub_id
    }

    pub fn next_input_seq(&self) -> u64 {
        self.next_input_seq
    }

    /// Pushes one data frame with the next sequence number.
    pub fn send(&mut self, elements: &Elements) -> Result<()> {
        let expected = self.descriptor.input_element;
        if elements.element_type() != expected {
            return Err(ClientError::TypeMismatch {
                expected,
                actual: elements.element_type(),
            });
        }
        let frame = DataFrame::data(&self.sub_id, self.next_input_seq, elements);
        self.push(&frame)
    }

    /// Pushes the end-of-stream frame.
    pub fn finish(&mut self) -> Result<()> {
        let frame = DataFrame::end_of_stream(&self.sub_id, self.next_input_seq);
        self.push(&frame)
    }

    fn push(&mut self, frame: &DataFrame) -> Result<()> {
        let _: serde_json::Value = self.http.post(&self.url.endpoint("push"), Some(frame))?;
        self.next_input_seq += 1;
        Ok(())
    }

    /// One long-poll. Returns decoded results and whether end of stream arrived.
    pub fn pull(&mut self, max_wait: Duration) -> Result<(Vec<Elements>, bool)> {
        let resp: PullResponse = self.http.get(
            &self.url.endpoint("pull"),
            &[
                ("subId", self.sub_id.clone()),
                ("maxWaitMillis", max_wait.as_millis().to_string()),
            ],
        )?;
        let mut out = Vec::with_capacity(resp.frames.len());
        for frame in resp.frames {
            if self.eos_seen || frame.seq != self.next_output_seq {
                return Err(ClientError::ProtocolError(format!(
                    "expected output seq {}, got {}",
                    self.next_output_seq, frame.seq
                )));
            }
            self.next_output_seq += 1;
            if frame.eos {
                self.eos_seen = true;
            } else {
                out.push(
                    frame
                        .elements(self.descriptor.output_element)
                        .map_err(|e| ClientError::ProtocolError(e.to_string()))?,
                );
            }
        }
        Ok((out, self.eos_seen))
    }

    /// Pulls until end of stream, returning every result in sequence order.
    pub fn receive_all(&mut self, overall_timeout: Duration) -> Result<Vec<Elements>> {
        let deadline = Instant::now() + overall_timeout;
        let mut results = Vec::new();
        while !self.eos_seen {
            let remaining = deadline.saturating_duration_since(Instant::now());
            if remaining.is_zero() {
                return Err(ClientError::Timeout);
            }
            let (frames, _) = self.pull(remaining.min(PULL_SLICE))?;
            results.extend(frames);
        }
        Ok(results)
    }

    pub fn status(&self) -> Result<StatusResponse> {
        self.http
            .get(&self.url.endpoint("status"), &[("subId", self.sub_id.clone())])
    }

    pub fn unsubscribe(self) -> Result<()> {
        let body = UnsubscribeRequest {
            sub_id: self.sub_id.clone(),
        };
        let _: serde_json::Value = self.http.post(&self.url.endpoint("unsubscribe"), Some(&body))?;
        Ok(())
    }
}

/// Default overall deadline for [`process`].
pub const PROCESS_TIMEOUT: Duration = Duration::from_secs(60);

/// Connects, sends one frame, finishes, and returns the single result.
pub fn process(url_text: &str, elements: &Elements) -> Result<Elements> {
    let mut session = ClientSession::connect(url_text)?;
    session.send(elements)?;
    session.finish()?;
    let mut results = session.receive_all(PROCESS_TIMEOUT)?;
    let _ = session.unsubscribe();
    match results.len() {
        1 => Ok(results.pop().expect("one result")),
        n => Err(ClientError::ProtocolError(format!("expected one result frame, got {n}"))),
    }
}

/// Fetches the names of every exposed service from a container base URL
/// such as `http://127.0.0.1:8080`.
pub fn list_services(base_url: &str) -> Result<Vec<String>> {
    let base = base_url.trim_end_matches('/');
    let base = base.strip_suffix(SERVICE_ROOT).unwrap_or(base);
    if !base.starts_with("http://") {
        return Err(ClientError::MalformedUrl(base_url.to_string()));
    }
    Http::new(Timeouts::default()).get(&format!("{base}{SERVICE_ROOT}/"), &[])
}
