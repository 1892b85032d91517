//! Blocking HTTP client for a running session service.

use std::io::{BufRead, BufReader};

use anyhow::{anyhow, bail, Context, Result};
use rca_core::service::{Ack, Response, SessionEvent, SessionRequest, SessionView};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub struct Client {
    base: String,
    agent: ureq::Agent,
}

impl Client {
    pub fn new(base: &str) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Self { base: base.trim_end_matches('/').to_string(), agent }
    }

    fn decode<T: DeserializeOwned>(mut resp: ureq::http::Response<ureq::Body>) -> Result<T> {
        let status = resp.status();
        let text = resp.body_mut().read_to_string().context("reading response body")?;
        if !status.is_success() {
            let msg = serde_json::from_str::<serde_json::Value>(&text)
                .ok()
                .and_then(|v| v.get("error").and_then(|e| e.as_str()).map(String::from))
                .unwrap_or(text);
            bail!("{} {}", status.as_u16(), msg);
        }
        serde_json::from_str(&text).with_context(|| format!("unexpected response: {text}"))
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        let resp = self.agent.get(&format!("{}{path}", self.base)).call().map_err(|e| anyhow!("GET {path}: {e}"))?;
        Self::decode(resp)
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        let resp = self
            .agent
            .post(&format!("{}{path}", self.base))
            .send_json(body)
            .map_err(|e| anyhow!("POST {path}: {e}"))?;
        Self::decode(resp)
    }

    pub fn create(&self, request: &SessionRequest) -> Result<SessionView> {
        self.post("/sessions", request)
    }

    pub fn list(&self) -> Result<Vec<SessionView>> {
        self.get("/sessions")
    }

    pub fn session(&self, id: &str) -> Result<SessionView> {
        self.get(&format!("/sessions/{id}"))
    }

    pub fn respond(&self, id: &str, action: &Response) -> Result<Ack> {
        self.post(&format!("/sessions/{id}/respond"), action)
    }

    /// Reads the event stream, calling `each` per event. With `follow` the
    /// call returns once the session has finished.
    pub fn events(&self, id: &str, after: u64, follow: bool, mut each: impl FnMut(SessionEvent)) -> Result<()> {
        let path = format!("/sessions/{id}/events?after={after}&follow={follow}");
        let mut resp = self.agent.get(&format!("{}{path}", self.base)).call().map_err(|e| anyhow!("GET {path}: {e}"))?;
        if !resp.status().is_success() {
            return Self::decode::<serde_json::Value>(resp).map(|_| ());
        }
        let reader = BufReader::new(resp.body_mut().as_reader());
        let mut data = String::new();
        for line in reader.lines() {
            let line = line.context("reading event stream")?;
            if let Some(rest) = line.strip_prefix("data:") {
                data.push_str(rest.strip_prefix(' ').unwrap_or(rest));
            } else if line.is_empty() && !data.is_empty() {
                let e: SessionEvent = serde_json::from_str(&data).with_context(|| format!("bad event: {data}"))?;
                each(e);
                data.clear();
            }
        }
        Ok(())
    }
}
