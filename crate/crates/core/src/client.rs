//! Blocking HTTP client for the upload and query endpoints.

use std::time::Duration;

use thiserror::Error;
use ureq::Agent;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot connect to {url}: {message}")]
    Connection { url: String, message: String },
    #[error("server answered {status}: {body}")]
    Http { status: u16, body: String },
    #[error("request failed: {0}")]
    Other(String),
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    token: Option<String>,
    agent: Agent,
}

impl Client {
    pub fn new(base_url: &str, token: Option<String>) -> Self {
        let agent: Agent = Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        Client { base: base_url.trim_end_matches('/').to_owned(), token, agent }
    }

    fn map_err(&self, e: ureq::Error) -> ClientError {
        match e {
            ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => {
                ClientError::Connection { url: self.base.clone(), message: e.to_string() }
            }
            ureq::Error::Io(io) => {
                ClientError::Connection { url: self.base.clone(), message: io.to_string() }
            }
            e => ClientError::Other(e.to_string()),
        }
    }

    fn finish(&self, resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Result<String, ClientError> {
        let mut resp = resp.map_err(|e| self.map_err(e))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ClientError::Other(e.to_string()))?;
        if status >= 400 {
            return Err(ClientError::Http { status, body });
        }
        Ok(body)
    }

    /// Uploads a sealed envelope; returns the JSON acknowledgement.
    pub fn upload(&self, envelope: &[u8]) -> Result<String, ClientError> {
        let mut req = self
            .agent
            .post(format!("{}/v1/traces", self.base))
            .header("Content-Type", "application/octet-stream");
        if let Some(t) = &self.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        self.finish(req.send(envelope))
    }

    /// GETs `path` with query parameters; returns the JSON body.
    pub fn get(&self, path: &str, params: &[(String, String)]) -> Result<String, ClientError> {
        let mut req = self
            .agent
            .get(format!("{}{}", self.base, path))
            .query_pairs(params.iter().map(|(k, v)| (k.as_str(), v.as_str())));
        if let Some(t) = &self.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        self.finish(req.call())
    }
}
