use std::sync::Arc;

use log::{info, warn};
use serde::Serialize;
use thiserror::Error;

use crate::model::encode_trace;
use crate::pipeline::Pipeline;
use crate::privacy::{decrypt_envelope, parse_client_trace, sanitize, KeyRing, PrivacyError, UploadEnvelope};

use super::{Store, StoreError, StoredRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Accepted {
    pub envelope_id: String,
    pub duplicate: bool,
}

/// Why an upload was refused. Messages never contain payload bytes.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed envelope: {0}")]
    Malformed(String),
    #[error("unknown key id {0}")]
    UnknownKey(u32),
    #[error("envelope failed authentication")]
    Integrity,
    #[error("trace does not parse: {0}")]
    Parse(String),
    #[error("policy violation: {0}")]
    Policy(String),
    #[error("storage failure: {0}")]
    Storage(#[from] StoreError),
}

impl IngestError {
    /// Stable machine-readable reason code.
    pub fn reason(&self) -> &'static str {
        match self {
            IngestError::Malformed(_) => "malformed_envelope",
            IngestError::UnknownKey(_) => "unknown_key",
            IngestError::Integrity => "integrity_error",
            IngestError::Parse(_) => "parse_error",
            IngestError::Policy(_) => "policy_violation",
            IngestError::Storage(_) => "storage_error",
        }
    }

    pub fn http_status(&self) -> u16 {
        match self {
            IngestError::UnknownKey(_) | IngestError::Integrity => 401,
            IngestError::Storage(_) => 500,
            _ => 400,
        }
    }
}

impl From<PrivacyError> for IngestError {
    fn from(e: PrivacyError) -> Self {
        match e {
            PrivacyError::UnknownKey(id) => IngestError::UnknownKey(id),
            PrivacyError::Integrity => IngestError::Integrity,
            PrivacyError::Malformed(m) => IngestError::Malformed(m),
            PrivacyError::Parse(p) | PrivacyError::KeyFile(p) => IngestError::Parse(p.to_string()),
            PrivacyError::PolicyViolation(m) => IngestError::Policy(m),
            PrivacyError::EmptyDeviceId => IngestError::Policy("empty device id".into()),
        }
    }
}

/// Decrypts, validates, processes and persists uploads.
#[derive(Debug, Clone)]
pub struct IngestService {
    pub store: Arc<Store>,
    pub pipeline: Arc<Pipeline>,
    keys: Arc<KeyRing>,
}

impl IngestService {
    pub fn new(store: Arc<Store>, pipeline: Arc<Pipeline>, keys: Arc<KeyRing>) -> Self {
        IngestService { store, pipeline, keys }
    }

    pub fn ingest_bytes(&self, bytes: &[u8]) -> Result<Accepted, IngestError> {
        let env = UploadEnvelope::from_bytes(bytes)?;
        self.ingest(&env)
    }

    pub fn ingest(&self, env: &UploadEnvelope) -> Result<Accepted, IngestError> {
        let envelope_id = env.envelope_id_hex();
        let result = self.process(env, &envelope_id);
        match &result {
            Ok(a) => info!("envelope {envelope_id}: accepted duplicate={}", a.duplicate),
            Err(e) => warn!("envelope {envelope_id}: rejected ({})", e.reason()),
        }
        result
    }

    fn process(&self, env: &UploadEnvelope, envelope_id: &str) -> Result<Accepted, IngestError> {
        // Authenticate before the duplicate check so a forged id cannot
        // probe which envelopes are stored.
        let plain = decrypt_envelope(env, &self.keys)?;
        if self.store.contains(envelope_id) {
            return Ok(Accepted { envelope_id: envelope_id.to_owned(), duplicate: true });
        }
        let text = std::str::from_utf8(&plain).map_err(|_| IngestError::Parse("payload is not UTF-8".into()))?;
        let client = parse_client_trace(text).map_err(|e| IngestError::Parse(e.to_string()))?;
        let trace = sanitize(client)?;
        let detection = self.pipeline.detect(&trace);
        let record = StoredRecord {
            envelope_id: envelope_id.to_owned(),
            received_at: self.store.now(),
            pseudonym: trace.pseudonym.clone(),
            date: trace.date,
            trace: encode_trace(&trace),
            trips: detection.trips,
        };
        let written = self.store.append(record)?;
        Ok(Accepted { envelope_id: envelope_id.to_owned(), duplicate: !written })
    }
}
