//! Pseudonymization, profile stripping and the encrypted upload envelope.

mod client;
mod envelope;
mod keys;
mod pseudonym;

use thiserror::Error;

use crate::model::ParseError;

pub use client::{encode_client_trace, is_pseudonym, parse_client_trace, sanitize, ClientTrace};
pub use envelope::{
    decrypt_envelope, encrypt_envelope, UploadEnvelope, ENVELOPE_OVERHEAD, ENVELOPE_VERSION,
};
pub use keys::{EnvelopeKey, KeyRing};
pub use pseudonym::{pseudonymize, PseudonymKey};

#[derive(Debug, Error)]
pub enum PrivacyError {
    #[error("device id must not be empty")]
    EmptyDeviceId,
    #[error("policy violation: {0}")]
    PolicyViolation(String),
    #[error("unknown key id {0}")]
    UnknownKey(u32),
    #[error("envelope failed authentication")]
    Integrity,
    #[error("malformed envelope: {0}")]
    Malformed(String),
    #[error("key file {0}")]
    KeyFile(ParseError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}
