use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;

use chacha20poly1305::aead::{rand_core::RngCore, OsRng};

use super::{PrivacyError, PseudonymKey};
use crate::model::ParseError;

/// 256-bit symmetric key for upload envelopes.
#[derive(Clone, PartialEq, Eq)]
pub struct EnvelopeKey(pub(crate) [u8; 32]);

impl EnvelopeKey {
    pub fn new(bytes: [u8; 32]) -> Self {
        EnvelopeKey(bytes)
    }

    pub fn generate() -> Self {
        let mut k = [0u8; 32];
        OsRng.fill_bytes(&mut k);
        EnvelopeKey(k)
    }
}

impl fmt::Debug for EnvelopeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("EnvelopeKey(<redacted>)")
    }
}

/// Key material shared by clients and the ingestion service.
///
/// Key file lines:
///
/// ```text
/// K <key_id> <64 hex chars>    envelope key
/// P <64 hex chars> [days]      pseudonym secret, optional rotation period
/// ```
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyRing {
    envelope: BTreeMap<u32, EnvelopeKey>,
    pseudonym: Option<PseudonymKey>,
}

fn parse_secret(line: usize, s: &str) -> Result<[u8; 32], ParseError> {
    let mut out = [0u8; 32];
    hex::decode_to_slice(s, &mut out).map_err(|_| ParseError {
        line,
        message: "key must be 64 hex characters".into(),
    })?;
    Ok(out)
}

impl KeyRing {
    /// A ring with one fresh envelope key under `key_id` and a fresh
    /// pseudonym secret.
    pub fn generate(key_id: u32) -> Self {
        let mut ring = KeyRing::default();
        ring.insert(key_id, EnvelopeKey::generate());
        ring.pseudonym = Some(PseudonymKey::generate());
        ring
    }

    pub fn insert(&mut self, key_id: u32, key: EnvelopeKey) {
        self.envelope.insert(key_id, key);
    }

    pub fn set_pseudonym_key(&mut self, key: PseudonymKey) {
        self.pseudonym = Some(key);
    }

    pub fn get(&self, key_id: u32) -> Result<&EnvelopeKey, PrivacyError> {
        self.envelope.get(&key_id).ok_or(PrivacyError::UnknownKey(key_id))
    }

    /// Highest key id; clients seal with it.
    pub fn current_key_id(&self) -> Option<u32> {
        self.envelope.keys().next_back().copied()
    }

    pub fn pseudonym_key(&self) -> Option<&PseudonymKey> {
        self.pseudonym.as_ref()
    }

    pub fn parse(text: &str) -> Result<Self, PrivacyError> {
        let mut ring = KeyRing::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let err = |message: String| PrivacyError::KeyFile(ParseError { line, message });
            let fields: Vec<&str> = body.split_whitespace().collect();
            match fields.as_slice() {
                ["K", id, secret] => {
                    let id: u32 = id.parse().map_err(|_| err(format!("bad key id {id:?}")))?;
                    let key = parse_secret(line, secret).map_err(PrivacyError::KeyFile)?;
                    if ring.envelope.insert(id, EnvelopeKey(key)).is_some() {
                        return Err(err(format!("duplicate key id {id}")));
                    }
                }
                ["P", secret, rest @ ..] if rest.len() <= 1 => {
                    if ring.pseudonym.is_some() {
                        return Err(err("duplicate pseudonym secret".into()));
                    }
                    let mut key = PseudonymKey::new(parse_secret(line, secret).map_err(PrivacyError::KeyFile)?);
                    if let [days] = rest {
                        key.rotation_days = days
                            .parse()
                            .ok()
                            .filter(|d| *d > 0)
                            .ok_or_else(|| err(format!("bad rotation period {days:?}")))?;
                    }
                    ring.pseudonym = Some(key);
                }
                _ => return Err(err("expected `K <id> <hex>` or `P <hex> [days]`".into())),
            }
        }
        Ok(ring)
    }

    pub fn to_key_file(&self) -> String {
        let mut out = String::from("# mobiliscope key file; keep secret\n");
        for (id, key) in &self.envelope {
            writeln!(out, "K {id} {}", hex::encode(key.0)).unwrap();
        }
        if let Some(p) = &self.pseudonym {
            writeln!(out, "P {} {}", hex::encode(p.secret()), p.rotation_days).unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_file_round_trip() {
        let ring = KeyRing::generate(3);
        let text = ring.to_key_file();
        assert_eq!(KeyRing::parse(&text).unwrap(), ring);
        assert_eq!(ring.current_key_id(), Some(3));
    }

    #[test]
    fn bad_key_files() {
        let zero = "0".repeat(64);
        for (text, line) in [
            ("K x 00".to_string(), 1),
            (format!("K 1 {zero}\nK 1 {zero}"), 2),
            (format!("# c\nP {zero} 0"), 2),
            ("Q".to_string(), 1),
            (format!("K 1 {}", "0".repeat(63)), 1),
        ] {
            match KeyRing::parse(&text) {
                Err(PrivacyError::KeyFile(e)) => assert_eq!(e.line, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn unknown_key_id() {
        assert!(matches!(KeyRing::default().get(9), Err(PrivacyError::UnknownKey(9))));
    }

    #[test]
    fn debug_never_prints_secrets() {
        let ring = KeyRing::generate(1);
        let text = ring.to_key_file();
        let secret = text.lines().find(|l| l.starts_with("K ")).unwrap().split(' ').nth(2).unwrap();
        assert!(!format!("{ring:?}").contains(secret));
    }
}
