use chacha20poly1305::aead::{rand_core::RngCore, AeadInPlace, KeyInit, OsRng};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce, Tag};
use log::warn;

use super::{KeyRing, PrivacyError};

pub const ENVELOPE_VERSION: u8 = 1;

/// Bytes of framing around the ciphertext.
pub const ENVELOPE_OVERHEAD: usize = 1 + 4 + 16 + 12 + 4 + 16;

/// Authenticated-encryption wrapper for one trace upload.
///
/// Wire layout, integers big-endian:
/// `[version:1][key_id:4][envelope_id:16][nonce:12][ct_len:4][ciphertext][tag:16]`.
/// The version, key id and envelope id are bound as associated data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UploadEnvelope {
    pub version: u8,
    pub key_id: u32,
    pub envelope_id: [u8; 16],
    pub nonce: [u8; 12],
    pub ciphertext: Vec<u8>,
    pub tag: [u8; 16],
}

impl UploadEnvelope {
    pub fn envelope_id_hex(&self) -> String {
        hex::encode(self.envelope_id)
    }

    fn aad(&self) -> [u8; 21] {
        let mut aad = [0u8; 21];
        aad[0] = self.version;
        aad[1..5].copy_from_slice(&self.key_id.to_be_bytes());
        aad[5..].copy_from_slice(&self.envelope_id);
        aad
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(ENVELOPE_OVERHEAD + self.ciphertext.len());
        out.push(self.version);
        out.extend_from_slice(&self.key_id.to_be_bytes());
        out.extend_from_slice(&self.envelope_id);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&(self.ciphertext.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.ciphertext);
        out.extend_from_slice(&self.tag);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PrivacyError> {
        let bad = |m: &str| PrivacyError::Malformed(m.to_owned());
        if bytes.len() < ENVELOPE_OVERHEAD {
            return Err(bad("truncated header"));
        }
        let version = bytes[0];
        if version != ENVELOPE_VERSION {
            return Err(PrivacyError::Malformed(format!("unsupported version {version}")));
        }
        let key_id = u32::from_be_bytes(bytes[1..5].try_into().unwrap());
        let envelope_id: [u8; 16] = bytes[5..21].try_into().unwrap();
        let nonce: [u8; 12] = bytes[21..33].try_into().unwrap();
        let ct_len = u32::from_be_bytes(bytes[33..37].try_into().unwrap()) as usize;
        if bytes.len() != ENVELOPE_OVERHEAD + ct_len {
            return Err(bad("length field does not match body"));
        }
        let ciphertext = bytes[37..37 + ct_len].to_vec();
        let tag: [u8; 16] = bytes[37 + ct_len..].try_into().unwrap();
        Ok(UploadEnvelope { version, key_id, envelope_id, nonce, ciphertext, tag })
    }
}

fn cipher(keys: &KeyRing, key_id: u32) -> Result<ChaCha20Poly1305, PrivacyError> {
    let key = keys.get(key_id)?;
    Ok(ChaCha20Poly1305::new(Key::from_slice(&key.0)))
}

/// Seals `payload` under `key_id` with a fresh random envelope id and nonce.
pub fn encrypt_envelope(
    payload: &[u8],
    key_id: u32,
    keys: &KeyRing,
) -> Result<UploadEnvelope, PrivacyError> {
    let cipher = cipher(keys, key_id)?;
    let mut env = UploadEnvelope {
        version: ENVELOPE_VERSION,
        key_id,
        envelope_id: [0; 16],
        nonce: [0; 12],
        ciphertext: payload.to_vec(),
        tag: [0; 16],
    };
    OsRng.fill_bytes(&mut env.envelope_id);
    OsRng.fill_bytes(&mut env.nonce);
    let aad = env.aad();
    let tag = cipher
        .encrypt_in_place_detached(Nonce::from_slice(&env.nonce), &aad, &mut env.ciphertext)
        .map_err(|_| PrivacyError::Malformed("payload too large".into()))?;
    env.tag.copy_from_slice(&tag);
    Ok(env)
}

pub fn decrypt_envelope(env: &UploadEnvelope, keys: &KeyRing) -> Result<Vec<u8>, PrivacyError> {
    let cipher = cipher(keys, env.key_id)?;
    let mut buf = env.ciphertext.clone();
    cipher
        .decrypt_in_place_detached(
            Nonce::from_slice(&env.nonce),
            &env.aad(),
            &mut buf,
            Tag::from_slice(&env.tag),
        )
        .map_err(|_| {
            warn!("envelope {} failed authentication", env.envelope_id_hex());
            PrivacyError::Integrity
        })?;
    Ok(buf)
}
