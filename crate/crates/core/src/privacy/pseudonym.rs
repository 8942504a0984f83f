use std::fmt;

use chacha20poly1305::aead::{rand_core::RngCore, OsRng};
use chrono::NaiveDate;
use hmac::{Hmac, Mac};
use sha2::Sha256;

use super::PrivacyError;

/// Secret for the keyed pseudonym hash.
#[derive(Clone, PartialEq, Eq)]
pub struct PseudonymKey {
    secret: [u8; 32],
    /// Days a pseudonym stays stable; periods are aligned to 1970-01-01.
    pub rotation_days: u32,
}

impl PseudonymKey {
    pub fn new(secret: [u8; 32]) -> Self {
        PseudonymKey { secret, rotation_days: 1 }
    }

    pub fn generate() -> Self {
        let mut secret = [0u8; 32];
        OsRng.fill_bytes(&mut secret);
        Self::new(secret)
    }

    pub(crate) fn secret(&self) -> &[u8; 32] {
        &self.secret
    }

    fn period_start(&self, date: NaiveDate) -> NaiveDate {
        let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap();
        let days = (date - epoch).num_days();
        let into_period = days.rem_euclid(i64::from(self.rotation_days.max(1)));
        date - chrono::Duration::days(into_period)
    }
}

impl fmt::Debug for PseudonymKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PseudonymKey")
            .field("secret", &"<redacted>")
            .field("rotation_days", &self.rotation_days)
            .finish()
    }
}

/// Daily pseudonym for a device: HMAC-SHA256 over the device id and the
/// rotation period's first date, truncated to 16 bytes of lowercase hex.
pub fn pseudonymize(
    device_id: &str,
    date: NaiveDate,
    key: &PseudonymKey,
) -> Result<String, PrivacyError> {
    if device_id.is_empty() {
        return Err(PrivacyError::EmptyDeviceId);
    }
    let mut mac = Hmac::<Sha256>::new_from_slice(&key.secret).expect("hmac accepts any key length");
    mac.update(device_id.as_bytes());
    mac.update(&[0]);
    mac.update(key.period_start(date).format("%Y-%m-%d").to_string().as_bytes());
    let digest = mac.finalize().into_bytes();
    Ok(hex::encode(&digest[..16]))
}
