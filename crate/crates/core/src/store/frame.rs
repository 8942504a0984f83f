//! Length-prefixed, checksummed frames.
//!
//! `[len:u32 BE][sha256(payload)[..8]][payload]`

use sha2::{Digest, Sha256};

pub const HEADER_LEN: usize = 12;

fn checksum(payload: &[u8]) -> [u8; 8] {
    let digest = Sha256::digest(payload);
    digest[..8].try_into().unwrap()
}

pub fn encode(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&checksum(payload));
    out.extend_from_slice(payload);
    out
}

/// Splits `bytes` into complete, verified frames. Returns the payloads and
/// the length of the valid prefix; anything after it is a torn or corrupt
/// tail.
pub fn decode_all(bytes: &[u8]) -> (Vec<&[u8]>, usize) {
    let mut frames = Vec::new();
    let mut at = 0;
    while bytes.len() - at >= HEADER_LEN {
        let len = u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        let body = at + HEADER_LEN;
        if bytes.len() - body < len {
            break;
        }
        let payload = &bytes[body..body + len];
        if checksum(payload) != bytes[at + 4..at + 12] {
            break;
        }
        frames.push(payload);
        at = body + len;
    }
    (frames, at)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn any_truncation_keeps_a_prefix(
            payloads in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..64), 1..6),
            cut in any::<prop::sample::Index>(),
        ) {
            let bytes: Vec<u8> = payloads.iter().flat_map(|p| encode(p)).collect();
            let cut = cut.index(bytes.len() + 1);
            let (frames, valid) = decode_all(&bytes[..cut]);
            prop_assert!(valid <= cut);
            for (f, p) in frames.iter().zip(&payloads) {
                prop_assert_eq!(*f, p.as_slice());
            }
            if cut == bytes.len() {
                prop_assert_eq!(frames.len(), payloads.len());
            }
        }
    }

    #[test]
    fn corrupt_frame_stops_decoding() {
        let mut bytes = encode(b"first");
        let second_at = bytes.len();
        bytes.extend(encode(b"second"));
        bytes[second_at + HEADER_LEN] ^= 1;
        let (frames, valid) = decode_all(&bytes);
        assert_eq!(frames, [b"first".as_slice()]);
        assert_eq!(valid, second_at);
    }
}
