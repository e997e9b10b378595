//! Request/response framing for remote stores.
//!
//! Every message is `"XBS1" | opcode | payload`, integers big-endian:
//!
//! | opcode | message        | payload                                   |
//! |--------|----------------|-------------------------------------------|
//! | 0x01   | PUT            | val_len u32, value                        |
//! | 0x02   | GET            | key_len u32, key                          |
//! | 0x03   | STORE_ID       | none                                      |
//! | 0x04   | PUT_WITH_KEY   | key_len u32, key, val_len u32, value      |
//! | 0x81   | KEY            | key_len u32, key                          |
//! | 0x82   | DATA           | val_len u32, value                        |
//! | 0x83   | ID             | 16-byte store id                          |
//! | 0xFF   | ERR            | code u8, msg_len u32, UTF-8 message       |
//!
//! Declared lengths above 2^26 bytes are rejected before allocation.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::types::{BitString, Key, StoreId, INSTANCE_ID_LEN, MAX_KEY_LEN};

pub const MAGIC: &[u8; 4] = b"XBS1";
pub const MAX_FIELD_LEN: usize = 1 << 26;

const OP_PUT: u8 = 0x01;
const OP_GET: u8 = 0x02;
const OP_STORE_ID: u8 = 0x03;
const OP_PUT_WITH_KEY: u8 = 0x04;
const OP_KEY: u8 = 0x81;
const OP_DATA: u8 = 0x82;
const OP_ID: u8 = 0x83;
const OP_ERR: u8 = 0xFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCode {
    UnknownKey = 0x01,
    KeyConflict = 0x02,
    KeyMismatch = 0x03,
    Malformed = 0x04,
    Internal = 0x05,
}

impl ErrorCode {
    pub fn from_byte(b: u8) -> Option<Self> {
        Some(match b {
            0x01 => ErrorCode::UnknownKey,
            0x02 => ErrorCode::KeyConflict,
            0x03 => ErrorCode::KeyMismatch,
            0x04 => ErrorCode::Malformed,
            0x05 => ErrorCode::Internal,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireMessage {
    Put { value: BitString },
    Get { key: Key },
    StoreId,
    PutWithKey { key: Key, value: BitString },
    Key { key: Key },
    Data { value: BitString },
    Id { id: StoreId },
    Err { code: ErrorCode, message: String },
}

#[derive(Debug, Error)]
pub enum WireError {
    /// The stream ended cleanly before the first byte of a message.
    #[error("connection closed")]
    Closed,
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl WireMessage {
    pub fn is_request(&self) -> bool {
        matches!(
            self,
            WireMessage::Put { .. } | WireMessage::Get { .. } | WireMessage::StoreId | WireMessage::PutWithKey { .. }
        )
    }

    pub fn error(code: ErrorCode, message: impl Into<String>) -> Self {
        WireMessage::Err {
            code,
            message: message.into(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16);
        out.extend_from_slice(MAGIC);
        let field = |out: &mut Vec<u8>, bytes: &[u8]| {
            out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
            out.extend_from_slice(bytes);
        };
        match self {
            WireMessage::Put { value } => {
                out.push(OP_PUT);
                field(&mut out, value);
            }
            WireMessage::Get { key } => {
                out.push(OP_GET);
                field(&mut out, key.as_bytes());
            }
            WireMessage::StoreId => out.push(OP_STORE_ID),
            WireMessage::PutWithKey { key, value } => {
                out.push(OP_PUT_WITH_KEY);
                field(&mut out, key.as_bytes());
                field(&mut out, value);
            }
            WireMessage::Key { key } => {
                out.push(OP_KEY);
                field(&mut out, key.as_bytes());
            }
            WireMessage::Data { value } => {
                out.push(OP_DATA);
                field(&mut out, value);
            }
            WireMessage::Id { id } => {
                out.push(OP_ID);
                out.extend_from_slice(id.as_bytes());
            }
            WireMessage::Err { code, message } => {
                out.push(OP_ERR);
                out.push(*code as u8);
                field(&mut out, message.as_bytes());
            }
        }
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(&self.encode())
    }

    /// Reads exactly one message from `r`.
    pub fn decode(r: &mut impl Read) -> Result<Self, WireError> {
        let mut magic = [0u8; 4];
        let mut got = 0;
        while got < magic.len() {
            match r.read(&mut magic[got..]) {
                Ok(0) if got == 0 => return Err(WireError::Closed),
                Ok(0) => return Err(truncated()),
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        if &magic != MAGIC {
            return Err(WireError::Malformed(format!("bad magic {magic:02x?}")));
        }
        let op = read_array::<1>(r)?[0];
        Ok(match op {
            OP_PUT => WireMessage::Put { value: read_field(r)? },
            OP_GET => WireMessage::Get { key: read_key(r)? },
            OP_STORE_ID => WireMessage::StoreId,
            OP_PUT_WITH_KEY => {
                let key = read_key(r)?;
                WireMessage::PutWithKey {
                    key,
                    value: read_field(r)?,
                }
            }
            OP_KEY => WireMessage::Key { key: read_key(r)? },
            OP_DATA => WireMessage::Data { value: read_field(r)? },
            OP_ID => WireMessage::Id {
                id: StoreId::from_array(read_array::<INSTANCE_ID_LEN>(r)?),
            },
            OP_ERR => {
                let code = read_array::<1>(r)?[0];
                let code = ErrorCode::from_byte(code)
                    .ok_or_else(|| WireError::Malformed(format!("unknown error code {code:#04x}")))?;
                let message = String::from_utf8(read_field(r)?)
                    .map_err(|_| WireError::Malformed("error message is not UTF-8".into()))?;
                WireMessage::Err { code, message }
            }
            other => return Err(WireError::Malformed(format!("unknown opcode {other:#04x}"))),
        })
    }

    /// Decodes one message from the front of `bytes`, returning it with the
    /// number of bytes consumed.
    pub fn decode_slice(bytes: &[u8]) -> Result<(Self, usize), WireError> {
        let mut cursor = io::Cursor::new(bytes);
        let msg = Self::decode(&mut cursor)?;
        Ok((msg, cursor.position() as usize))
    }
}

fn truncated() -> WireError {
    WireError::Malformed("truncated message".into())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N], WireError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => truncated(),
        _ => WireError::Io(e),
    })?;
    Ok(buf)
}

fn read_field(r: &mut impl Read) -> Result<Vec<u8>, WireError> {
    let len = u32::from_be_bytes(read_array::<4>(r)?) as usize;
    if len > MAX_FIELD_LEN {
        return Err(WireError::Malformed(format!(
            "declared length {len} exceeds {MAX_FIELD_LEN}"
        )));
    }
    let mut buf = Vec::new();
    let read = r.take(len as u64).read_to_end(&mut buf)?;
    if read != len {
        return Err(truncated());
    }
    Ok(buf)
}

fn read_key(r: &mut impl Read) -> Result<Key, WireError> {
    let bytes = read_field(r)?;
    if bytes.is_empty() || bytes.len() > MAX_KEY_LEN {
        return Err(WireError::Malformed(format!("key length {} out of range", bytes.len())));
    }
    Ok(Key::new(bytes).expect("length checked"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn golden_get() {
        let m = WireMessage::Get {
            key: Key::new(vec![0xAB]).unwrap(),
        };
        let bytes = m.encode();
        assert_eq!(bytes, [0x58, 0x42, 0x53, 0x31, 0x02, 0x00, 0x00, 0x00, 0x01, 0xAB]);
        assert_eq!(WireMessage::decode_slice(&bytes).unwrap(), (m, 10));
    }

    #[test]
    fn golden_store_id_request() {
        assert_eq!(WireMessage::StoreId.encode(), [0x58, 0x42, 0x53, 0x31, 0x03]);
        assert_eq!(
            WireMessage::decode_slice(b"XBS1\x03").unwrap(),
            (WireMessage::StoreId, 5)
        );
    }

    #[test]
    fn golden_error() {
        let m = WireMessage::error(ErrorCode::UnknownKey, "no");
        assert_eq!(m.encode(), b"XBS1\xff\x01\x00\x00\x00\x02no");
    }

    #[test]
    fn rejections() {
        let malformed = |b: &[u8]| matches!(WireMessage::decode_slice(b), Err(WireError::Malformed(_)));
        assert!(malformed(b"XXXX\x03"));
        assert!(malformed(b"XBS1\x07"));
        assert!(malformed(b"XBS1"));
        assert!(malformed(b"XB"));
        assert!(malformed(b"XBS1\x02\x00\x00\x00\x00"), "empty key");
        assert!(malformed(b"XBS1\x02\x00\x00\x00\x02\xab"), "short key");
        assert!(malformed(b"XBS1\x01\x04\x00\x00\x01"), "over the length cap");
        assert!(malformed(b"XBS1\xff\x09\x00\x00\x00\x00"), "unknown error code");
        assert!(malformed(b"XBS1\xff\x01\x00\x00\x00\x01\xff"), "non-UTF-8 message");
        assert!(matches!(WireMessage::decode_slice(b""), Err(WireError::Closed)));
    }

    #[test]
    fn length_cap_boundary() {
        let mut at_cap = b"XBS1\x01".to_vec();
        at_cap.extend_from_slice(&(MAX_FIELD_LEN as u32).to_be_bytes());
        // exactly at the cap is allowed; it fails only because the bytes are missing
        match WireMessage::decode_slice(&at_cap) {
            Err(WireError::Malformed(m)) => assert_eq!(m, "truncated message"),
            other => panic!("{other:?}"),
        }
    }

    fn arb_key() -> impl Strategy<Value = Key> {
        proptest::collection::vec(any::<u8>(), 1..64).prop_map(|b| Key::new(b).unwrap())
    }

    fn arb_message() -> impl Strategy<Value = WireMessage> {
        let bytes = || proptest::collection::vec(any::<u8>(), 0..256);
        prop_oneof![
            bytes().prop_map(|value| WireMessage::Put { value }),
            arb_key().prop_map(|key| WireMessage::Get { key }),
            Just(WireMessage::StoreId),
            (arb_key(), bytes()).prop_map(|(key, value)| WireMessage::PutWithKey { key, value }),
            arb_key().prop_map(|key| WireMessage::Key { key }),
            bytes().prop_map(|value| WireMessage::Data { value }),
            any::<[u8; 16]>().prop_map(|b| WireMessage::Id {
                id: StoreId::from_array(b)
            }),
            (1u8..=5, "\\PC{0,20}").prop_map(|(c, message)| WireMessage::Err {
                code: ErrorCode::from_byte(c).unwrap(),
                message
            }),
        ]
    }

    proptest! {
        #[test]
        fn decode_inverts_encode(m in arb_message()) {
            let bytes = m.encode();
            prop_assert_eq!(WireMessage::decode_slice(&bytes).unwrap(), (m, bytes.len()));
        }

        #[test]
        fn messages_concatenate(a in arb_message(), b in arb_message()) {
            let mut bytes = a.encode();
            bytes.extend(b.encode());
            let mut cur = io::Cursor::new(&bytes);
            prop_assert_eq!(WireMessage::decode(&mut cur).unwrap(), a);
            prop_assert_eq!(WireMessage::decode(&mut cur).unwrap(), b);
            prop_assert!(matches!(WireMessage::decode(&mut cur), Err(WireError::Closed)));
        }

        #[test]
        fn decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let _ = WireMessage::decode_slice(&bytes);
        }
    }
}
