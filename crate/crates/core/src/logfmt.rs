//! Framing shared by the append-only log files.
//!
//! Every log starts with a 4-byte magic, a version byte and a 16-byte
//! instance id. Records carry a trailing big-endian CRC-32 (IEEE,
//! reflected, init and final xor 0xFFFFFFFF).

use crate::types::{InstanceId, INSTANCE_ID_LEN};

pub(crate) const FORMAT_VERSION: u8 = 0x01;

/// Magic, version and id.
pub(crate) const BASE_HEADER_LEN: usize = 4 + 1 + INSTANCE_ID_LEN;

pub(crate) fn crc32(parts: &[&[u8]]) -> u32 {
    let mut hasher = crc32fast::Hasher::new();
    for p in parts {
        hasher.update(p);
    }
    hasher.finalize()
}

pub(crate) fn encode_base_header(magic: &[u8; 4], id: &InstanceId) -> Vec<u8> {
    let mut out = Vec::with_capacity(BASE_HEADER_LEN + 1);
    out.extend_from_slice(magic);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(id.as_bytes());
    out
}

/// Validates magic and version and returns the id. The caller checks the
/// length first.
pub(crate) fn decode_base_header(magic: &[u8; 4], bytes: &[u8]) -> Result<InstanceId, String> {
    if bytes.len() < BASE_HEADER_LEN {
        return Err(format!("header is {} bytes, expected {BASE_HEADER_LEN}", bytes.len()));
    }
    if &bytes[..4] != magic {
        return Err(format!("bad magic {:02x?}", &bytes[..4]));
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(format!("unsupported format version {:#04x}", bytes[4]));
    }
    Ok(InstanceId::from_slice(&bytes[5..BASE_HEADER_LEN]).expect("sliced to id length"))
}

/// Cursor over a log body that distinguishes "ran out of bytes" (a torn
/// tail) from successfully read fields.
pub(crate) struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(buf: &'a [u8], pos: usize) -> Self {
        Cursor { buf, pos }
    }

    pub(crate) fn pos(&self) -> usize {
        self.pos
    }

    pub(crate) fn at_end(&self) -> bool {
        self.pos >= self.buf.len()
    }

    pub(crate) fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    pub(crate) fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    pub(crate) fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_be_bytes(b.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_be_bytes(b.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crc_matches_ieee_check_value() {
        // Standard check value for "123456789".
        assert_eq!(crc32(&[b"123456789"]), 0xCBF4_3926);
        assert_eq!(crc32(&[b"1234", b"56789"]), 0xCBF4_3926);
    }

    #[test]
    fn header_round_trip_and_rejections() {
        let id = InstanceId::from_array([7; 16]);
        let h = encode_base_header(b"TEST", &id);
        assert_eq!(h.len(), BASE_HEADER_LEN);
        assert_eq!(decode_base_header(b"TEST", &h), Ok(id));
        assert!(decode_base_header(b"NOPE", &h).is_err());
        let mut bad = h.clone();
        bad[4] = 2;
        assert!(decode_base_header(b"TEST", &bad).is_err());
        assert!(decode_base_header(b"TEST", &h[..10]).is_err());
    }
}
