//! Client side of the wire protocol: a [`Store`] living on another node.

use std::io::{self, BufReader, BufWriter, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use super::wire::{ErrorCode, WireError, WireMessage};
use crate::store::{content_key, Store, StoreError};
use crate::types::{BitString, Key, StoreId};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(10);

struct Connection {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

/// A store reached through a `host:port` address. The connection is opened
/// on first use and re-established once if it breaks mid-call.
pub struct RemoteStore {
    address: String,
    timeout: Duration,
    conn: Mutex<Option<Connection>>,
    id: OnceLock<StoreId>,
}

impl RemoteStore {
    pub fn new(address: impl Into<String>) -> Self {
        Self::with_timeout(address, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(address: impl Into<String>, timeout: Duration) -> Self {
        RemoteStore {
            address: address.into(),
            timeout,
            conn: Mutex::new(None),
            id: OnceLock::new(),
        }
    }

    pub fn address(&self) -> &str {
        &self.address
    }

    fn unreachable(&self, source: io::Error) -> StoreError {
        StoreError::Unreachable {
            address: self.address.clone(),
            source,
        }
    }

    fn connect(&self) -> io::Result<Connection> {
        let mut last = io::Error::new(io::ErrorKind::NotFound, "address resolved to nothing");
        for addr in self.address.to_socket_addrs()? {
            match TcpStream::connect_timeout(&addr, self.timeout) {
                Ok(stream) => {
                    stream.set_read_timeout(Some(self.timeout))?;
                    stream.set_write_timeout(Some(self.timeout))?;
                    let _ = stream.set_nodelay(true);
                    return Ok(Connection {
                        reader: BufReader::new(stream.try_clone()?),
                        writer: BufWriter::new(stream),
                    });
                }
                Err(e) => last = e,
            }
        }
        Err(last)
    }

    fn call(&self, request: &WireMessage) -> Result<WireMessage, StoreError> {
        let mut guard = self.conn.lock().unwrap();
        let mut last = None;
        for _ in 0..2 {
            if guard.is_none() {
                match self.connect() {
                    Ok(c) => *guard = Some(c),
                    Err(e) => {
                        last = Some(e);
                        continue;
                    }
                }
            }
            let conn = guard.as_mut().expect("connected above");
            let outcome = request
                .write_to(&mut conn.writer)
                .and_then(|()| conn.writer.flush())
                .map_err(WireError::Io)
                .and_then(|()| WireMessage::decode(&mut conn.reader));
            match outcome {
                Ok(response) => return Ok(response),
                Err(WireError::Malformed(m)) => {
                    *guard = None;
                    return Err(StoreError::Protocol(m));
                }
                Err(WireError::Closed) => {
                    *guard = None;
                    last = Some(io::Error::new(
                        io::ErrorKind::ConnectionAborted,
                        "connection closed by peer",
                    ));
                }
                Err(WireError::Io(e)) => {
                    *guard = None;
                    last = Some(e);
                }
            }
        }
        Err(self.unreachable(last.expect("loop ran")))
    }
}

fn unexpected(response: WireMessage) -> StoreError {
    StoreError::Protocol(format!("unexpected response {response:?}"))
}

/// Maps an ERR response back to the local error it stands for. `key` and
/// `value` are those of the request.
fn remote_error(code: ErrorCode, message: String, key: Option<&Key>, value: Option<&[u8]>) -> StoreError {
    match (code, key) {
        (ErrorCode::UnknownKey, Some(k)) => StoreError::UnknownKey(k.clone()),
        (ErrorCode::KeyConflict, Some(k)) => StoreError::KeyConflict(k.clone()),
        (ErrorCode::KeyMismatch, Some(k)) => StoreError::KeyMismatch {
            key: k.clone(),
            digest: content_key(value.unwrap_or_default()),
        },
        (ErrorCode::Malformed, _) => StoreError::Protocol(message),
        _ => StoreError::Remote(message),
    }
}

impl Store for RemoteStore {
    fn put(&self, value: &[u8]) -> Result<Key, StoreError> {
        match self.call(&WireMessage::Put { value: value.to_vec() })? {
            WireMessage::Key { key } => Ok(key),
            WireMessage::Err { code, message } => Err(remote_error(code, message, None, Some(value))),
            other => Err(unexpected(other)),
        }
    }

    fn get(&self, key: &Key) -> Result<BitString, StoreError> {
        match self.call(&WireMessage::Get { key: key.clone() })? {
            WireMessage::Data { value } => Ok(value),
            WireMessage::Err { code, message } => Err(remote_error(code, message, Some(key), None)),
            other => Err(unexpected(other)),
        }
    }

    fn put_with_key(&self, value: &[u8], key: &Key) -> Result<(), StoreError> {
        let request = WireMessage::PutWithKey {
            key: key.clone(),
            value: value.to_vec(),
        };
        match self.call(&request)? {
            WireMessage::Key { key: echoed } if &echoed == key => Ok(()),
            WireMessage::Err { code, message } => Err(remote_error(code, message, Some(key), Some(value))),
            other => Err(unexpected(other)),
        }
    }

    fn store_id(&self) -> Result<StoreId, StoreError> {
        if let Some(id) = self.id.get() {
            return Ok(*id);
        }
        match self.call(&WireMessage::StoreId)? {
            WireMessage::Id { id } => Ok(*self.id.get_or_init(|| id)),
            WireMessage::Err { code, message } => Err(remote_error(code, message, None, None)),
            other => Err(unexpected(other)),
        }
    }
}

impl std::fmt::Debug for RemoteStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteStore").field("address", &self.address).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::serve;
    use crate::store::{KeyPolicy, LocalStore};
    use std::net::TcpListener;
    use std::sync::Arc;

    #[test]
    fn round_trip_and_id() {
        let store = Arc::new(LocalStore::memory(KeyPolicy::ContentHash).unwrap());
        let server = serve(Arc::clone(&store), "127.0.0.1:0").unwrap();
        let remote = RemoteStore::new(server.local_addr().to_string());
        assert_eq!(remote.store_id().unwrap(), store.id());
        let k = remote.put(b"over the wire").unwrap();
        assert_eq!(k, content_key(b"over the wire"));
        assert_eq!(remote.get(&k).unwrap(), b"over the wire");
        assert_eq!(store.get(&k).unwrap(), b"over the wire");
    }

    #[test]
    fn errors_come_back_typed() {
        let store = Arc::new(LocalStore::memory(KeyPolicy::ContentHash).unwrap());
        let server = serve(Arc::clone(&store), "127.0.0.1:0").unwrap();
        let remote = RemoteStore::new(server.local_addr().to_string());
        let k = Key::new(vec![1; 32]).unwrap();
        assert!(matches!(remote.get(&k), Err(StoreError::UnknownKey(x)) if x == k));
        match remote.put_with_key(b"v", &k) {
            Err(StoreError::KeyMismatch { key, digest }) => {
                assert_eq!(key, k);
                assert_eq!(digest, content_key(b"v"));
            }
            other => panic!("{other:?}"),
        }
        let good = content_key(b"v");
        remote.put_with_key(b"v", &good).unwrap();
        remote.put_with_key(b"v", &good).unwrap();

        let seq = Arc::new(LocalStore::memory(KeyPolicy::Sequence).unwrap());
        let server2 = serve(Arc::clone(&seq), "127.0.0.1:0").unwrap();
        let remote2 = RemoteStore::new(server2.local_addr().to_string());
        let k = remote2.put(b"a").unwrap();
        assert!(matches!(
            remote2.put_with_key(b"b", &k),
            Err(StoreError::KeyConflict(_))
        ));
    }

    #[test]
    fn stopped_server_is_unreachable() {
        let store = LocalStore::memory(KeyPolicy::Sequence).unwrap();
        let server = serve(store, "127.0.0.1:0").unwrap();
        let remote = RemoteStore::with_timeout(server.local_addr().to_string(), Duration::from_secs(2));
        let k = remote.put(b"x").unwrap();
        server.shutdown();
        assert!(matches!(remote.get(&k), Err(StoreError::Unreachable { .. })));
    }

    #[test]
    fn reconnects_after_server_restart() {
        let store = Arc::new(LocalStore::memory(KeyPolicy::Sequence).unwrap());
        let server = serve(Arc::clone(&store), "127.0.0.1:0").unwrap();
        let addr = server.local_addr();
        let remote = RemoteStore::new(addr.to_string());
        let k = remote.put(b"x").unwrap();
        server.shutdown();
        let _again = serve(Arc::clone(&store), addr).unwrap();
        assert_eq!(remote.get(&k).unwrap(), b"x");
    }

    #[test]
    fn nothing_listening() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let remote = RemoteStore::new(format!("127.0.0.1:{port}"));
        assert!(matches!(remote.store_id(), Err(StoreError::Unreachable { .. })));
    }
}
