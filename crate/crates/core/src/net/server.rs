//! Serves any [`Store`] over TCP, one thread per connection.

use std::collections::HashMap;
use std::io::{self, BufReader, BufWriter, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use super::wire::{ErrorCode, WireError, WireMessage};
use crate::store::{Store, StoreError};

type Connections = Arc<Mutex<HashMap<u64, TcpStream>>>;

/// A running server. Dropping it stops accepting and closes live connections.
pub struct Server {
    addr: SocketAddr,
    stopping: Arc<AtomicBool>,
    connections: Connections,
    acceptor: Option<JoinHandle<()>>,
}

/// Binds `addr` and starts serving `store`.
///
/// Fails with `RemoteAccessDisabled` when the store does not accept remote
/// contact, and with `Io` when the address cannot be bound.
pub fn serve<S>(store: S, addr: impl ToSocketAddrs) -> Result<Server, StoreError>
where
    S: Store + 'static,
{
    if !store.accepts_remote() {
        return Err(StoreError::RemoteAccessDisabled);
    }
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    let store: Arc<dyn Store> = Arc::new(store);
    let stopping = Arc::new(AtomicBool::new(false));
    let connections: Connections = Arc::default();

    let acceptor = {
        let stopping = Arc::clone(&stopping);
        let connections = Arc::clone(&connections);
        thread::Builder::new()
            .name(format!("xbase-serve-{local}"))
            .spawn(move || accept_loop(listener, store, stopping, connections))?
    };
    Ok(Server {
        addr: local,
        stopping,
        connections,
        acceptor: Some(acceptor),
    })
}

fn accept_loop(listener: TcpListener, store: Arc<dyn Store>, stopping: Arc<AtomicBool>, connections: Connections) {
    let next_id = AtomicU64::new(0);
    for stream in listener.incoming() {
        if stopping.load(Ordering::SeqCst) {
            break;
        }
        let Ok(stream) = stream else { continue };
        let id = next_id.fetch_add(1, Ordering::Relaxed);
        if let Ok(clone) = stream.try_clone() {
            connections.lock().unwrap().insert(id, clone);
        }
        let store = Arc::clone(&store);
        let registered = Arc::clone(&connections);
        let spawned = thread::Builder::new().name("xbase-conn".into()).spawn(move || {
            let _ = handle_connection(stream, &*store);
            registered.lock().unwrap().remove(&id);
        });
        if spawned.is_err() {
            connections.lock().unwrap().remove(&id);
        }
    }
}

fn handle_connection(stream: TcpStream, store: &dyn Store) -> io::Result<()> {
    let _ = stream.set_nodelay(true);
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    loop {
        let (response, keep_going) = match WireMessage::decode(&mut reader) {
            Ok(request) => (respond(store, request), true),
            Err(WireError::Closed) => return Ok(()),
            Err(WireError::Io(e)) => return Err(e),
            // The stream position is unknown after a framing error, so answer
            // and hang up rather than try to resynchronise.
            Err(WireError::Malformed(m)) => (WireMessage::error(ErrorCode::Malformed, m), false),
        };
        response.write_to(&mut writer)?;
        writer.flush()?;
        if !keep_going {
            return Ok(());
        }
    }
}

/// Executes one request against `store`.
pub fn respond(store: &dyn Store, request: WireMessage) -> WireMessage {
    let result = match request {
        WireMessage::Put { value } => store.put(&value).map(|key| WireMessage::Key { key }),
        WireMessage::Get { key } => store.get(&key).map(|value| WireMessage::Data { value }),
        WireMessage::StoreId => store.store_id().map(|id| WireMessage::Id { id }),
        WireMessage::PutWithKey { key, value } => store.put_with_key(&value, &key).map(|()| WireMessage::Key { key }),
        other => {
            return WireMessage::error(ErrorCode::Malformed, format!("not a request: {other:?}"));
        }
    };
    result.unwrap_or_else(|e| WireMessage::error(error_code(&e), e.to_string()))
}

pub fn error_code(e: &StoreError) -> ErrorCode {
    match e {
        StoreError::UnknownKey(_) => ErrorCode::UnknownKey,
        StoreError::KeyConflict(_) => ErrorCode::KeyConflict,
        StoreError::KeyMismatch { .. } => ErrorCode::KeyMismatch,
        StoreError::InvalidValue(_) => ErrorCode::Malformed,
        _ => ErrorCode::Internal,
    }
}

impl Server {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the server is shut down from another thread.
    pub fn wait(mut self) {
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if self.stopping.swap(true, Ordering::SeqCst) {
            return;
        }
        // Wake the acceptor so it observes the flag.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
        for (_, conn) in self.connections.lock().unwrap().drain() {
            let _ = conn.shutdown(Shutdown::Both);
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.stop();
    }
}
