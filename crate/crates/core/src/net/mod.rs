//! Remote stores: the wire protocol, a server, a client and the proxy store.

mod proxy;
mod remote;
mod server;
pub mod wire;

pub use proxy::{
    Candidate, Outcome, Probe, ProxyConfig, ProxyFile, ProxyFileError, ProxyStore, PutPolicy, TargetError, TargetRef,
};
pub use remote::{RemoteStore, DEFAULT_TIMEOUT};
pub use server::{error_code, respond, serve, Server};
pub use wire::{ErrorCode, WireError, WireMessage};
