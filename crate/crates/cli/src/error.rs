use std::io;

use thiserror::Error;
use xbase::caster::CastError;
use xbase::frag::FragError;
use xbase::home::HomeError;
use xbase::net::ProxyFileError;
use xbase::{InvalidValue, NamerError, StoreError};

/// Exit status 1: the request itself was wrong.
pub const EXIT_USER: u8 = 1;
/// Exit status 2: storage, corruption or network trouble.
pub const EXIT_SYSTEM: u8 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    User(String),
    #[error("{0}")]
    System(String),
}

impl CliError {
    pub fn user(msg: impl Into<String>) -> Self {
        CliError::User(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::User(_) => EXIT_USER,
            CliError::System(_) => EXIT_SYSTEM,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::System(e.to_string())
    }
}

impl From<InvalidValue> for CliError {
    fn from(e: InvalidValue) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        let msg = e.to_string();
        match e {
            StoreError::UnknownKey(_)
            | StoreError::KeyConflict(_)
            | StoreError::KeyMismatch { .. }
            | StoreError::InvalidPolicy(_)
            | StoreError::PolicyMismatch { .. }
            | StoreError::NoWritableTarget
            | StoreError::RemoteAccessDisabled
            | StoreError::InvalidValue(_) => CliError::User(msg),
            _ => CliError::System(msg),
        }
    }
}

impl From<NamerError> for CliError {
    fn from(e: NamerError) -> Self {
        let msg = e.to_string();
        match e {
            NamerError::NotBound { .. } | NamerError::SeqOutOfRange { .. } => CliError::User(msg),
            NamerError::Corrupt { .. } | NamerError::Io(_) => CliError::System(msg),
        }
    }
}

impl From<FragError> for CliError {
    fn from(e: FragError) -> Self {
        match e {
            FragError::Store(e) => e.into(),
            FragError::Namer(e) => e.into(),
            e @ (FragError::FragmentParse { .. } | FragError::CycleDetected(_)) => CliError::System(e.to_string()),
            e => CliError::User(e.to_string()),
        }
    }
}

impl From<CastError> for CliError {
    fn from(e: CastError) -> Self {
        match e {
            CastError::Store(e) => e.into(),
            e => CliError::User(e.to_string()),
        }
    }
}

impl From<HomeError> for CliError {
    fn from(e: HomeError) -> Self {
        match e {
            HomeError::Store(e) => e.into(),
            HomeError::Namer(e) => e.into(),
            e => CliError::System(e.to_string()),
        }
    }
}

impl From<ProxyFileError> for CliError {
    fn from(e: ProxyFileError) -> Self {
        match e {
            ProxyFileError::Io(e) => e.into(),
            e => CliError::System(format!("proxy settings: {e}")),
        }
    }
}
