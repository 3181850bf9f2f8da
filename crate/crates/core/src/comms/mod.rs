//! Ground-station radio link: framing, parameters, channel model.

pub mod codec;
pub mod params;
pub mod radio;
pub mod station;

pub use codec::{decode, encode, AckStatus, Kind, Message, ParamReading, Payload, Telemetry, BROADCAST};
pub use params::ParamStore;
pub use radio::{Delivery, Endpoint, Radio, RadioModel, TrafficMonitor};
pub use station::{GroundStation, StationEvent};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CommsError {
    #[error("malformed frame: {0}")]
    MalformedFrame(&'static str),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
    #[error("payload of {0} bytes does not fit in a frame")]
    FrameTooLarge(usize),
    #[error("invalid parameter key {0:?}")]
    InvalidKey(String),
    #[error("no parameter named {0:?}")]
    KeyNotFound(String),
    #[error("parameter storage failed: {0}")]
    StorageFailure(String),
}
