//! Length-prefixed frames over a byte stream, and a deadline-bounded
//! client/server pair for running policies out of process.

mod client;
mod frame;
pub mod payload;
mod server;

pub use client::{CallStats, ClientConfig, ImageMode, RemotePolicy};
pub use frame::{
    decode_frame, encode_frame, read_frame, write_frame, Frame, FrameError, FrameType, DEFAULT_MAX_PAYLOAD, HEADER_LEN,
    MAGIC,
};
pub use payload::{ActPayload, ImageField, ObsPayload, PayloadError};
pub use server::{serve_session, PolicyFactory, PolicyServer, ServerConfig};
