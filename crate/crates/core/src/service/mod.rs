//! TCP sensor service: camera registration, pose streams, rendered frames and
//! LiDAR scans.
//!
//! A client registers a camera (or a periodic LiDAR) and receives its id, a
//! channel name and, for cameras, the camera info. Pose updates are kept
//! latest-wins per sensor; stale timestamps are acknowledged as `stale` and
//! dropped. Each sensor renders at its registered rate from the newest pose and
//! never before its first pose. Sensors belong to the connection that
//! registered them and are released when it closes.

mod client;
pub mod protocol;
mod server;

pub use client::{Client, ClientError};
pub use protocol::{AckStatus, BulkMessage, CameraInfo, CameraRegistration, Encoding, Message};
pub use server::{SceneBackend, SensorBackend, Service, ServiceConfig, ServiceHandle, MAX_FRAME_RATE};
