//! Wire format.
//!
//! Every message is `u32` little-endian payload length, one type byte, then the
//! payload. Control messages carry UTF-8 JSON; frames and scans carry a 32-byte
//! little-endian header followed by raw row-major data:
//!
//! ```text
//! offset  size  field
//!      0     4  sensor id (u32)
//!      4     8  pose timestamp (u64, ns)
//!     12     4  width (u32; point count for scans)
//!     16     4  height (u32; 1 for scans)
//!     20     4  encoding (u32)
//!     24     8  reserved, zero
//! ```
//!
//! Scan points are 24 bytes: x, y, z, range as f32, then azimuth index and
//! channel as u32.

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::Intrinsics;
use crate::geometry::PoseRecord;
use crate::lidar::{LidarPoint, LidarScan, ScanConfig};

pub const HEADER_LEN: usize = 32;
pub const POINT_LEN: usize = 24;
/// Upper bound on a single payload; larger length prefixes are treated as corrupt.
pub const MAX_PAYLOAD: usize = 1 << 28;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("payload of {0} bytes exceeds the {MAX_PAYLOAD} byte limit")]
    TooLarge(usize),
    #[error("malformed {kind} payload: {message}")]
    Malformed { kind: &'static str, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Rgb8,
    Depth32f,
    Lidar,
}

impl Encoding {
    pub fn code(self) -> u32 {
        match self {
            Encoding::Rgb8 => 0,
            Encoding::Depth32f => 1,
            Encoding::Lidar => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        [Encoding::Rgb8, Encoding::Depth32f, Encoding::Lidar].into_iter().find(|e| e.code() == code)
    }

    /// Bytes per image element, or per point for scans.
    pub fn element_size(self) -> usize {
        match self {
            Encoding::Rgb8 => 3,
            Encoding::Depth32f => 4,
            Encoding::Lidar => POINT_LEN,
        }
    }
}

/// Named intrinsics for clients that do not calibrate their own.
pub fn preset_intrinsics(name: &str) -> Option<Intrinsics> {
    let (w, h) = match name {
        "qvga" => (320, 240),
        "vga" => (640, 480),
        "hd" => (1280, 720),
        _ => return None,
    };
    crate::camera::intrinsics_from_hfov(std::f64::consts::FRAC_PI_2, w, h).ok()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRegistration {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intrinsics: Option<Intrinsics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub frame_rate: f64,
    pub encoding: Encoding,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarRegistration {
    pub scan_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ScanConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseUpdate {
    pub camera_id: u32,
    /// Monotonic nanoseconds.
    pub timestamp: u64,
    /// World-from-sensor transform (optical frame for cameras).
    pub pose: PoseRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarRequest {
    /// Echoed in the scan header's sensor id field.
    pub request_id: u32,
    pub timestamp: u64,
    pub pose: PoseRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ScanConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraInfo {
    pub camera_id: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraInfo {
    pub fn new(camera_id: u32, k: &Intrinsics) -> Self {
        Self { camera_id, fx: k.fx, fy: k.fy, cx: k.cx, cy: k.cy, width: k.width, height: k.height }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AckStatus {
    Ok,
    /// Older than the stored pose; dropped.
    Stale,
}

/// Binary frame or scan.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BulkMessage {
    pub sensor_id: u32,
    pub timestamp: u64,
    pub width: u32,
    pub height: u32,
    pub encoding: Encoding,
    pub data: Vec<u8>,
}

impl BulkMessage {
    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len());
        out.extend_from_slice(&self.sensor_id.to_le_bytes());
        out.extend_from_slice(&self.timestamp.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.extend_from_slice(&self.encoding.code().to_le_bytes());
        out.extend_from_slice(&[0; 8]);
        out.extend_from_slice(&self.data);
        out
    }

    fn decode(kind: &'static str, payload: &[u8]) -> Result<Self, ProtocolError> {
        let bad = |message: String| ProtocolError::Malformed { kind, message };
        if payload.len() < HEADER_LEN {
            return Err(bad(format!("{} bytes is shorter than the header", payload.len())));
        }
        let u32_at = |o: usize| u32::from_le_bytes(payload[o..o + 4].try_into().unwrap());
        let code = u32_at(20);
        let encoding = Encoding::from_code(code).ok_or_else(|| bad(format!("unknown encoding {code}")))?;
        let msg = Self {
            sensor_id: u32_at(0),
            timestamp: u64::from_le_bytes(payload[4..12].try_into().unwrap()),
            width: u32_at(12),
            height: u32_at(16),
            encoding,
            data: payload[HEADER_LEN..].to_vec(),
        };
        let expected = msg.width as usize * msg.height as usize * encoding.element_size();
        if msg.data.len() != expected {
            return Err(bad(format!("{} data bytes, header implies {expected}", msg.data.len())));
        }
        Ok(msg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Register(CameraRegistration),
    Registered { camera_id: u32, channel: String },
    CameraInfo(CameraInfo),
    Pose(PoseUpdate),
    Ack { camera_id: u32, timestamp: u64, status: AckStatus },
    Error { code: String, message: String },
    Frame(BulkMessage),
    LidarRequest(LidarRequest),
    LidarScan(BulkMessage),
    RegisterLidar(LidarRegistration),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegisteredBody {
    camera_id: u32,
    channel: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AckBody {
    camera_id: u32,
    timestamp: u64,
    status: AckStatus,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ErrorBody {
    code: String,
    message: String,
}

mod kind {
    pub const REGISTER: u8 = 1;
    pub const REGISTERED: u8 = 2;
    pub const CAMERA_INFO: u8 = 3;
    pub const POSE: u8 = 4;
    pub const ACK: u8 = 5;
    pub const ERROR: u8 = 6;
    pub const FRAME: u8 = 7;
    pub const LIDAR_REQUEST: u8 = 8;
    pub const LIDAR_SCAN: u8 = 9;
    pub const REGISTER_LIDAR: u8 = 10;
}

fn json<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("control messages serialize")
}

fn parse<T: for<'de> Deserialize<'de>>(kind: &'static str, payload: &[u8]) -> Result<T, ProtocolError> {
    serde_json::from_slice(payload).map_err(|e| ProtocolError::Malformed { kind, message: e.to_string() })
}

impl Message {
    pub fn error(code: &str, message: impl Into<String>) -> Self {
        Message::Error { code: code.into(), message: message.into() }
    }

    /// Type byte and payload.
    pub fn encode_parts(&self) -> (u8, Vec<u8>) {
        match self {
            Message::Register(r) => (kind::REGISTER, json(r)),
            Message::Registered { camera_id, channel } => {
                (kind::REGISTERED, json(&RegisteredBody { camera_id: *camera_id, channel: channel.clone() }))
            }
            Message::CameraInfo(c) => (kind::CAMERA_INFO, json(c)),
            Message::Pose(p) => (kind::POSE, json(p)),
            Message::Ack { camera_id, timestamp, status } => {
                (kind::ACK, json(&AckBody { camera_id: *camera_id, timestamp: *timestamp, status: *status }))
            }
            Message::Error { code, message } => {
                (kind::ERROR, json(&ErrorBody { code: code.clone(), message: message.clone() }))
            }
            Message::Frame(f) => (kind::FRAME, f.encode()),
            Message::LidarRequest(r) => (kind::LIDAR_REQUEST, json(r)),
            Message::LidarScan(s) => (kind::LIDAR_SCAN, s.encode()),
            Message::RegisterLidar(r) => (kind::REGISTER_LIDAR, json(r)),
        }
    }

    /// Complete framed bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let (kind, payload) = self.encode_parts();
        frame_bytes(kind, &payload)
    }

    pub fn decode(kind: u8, payload: &[u8]) -> Result<Self, ProtocolError> {
        Ok(match kind {
            kind::REGISTER => Message::Register(parse("register", payload)?),
            kind::REGISTERED => {
                let b: RegisteredBody = parse("registered", payload)?;
                Message::Registered { camera_id: b.camera_id, channel: b.channel }
            }
            kind::CAMERA_INFO => Message::CameraInfo(parse("camera_info", payload)?),
            kind::POSE => Message::Pose(parse("pose", payload)?),
            kind::ACK => {
                let b: AckBody = parse("ack", payload)?;
                Message::Ack { camera_id: b.camera_id, timestamp: b.timestamp, status: b.status }
            }
            kind::ERROR => {
                let b: ErrorBody = parse("error", payload)?;
                Message::Error { code: b.code, message: b.message }
            }
            kind::FRAME => Message::Frame(BulkMessage::decode("frame", payload)?),
            kind::LIDAR_REQUEST => Message::LidarRequest(parse("lidar_request", payload)?),
            kind::LIDAR_SCAN => Message::LidarScan(BulkMessage::decode("lidar_scan", payload)?),
            kind::REGISTER_LIDAR => Message::RegisterLidar(parse("register_lidar", payload)?),
            other => return Err(ProtocolError::UnknownType(other)),
        })
    }
}

pub fn frame_bytes(kind: u8, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(5 + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.push(kind);
    out.extend_from_slice(payload);
    out
}

/// Reads one raw frame. `Ok(None)` on a clean end of stream.
pub fn read_raw<R: Read>(r: &mut R) -> Result<Option<(u8, Vec<u8>)>, ProtocolError> {
    let mut head = [0u8; 5];
    match r.read_exact(&mut head) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_le_bytes(head[..4].try_into().unwrap()) as usize;
    if len > MAX_PAYLOAD {
        return Err(ProtocolError::TooLarge(len));
    }
    let mut payload = vec![0; len];
    r.read_exact(&mut payload)?;
    Ok(Some((head[4], payload)))
}

pub fn read_message<R: Read>(r: &mut R) -> Result<Option<Message>, ProtocolError> {
    match read_raw(r)? {
        Some((kind, payload)) => Message::decode(kind, &payload).map(Some),
        None => Ok(None),
    }
}

pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> io::Result<()> {
    w.write_all(&msg.to_bytes())?;
    w.flush()
}

pub fn encode_scan(scan: &LidarScan) -> Vec<u8> {
    let mut out = Vec::with_capacity(scan.points.len() * POINT_LEN);
    for p in &scan.points {
        for c in [p.position.x, p.position.y, p.position.z, p.range] {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
        out.extend_from_slice(&p.azimuth_index.to_le_bytes());
        out.extend_from_slice(&p.channel.to_le_bytes());
    }
    out
}

/// Decoded scan point; coordinates are single precision on the wire.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WirePoint {
    pub position: [f32; 3],
    pub range: f32,
    pub azimuth_index: u32,
    pub channel: u32,
}

impl From<&LidarPoint> for WirePoint {
    fn from(p: &LidarPoint) -> Self {
        Self {
            position: [p.position.x as f32, p.position.y as f32, p.position.z as f32],
            range: p.range as f32,
            azimuth_index: p.azimuth_index,
            channel: p.channel,
        }
    }
}

pub fn decode_scan(data: &[u8]) -> Vec<WirePoint> {
    data.chunks_exact(POINT_LEN)
        .map(|c| {
            let f = |i: usize| f32::from_le_bytes(c[i * 4..i * 4 + 4].try_into().unwrap());
            let u = |i: usize| u32::from_le_bytes(c[i * 4..i * 4 + 4].try_into().unwrap());
            WirePoint { position: [f(0), f(1), f(2)], range: f(3), azimuth_index: u(4), channel: u(5) }
        })
        .collect()
}
