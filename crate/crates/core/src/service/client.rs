use std::io::{self, BufReader, BufWriter};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use thiserror::Error;

use super::protocol::{
    read_message, write_message, CameraInfo, CameraRegistration, LidarRegistration, LidarRequest, Message, PoseUpdate,
    ProtocolError,
};
use crate::geometry::{PoseRecord, RigidTransform};
use crate::lidar::ScanConfig;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("service closed the connection")]
    Closed,
    #[error("service error {code}: {message}")]
    Service { code: String, message: String },
    #[error("unexpected reply {0:?}")]
    Unexpected(Box<Message>),
}

/// Blocking client for the sensor service.
pub struct Client {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl Client {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let reader = BufReader::new(stream.try_clone()?);
        Ok(Self { reader, writer: BufWriter::new(stream) })
    }

    pub fn set_read_timeout(&self, timeout: Option<Duration>) -> io::Result<()> {
        self.reader.get_ref().set_read_timeout(timeout)
    }

    pub fn send(&mut self, msg: &Message) -> Result<(), ClientError> {
        Ok(write_message(&mut self.writer, msg)?)
    }

    pub fn recv(&mut self) -> Result<Message, ClientError> {
        read_message(&mut self.reader)?.ok_or(ClientError::Closed)
    }

    fn expect_reply(&mut self) -> Result<Message, ClientError> {
        match self.recv()? {
            Message::Error { code, message } => Err(ClientError::Service { code, message }),
            m => Ok(m),
        }
    }

    /// Registers a camera and waits for its id, channel and camera info.
    pub fn register_camera(&mut self, registration: CameraRegistration) -> Result<(u32, String, CameraInfo), ClientError> {
        self.send(&Message::Register(registration))?;
        let (id, channel) = match self.expect_reply()? {
            Message::Registered { camera_id, channel } => (camera_id, channel),
            m => return Err(ClientError::Unexpected(Box::new(m))),
        };
        match self.expect_reply()? {
            Message::CameraInfo(info) => Ok((id, channel, info)),
            m => Err(ClientError::Unexpected(Box::new(m))),
        }
    }

    pub fn register_lidar(&mut self, scan_rate: f64, config: Option<ScanConfig>) -> Result<(u32, String), ClientError> {
        self.send(&Message::RegisterLidar(LidarRegistration { scan_rate, config }))?;
        match self.expect_reply()? {
            Message::Registered { camera_id, channel } => Ok((camera_id, channel)),
            m => Err(ClientError::Unexpected(Box::new(m))),
        }
    }

    /// Sends a pose without waiting; the ack arrives through [`Client::recv`].
    pub fn submit_pose(&mut self, camera_id: u32, timestamp: u64, pose: &RigidTransform) -> Result<(), ClientError> {
        self.send(&Message::Pose(PoseUpdate { camera_id, timestamp, pose: PoseRecord::from(pose) }))
    }

    pub fn request_lidar(
        &mut self,
        request_id: u32,
        timestamp: u64,
        pose: &RigidTransform,
        config: Option<ScanConfig>,
    ) -> Result<(), ClientError> {
        self.send(&Message::LidarRequest(LidarRequest { request_id, timestamp, pose: PoseRecord::from(pose), config }))
    }
}
