use std::collections::{BTreeSet, HashMap};
use std::future::Future;
use std::io;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::tcp::OwnedReadHalf;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot, watch};
use tokio::task::JoinHandle;
use tokio::time::MissedTickBehavior;

use super::protocol::{
    encode_scan, preset_intrinsics, AckStatus, BulkMessage, CameraInfo, CameraRegistration, Encoding, LidarRegistration,
    LidarRequest, Message, PoseUpdate, MAX_PAYLOAD,
};
use crate::assets::SceneDescription;
use crate::camera::{CameraPose, Intrinsics};
use crate::geometry::RigidTransform;
use crate::lidar::{simulate_scan, ScanConfig};
use crate::raster::{render, RenderSettings};

pub const MAX_FRAME_RATE: f64 = 120.0;
/// Outgoing messages buffered per connection before frame loops wait.
const OUTBOX: usize = 64;

/// Produces sensor payloads; the service never looks inside the scene.
pub trait SensorBackend: Send + Sync + 'static {
    /// Row-major image bytes in `encoding` for a camera at `world_from_optical`.
    fn render(&self, intrinsics: &Intrinsics, world_from_optical: &RigidTransform, encoding: Encoding)
        -> Result<Vec<u8>, String>;

    /// Encoded scan points (see [`super::protocol::encode_scan`]) and their count.
    fn scan(&self, world_from_sensor: &RigidTransform, config: &ScanConfig) -> Result<(u32, Vec<u8>), String>;
}

/// Backend rendering an immutable splat scene.
pub struct SceneBackend {
    scene: SceneDescription,
    settings: RenderSettings,
}

impl SceneBackend {
    pub fn new(scene: SceneDescription, settings: RenderSettings) -> Self {
        Self { scene, settings }
    }
}

impl SensorBackend for SceneBackend {
    fn render(&self, k: &Intrinsics, world_from_optical: &RigidTransform, encoding: Encoding) -> Result<Vec<u8>, String> {
        let camera = CameraPose::from_world_from_camera(world_from_optical);
        let frame = render(&self.scene, &camera, k, &self.settings).map_err(|e| e.to_string())?;
        match encoding {
            Encoding::Rgb8 => Ok(frame.to_rgb8()),
            Encoding::Depth32f => Ok(frame.depth_f32_le()),
            Encoding::Lidar => Err("lidar is not an image encoding".into()),
        }
    }

    fn scan(&self, world_from_sensor: &RigidTransform, config: &ScanConfig) -> Result<(u32, Vec<u8>), String> {
        let scan = simulate_scan(&self.scene, world_from_sensor, config, &self.settings).map_err(|e| e.to_string())?;
        Ok((scan.len() as u32, encode_scan(&scan)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub max_cameras: usize,
    /// Used when a LiDAR request or registration carries no config.
    pub scan: ScanConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { bind: "127.0.0.1:7447".into(), max_cameras: 16, scan: ScanConfig::default() }
    }
}

struct Shared {
    backend: Arc<dyn SensorBackend>,
    config: ServiceConfig,
    ids: Mutex<BTreeSet<u32>>,
}

impl Shared {
    /// Smallest free id, or `None` at capacity.
    fn allocate(&self) -> Option<u32> {
        let mut ids = self.ids.lock().unwrap();
        if ids.len() >= self.config.max_cameras {
            return None;
        }
        let id = (0..).find(|i| !ids.contains(i)).unwrap();
        ids.insert(id);
        Some(id)
    }

    fn release(&self, id: u32) {
        self.ids.lock().unwrap().remove(&id);
    }
}

pub struct Service {
    listener: TcpListener,
    shared: Arc<Shared>,
}

impl Service {
    pub async fn bind(config: ServiceConfig, backend: Arc<dyn SensorBackend>) -> io::Result<Self> {
        let listener = TcpListener::bind(&config.bind).await?;
        let shared = Arc::new(Shared { backend, config, ids: Mutex::new(BTreeSet::new()) });
        Ok(Self { listener, shared })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts clients until `shutdown` completes.
    pub async fn run_until(self, shutdown: impl Future<Output = ()>) {
        tokio::pin!(shutdown);
        loop {
            tokio::select! {
                _ = &mut shutdown => break,
                accepted = self.listener.accept() => match accepted {
                    Ok((stream, peer)) => {
                        info!("client {peer} connected");
                        let shared = Arc::clone(&self.shared);
                        tokio::spawn(async move {
                            Connection::new(stream, shared).run().await;
                            info!("client {peer} disconnected");
                        });
                    }
                    Err(e) => warn!("accept failed: {e}"),
                },
            }
        }
    }
}

/// A service running on its own thread and runtime; stopped on drop.
pub struct ServiceHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServiceHandle {
    pub fn spawn(config: ServiceConfig, backend: Arc<dyn SensorBackend>) -> io::Result<Self> {
        let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
        let service = runtime.block_on(Service::bind(config, backend))?;
        let addr = service.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            runtime.block_on(service.run_until(async {
                let _ = rx.await;
            }));
            runtime.shutdown_timeout(Duration::from_secs(1));
        });
        Ok(Self { addr, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

type LatestPose = Option<(u64, RigidTransform)>;

#[derive(Clone, Copy)]
enum SensorKind {
    Camera { intrinsics: Intrinsics, encoding: Encoding },
    Lidar { config: ScanConfig },
}

struct Sensor {
    latest: watch::Sender<LatestPose>,
    task: JoinHandle<()>,
}

struct Connection {
    reader: OwnedReadHalf,
    outbox: mpsc::Sender<Message>,
    writer: JoinHandle<()>,
    shared: Arc<Shared>,
    sensors: HashMap<u32, Sensor>,
}

enum Flow {
    Continue,
    Close,
}

impl Connection {
    fn new(stream: TcpStream, shared: Arc<Shared>) -> Self {
        let _ = stream.set_nodelay(true);
        let (reader, mut write_half) = stream.into_split();
        let (outbox, mut rx) = mpsc::channel::<Message>(OUTBOX);
        let writer = tokio::spawn(async move {
            while let Some(msg) = rx.recv().await {
                if write_half.write_all(&msg.to_bytes()).await.is_err() {
                    break;
                }
            }
            let _ = write_half.shutdown().await;
        });
        Self { reader, outbox, writer, shared, sensors: HashMap::new() }
    }

    async fn run(mut self) {
        loop {
            let mut head = [0u8; 5];
            if self.reader.read_exact(&mut head).await.is_err() {
                break;
            }
            let len = u32::from_le_bytes(head[..4].try_into().unwrap()) as usize;
            if len > MAX_PAYLOAD {
                self.send(Message::error("malformed", format!("payload length {len} exceeds limit"))).await;
                break;
            }
            let mut payload = vec![0; len];
            if self.reader.read_exact(&mut payload).await.is_err() {
                break;
            }
            let flow = match Message::decode(head[4], &payload) {
                Ok(msg) => self.dispatch(msg).await,
                Err(e) => {
                    warn!("malformed message: {e}");
                    self.send(Message::error("malformed", e.to_string())).await;
                    // a registration that cannot be parsed ends the session
                    if matches!(head[4], 1 | 10) { Flow::Close } else { Flow::Continue }
                }
            };
            if let Flow::Close = flow {
                break;
            }
        }
        for (id, sensor) in self.sensors.drain() {
            sensor.task.abort();
            self.shared.release(id);
            debug!("released sensor {id}");
        }
        drop(self.outbox);
        let _ = self.writer.await;
    }

    async fn send(&self, msg: Message) {
        let _ = self.outbox.send(msg).await;
    }

    async fn dispatch(&mut self, msg: Message) -> Flow {
        match msg {
            Message::Register(r) => self.register_camera(r).await,
            Message::RegisterLidar(r) => self.register_lidar(r).await,
            Message::Pose(p) => {
                self.submit_pose(p).await;
                Flow::Continue
            }
            Message::LidarRequest(r) => {
                self.lidar_request(r).await;
                Flow::Continue
            }
            other => {
                let (kind, _) = other.encode_parts();
                self.send(Message::error("unexpected", format!("message type {kind} is not accepted by the service")))
                    .await;
                Flow::Continue
            }
        }
    }

    async fn register_camera(&mut self, r: CameraRegistration) -> Flow {
        let intrinsics = match (&r.intrinsics, &r.preset) {
            (Some(k), None) => k.validate().map(|_| *k).map_err(|e| e.to_string()),
            (None, Some(name)) => preset_intrinsics(name).ok_or_else(|| format!("unknown preset {name:?}")),
            _ => Err("exactly one of intrinsics and preset is required".into()),
        };
        let checked = intrinsics.and_then(|k| {
            if !(r.frame_rate > 0.0 && r.frame_rate <= MAX_FRAME_RATE) {
                Err(format!("frame_rate {} is outside (0, {MAX_FRAME_RATE}]", r.frame_rate))
            } else if r.encoding == Encoding::Lidar {
                Err("cameras stream rgb8 or depth32f".into())
            } else {
                Ok(k)
            }
        });
        let intrinsics = match checked {
            Ok(k) => k,
            Err(message) => {
                self.send(Message::error("invalid_registration", message)).await;
                return Flow::Close;
            }
        };
        let Some(id) = self.shared.allocate() else {
            self.send(Message::error("capacity", format!("all {} sensor slots are in use", self.shared.config.max_cameras)))
                .await;
            return Flow::Continue;
        };
        info!("camera {id} registered: {}x{} at {} Hz", intrinsics.width, intrinsics.height, r.frame_rate);
        self.send(Message::Registered { camera_id: id, channel: format!("camera/{id}/frames") }).await;
        self.send(Message::CameraInfo(CameraInfo::new(id, &intrinsics))).await;
        self.start(id, SensorKind::Camera { intrinsics, encoding: r.encoding }, r.frame_rate);
        Flow::Continue
    }

    async fn register_lidar(&mut self, r: LidarRegistration) -> Flow {
        let config = r.config.unwrap_or(self.shared.config.scan);
        let checked = if !(r.scan_rate > 0.0 && r.scan_rate <= MAX_FRAME_RATE) {
            Err(format!("scan_rate {} is outside (0, {MAX_FRAME_RATE}]", r.scan_rate))
        } else {
            config.validate().map_err(|e| e.to_string())
        };
        if let Err(message) = checked {
            self.send(Message::error("invalid_registration", message)).await;
            return Flow::Close;
        }
        let Some(id) = self.shared.allocate() else {
            self.send(Message::error("capacity", format!("all {} sensor slots are in use", self.shared.config.max_cameras)))
                .await;
            return Flow::Continue;
        };
        info!("lidar {id} registered at {} Hz", r.scan_rate);
        self.send(Message::Registered { camera_id: id, channel: format!("lidar/{id}/scans") }).await;
        self.start(id, SensorKind::Lidar { config }, r.scan_rate);
        Flow::Continue
    }

    fn start(&mut self, id: u32, kind: SensorKind, rate: f64) {
        let (latest, rx) = watch::channel(None);
        let task = tokio::spawn(sensor_loop(id, kind, rate, rx, self.outbox.clone(), Arc::clone(&self.shared.backend)));
        self.sensors.insert(id, Sensor { latest, task });
    }

    async fn submit_pose(&mut self, p: PoseUpdate) {
        let Some(sensor) = self.sensors.get(&p.camera_id) else {
            self.send(Message::error("unknown_camera", format!("unknown camera {}", p.camera_id))).await;
            return;
        };
        let pose = match p.pose.to_transform() {
            Ok(t) => t,
            Err(e) => {
                self.send(Message::error("invalid_pose", e.to_string())).await;
                return;
            }
        };
        let stale = matches!(*sensor.latest.borrow(), Some((t, _)) if p.timestamp < t);
        let status = if stale {
            warn!("camera {}: dropping stale pose at {}", p.camera_id, p.timestamp);
            AckStatus::Stale
        } else {
            sensor.latest.send_replace(Some((p.timestamp, pose)));
            AckStatus::Ok
        };
        self.send(Message::Ack { camera_id: p.camera_id, timestamp: p.timestamp, status }).await;
    }

    async fn lidar_request(&self, r: LidarRequest) {
        let config = r.config.unwrap_or(self.shared.config.scan);
        let pose = match r.pose.to_transform() {
            Ok(t) => t,
            Err(e) => return self.send(Message::error("invalid_pose", e.to_string())).await,
        };
        if let Err(e) = config.validate() {
            return self.send(Message::error("invalid_config", e.to_string())).await;
        }
        let kind = SensorKind::Lidar { config };
        let msg = match produce(&self.shared.backend, r.request_id, r.timestamp, pose, kind).await {
            Ok(m) => m,
            Err(e) => Message::error("scan_failed", e),
        };
        self.send(msg).await;
    }
}

async fn produce(
    backend: &Arc<dyn SensorBackend>,
    id: u32,
    timestamp: u64,
    pose: RigidTransform,
    kind: SensorKind,
) -> Result<Message, String> {
    let backend = Arc::clone(backend);
    tokio::task::spawn_blocking(move || match kind {
        SensorKind::Camera { intrinsics, encoding } => {
            let data = backend.render(&intrinsics, &pose, encoding)?;
            let msg = BulkMessage { sensor_id: id, timestamp, width: intrinsics.width, height: intrinsics.height, encoding, data };
            let expected = intrinsics.pixel_count() * encoding.element_size();
            if msg.data.len() != expected {
                return Err(format!("backend produced {} bytes, expected {expected}", msg.data.len()));
            }
            Ok(Message::Frame(msg))
        }
        SensorKind::Lidar { config } => {
            let (count, data) = backend.scan(&pose, &config)?;
            Ok(Message::LidarScan(BulkMessage { sensor_id: id, timestamp, width: count, height: 1, encoding: Encoding::Lidar, data }))
        }
    })
    .await
    .map_err(|e| format!("render task failed: {e}"))?
}

/// Emits one message per tick from the latest pose. Repeated ticks on an
/// unchanged pose resend the previous payload.
async fn sensor_loop(
    id: u32,
    kind: SensorKind,
    rate: f64,
    latest: watch::Receiver<LatestPose>,
    outbox: mpsc::Sender<Message>,
    backend: Arc<dyn SensorBackend>,
) {
    let mut ticks = tokio::time::interval(Duration::from_secs_f64(1.0 / rate));
    ticks.set_missed_tick_behavior(MissedTickBehavior::Delay);
    let mut cached: Option<(u64, Message)> = None;
    loop {
        ticks.tick().await;
        let Some((timestamp, pose)) = *latest.borrow() else { continue };
        let msg = match &cached {
            Some((t, m)) if *t == timestamp => m.clone(),
            _ => match produce(&backend, id, timestamp, pose, kind).await {
                Ok(m) => {
                    cached = Some((timestamp, m.clone()));
                    m
                }
                Err(e) => {
                    warn!("sensor {id}: {e}");
                    Message::error("render_failed", e)
                }
            },
        };
        if outbox.send(msg).await.is_err() {
            break;
        }
    }
}
