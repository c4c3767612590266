mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::net::TcpStream;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{UnitQuaternion, Vector3};

use splatsim_core::camera::{CameraPose, Intrinsics};
use splatsim_core::geometry::RigidTransform;
use splatsim_core::lidar::{simulate_scan, ScanConfig};
use splatsim_core::raster::{render, RenderSettings};
use splatsim_core::service::protocol::{decode_scan, frame_bytes, read_message};
use splatsim_core::service::{
    AckStatus, CameraRegistration, Client, ClientError, Encoding, Message, SceneBackend, SensorBackend, ServiceConfig,
    ServiceHandle,
};

fn intrinsics() -> Intrinsics {
    Intrinsics::new(50.0, 50.0, 31.5, 23.5, 64, 48).unwrap()
}

fn scene() -> splatsim_core::assets::SceneDescription {
    common::random_scene(&mut common::rng(21), 200)
}

fn start(max_cameras: usize) -> ServiceHandle {
    let config = ServiceConfig { bind: "127.0.0.1:0".into(), max_cameras, ..Default::default() };
    ServiceHandle::spawn(config, Arc::new(SceneBackend::new(scene(), RenderSettings::default()))).unwrap()
}

fn connect(handle: &ServiceHandle) -> Client {
    let client = Client::connect(handle.addr()).unwrap();
    client.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    client
}

fn registration(frame_rate: f64, encoding: Encoding) -> CameraRegistration {
    CameraRegistration { intrinsics: Some(intrinsics()), preset: None, frame_rate, encoding }
}

/// Camera pose `i` of a short trajectory.
fn pose(i: u64) -> RigidTransform {
    let a = i as f64 * 0.05;
    RigidTransform::new(UnitQuaternion::from_euler_angles(0.0, a, 0.0), Vector3::new(0.1 * a, 0.0, 0.0))
}

fn direct_render(p: &RigidTransform, encoding: Encoding) -> Vec<u8> {
    let frame = render(&scene(), &CameraPose::from_world_from_camera(p), &intrinsics(), &RenderSettings::default()).unwrap();
    match encoding {
        Encoding::Rgb8 => frame.to_rgb8(),
        _ => frame.depth_f32_le(),
    }
}

#[test]
fn registration_allocates_ids_and_sends_camera_info() {
    let service = start(4);
    let mut a = connect(&service);
    let (id, channel, info) = a.register_camera(registration(10.0, Encoding::Rgb8)).unwrap();
    assert_eq!((id, channel.as_str()), (0, "camera/0/frames"));
    let k = intrinsics();
    assert_eq!((info.camera_id, info.fx, info.fy, info.cx, info.cy, info.width, info.height), (0, k.fx, k.fy, k.cx, k.cy, k.width, k.height));
    let (id1, _, _) = a.register_camera(registration(10.0, Encoding::Depth32f)).unwrap();
    assert_eq!(id1, 1);
}

#[test]
fn invalid_registration_is_rejected_and_closed() {
    let service = start(4);
    let mut a = connect(&service);
    match a.register_camera(registration(0.0, Encoding::Rgb8)) {
        Err(ClientError::Service { code, .. }) => assert_eq!(code, "invalid_registration"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(a.recv(), Err(ClientError::Closed)));
    // the service is still up
    let mut b = connect(&service);
    assert_eq!(b.register_camera(registration(121.0, Encoding::Rgb8)).unwrap_err().to_string().contains("frame_rate"), true);
    let mut c = connect(&service);
    assert_eq!(c.register_camera(registration(120.0, Encoding::Rgb8)).unwrap().0, 0);
}

#[test]
fn capacity_is_enforced_and_freed_on_disconnect() {
    let service = start(1);
    let mut a = connect(&service);
    a.register_camera(registration(5.0, Encoding::Rgb8)).unwrap();
    let mut b = connect(&service);
    match b.register_camera(registration(5.0, Encoding::Rgb8)) {
        Err(ClientError::Service { code, .. }) => assert_eq!(code, "capacity"),
        other => panic!("{other:?}"),
    }
    drop(a);
    let deadline = Instant::now() + Duration::from_secs(5);
    loop {
        match b.register_camera(registration(5.0, Encoding::Rgb8)) {
            Ok((id, _, _)) => {
                assert_eq!(id, 0);
                break;
            }
            Err(_) if Instant::now() < deadline => std::thread::sleep(Duration::from_millis(20)),
            Err(e) => panic!("slot never freed: {e}"),
        }
    }
}

#[test]
fn pose_acks_stale_and_unknown() {
    let service = start(4);
    let mut a = connect(&service);
    let (id, _, _) = a.register_camera(registration(1.0, Encoding::Rgb8)).unwrap();
    let mut acks = Vec::new();
    a.submit_pose(id, 100, &pose(0)).unwrap();
    a.submit_pose(id, 50, &pose(1)).unwrap();
    a.submit_pose(id, 100, &pose(2)).unwrap();
    a.submit_pose(7, 200, &pose(0)).unwrap();
    while acks.len() < 4 {
        match a.recv().unwrap() {
            Message::Ack { camera_id, timestamp, status } => acks.push(format!("{camera_id}:{timestamp}:{status:?}")),
            Message::Error { code, message } => acks.push(format!("{code}:{message}")),
            Message::Frame(_) => {}
            other => panic!("{other:?}"),
        }
    }
    assert_eq!(acks, ["0:100:Ok", "0:50:Stale", "0:100:Ok", "unknown_camera:unknown camera 7"]);
}

#[test]
fn no_pose_no_frames() {
    let service = start(4);
    let mut a = connect(&service);
    let (_, _, _) = a.register_camera(registration(50.0, Encoding::Rgb8)).unwrap();
    a.set_read_timeout(Some(Duration::from_millis(300))).unwrap();
    assert!(matches!(a.recv(), Err(ClientError::Protocol(_))));
}

/// Streams ten poses at 10 Hz and returns the frames keyed by pose timestamp.
fn stream_ten(client: &mut Client, id: u32, offset: u64) -> BTreeMap<u64, Vec<Vec<u8>>> {
    let mut frames: BTreeMap<u64, Vec<Vec<u8>>> = BTreeMap::new();
    let mut last_ts = 0;
    for i in 0..10u64 {
        client.submit_pose(id, (i + 1) * 100_000_000, &pose(i + offset)).unwrap();
        let tick = Instant::now();
        while tick.elapsed() < Duration::from_millis(100) {
            client.set_read_timeout(Some(Duration::from_millis(20))).unwrap();
            match client.recv() {
                Ok(Message::Frame(f)) => {
                    assert_eq!(f.sensor_id, id);
                    assert!(f.timestamp >= last_ts, "pose timestamps went backwards");
                    last_ts = f.timestamp;
                    frames.entry(f.timestamp).or_default().push(f.data);
                }
                Ok(Message::Ack { camera_id, status, .. }) => {
                    assert_eq!((camera_id, status), (id, AckStatus::Ok));
                }
                Ok(other) => panic!("{other:?}"),
                Err(_) => {}
            }
        }
    }
    client.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    // wait for the last pose to show up
    while !frames.contains_key(&1_000_000_000) {
        if let Message::Frame(f) = client.recv().unwrap() {
            frames.entry(f.timestamp).or_default().push(f.data);
        }
    }
    frames
}

#[test]
fn frames_match_direct_renders() {
    let service = start(4);
    let mut a = connect(&service);
    let (id, _, _) = a.register_camera(registration(30.0, Encoding::Rgb8)).unwrap();
    let frames = stream_ten(&mut a, id, 0);
    let total: usize = frames.values().map(Vec::len).sum();
    assert!(total >= 10, "{total} frames");
    for (ts, payloads) in &frames {
        let expected = direct_render(&pose(ts / 100_000_000 - 1), Encoding::Rgb8);
        for p in payloads {
            assert_eq!(p, &expected, "frame at {ts}");
        }
    }
}

#[test]
fn depth_frames_match_direct_renders() {
    let service = start(4);
    let mut a = connect(&service);
    let (id, _, _) = a.register_camera(registration(20.0, Encoding::Depth32f)).unwrap();
    a.submit_pose(id, 5, &pose(3)).unwrap();
    loop {
        if let Message::Frame(f) = a.recv().unwrap() {
            assert_eq!((f.encoding, f.width, f.height, f.timestamp), (Encoding::Depth32f, 64, 48, 5));
            assert_eq!(f.data, direct_render(&pose(3), Encoding::Depth32f));
            break;
        }
    }
}

#[test]
fn two_clients_are_isolated() {
    let service = start(4);
    let addr = service.addr();
    let run = move |offset: u64| {
        std::thread::spawn(move || {
            let mut c = Client::connect(addr).unwrap();
            c.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
            let (id, _, _) = c.register_camera(registration(20.0, Encoding::Rgb8)).unwrap();
            (id, stream_ten(&mut c, id, offset))
        })
    };
    let (a, b) = (run(0), run(50));
    let (ida, fa) = a.join().unwrap();
    let (idb, fb) = b.join().unwrap();
    assert_ne!(ida, idb);
    for (frames, offset) in [(fa, 0), (fb, 50)] {
        for (ts, payloads) in frames {
            let expected = direct_render(&pose(ts / 100_000_000 - 1 + offset), Encoding::Rgb8);
            assert!(payloads.iter().all(|p| *p == expected));
        }
    }
}

#[test]
fn malformed_frames_get_error_replies() {
    let service = start(4);
    let mut raw = TcpStream::connect(service.addr()).unwrap();
    raw.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    raw.write_all(&frame_bytes(4, b"{not json")).unwrap();
    raw.write_all(&frame_bytes(99, b"")).unwrap();
    for _ in 0..2 {
        match read_message(&mut raw).unwrap().unwrap() {
            Message::Error { code, .. } => assert_eq!(code, "malformed"),
            other => panic!("{other:?}"),
        }
    }
    // same connection still serves registrations
    raw.write_all(&Message::Register(registration(5.0, Encoding::Rgb8)).to_bytes()).unwrap();
    assert!(matches!(read_message(&mut raw).unwrap().unwrap(), Message::Registered { camera_id: 0, .. }));
}

#[test]
fn lidar_requests_match_in_process_scans() {
    let room = common::square_room(3.0, 4.0, 0.1);
    let config = ScanConfig { azimuth_count: 256, channels: 8, face_resolution: 128, ..Default::default() };
    let expected = simulate_scan(&room, &RigidTransform::identity(), &config, &RenderSettings::default()).unwrap();
    let service = ServiceHandle::spawn(
        ServiceConfig { bind: "127.0.0.1:0".into(), ..Default::default() },
        Arc::new(SceneBackend::new(room, RenderSettings::default())),
    )
    .unwrap();
    let mut c = connect(&service);
    let mut payloads = Vec::new();
    for request_id in [3, 4] {
        c.request_lidar(request_id, 77, &RigidTransform::identity(), Some(config)).unwrap();
        match c.recv().unwrap() {
            Message::LidarScan(s) => {
                assert_eq!((s.sensor_id, s.timestamp, s.encoding, s.height), (request_id, 77, Encoding::Lidar, 1));
                assert_eq!(s.width as usize, expected.len());
                let points = decode_scan(&s.data);
                assert_eq!(points.len(), expected.len());
                assert_eq!(points[0], (&expected.points[0]).into());
                payloads.push(s.data);
            }
            other => panic!("{other:?}"),
        }
    }
    assert_eq!(payloads[0], payloads[1]);

    c.request_lidar(5, 0, &RigidTransform::identity(), Some(ScanConfig { azimuth_count: 3, ..config })).unwrap();
    assert!(matches!(c.recv().unwrap(), Message::Error { code, .. } if code == "invalid_config"));
}

#[test]
fn lidar_on_empty_scene_has_no_points() {
    let service = ServiceHandle::spawn(
        ServiceConfig { bind: "127.0.0.1:0".into(), ..Default::default() },
        Arc::new(SceneBackend::new(Default::default(), RenderSettings::default())),
    )
    .unwrap();
    let mut c = connect(&service);
    let config = ScanConfig { face_resolution: 64, ..Default::default() };
    c.request_lidar(0, 1, &RigidTransform::identity(), Some(config)).unwrap();
    assert!(matches!(c.recv().unwrap(), Message::LidarScan(s) if s.width == 0 && s.data.is_empty()));
}

#[test]
fn periodic_lidar_streams_scans() {
    let room = common::square_room(3.0, 4.0, 0.1);
    let service = ServiceHandle::spawn(
        ServiceConfig { bind: "127.0.0.1:0".into(), ..Default::default() },
        Arc::new(SceneBackend::new(room, RenderSettings::default())),
    )
    .unwrap();
    let mut c = connect(&service);
    let config = ScanConfig { azimuth_count: 64, channels: 4, face_resolution: 64, ..Default::default() };
    let (id, channel) = c.register_lidar(20.0, Some(config)).unwrap();
    assert_eq!(channel, format!("lidar/{id}/scans"));
    c.submit_pose(id, 9, &RigidTransform::identity()).unwrap();
    let mut scans = 0;
    while scans < 2 {
        if let Message::LidarScan(s) = c.recv().unwrap() {
            assert_eq!((s.sensor_id, s.timestamp), (id, 9));
            assert!(s.width > 0);
            scans += 1;
        }
    }
}

/// Backend that knows nothing about splats.
struct Gradient;

impl SensorBackend for Gradient {
    fn render(&self, k: &Intrinsics, pose: &RigidTransform, encoding: Encoding) -> Result<Vec<u8>, String> {
        let shade = (pose.translation().x * 10.0) as u8;
        Ok(vec![shade; k.pixel_count() * encoding.element_size()])
    }

    fn scan(&self, _: &RigidTransform, _: &ScanConfig) -> Result<(u32, Vec<u8>), String> {
        Err("no lidar".into())
    }
}

#[test]
fn mock_backend_behind_the_same_protocol() {
    let service = ServiceHandle::spawn(ServiceConfig { bind: "127.0.0.1:0".into(), ..Default::default() }, Arc::new(Gradient)).unwrap();
    let mut c = connect(&service);
    let (id, _, _) = c.register_camera(registration(50.0, Encoding::Rgb8)).unwrap();
    c.submit_pose(id, 1, &RigidTransform::from_translation(Vector3::new(2.0, 0.0, 0.0))).unwrap();
    loop {
        if let Message::Frame(f) = c.recv().unwrap() {
            assert_eq!(f.data.len(), 64 * 48 * 3);
            assert!(f.data.iter().all(|b| *b == 20));
            break;
        }
    }
    c.request_lidar(1, 1, &RigidTransform::identity(), None).unwrap();
    loop {
        match c.recv().unwrap() {
            Message::Error { code, message } => {
                assert_eq!((code.as_str(), message.as_str()), ("scan_failed", "no lidar"));
                break;
            }
            Message::Frame(_) => {}
            other => panic!("{other:?}"),
        }
    }
}
