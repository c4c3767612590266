//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Criterion 11 runs only when `SPLATSIM_DATASET` points at a
//! directory holding a `manifest.json`.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use serde::Deserialize;

use splatsim_core::assets::{read_ply_file, rescale_asset, AssetInstance, Primitive2D, SceneDescription, SplatAsset};
use splatsim_core::camera::{back_project, project, CameraPose, Intrinsics, Projection};
use splatsim_core::geometry::RigidTransform;
use splatsim_core::imaging::{read_image, RgbImage};
use splatsim_core::lidar::{face_camera, face_for_azimuth, face_rotation, simulate_scan, ScanConfig, FACE_COUNT};
use splatsim_core::markers::{binary_image, checkerboard, image_to_splat, place_marker, MarkerSpec};
use splatsim_core::metrics::{l1, psnr, ImagePair};
use splatsim_core::raster::sh::color_to_dc;
use splatsim_core::raster::{reference_render, reference_render_rows, render, RenderSettings, RenderedFrame};
use splatsim_core::service::{CameraRegistration, Client, Encoding, Message, SceneBackend, ServiceConfig, ServiceHandle};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("C1 analytic two-splat blend", c1_analytic_blend),
        ("C2 tiled vs reference on 100 scenes", c2_oracle_equivalence),
        ("C3 rescale identity and log-scale shift", c3_rescale),
        ("C4 uniform-scale render covariance", c4_scale_covariance),
        ("C5 project/back-project round trip", c5_round_trip),
        ("C6 LiDAR square room", c6_lidar_room),
        ("C7 marker fidelity", c7_marker),
        ("C8 metrics exactness", c8_metrics),
        ("C9 protocol loopback", c9_loopback),
        ("C10 performance", c10_performance),
        ("C11 dataset checks", c11_dataset),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Outcome::Fail(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Outcome::Pass(d) => println!("PASS {name}: {d} [{secs:.2} s]"),
            Outcome::Skip(d) => println!("SKIP {name}: {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL {name}: {d} [{secs:.2} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn flat(center: [f64; 3], sigma: f64, opacity: f64, color: [f64; 3]) -> Primitive2D {
    Primitive2D {
        center: Vector3::from(center),
        rotation: UnitQuaternion::identity(),
        log_scales: [sigma.ln(); 2],
        opacity,
        sh: vec![color_to_dc(color)],
    }
}

fn scene_of(asset: SplatAsset, background: [f64; 3]) -> SceneDescription {
    let mut scene = SceneDescription::new(background).unwrap();
    scene.add_instance(AssetInstance::new(Arc::new(asset), RigidTransform::identity(), 1.0).unwrap());
    scene
}

fn max_rgb_diff(a: &RenderedFrame, b: &RenderedFrame) -> f64 {
    a.rgb().iter().zip(b.rgb()).flat_map(|(p, q)| (0..3).map(move |c| (p[c] - q[c]).abs())).fold(0.0, f64::max)
}

/// Max relative depth difference after multiplying `a` by `scale`; a pixel
/// valid in only one frame counts as 1.
fn max_depth_rel_diff(a: &RenderedFrame, b: &RenderedFrame, scale: f64) -> f64 {
    a.depth()
        .data()
        .iter()
        .zip(b.depth().data())
        .map(|(&p, &q)| match (p == 0.0, q == 0.0) {
            (true, true) => 0.0,
            (false, false) => (p * scale - q).abs() / (p * scale).abs().max(q.abs()),
            _ => 1.0,
        })
        .fold(0.0, f64::max)
}

fn k64() -> Intrinsics {
    Intrinsics::new(60.0, 60.0, 31.5, 31.5, 64, 64).unwrap()
}

fn c1_analytic_blend() -> Outcome {
    let start = Instant::now();
    let k = Intrinsics::new(60.0, 60.0, 32.0, 32.0, 64, 64).unwrap();
    let (c1, c2, b) = ([0.9, 0.1, 0.2], [0.2, 0.7, 0.4], [0.3, 0.3, 0.8]);
    // opacity 0.5 at the splat center gives α′ = 0.5 on the optical axis
    let asset = SplatAsset::new("two", 0, vec![flat([0.0, 0.0, 2.0], 0.2, 0.5, c1), flat([0.0, 0.0, 3.0], 0.2, 0.5, c2)]).unwrap();
    let frame = render(&scene_of(asset, b), &CameraPose::default(), &k, &RenderSettings::default()).unwrap();
    let px = frame.rgb_at(32, 32);
    let err = (0..3).map(|c| (px[c] - (0.5 * c1[c] + 0.25 * c2[c] + 0.25 * b[c])).abs()).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    check(err <= 1e-6 && secs < 1.0, format!("max channel error {err:.2e} (≤ 1e-6), {secs:.3} s (< 1 s)"))
}

fn c2_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = common::rng(2);
    let settings = RenderSettings::default();
    let (mut rgb, mut depth) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = rng.gen_range(1..=500);
        let scene = common::random_scene(&mut rng, n);
        let a = render(&scene, &CameraPose::default(), &k64(), &settings).unwrap();
        let b = reference_render(&scene, &CameraPose::default(), &k64(), &settings).unwrap();
        rgb = rgb.max(max_rgb_diff(&a, &b));
        depth = depth.max(max_depth_rel_diff(&a, &b, 1.0));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        rgb <= 1e-4 && depth <= 1e-4 && secs < 60.0,
        format!("max rgb {rgb:.2e}, max rel depth {depth:.2e} (≤ 1e-4), {secs:.2} s (< 60 s)"),
    )
}

fn c3_rescale() -> Outcome {
    let mut rng = common::rng(3);
    let asset = common::random_asset(&mut rng, 500, 3, 2.0, (-1.0, 1.0));
    let (mut identity, mut shift_exact) = (0.0f64, true);
    for s in [0.5, 2.0, 10.0] {
        let scaled = rescale_asset(&asset, s).unwrap();
        let back = rescale_asset(&scaled, 1.0 / s).unwrap();
        for ((p, q), r) in asset.primitives().iter().zip(scaled.primitives()).zip(back.primitives()) {
            identity = identity.max((p.center - r.center).norm());
            for i in 0..2 {
                identity = identity.max((p.log_scales[i] - r.log_scales[i]).abs());
                shift_exact &= q.log_scales[i] == p.log_scales[i] + s.ln();
            }
        }
    }
    check(identity <= 1e-9 && shift_exact, format!("round-trip error {identity:.2e} (≤ 1e-9), σ′ = σ + ln s exact: {shift_exact}"))
}

fn c4_scale_covariance() -> Outcome {
    let mut rng = common::rng(4);
    let asset = common::random_asset(&mut rng, 200, 3, 1.0, (-1.0, 1.0));
    let camera_from_world = RigidTransform::new(UnitQuaternion::from_euler_angles(0.1, -0.2, 0.3), Vector3::new(0.0, 0.0, 4.0));
    let world_from_camera = camera_from_world.inverse();
    let settings = RenderSettings::default();
    let base = render(&scene_of(asset.clone(), [0.0; 3]), &CameraPose::from_world_from_camera(&world_from_camera), &k64(), &settings).unwrap();
    let mut worst = 0.0f64;
    for s in [0.5, 2.0, 10.0] {
        let cam = RigidTransform::new(world_from_camera.rotation(), world_from_camera.translation() * s);
        let frame = render(&scene_of(rescale_asset(&asset, s).unwrap(), [0.0; 3]), &CameraPose::from_world_from_camera(&cam), &k64(), &settings).unwrap();
        worst = worst.max(max_rgb_diff(&base, &frame));
    }
    check(worst <= 1e-5, format!("max pixel error {worst:.2e} (≤ 1e-5)"))
}

fn c5_round_trip() -> Outcome {
    let mut rng = common::rng(5);
    let k = Intrinsics::new(525.0, 520.0, 319.5, 239.5, 640, 480).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..100_000 {
        let z = 10f64.powf(rng.gen_range(-2.0..2.0));
        let (u, v) = (rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0));
        let p = back_project(&k, u, v, z).unwrap();
        let (pu, pv, pd) = match project(&k, &p) {
            Projection::InFrame { u, v, depth } | Projection::OutOfFrame { u, v, depth } => (u, v, depth),
            Projection::BehindCamera => return Outcome::Fail(format!("point {p:?} projected behind camera")),
        };
        worst = worst.max((pu - u).abs()).max((pv - v).abs()).max((pd - z).abs() / z);
        let q = back_project(&k, pu, pv, pd).unwrap();
        worst = worst.max((q - p).norm() / p.norm());
    }
    check(worst <= 1e-9, format!("max round-trip error {worst:.2e} over 1e5 points (≤ 1e-9)"))
}

fn c6_lidar_room() -> Outcome {
    const WALL: f64 = 3.0;
    let start = Instant::now();
    let scene = common::square_room(WALL, 4.0, 0.05);
    let settings = RenderSettings::default();
    let config = ScanConfig::default();
    let scan = simulate_scan(&scene, &RigidTransform::identity(), &config, &settings).unwrap();
    let scan_secs = start.elapsed().as_secs_f64();
    let errors: Vec<f64> = scan.points.iter().map(|p| (p.position.x.abs().max(p.position.y.abs()) - WALL).abs() / WALL).collect();
    let mean = errors.iter().sum::<f64>() / errors.len().max(1) as f64;
    let max = errors.iter().cloned().fold(0.0, f64::max);
    let empty_bins = scan.azimuth_histogram(config.azimuth_count).iter().filter(|&&n| n == 0).count();

    // clip check against re-rendered face depth maps, off-center so walls straddle the range
    let clip = ScanConfig { z_near: 2.7, z_far: 3.3, ..config };
    let pose = RigidTransform::from_translation(Vector3::new(0.4, 0.2, 0.0));
    let clipped = simulate_scan(&scene, &pose, &clip, &settings).unwrap();
    let k = clip.face_intrinsics().unwrap();
    let depths: Vec<_> = (0..FACE_COUNT).map(|f| render(&scene, &face_camera(&pose, f), &k, &settings).unwrap().depth().clone()).collect();
    let outside = clipped
        .points
        .iter()
        .filter(|p| {
            let face = face_for_azimuth(p.azimuth_index, clip.azimuth_count);
            let optical = face_rotation(face).inverse().transform_vector(&p.position);
            let u = (optical.x / optical.z * k.fx + k.cx).round() as u32;
            let v = (optical.y / optical.z * k.fy + k.cy).round() as u32;
            let d = depths[face].get(u, v);
            !(d >= clip.z_near && d <= clip.z_far)
        })
        .count();
    check(
        mean <= 0.02 && max <= 0.05 && empty_bins == 0 && outside == 0 && !clipped.is_empty() && scan_secs < 30.0,
        format!(
            "{} points, mean {:.3}% (≤ 2%), max {:.3}% (≤ 5%), empty bins {empty_bins}, {outside} of {} clipped points outside range, scan {scan_secs:.2} s (< 30 s)",
            scan.len(),
            mean * 100.0,
            max * 100.0,
            clipped.len()
        ),
    )
}

fn c7_marker() -> Outcome {
    const SIZE: f64 = 0.8;
    const RES: u32 = 256;
    let cells = checkerboard(8);
    let spec = MarkerSpec::new(binary_image(8, 8, &cells).unwrap(), SIZE);
    let asset = Arc::new(image_to_splat(&spec, "marker").unwrap());
    let mut scene = SceneDescription::new([0.5; 3]).unwrap();
    place_marker(&mut scene, asset, SIZE, RigidTransform::identity(), None, 0).unwrap();
    let f = RES as f64 / SIZE;
    let k = Intrinsics::new(f, f, RES as f64 / 2.0 - 0.5, RES as f64 / 2.0 - 0.5, RES, RES).unwrap();
    let camera = common::look_at(Vector3::new(0.0, 0.0, 1.0), Vector3::zeros(), Vector3::y());
    let frame = render(&scene, &camera, &k, &RenderSettings::default()).unwrap();
    let cell = RES / 8;
    let wrong = (0..64u32)
        .filter(|i| {
            let px = frame.rgb_at((i % 8) * cell + cell / 2, (i / 8) * cell + cell / 2);
            ((px[0] + px[1] + px[2]) / 3.0 > 0.5) != cells[*i as usize]
        })
        .count();
    check(wrong == 0, format!("{wrong} of 64 cells misclassified"))
}

fn c8_metrics() -> Outcome {
    let reference = RgbImage::filled(16, 16, [0.5; 3]).unwrap();
    let offset = RgbImage::filled(16, 16, [0.6; 3]).unwrap();
    let pair = ImagePair::new(&reference, &offset).unwrap();
    let (l, p) = (l1(&pair), psnr(&pair));
    let same = ImagePair::new(&reference, &reference).unwrap();
    let (l0, p0) = (l1(&same), psnr(&same));
    check(
        (l - 0.1).abs() <= 1e-9 && (p - 20.0).abs() <= 1e-9 && l0 == 0.0 && p0 == f64::INFINITY,
        format!("offset pair L1 {l:.12}, PSNR {p:.12} dB; identical pair L1 {l0}, PSNR {p0}"),
    )
}

fn c9_loopback() -> Outcome {
    let start = Instant::now();
    let scene = common::random_scene(&mut common::rng(9), 300);
    let k = Intrinsics::new(50.0, 50.0, 31.5, 23.5, 64, 48).unwrap();
    let settings = RenderSettings::default();
    let service = ServiceHandle::spawn(
        ServiceConfig { bind: "127.0.0.1:0".into(), ..Default::default() },
        Arc::new(SceneBackend::new(scene.clone(), settings.clone())),
    )
    .unwrap();
    let pose = |i: u64| {
        let a = i as f64 * 0.05;
        RigidTransform::new(UnitQuaternion::from_euler_angles(0.0, a, 0.0), Vector3::new(0.1 * a, 0.0, 0.0))
    };
    let addr = service.addr();
    let client = move |offset: u64| {
        std::thread::spawn(move || -> Result<(u32, u32, BTreeMap<u64, Vec<Vec<u8>>>), String> {
            let mut c = Client::connect(addr).map_err(|e| e.to_string())?;
            let reg = CameraRegistration { intrinsics: Some(k), preset: None, frame_rate: 10.0, encoding: Encoding::Rgb8 };
            let (id, _, info) = c.register_camera(reg).map_err(|e| e.to_string())?;
            if (info.width, info.height, info.fx) != (64, 48, 50.0) {
                return Err(format!("camera info mismatch: {info:?}"));
            }
            let mut frames: BTreeMap<u64, Vec<Vec<u8>>> = BTreeMap::new();
            let mut total = 0;
            let mut i = 0;
            let mut next_pose = Instant::now();
            let deadline = Instant::now() + Duration::from_secs(10);
            // 10 poses at 10 Hz, then keep reading until at least 10 frames arrived
            while (i < 10 || total < 10 || !frames.contains_key(&10)) && Instant::now() < deadline {
                if i < 10 && Instant::now() >= next_pose {
                    i += 1;
                    c.submit_pose(id, i, &pose(i + offset)).map_err(|e| e.to_string())?;
                    next_pose += Duration::from_millis(100);
                }
                c.set_read_timeout(Some(Duration::from_millis(10))).map_err(|e| e.to_string())?;
                if let Ok(Message::Frame(f)) = c.recv() {
                    if f.sensor_id != id {
                        return Err(format!("frame for sensor {} on client {id}", f.sensor_id));
                    }
                    total += 1;
                    frames.entry(f.timestamp).or_default().push(f.data);
                }
            }
            Ok((id, total, frames))
        })
    };
    let handles = [client(0), client(100)];
    let mut ids = Vec::new();
    let mut mismatched = 0;
    let mut counts = Vec::new();
    for (h, offset) in handles.into_iter().zip([0, 100]) {
        let (id, total, frames) = match h.join() {
            Ok(Ok(r)) => r,
            Ok(Err(e)) => return Outcome::Fail(e),
            Err(_) => return Outcome::Fail("client thread panicked".into()),
        };
        for (ts, payloads) in &frames {
            let cam = CameraPose::from_world_from_camera(&pose(ts + offset));
            let expected = render(&scene, &cam, &k, &settings).unwrap().to_rgb8();
            mismatched += payloads.iter().filter(|p| **p != expected).count();
        }
        ids.push(id);
        counts.push(total);
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        counts.iter().all(|&n| n >= 10) && mismatched == 0 && ids[0] != ids[1] && secs < 30.0,
        format!("frames per client {counts:?} (≥ 10), {mismatched} payload mismatches, ids {ids:?}, {secs:.2} s (< 30 s)"),
    )
}

fn c10_performance() -> Outcome {
    let scene = common::synthetic_scene(100_000, 10);
    let k = splatsim_core::camera::intrinsics_from_hfov(std::f64::consts::FRAC_PI_2, 640, 480).unwrap();
    let settings = RenderSettings::default();
    let camera = CameraPose::default();
    let start = Instant::now();
    let frame = render(&scene, &camera, &k, &settings).unwrap();
    let tiled = start.elapsed().as_secs_f64();

    // reference cost is linear in rows; time an evenly spread sample and extrapolate
    let rows: Vec<u32> = (0..8).map(|i| i * 60 + 7).collect();
    let start = Instant::now();
    let sampled = reference_render_rows(&scene, &camera, &k, &settings, &rows).unwrap();
    let reference = start.elapsed().as_secs_f64() * k.height as f64 / rows.len() as f64;
    let mut diff = 0.0f64;
    for (row, pixels) in rows.iter().zip(&sampled) {
        for (u, p) in pixels.iter().enumerate() {
            let q = frame.pixel(u as u32, *row);
            diff = (0..3).map(|c| (p.rgb[c] - q.rgb[c]).abs()).fold(diff, f64::max);
        }
    }
    let speedup = reference / tiled;
    check(
        tiled <= 5.0 && speedup >= 5.0 && diff <= 1e-4,
        format!(
            "tiled {tiled:.2} s (≤ 5 s), reference ≈ {reference:.1} s from {} sampled rows, speedup {speedup:.0}× (≥ 5×), sampled-row max diff {diff:.1e}",
            rows.len()
        ),
    )
}

#[derive(Deserialize)]
struct Manifest {
    #[serde(default)]
    assets: Vec<AssetCount>,
    #[serde(default)]
    pairs: Vec<PsnrPair>,
}

#[derive(Deserialize)]
struct AssetCount {
    ply: PathBuf,
    gaussians: usize,
}

#[derive(Deserialize)]
struct PsnrPair {
    reference: PathBuf,
    render: PathBuf,
    psnr: f64,
}

fn c11_dataset() -> Outcome {
    let Some(dir) = std::env::var_os("SPLATSIM_DATASET").map(PathBuf::from) else {
        return Outcome::Skip("SPLATSIM_DATASET not set".into());
    };
    let manifest_path = dir.join("manifest.json");
    let manifest: Manifest = match std::fs::read_to_string(&manifest_path).map(|t| serde_json::from_str(&t)) {
        Ok(Ok(m)) => m,
        Ok(Err(e)) => return Outcome::Fail(format!("{}: {e}", manifest_path.display())),
        Err(_) => return Outcome::Skip(format!("no manifest at {}", manifest_path.display())),
    };
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { dir.join(p) };
    let mut problems = Vec::new();
    for a in &manifest.assets {
        match read_ply_file(resolve(&a.ply)) {
            Ok(asset) if asset.len() == a.gaussians => {}
            Ok(asset) => problems.push(format!("{}: {} gaussians, expected {}", a.ply.display(), asset.len(), a.gaussians)),
            Err(e) => problems.push(format!("{}: {e}", a.ply.display())),
        }
    }
    for p in &manifest.pairs {
        let value = read_image(&resolve(&p.reference))
            .and_then(|r| read_image(&resolve(&p.render)).map(|t| (r, t)))
            .map_err(|e| e.to_string())
            .and_then(|(r, t)| ImagePair::new(&r, &t).map(|pair| psnr(&pair)).map_err(|e| e.to_string()));
        match value {
            Ok(v) if (v - p.psnr).abs() <= 0.5 => {}
            Ok(v) => problems.push(format!("{}: PSNR {v:.2} dB, expected {:.2}", p.render.display(), p.psnr)),
            Err(e) => problems.push(format!("{}: {e}", p.render.display())),
        }
    }
    check(
        problems.is_empty(),
        format!("{} assets, {} pairs checked; {}", manifest.assets.len(), manifest.pairs.len(), if problems.is_empty() { "all match".into() } else { problems.join("; ") }),
    )
}
