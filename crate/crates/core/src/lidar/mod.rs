//! 360° LiDAR synthesis from four 90° depth renders.
//!
//! The sensor frame is x forward, y left, z up. Face `f` looks along yaw
//! `f · 90°` and owns the azimuth sector `[f·90° − 45°, f·90° + 45°)`. Beams lie
//! on an equiangular grid (azimuth index `i` at `i · 360° / azimuth_count`,
//! counter-clockwise from +x; channel `j` at evenly spaced elevations from
//! `v_fov_min` to `v_fov_max`). Each beam reads the nearest depth pixel of its
//! face, is clipped to `[z_near, z_far]` on the sampled z-depth, and is
//! back-projected through the face intrinsics.

mod export;

pub use export::{read_pcd_points, write_csv, write_pcd, PcdEncoding};

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets::SceneDescription;
use crate::camera::{back_project, intrinsics_from_hfov, project, CameraError, CameraPose, DepthMap, Intrinsics, Projection};
use crate::geometry::RigidTransform;
use crate::raster::{render, RenderError, RenderSettings};

/// Number of perspective faces making up a revolution.
pub const FACE_COUNT: usize = 4;

/// Beams whose projection falls this far (in pixels) beyond the frame edge are
/// still accepted and snapped to the border pixel.
const FRUSTUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum LidarError {
    #[error("invalid scan config: {0}")]
    InvalidConfig(String),
    #[error("face {face}: azimuth index {azimuth_index} belongs to face {owner}")]
    SectorOverlap { face: usize, azimuth_index: u32, owner: usize },
    #[error("expected one scan per face sector 0..4, got sectors {0:?}")]
    FaceSet(Vec<usize>),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Camera(#[from] CameraError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScanConfig {
    /// Beams per revolution; divisible by 4.
    pub azimuth_count: u32,
    /// Vertical beam count.
    pub channels: u32,
    /// Lowest beam elevation in radians.
    pub v_fov_min: f64,
    /// Highest beam elevation in radians.
    pub v_fov_max: f64,
    pub z_near: f64,
    pub z_far: f64,
    /// Pixels along each edge of a square 90° face.
    pub face_resolution: u32,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            azimuth_count: 1024,
            channels: 16,
            v_fov_min: (-15f64).to_radians(),
            v_fov_max: 15f64.to_radians(),
            z_near: 0.1,
            z_far: 100.0,
            face_resolution: 512,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<(), LidarError> {
        let bad = |m: String| Err(LidarError::InvalidConfig(m));
        if self.azimuth_count == 0 || self.azimuth_count % 4 != 0 {
            return bad(format!("azimuth_count {} must be a positive multiple of 4", self.azimuth_count));
        }
        if self.channels == 0 {
            return bad("channels must be positive".into());
        }
        if !(self.z_near > 0.0 && self.z_near < self.z_far && self.z_far.is_finite()) {
            return bad(format!("need 0 < z_near < z_far, got [{}, {}]", self.z_near, self.z_far));
        }
        if !(self.v_fov_min < self.v_fov_max) {
            return bad(format!("v_fov_min {} must be below v_fov_max {}", self.v_fov_min, self.v_fov_max));
        }
        if !(self.v_fov_min > -FRAC_PI_4 && self.v_fov_max < FRAC_PI_4) {
            return bad(format!(
                "vertical field of view [{:.3}°, {:.3}°] must lie within (-45°, 45°)",
                self.v_fov_min.to_degrees(),
                self.v_fov_max.to_degrees()
            ));
        }
        if self.face_resolution < 2 {
            return bad(format!("face_resolution {} must be at least 2", self.face_resolution));
        }
        Ok(())
    }

    pub fn azimuth(&self, index: u32) -> f64 {
        2.0 * PI * index as f64 / self.azimuth_count as f64
    }

    pub fn elevation(&self, channel: u32) -> f64 {
        if self.channels == 1 {
            0.5 * (self.v_fov_min + self.v_fov_max)
        } else {
            self.v_fov_min + (self.v_fov_max - self.v_fov_min) * channel as f64 / (self.channels - 1) as f64
        }
    }

    pub fn face_intrinsics(&self) -> Result<Intrinsics, LidarError> {
        Ok(intrinsics_from_hfov(FRAC_PI_2, self.face_resolution, self.face_resolution)?)
    }
}

/// Face owning azimuth index `i`: sector `[f·90° − 45°, f·90° + 45°)`.
pub fn face_for_azimuth(index: u32, azimuth_count: u32) -> usize {
    let (i, n) = (index as u64, azimuth_count as u64);
    (((8 * i + n) / (2 * n)) % 4) as usize
}

/// Sensor-from-optical rotation of face `f` (yaw `f · 90°`), built from exact
/// axis permutations.
pub fn face_rotation(face: usize) -> RigidTransform {
    const YAW: [(f64, f64); 4] = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)];
    let (c, s) = YAW[face % 4];
    // columns: optical x (right), optical y (down), optical z (forward)
    let m = Matrix3::new(s, 0.0, c, -c, 0.0, s, 0.0, -1.0, 0.0);
    RigidTransform::from_matrix(m, Vector3::zeros()).expect("axis permutation is rigid")
}

/// Unit beam direction in the sensor frame.
pub fn beam_direction(azimuth: f64, elevation: f64) -> Vector3<f64> {
    Vector3::new(elevation.cos() * azimuth.cos(), elevation.cos() * azimuth.sin(), elevation.sin())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Beam {
    pub azimuth_index: u32,
    pub channel: u32,
    /// Direction in the frame of the depth map being sampled.
    pub direction: Vector3<f64>,
}

/// Beams owned by `face`, expressed in that face's optical frame, in
/// (azimuth, channel) order.
///
/// Directions are built from the integer azimuth offset to the face axis, so
/// every face sees a bit-identical beam pattern.
pub fn face_beams(config: &ScanConfig, face: usize) -> Vec<Beam> {
    let n = config.azimuth_count as i64;
    let axis = face as i64 * n / 4;
    (0..config.azimuth_count)
        .filter(|&i| face_for_azimuth(i, config.azimuth_count) == face)
        .flat_map(|i| {
            // offset from the face axis, wrapped into [-n/2, n/2)
            let offset = (i as i64 - axis + n / 2).rem_euclid(n) - n / 2;
            let delta = 2.0 * PI * offset as f64 / n as f64;
            (0..config.channels).map(move |j| {
                let e = config.elevation(j);
                Beam {
                    azimuth_index: i,
                    channel: j,
                    direction: Vector3::new(-e.cos() * delta.sin(), -e.sin(), e.cos() * delta.cos()),
                }
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DepthSample {
    pub beam: Beam,
    pub u: u32,
    pub v: u32,
    pub depth: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Downsampled {
    pub samples: Vec<DepthSample>,
    /// Beams whose direction left the face frustum.
    pub skipped: usize,
}

/// Nearest-pixel depth lookup for each beam; no interpolation.
pub fn downsample_depth(depth: &DepthMap, intrinsics: &Intrinsics, beams: &[Beam]) -> Downsampled {
    let (w, h) = (intrinsics.width as f64, intrinsics.height as f64);
    let mut out = Downsampled { samples: Vec::with_capacity(beams.len()), skipped: 0 };
    for beam in beams {
        let (u, v) = match project(intrinsics, &beam.direction) {
            Projection::InFrame { u, v, .. } | Projection::OutOfFrame { u, v, .. } => (u, v),
            Projection::BehindCamera => {
                out.skipped += 1;
                continue;
            }
        };
        // pixel i covers [i - 0.5, i + 0.5]
        let inside = |x: f64, size: f64| x >= -0.5 - FRUSTUM_TOLERANCE && x <= size - 0.5 + FRUSTUM_TOLERANCE;
        if !(inside(u, w) && inside(v, h)) {
            out.skipped += 1;
            continue;
        }
        let pu = u.round().clamp(0.0, w - 1.0) as u32;
        let pv = v.round().clamp(0.0, h - 1.0) as u32;
        out.samples.push(DepthSample { beam: *beam, u: pu, v: pv, depth: depth.get(pu, pv) });
    }
    out
}

/// Per-face accounting of beams that produced no point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceStats {
    pub beams: usize,
    pub outside_frustum: usize,
    /// Depth 0: no surface along the beam.
    pub no_return: usize,
    /// Depth outside `[z_near, z_far]`.
    pub clipped: usize,
    pub returned: usize,
}

impl FaceStats {
    pub fn dropped(&self) -> usize {
        self.outside_frustum + self.no_return + self.clipped
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FacePoint {
    pub azimuth_index: u32,
    pub channel: u32,
    /// Point in the face's optical frame.
    pub position: Vector3<f64>,
    /// Sampled z-depth that produced the point.
    pub depth: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FaceScan {
    /// Face sector index; the face looks along yaw `face · 90°`.
    pub face: usize,
    pub points: Vec<FacePoint>,
    pub stats: FaceStats,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LidarPoint {
    /// Sensor-frame position in meters.
    pub position: Vector3<f64>,
    pub azimuth_index: u32,
    pub channel: u32,
    /// Euclidean distance from the sensor origin.
    pub range: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LidarScan {
    /// Points in (azimuth, channel) order.
    pub points: Vec<LidarPoint>,
    /// Indexed by face.
    pub faces: Vec<FaceStats>,
}

impl LidarScan {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of points per azimuth index.
    pub fn azimuth_histogram(&self, azimuth_count: u32) -> Vec<usize> {
        let mut bins = vec![0; azimuth_count as usize];
        for p in &self.points {
            bins[p.azimuth_index as usize] += 1;
        }
        bins
    }
}

/// Applies the z-depth clip and back-projects the surviving samples of one face.
pub fn face_points(
    face: usize,
    samples: &Downsampled,
    intrinsics: &Intrinsics,
    config: &ScanConfig,
    beams: usize,
) -> FaceScan {
    let mut stats = FaceStats { beams, outside_frustum: samples.skipped, ..Default::default() };
    let mut points = Vec::with_capacity(samples.samples.len());
    for s in &samples.samples {
        if s.depth == 0.0 {
            stats.no_return += 1;
            continue;
        }
        if !(s.depth >= config.z_near && s.depth <= config.z_far) {
            stats.clipped += 1;
            continue;
        }
        let position = back_project(intrinsics, s.u as f64, s.v as f64, s.depth).expect("clipped depth is positive");
        points.push(FacePoint { azimuth_index: s.beam.azimuth_index, channel: s.beam.channel, position, depth: s.depth });
    }
    stats.returned = points.len();
    FaceScan { face, points, stats }
}

/// Rotates each face's points into the sensor frame and concatenates them.
///
/// Requires exactly one scan per face sector, each containing only azimuth
/// indices from its own sector.
pub fn merge_faces(faces: Vec<FaceScan>, azimuth_count: u32) -> Result<LidarScan, LidarError> {
    let mut sectors: Vec<usize> = faces.iter().map(|f| f.face).collect();
    sectors.sort_unstable();
    if sectors != [0, 1, 2, 3] {
        return Err(LidarError::FaceSet(faces.iter().map(|f| f.face).collect()));
    }
    let mut stats = vec![FaceStats::default(); FACE_COUNT];
    let mut points = Vec::with_capacity(faces.iter().map(|f| f.points.len()).sum());
    for face in &faces {
        let sensor_from_optical = face_rotation(face.face);
        for p in &face.points {
            let owner = face_for_azimuth(p.azimuth_index, azimuth_count);
            if p.azimuth_index >= azimuth_count || owner != face.face {
                return Err(LidarError::SectorOverlap { face: face.face, azimuth_index: p.azimuth_index, owner });
            }
            let position = sensor_from_optical.transform_vector(&p.position);
            points.push(LidarPoint {
                position,
                azimuth_index: p.azimuth_index,
                channel: p.channel,
                range: position.norm(),
            });
        }
        stats[face.face] = face.stats;
    }
    points.sort_by_key(|p| (p.azimuth_index, p.channel));
    Ok(LidarScan { points, faces: stats })
}

/// Camera pose of face `face` for a sensor at `world_from_sensor`.
pub fn face_camera(world_from_sensor: &RigidTransform, face: usize) -> CameraPose {
    CameraPose::from_world_from_camera(&world_from_sensor.compose(&face_rotation(face)))
}

/// Renders the four faces and assembles a scan in the sensor frame.
pub fn simulate_scan(
    scene: &SceneDescription,
    world_from_sensor: &RigidTransform,
    config: &ScanConfig,
    settings: &RenderSettings,
) -> Result<LidarScan, LidarError> {
    config.validate()?;
    let intrinsics = config.face_intrinsics()?;
    let faces = (0..FACE_COUNT)
        .into_par_iter()
        .map(|face| {
            let beams = face_beams(config, face);
            let frame = render(scene, &face_camera(world_from_sensor, face), &intrinsics, settings)?;
            let samples = downsample_depth(frame.depth(), &intrinsics, &beams);
            Ok(face_points(face, &samples, &intrinsics, config, beams.len()))
        })
        .collect::<Result<Vec<_>, LidarError>>()?;
    merge_faces(faces, config.azimuth_count)
}
