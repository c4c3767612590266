//! Planar splat assets built from marker images.
//!
//! Each pixel cell becomes one degree-0 splat on the asset's `z = 0` plane
//! with normal `+z`. Image columns run along `+x` and rows along `-y`, so the
//! image reads upright when viewed from `+z` with `+y` up.

use std::sync::Arc;

use nalgebra::{UnitQuaternion, Vector3};
use thiserror::Error;

use crate::assets::{AssetError, AssetInstance, MarkerGroundTruth, Primitive2D, SceneDescription, SceneError, SplatAsset};
use crate::geometry::RigidTransform;
use crate::imaging::RgbImage;
use crate::raster::sh::color_to_dc;

pub const DEFAULT_SIGMA_RATIO: f64 = 0.5;
pub const DEFAULT_OPACITY: f64 = 1.0 - 1e-4;

#[derive(Debug, Error, PartialEq)]
pub enum MarkerError {
    #[error("physical size {0} must be positive")]
    InvalidSize(f64),
    #[error("sigma ratio {0} is outside (0, 1]")]
    InvalidSigmaRatio(f64),
    #[error("opacity {0} is outside (0, 1)")]
    InvalidOpacity(f64),
    #[error("pattern has {got} cells, expected {expected}")]
    PatternSize { got: usize, expected: usize },
    #[error("marker pose is not finite")]
    NonFinitePose,
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarkerSpec {
    pub image: RgbImage,
    /// Printed width in meters.
    pub physical_size: f64,
    /// Splat σ as a fraction of the cell pitch.
    pub sigma_ratio: f64,
    pub opacity: f64,
}

impl MarkerSpec {
    pub fn new(image: RgbImage, physical_size: f64) -> Self {
        Self { image, physical_size, sigma_ratio: DEFAULT_SIGMA_RATIO, opacity: DEFAULT_OPACITY }
    }

    pub fn validate(&self) -> Result<(), MarkerError> {
        if !(self.physical_size > 0.0 && self.physical_size.is_finite()) {
            return Err(MarkerError::InvalidSize(self.physical_size));
        }
        if !(self.sigma_ratio > 0.0 && self.sigma_ratio <= 1.0) {
            return Err(MarkerError::InvalidSigmaRatio(self.sigma_ratio));
        }
        if !(self.opacity > 0.0 && self.opacity < 1.0) {
            return Err(MarkerError::InvalidOpacity(self.opacity));
        }
        Ok(())
    }

    /// Cell edge length in meters.
    pub fn pitch(&self) -> f64 {
        self.physical_size / self.image.width() as f64
    }
}

/// One splat per image cell, row-major.
pub fn image_to_splat(spec: &MarkerSpec, name: &str) -> Result<SplatAsset, MarkerError> {
    spec.validate()?;
    let (w, h) = (spec.image.width(), spec.image.height());
    let pitch = spec.pitch();
    let log_sigma = (spec.sigma_ratio * pitch).ln();
    let mut primitives = Vec::with_capacity(w as usize * h as usize);
    for row in 0..h {
        for col in 0..w {
            let x = (col as f64 + 0.5 - w as f64 / 2.0) * pitch;
            let y = (h as f64 / 2.0 - row as f64 - 0.5) * pitch;
            primitives.push(Primitive2D {
                center: Vector3::new(x, y, 0.0),
                rotation: UnitQuaternion::identity(),
                log_scales: [log_sigma; 2],
                opacity: spec.opacity,
                sh: vec![color_to_dc(spec.image.get(col, row))],
            });
        }
    }
    Ok(SplatAsset::new(name, 0, primitives)?)
}

/// Adds a marker instance at `pose` and records its ground truth.
///
/// The instance scale is `size_override / physical_size` (1 when absent).
/// Returns the instance index.
pub fn place_marker(
    scene: &mut SceneDescription,
    asset: Arc<SplatAsset>,
    physical_size: f64,
    pose: RigidTransform,
    size_override: Option<f64>,
    id: u32,
) -> Result<usize, MarkerError> {
    if !(physical_size > 0.0 && physical_size.is_finite()) {
        return Err(MarkerError::InvalidSize(physical_size));
    }
    if !pose.is_finite() {
        return Err(MarkerError::NonFinitePose);
    }
    let size = match size_override {
        Some(s) if !(s > 0.0 && s.is_finite()) => return Err(MarkerError::InvalidSize(s)),
        Some(s) => s,
        None => physical_size,
    };
    let scale = if size_override.is_some() { size / physical_size } else { 1.0 };
    let instance = scene.add_instance(AssetInstance::new(asset, pose, scale)?);
    scene.markers.push(MarkerGroundTruth { id, instance, pose, size });
    Ok(instance)
}

/// Binary image from row-major cells (`true` = white).
pub fn binary_image(width: u32, height: u32, cells: &[bool]) -> Result<RgbImage, MarkerError> {
    let expected = width as usize * height as usize;
    if cells.len() != expected {
        return Err(MarkerError::PatternSize { got: cells.len(), expected });
    }
    let gray: Vec<f64> = cells.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect();
    RgbImage::from_gray(width, height, &gray).map_err(|_| MarkerError::PatternSize { got: 0, expected })
}

/// `n × n` checkerboard with a black top-left cell.
pub fn checkerboard(n: u32) -> Vec<bool> {
    (0..n * n).map(|i| (i / n + i % n) % 2 == 1).collect()
}

/// Deterministic fiducial-style pattern: a one-cell black border around a
/// `payload × payload` bit field derived from `id`. Not a decodable tag family.
pub fn id_pattern(id: u32, payload: u32) -> (u32, Vec<bool>) {
    let n = payload + 2;
    let mut state = id as u64 ^ 0x9e37_79b9_7f4a_7c15;
    let mut next_bit = move || {
        // splitmix64
        state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        (z ^ (z >> 31)) & 1 == 1
    };
    let cells = (0..n * n)
        .map(|i| {
            let (r, c) = (i / n, i % n);
            let border = r == 0 || c == 0 || r == n - 1 || c == n - 1;
            !border && next_bit()
        })
        .collect();
    (n, cells)
}
