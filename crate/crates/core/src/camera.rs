//! Pinhole camera model.
//!
//! Pixel convention: integer pixel coordinates `(u, v)` index ray centers
//! directly (`D[v, u]` is the depth along the ray through `(u, v)`), and
//! [`intrinsics_from_hfov`] shifts the principal point by half a pixel so the
//! image is symmetric about the optical axis. Depth is always z-depth, never
//! Euclidean range.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::RigidTransform;

#[derive(Debug, Error, PartialEq)]
pub enum CameraError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("horizontal field of view {0} rad is outside (0, pi)")]
    InvalidFov(f64),
    #[error("depth map has {got} values, expected {expected}")]
    DepthSize { got: usize, expected: usize },
    #[error("depth map contains a negative or non-finite value at index {0}")]
    InvalidDepth(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, CameraError> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        let bad = |m: String| Err(CameraError::InvalidIntrinsics(m));
        if self.width == 0 || self.height == 0 {
            return bad(format!("image size {}x{} must be positive", self.width, self.height));
        }
        if !(self.fx.is_finite() && self.fx > 0.0 && self.fy.is_finite() && self.fy > 0.0) {
            return bad(format!("focal lengths ({}, {}) must be positive", self.fx, self.fy));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return bad(format!("c_x {} outside [0, {})", self.cx, self.width));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return bad(format!("c_y {} outside [0, {})", self.cy, self.height));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Camera-frame direction (not normalized, z = 1) of the ray through pixel `(u, v)`.
    pub fn ray_direction(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Camera-from-world transform. Optical frame: +z forward, +x right, +y down.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct CameraPose {
    pub camera_from_world: RigidTransform,
}

impl CameraPose {
    pub fn from_camera_from_world(camera_from_world: RigidTransform) -> Self {
        Self { camera_from_world }
    }

    pub fn from_world_from_camera(world_from_camera: &RigidTransform) -> Self {
        Self { camera_from_world: world_from_camera.inverse() }
    }

    pub fn world_from_camera(&self) -> RigidTransform {
        self.camera_from_world.inverse()
    }

    /// Camera center in world coordinates.
    pub fn position(&self) -> Vector3<f64> {
        self.world_from_camera().translation()
    }
}

/// Row-major H×W grid of z-depths in meters; 0 marks "no surface".
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    data: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32, data: Vec<f64>) -> Result<Self, CameraError> {
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(CameraError::DepthSize { got: data.len(), expected });
        }
        if let Some(i) = data.iter().position(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(CameraError::InvalidDepth(i));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: u32, height: u32, depth: f64) -> Self {
        Self::new(width, height, vec![depth; width as usize * height as usize]).expect("valid constant depth")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// `D[v, u]`.
    pub fn get(&self, u: u32, v: u32) -> f64 {
        self.data[v as usize * self.width as usize + u as usize]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Result of projecting a camera-frame point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Projection {
    InFrame { u: f64, v: f64, depth: f64 },
    /// In front of the camera but outside `[0, W) × [0, H)`.
    OutOfFrame { u: f64, v: f64, depth: f64 },
    BehindCamera,
}

/// Lifts pixel `(u, v)` with z-depth `d` into the camera frame.
pub fn back_project(k: &Intrinsics, u: f64, v: f64, d: f64) -> Result<Vector3<f64>, CameraError> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(CameraError::NonPositiveDepth(d));
    }
    Ok(Vector3::new((u - k.cx) / k.fx * d, (v - k.cy) / k.fy * d, d))
}

pub fn project(k: &Intrinsics, p: &Vector3<f64>) -> Projection {
    if !(p.z > 0.0) {
        return Projection::BehindCamera;
    }
    let u = k.fx * p.x / p.z + k.cx;
    let v = k.fy * p.y / p.z + k.cy;
    let depth = p.z;
    if u >= 0.0 && u < k.width as f64 && v >= 0.0 && v < k.height as f64 {
        Projection::InFrame { u, v, depth }
    } else {
        Projection::OutOfFrame { u, v, depth }
    }
}

/// Square-pixel intrinsics with horizontal field of view `hfov` and the principal
/// point on the image center (`W/2 - 0.5`, `H/2 - 0.5`).
pub fn intrinsics_from_hfov(hfov: f64, width: u32, height: u32) -> Result<Intrinsics, CameraError> {
    if !(hfov > 1e-6 && hfov < std::f64::consts::PI - 1e-6) {
        return Err(CameraError::InvalidFov(hfov));
    }
    let f = (width as f64 / 2.0) / (hfov / 2.0).tan();
    Intrinsics::new(f, f, width as f64 / 2.0 - 0.5, height as f64 / 2.0 - 0.5, width, height)
}
