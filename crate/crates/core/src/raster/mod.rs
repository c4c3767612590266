//! Software rasterization of splat scenes into RGB, depth and alpha images.
//!
//! Each pixel casts a ray through its center, intersects every overlapping
//! splat plane, sorts the hits front to back by z-depth (ties by primitive
//! index) and alpha-blends them:
//!
//! ```text
//! a_k = opacity_k * g_k            (dropped when below alpha_cutoff)
//! w_k = a_k * prod_{j<k} (1 - a_j)
//! C   = sum_k w_k c_k + T * background,   T = prod_k (1 - a_k)
//! ```
//!
//! Blending stops once the running transmittance falls below
//! `transmittance_floor`. Depth is the weight-normalized expected hit depth and
//! is reported as 0 (invalid) when the accumulated weight is below
//! `depth_alpha_min`.
//!
//! [`render`] bins splats into screen tiles; [`reference_render`] is the
//! exhaustive per-pixel oracle it is tested against.

mod intersect;
mod reference;
pub mod sh;
mod tiled;

pub use intersect::{intersect_splat, Ray, SplatGeometry, SplatHit, PARALLEL_EPS};
pub use reference::{reference_render, reference_render_rows};
pub use sh::{eval_sh, SH_C0};
pub use tiled::render;

use nalgebra::Vector3;
use thiserror::Error;

use crate::assets::{AssetInstance, Primitive2D};
use crate::camera::{CameraError, CameraPose, DepthMap, Intrinsics};

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("invalid render settings: {0}")]
    InvalidSettings(String),
    #[error("camera pose is not finite")]
    NonFiniteCamera,
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error("view direction has zero length")]
    ZeroDirection,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderSettings {
    /// Modulated opacities below this are skipped.
    pub alpha_cutoff: f64,
    /// Blending stops when transmittance drops below this.
    pub transmittance_floor: f64,
    /// Splat extent in standard deviations.
    pub gaussian_support: f64,
    /// Minimum accumulated weight for a valid depth.
    pub depth_alpha_min: f64,
    /// Edge length of screen tiles in pixels.
    pub tile_size: u32,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            alpha_cutoff: 1.0 / 255.0,
            transmittance_floor: 1e-4,
            gaussian_support: 3.0,
            depth_alpha_min: 0.5,
            tile_size: 16,
        }
    }
}

impl RenderSettings {
    pub fn validate(&self) -> Result<(), RenderError> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(RenderError::InvalidSettings(format!("{name} = {v} is outside (0, 1]")))
            }
        };
        unit("alpha_cutoff", self.alpha_cutoff)?;
        unit("transmittance_floor", self.transmittance_floor)?;
        unit("depth_alpha_min", self.depth_alpha_min)?;
        if !(1.0..=6.0).contains(&self.gaussian_support) {
            return Err(RenderError::InvalidSettings(format!(
                "gaussian_support = {} is outside [1, 6]",
                self.gaussian_support
            )));
        }
        if self.tile_size < 4 {
            return Err(RenderError::InvalidSettings(format!("tile_size = {} is below 4", self.tile_size)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedFrame {
    width: u32,
    height: u32,
    rgb: Vec<[f64; 3]>,
    depth: DepthMap,
    alpha: Vec<f64>,
}

impl RenderedFrame {
    pub(crate) fn from_pixels(width: u32, height: u32, pixels: Vec<PixelResult>) -> Self {
        let rgb = pixels.iter().map(|p| p.rgb).collect();
        let alpha = pixels.iter().map(|p| p.alpha).collect();
        let depth = DepthMap::new(width, height, pixels.iter().map(|p| p.depth).collect())
            .expect("composited depths are finite and non-negative");
        Self { width, height, rgb, depth, alpha }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixel(&self, u: u32, v: u32) -> PixelResult {
        let i = v as usize * self.width as usize + u as usize;
        PixelResult { rgb: self.rgb[i], depth: self.depth.get(u, v), alpha: self.alpha[i] }
    }

    pub fn rgb(&self) -> &[[f64; 3]] {
        &self.rgb
    }

    pub fn rgb_at(&self, u: u32, v: u32) -> [f64; 3] {
        self.rgb[v as usize * self.width as usize + u as usize]
    }

    pub fn depth(&self) -> &DepthMap {
        &self.depth
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Row-major interleaved 8-bit RGB.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.rgb
            .iter()
            .flat_map(|px| px.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8))
            .collect()
    }

    /// Row-major little-endian f32 depths in meters.
    pub fn depth_f32_le(&self) -> Vec<u8> {
        self.depth.data().iter().flat_map(|d| (*d as f32).to_le_bytes()).collect()
    }

    /// Row-major 16-bit depths in millimeters (saturating at 65.535 m).
    pub fn depth_mm_u16(&self) -> Vec<u16> {
        self.depth.data().iter().map(|d| (d * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16).collect()
    }
}

/// Composited value of one pixel.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PixelResult {
    pub rgb: [f64; 3],
    pub depth: f64,
    pub alpha: f64,
}

/// A primitive resolved into the camera frame with its view-dependent color.
#[derive(Clone, Copy, Debug)]
pub(crate) struct CameraSplat {
    pub geometry: SplatGeometry,
    pub opacity: f64,
    pub color: [f64; 3],
    pub index: u32,
}

/// Places one primitive of `instance` in the camera frame.
pub(crate) fn splat_geometry(
    instance: &AssetInstance,
    primitive: &Primitive2D,
    camera: &CameraPose,
) -> SplatGeometry {
    let cam = &camera.camera_from_world;
    let rotation = cam.rotation() * instance.pose().rotation() * primitive.rotation;
    let [su, sv] = primitive.scales();
    SplatGeometry {
        center: cam.transform_point(&instance.local_to_world(&primitive.center)),
        tangent_u: rotation * Vector3::x(),
        tangent_v: rotation * Vector3::y(),
        normal: rotation * Vector3::z(),
        scale_u: su * instance.scale(),
        scale_v: sv * instance.scale(),
    }
}

/// Completes [`splat_geometry`] with the primitive's color for the direction from
/// the camera center, expressed in the asset frame.
pub(crate) fn camera_splat(
    instance: &AssetInstance,
    primitive: &Primitive2D,
    camera: &CameraPose,
    geometry: SplatGeometry,
    index: u32,
) -> CameraSplat {
    let cam = &camera.camera_from_world;
    // camera-frame offset -> world -> asset-local
    let local_dir = instance.pose().rotation().inverse() * (cam.rotation().inverse() * geometry.center);
    let color = sh::eval_sh(&primitive.sh, &local_dir)
        .unwrap_or_else(|_| sh::dc_to_color(primitive.sh[0]));
    CameraSplat { geometry, opacity: primitive.opacity, color, index }
}

pub(crate) fn validate_inputs(
    camera: &CameraPose,
    intrinsics: &Intrinsics,
    settings: &RenderSettings,
) -> Result<(), RenderError> {
    settings.validate()?;
    intrinsics.validate()?;
    if !camera.camera_from_world.is_finite() {
        return Err(RenderError::NonFiniteCamera);
    }
    Ok(())
}

/// Unit ray through pixel `(u, v)` from the camera center.
pub(crate) fn pixel_ray(intrinsics: &Intrinsics, u: u32, v: u32) -> Ray {
    Ray::new(Vector3::zeros(), intrinsics.ray_direction(u as f64, v as f64))
}
