use std::sync::Arc;

use nalgebra::Vector3;
use thiserror::Error;

use super::SplatAsset;
use crate::geometry::RigidTransform;

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("instance scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("background color {0:?} is outside [0, 1]")]
    InvalidBackground([f64; 3]),
    #[error("instance pose is not finite")]
    NonFinitePose,
}

/// A placed copy of an asset: `x_world = pose(scale * x_local)`.
///
/// View-dependent color is always evaluated in the asset-local frame, so moving
/// an instance together with the camera never changes its appearance.
#[derive(Clone, Debug)]
pub struct AssetInstance {
    pub asset: Arc<SplatAsset>,
    pose: RigidTransform,
    scale: f64,
}

impl AssetInstance {
    pub fn new(asset: Arc<SplatAsset>, pose: RigidTransform, scale: f64) -> Result<Self, SceneError> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(SceneError::InvalidScale(scale));
        }
        if !pose.is_finite() {
            return Err(SceneError::NonFinitePose);
        }
        Ok(Self { asset, pose, scale })
    }

    pub fn pose(&self) -> &RigidTransform {
        &self.pose
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn local_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.pose.transform_point(&(p * self.scale))
    }
}

/// Ground truth for a marker placed in the scene.
#[derive(Clone, Debug, PartialEq)]
pub struct MarkerGroundTruth {
    pub id: u32,
    /// Index of the marker's instance in [`SceneDescription::instances`].
    pub instance: usize,
    pub pose: RigidTransform,
    /// Printed edge length in meters after any size override.
    pub size: f64,
}

/// The renderable world: instances over a solid background.
///
/// Convention: world z is up and crop rows run along x. Violations are reported
/// by [`SceneDescription::convention_warnings`] but not rejected.
#[derive(Clone, Debug, Default)]
pub struct SceneDescription {
    pub instances: Vec<AssetInstance>,
    background: [f64; 3],
    pub markers: Vec<MarkerGroundTruth>,
}

impl SceneDescription {
    pub fn new(background: [f64; 3]) -> Result<Self, SceneError> {
        let mut scene = Self::default();
        scene.set_background(background)?;
        Ok(scene)
    }

    pub fn background(&self) -> [f64; 3] {
        self.background
    }

    pub fn set_background(&mut self, background: [f64; 3]) -> Result<(), SceneError> {
        if !background.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(SceneError::InvalidBackground(background));
        }
        self.background = background;
        Ok(())
    }

    pub fn add_instance(&mut self, instance: AssetInstance) -> usize {
        self.instances.push(instance);
        self.instances.len() - 1
    }

    pub fn primitive_count(&self) -> usize {
        self.instances.iter().map(|i| i.asset.len()).sum()
    }

    /// Heuristic checks of the world convention: each non-marker instance should
    /// keep its local z axis up and, for elongated assets, lay its long
    /// horizontal extent along world x.
    pub fn convention_warnings(&self) -> Vec<String> {
        let marker_instances: Vec<usize> = self.markers.iter().map(|m| m.instance).collect();
        let mut warnings = Vec::new();
        for (index, inst) in self.instances.iter().enumerate() {
            if marker_instances.contains(&index) {
                continue;
            }
            let up = inst.pose.transform_vector(&Vector3::z());
            if up.z < (1f64).to_radians().cos() {
                warnings.push(format!(
                    "instance {index} ({}): local z axis maps to {:.3?}, not world up",
                    inst.asset.name,
                    [up.x, up.y, up.z]
                ));
            }
            if let Some((lo, hi)) = inst.asset.center_bounds() {
                let extent = hi - lo;
                let along = inst.pose.transform_vector(&Vector3::new(extent.x, 0.0, 0.0));
                let across = inst.pose.transform_vector(&Vector3::new(0.0, extent.y, 0.0));
                let world_x = along.x.abs() + across.x.abs();
                let world_y = along.y.abs() + across.y.abs();
                if world_y > 1.5 * world_x {
                    warnings.push(format!(
                        "instance {index} ({}): horizontal extent runs along world y ({world_y:.2} m vs {world_x:.2} m along x); rows are expected along x",
                        inst.asset.name
                    ));
                }
            }
        }
        warnings
    }
}
