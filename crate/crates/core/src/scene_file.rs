//! JSON scene assembly files.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "background": [0.0, 0.0, 0.0],
//!   "instances": [
//!     {"asset": "row1.ply", "pose": {"translation": [0, 0, 0], "rotation": [1, 0, 0, 0]}, "scale": 1.0}
//!   ],
//!   "markers": [
//!     {"image": "tag3.png", "physical_size": 0.2, "pose": {"translation": [1, 0, 0.5], "rotation": [1, 0, 0, 0]}, "id": 3}
//!   ]
//! }
//! ```
//!
//! Paths are relative to the scene file. Rotations are `[w, x, y, z]` and are
//! normalized on load.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets::{read_ply_file, AssetInstance, PlyError, SceneDescription, SceneError};
use crate::geometry::{GeometryError, PoseRecord};
use crate::imaging::{read_image, ImageError};
use crate::markers::{image_to_splat, place_marker, MarkerError, MarkerSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SceneFileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    Version(u32),
    #[error("{what}: referenced file {path} does not exist")]
    MissingFile { what: String, path: String },
    #[error("{what}: {source}")]
    Pose { what: String, source: GeometryError },
    #[error("{path}: {source}")]
    Ply { path: String, source: PlyError },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Marker(#[from] MarkerError),
    #[error("{what}: {source}")]
    Scene { what: String, source: SceneError },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceRecord {
    pub asset: PathBuf,
    pub pose: PoseRecord,
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerRecord {
    pub image: PathBuf,
    /// Printed width in meters.
    pub physical_size: f64,
    pub pose: PoseRecord,
    /// Ground-truth marker id.
    pub id: u32,
    /// Placed width in meters when different from `physical_size`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub schema_version: u32,
    #[serde(default)]
    pub background: [f64; 3],
    #[serde(default)]
    pub instances: Vec<InstanceRecord>,
    #[serde(default)]
    pub markers: Vec<MarkerRecord>,
}

impl Default for SceneFile {
    fn default() -> Self {
        Self { schema_version: SCHEMA_VERSION, background: [0.0; 3], instances: Vec::new(), markers: Vec::new() }
    }
}

fn unit_scale() -> f64 {
    1.0
}

fn normalize(pose: &mut PoseRecord, what: &str) -> Result<(), SceneFileError> {
    let t = pose.to_transform_normalizing().map_err(|source| SceneFileError::Pose { what: what.into(), source })?;
    pose.rotation = t.wxyz();
    Ok(())
}

impl SceneFile {
    /// Parses JSON, checks the schema version and normalizes quaternions.
    pub fn from_json(text: &str, origin: &str) -> Result<Self, SceneFileError> {
        let mut file: SceneFile =
            serde_json::from_str(text).map_err(|source| SceneFileError::Json { path: origin.into(), source })?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(SceneFileError::Version(file.schema_version));
        }
        for (i, inst) in file.instances.iter_mut().enumerate() {
            normalize(&mut inst.pose, &format!("instance {i}"))?;
        }
        for (i, m) in file.markers.iter_mut().enumerate() {
            normalize(&mut m.pose, &format!("marker {i}"))?;
        }
        Ok(file)
    }

    /// Loads a scene file and checks that every referenced file exists.
    pub fn load(path: &Path) -> Result<Self, SceneFileError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| SceneFileError::Io { path: path.display().to_string(), source })?;
        let file = Self::from_json(&text, &path.display().to_string())?;
        let base = base_dir(path);
        let referenced = file
            .instances
            .iter()
            .enumerate()
            .map(|(i, r)| (format!("instance {i}"), &r.asset))
            .chain(file.markers.iter().enumerate().map(|(i, r)| (format!("marker {i}"), &r.image)));
        for (what, rel) in referenced {
            let p = base.join(rel);
            if !p.is_file() {
                return Err(SceneFileError::MissingFile { what, path: p.display().to_string() });
            }
        }
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene file serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), SceneFileError> {
        std::fs::write(path, self.to_json() + "\n")
            .map_err(|source| SceneFileError::Io { path: path.display().to_string(), source })
    }

    /// Loads referenced assets and images and assembles the scene. Relative
    /// paths resolve against `base`. Assets referenced more than once are
    /// loaded once and shared.
    pub fn build(&self, base: &Path) -> Result<SceneDescription, SceneFileError> {
        let mut scene = SceneDescription::new(self.background)
            .map_err(|source| SceneFileError::Scene { what: "background".into(), source })?;
        let mut cache = HashMap::new();
        for (i, record) in self.instances.iter().enumerate() {
            let path = base.join(&record.asset);
            let asset = match cache.get(&path) {
                Some(a) => Arc::clone(a),
                None => {
                    let a = Arc::new(
                        read_ply_file(&path)
                            .map_err(|source| SceneFileError::Ply { path: path.display().to_string(), source })?,
                    );
                    cache.insert(path.clone(), Arc::clone(&a));
                    a
                }
            };
            let pose = record
                .pose
                .to_transform_normalizing()
                .map_err(|source| SceneFileError::Pose { what: format!("instance {i}"), source })?;
            let instance = AssetInstance::new(asset, pose, record.scale)
                .map_err(|source| SceneFileError::Scene { what: format!("instance {i}"), source })?;
            scene.add_instance(instance);
        }
        for (i, record) in self.markers.iter().enumerate() {
            let path = base.join(&record.image);
            let spec = MarkerSpec::new(read_image(&path)?, record.physical_size);
            let name = format!("marker_{}", record.id);
            let asset = Arc::new(image_to_splat(&spec, &name)?);
            let pose = record
                .pose
                .to_transform_normalizing()
                .map_err(|source| SceneFileError::Pose { what: format!("marker {i}"), source })?;
            place_marker(&mut scene, asset, record.physical_size, pose, record.size, record.id)?;
        }
        Ok(scene)
    }
}

/// Directory that relative paths in the scene file at `path` resolve against.
pub fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Loads and assembles a scene file in one step.
pub fn load_scene(path: &Path) -> Result<SceneDescription, SceneFileError> {
    SceneFile::load(path)?.build(&base_dir(path))
}
