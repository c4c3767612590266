//! Splat data model and the post-processing transforms applied to trained assets:
//! uniform rescaling, rigid alignment and box cropping.
//!
//! All operations take an asset by reference and return a new asset; assets are
//! never mutated in place once built.

mod ply;
mod scene;

pub use ply::{load_ply, read_ply_file, save_ply, write_ply, write_ply_file, PlyError, PlyWriteReport};
pub use scene::{AssetInstance, MarkerGroundTruth, SceneDescription, SceneError};

use nalgebra::{UnitQuaternion, Vector3};
use thiserror::Error;

use crate::geometry::RigidTransform;

/// Highest spherical-harmonic degree supported by the loader and renderer.
pub const MAX_SH_DEGREE: u8 = 3;

/// Number of SH coefficients per color channel for degree `degree`.
pub const fn sh_coeff_count(degree: u8) -> usize {
    let n = degree as usize + 1;
    n * n
}

#[derive(Debug, Error, PartialEq)]
pub enum AssetError {
    #[error("scale factor must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("inverted crop box: min {min:?} exceeds max {max:?}")]
    InvertedBox { min: [f64; 3], max: [f64; 3] },
    #[error("primitive {index}: {reason}")]
    InvalidPrimitive { index: usize, reason: String },
    #[error("sh degree {0} is outside [0, 3]")]
    InvalidShDegree(u8),
}

/// One planar Gaussian splat.
///
/// `rotation` maps splat-local axes into the asset frame: its first two columns are
/// the tangent vectors, the third is the normal. Scales are stored as logs so a
/// uniform rescale is a plain addition; `sh` holds one RGB triple per SH
/// coefficient, band 0 first.
#[derive(Clone, Debug, PartialEq)]
pub struct Primitive2D {
    pub center: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
    pub log_scales: [f64; 2],
    pub opacity: f64,
    pub sh: Vec<[f64; 3]>,
}

impl Primitive2D {
    pub fn scales(&self) -> [f64; 2] {
        [self.log_scales[0].exp(), self.log_scales[1].exp()]
    }

    pub fn tangent_u(&self) -> Vector3<f64> {
        self.rotation * Vector3::x()
    }

    pub fn tangent_v(&self) -> Vector3<f64> {
        self.rotation * Vector3::y()
    }

    pub fn normal(&self) -> Vector3<f64> {
        self.rotation * Vector3::z()
    }

    /// Checks the per-primitive invariants against an expected coefficient count.
    pub fn validate(&self, coeffs: usize) -> Result<(), String> {
        if !self.center.iter().all(|v| v.is_finite()) {
            return Err("non-finite center".into());
        }
        let q = self.rotation.quaternion();
        if !q.coords.iter().all(|v| v.is_finite()) {
            return Err("non-finite rotation".into());
        }
        if (q.norm() - 1.0).abs() > 1e-6 {
            return Err(format!("rotation norm {} is not 1", q.norm()));
        }
        if !(self.opacity > 0.0 && self.opacity < 1.0) {
            return Err(format!("opacity {} outside (0, 1)", self.opacity));
        }
        for s in self.scales() {
            if !(s.is_finite() && s > 0.0) {
                return Err(format!("scale {s} is not finite and positive"));
            }
        }
        if self.sh.len() != coeffs {
            return Err(format!("{} sh coefficients, expected {coeffs}", self.sh.len()));
        }
        if !self.sh.iter().flatten().all(|v| v.is_finite()) {
            return Err("non-finite sh coefficient".into());
        }
        Ok(())
    }
}

/// An ordered collection of primitives sharing one SH degree.
#[derive(Clone, Debug, PartialEq)]
pub struct SplatAsset {
    pub name: String,
    sh_degree: u8,
    primitives: Vec<Primitive2D>,
}

impl SplatAsset {
    /// Validates every primitive and builds the asset. Empty assets are allowed
    /// (they are valid, just not renderable).
    pub fn new(
        name: impl Into<String>,
        sh_degree: u8,
        primitives: Vec<Primitive2D>,
    ) -> Result<Self, AssetError> {
        if sh_degree > MAX_SH_DEGREE {
            return Err(AssetError::InvalidShDegree(sh_degree));
        }
        let coeffs = sh_coeff_count(sh_degree);
        for (index, p) in primitives.iter().enumerate() {
            p.validate(coeffs)
                .map_err(|reason| AssetError::InvalidPrimitive { index, reason })?;
        }
        Ok(Self { name: name.into(), sh_degree, primitives })
    }

    pub fn sh_degree(&self) -> u8 {
        self.sh_degree
    }

    pub fn primitives(&self) -> &[Primitive2D] {
        &self.primitives
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn is_renderable(&self) -> bool {
        !self.primitives.is_empty()
    }

    /// Axis-aligned bounds of the primitive centers, `None` when empty.
    pub fn center_bounds(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        let first = self.primitives.first()?.center;
        Some(self.primitives.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(&p.center), hi.sup(&p.center))
        }))
    }

    fn with_primitives(&self, primitives: Vec<Primitive2D>) -> Self {
        Self { name: self.name.clone(), sh_degree: self.sh_degree, primitives }
    }
}

/// Uniform rescale: centers are multiplied by `s` and log-scales shifted by `ln s`.
/// Rotation, opacity and color are untouched.
pub fn rescale_asset(asset: &SplatAsset, s: f64) -> Result<SplatAsset, AssetError> {
    if !(s.is_finite() && s > 0.0) {
        return Err(AssetError::InvalidScale(s));
    }
    let log_s = s.ln();
    let primitives = asset
        .primitives
        .iter()
        .map(|p| Primitive2D {
            center: p.center * s,
            log_scales: [p.log_scales[0] + log_s, p.log_scales[1] + log_s],
            ..p.clone()
        })
        .collect();
    Ok(asset.with_primitives(primitives))
}

/// Bakes a rigid transform into the asset.
///
/// Colors are not rotated, so view-dependent appearance relative to a fixed
/// camera changes; use an [`AssetInstance`] pose for appearance-preserving motion.
pub fn transform_asset(asset: &SplatAsset, transform: &RigidTransform) -> SplatAsset {
    if asset.sh_degree > 0 && *transform != RigidTransform::identity() {
        log::warn!(
            "baking a rigid transform into asset {:?} with sh degree {}: view-dependent color is not rotated",
            asset.name,
            asset.sh_degree
        );
    }
    let rotation = transform.rotation();
    let primitives = asset
        .primitives
        .iter()
        .map(|p| Primitive2D {
            center: transform.transform_point(&p.center),
            rotation: rotation * p.rotation,
            ..p.clone()
        })
        .collect();
    asset.with_primitives(primitives)
}

/// Keeps the primitives whose centers lie inside the closed box `[min, max]`
/// (or outside it when `keep_inside` is false). Order is preserved.
pub fn crop_aabb(
    asset: &SplatAsset,
    min: [f64; 3],
    max: [f64; 3],
    keep_inside: bool,
) -> Result<SplatAsset, AssetError> {
    if (0..3).any(|i| !(min[i] <= max[i])) {
        return Err(AssetError::InvertedBox { min, max });
    }
    let inside = |c: &Vector3<f64>| (0..3).all(|i| c[i] >= min[i] && c[i] <= max[i]);
    let primitives = asset
        .primitives
        .iter()
        .filter(|p| inside(&p.center) == keep_inside)
        .cloned()
        .collect();
    Ok(asset.with_primitives(primitives))
}
