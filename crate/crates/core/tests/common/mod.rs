//! Scene builders shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use splatsim_core::assets::{sh_coeff_count, AssetInstance, Primitive2D, SceneDescription, SplatAsset};
use splatsim_core::camera::CameraPose;
use splatsim_core::geometry::RigidTransform;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Camera at `eye` looking at `target`; `up` fixes the roll (image y points
/// along `-up`).
pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> CameraPose {
    let z = (target - eye).normalize();
    let x = z.cross(&up).normalize();
    let y = z.cross(&x);
    let world_from_camera = RigidTransform::from_matrix(Matrix3::from_columns(&[x, y, z]), eye).unwrap();
    CameraPose::from_world_from_camera(&world_from_camera)
}

pub fn random_primitive(rng: &mut impl Rng, center: Vector3<f64>, log_scale: (f64, f64), degree: u8) -> Primitive2D {
    let axis = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let rotation = UnitQuaternion::from_scaled_axis(axis * 1.5);
    Primitive2D {
        center,
        rotation,
        log_scales: [rng.gen_range(log_scale.0..log_scale.1), rng.gen_range(log_scale.0..log_scale.1)],
        opacity: rng.gen_range(0.05..0.99),
        sh: (0..sh_coeff_count(degree))
            .map(|k| {
                let amp = if k == 0 { 1.5 } else { 0.3 };
                [rng.gen_range(-amp..amp), rng.gen_range(-amp..amp), rng.gen_range(-amp..amp)]
            })
            .collect(),
    }
}

/// Random splats inside a box in front of the identity camera (`+z` forward).
pub fn random_asset(rng: &mut impl Rng, n: usize, degree: u8, extent: f64, depth: (f64, f64)) -> SplatAsset {
    let prims = (0..n)
        .map(|_| {
            let c = Vector3::new(
                rng.gen_range(-extent..extent),
                rng.gen_range(-extent..extent),
                rng.gen_range(depth.0..depth.1),
            );
            random_primitive(rng, c, (-3.5, -1.0), degree)
        })
        .collect();
    SplatAsset::new("random", degree, prims).unwrap()
}

/// One or two random instances, each with its own pose and scale.
pub fn random_scene(rng: &mut impl Rng, n: usize) -> SceneDescription {
    let degree = rng.gen_range(0..=3);
    let mut scene = SceneDescription::new([rng.gen(), rng.gen(), rng.gen()]).unwrap();
    let split = if n > 1 { rng.gen_range(1..n) } else { n };
    for count in [split, n - split] {
        if count == 0 {
            continue;
        }
        let asset = Arc::new(random_asset(rng, count, degree, 1.0, (-1.0, 1.0)));
        let rot = UnitQuaternion::from_scaled_axis(Vector3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-3.0..3.0)));
        let t = Vector3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(3.0..5.0));
        let scale = rng.gen_range(0.5..1.5);
        scene.add_instance(AssetInstance::new(asset, RigidTransform::new(rot, t), scale).unwrap());
    }
    scene
}

/// Large seeded scene for performance measurements: a field of small splats
/// filling the view of an identity camera with 90° horizontal field of view.
pub fn synthetic_scene(n: usize, seed: u64) -> SceneDescription {
    let mut rng = rng(seed);
    let prims = (0..n)
        .map(|_| {
            let z = rng.gen_range(2.0..12.0);
            let c = Vector3::new(rng.gen_range(-z..z), rng.gen_range(-0.75 * z..0.75 * z), z);
            random_primitive(&mut rng, c, (-4.5, -3.0), 1)
        })
        .collect();
    let asset = Arc::new(SplatAsset::new("synthetic", 1, prims).unwrap());
    let mut scene = SceneDescription::new([0.2, 0.3, 0.4]).unwrap();
    scene.add_instance(AssetInstance::new(asset, RigidTransform::identity(), 1.0).unwrap());
    scene
}

/// Fully opaque rectangular wall of grid-aligned splats in its local `z = 0`
/// plane, centered on the origin, with `σ = 0.5 · pitch`.
pub fn wall_asset(width: f64, height: f64, pitch: f64, gray: f64) -> SplatAsset {
    let (nu, nv) = ((width / pitch).round() as usize, (height / pitch).round() as usize);
    let dc = (gray - 0.5) / splatsim_core::raster::SH_C0;
    let mut prims = Vec::with_capacity(nu * nv);
    for j in 0..nv {
        for i in 0..nu {
            prims.push(Primitive2D {
                center: Vector3::new((i as f64 + 0.5) * pitch - width / 2.0, (j as f64 + 0.5) * pitch - height / 2.0, 0.0),
                rotation: UnitQuaternion::identity(),
                log_scales: [(0.5 * pitch).ln(); 2],
                opacity: 0.99,
                sh: vec![[dc; 3]],
            });
        }
    }
    SplatAsset::new("wall", 0, prims).unwrap()
}

/// Square room of four walls at `±d` along x and y, spanning `z ∈ [-h/2, h/2]`.
pub fn square_room(d: f64, height: f64, pitch: f64) -> SceneDescription {
    let wall = Arc::new(wall_asset(2.0 * d + 4.0 * pitch, height, pitch, 0.6));
    let mut scene = SceneDescription::default();
    for k in 0..4 {
        let yaw = k as f64 * std::f64::consts::FRAC_PI_2;
        let normal = Vector3::new(yaw.cos(), yaw.sin(), 0.0);
        // local y -> world z, local z -> outward wall normal
        let x = Vector3::z().cross(&normal);
        let rot = Matrix3::from_columns(&[x, Vector3::z(), normal]);
        let pose = RigidTransform::from_matrix(rot, normal * d).unwrap();
        scene.add_instance(AssetInstance::new(Arc::clone(&wall), pose, 1.0).unwrap());
    }
    scene
}
