//! Sensor simulation on 2D Gaussian-splat scenes.
//!
//! * [`assets`]: splat data model, PLY I/O and asset post-processing.
//! * [`camera`]: pinhole projection and depth back-projection.
//! * [`raster`]: tiled and reference renderers producing RGB, depth and alpha.
//! * [`lidar`]: 360° scans synthesized from four 90° depth renders.
//! * [`markers`]: fiducial images turned into placeable splat assets.
//! * [`metrics`]: L1 and PSNR image comparison.
//! * [`service`]: streaming camera frames and LiDAR scans to clients over TCP.
//! * [`scene_file`]: JSON scene assembly files.

pub mod assets;
pub mod camera;
pub mod geometry;
pub mod imaging;
pub mod lidar;
pub mod markers;
pub mod metrics;
pub mod raster;
pub mod scene_file;
pub mod service;
