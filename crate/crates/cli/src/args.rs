use std::fmt;

use clap::Args;

use splatsim_core::camera::{intrinsics_from_hfov, Intrinsics};
use splatsim_core::geometry::{parse_pose, RigidTransform};
use splatsim_core::lidar::ScanConfig;
use splatsim_core::raster::RenderSettings;

/// Bad flag values or combinations; reported with exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

pub fn pose_arg(text: &str) -> Result<RigidTransform, String> {
    parse_pose(text)
}

/// Parses exactly `N` whitespace or comma separated numbers.
pub fn numbers<const N: usize>(text: &str) -> Result<[f64; N], String> {
    let values: Vec<f64> = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| format!("invalid number {s:?}: {e}")))
        .collect::<Result<_, _>>()?;
    values.try_into().map_err(|v: Vec<f64>| format!("expected {N} numbers, got {}", v.len()))
}

#[derive(Args, Debug, Clone)]
pub struct CameraArgs {
    /// Image width in pixels.
    #[arg(long, default_value_t = 640)]
    pub width: u32,
    /// Image height in pixels.
    #[arg(long, default_value_t = 480)]
    pub height: u32,
    /// Horizontal field of view in degrees; ignored when --fx is given.
    #[arg(long, default_value_t = 90.0)]
    pub hfov: f64,
    /// Focal length in pixels along x.
    #[arg(long)]
    pub fx: Option<f64>,
    /// Focal length in pixels along y (defaults to fx).
    #[arg(long, requires = "fx")]
    pub fy: Option<f64>,
    /// Principal point x (defaults to width/2 - 0.5).
    #[arg(long, requires = "fx")]
    pub cx: Option<f64>,
    /// Principal point y (defaults to height/2 - 0.5).
    #[arg(long, requires = "fx")]
    pub cy: Option<f64>,
}

impl CameraArgs {
    pub fn intrinsics(&self) -> anyhow::Result<Intrinsics> {
        let k = match self.fx {
            None => intrinsics_from_hfov(self.hfov.to_radians(), self.width, self.height),
            Some(fx) => Intrinsics::new(
                fx,
                self.fy.unwrap_or(fx),
                self.cx.unwrap_or(self.width as f64 / 2.0 - 0.5),
                self.cy.unwrap_or(self.height as f64 / 2.0 - 0.5),
                self.width,
                self.height,
            ),
        };
        k.map_err(|e| usage(format!("invalid intrinsics: {e}")))
    }
}

#[derive(Args, Debug, Clone)]
pub struct RenderArgs {
    /// Tile edge length of the tiled rasterizer.
    #[arg(long, env = "SPLATSIM_TILE_SIZE", default_value_t = RenderSettings::default().tile_size)]
    pub tile_size: u32,
}

impl RenderArgs {
    pub fn settings(&self) -> anyhow::Result<RenderSettings> {
        if self.tile_size == 0 {
            return Err(usage("--tile-size must be positive"));
        }
        Ok(RenderSettings { tile_size: self.tile_size, ..Default::default() })
    }
}

#[derive(Args, Debug, Clone)]
pub struct ScanArgs {
    /// Beams per revolution (multiple of 4).
    #[arg(long, default_value_t = ScanConfig::default().azimuth_count)]
    pub azimuths: u32,
    /// Vertical channels.
    #[arg(long, default_value_t = ScanConfig::default().channels)]
    pub channels: u32,
    /// Lowest beam elevation in degrees.
    #[arg(long, default_value_t = -15.0, allow_hyphen_values = true)]
    pub vfov_min: f64,
    /// Highest beam elevation in degrees.
    #[arg(long, default_value_t = 15.0, allow_hyphen_values = true)]
    pub vfov_max: f64,
    /// Near clip on the sampled z-depth, meters.
    #[arg(long, default_value_t = ScanConfig::default().z_near)]
    pub z_near: f64,
    /// Far clip on the sampled z-depth, meters.
    #[arg(long, default_value_t = ScanConfig::default().z_far)]
    pub z_far: f64,
    /// Edge length in pixels of each of the four depth faces.
    #[arg(long, default_value_t = ScanConfig::default().face_resolution)]
    pub face_resolution: u32,
}

impl ScanArgs {
    pub fn config(&self) -> anyhow::Result<ScanConfig> {
        let config = ScanConfig {
            azimuth_count: self.azimuths,
            channels: self.channels,
            v_fov_min: self.vfov_min.to_radians(),
            v_fov_max: self.vfov_max.to_radians(),
            z_near: self.z_near,
            z_far: self.z_far,
            face_resolution: self.face_resolution,
        };
        config.validate().map_err(|e| usage(format!("invalid scan config: {e}")))?;
        Ok(config)
    }
}
