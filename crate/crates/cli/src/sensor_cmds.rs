use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, ValueEnum};

use splatsim_core::camera::CameraPose;
use splatsim_core::geometry::RigidTransform;
use splatsim_core::imaging::{read_image, write_depth_png, write_pfm, write_png, RgbImage};
use splatsim_core::lidar::{simulate_scan, write_csv, write_pcd, PcdEncoding};
use splatsim_core::metrics::{ImagePair, MetricRecord};
use splatsim_core::raster::{reference_render, render};
use splatsim_core::scene_file::{load_scene, SceneFile};

use crate::args::{pose_arg, usage, CameraArgs, RenderArgs, ScanArgs};

fn extension(path: &Path) -> String {
    path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase()).unwrap_or_default()
}

#[derive(Args, Debug)]
pub struct RenderCmd {
    /// Scene file (JSON).
    pub scene: PathBuf,
    /// Camera pose in the world, "tx ty tz qw qx qy qz".
    #[arg(long, value_parser = pose_arg, allow_hyphen_values = true, default_value = "0 0 0 1 0 0 0")]
    pub pose: RigidTransform,
    /// RGB output (PNG).
    #[arg(long, short)]
    pub out: PathBuf,
    /// Depth output: .png (16-bit millimeters) or .pfm (float meters).
    #[arg(long)]
    pub depth: Option<PathBuf>,
    /// Use the exhaustive reference renderer.
    #[arg(long)]
    pub reference: bool,
    #[command(flatten)]
    pub camera: CameraArgs,
    #[command(flatten)]
    pub render: RenderArgs,
}

pub fn render_cmd(args: &RenderCmd) -> anyhow::Result<()> {
    let k = args.camera.intrinsics()?;
    let settings = args.render.settings()?;
    if extension(&args.out) != "png" {
        return Err(usage("--out must be a .png file"));
    }
    if let Some(depth) = &args.depth {
        if !matches!(extension(depth).as_str(), "png" | "pfm") {
            return Err(usage("--depth must be a .png or .pfm file"));
        }
    }
    let scene = load_scene(&args.scene)?;
    for w in scene.convention_warnings() {
        log::warn!("{w}");
    }
    let camera = CameraPose::from_world_from_camera(&args.pose);
    let frame = if args.reference {
        reference_render(&scene, &camera, &k, &settings)?
    } else {
        render(&scene, &camera, &k, &settings)?
    };
    write_png(&RgbImage::from_frame(&frame), &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    println!("wrote {} ({}x{})", args.out.display(), k.width, k.height);
    if let Some(path) = &args.depth {
        if extension(path) == "pfm" {
            let mut out = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
            write_pfm(frame.depth(), &mut out)?;
            out.flush()?;
        } else {
            write_depth_png(&frame, path).with_context(|| format!("writing {}", path.display()))?;
        }
        println!("wrote {}", path.display());
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct LidarCmd {
    /// Scene file (JSON).
    pub scene: PathBuf,
    /// Sensor pose in the world, "tx ty tz qw qx qy qz".
    #[arg(long, value_parser = pose_arg, allow_hyphen_values = true, default_value = "0 0 0 1 0 0 0")]
    pub pose: RigidTransform,
    /// Output point cloud: .pcd or .csv.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Write PCD data as ASCII instead of binary.
    #[arg(long)]
    pub ascii: bool,
    #[command(flatten)]
    pub scan: ScanArgs,
    #[command(flatten)]
    pub render: RenderArgs,
}

pub fn lidar_cmd(args: &LidarCmd) -> anyhow::Result<()> {
    let config = args.scan.config()?;
    let settings = args.render.settings()?;
    let format = extension(&args.out);
    if !matches!(format.as_str(), "pcd" | "csv") {
        return Err(usage("--out must be a .pcd or .csv file"));
    }
    let scene = load_scene(&args.scene)?;
    let scan = simulate_scan(&scene, &args.pose, &config, &settings)?;

    let mut out = BufWriter::new(File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?);
    if format == "csv" {
        write_csv(&scan, &mut out)?;
    } else {
        write_pcd(&scan, if args.ascii { PcdEncoding::Ascii } else { PcdEncoding::Binary }, &mut out)?;
    }
    out.flush()?;

    println!("points: {}", scan.len());
    for (face, s) in scan.faces.iter().enumerate() {
        println!(
            "face {face}: beams {} returned {} outside_frustum {} no_return {} clipped {}",
            s.beams, s.returned, s.outside_frustum, s.no_return, s.clipped
        );
    }
    let bins = scan.azimuth_histogram(config.azimuth_count);
    println!("azimuth bins populated: {} of {}", bins.iter().filter(|&&n| n > 0).count(), bins.len());
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct SceneCmd {
    /// Scene file (JSON).
    pub scene: PathBuf,
    /// Write the normalized scene file here.
    #[arg(long)]
    pub save: Option<PathBuf>,
}

pub fn scene_cmd(args: &SceneCmd) -> anyhow::Result<()> {
    let file = SceneFile::load(&args.scene)?;
    let scene = load_scene(&args.scene)?;
    println!("instances: {}", scene.instances.len());
    println!("primitives: {}", scene.primitive_count());
    println!("background: {:?}", scene.background());
    for m in &scene.markers {
        let t = m.pose.translation();
        println!(
            "marker id {} instance {} size {} translation [{}, {}, {}] rotation {:?}",
            m.id, m.instance, m.size, t.x, t.y, t.z, m.pose.wxyz()
        );
    }
    for w in scene.convention_warnings() {
        println!("warning: {w}");
    }
    if let Some(path) = &args.save {
        file.save(path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MetricsFormat {
    Text,
    Json,
}

#[derive(Args, Debug)]
pub struct MetricsCmd {
    /// Reference image.
    pub reference: PathBuf,
    /// Image under test.
    pub test: PathBuf,
    #[arg(long, value_enum, default_value_t = MetricsFormat::Text)]
    pub format: MetricsFormat,
}

pub fn metrics_cmd(args: &MetricsCmd) -> anyhow::Result<()> {
    let reference = read_image(&args.reference).with_context(|| format!("reading {}", args.reference.display()))?;
    let test = read_image(&args.test).with_context(|| format!("reading {}", args.test.display()))?;
    let pair = ImagePair::new(&reference, &test)?;
    let record = MetricRecord::compute(&args.reference.to_string_lossy(), &args.test.to_string_lossy(), &pair);
    match args.format {
        MetricsFormat::Text => println!("L1 {:.6}\nPSNR {:.4} dB", record.l1, record.psnr),
        MetricsFormat::Json => println!("{}", serde_json::to_string(&record)?),
    }
    Ok(())
}
