use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{ArgMatches, Args};
use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use splatsim_core::assets::{crop_aabb, read_ply_file, rescale_asset, transform_asset, write_ply_file, SplatAsset};
use splatsim_core::geometry::RigidTransform;
use splatsim_core::imaging::{read_image, write_png};
use splatsim_core::markers::{binary_image, checkerboard, id_pattern, image_to_splat, MarkerSpec, DEFAULT_OPACITY, DEFAULT_SIGMA_RATIO};

use crate::args::{numbers, usage};

#[derive(Args, Debug)]
pub struct InfoArgs {
    /// Splat asset (binary little-endian PLY).
    pub asset: PathBuf,
}

pub fn info(args: &InfoArgs) -> anyhow::Result<()> {
    let asset = read_ply_file(&args.asset).with_context(|| format!("reading {}", args.asset.display()))?;
    print!("{}", report(&asset));
    Ok(())
}

fn summary(values: &mut [f64]) -> String {
    if values.is_empty() {
        return "n/a".into();
    }
    values.sort_by(f64::total_cmp);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    format!("min {:.6} median {:.6} mean {:.6} max {:.6}", values[0], values[values.len() / 2], mean, values[values.len() - 1])
}

pub fn report(asset: &SplatAsset) -> String {
    let mut out = format!("name: {}\nprimitives: {}\nsh_degree: {}\n", asset.name, asset.len(), asset.sh_degree());
    match asset.center_bounds() {
        Some((lo, hi)) => out += &format!("bounds: [{:.6}, {:.6}, {:.6}] .. [{:.6}, {:.6}, {:.6}]\n", lo.x, lo.y, lo.z, hi.x, hi.y, hi.z),
        None => out += "bounds: empty\n",
    }
    let mut opacity: Vec<f64> = asset.primitives().iter().map(|p| p.opacity).collect();
    let mut scales: Vec<f64> = asset.primitives().iter().flat_map(|p| p.scales()).collect();
    out += &format!("opacity: {}\nscale: {}\n", summary(&mut opacity), summary(&mut scales));
    out
}

/// One step of `transform`, applied in command-line order.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Scale(f64),
    Rigid(RigidTransform),
    Crop { min: [f64; 3], max: [f64; 3], inside: bool },
}

impl std::fmt::Display for Op {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Op::Scale(s) => write!(f, "scale {s}"),
            Op::Rigid(t) => {
                let v = t.translation();
                write!(f, "rigid translation [{}, {}, {}] rotation {:?}", v.x, v.y, v.z, t.wxyz())
            }
            Op::Crop { min, max, inside } => {
                write!(f, "crop {} {min:?} .. {max:?}", if *inside { "inside" } else { "outside" })
            }
        }
    }
}

#[derive(Args, Debug)]
pub struct TransformArgs {
    /// Input PLY.
    pub input: PathBuf,
    /// Output PLY.
    pub output: PathBuf,
    /// Uniform scale factor.
    #[arg(long, allow_hyphen_values = true)]
    pub scale: Vec<String>,
    /// Rotation about the origin as "qw qx qy qz".
    #[arg(long, allow_hyphen_values = true)]
    pub rotate: Vec<String>,
    /// Translation "x y z".
    #[arg(long, allow_hyphen_values = true)]
    pub translate: Vec<String>,
    /// Keep primitives with centers inside "minx miny minz maxx maxy maxz".
    #[arg(long, allow_hyphen_values = true)]
    pub crop: Vec<String>,
    /// Keep primitives with centers outside the box.
    #[arg(long, allow_hyphen_values = true)]
    pub crop_outside: Vec<String>,
}

fn parse_op(id: &str, text: &str) -> Result<Op, String> {
    match id {
        "scale" => {
            let [s] = numbers::<1>(text)?;
            if !(s.is_finite() && s > 0.0) {
                return Err(format!("scale must be positive and finite, got {s}"));
            }
            Ok(Op::Scale(s))
        }
        "rotate" => {
            let [w, x, y, z] = numbers::<4>(text)?;
            let q = Quaternion::new(w, x, y, z);
            if !(q.norm() > 1e-12) || !q.coords.iter().all(|c| c.is_finite()) {
                return Err(format!("degenerate rotation quaternion {text:?}"));
            }
            Ok(Op::Rigid(RigidTransform::from_rotation(UnitQuaternion::from_quaternion(q))))
        }
        "translate" => {
            let t = numbers::<3>(text)?;
            if !t.iter().all(|c| c.is_finite()) {
                return Err(format!("non-finite translation {text:?}"));
            }
            Ok(Op::Rigid(RigidTransform::from_translation(Vector3::from(t))))
        }
        _ => {
            let b = numbers::<6>(text)?;
            let (min, max) = ([b[0], b[1], b[2]], [b[3], b[4], b[5]]);
            if (0..3).any(|i| !(min[i] <= max[i])) {
                return Err(format!("crop box min must not exceed max: {text:?}"));
            }
            Ok(Op::Crop { min, max, inside: id == "crop" })
        }
    }
}

/// Steps in the order they appeared on the command line.
pub fn ordered_ops(matches: &ArgMatches) -> anyhow::Result<Vec<Op>> {
    let mut ops = Vec::new();
    for id in ["scale", "rotate", "translate", "crop", "crop_outside"] {
        let (Some(values), Some(indices)) = (matches.get_many::<String>(id), matches.indices_of(id)) else { continue };
        for (text, index) in values.zip(indices) {
            let op = parse_op(id, text).map_err(|e| usage(format!("--{}: {e}", id.replace('_', "-"))))?;
            ops.push((index, op));
        }
    }
    ops.sort_by_key(|(index, _)| *index);
    Ok(ops.into_iter().map(|(_, op)| op).collect())
}

pub fn apply(asset: &SplatAsset, op: &Op) -> anyhow::Result<SplatAsset> {
    Ok(match op {
        Op::Scale(s) => rescale_asset(asset, *s)?,
        Op::Rigid(t) => transform_asset(asset, t),
        Op::Crop { min, max, inside } => crop_aabb(asset, *min, *max, *inside)?,
    })
}

pub fn transform(args: &TransformArgs, matches: &ArgMatches) -> anyhow::Result<()> {
    let ops = ordered_ops(matches)?;
    let mut asset = read_ply_file(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    println!("input: {} primitives", asset.len());
    for op in &ops {
        asset = apply(&asset, op)?;
        println!("{op}: {} primitives", asset.len());
    }
    let report = write_ply_file(&asset, &args.output).with_context(|| format!("writing {}", args.output.display()))?;
    if report.clamped_opacities > 0 {
        log::warn!("{} opacities clamped to a finite logit", report.clamped_opacities);
    }
    println!("wrote {} ({} primitives)", args.output.display(), asset.len());
    Ok(())
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["image", "checkerboard", "id"]))]
pub struct MarkerArgs {
    /// Output PLY asset.
    pub output: PathBuf,
    /// Marker image (PNG or PGM/PPM), one splat per pixel.
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Generate an N×N checkerboard.
    #[arg(long, value_name = "N")]
    pub checkerboard: Option<u32>,
    /// Generate a bordered binary id pattern.
    #[arg(long)]
    pub id: Option<u32>,
    /// Payload cells per side for --id.
    #[arg(long, default_value_t = 6, requires = "id")]
    pub payload: u32,
    /// Printed marker width in meters.
    #[arg(long)]
    pub size: f64,
    /// Gaussian σ as a fraction of the cell pitch.
    #[arg(long, default_value_t = DEFAULT_SIGMA_RATIO)]
    pub sigma_ratio: f64,
    #[arg(long, default_value_t = DEFAULT_OPACITY)]
    pub opacity: f64,
    /// Also write the source pattern as a PNG, scaled to this many pixels per cell.
    #[arg(long, value_name = "PATH")]
    pub png: Option<PathBuf>,
    #[arg(long, default_value_t = 32, value_name = "PIXELS")]
    pub png_cell: u32,
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "marker".into())
}

pub fn marker(args: &MarkerArgs) -> anyhow::Result<()> {
    let image = if let Some(path) = &args.image {
        read_image(path).with_context(|| format!("reading {}", path.display()))?
    } else {
        let (n, cells) = match (args.checkerboard, args.id) {
            (Some(n), _) if n == 0 => return Err(usage("--checkerboard must be positive")),
            (Some(n), _) => (n, checkerboard(n)),
            (_, Some(id)) => {
                if args.payload == 0 || args.payload > 8 {
                    return Err(usage("--payload must be in 1..=8"));
                }
                id_pattern(id, args.payload)
            }
            _ => unreachable!("clap requires one source"),
        };
        binary_image(n, n, &cells)?
    };
    let spec = MarkerSpec { sigma_ratio: args.sigma_ratio, opacity: args.opacity, ..MarkerSpec::new(image, args.size) };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let asset = image_to_splat(&spec, &stem(&args.output))?;
    write_ply_file(&asset, &args.output).with_context(|| format!("writing {}", args.output.display()))?;
    println!("wrote {} ({} primitives, pitch {:.6} m)", args.output.display(), asset.len(), spec.pitch());
    if let Some(png) = &args.png {
        write_png(&upscale(&spec.image, args.png_cell)?, png).with_context(|| format!("writing {}", png.display()))?;
        println!("wrote {}", png.display());
    }
    Ok(())
}

/// Nearest-neighbour enlargement by an integer factor.
fn upscale(image: &splatsim_core::imaging::RgbImage, factor: u32) -> anyhow::Result<splatsim_core::imaging::RgbImage> {
    if factor == 0 {
        return Err(usage("--png-cell must be positive"));
    }
    let (w, h) = (image.width() * factor, image.height() * factor);
    let data = (0..h).flat_map(|v| (0..w).map(move |u| (u, v))).map(|(u, v)| image.get(u / factor, v / factor)).collect();
    Ok(splatsim_core::imaging::RgbImage::new(w, h, data)?)
}
