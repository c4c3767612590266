//! `splatsim` command-line tool.
//!
//! Poses are written `"tx ty tz qw qx qy qz"` everywhere (quaternion normalized).
//! Exit codes: 0 success, 1 usage error, 2 data error.

mod args;
mod asset_cmds;
mod sensor_cmds;
mod serve;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use args::UsageError;

#[derive(Parser, Debug)]
#[command(name = "splatsim", version, about = "Gaussian-splat sensor simulation", long_about = None)]
#[command(after_help = "Poses: \"tx ty tz qw qx qy qz\". Logging: RUST_LOG (default warn).\n\
Exit codes: 0 success, 1 usage error, 2 data error.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Summarize a splat asset.
    Info(asset_cmds::InfoArgs),
    /// Rescale, rotate, translate or crop an asset; steps run in flag order.
    Transform(asset_cmds::TransformArgs),
    /// Build a planar marker asset from an image or a generated pattern.
    Marker(asset_cmds::MarkerArgs),
    /// Load a scene file and list its instances and marker ground truth.
    Scene(sensor_cmds::SceneCmd),
    /// Render RGB and optional depth images of a scene.
    Render(sensor_cmds::RenderCmd),
    /// Simulate a 360° LiDAR scan and write it as PCD or CSV.
    Lidar(sensor_cmds::LidarCmd),
    /// L1 and PSNR between two images.
    Metrics(sensor_cmds::MetricsCmd),
    /// Serve camera and LiDAR streams over TCP until interrupted.
    Serve(serve::ServeCmd),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => return clap_exit(e),
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => return clap_exit(e),
    };
    let result = match &cli.command {
        Command::Info(a) => asset_cmds::info(a),
        Command::Transform(a) => asset_cmds::transform(a, matches.subcommand_matches("transform").expect("transform matches")),
        Command::Marker(a) => asset_cmds::marker(a),
        Command::Scene(a) => sensor_cmds::scene_cmd(a),
        Command::Render(a) => sensor_cmds::render_cmd(a),
        Command::Lidar(a) => sensor_cmds::lidar_cmd(a),
        Command::Metrics(a) => sensor_cmds::metrics_cmd(a),
        Command::Serve(a) => serve::serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn clap_exit(e: clap::Error) -> ExitCode {
    let _ = e.print();
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
        _ => ExitCode::from(1),
    }
}
