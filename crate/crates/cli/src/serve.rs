use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::Args;

use splatsim_core::scene_file::load_scene;
use splatsim_core::service::{SceneBackend, Service, ServiceConfig};

use crate::args::{usage, RenderArgs};

#[derive(Args, Debug)]
pub struct ServeCmd {
    /// Scene file (JSON).
    pub scene: PathBuf,
    /// TOML service config; flags and environment variables take precedence.
    #[arg(long, env = "SPLATSIM_CONFIG")]
    pub config: Option<PathBuf>,
    /// Listen address, e.g. 127.0.0.1:7447 (port 0 picks a free port).
    #[arg(long, env = "SPLATSIM_BIND")]
    pub bind: Option<String>,
    /// Maximum concurrently registered sensors.
    #[arg(long, env = "SPLATSIM_MAX_CAMERAS")]
    pub max_cameras: Option<usize>,
    #[command(flatten)]
    pub render: RenderArgs,
}

pub fn service_config(args: &ServeCmd) -> anyhow::Result<ServiceConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
        }
        None => ServiceConfig::default(),
    };
    if let Some(bind) = &args.bind {
        config.bind = bind.clone();
    }
    if let Some(n) = args.max_cameras {
        config.max_cameras = n;
    }
    if config.max_cameras == 0 {
        return Err(usage("max_cameras must be positive"));
    }
    config.scan.validate().map_err(|e| usage(format!("invalid scan config: {e}")))?;
    Ok(config)
}

pub fn serve(args: &ServeCmd) -> anyhow::Result<()> {
    let config = service_config(args)?;
    let settings = args.render.settings()?;
    let scene = load_scene(&args.scene)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let bind = config.bind.clone();
        let service = Service::bind(config, Arc::new(SceneBackend::new(scene, settings)))
            .await
            .with_context(|| format!("binding {bind}"))?;
        println!("listening on {}", service.local_addr()?);
        std::io::stdout().flush()?;
        service
            .run_until(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await;
        log::info!("shutting down");
        Ok(())
    })
}
