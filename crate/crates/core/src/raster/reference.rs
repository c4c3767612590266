use super::{
    camera_splat, intersect_splat, pixel_ray, splat_geometry, validate_inputs, CameraSplat, PixelResult, RenderError,
    RenderSettings, RenderedFrame,
};
use crate::assets::SceneDescription;
use crate::camera::{CameraPose, Intrinsics};

/// Brute-force renderer used as a test oracle: every pixel tests every
/// primitive, fully sorts its hits and blends them with the same cutoff and
/// transmittance rules as [`super::render`]. Intended for small scenes.
pub fn reference_render(
    scene: &SceneDescription,
    camera: &CameraPose,
    intrinsics: &Intrinsics,
    settings: &RenderSettings,
) -> Result<RenderedFrame, RenderError> {
    let rows: Vec<u32> = (0..intrinsics.height).collect();
    let pixels = reference_render_rows(scene, camera, intrinsics, settings, &rows)?.concat();
    Ok(RenderedFrame::from_pixels(intrinsics.width, intrinsics.height, pixels))
}

/// [`reference_render`] restricted to the listed image rows, returned in the
/// given order. Lets large scenes be spot-checked without a full frame.
pub fn reference_render_rows(
    scene: &SceneDescription,
    camera: &CameraPose,
    intrinsics: &Intrinsics,
    settings: &RenderSettings,
    rows: &[u32],
) -> Result<Vec<Vec<PixelResult>>, RenderError> {
    validate_inputs(camera, intrinsics, settings)?;
    if let Some(&v) = rows.iter().find(|&&v| v >= intrinsics.height) {
        return Err(RenderError::InvalidSettings(format!("row {v} outside image height {}", intrinsics.height)));
    }

    let mut splats: Vec<CameraSplat> = Vec::with_capacity(scene.primitive_count());
    for instance in &scene.instances {
        for p in instance.asset.primitives() {
            let index = splats.len() as u32;
            splats.push(camera_splat(instance, p, camera, splat_geometry(instance, p, camera), index));
        }
    }

    let background = scene.background();
    let mut out = Vec::with_capacity(rows.len());
    let mut hits: Vec<(f64, u32, f64)> = Vec::new();
    for &v in rows {
        let mut pixels = Vec::with_capacity(intrinsics.width as usize);
        for u in 0..intrinsics.width {
            let ray = pixel_ray(intrinsics, u, v);
            hits.clear();
            for s in &splats {
                if let Some(hit) = intersect_splat(&ray, &s.geometry, settings.gaussian_support) {
                    hits.push((hit.depth, s.index, s.opacity * hit.gaussian));
                }
            }
            hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

            let mut px = PixelResult::default();
            let mut transmittance = 1.0;
            let mut depth_sum = 0.0;
            for &(depth, index, alpha) in &hits {
                if alpha < settings.alpha_cutoff {
                    continue;
                }
                let w = alpha * transmittance;
                let color = splats[index as usize].color;
                for c in 0..3 {
                    px.rgb[c] += color[c] * w;
                }
                depth_sum += depth * w;
                px.alpha += w;
                transmittance *= 1.0 - alpha;
                if transmittance < settings.transmittance_floor {
                    break;
                }
            }
            for c in 0..3 {
                px.rgb[c] += transmittance * background[c];
            }
            px.depth = if px.alpha >= settings.depth_alpha_min { depth_sum / px.alpha } else { 0.0 };
            pixels.push(px);
        }
        out.push(pixels);
    }
    Ok(out)
}
