use rayon::prelude::*;

use super::{
    camera_splat, intersect_splat, pixel_ray, splat_geometry, validate_inputs, CameraSplat, PixelResult, RenderError,
    RenderSettings, RenderedFrame, SplatGeometry,
};
use crate::assets::SceneDescription;
use crate::camera::{CameraPose, Intrinsics};

/// Extra room, in pixels, around projected splat bounds.
const BOUNDS_MARGIN: f64 = 1e-3;
/// Splats whose support box reaches closer than this to the camera plane are
/// treated as covering the whole image.
const NEAR_PLANE: f64 = 1e-6;

/// Inclusive pixel rectangle `[u0, u1] × [v0, v1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct PixelRect {
    u0: u32,
    v0: u32,
    u1: u32,
    v1: u32,
}

impl PixelRect {
    fn contains(&self, u: u32, v: u32) -> bool {
        u >= self.u0 && u <= self.u1 && v >= self.v0 && v <= self.v1
    }
}

/// Conservative screen bounds of a splat's support ellipse: the projection of
/// its 3D bounding box, which contains the projected ellipse whenever the box
/// lies in front of the camera.
fn screen_bounds(g: &SplatGeometry, support: f64, k: &Intrinsics) -> Option<PixelRect> {
    let extent = (g.tangent_u * g.scale_u)
        .component_mul(&(g.tangent_u * g.scale_u))
        .zip_map(&(g.tangent_v * g.scale_v).component_mul(&(g.tangent_v * g.scale_v)), |a, b| {
            support * (a + b).sqrt()
        });
    let max_x = k.width as f64 - 1.0;
    let max_y = k.height as f64 - 1.0;
    if g.center.z + extent.z <= 0.0 {
        return None;
    }
    let (mut umin, mut umax, mut vmin, mut vmax);
    if g.center.z - extent.z <= NEAR_PLANE {
        (umin, umax, vmin, vmax) = (0.0, max_x, 0.0, max_y);
    } else {
        (umin, umax, vmin, vmax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for corner in 0..8 {
            let sx = if corner & 1 == 0 { -1.0 } else { 1.0 };
            let sy = if corner & 2 == 0 { -1.0 } else { 1.0 };
            let sz = if corner & 4 == 0 { -1.0 } else { 1.0 };
            let x = g.center.x + sx * extent.x;
            let y = g.center.y + sy * extent.y;
            let z = g.center.z + sz * extent.z;
            let u = k.fx * x / z + k.cx;
            let v = k.fy * y / z + k.cy;
            umin = umin.min(u);
            umax = umax.max(u);
            vmin = vmin.min(v);
            vmax = vmax.max(v);
        }
    }
    let u0 = (umin - BOUNDS_MARGIN).ceil().max(0.0);
    let u1 = (umax + BOUNDS_MARGIN).floor().min(max_x);
    let v0 = (vmin - BOUNDS_MARGIN).ceil().max(0.0);
    let v1 = (vmax + BOUNDS_MARGIN).floor().min(max_y);
    if !(u0 <= u1 && v0 <= v1) {
        return None;
    }
    Some(PixelRect { u0: u0 as u32, v0: v0 as u32, u1: u1 as u32, v1: v1 as u32 })
}

struct Binned {
    splat: CameraSplat,
    rect: PixelRect,
}

#[derive(Clone, Copy)]
struct Hit {
    depth: f64,
    index: u32,
    alpha: f64,
    slot: u32,
}

/// Renders `scene` from `camera` with screen-space tiling.
///
/// Produces the same per-pixel result as [`super::reference_render`]: splats are
/// culled and binned by conservative screen bounds, but every candidate is
/// still intersected per pixel and sorted by exact hit depth.
pub fn render(
    scene: &SceneDescription,
    camera: &CameraPose,
    intrinsics: &Intrinsics,
    settings: &RenderSettings,
) -> Result<RenderedFrame, RenderError> {
    validate_inputs(camera, intrinsics, settings)?;
    let support = settings.gaussian_support;

    let mut jobs = Vec::with_capacity(scene.instances.len());
    let mut next_index = 0u32;
    for instance in &scene.instances {
        jobs.push((instance, next_index));
        next_index += instance.asset.len() as u32;
    }
    let binned: Vec<Binned> = jobs
        .par_iter()
        .flat_map_iter(|&(instance, first)| {
            instance.asset.primitives().iter().enumerate().filter_map(move |(i, p)| {
                // Bounds first: culled splats never pay for SH evaluation.
                let index = first + i as u32;
                let geometry = splat_geometry(instance, p, camera);
                let rect = screen_bounds(&geometry, support, intrinsics)?;
                Some(Binned { splat: camera_splat(instance, p, camera, geometry, index), rect })
            })
        })
        .collect();

    let ts = settings.tile_size;
    let tiles_x = intrinsics.width.div_ceil(ts);
    let tiles_y = intrinsics.height.div_ceil(ts);
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); (tiles_x * tiles_y) as usize];
    for (slot, b) in binned.iter().enumerate() {
        for ty in b.rect.v0 / ts..=b.rect.v1 / ts {
            for tx in b.rect.u0 / ts..=b.rect.u1 / ts {
                bins[(ty * tiles_x + tx) as usize].push(slot as u32);
            }
        }
    }

    let tiles: Vec<(u32, Vec<PixelResult>)> = (0..tiles_x * tiles_y)
        .into_par_iter()
        .map(|tile| {
            let (tx, ty) = (tile % tiles_x, tile / tiles_x);
            let candidates = &bins[tile as usize];
            let u_end = ((tx + 1) * ts).min(intrinsics.width);
            let v_end = ((ty + 1) * ts).min(intrinsics.height);
            let mut hits: Vec<Hit> = Vec::with_capacity(candidates.len());
            let mut out = Vec::with_capacity((ts * ts) as usize);
            for v in ty * ts..v_end {
                for u in tx * ts..u_end {
                    let ray = pixel_ray(intrinsics, u, v);
                    hits.clear();
                    for &slot in candidates {
                        let b = &binned[slot as usize];
                        if !b.rect.contains(u, v) {
                            continue;
                        }
                        if let Some(hit) = intersect_splat(&ray, &b.splat.geometry, support) {
                            let alpha = b.splat.opacity * hit.gaussian;
                            if alpha >= settings.alpha_cutoff {
                                hits.push(Hit { depth: hit.depth, index: b.splat.index, alpha, slot });
                            }
                        }
                    }
                    hits.sort_unstable_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
                    out.push(composite(&hits, &binned, scene.background(), settings));
                }
            }
            (tile, out)
        })
        .collect();

    let w = intrinsics.width as usize;
    let mut pixels = vec![PixelResult::default(); intrinsics.pixel_count()];
    for (tile, out) in tiles {
        let (tx, ty) = (tile % tiles_x, tile / tiles_x);
        let u0 = (tx * ts) as usize;
        let tile_w = (((tx + 1) * ts).min(intrinsics.width) - tx * ts) as usize;
        for (i, px) in out.into_iter().enumerate() {
            let (du, dv) = (i % tile_w, i / tile_w);
            pixels[(ty * ts) as usize * w + dv * w + u0 + du] = px;
        }
    }
    Ok(RenderedFrame::from_pixels(intrinsics.width, intrinsics.height, pixels))
}

fn composite(hits: &[Hit], binned: &[Binned], background: [f64; 3], settings: &RenderSettings) -> PixelResult {
    let mut transmittance = 1.0;
    let mut rgb = [0.0; 3];
    let mut weight_sum = 0.0;
    let mut depth_sum = 0.0;
    for hit in hits {
        let color = binned[hit.slot as usize].splat.color;
        let w = hit.alpha * transmittance;
        for c in 0..3 {
            rgb[c] += color[c] * w;
        }
        depth_sum += hit.depth * w;
        weight_sum += w;
        transmittance *= 1.0 - hit.alpha;
        if transmittance < settings.transmittance_floor {
            break;
        }
    }
    for c in 0..3 {
        rgb[c] += transmittance * background[c];
    }
    let depth = if weight_sum >= settings.depth_alpha_min { depth_sum / weight_sum } else { 0.0 };
    PixelResult { rgb, depth, alpha: weight_sum }
}
