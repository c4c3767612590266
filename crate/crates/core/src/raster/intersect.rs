use nalgebra::Vector3;

/// A ray with unit-length direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
}

impl Ray {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: Vector3<f64>, direction: Vector3<f64>) -> Self {
        Self { origin, direction: direction.normalize() }
    }
}

/// A splat's placement in the frame the ray is expressed in. The tangents are
/// unit length and orthogonal; `normal = tangent_u × tangent_v`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplatGeometry {
    pub center: Vector3<f64>,
    pub tangent_u: Vector3<f64>,
    pub tangent_v: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub scale_u: f64,
    pub scale_v: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplatHit {
    /// Gaussian value `exp(-(u² + v²) / 2)` at the hit, in units of the splat scales.
    pub gaussian: f64,
    /// Distance of the hit from the ray origin along the z axis (z-depth).
    pub depth: f64,
    /// Ray parameter of the hit.
    pub t: f64,
    /// Hit position in splat-local normalized coordinates.
    pub local: [f64; 2],
}

/// Rays closer than this to parallel with the splat plane miss.
pub const PARALLEL_EPS: f64 = 1e-9;

/// Intersects `ray` with the plane of `splat` and evaluates the Gaussian there.
///
/// Misses when the plane is (nearly) parallel to the ray, the hit lies behind the
/// origin, or the hit falls outside the `support`-sigma ellipse.
pub fn intersect_splat(ray: &Ray, splat: &SplatGeometry, support: f64) -> Option<SplatHit> {
    let denom = splat.normal.dot(&ray.direction);
    if denom.abs() < PARALLEL_EPS {
        return None;
    }
    let t = splat.normal.dot(&(splat.center - ray.origin)) / denom;
    if !(t > 0.0) {
        return None;
    }
    let rel = ray.origin + ray.direction * t - splat.center;
    let lu = rel.dot(&splat.tangent_u) / splat.scale_u;
    let lv = rel.dot(&splat.tangent_v) / splat.scale_v;
    let r2 = lu * lu + lv * lv;
    if r2 > support * support {
        return None;
    }
    Some(SplatHit { gaussian: (-0.5 * r2).exp(), depth: t * ray.direction.z, t, local: [lu, lv] })
}
