//! Real spherical-harmonic color evaluation (degrees 0 to 3), in the band
//! convention used by splat trainers: `color = clamp(0.5 + Σ c_lm Y_lm(dir), 0, 1)`.

use nalgebra::Vector3;

use super::RenderError;

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
pub const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
pub const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Unclamped SH expansion without the +0.5 offset. `dir` must be unit length.
pub fn sh_radiance(sh: &[[f64; 3]], dir: &Vector3<f64>) -> [f64; 3] {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let mut basis = [0.0f64; 16];
    basis[0] = SH_C0;
    if sh.len() > 1 {
        basis[1] = -SH_C1 * y;
        basis[2] = SH_C1 * z;
        basis[3] = -SH_C1 * x;
    }
    if sh.len() > 4 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        basis[4] = SH_C2[0] * x * y;
        basis[5] = SH_C2[1] * y * z;
        basis[6] = SH_C2[2] * (2.0 * zz - xx - yy);
        basis[7] = SH_C2[3] * x * z;
        basis[8] = SH_C2[4] * (xx - yy);
        if sh.len() > 9 {
            basis[9] = SH_C3[0] * y * (3.0 * xx - yy);
            basis[10] = SH_C3[1] * x * y * z;
            basis[11] = SH_C3[2] * y * (4.0 * zz - xx - yy);
            basis[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
            basis[13] = SH_C3[4] * x * (4.0 * zz - xx - yy);
            basis[14] = SH_C3[5] * z * (xx - yy);
            basis[15] = SH_C3[6] * x * (xx - 3.0 * yy);
        }
    }
    let mut out = [0.0; 3];
    for (coeff, b) in sh.iter().zip(basis.iter()) {
        for c in 0..3 {
            out[c] += b * coeff[c];
        }
    }
    out
}

/// Evaluates view-dependent color for a viewing direction (normalized here).
pub fn eval_sh(sh: &[[f64; 3]], view_dir: &Vector3<f64>) -> Result<[f64; 3], RenderError> {
    let norm = view_dir.norm();
    if !(norm > 1e-12) || !norm.is_finite() {
        return Err(RenderError::ZeroDirection);
    }
    Ok(color_from_radiance(sh_radiance(sh, &(view_dir / norm))))
}

pub(crate) fn color_from_radiance(r: [f64; 3]) -> [f64; 3] {
    r.map(|v| (v + 0.5).clamp(0.0, 1.0))
}

/// Base color of a degree-0 coefficient triple.
pub fn dc_to_color(dc: [f64; 3]) -> [f64; 3] {
    color_from_radiance(dc.map(|v| SH_C0 * v))
}

/// Inverse of [`dc_to_color`] for colors in `[0, 1]`.
pub fn color_to_dc(color: [f64; 3]) -> [f64; 3] {
    color.map(|c| (c - 0.5) / SH_C0)
}
