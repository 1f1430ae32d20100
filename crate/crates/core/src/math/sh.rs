//! Real spherical harmonics up to degree 3, as used for view-dependent colour.

use nalgebra::Vector3;

pub const SH_COEFFS: usize = 16;
pub const MAX_SH_DEGREE: u32 = 3;

// Standard real SH normalisation constants, with the sign convention of the
// common splatting checkpoint layout.
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

/// Added to the SH sum so that all-zero coefficients render mid-grey.
pub const SH_COLOR_OFFSET: f64 = 0.5;

pub fn num_coeffs(degree: u32) -> usize {
    let d = degree.min(MAX_SH_DEGREE) as usize + 1;
    d * d
}

/// Basis values at `dir`.
pub fn basis(dir: &Vector3<f64>) -> [f64; SH_COEFFS] {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    [
        SH_C0,
        -SH_C1 * y,
        SH_C1 * z,
        -SH_C1 * x,
        SH_C2[0] * x * y,
        SH_C2[1] * y * z,
        SH_C2[2] * (2.0 * zz - xx - yy),
        SH_C2[3] * x * z,
        SH_C2[4] * (xx - yy),
        SH_C3[0] * y * (3.0 * xx - yy),
        SH_C3[1] * x * y * z,
        SH_C3[2] * y * (4.0 * zz - xx - yy),
        SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
        SH_C3[4] * x * (4.0 * zz - xx - yy),
        SH_C3[5] * z * (xx - yy),
        SH_C3[6] * x * (xx - 3.0 * yy),
    ]
}

/// Partial derivatives of each basis function with respect to `(x, y, z)`.
pub fn basis_grad(dir: &Vector3<f64>) -> [[f64; 3]; SH_COEFFS] {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let s = |c: f64, g: [f64; 3]| g.map(|v| c * v);
    [
        [0.0; 3],
        [0.0, -SH_C1, 0.0],
        [0.0, 0.0, SH_C1],
        [-SH_C1, 0.0, 0.0],
        s(SH_C2[0], [y, x, 0.0]),
        s(SH_C2[1], [0.0, z, y]),
        s(SH_C2[2], [-2.0 * x, -2.0 * y, 4.0 * z]),
        s(SH_C2[3], [z, 0.0, x]),
        s(SH_C2[4], [2.0 * x, -2.0 * y, 0.0]),
        s(SH_C3[0], [6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0]),
        s(SH_C3[1], [y * z, x * z, x * y]),
        s(SH_C3[2], [-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z]),
        s(SH_C3[3], [-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy]),
        s(SH_C3[4], [4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z]),
        s(SH_C3[5], [2.0 * x * z, -2.0 * y * z, xx - yy]),
        s(SH_C3[6], [3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0]),
    ]
}

fn raw_color(coeffs: &[[f64; 3]; SH_COEFFS], b: &[f64; SH_COEFFS], n: usize) -> [f64; 3] {
    let mut c = [SH_COLOR_OFFSET; 3];
    for k in 0..n {
        for ch in 0..3 {
            c[ch] += coeffs[k][ch] * b[k];
        }
    }
    c
}

/// Colour seen along the unit direction `dir`: SH sum + 0.5, clamped at 0.
pub fn eval_sh(coeffs: &[[f64; 3]; SH_COEFFS], dir: &Vector3<f64>, degree_active: u32) -> [f64; 3] {
    debug_assert!((dir.norm() - 1.0).abs() <= 1e-6, "SH direction must be unit length");
    raw_color(coeffs, &basis(dir), num_coeffs(degree_active)).map(|v| v.max(0.0))
}

/// Returns gradients with respect to the coefficients and to `dir` (treated
/// as a free 3-vector; normalisation is the caller's concern).
pub fn eval_sh_backward(
    coeffs: &[[f64; 3]; SH_COEFFS],
    dir: &Vector3<f64>,
    degree_active: u32,
    d_color: &[f64; 3],
) -> ([[f64; 3]; SH_COEFFS], Vector3<f64>) {
    let n = num_coeffs(degree_active);
    let b = basis(dir);
    let raw = raw_color(coeffs, &b, n);
    let dc: [f64; 3] = [0, 1, 2].map(|ch| if raw[ch] < 0.0 { 0.0 } else { d_color[ch] });

    let mut d_coeffs = [[0.0; 3]; SH_COEFFS];
    for k in 0..n {
        for ch in 0..3 {
            d_coeffs[k][ch] = b[k] * dc[ch];
        }
    }
    let grads = basis_grad(dir);
    let mut d_dir = Vector3::zeros();
    for k in 1..n {
        let w: f64 = (0..3).map(|ch| coeffs[k][ch] * dc[ch]).sum();
        d_dir += Vector3::from(grads[k]) * w;
    }
    (d_coeffs, d_dir)
}
