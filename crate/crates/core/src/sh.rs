//! Real spherical harmonic basis up to degree 3 and the activated texture
//! evaluation for color and opacity.
//!
//! The basis uses the hardcoded polynomial table common to splatting
//! pipelines, ordered `(l = 0..=L, m = -l..=l)`.

use nalgebra::Vector3;

use crate::scene::TexturedGaussian;

/// Highest supported SH degree.
pub const MAX_DEGREE: usize = 3;

/// `(degree + 1)^2` coefficients for a full expansion.
pub const fn coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Inverse sigmoid.
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Basis function values at one unit direction.
#[derive(Debug, Clone)]
pub struct ShBasisValues {
    values: [f64; 16],
    len: usize,
}

impl ShBasisValues {
    pub fn values(&self) -> &[f64] {
        &self.values[..self.len]
    }
}

/// Evaluates the real SH basis of the given degree at a unit direction.
///
/// Panics if `degree > 3` or `dir` is not unit-norm within 1e-6.
pub fn eval_sh_basis(degree: usize, dir: &Vector3<f64>) -> ShBasisValues {
    assert!(
        degree <= MAX_DEGREE,
        "contract violation: SH degree {degree} exceeds {MAX_DEGREE}"
    );
    let norm = dir.norm();
    assert!(
        (norm - 1.0).abs() <= 1e-6,
        "contract violation: eval_sh_basis direction norm {norm} is not 1 within 1e-6"
    );

    let (x, y, z) = (dir.x, dir.y, dir.z);
    let mut v = [0.0; 16];
    v[0] = SH_C0;
    if degree >= 1 {
        v[1] = -SH_C1 * y;
        v[2] = SH_C1 * z;
        v[3] = -SH_C1 * x;
    }
    if degree >= 2 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        v[4] = SH_C2[0] * x * y;
        v[5] = SH_C2[1] * y * z;
        v[6] = SH_C2[2] * (2.0 * zz - xx - yy);
        v[7] = SH_C2[3] * x * z;
        v[8] = SH_C2[4] * (xx - yy);
        if degree >= 3 {
            v[9] = SH_C3[0] * y * (3.0 * xx - yy);
            v[10] = SH_C3[1] * x * y * z;
            v[11] = SH_C3[2] * y * (4.0 * zz - xx - yy);
            v[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
            v[13] = SH_C3[4] * x * (4.0 * zz - xx - yy);
            v[14] = SH_C3[5] * z * (xx - yy);
            v[15] = SH_C3[6] * x * (xx - 3.0 * yy);
        }
    }
    ShBasisValues {
        values: v,
        len: coeff_count(degree),
    }
}

/// Activated color at a surface direction: per channel
/// `sigmoid(sum_k coeff[k] * basis[k])`.
///
/// `basis` must match the per-channel coefficient count of `g`.
pub fn eval_color(g: &TexturedGaussian, basis: &[f64]) -> [f64; 3] {
    let b = basis.len();
    assert_eq!(
        g.color_sh.len(),
        3 * b,
        "contract violation: basis length {b} does not match color_sh channel length {}",
        g.color_sh.len() / 3
    );
    let mut rgb = [0.0; 3];
    for (c, out) in rgb.iter_mut().enumerate() {
        let coeffs = &g.color_sh[c * b..(c + 1) * b];
        let sum: f64 = coeffs.iter().zip(basis).map(|(&a, &y)| a * y).sum();
        *out = sigmoid(sum);
    }
    rgb
}

/// Activated opacity at a surface direction.
pub fn eval_opacity(g: &TexturedGaussian, basis: &[f64]) -> f64 {
    assert_eq!(
        g.opacity_sh.len(),
        basis.len(),
        "contract violation: basis length {} does not match opacity_sh length {}",
        basis.len(),
        g.opacity_sh.len()
    );
    let sum: f64 = g.opacity_sh.iter().zip(basis).map(|(&a, &y)| a * y).sum();
    sigmoid(sum)
}
