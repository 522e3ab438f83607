//! Analytic backward pass: per-pixel loss gradients into per-splat color
//! and opacity SH coefficient gradients. Geometry is frozen, so nothing
//! flows to position, rotation, scale, or the surface direction.
//!
//! Per pixel the compositing derivative is computed by a back-to-front
//! suffix recurrence over the recorded contributions:
//! `dC/da_i = T_i * (c_i - D_i)` with
//! `D_i = a_{i+1} c_{i+1} + (1 - a_{i+1}) D_{i+1}` and `D_N = background`,
//! which avoids any division by `1 - a` and stays finite for saturated
//! splats.

use rayon::prelude::*;

use crate::rasterizer::{FrameBuffer, PixelContribution};
use crate::scene::SceneModel;

/// Per-splat gradient accumulators, flat and index-aligned with the scene.
#[derive(Debug, Clone)]
pub struct GradBuffer {
    /// `color[g * 3 * bc + c * bc + k]`
    pub color: Vec<f64>,
    /// `opacity[g * bo + k]`
    pub opacity: Vec<f64>,
    bc: usize,
    bo: usize,
}

impl GradBuffer {
    pub fn zeros(scene: &SceneModel) -> GradBuffer {
        let bc = scene.color_coeffs();
        let bo = scene.opacity_coeffs();
        GradBuffer {
            color: vec![0.0; scene.gaussians.len() * 3 * bc],
            opacity: vec![0.0; scene.gaussians.len() * bo],
            bc,
            bo,
        }
    }

    pub fn color_grad(&self, gaussian: usize) -> &[f64] {
        &self.color[gaussian * 3 * self.bc..(gaussian + 1) * 3 * self.bc]
    }

    pub fn opacity_grad(&self, gaussian: usize) -> &[f64] {
        &self.opacity[gaussian * self.bo..(gaussian + 1) * self.bo]
    }

    fn add_assign(&mut self, other: &GradBuffer) {
        for (a, b) in self.color.iter_mut().zip(&other.color) {
            *a += b;
        }
        for (a, b) in self.opacity.iter_mut().zip(&other.opacity) {
            *a += b;
        }
    }
}

fn pixel_backward(
    contribs: &[PixelContribution],
    upstream: [f64; 3],
    background: [f64; 3],
    grads: &mut GradBuffer,
) {
    let n = contribs.len();
    if n == 0 {
        return;
    }
    let (bc, bo) = (grads.bc, grads.bo);

    // Transmittance in front of each contribution, re-derived with the
    // same recurrence the forward pass used.
    let mut trans = Vec::with_capacity(n);
    let mut t = 1.0;
    for ct in contribs {
        trans.push(t);
        t *= 1.0 - ct.opacity * ct.gauss;
    }

    let mut suffix = background;
    for i in (0..n).rev() {
        let ct = &contribs[i];
        let alpha_eff = ct.opacity * ct.gauss;

        let mut dl_dalpha_eff = 0.0;
        for c in 0..3 {
            dl_dalpha_eff += upstream[c] * trans[i] * (ct.color[c] - suffix[c]);

            // Color chain: dL/dc = upstream * w, then the sigmoid derivative
            // and the recorded basis values.
            let du = upstream[c] * ct.weight * ct.color[c] * (1.0 - ct.color[c]);
            let row = &mut grads.color[ct.gaussian * 3 * bc + c * bc..][..bc];
            for (k, slot) in row.iter_mut().enumerate() {
                *slot += du * ct.basis[k];
            }
        }

        let dv = dl_dalpha_eff * ct.gauss * ct.opacity * (1.0 - ct.opacity);
        let row = &mut grads.opacity[ct.gaussian * bo..][..bo];
        for (k, slot) in row.iter_mut().enumerate() {
            *slot += dv * ct.basis[k];
        }

        for c in 0..3 {
            suffix[c] = alpha_eff * ct.color[c] + (1.0 - alpha_eff) * suffix[c];
        }
    }
}

/// Accumulates loss gradients for the whole frame.
///
/// Rows are processed independently and the per-row buffers are reduced in
/// row order, so the result is identical for any thread count; `parallel:
/// false` forces sequential row processing.
///
/// Panics if the frame buffer was rendered without contribution recording.
pub fn backward(
    fb: &FrameBuffer,
    pixel_grad: &[[f64; 3]],
    scene: &SceneModel,
    parallel: bool,
) -> GradBuffer {
    let contributions = fb
        .contributions
        .as_ref()
        .expect("contract violation: backward requires recorded contributions");
    let width = fb.color.width;
    let height = fb.color.height;
    assert_eq!(
        pixel_grad.len(),
        width * height,
        "contract violation: pixel gradient size mismatch"
    );

    let row_job = |y: usize| {
        let mut grads = GradBuffer::zeros(scene);
        for x in 0..width {
            let idx = y * width + x;
            pixel_backward(&contributions[idx], pixel_grad[idx], fb.background, &mut grads);
        }
        grads
    };

    let row_grads: Vec<GradBuffer> = if parallel {
        (0..height).into_par_iter().map(row_job).collect()
    } else {
        (0..height).map(row_job).collect()
    };

    let mut total = GradBuffer::zeros(scene);
    for g in &row_grads {
        total.add_assign(g);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::loss;
    use crate::rasterizer::{render, RenderOptions};
    use crate::scene::{Camera, EllipsoidScaleMode, ImageRgb, TexturedGaussian};
    use crate::sh::SH_C0;
    use nalgebra::{Matrix3, UnitQuaternion, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn camera(size: usize) -> Camera {
        Camera::new(
            size,
            size,
            9.0,
            9.0,
            size as f64 / 2.0,
            size as f64 / 2.0,
            Matrix3::identity(),
            Vector3::zeros(),
        )
        .unwrap()
    }

    fn random_scene(rng: &mut impl Rng, count: usize, degree: usize) -> SceneModel {
        let b = crate::sh::coeff_count(degree);
        let gaussians = (0..count)
            .map(|_| {
                let mut color_sh = vec![0.0; 3 * b];
                let mut opacity_sh = vec![0.0; b];
                for v in color_sh.iter_mut().chain(opacity_sh.iter_mut()) {
                    *v = rng.random_range(-1.5..1.5);
                }
                opacity_sh[0] = rng.random_range(0.5..3.0);
                TexturedGaussian {
                    position: Vector3::new(
                        rng.random_range(-0.8..0.8),
                        rng.random_range(-0.8..0.8),
                        rng.random_range(2.5..5.0),
                    ),
                    rotation: UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    )),
                    scale: Vector3::new(
                        rng.random_range(0.15..0.5),
                        rng.random_range(0.15..0.5),
                        rng.random_range(0.15..0.5),
                    ),
                    color_sh,
                    opacity_sh,
                }
            })
            .collect();
        SceneModel::new(gaussians, degree, degree, EllipsoidScaleMode::SqrtScale).unwrap()
    }

    fn record_opts() -> RenderOptions {
        RenderOptions {
            record_contributions: true,
            t_stop: 0.0,
            ..RenderOptions::default()
        }
    }

    /// Target offset from the render so no L1 kink sits near zero.
    fn offset_target(rng: &mut impl Rng, base: &ImageRgb) -> ImageRgb {
        let mut img = base.clone();
        for v in &mut img.data {
            let u: f64 = rng.random_range(0.05..0.35);
            *v = if *v < 0.5 { *v + u } else { *v - u };
        }
        img
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let scene = random_scene(&mut rng, 4, 1);
        let cam = camera(12);
        let fb = render(&scene, &cam, &record_opts());
        let zeros = vec![[0.0; 3]; 12 * 12];
        let grads = backward(&fb, &zeros, &scene, false);
        assert!(grads.color.iter().all(|&g| g == 0.0));
        assert!(grads.opacity.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn backward_is_linear_in_the_pixel_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let scene = random_scene(&mut rng, 4, 1);
        let cam = camera(12);
        let fb = render(&scene, &cam, &record_opts());
        let upstream: Vec<[f64; 3]> = (0..12 * 12)
            .map(|_| {
                [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]
            })
            .collect();
        let scaled: Vec<[f64; 3]> = upstream
            .iter()
            .map(|p| [4.0 * p[0], 4.0 * p[1], 4.0 * p[2]])
            .collect();
        let g1 = backward(&fb, &upstream, &scene, false);
        let g4 = backward(&fb, &scaled, &scene, false);
        for (a, b) in g1.color.iter().zip(&g4.color) {
            assert!((4.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        for (a, b) in g1.opacity.iter().zip(&g4.opacity) {
            assert!((4.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn invisible_splat_gets_exactly_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let mut scene = random_scene(&mut rng, 3, 1);
        // Move one splat behind the camera.
        scene.gaussians[1].position = Vector3::new(0.0, 0.0, -4.0);
        let cam = camera(12);
        let fb = render(&scene, &cam, &record_opts());
        let upstream = vec![[1.0, -0.5, 0.25]; 12 * 12];
        let grads = backward(&fb, &upstream, &scene, false);
        assert!(grads.color_grad(1).iter().all(|&g| g == 0.0));
        assert!(grads.opacity_grad(1).iter().all(|&g| g == 0.0));
        assert!(grads.color_grad(0).iter().any(|&g| g != 0.0));
    }

    #[test]
    fn saturated_opacity_kills_its_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let mut scene = random_scene(&mut rng, 1, 0);
        scene.gaussians[0].opacity_sh[0] = 40.0 / SH_C0;
        let cam = camera(12);
        let fb = render(&scene, &cam, &record_opts());
        let upstream = vec![[1.0, 1.0, 1.0]; 12 * 12];
        let grads = backward(&fb, &upstream, &scene, false);
        assert!(grads.opacity_grad(0).iter().all(|&g| g.abs() < 1e-12));
    }

    #[test]
    fn parallel_backward_matches_sequential_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let scene = random_scene(&mut rng, 6, 2);
        let cam = camera(16);
        let fb = render(&scene, &cam, &record_opts());
        let upstream: Vec<[f64; 3]> = (0..16 * 16)
            .map(|_| {
                [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]
            })
            .collect();
        let a = backward(&fb, &upstream, &scene, true);
        let b = backward(&fb, &upstream, &scene, false);
        assert_eq!(a.color, b.color);
        assert_eq!(a.opacity, b.opacity);
    }

    #[test]
    fn coefficient_gradients_match_finite_differences() {
        // Compact end-to-end check; the acceptance suite runs the full
        // 20-scene version.
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let scene = random_scene(&mut rng, 3, 1);
        let cam = camera(10);
        let fb = render(&scene, &cam, &record_opts());
        let target = offset_target(&mut rng, &fb.color);
        let (_, pixel_grad) = loss(&fb.color, &target, 0.2).unwrap();
        let grads = backward(&fb, &pixel_grad, &scene, false);

        let h = 1e-4;
        let mut checked = 0;
        for gi in 0..scene.gaussians.len() {
            for slot in 0..(3 * 4 + 4) {
                let probe = |s: f64| {
                    let mut sc = scene.clone();
                    if slot < 12 {
                        sc.gaussians[gi].color_sh[slot] += s;
                    } else {
                        sc.gaussians[gi].opacity_sh[slot - 12] += s;
                    }
                    let fb = render(&sc, &cam, &record_opts());
                    loss(&fb.color, &target, 0.2).unwrap().0.total
                };
                let fd = (probe(h) - probe(-h)) / (2.0 * h);
                let analytic = if slot < 12 {
                    grads.color_grad(gi)[slot]
                } else {
                    grads.opacity_grad(gi)[slot - 12]
                };
                let scale = fd.abs().max(analytic.abs());
                if scale < 1e-6 {
                    assert!((fd - analytic).abs() < 1e-8);
                } else {
                    assert!(
                        (fd - analytic).abs() / scale < 1e-4,
                        "gaussian {gi} slot {slot}: fd {fd:.9e} analytic {analytic:.9e}"
                    );
                }
                checked += 1;
            }
        }
        assert_eq!(checked, 3 * 16);
    }
}
