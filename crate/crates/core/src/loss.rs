//! Training loss (L1 + D-SSIM) with its analytic per-pixel gradient, plus
//! PSNR/SSIM metrics.
//!
//! SSIM uses an 11x11 Gaussian window (sigma 1.5), constants
//! C1 = 0.01^2 and C2 = 0.03^2, reflect padding, computed per channel and
//! averaged. The gradient goes through the exact adjoint of the padded
//! convolution so it matches finite differences to rounding error, and its
//! terms are arranged to cancel exactly when both images are bit-identical
//! (so a converged fixed point receives a zero optimizer step).

use crate::error::Error;
use crate::scene::ImageRgb;
use crate::Result;

const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Loss terms for one rendered/target pair.
#[derive(Debug, Clone, Copy)]
pub struct LossReport {
    pub total: f64,
    pub l1: f64,
    pub dssim: f64,
    pub lambda: f64,
}

fn gaussian_window() -> [f64; WINDOW] {
    let mut w = [0.0; WINDOW];
    let half = (WINDOW / 2) as isize;
    let mut sum = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        let d = (i as isize - half) as f64;
        *v = (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Half-sample symmetric reflection of an out-of-range index.
fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Separable reflect-padded blur, horizontal then vertical pass.
fn blur(src: &[f64], width: usize, height: usize, kernel: &[f64; WINDOW]) -> Vec<f64> {
    let half = (WINDOW / 2) as isize;
    let mut mid = vec![0.0; width * height];
    for y in 0..height {
        let row = &src[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (k, &g) in kernel.iter().enumerate() {
                acc += g * row[reflect(x as isize + k as isize - half, width)];
            }
            mid[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (k, &g) in kernel.iter().enumerate() {
                acc += g * mid[reflect(y as isize + k as isize - half, height) * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// Exact adjoint of [`blur`]: vertical scatter then horizontal scatter.
/// Near the borders this differs from `blur` itself because reflection
/// folds weight back into interior pixels.
fn blur_adjoint(src: &[f64], width: usize, height: usize, kernel: &[f64; WINDOW]) -> Vec<f64> {
    let half = (WINDOW / 2) as isize;
    let mut mid = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let u = src[y * width + x];
            if u == 0.0 {
                continue;
            }
            for (k, &g) in kernel.iter().enumerate() {
                let ty = reflect(y as isize + k as isize - half, height);
                mid[ty * width + x] += g * u;
            }
        }
    }
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        let out_row = &mut out[y * width..(y + 1) * width];
        for x in 0..width {
            let u = mid[y * width + x];
            if u == 0.0 {
                continue;
            }
            for (k, &g) in kernel.iter().enumerate() {
                let tx = reflect(x as isize + k as isize - half, width);
                out_row[tx] += g * u;
            }
        }
    }
    out
}

fn channel_plane(img: &ImageRgb, c: usize) -> Vec<f64> {
    img.data.iter().skip(c).step_by(3).copied().collect()
}

/// Mean SSIM over pixels for one channel plane, optionally with the
/// gradient with respect to `x`.
fn ssim_channel(
    xs: &[f64],
    ys: &[f64],
    width: usize,
    height: usize,
    kernel: &[f64; WINDOW],
    want_grad: bool,
) -> (f64, Option<Vec<f64>>) {
    let n = width * height;
    let x2: Vec<f64> = xs.iter().map(|v| v * v).collect();
    let y2: Vec<f64> = ys.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = xs.iter().zip(ys).map(|(a, b)| a * b).collect();

    let mu_x = blur(xs, width, height, kernel);
    let mu_y = blur(ys, width, height, kernel);
    let m_x2 = blur(&x2, width, height, kernel);
    let m_y2 = blur(&y2, width, height, kernel);
    let m_xy = blur(&xy, width, height, kernel);

    let mut ssim_sum = 0.0;
    // Per-pixel partials of the SSIM map with respect to mu_x, sigma_x^2
    // and sigma_xy. F1 is written so it is exactly zero (and F3 exactly
    // -2*F2) when x and y are bit-identical.
    let mut f1 = vec![0.0; n];
    let mut f2 = vec![0.0; n];
    let mut f3 = vec![0.0; n];
    let mut f2_mu = vec![0.0; n];
    let mut f3_mu = vec![0.0; n];
    for i in 0..n {
        let s_x2 = m_x2[i] - mu_x[i] * mu_x[i];
        let s_y2 = m_y2[i] - mu_y[i] * mu_y[i];
        let s_xy = m_xy[i] - mu_x[i] * mu_y[i];
        let a1 = 2.0 * (mu_x[i] * mu_y[i]) + C1;
        let b1 = (mu_x[i] * mu_x[i] + mu_y[i] * mu_y[i]) + C1;
        let a2 = 2.0 * s_xy + C2;
        let b2 = (s_x2 + s_y2) + C2;
        ssim_sum += (a1 * a2) / (b1 * b2);
        if want_grad {
            let base = a1 / (b1 * b2);
            f1[i] = 2.0 * a2 * (mu_y[i] * b1 - mu_x[i] * a1) / ((b1 * b1) * b2);
            f2[i] = -(base * (a2 / b2));
            f3[i] = 2.0 * base;
            f2_mu[i] = f2[i] * mu_x[i];
            f3_mu[i] = f3[i] * mu_y[i];
        }
    }
    let ssim = ssim_sum / n as f64;

    if !want_grad {
        return (ssim, None);
    }
    let bf1 = blur_adjoint(&f1, width, height, kernel);
    let bf2 = blur_adjoint(&f2, width, height, kernel);
    let bf3 = blur_adjoint(&f3, width, height, kernel);
    let bf2_mu = blur_adjoint(&f2_mu, width, height, kernel);
    let bf3_mu = blur_adjoint(&f3_mu, width, height, kernel);
    let inv_n = 1.0 / n as f64;
    let grad = (0..n)
        .map(|i| {
            (bf1[i] + 2.0 * xs[i] * bf2[i] + ys[i] * bf3[i] - 2.0 * bf2_mu[i] - bf3_mu[i]) * inv_n
        })
        .collect();
    (ssim, Some(grad))
}

fn ssim_impl(a: &ImageRgb, b: &ImageRgb, want_grad: bool) -> (f64, Option<Vec<f64>>) {
    let kernel = gaussian_window();
    let mut total = 0.0;
    let mut grad = want_grad.then(|| vec![0.0; a.data.len()]);
    for c in 0..3 {
        let xs = channel_plane(a, c);
        let ys = channel_plane(b, c);
        let (s, g) = ssim_channel(&xs, &ys, a.width, a.height, &kernel, want_grad);
        total += s;
        if let (Some(out), Some(g)) = (grad.as_mut(), g) {
            for (i, v) in g.into_iter().enumerate() {
                out[i * 3 + c] = v / 3.0;
            }
        }
    }
    (total / 3.0, grad)
}

fn check_dims(a: &ImageRgb, b: &ImageRgb) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::Dimension(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// Combined loss `(1 - lambda) * L1 + lambda * D-SSIM` and its per-pixel
/// gradient with respect to the rendered image. The L1 subgradient at
/// exact ties is zero.
pub fn loss(
    rendered: &ImageRgb,
    target: &ImageRgb,
    lambda: f64,
) -> Result<(LossReport, Vec<[f64; 3]>)> {
    check_dims(rendered, target)?;
    assert!(
        (0.0..=1.0).contains(&lambda),
        "contract violation: lambda {lambda} outside [0, 1]"
    );
    let n_values = rendered.data.len();
    let mut l1_sum = 0.0;
    for (r, t) in rendered.data.iter().zip(&target.data) {
        l1_sum += (r - t).abs();
    }
    let l1 = l1_sum / n_values as f64;

    let (ssim, ssim_grad) = ssim_impl(rendered, target, true);
    let ssim_grad = ssim_grad.expect("gradient requested");
    let dssim = (1.0 - ssim) / 2.0;
    let total = (1.0 - lambda) * l1 + lambda * dssim;

    let l1_scale = (1.0 - lambda) / n_values as f64;
    let n_pixels = rendered.width * rendered.height;
    let mut grad = vec![[0.0; 3]; n_pixels];
    for (i, px) in grad.iter_mut().enumerate() {
        for c in 0..3 {
            let k = i * 3 + c;
            let diff = rendered.data[k] - target.data[k];
            let sign = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            px[c] = l1_scale * sign + lambda * (-0.5) * ssim_grad[k];
        }
    }

    Ok((
        LossReport {
            total,
            l1,
            dssim,
            lambda,
        },
        grad,
    ))
}

/// Peak signal-to-noise ratio in dB over all pixels and channels; identical
/// images report +infinity.
pub fn psnr(a: &ImageRgb, b: &ImageRgb) -> Result<f64> {
    check_dims(a, b)?;
    let mse: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

/// Mean SSIM over channels.
pub fn ssim(a: &ImageRgb, b: &ImageRgb) -> Result<f64> {
    check_dims(a, b)?;
    Ok(ssim_impl(a, b, false).0)
}
