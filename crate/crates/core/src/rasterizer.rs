//! Forward tile-based renderer: project, bin, depth-sort, and
//! alpha-composite textured splats per pixel, recording what the backward
//! pass needs.
//!
//! Compositing is the standard front-to-back splatting model: per splat
//! the effective alpha is `a_i = alpha_i(n) * G_i`, the pixel weight is
//! `w_i = T_i * a_i`, and `T_{i+1} = T_i * (1 - a_i)`, so per pixel
//! `sum(w_i) + T_final = 1` holds by telescoping. The surface direction
//! `n` is computed per pixel per splat from that pixel's own ray.
//!
//! A pixel composites exactly the splats whose 3-sigma screen box contains
//! its center, in depth order (ties broken by splat index), so the output
//! is independent of the tile layout and of thread count: tile size is a
//! pure performance knob and parallel renders are bit-identical to
//! sequential ones.

use nalgebra::{Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use crate::geometry::{covariance_from, intersect_scaled, project_covariance};
use crate::scene::{Camera, ImageRgb, SceneModel};
use crate::sh::{eval_color, eval_opacity, eval_sh_basis};

/// Recording cap per pixel; excess contributions still composite but are
/// counted in [`FrameBuffer::overflow`].
pub const CONTRIBUTION_CAP: usize = 64;

#[derive(Debug, Clone)]
pub struct RenderOptions {
    pub tile_size: usize,
    /// Early termination threshold on the transmittance.
    pub t_stop: f64,
    /// Record per-pixel contributions for the backward pass.
    pub record_contributions: bool,
    pub background: [f64; 3],
    /// Speed ablation: evaluate the surface direction once per tile (at the
    /// tile center ray) instead of per pixel.
    pub tile_level_intersection: bool,
    pub parallel: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            tile_size: 16,
            t_stop: 1e-4,
            record_contributions: false,
            background: [0.0; 3],
            tile_level_intersection: false,
            parallel: true,
        }
    }
}

/// Everything per-pixel work needs for one visible splat.
#[derive(Debug, Clone)]
pub struct SplatRecord {
    pub gaussian: usize,
    /// Inverse projected covariance, upper triangle (xx, xy, yy).
    pub conic: [f64; 3],
    pub center: Vector2<f64>,
    pub depth: f64,
    /// 3-sigma screen-space radius used for binning.
    pub radius: f64,
    /// World-to-local rotation of the splat frame.
    pub to_local: Matrix3<f64>,
    /// Ellipsoid semi-axes under the scene's scale mode.
    pub semi_axes: Vector3<f64>,
    /// Camera center in the scaled local frame (shared by all pixel rays).
    pub origin_scaled: Vector3<f64>,
}

/// One recorded splat contribution at a pixel, front-to-back order.
#[derive(Debug, Clone)]
pub struct PixelContribution {
    pub gaussian: usize,
    /// SH basis values at the surface direction, up to the scene's highest
    /// degree (unused tail is zero).
    pub basis: [f64; 16],
    /// Activated color.
    pub color: [f64; 3],
    /// Activated opacity.
    pub opacity: f64,
    /// Screen-space Gaussian falloff G at the pixel center.
    pub gauss: f64,
    /// Compositing weight `w_i = T_i * opacity * G`.
    pub weight: f64,
}

pub struct FrameBuffer {
    pub color: ImageRgb,
    /// Final transmittance per pixel.
    pub t_final: Vec<f64>,
    /// Background composited into `color`.
    pub background: [f64; 3],
    /// Per-pixel front-to-back contribution lists, when recording.
    pub contributions: Option<Vec<Vec<PixelContribution>>>,
    /// Contributions dropped by the recording cap.
    pub overflow: u64,
}

/// Projects and culls the scene for one camera. Splats behind the near
/// plane or with their 3-sigma ellipse fully off-screen are removed.
pub fn cull_and_project(scene: &SceneModel, cam: &Camera) -> Vec<SplatRecord> {
    let cam_center = cam.center();
    scene
        .gaussians
        .iter()
        .enumerate()
        .filter_map(|(i, g)| {
            let cov = covariance_from(&g.rotation, &g.scale);
            let projected = project_covariance(&cov, &g.position, cam)?;
            let (a, b, c) = (
                projected.cov2[(0, 0)],
                projected.cov2[(0, 1)],
                projected.cov2[(1, 1)],
            );
            let half_gap = 0.5 * (a - c);
            let lambda_max = 0.5 * (a + c) + (half_gap * half_gap + b * b).sqrt();
            let radius = 3.0 * lambda_max.max(0.0).sqrt();
            let center = projected.center;
            if center.x + radius < 0.0
                || center.x - radius > cam.width as f64
                || center.y + radius < 0.0
                || center.y - radius > cam.height as f64
            {
                return None;
            }
            let det = a * c - b * b;
            let conic = [c / det, -b / det, a / det];
            let to_local = g.rotation.to_rotation_matrix().matrix().transpose();
            let semi_axes = scene.ellipsoid_scale_mode.semi_axes(&g.scale);
            let origin_scaled =
                (to_local * (cam_center - g.position)).component_div(&semi_axes);
            Some(SplatRecord {
                gaussian: i,
                conic,
                center,
                depth: projected.depth,
                radius,
                to_local,
                semi_axes,
                origin_scaled,
            })
        })
        .collect()
}

/// Surface direction for one record and one world-space ray direction.
fn surface_basis(record: &SplatRecord, world_dir: &Vector3<f64>, degree: usize) -> [f64; 16] {
    let d_scaled = (record.to_local * world_dir)
        .normalize()
        .component_div(&record.semi_axes);
    let surface = intersect_scaled(&record.origin_scaled, &d_scaled);
    let basis = eval_sh_basis(degree, &surface.dir);
    let mut out = [0.0; 16];
    out[..basis.values().len()].copy_from_slice(basis.values());
    out
}

struct TileOutput {
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    colors: Vec<[f64; 3]>,
    t_final: Vec<f64>,
    contribs: Option<Vec<Vec<PixelContribution>>>,
    counts: Option<Vec<u32>>,
    weight_sums: Option<Vec<f64>>,
    overflow: u64,
}

#[allow(clippy::too_many_arguments)]
fn process_tile(
    scene: &SceneModel,
    cam: &Camera,
    records: &[SplatRecord],
    order: &[u32],
    x0: usize,
    y0: usize,
    w: usize,
    h: usize,
    opts: &RenderOptions,
    collect_stats: bool,
) -> TileOutput {
    let bc = scene.color_coeffs();
    let bo = scene.opacity_coeffs();
    let degree = scene.max_degree();
    let rotation_t = cam.rotation.transpose();
    let pixel_dir = |x: f64, y: f64| -> Vector3<f64> {
        (rotation_t * Vector3::new((x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0)).normalize()
    };

    // Per-tile surface cache for the speed-ablation mode: basis, color and
    // opacity evaluated once per splat at the tile-center ray.
    let cached: Option<Vec<([f64; 16], [f64; 3], f64)>> = opts.tile_level_intersection.then(|| {
        let dir = pixel_dir(x0 as f64 + w as f64 * 0.5, y0 as f64 + h as f64 * 0.5);
        order
            .iter()
            .map(|&ri| {
                let r = &records[ri as usize];
                let g = &scene.gaussians[r.gaussian];
                let basis = surface_basis(r, &dir, degree);
                (basis, eval_color(g, &basis[..bc]), eval_opacity(g, &basis[..bo]))
            })
            .collect()
    });

    let mut colors = vec![[0.0; 3]; w * h];
    let mut t_final = vec![1.0; w * h];
    let mut contribs = opts
        .record_contributions
        .then(|| vec![Vec::new(); w * h]);
    let mut counts = collect_stats.then(|| vec![0u32; w * h]);
    let mut weight_sums = collect_stats.then(|| vec![0.0; w * h]);
    let mut overflow = 0u64;

    for dy in 0..h {
        for dx in 0..w {
            let (px, py) = (x0 + dx, y0 + dy);
            let (pxc, pyc) = (px as f64 + 0.5, py as f64 + 0.5);
            let dir = if cached.is_none() {
                pixel_dir(pxc, pyc)
            } else {
                Vector3::zeros()
            };

            let idx = dy * w + dx;
            let mut trans = 1.0;
            let mut rgb = [0.0; 3];

            for (k, &ri) in order.iter().enumerate() {
                let r = &records[ri as usize];
                let ox = pxc - r.center.x;
                let oy = pyc - r.center.y;
                // Per-pixel 3-sigma box test, so the composited set does not
                // depend on tile boundaries.
                if ox.abs() > r.radius || oy.abs() > r.radius {
                    continue;
                }
                let power = -0.5
                    * (r.conic[0] * ox * ox + 2.0 * r.conic[1] * ox * oy + r.conic[2] * oy * oy);
                let gauss = power.exp();

                let (basis, color, opacity) = match &cached {
                    Some(cache) => cache[k],
                    None => {
                        let g = &scene.gaussians[r.gaussian];
                        let basis = surface_basis(r, &dir, degree);
                        (basis, eval_color(g, &basis[..bc]), eval_opacity(g, &basis[..bo]))
                    }
                };

                let alpha_eff = opacity * gauss;
                let weight = trans * alpha_eff;
                for c in 0..3 {
                    rgb[c] += weight * color[c];
                }
                if let Some(lists) = contribs.as_mut() {
                    let list = &mut lists[idx];
                    if list.len() < CONTRIBUTION_CAP {
                        list.push(PixelContribution {
                            gaussian: r.gaussian,
                            basis,
                            color,
                            opacity,
                            gauss,
                            weight,
                        });
                    } else {
                        overflow += 1;
                    }
                }
                if let Some(cs) = counts.as_mut() {
                    cs[idx] += 1;
                    weight_sums.as_mut().unwrap()[idx] += weight.abs();
                }
                trans *= 1.0 - alpha_eff;
                if trans < opts.t_stop {
                    break;
                }
            }

            assert!(
                trans.is_finite() && rgb.iter().all(|v| v.is_finite()),
                "internal error: non-finite accumulator at pixel ({px}, {py})"
            );
            for c in 0..3 {
                rgb[c] += trans * opts.background[c];
            }
            colors[idx] = rgb;
            t_final[idx] = trans;
        }
    }

    TileOutput {
        x0,
        y0,
        w,
        h,
        colors,
        t_final,
        contribs,
        counts,
        weight_sums,
        overflow,
    }
}

fn render_impl(
    scene: &SceneModel,
    cam: &Camera,
    opts: &RenderOptions,
    collect_stats: bool,
) -> (FrameBuffer, Option<(Vec<u32>, Vec<f64>)>) {
    assert!(opts.tile_size >= 1, "contract violation: tile_size must be >= 1");
    let (width, height) = (cam.width, cam.height);
    let records = cull_and_project(scene, cam);

    let ts = opts.tile_size;
    let tiles_x = width.div_ceil(ts);
    let tiles_y = height.div_ceil(ts);
    let mut bins: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for (ri, r) in records.iter().enumerate() {
        let x_lo = r.center.x - r.radius;
        let x_hi = r.center.x + r.radius;
        let y_lo = r.center.y - r.radius;
        let y_hi = r.center.y + r.radius;
        if x_hi < 0.0 || y_hi < 0.0 || x_lo > width as f64 || y_lo > height as f64 {
            continue;
        }
        let min_tx = ((x_lo.max(0.0) as usize) / ts).min(tiles_x - 1);
        let max_tx = ((x_hi.max(0.0) as usize) / ts).min(tiles_x - 1);
        let min_ty = ((y_lo.max(0.0) as usize) / ts).min(tiles_y - 1);
        let max_ty = ((y_hi.max(0.0) as usize) / ts).min(tiles_y - 1);
        for ty in min_ty..=max_ty {
            for tx in min_tx..=max_tx {
                bins[ty * tiles_x + tx].push(ri as u32);
            }
        }
    }
    // Depth sort per tile, ties broken by splat index for determinism.
    for bin in &mut bins {
        bin.sort_unstable_by(|&a, &b| {
            let (ra, rb) = (&records[a as usize], &records[b as usize]);
            ra.depth.total_cmp(&rb.depth).then(a.cmp(&b))
        });
    }

    let tile_job = |t: usize| {
        let (tx, ty) = (t % tiles_x, t / tiles_x);
        let x0 = tx * ts;
        let y0 = ty * ts;
        let w = ts.min(width - x0);
        let h = ts.min(height - y0);
        process_tile(scene, cam, &records, &bins[t], x0, y0, w, h, opts, collect_stats)
    };
    let outputs: Vec<TileOutput> = if opts.parallel {
        (0..tiles_x * tiles_y).into_par_iter().map(tile_job).collect()
    } else {
        (0..tiles_x * tiles_y).map(tile_job).collect()
    };

    let mut fb = FrameBuffer {
        color: ImageRgb::new(width, height),
        t_final: vec![1.0; width * height],
        background: opts.background,
        contributions: opts
            .record_contributions
            .then(|| vec![Vec::new(); width * height]),
        overflow: 0,
    };
    let mut stats = collect_stats.then(|| (vec![0u32; width * height], vec![0.0; width * height]));

    for mut out in outputs {
        fb.overflow += out.overflow;
        for dy in 0..out.h {
            let row = out.y0 + dy;
            for dx in 0..out.w {
                let src = dy * out.w + dx;
                let dst = row * width + out.x0 + dx;
                fb.color.set_pixel(out.x0 + dx, row, out.colors[src]);
                fb.t_final[dst] = out.t_final[src];
                if let Some(lists) = fb.contributions.as_mut() {
                    lists[dst] = std::mem::take(&mut out.contribs.as_mut().unwrap()[src]);
                }
                if let Some((counts, sums)) = stats.as_mut() {
                    counts[dst] = out.counts.as_ref().unwrap()[src];
                    sums[dst] = out.weight_sums.as_ref().unwrap()[src];
                }
            }
        }
    }
    (fb, stats)
}

/// Renders the scene for one camera.
pub fn render(scene: &SceneModel, cam: &Camera, opts: &RenderOptions) -> FrameBuffer {
    render_impl(scene, cam, opts, false).0
}

/// Diagnostic render: per-pixel count of contributing splats and the mean
/// absolute compositing weight.
pub fn render_depth_and_weight_stats(
    scene: &SceneModel,
    cam: &Camera,
    opts: &RenderOptions,
) -> (Vec<u32>, Vec<f64>) {
    let mut stats_opts = opts.clone();
    stats_opts.record_contributions = false;
    let (_, stats) = render_impl(scene, cam, &stats_opts, true);
    let (counts, sums) = stats.expect("stats requested");
    let means = counts
        .iter()
        .zip(&sums)
        .map(|(&n, &s)| if n > 0 { s / n as f64 } else { 0.0 })
        .collect();
    (counts, means)
}
