//! Optimization loop: Adam over color and opacity SH coefficients with
//! per-family learning rates, geometry frozen.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backward::backward;
use crate::error::Error;
use crate::loss::{loss, psnr, ssim};
use crate::rasterizer::{render, RenderOptions};
use crate::scene::{save_checkpoint, Camera, ImageRgb, SceneModel};
use crate::Result;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub iterations: usize,
    pub lr_color: f64,
    pub lr_opacity: f64,
    pub lambda: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Emit a log row (and evaluate, when an eval set is given) every this
    /// many iterations.
    pub eval_every: usize,
    /// Write an intermediate checkpoint every this many iterations
    /// (0 disables).
    pub checkpoint_every: usize,
    pub seed: u64,
    /// Use the parallel render/backward paths. Either setting produces
    /// bit-identical results; `false` is the single-threaded test mode.
    pub parallel: bool,
    pub background: [f64; 3],
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 14_000,
            lr_color: 0.0025,
            lr_opacity: 0.005,
            lambda: 0.2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-15,
            eval_every: 100,
            checkpoint_every: 0,
            seed: 0,
            parallel: true,
            background: [0.0; 3],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        // A zero rate freezes that coefficient family; negative rates are
        // rejected.
        if !(self.lr_color >= 0.0 && self.lr_color.is_finite())
            || !(self.lr_opacity >= 0.0 && self.lr_opacity.is_finite())
        {
            return Err(Error::Config("learning rates must be finite and >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config("lambda must be in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("adam betas must be in [0, 1)".into()));
        }
        if self.epsilon <= 0.0 || self.epsilon.is_nan() {
            return Err(Error::Config("adam epsilon must be > 0".into()));
        }
        if self.eval_every < 1 {
            return Err(Error::Config("eval_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// Cameras with their target images, index-aligned.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub cameras: Vec<Camera>,
    pub images: Vec<ImageRgb>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        if self.cameras.is_empty() {
            return Err(Error::Dimension("dataset is empty".into()));
        }
        if self.cameras.len() != self.images.len() {
            return Err(Error::Dimension(format!(
                "{} cameras vs {} images",
                self.cameras.len(),
                self.images.len()
            )));
        }
        for (i, (cam, img)) in self.cameras.iter().zip(&self.images).enumerate() {
            if cam.width != img.width || cam.height != img.height {
                return Err(Error::Dimension(format!(
                    "camera {i} is {}x{} but its image is {}x{}",
                    cam.width, cam.height, img.width, img.height
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LogRow {
    pub iteration: usize,
    pub loss: f64,
    pub l1: f64,
    pub dssim: f64,
    pub psnr_eval: Option<f64>,
}

/// First/second moment buffers plus the shared step counter for one
/// coefficient family.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> AdamState {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn update(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        lr: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let bias1 = 1.0 - beta1.powi(self.step as i32);
        let bias2 = 1.0 - beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
}

fn gather_params(scene: &SceneModel) -> (Vec<f64>, Vec<f64>) {
    let mut color = Vec::with_capacity(scene.gaussians.len() * 3 * scene.color_coeffs());
    let mut opacity = Vec::with_capacity(scene.gaussians.len() * scene.opacity_coeffs());
    for g in &scene.gaussians {
        color.extend_from_slice(&g.color_sh);
        opacity.extend_from_slice(&g.opacity_sh);
    }
    (color, opacity)
}

fn scatter_params(scene: &mut SceneModel, color: &[f64], opacity: &[f64]) {
    let bc3 = 3 * scene.color_coeffs();
    let bo = scene.opacity_coeffs();
    for (i, g) in scene.gaussians.iter_mut().enumerate() {
        g.color_sh.copy_from_slice(&color[i * bc3..(i + 1) * bc3]);
        g.opacity_sh.copy_from_slice(&opacity[i * bo..(i + 1) * bo]);
    }
}

fn mean_eval_psnr(scene: &SceneModel, eval: &Dataset, opts: &RenderOptions) -> Result<f64> {
    let mut sum = 0.0;
    for (cam, target) in eval.cameras.iter().zip(&eval.images) {
        let fb = render(scene, cam, opts);
        sum += psnr(&fb.color, target)?;
    }
    Ok(sum / eval.cameras.len() as f64)
}

/// Trains the scene's SH coefficients against the dataset. One camera per
/// iteration in a seed-shuffled order (reshuffled each epoch), one Adam
/// step per coefficient family per iteration. Geometry is never modified.
///
/// Aborts with an error carrying the iteration and camera index if the
/// loss turns non-finite.
pub fn train(
    mut scene: SceneModel,
    data: &Dataset,
    eval: Option<&Dataset>,
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<(SceneModel, Vec<LogRow>)> {
    cfg.validate()?;
    data.validate()?;
    if let Some(eval) = eval {
        eval.validate()?;
    }

    let render_opts = RenderOptions {
        record_contributions: true,
        parallel: cfg.parallel,
        background: cfg.background,
        ..RenderOptions::default()
    };
    let eval_opts = RenderOptions {
        parallel: cfg.parallel,
        background: cfg.background,
        ..RenderOptions::default()
    };

    let (mut color_params, mut opacity_params) = gather_params(&scene);
    let mut adam_color = AdamState::new(color_params.len());
    let mut adam_opacity = AdamState::new(opacity_params.len());

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.cameras.len()).collect();
    let mut log = Vec::new();

    for iteration in 1..=cfg.iterations {
        let slot = (iteration - 1) % data.cameras.len();
        if slot == 0 {
            order.shuffle(&mut rng);
        }
        let cam_idx = order[slot];
        let cam = &data.cameras[cam_idx];

        let fb = render(&scene, cam, &render_opts);
        assert_eq!(
            fb.overflow, 0,
            "contribution recording overflowed; scene is too dense to train"
        );
        let (report, pixel_grad) = loss(&fb.color, &data.images[cam_idx], cfg.lambda)?;
        if !report.total.is_finite() {
            return Err(Error::Training {
                iteration,
                camera: cam_idx,
                message: format!("non-finite loss {}", report.total),
            });
        }

        let grads = backward(&fb, &pixel_grad, &scene, cfg.parallel);
        adam_color.update(
            &mut color_params,
            &grads.color,
            cfg.lr_color,
            cfg.beta1,
            cfg.beta2,
            cfg.epsilon,
        );
        adam_opacity.update(
            &mut opacity_params,
            &grads.opacity,
            cfg.lr_opacity,
            cfg.beta1,
            cfg.beta2,
            cfg.epsilon,
        );
        scatter_params(&mut scene, &color_params, &opacity_params);

        if iteration % cfg.eval_every == 0 {
            let psnr_eval = match eval {
                Some(eval) => Some(mean_eval_psnr(&scene, eval, &eval_opts)?),
                None => None,
            };
            log.push(LogRow {
                iteration,
                loss: report.total,
                l1: report.l1,
                dssim: report.dssim,
                psnr_eval,
            });
        }
        if cfg.checkpoint_every > 0 && iteration % cfg.checkpoint_every == 0 {
            if let Some(dir) = checkpoint_dir {
                save_checkpoint(&scene, dir.join(format!("checkpoint_{iteration:06}.ply")))?;
            }
        }
    }

    Ok((scene, log))
}

#[derive(Debug, Clone)]
pub struct EvalRow {
    pub index: usize,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone)]
pub struct EvalTable {
    pub rows: Vec<EvalRow>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

/// Per-image PSNR/SSIM against the dataset targets, plus means.
pub fn evaluate(scene: &SceneModel, data: &Dataset, opts: &RenderOptions) -> Result<EvalTable> {
    data.validate()?;
    let mut rows = Vec::with_capacity(data.cameras.len());
    for (i, (cam, target)) in data.cameras.iter().zip(&data.images).enumerate() {
        let fb = render(scene, cam, opts);
        rows.push(EvalRow {
            index: i,
            psnr: psnr(&fb.color, target)?,
            ssim: ssim(&fb.color, target)?,
        });
    }
    let mean_psnr = rows.iter().map(|r| r.psnr).sum::<f64>() / rows.len() as f64;
    let mean_ssim = rows.iter().map(|r| r.ssim).sum::<f64>() / rows.len() as f64;
    Ok(EvalTable {
        rows,
        mean_psnr,
        mean_ssim,
    })
}
