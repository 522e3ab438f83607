//! Synthetic dataset generator: ground-truth textured scenes rendered with
//! the forward pass itself, plus a degraded (DC-only) initialization so
//! training has to recover the texture.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::rasterizer::{render, RenderOptions};
use crate::scene::{
    save_cameras, save_checkpoint, write_image, write_splat_ply, Camera, EllipsoidScaleMode,
    SceneModel, SplatVertex, TexturedGaussian,
};
use crate::sh::{self, SH_C0};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    SingleEllipsoid,
    Grid,
    /// One splat whose ground-truth opacity is degree 1 with only the
    /// z-linear coefficient set: opaque on one side, transparent on the
    /// other.
    TwoToneOpacity,
    RandomN,
}

impl SceneKind {
    pub fn parse(s: &str) -> Result<SceneKind> {
        Ok(match s {
            "single-ellipsoid" => SceneKind::SingleEllipsoid,
            "grid" => SceneKind::Grid,
            "two-tone-opacity" => SceneKind::TwoToneOpacity,
            "random-n" => SceneKind::RandomN,
            other => {
                return Err(Error::Config(format!(
                    "unknown scene kind {other:?} (expected single-ellipsoid|grid|two-tone-opacity|random-n)"
                )))
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            SceneKind::SingleEllipsoid => "single-ellipsoid",
            SceneKind::Grid => "grid",
            SceneKind::TwoToneOpacity => "two-tone-opacity",
            SceneKind::RandomN => "random-n",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub kind: SceneKind,
    /// Splat count; fixed to 1 for the single-splat kinds.
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub camera_count: usize,
    pub ring_radius: f64,
    pub seed: u64,
    /// Ground-truth SH degrees. The two-tone kind overrides the opacity
    /// degree to 1.
    pub color_degree: usize,
    pub opacity_degree: usize,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        if self.count < 1 || self.camera_count < 1 || self.width < 1 || self.height < 1 {
            return Err(Error::Config("synth counts and sizes must be >= 1".into()));
        }
        if self.ring_radius <= 0.0 || self.ring_radius.is_nan() {
            return Err(Error::Config("ring radius must be > 0".into()));
        }
        if self.color_degree > sh::MAX_DEGREE || self.opacity_degree > sh::MAX_DEGREE {
            return Err(Error::Config("SH degrees must be within [0, 3]".into()));
        }
        Ok(())
    }
}

pub struct SynthScene {
    pub ground_truth: SceneModel,
    /// DC-only initialization whose activated base color and opacity match
    /// the ground truth.
    pub init: SceneModel,
    pub cameras: Vec<Camera>,
    /// The vertices backing `init`, ready to be written as a splat PLY.
    pub init_vertices: Vec<SplatVertex>,
}

/// World-to-camera extrinsics looking from `eye` toward `target`, image y
/// pointing down.
fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> (Matrix3<f64>, Vector3<f64>) {
    let forward = (target - eye).normalize();
    let right = forward.cross(&up).normalize();
    let down = forward.cross(&right);
    let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    (rotation, -(rotation * eye))
}

fn ring_cameras(spec: &SynthSpec, extent: f64) -> Result<Vec<Camera>> {
    let focal = 0.45 * spec.width as f64 * spec.ring_radius / extent;
    let mut cameras = Vec::with_capacity(spec.camera_count);
    for i in 0..spec.camera_count {
        let theta = std::f64::consts::TAU * i as f64 / spec.camera_count as f64;
        // Mild elevation sweep so the ring covers more of the sphere.
        let elevation = 0.35 * (2.0 * theta + 0.7).sin();
        let eye = Vector3::new(
            spec.ring_radius * theta.sin() * elevation.cos(),
            spec.ring_radius * elevation.sin(),
            spec.ring_radius * theta.cos() * elevation.cos(),
        );
        let (rotation, translation) = look_at(eye, Vector3::zeros(), Vector3::new(0.0, 1.0, 0.0));
        cameras.push(Camera::new(
            spec.width,
            spec.height,
            focal,
            focal,
            spec.width as f64 / 2.0,
            spec.height as f64 / 2.0,
            rotation,
            translation,
        )?);
    }
    Ok(cameras)
}

/// Per-band coefficient amplitudes for the textured kinds.
fn sample_block(rng: &mut ChaCha8Rng, degree: usize, dc_range: (f64, f64), band_amp: &[f64; 3]) -> Vec<f64> {
    let b = sh::coeff_count(degree);
    let mut coeffs = vec![0.0; b];
    coeffs[0] = rng.random_range(dc_range.0..dc_range.1);
    for l in 1..=degree {
        for k in l * l..(l + 1) * (l + 1) {
            let amp = band_amp[l - 1];
            coeffs[k] = rng.random_range(-amp..amp);
        }
    }
    coeffs
}

struct Blueprint {
    vertices: Vec<SplatVertex>,
    color_blocks: Vec<Vec<f64>>,
    opacity_blocks: Vec<Vec<f64>>,
    opacity_degree: usize,
    extent: f64,
}

fn blueprint(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Blueprint {
    let mut vertices = Vec::new();
    let mut color_blocks = Vec::new();
    let mut opacity_blocks = Vec::new();
    let mut opacity_degree = spec.opacity_degree;
    let extent;

    let random_rot = |rng: &mut ChaCha8Rng| -> [f32; 4] {
        let q = [
            rng.random_range(-1.0f64..1.0),
            rng.random_range(-1.0f64..1.0),
            rng.random_range(-1.0f64..1.0),
            rng.random_range(-1.0f64..1.0),
        ];
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-6);
        [
            (q[0] / norm) as f32,
            (q[1] / norm) as f32,
            (q[2] / norm) as f32,
            (q[3] / norm) as f32,
        ]
    };
    let textured_color = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut block = Vec::new();
        for _ in 0..3 {
            block.extend(sample_block(rng, spec.color_degree, (-4.0, 4.0), &[2.5, 1.5, 1.0]));
        }
        block
    };
    let textured_opacity = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        sample_block(rng, spec.opacity_degree, (1.0, 5.0), &[2.0, 1.5, 1.0])
    };

    match spec.kind {
        SceneKind::SingleEllipsoid => {
            vertices.push(SplatVertex {
                rot: random_rot(rng),
                log_scale: [
                    rng.random_range(0.5f64..1.2).ln() as f32,
                    rng.random_range(0.5f64..1.2).ln() as f32,
                    rng.random_range(0.5f64..1.2).ln() as f32,
                ],
                ..SplatVertex::default()
            });
            color_blocks.push(textured_color(rng));
            opacity_blocks.push(textured_opacity(rng));
            extent = 3.0;
        }
        SceneKind::TwoToneOpacity => {
            let s = (0.8f64).ln() as f32;
            vertices.push(SplatVertex {
                log_scale: [s, s, s],
                ..SplatVertex::default()
            });
            let bc = sh::coeff_count(spec.color_degree);
            let mut color = vec![0.0; 3 * bc];
            for (c, dc) in [3.0, 0.5, -2.0].iter().enumerate() {
                color[c * bc] = *dc;
            }
            color_blocks.push(color);
            opacity_degree = 1;
            opacity_blocks.push(vec![0.0, 0.0, 10.0, 0.0]);
            extent = 2.5;
        }
        SceneKind::Grid => {
            let side = (spec.count as f64).cbrt().ceil() as usize;
            let spacing = 1.0;
            let offset = (side as f64 - 1.0) / 2.0;
            'fill: for ix in 0..side {
                for iy in 0..side {
                    for iz in 0..side {
                        if vertices.len() == spec.count {
                            break 'fill;
                        }
                        let jitter = |rng: &mut ChaCha8Rng| rng.random_range(-0.15f64..0.15);
                        vertices.push(SplatVertex {
                            position: [
                                ((ix as f64 - offset) * spacing + jitter(rng)) as f32,
                                ((iy as f64 - offset) * spacing + jitter(rng)) as f32,
                                ((iz as f64 - offset) * spacing + jitter(rng)) as f32,
                            ],
                            rot: random_rot(rng),
                            log_scale: [
                                rng.random_range(0.2f64..0.5).ln() as f32,
                                rng.random_range(0.2f64..0.5).ln() as f32,
                                rng.random_range(0.2f64..0.5).ln() as f32,
                            ],
                            ..SplatVertex::default()
                        });
                        color_blocks.push(textured_color(rng));
                        opacity_blocks.push(textured_opacity(rng));
                    }
                }
            }
            extent = side as f64 * spacing * 0.71 + 1.5;
        }
        SceneKind::RandomN => {
            for _ in 0..spec.count {
                vertices.push(SplatVertex {
                    position: [
                        rng.random_range(-2.0f64..2.0) as f32,
                        rng.random_range(-2.0f64..2.0) as f32,
                        rng.random_range(-2.0f64..2.0) as f32,
                    ],
                    rot: random_rot(rng),
                    log_scale: [
                        rng.random_range(0.15f64..0.6).ln() as f32,
                        rng.random_range(0.15f64..0.6).ln() as f32,
                        rng.random_range(0.15f64..0.6).ln() as f32,
                    ],
                    ..SplatVertex::default()
                });
                color_blocks.push(textured_color(rng));
                opacity_blocks.push(textured_opacity(rng));
            }
            extent = 5.3;
        }
    }

    Blueprint {
        vertices,
        color_blocks,
        opacity_blocks,
        opacity_degree,
        extent,
    }
}

/// Builds the ground-truth scene, its DC-only init, and the camera ring.
///
/// The init's degraded `f_dc`/`opacity` fields invert the loader's
/// activation pipeline, so the loaded init reproduces the ground truth's
/// base appearance exactly; geometry is routed through f32 vertex fields on
/// both sides so the two scenes share it bit-for-bit.
pub fn build(spec: &SynthSpec) -> Result<SynthScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut bp = blueprint(spec, &mut rng);

    let mut gt_gaussians = Vec::with_capacity(bp.vertices.len());
    let mut init_gaussians = Vec::with_capacity(bp.vertices.len());
    let bc = sh::coeff_count(spec.color_degree);
    let bo = sh::coeff_count(bp.opacity_degree);

    for (i, v) in bp.vertices.iter_mut().enumerate() {
        let color = &bp.color_blocks[i];
        let opacity = &bp.opacity_blocks[i];
        // Degrade: write back the DC appearance in splat-PLY conventions.
        for c in 0..3 {
            v.f_dc[c] = ((crate::sh::sigmoid(color[c * bc] * SH_C0) - 0.5) / SH_C0) as f32;
        }
        v.opacity = (opacity[0] * SH_C0) as f32;

        let (position, rotation, scale) = crate::scene::decode_splat_geometry(v)?;
        gt_gaussians.push(TexturedGaussian {
            position,
            rotation,
            scale,
            color_sh: color.clone(),
            opacity_sh: opacity.clone(),
        });

        let mut init_color = vec![0.0; 3 * bc];
        for c in 0..3 {
            init_color[c * bc] = crate::scene::splat_color_dc_logit(v.f_dc[c] as f64);
        }
        let mut init_opacity = vec![0.0; bo];
        init_opacity[0] = crate::scene::splat_opacity_dc_logit(v.opacity as f64);
        init_gaussians.push(TexturedGaussian {
            position,
            rotation,
            scale,
            color_sh: init_color,
            opacity_sh: init_opacity,
        });
    }

    let ground_truth = SceneModel::new(
        gt_gaussians,
        spec.color_degree,
        bp.opacity_degree,
        EllipsoidScaleMode::SqrtScale,
    )?;
    let init = SceneModel::new(
        init_gaussians,
        spec.color_degree,
        bp.opacity_degree,
        EllipsoidScaleMode::SqrtScale,
    )?;
    let cameras = ring_cameras(spec, bp.extent)?;

    Ok(SynthScene {
        ground_truth,
        init,
        cameras,
        init_vertices: bp.vertices,
    })
}

/// Renders the ground truth against each ring camera.
pub fn render_targets(scene: &SynthScene, opts: &RenderOptions) -> Vec<crate::scene::ImageRgb> {
    scene
        .cameras
        .iter()
        .map(|cam| render(&scene.ground_truth, cam, opts).color)
        .collect()
}

/// Writes the full dataset: `init.ply`, `cameras.json`, `groundtruth.ply`,
/// and `images/#####.png` targets rendered by the forward pass.
pub fn write_dataset(spec: &SynthSpec, outdir: impl AsRef<Path>) -> Result<()> {
    let outdir = outdir.as_ref();
    let images_dir = outdir.join("images");
    std::fs::create_dir_all(&images_dir)?;

    let scene = build(spec)?;
    write_splat_ply(outdir.join("init.ply"), &scene.init_vertices)?;
    save_cameras(outdir.join("cameras.json"), &scene.cameras)?;
    save_checkpoint(&scene.ground_truth, outdir.join("groundtruth.ply"))?;

    let targets = render_targets(&scene, &RenderOptions::default());
    for (i, img) in targets.iter().enumerate() {
        write_image(img, images_dir.join(format!("{i:05}.png")))?;
    }
    Ok(())
}
