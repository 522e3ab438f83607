//! `texsplat`: render, train, evaluate, and benchmark surface-textured
//! Gaussian splat scenes.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use config::{parse_background, parse_config, TrainFileConfig};
use texsplat::rasterizer::{render, RenderOptions};
use texsplat::scene::{
    load_cameras, load_checkpoint, load_splat_ply, read_image, save_checkpoint, write_image,
    Camera, EllipsoidScaleMode, ImageRgb,
};
use texsplat::synth::{write_dataset, SceneKind, SynthSpec};
use texsplat::trainer::{evaluate, train, Dataset};
use texsplat::Error;

#[derive(Parser)]
#[command(
    name = "texsplat",
    about = "Renderer and appearance optimizer for surface-textured Gaussian splats",
    long_about = "Renderer and appearance optimizer for surface-textured Gaussian splats.\n\
        \n\
        CSV outputs:\n\
        - train log: iteration,loss,l1,dssim,psnr_eval (psnr_eval blank without an eval set)\n\
        - eval:      index,psnr,ssim plus a final mean row\n\
        - ablate:    color_degree,opacity_degree,psnr,ssim"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a checkpoint from each camera into numbered PNGs.
    Render {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        cameras: PathBuf,
        #[arg(long)]
        outdir: PathBuf,
        /// Background color as r,g,b in [0,1].
        #[arg(long, default_value = "0,0,0")]
        background: String,
        #[arg(long, default_value_t = 16)]
        tile_size: usize,
        /// Override the checkpoint's ellipsoid scale mode (raw|sqrt).
        #[arg(long)]
        scale_mode: Option<String>,
    },
    /// Fit color/opacity SH coefficients of a splat file to target images.
    Train {
        #[arg(long)]
        splat: PathBuf,
        #[arg(long)]
        cameras: PathBuf,
        /// Directory of target images named 00000.png, 00001.png, ...
        #[arg(long)]
        images: PathBuf,
        /// key=value config file overriding training defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        outdir: PathBuf,
    },
    /// PSNR/SSIM of a checkpoint against every Nth target image.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        cameras: PathBuf,
        #[arg(long)]
        images: PathBuf,
        /// Evaluate images whose index is divisible by N.
        #[arg(long, default_value_t = 8)]
        test_every: usize,
        /// Also write the table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "0,0,0")]
        background: String,
    },
    /// Generate a synthetic dataset: ground truth, degraded init, cameras,
    /// and rendered target images.
    Synth {
        /// single-ellipsoid | grid | two-tone-opacity | random-n
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long, default_value_t = 128)]
        height: usize,
        #[arg(long, default_value_t = 12)]
        cameras: usize,
        #[arg(long, default_value_t = 10.0)]
        radius: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        color_degree: usize,
        #[arg(long, default_value_t = 3)]
        opacity_degree: usize,
        #[arg(long)]
        outdir: PathBuf,
    },
    /// Train one model per SH degree pair on a synth dataset and tabulate
    /// test PSNR/SSIM.
    Ablate {
        /// Directory produced by `texsplat synth`.
        #[arg(long)]
        synth_dir: PathBuf,
        /// Comma-separated color:opacity degree pairs, e.g. 0:0,3:0,3:3.
        #[arg(long)]
        pairs: String,
        #[arg(long, default_value_t = 2000)]
        iterations: usize,
        #[arg(long, default_value_t = 8)]
        test_every: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Render {
            checkpoint,
            cameras,
            outdir,
            background,
            tile_size,
            scale_mode,
        } => cmd_render(&checkpoint, &cameras, &outdir, &background, tile_size, scale_mode),
        Command::Train {
            splat,
            cameras,
            images,
            config,
            outdir,
        } => cmd_train(&splat, &cameras, &images, config.as_deref(), &outdir),
        Command::Eval {
            checkpoint,
            cameras,
            images,
            test_every,
            out,
            background,
        } => cmd_eval(&checkpoint, &cameras, &images, test_every, out.as_deref(), &background),
        Command::Synth {
            kind,
            count,
            width,
            height,
            cameras,
            radius,
            seed,
            color_degree,
            opacity_degree,
            outdir,
        } => {
            let spec = SynthSpec {
                kind: SceneKind::parse(&kind)?,
                count,
                width,
                height,
                camera_count: cameras,
                ring_radius: radius,
                seed,
                color_degree,
                opacity_degree,
            };
            write_dataset(&spec, &outdir)?;
            println!(
                "wrote {} dataset to {} ({} cameras, {count} splats)",
                spec.kind.name(),
                outdir.display(),
                spec.camera_count
            );
            Ok(())
        }
        Command::Ablate {
            synth_dir,
            pairs,
            iterations,
            test_every,
            out,
            seed,
        } => cmd_ablate(&synth_dir, &pairs, iterations, test_every, out.as_deref(), seed),
    }
}

/// Loads `{i:05}.png` for every camera index.
fn load_target_images(dir: &Path, cameras: &[Camera]) -> Result<Vec<ImageRgb>, Error> {
    if !dir.is_dir() {
        return Err(Error::Image(format!(
            "image directory {} does not exist",
            dir.display()
        )));
    }
    cameras
        .iter()
        .enumerate()
        .map(|(i, _)| read_image(dir.join(format!("{i:05}.png"))))
        .collect()
}

fn every_nth(cameras: &[Camera], images: &[ImageRgb], n: usize, keep: bool) -> Dataset {
    let mut out = Dataset {
        cameras: vec![],
        images: vec![],
    };
    for (i, (cam, img)) in cameras.iter().zip(images).enumerate() {
        if (i % n == 0) == keep {
            out.cameras.push(cam.clone());
            out.images.push(img.clone());
        }
    }
    out
}

fn cmd_render(
    checkpoint: &Path,
    cameras: &Path,
    outdir: &Path,
    background: &str,
    tile_size: usize,
    scale_mode: Option<String>,
) -> Result<(), Error> {
    let mut scene = load_checkpoint(checkpoint)?;
    if let Some(mode) = scale_mode {
        scene.ellipsoid_scale_mode = EllipsoidScaleMode::parse(&mode)?;
    }
    let cameras = load_cameras(cameras)?;
    std::fs::create_dir_all(outdir)?;
    let opts = RenderOptions {
        background: parse_background(background)?,
        tile_size,
        ..RenderOptions::default()
    };
    for (i, cam) in cameras.iter().enumerate() {
        let fb = render(&scene, cam, &opts);
        write_image(&fb.color, outdir.join(format!("{i:05}.png")))?;
    }
    println!("rendered {} images to {}", cameras.len(), outdir.display());
    Ok(())
}

fn cmd_train(
    splat: &Path,
    cameras_path: &Path,
    images: &Path,
    config: Option<&Path>,
    outdir: &Path,
) -> Result<(), Error> {
    let cfg: TrainFileConfig = match config {
        Some(path) => parse_config(&std::fs::read_to_string(path)?)?,
        None => TrainFileConfig::default(),
    };
    println!(
        "config: iterations={} lr_color={} lr_opacity={} lambda={} color_degree={} opacity_degree={} seed={}",
        cfg.train.iterations,
        cfg.train.lr_color,
        cfg.train.lr_opacity,
        cfg.train.lambda,
        cfg.color_degree,
        cfg.opacity_degree,
        cfg.train.seed
    );

    let mut scene = load_splat_ply(splat, cfg.color_degree, cfg.opacity_degree)?;
    if let Some(mode) = cfg.scale_mode {
        scene.ellipsoid_scale_mode = mode;
    }
    let cameras = load_cameras(cameras_path)?;
    let dataset = Dataset {
        images: load_target_images(images, &cameras)?,
        cameras,
    };

    std::fs::create_dir_all(outdir)?;
    let (trained, log) = train(scene, &dataset, None, &cfg.train, Some(outdir))?;

    let checkpoint = outdir.join("checkpoint_final.ply");
    save_checkpoint(&trained, &checkpoint)?;

    let mut csv = String::from("iteration,loss,l1,dssim,psnr_eval\n");
    for row in &log {
        let psnr = row.psnr_eval.map(|v| format!("{v:.6}")).unwrap_or_default();
        csv.push_str(&format!(
            "{},{:.10},{:.10},{:.10},{}\n",
            row.iteration, row.loss, row.l1, row.dssim, psnr
        ));
    }
    std::fs::write(outdir.join("train_log.csv"), csv)?;
    println!(
        "trained {} iterations; checkpoint at {}",
        cfg.train.iterations,
        checkpoint.display()
    );
    Ok(())
}

fn cmd_eval(
    checkpoint: &Path,
    cameras_path: &Path,
    images: &Path,
    test_every: usize,
    out: Option<&Path>,
    background: &str,
) -> Result<(), Error> {
    if test_every < 1 {
        return Err(Error::Config("--test-every must be >= 1".into()));
    }
    let scene = load_checkpoint(checkpoint)?;
    let cameras = load_cameras(cameras_path)?;
    let images = load_target_images(images, &cameras)?;
    let test = every_nth(&cameras, &images, test_every, true);
    let opts = RenderOptions {
        background: parse_background(background)?,
        ..RenderOptions::default()
    };
    let table = evaluate(&scene, &test, &opts)?;

    let test_indices: Vec<usize> = (0..cameras.len()).filter(|i| i % test_every == 0).collect();
    let mut csv = String::from("index,psnr,ssim\n");
    println!("index,psnr,ssim");
    for (row, orig_idx) in table.rows.iter().zip(test_indices) {
        let line = format!("{},{:.4},{:.6}", orig_idx, row.psnr, row.ssim);
        println!("{line}");
        csv.push_str(&line);
        csv.push('\n');
    }
    let mean_line = format!("mean,{:.4},{:.6}", table.mean_psnr, table.mean_ssim);
    println!("{mean_line}");
    csv.push_str(&mean_line);
    csv.push('\n');
    if let Some(path) = out {
        std::fs::write(path, csv)?;
    }
    Ok(())
}

fn parse_pairs(s: &str) -> Result<Vec<(usize, usize)>, Error> {
    let mut pairs = Vec::new();
    for part in s.split(',') {
        let (lc, lo) = part
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("bad degree pair {part:?} (expected L:L')")))?;
        let lc: usize = lc
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad color degree {lc:?}")))?;
        let lo: usize = lo
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad opacity degree {lo:?}")))?;
        pairs.push((lc, lo));
    }
    if pairs.is_empty() {
        return Err(Error::Config("no degree pairs given".into()));
    }
    Ok(pairs)
}

fn cmd_ablate(
    synth_dir: &Path,
    pairs: &str,
    iterations: usize,
    test_every: usize,
    out: Option<&Path>,
    seed: u64,
) -> Result<(), Error> {
    let pairs = parse_pairs(pairs)?;
    let cameras = load_cameras(synth_dir.join("cameras.json"))?;
    let images = load_target_images(&synth_dir.join("images"), &cameras)?;
    let train_set = every_nth(&cameras, &images, test_every, false);
    let test_set = every_nth(&cameras, &images, test_every, true);

    let mut csv = String::from("color_degree,opacity_degree,psnr,ssim\n");
    println!("color_degree,opacity_degree,psnr,ssim");
    for (lc, lo) in pairs {
        let scene = load_splat_ply(synth_dir.join("init.ply"), lc, lo)?;
        let cfg = texsplat::trainer::TrainConfig {
            iterations,
            eval_every: iterations.max(1),
            seed,
            ..texsplat::trainer::TrainConfig::default()
        };
        let (trained, _) = train(scene, &train_set, None, &cfg, None)?;
        let table = evaluate(&trained, &test_set, &RenderOptions::default())?;
        let line = format!("{lc},{lo},{:.4},{:.6}", table.mean_psnr, table.mean_ssim);
        println!("{line}");
        csv.push_str(&line);
        csv.push('\n');
    }
    let path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| synth_dir.join("ablation.csv"));
    std::fs::write(path, csv)?;
    Ok(())
}
