//! Synthetic dataset generator: structure, determinism, self-consistency.

use tempfile::tempdir;

use texsplat::rasterizer::{render, RenderOptions};
use texsplat::scene::{load_cameras, load_checkpoint, load_splat_ply, read_image};
use texsplat::synth::{build, write_dataset, SceneKind, SynthSpec};

fn spec(kind: SceneKind, count: usize) -> SynthSpec {
    SynthSpec {
        kind,
        count,
        width: 32,
        height: 32,
        camera_count: 5,
        ring_radius: 5.0,
        seed: 123,
        color_degree: 2,
        opacity_degree: 2,
    }
}

#[test]
fn dataset_files_are_complete_and_deterministic() {
    let dir_a = tempdir().unwrap();
    let dir_b = tempdir().unwrap();
    let s = spec(SceneKind::SingleEllipsoid, 1);
    write_dataset(&s, dir_a.path()).unwrap();
    write_dataset(&s, dir_b.path()).unwrap();

    for name in ["init.ply", "cameras.json", "groundtruth.ply"] {
        let a = std::fs::read(dir_a.path().join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
        assert!(!a.is_empty());
    }
    for i in 0..5 {
        let name = format!("images/{i:05}.png");
        let a = std::fs::read(dir_a.path().join(&name)).unwrap();
        let b = std::fs::read(dir_b.path().join(&name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
    assert!(!dir_a.path().join("images/00005.png").exists());
}

#[test]
fn init_ply_loads_back_to_the_degraded_scene() {
    let dir = tempdir().unwrap();
    let s = spec(SceneKind::Grid, 9);
    write_dataset(&s, dir.path()).unwrap();

    let synth = build(&s).unwrap();
    let loaded = load_splat_ply(dir.path().join("init.ply"), 2, 2).unwrap();
    assert_eq!(loaded.gaussians.len(), 9);
    for (a, b) in synth.init.gaussians.iter().zip(&loaded.gaussians) {
        assert_eq!(a.position, b.position);
        assert_eq!(a.rotation, b.rotation);
        assert_eq!(a.scale, b.scale);
        for (x, y) in a.color_sh.iter().zip(&b.color_sh) {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
        for (x, y) in a.opacity_sh.iter().zip(&b.opacity_sh) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    // Ground-truth geometry is shared bit-for-bit with the init.
    let gt = load_checkpoint(dir.path().join("groundtruth.ply")).unwrap();
    for (a, b) in gt.gaussians.iter().zip(&loaded.gaussians) {
        assert_eq!(a.position, b.position);
        assert_eq!(a.rotation, b.rotation);
        assert_eq!(a.scale, b.scale);
    }
}

#[test]
fn two_tone_ground_truth_is_z_linear_only() {
    let synth = build(&spec(SceneKind::TwoToneOpacity, 1)).unwrap();
    let gt = &synth.ground_truth;
    assert_eq!(gt.opacity_degree, 1);
    assert_eq!(gt.gaussians.len(), 1);
    let op = &gt.gaussians[0].opacity_sh;
    assert_eq!(op.len(), 4);
    assert_eq!(op[0], 0.0);
    assert_eq!(op[1], 0.0);
    assert!(op[2] > 0.0);
    assert_eq!(op[3], 0.0);
    // Color carries no texture.
    let bc = gt.color_coeffs();
    for c in 0..3 {
        assert!(gt.gaussians[0].color_sh[c * bc + 1..(c + 1) * bc]
            .iter()
            .all(|&v| v == 0.0));
    }
}

#[test]
fn targets_re_render_identically_from_saved_ground_truth() {
    let dir = tempdir().unwrap();
    let s = spec(SceneKind::RandomN, 6);
    write_dataset(&s, dir.path()).unwrap();

    let gt = load_checkpoint(dir.path().join("groundtruth.ply")).unwrap();
    let cameras = load_cameras(dir.path().join("cameras.json")).unwrap();
    for (i, cam) in cameras.iter().enumerate() {
        let fb = render(&gt, cam, &RenderOptions::default());
        let png = read_image(dir.path().join(format!("images/{i:05}.png"))).unwrap();
        // The stored target is the quantized render.
        for (a, b) in fb.color.data.iter().zip(&png.data) {
            let quantized = (a.clamp(0.0, 1.0) * 255.0).round() / 255.0;
            assert!((quantized - b).abs() < 1e-12);
        }
    }
}

#[test]
fn scene_is_actually_in_frame() {
    // The camera framing must put real signal in the images, otherwise the
    // training oracles are vacuous.
    for kind in [
        SceneKind::SingleEllipsoid,
        SceneKind::Grid,
        SceneKind::TwoToneOpacity,
        SceneKind::RandomN,
    ] {
        let count = match kind {
            SceneKind::Grid => 27,
            SceneKind::RandomN => 8,
            _ => 1,
        };
        let synth = build(&spec(kind, count)).unwrap();
        for (i, cam) in synth.cameras.iter().enumerate() {
            let fb = render(&synth.ground_truth, cam, &RenderOptions::default());
            let lit = fb
                .color
                .data
                .chunks_exact(3)
                .filter(|px| px.iter().any(|&v| v > 0.02))
                .count();
            let frac = lit as f64 / (fb.color.width * fb.color.height) as f64;
            assert!(
                frac > 0.05,
                "{} camera {i}: only {:.1}% of pixels lit",
                kind.name(),
                frac * 100.0
            );
        }
    }
}
