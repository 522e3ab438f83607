//! Checkpoint PLY: the full textured scene in double precision so trained
//! coefficients round-trip exactly.
//!
//! Layout per vertex: `x y z scale_0..2 (log) rot_0..3 tex_dc_0..2
//! tex_rest_* opac_*`, with `tex_rest` channel-major over the higher-degree
//! color coefficients. A comment line records the SH degrees and the
//! ellipsoid scale mode.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::{Quaternion, Unit, UnitQuaternion, Vector3};

use super::ply::{self, ScalarType};
use super::{EllipsoidScaleMode, SceneModel, TexturedGaussian};
use crate::error::Error;
use crate::sh;
use crate::Result;

const META_PREFIX: &str = "texsplat";

fn meta_comment(scene: &SceneModel) -> String {
    format!(
        "{META_PREFIX} color_degree={} opacity_degree={} scale_mode={}",
        scene.color_degree,
        scene.opacity_degree,
        scene.ellipsoid_scale_mode.name()
    )
}

fn parse_meta(comments: &[String]) -> Result<(usize, usize, EllipsoidScaleMode)> {
    for c in comments {
        let mut words = c.split_whitespace();
        if words.next() != Some(META_PREFIX) {
            continue;
        }
        let mut color_degree = None;
        let mut opacity_degree = None;
        let mut mode = None;
        for w in words {
            if let Some(v) = w.strip_prefix("color_degree=") {
                color_degree = v.parse::<usize>().ok();
            } else if let Some(v) = w.strip_prefix("opacity_degree=") {
                opacity_degree = v.parse::<usize>().ok();
            } else if let Some(v) = w.strip_prefix("scale_mode=") {
                mode = EllipsoidScaleMode::parse(v).ok();
            }
        }
        return match (color_degree, opacity_degree, mode) {
            (Some(c), Some(o), Some(m)) => Ok((c, o, m)),
            _ => Err(Error::Ply(format!("malformed checkpoint comment {c:?}"))),
        };
    }
    Err(Error::Ply(
        "checkpoint is missing the texsplat metadata comment".into(),
    ))
}

fn property_names(color_degree: usize, opacity_degree: usize) -> Vec<String> {
    let bc = sh::coeff_count(color_degree);
    let bo = sh::coeff_count(opacity_degree);
    let mut names: Vec<String> = ["x", "y", "z", "scale_0", "scale_1", "scale_2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for k in 0..4 {
        names.push(format!("rot_{k}"));
    }
    for c in 0..3 {
        names.push(format!("tex_dc_{c}"));
    }
    for k in 0..3 * (bc - 1) {
        names.push(format!("tex_rest_{k}"));
    }
    for k in 0..bo {
        names.push(format!("opac_{k}"));
    }
    names
}

/// Writes the scene as a double-precision checkpoint PLY.
pub fn save_checkpoint(scene: &SceneModel, path: impl AsRef<Path>) -> Result<()> {
    let bc = scene.color_coeffs();
    let mut w = BufWriter::new(File::create(path)?);
    let props: Vec<(String, ScalarType)> = property_names(scene.color_degree, scene.opacity_degree)
        .into_iter()
        .map(|n| (n, ScalarType::F64))
        .collect();
    ply::write_header(
        &mut w,
        &[meta_comment(scene)],
        scene.gaussians.len(),
        &props,
    )?;
    for g in &scene.gaussians {
        for v in &g.position {
            ply::write_f64(&mut w, *v)?;
        }
        for v in &g.scale {
            ply::write_f64(&mut w, v.ln())?;
        }
        // coords order is (i, j, k, w); stored scalar-first.
        let q = g.rotation.quaternion().coords;
        for v in [q[3], q[0], q[1], q[2]] {
            ply::write_f64(&mut w, v)?;
        }
        for c in 0..3 {
            ply::write_f64(&mut w, g.color_sh[c * bc])?;
        }
        for c in 0..3 {
            for k in 1..bc {
                ply::write_f64(&mut w, g.color_sh[c * bc + k])?;
            }
        }
        for v in &g.opacity_sh {
            ply::write_f64(&mut w, *v)?;
        }
    }
    Ok(())
}

/// Loads a checkpoint written by [`save_checkpoint`]. Quaternions are
/// stored already normalized and are only validated, so a save/load cycle
/// is bit-exact.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<SceneModel> {
    let mut reader = BufReader::new(File::open(path.as_ref())?);
    let header = ply::parse_header(&mut reader)?;
    let (color_degree, opacity_degree, mode) = parse_meta(&header.comments)?;
    if color_degree > sh::MAX_DEGREE || opacity_degree > sh::MAX_DEGREE {
        return Err(Error::Ply(format!(
            "checkpoint degrees ({color_degree}, {opacity_degree}) exceed the supported maximum"
        )));
    }

    let names = property_names(color_degree, opacity_degree);
    let mut indices = Vec::with_capacity(names.len());
    for name in &names {
        indices.push(header.require(name)?);
    }

    let stride = header.properties.len();
    let values = ply::read_vertices(&mut reader, &header)?;
    let bc = sh::coeff_count(color_degree);
    let bo = sh::coeff_count(opacity_degree);

    let mut gaussians = Vec::with_capacity(header.vertex_count);
    for v in 0..header.vertex_count {
        let row = &values[v * stride..(v + 1) * stride];
        let field = |slot: usize| -> Result<f64> {
            let value = row[indices[slot]];
            if !value.is_finite() {
                return Err(Error::Ply(format!(
                    "non-finite value for property {:?} at vertex {v}",
                    names[slot]
                )));
            }
            Ok(value)
        };

        let position = Vector3::new(field(0)?, field(1)?, field(2)?);
        let scale = Vector3::new(field(3)?.exp(), field(4)?.exp(), field(5)?.exp());
        let quat = Quaternion::new(field(6)?, field(7)?, field(8)?, field(9)?);
        if (quat.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Ply(format!(
                "checkpoint quaternion at vertex {v} is not unit (norm {})",
                quat.norm()
            )));
        }
        let rotation: UnitQuaternion<f64> = Unit::new_unchecked(quat);

        let mut color_sh = vec![0.0; 3 * bc];
        for c in 0..3 {
            color_sh[c * bc] = field(10 + c)?;
        }
        let rest_base = 13;
        for c in 0..3 {
            for k in 1..bc {
                color_sh[c * bc + k] = field(rest_base + c * (bc - 1) + (k - 1))?;
            }
        }
        let opac_base = rest_base + 3 * (bc - 1);
        let mut opacity_sh = vec![0.0; bo];
        for (k, coeff) in opacity_sh.iter_mut().enumerate() {
            *coeff = field(opac_base + k)?;
        }

        gaussians.push(TexturedGaussian {
            position,
            rotation,
            scale,
            color_sh,
            opacity_sh,
        });
    }

    SceneModel::new(gaussians, color_degree, opacity_degree, mode)
}
