//! Loader and writer for input splat PLY files in the standard layout
//! emitted by splatting pipelines: `x y z nx ny nz f_dc_0..2 f_rest_0..44
//! opacity scale_0..2 rot_0..3`, all float32, binary little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use super::ply::{self, ScalarType};
use super::{EllipsoidScaleMode, SceneModel, TexturedGaussian};
use crate::error::Error;
use crate::sh::{self, SH_C0};
use crate::Result;

/// Number of higher-degree color fields in the standard layout.
pub const F_REST_COUNT: usize = 45;

/// One vertex of the standard splat layout, used when writing.
#[derive(Debug, Clone)]
pub struct SplatVertex {
    pub position: [f32; 3],
    pub normal: [f32; 3],
    pub f_dc: [f32; 3],
    pub f_rest: [f32; F_REST_COUNT],
    /// Pre-sigmoid opacity.
    pub opacity: f32,
    pub log_scale: [f32; 3],
    /// Quaternion, scalar first.
    pub rot: [f32; 4],
}

impl Default for SplatVertex {
    fn default() -> Self {
        SplatVertex {
            position: [0.0; 3],
            normal: [0.0; 3],
            f_dc: [0.0; 3],
            f_rest: [0.0; F_REST_COUNT],
            opacity: 0.0,
            log_scale: [0.0; 3],
            rot: [1.0, 0.0, 0.0, 0.0],
        }
    }
}

/// Decodes stored geometry fields into scene conventions: scales are
/// exponentiated, quaternions normalized.
pub(crate) fn decode_geometry(
    position: [f64; 3],
    log_scale: [f64; 3],
    rot: [f64; 4],
) -> Result<(Vector3<f64>, UnitQuaternion<f64>, Vector3<f64>)> {
    let scale = Vector3::new(log_scale[0].exp(), log_scale[1].exp(), log_scale[2].exp());
    let raw = Quaternion::new(rot[0], rot[1], rot[2], rot[3]);
    if raw.norm() < 1e-12 {
        return Err(Error::Ply("degenerate zero-norm quaternion".into()));
    }
    let rotation = UnitQuaternion::from_quaternion(raw);
    Ok((Vector3::from_column_slice(&position), rotation, scale))
}

/// Initial color DC logit so the activated DC color reproduces the source
/// splat's base color `f_dc * Y00 + 0.5` through the sigmoid pipeline.
pub(crate) fn color_dc_logit(f_dc: f64) -> f64 {
    let base = (f_dc * SH_C0 + 0.5).clamp(1e-4, 1.0 - 1e-4);
    sh::logit(base) / SH_C0
}

/// Initial opacity DC logit so `sigmoid(dc * Y00)` equals the source
/// splat's `sigmoid(opacity)`.
pub(crate) fn opacity_dc_logit(opacity: f64) -> f64 {
    opacity / SH_C0
}

/// Loads a splat PLY and initializes a textured scene: DC coefficients
/// carry the source base color and opacity, all higher-degree coefficients
/// start at zero (view-dependent color fields are ignored). The scene uses
/// the default square-root ellipsoid scaling.
pub fn load_splat_ply(
    path: impl AsRef<Path>,
    color_degree: usize,
    opacity_degree: usize,
) -> Result<SceneModel> {
    let path = path.as_ref();
    let mut reader = BufReader::new(File::open(path)?);
    let header = ply::parse_header(&mut reader)?;

    const REQUIRED: [&str; 14] = [
        "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2",
        "rot_0", "rot_1", "rot_2", "rot_3",
    ];
    let mut idx = [0usize; 14];
    for (slot, name) in idx.iter_mut().zip(REQUIRED) {
        *slot = header.require(name)?;
    }

    let stride = header.properties.len();
    let values = ply::read_vertices(&mut reader, &header)?;

    let bc = sh::coeff_count(color_degree);
    let bo = sh::coeff_count(opacity_degree);
    let mut gaussians = Vec::with_capacity(header.vertex_count);
    for v in 0..header.vertex_count {
        let row = &values[v * stride..(v + 1) * stride];
        let field = |slot: usize| -> Result<f64> {
            let value = row[idx[slot]];
            if !value.is_finite() {
                return Err(Error::Ply(format!(
                    "non-finite value for property {:?} at vertex {v}",
                    REQUIRED[slot]
                )));
            }
            Ok(value)
        };

        let position = [field(0)?, field(1)?, field(2)?];
        let log_scale = [field(7)?, field(8)?, field(9)?];
        let rot = [field(10)?, field(11)?, field(12)?, field(13)?];
        let (position, rotation, scale) = decode_geometry(position, log_scale, rot)
            .map_err(|e| Error::Ply(format!("{e} at vertex {v}")))?;

        let mut color_sh = vec![0.0; 3 * bc];
        for c in 0..3 {
            color_sh[c * bc] = color_dc_logit(field(3 + c)?);
        }
        let mut opacity_sh = vec![0.0; bo];
        opacity_sh[0] = opacity_dc_logit(field(6)?);

        gaussians.push(TexturedGaussian {
            position,
            rotation,
            scale,
            color_sh,
            opacity_sh,
        });
    }

    SceneModel::new(
        gaussians,
        color_degree,
        opacity_degree,
        EllipsoidScaleMode::SqrtScale,
    )
}

/// Writes vertices in the standard splat layout.
pub fn write_splat_ply(path: impl AsRef<Path>, vertices: &[SplatVertex]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut props: Vec<(String, ScalarType)> = Vec::new();
    for name in ["x", "y", "z", "nx", "ny", "nz"] {
        props.push((name.to_string(), ScalarType::F32));
    }
    for c in 0..3 {
        props.push((format!("f_dc_{c}"), ScalarType::F32));
    }
    for k in 0..F_REST_COUNT {
        props.push((format!("f_rest_{k}"), ScalarType::F32));
    }
    props.push(("opacity".to_string(), ScalarType::F32));
    for k in 0..3 {
        props.push((format!("scale_{k}"), ScalarType::F32));
    }
    for k in 0..4 {
        props.push((format!("rot_{k}"), ScalarType::F32));
    }
    ply::write_header(&mut w, &[], vertices.len(), &props)?;
    for v in vertices {
        for x in v.position {
            ply::write_f32(&mut w, x)?;
        }
        for x in v.normal {
            ply::write_f32(&mut w, x)?;
        }
        for x in v.f_dc {
            ply::write_f32(&mut w, x)?;
        }
        for x in v.f_rest {
            ply::write_f32(&mut w, x)?;
        }
        ply::write_f32(&mut w, v.opacity)?;
        for x in v.log_scale {
            ply::write_f32(&mut w, x)?;
        }
        for x in v.rot {
            ply::write_f32(&mut w, x)?;
        }
    }
    Ok(())
}
