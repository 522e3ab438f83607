//! Core domain types and persistent I/O (splat PLY, checkpoints, cameras,
//! images).

mod cameras;
mod checkpoint;
mod images;
mod ply;
mod splat_ply;

pub use cameras::{load_cameras, save_cameras};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use images::{read_image, write_image};
pub use splat_ply::{load_splat_ply, write_splat_ply, SplatVertex};

pub(crate) use splat_ply::{
    color_dc_logit as splat_color_dc_logit, opacity_dc_logit as splat_opacity_dc_logit,
};

/// Splat-vertex geometry decoded with the loader's conventions.
pub(crate) fn decode_splat_geometry(
    v: &SplatVertex,
) -> Result<(Vector3<f64>, UnitQuaternion<f64>, Vector3<f64>)> {
    splat_ply::decode_geometry(
        [
            v.position[0] as f64,
            v.position[1] as f64,
            v.position[2] as f64,
        ],
        [
            v.log_scale[0] as f64,
            v.log_scale[1] as f64,
            v.log_scale[2] as f64,
        ],
        [
            v.rot[0] as f64,
            v.rot[1] as f64,
            v.rot[2] as f64,
            v.rot[3] as f64,
        ],
    )
}

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use crate::error::Error;
use crate::sh;
use crate::Result;

/// Which per-axis semi-axes the intersection ellipsoid uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EllipsoidScaleMode {
    /// Semi-axes equal the Gaussian scale.
    RawScale,
    /// Semi-axes equal the square root of the Gaussian scale (larger
    /// ellipsoids for sub-unit scales; does not change the splat footprint).
    SqrtScale,
}

impl EllipsoidScaleMode {
    pub fn semi_axes(self, scale: &Vector3<f64>) -> Vector3<f64> {
        match self {
            EllipsoidScaleMode::RawScale => *scale,
            EllipsoidScaleMode::SqrtScale => scale.map(f64::sqrt),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EllipsoidScaleMode::RawScale => "raw",
            EllipsoidScaleMode::SqrtScale => "sqrt",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(EllipsoidScaleMode::RawScale),
            "sqrt" => Ok(EllipsoidScaleMode::SqrtScale),
            other => Err(Error::Config(format!(
                "unknown scale mode {other:?} (expected raw|sqrt)"
            ))),
        }
    }
}

/// One splat: frozen geometry plus trainable SH coefficient blocks.
///
/// `color_sh` is channel-major: `color_sh[c * b + k]` is coefficient `k` of
/// channel `c`, with `b = (color_degree + 1)^2`. `opacity_sh` holds the
/// single opacity channel. Coefficients are pre-activation logits; the
/// sigmoid is applied to the summed SH expansion at evaluation time.
#[derive(Debug, Clone, PartialEq)]
pub struct TexturedGaussian {
    pub position: Vector3<f64>,
    pub rotation: UnitQuaternion<f64>,
    pub scale: Vector3<f64>,
    pub color_sh: Vec<f64>,
    pub opacity_sh: Vec<f64>,
}

impl TexturedGaussian {
    /// Coefficient count per color channel.
    pub fn color_coeffs(&self) -> usize {
        self.color_sh.len() / 3
    }

    fn validate(&self, index: usize, color_degree: usize, opacity_degree: usize) -> Result<()> {
        let bc = sh::coeff_count(color_degree);
        let bo = sh::coeff_count(opacity_degree);
        if self.color_sh.len() != 3 * bc {
            return Err(Error::Scene(format!(
                "gaussian {index}: color_sh has {} coefficients, expected {}",
                self.color_sh.len(),
                3 * bc
            )));
        }
        if self.opacity_sh.len() != bo {
            return Err(Error::Scene(format!(
                "gaussian {index}: opacity_sh has {} coefficients, expected {bo}",
                self.opacity_sh.len()
            )));
        }
        if !(self.scale.x > 0.0 && self.scale.y > 0.0 && self.scale.z > 0.0) {
            return Err(Error::Scene(format!(
                "gaussian {index}: scale must be strictly positive, got {:?}",
                self.scale
            )));
        }
        let norm = self.rotation.as_ref().norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Scene(format!(
                "gaussian {index}: rotation norm {norm} deviates from 1 by more than 1e-9"
            )));
        }
        for v in self
            .position
            .iter()
            .chain(self.color_sh.iter())
            .chain(self.opacity_sh.iter())
        {
            if !v.is_finite() {
                return Err(Error::Scene(format!("gaussian {index}: non-finite field")));
            }
        }
        Ok(())
    }
}

/// Ordered splat collection plus the shared texture configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneModel {
    pub gaussians: Vec<TexturedGaussian>,
    pub color_degree: usize,
    pub opacity_degree: usize,
    pub ellipsoid_scale_mode: EllipsoidScaleMode,
}

impl SceneModel {
    pub fn new(
        gaussians: Vec<TexturedGaussian>,
        color_degree: usize,
        opacity_degree: usize,
        ellipsoid_scale_mode: EllipsoidScaleMode,
    ) -> Result<Self> {
        if color_degree > sh::MAX_DEGREE || opacity_degree > sh::MAX_DEGREE {
            return Err(Error::Scene(format!(
                "SH degrees must be within [0, {}], got color {color_degree} opacity {opacity_degree}",
                sh::MAX_DEGREE
            )));
        }
        for (i, g) in gaussians.iter().enumerate() {
            g.validate(i, color_degree, opacity_degree)?;
        }
        Ok(SceneModel {
            gaussians,
            color_degree,
            opacity_degree,
            ellipsoid_scale_mode,
        })
    }

    /// Coefficients per color channel.
    pub fn color_coeffs(&self) -> usize {
        sh::coeff_count(self.color_degree)
    }

    /// Coefficients for the opacity channel.
    pub fn opacity_coeffs(&self) -> usize {
        sh::coeff_count(self.opacity_degree)
    }

    pub fn max_degree(&self) -> usize {
        self.color_degree.max(self.opacity_degree)
    }
}

/// Pinhole camera with a world-to-camera rigid transform; looks down +z.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    /// World-to-camera translation.
    pub translation: Vector3<f64>,
}

impl Camera {
    pub fn new(
        width: usize,
        height: usize,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        if width < 1 || height < 1 {
            return Err(Error::Cameras(format!(
                "image dimensions must be >= 1, got {width}x{height}"
            )));
        }
        let gram = rotation.transpose() * rotation;
        let drift = (gram - Matrix3::identity()).abs().max();
        if drift > 1e-6 {
            return Err(Error::Cameras(format!(
                "rotation is not orthonormal (max |R^T R - I| = {drift:.3e})"
            )));
        }
        if rotation.determinant() < 0.0 {
            return Err(Error::Cameras(
                "rotation has negative determinant (reflection)".into(),
            ));
        }
        Ok(Camera {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
        })
    }

    /// World point into the camera frame.
    pub fn to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }
}

/// Row-major float RGB image with channel values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRgb {
    pub width: usize,
    pub height: usize,
    /// `data[(y * width + x) * 3 + c]`
    pub data: Vec<f64>,
}

impl ImageRgb {
    pub fn new(width: usize, height: usize) -> Self {
        ImageRgb {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        let mut img = ImageRgb::new(width, height);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn same_dims(&self, other: &ImageRgb) -> bool {
        self.width == other.width && self.height == other.height
    }
}
