//! CPU renderer and appearance optimizer for surface-textured 3D Gaussian
//! splats.
//!
//! Each splat carries spherical-harmonic coefficient blocks for color and
//! opacity that are evaluated at the ray–ellipsoid intersection direction,
//! so a single Gaussian can vary in color and opacity across its surface.
//! Geometry (position, rotation, scale) is frozen; only the SH coefficient
//! blocks are trainable.

pub mod backward;
pub mod error;
pub mod geometry;
pub mod loss;
pub mod rasterizer;
pub mod scene;
pub mod sh;
pub mod synth;
pub mod trainer;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
