//! Camera description files: a JSON array of pinhole cameras with
//! world-to-camera extrinsics (row-major rotation), looking down +z.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::Camera;
use crate::error::Error;
use crate::Result;

#[derive(Debug, Serialize, Deserialize)]
struct CameraRecord {
    width: usize,
    height: usize,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    /// Row-major 3x3 world-to-camera rotation.
    rotation: [f64; 9],
    translation: [f64; 3],
}

/// Nearest rotation matrix in the Frobenius sense (via SVD, determinant
/// corrected to +1).
fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let det = (u * v_t).determinant();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, det.signum()));
    u * fix * v_t
}

/// Loads cameras in file order. Rotations are re-orthonormalized through
/// the nearest-rotation projection; drift beyond 1e-3 (including
/// reflections) is an error.
pub fn load_cameras(path: impl AsRef<Path>) -> Result<Vec<Camera>> {
    let reader = BufReader::new(File::open(path.as_ref())?);
    let records: Vec<CameraRecord> =
        serde_json::from_reader(reader).map_err(|e| Error::Cameras(e.to_string()))?;

    let mut cameras = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        for v in r.rotation.iter().chain(r.translation.iter()) {
            if !v.is_finite() {
                return Err(Error::Cameras(format!("camera {i}: non-finite extrinsics")));
            }
        }
        let raw = Matrix3::from_row_slice(&r.rotation);
        if raw.determinant() < 0.0 {
            return Err(Error::Cameras(format!(
                "camera {i}: rotation has determinant {:.3} (reflection)",
                raw.determinant()
            )));
        }
        let fixed = nearest_rotation(&raw);
        let drift = (raw - fixed).norm();
        if drift > 1e-3 {
            return Err(Error::Cameras(format!(
                "camera {i}: rotation drift {drift:.3e} from the nearest rotation exceeds 1e-3"
            )));
        }
        cameras.push(
            Camera::new(
                r.width,
                r.height,
                r.fx,
                r.fy,
                r.cx,
                r.cy,
                fixed,
                Vector3::from_column_slice(&r.translation),
            )
            .map_err(|e| Error::Cameras(format!("camera {i}: {e}")))?,
        );
    }
    Ok(cameras)
}

/// Writes cameras as pretty-printed JSON in the format read back by
/// [`load_cameras`].
pub fn save_cameras(path: impl AsRef<Path>, cameras: &[Camera]) -> Result<()> {
    let records: Vec<CameraRecord> = cameras
        .iter()
        .map(|c| {
            let mut rotation = [0.0; 9];
            for row in 0..3 {
                for col in 0..3 {
                    rotation[row * 3 + col] = c.rotation[(row, col)];
                }
            }
            CameraRecord {
                width: c.width,
                height: c.height,
                fx: c.fx,
                fy: c.fy,
                cx: c.cx,
                cy: c.cy,
                rotation,
                translation: [c.translation.x, c.translation.y, c.translation.z],
            }
        })
        .collect();
    let writer = BufWriter::new(File::create(path.as_ref())?);
    serde_json::to_writer_pretty(writer, &records).map_err(|e| Error::Cameras(e.to_string()))?;
    Ok(())
}
