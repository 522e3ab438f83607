use thiserror::Error;

/// Errors for operations on external inputs (files, datasets, configs).
///
/// API-misuse conditions (non-unit directions, mismatched coefficient
/// lengths, out-of-range pixels) are contract violations and panic instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("ply: {0}")]
    Ply(String),

    #[error("cameras: {0}")]
    Cameras(String),

    #[error("image: {0}")]
    Image(String),

    #[error("scene: {0}")]
    Scene(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("training aborted at iteration {iteration} (camera {camera}): {message}")]
    Training {
        iteration: usize,
        camera: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
