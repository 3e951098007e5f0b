use thiserror::Error;

#[derive(Debug, Error)]
pub enum PsfError {
    #[error("bead {index} at ({x:.1}, {y:.1}, {z:.1}) does not fit inside the stack with a 3-sigma margin")]
    BeadOutOfBounds {
        index: usize,
        x: f64,
        y: f64,
        z: f64,
    },
    #[error("component of {voxels} voxels is too small or flat for PCA")]
    DegenerateComponent { voxels: usize },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("stack has {found} voxels, dimensions need {expected}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("could not place {placed} of {wanted} beads with the requested spacing")]
    Crowded { placed: usize, wanted: usize },
    #[error(transparent)]
    Core(#[from] opticenter_core::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PsfError>;
