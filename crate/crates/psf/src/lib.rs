//! Synthetic fluorescent-bead volumes and the detection pipeline that turns
//! a volume into line observations: blur, top-hat, threshold and label,
//! volume filtering, then per-component PCA.

pub mod analysis;
pub mod error;
pub mod extract;
pub mod filters;
pub mod label;
pub mod pca;
pub mod stack;
pub mod synth;

pub use analysis::{orientation_vs_distance, LinearFit, OrientationTable};
pub use error::{PsfError, Result};
pub use extract::{extract, extract_observations, Extraction, ExtractionParams};
pub use filters::{gaussian_blur, tophat};
pub use label::{otsu_threshold, threshold_and_label, volume_filter, Component, ThresholdSpec};
pub use pca::{component_pca, DetectedPsf};
pub use stack::VolumeStack;
pub use synth::{plant_scene, synthesize_stack, BeadParams, PlantingConfig};
