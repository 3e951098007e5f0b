use opticenter_core::{LineObservation, ObservationSet};
use serde::Serialize;

use crate::error::{PsfError, Result};
use crate::filters::{gaussian_blur, tophat};
use crate::label::{otsu_threshold, threshold_and_label, volume_filter, ThresholdSpec};
use crate::pca::{component_pca, DetectedPsf};
use crate::stack::VolumeStack;

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractionParams {
    pub blur_sigmas: [f64; 3],
    pub tophat_half_sizes: [usize; 3],
    pub threshold: ThresholdSpec,
    pub min_volume: usize,
    pub max_extent: [usize; 3],
    /// Keep components with `lambda1 / lambda2` strictly above this.
    pub ratio_filter: f64,
}

impl Default for ExtractionParams {
    fn default() -> Self {
        Self {
            blur_sigmas: [1.0, 1.0, 1.0],
            tophat_half_sizes: [5, 5, 5],
            threshold: ThresholdSpec::Otsu,
            min_volume: 20,
            max_extent: [31, 31, 31],
            ratio_filter: 2.2,
        }
    }
}

impl ExtractionParams {
    pub fn validate(&self) -> Result<()> {
        if self
            .blur_sigmas
            .iter()
            .any(|s| !(*s >= 0.0 && s.is_finite()))
        {
            return Err(PsfError::InvalidParams(
                "blur sigmas must be nonnegative".into(),
            ));
        }
        if self.tophat_half_sizes.contains(&0) {
            return Err(PsfError::InvalidParams(
                "top-hat half-sizes must be at least 1".into(),
            ));
        }
        if self.min_volume == 0 || self.max_extent.contains(&0) {
            return Err(PsfError::InvalidParams(
                "min_volume and max_extent must be at least 1".into(),
            ));
        }
        if !(self.ratio_filter >= 0.0) {
            return Err(PsfError::InvalidParams(
                "ratio filter must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Everything the pipeline found, in label order.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Extraction {
    #[serde(skip)]
    pub observations: ObservationSet,
    #[serde(skip)]
    pub detected: Vec<DetectedPsf>,
    pub threshold: f64,
    pub components: usize,
    pub after_volume_filter: usize,
    /// Components PCA could not handle; they are skipped.
    pub degenerate: usize,
    pub rejected_by_ratio: usize,
}

/// Blur, top-hat, threshold and label, volume filter, PCA, elongation
/// filter. Each kept bead becomes a line through its centroid along its
/// principal axis, weighted by `lambda1 / lambda2`.
pub fn extract(stack: &VolumeStack, params: &ExtractionParams) -> Result<Extraction> {
    params.validate()?;
    let blurred = gaussian_blur(stack, params.blur_sigmas)?;
    let background_free = tophat(&blurred, params.tophat_half_sizes)?;
    let threshold = match params.threshold {
        ThresholdSpec::Value(v) => v,
        ThresholdSpec::Otsu => otsu_threshold(&background_free),
    };
    let components = threshold_and_label(&background_free, ThresholdSpec::Value(threshold));
    let n_components = components.len();
    let kept = volume_filter(
        &background_free,
        components,
        params.min_volume,
        params.max_extent,
    )?;

    let mut out = Extraction {
        threshold,
        components: n_components,
        after_volume_filter: kept.len(),
        ..Extraction::default()
    };
    let mut observations = Vec::new();
    for component in &kept {
        let psf = match component_pca(&background_free, component) {
            Ok(p) => p,
            Err(PsfError::DegenerateComponent { .. }) => {
                out.degenerate += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let ratio = psf.elongation();
        if !(ratio > params.ratio_filter) || !ratio.is_finite() {
            out.rejected_by_ratio += 1;
            continue;
        }
        observations.push(LineObservation::from_unit(
            psf.centroid,
            psf.principal_axis,
            ratio,
        )?);
        out.detected.push(psf);
    }
    out.observations = ObservationSet::new(observations);
    Ok(out)
}

pub fn extract_observations(
    stack: &VolumeStack,
    params: &ExtractionParams,
) -> Result<ObservationSet> {
    Ok(extract(stack, params)?.observations)
}
