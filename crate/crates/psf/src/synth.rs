use nalgebra::Vector3;
use opticenter_core::{LineObservation, ObservationSet, Point3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{PsfError, Result};
use crate::stack::VolumeStack;

/// How each bead is rendered.
#[derive(Clone, Debug, PartialEq)]
pub struct BeadParams {
    /// Standard deviation along the line direction (voxels).
    pub sigma_parallel: f64,
    /// Standard deviation across the line direction (voxels).
    pub sigma_perpendicular: f64,
    pub peak_intensity: f64,
    pub background: f64,
    pub noise_sigma: f64,
    pub value_range: (f32, f32),
}

impl Default for BeadParams {
    fn default() -> Self {
        Self {
            sigma_parallel: 4.0,
            sigma_perpendicular: 1.5,
            peak_intensity: 2000.0,
            background: 200.0,
            noise_sigma: 20.0,
            value_range: crate::stack::DEFAULT_RANGE,
        }
    }
}

impl BeadParams {
    fn validate(&self) -> Result<()> {
        if !(self.sigma_perpendicular > 0.0 && self.sigma_parallel >= self.sigma_perpendicular) {
            return Err(PsfError::InvalidParams(format!(
                "bead sigmas must satisfy sigma_parallel >= sigma_perpendicular > 0, got {} and {}",
                self.sigma_parallel, self.sigma_perpendicular
            )));
        }
        if !(self.peak_intensity >= 0.0 && self.noise_sigma >= 0.0 && self.background.is_finite()) {
            return Err(PsfError::InvalidParams(
                "peak intensity and noise sigma must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Renders every observation as an anisotropic Gaussian bead centered at
/// its anchor and elongated along its direction, on a constant background
/// with i.i.d. Gaussian noise, then clamps and rounds to the value range.
///
/// Spherical beads (`sigma_parallel == sigma_perpendicular`) are allowed so
/// that filters on elongation can be exercised.
pub fn synthesize_stack<R: Rng + ?Sized>(
    scene: &ObservationSet,
    params: &BeadParams,
    dims: [usize; 3],
    rng: &mut R,
) -> Result<VolumeStack> {
    params.validate()?;
    let mut stack = VolumeStack::filled(dims, params.value_range.0, params.value_range)?;
    let mut voxels = vec![params.background as f32; stack.len()];
    let margin = 3.0 * params.sigma_parallel;
    let radius = margin.ceil() as i64 + 1;
    let inv_par = 1.0 / (params.sigma_parallel * params.sigma_parallel);
    let inv_perp = 1.0 / (params.sigma_perpendicular * params.sigma_perpendicular);

    for (index, bead) in scene.iter().enumerate() {
        let a = bead.anchor();
        let fits = (0..3).all(|k| a[k] - margin >= 0.0 && a[k] + margin <= (dims[k] - 1) as f64);
        if !fits {
            return Err(PsfError::BeadOutOfBounds {
                index,
                x: a.x,
                y: a.y,
                z: a.z,
            });
        }
        if params.peak_intensity == 0.0 {
            continue;
        }
        let n = bead.direction().into_inner();
        let lo = |k: usize| (a[k].round() as i64 - radius).max(0) as usize;
        let hi = |k: usize| ((a[k].round() as i64 + radius) as usize).min(dims[k] - 1);
        for z in lo(2)..=hi(2) {
            for y in lo(1)..=hi(1) {
                for x in lo(0)..=hi(0) {
                    let d = Vector3::new(x as f64 - a.x, y as f64 - a.y, z as f64 - a.z);
                    let s = d.dot(&n);
                    let r2 = (d.norm_squared() - s * s).max(0.0);
                    let q = s * s * inv_par + r2 * inv_perp;
                    if q > 25.0 {
                        continue;
                    }
                    let i = stack.index(x, y, z);
                    voxels[i] += (params.peak_intensity * (-0.5 * q).exp()) as f32;
                }
            }
        }
    }

    if params.noise_sigma > 0.0 {
        for v in voxels.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *v += (params.noise_sigma * z) as f32;
        }
    }
    voxels.iter_mut().for_each(|v| *v = v.round());
    stack = stack.with_voxels(voxels);
    Ok(stack)
}

/// Layout of a synthetic bead volume.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantingConfig {
    pub dims: [usize; 3],
    pub n_beads: usize,
    pub center: Point3,
    pub layer_depths: Vec<f64>,
    /// Minimum distance between bead anchors (voxels).
    pub min_spacing: f64,
    /// Lateral distance kept free at the stack borders (voxels).
    pub border: f64,
}

impl Default for PlantingConfig {
    /// 256 x 256 x 128 voxels, 50 beads in two layers, lines converging at
    /// `(128, 128, 500)`.
    fn default() -> Self {
        Self {
            dims: [256, 256, 128],
            n_beads: 50,
            center: Point3::new(128.0, 128.0, 500.0),
            layer_depths: vec![40.0, 88.0],
            min_spacing: 24.0,
            border: 16.0,
        }
    }
}

const PLACEMENT_ATTEMPTS: usize = 100_000;

/// Places beads uniformly at random (rejecting crowded positions), split
/// evenly across the layers, each pointing at the center.
pub fn plant_scene<R: Rng + ?Sized>(
    config: &PlantingConfig,
    rng: &mut R,
) -> Result<ObservationSet> {
    if config.layer_depths.is_empty() {
        return Err(PsfError::InvalidParams(
            "at least one layer depth is needed".into(),
        ));
    }
    let span = |k: usize| (config.border, config.dims[k] as f64 - 1.0 - config.border);
    let (x0, x1) = span(0);
    let (y0, y1) = span(1);
    if !(x0 < x1 && y0 < y1) {
        return Err(PsfError::InvalidParams(
            "border leaves no room for beads".into(),
        ));
    }
    let mut anchors: Vec<Point3> = Vec::with_capacity(config.n_beads);
    let mut attempts = 0;
    while anchors.len() < config.n_beads {
        if attempts == PLACEMENT_ATTEMPTS {
            return Err(PsfError::Crowded {
                placed: anchors.len(),
                wanted: config.n_beads,
            });
        }
        attempts += 1;
        let z = config.layer_depths[anchors.len() % config.layer_depths.len()];
        let p = Point3::new(rng.random_range(x0..=x1), rng.random_range(y0..=y1), z);
        if anchors.iter().all(|q| (p - q).norm() >= config.min_spacing) {
            anchors.push(p);
        }
    }
    let observations = anchors
        .into_iter()
        .map(|a| LineObservation::new(a, config.center - a, 1.0))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(ObservationSet::new(observations))
}
