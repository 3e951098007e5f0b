use nalgebra::{Matrix3, Unit, Vector3};
use opticenter_core::{Point3, UnitVec3};

use crate::error::{PsfError, Result};
use crate::label::Component;
use crate::stack::VolumeStack;

/// Grey-level statistics of one detected bead.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectedPsf {
    /// Intensity-weighted centroid in voxel coordinates.
    pub centroid: Point3,
    pub principal_axis: UnitVec3,
    /// Covariance eigenvalues, descending and nonnegative.
    pub eigenvalues: [f64; 3],
    pub voxel_volume: usize,
    pub total_intensity: f64,
}

impl DetectedPsf {
    /// Elongation `lambda1 / lambda2` (infinite for a perfect line).
    pub fn elongation(&self) -> f64 {
        self.eigenvalues[0] / self.eigenvalues[1]
    }
}

/// Orients `v` towards +z, then +y, then +x when the earlier components
/// vanish.
pub fn canonical_sign(v: Vector3<f64>) -> Vector3<f64> {
    for k in [2, 1, 0] {
        if v[k] > 0.0 {
            return v;
        }
        if v[k] < 0.0 {
            return -v;
        }
    }
    v
}

/// Intensity-weighted centroid and covariance of a component, with the
/// eigenvectors of the covariance sorted by decreasing eigenvalue.
///
/// Intensities are measured above the stack's value floor. A component needs
/// at least 4 voxels covering 2 distinct positions on every axis.
pub fn component_pca(stack: &VolumeStack, component: &Component) -> Result<DetectedPsf> {
    let degenerate = || PsfError::DegenerateComponent {
        voxels: component.volume(),
    };
    if component.volume() < 4 {
        return Err(degenerate());
    }
    let coords: Vec<[usize; 3]> = component.voxels.iter().map(|&i| stack.coords(i)).collect();
    for k in 0..3 {
        let first = coords[0][k];
        if coords.iter().all(|p| p[k] == first) {
            return Err(degenerate());
        }
    }

    let (floor, _) = stack.value_range();
    let mut mass = 0.0;
    let mut mean = Vector3::zeros();
    for (&i, p) in component.voxels.iter().zip(&coords) {
        let w = (stack.voxels()[i] - floor) as f64;
        mass += w;
        mean += Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64) * w;
    }
    if !(mass > 0.0) {
        return Err(degenerate());
    }
    mean /= mass;
    let mut cov = Matrix3::zeros();
    for (&i, p) in component.voxels.iter().zip(&coords) {
        let w = (stack.voxels()[i] - floor) as f64;
        let d = Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64) - mean;
        cov += d * d.transpose() * w;
    }
    cov /= mass;

    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let eigenvalues = order.map(|k| eig.eigenvalues[k].max(0.0));
    let axis = canonical_sign(eig.eigenvectors.column(order[0]).into_owned());
    Ok(DetectedPsf {
        centroid: Point3::from(mean),
        principal_axis: Unit::new_normalize(axis),
        eigenvalues,
        voxel_volume: component.volume(),
        total_intensity: mass,
    })
}
