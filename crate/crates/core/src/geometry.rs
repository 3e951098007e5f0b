//! Points, unit directions and weighted line observations.
//!
//! A line observation is the pair (center of mass, principal axis) measured
//! for one bead, plus a positive weight. The point-to-line residual
//! `(I - n n^T)(c - a)` is the quantity every model and metric is built on.

use std::io::{Read, Write};

use nalgebra::{Matrix3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type UnitVec3 = Unit<Vector3<f64>>;

/// Norms at or below this are rejected by [`normalize_direction`].
pub const MIN_DIRECTION_NORM: f64 = 1e-12;

pub fn normalize_direction(v: &Vector3<f64>) -> Result<UnitVec3> {
    if !v.iter().all(|c| c.is_finite()) {
        return Err(Error::NonFinite("direction"));
    }
    let norm = v.norm();
    if norm <= MIN_DIRECTION_NORM {
        return Err(Error::DegenerateDirection { norm });
    }
    Ok(Unit::new_unchecked(v / norm))
}

/// One measured line: anchor `a_i`, principal axis `n_i` and weight `w_i`.
///
/// The direction is always stored normalized. The norm of the raw measured
/// vector is kept alongside so that formulations that use the measurement
/// as-is (see [`crate::formulations::DirectionMode`]) can rebuild it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineObservation {
    anchor: Point3,
    direction: UnitVec3,
    weight: f64,
    measured_norm: f64,
}

impl LineObservation {
    /// Builds an observation from a raw direction vector, which is renormalized.
    pub fn new(anchor: Point3, direction: Vector3<f64>, weight: f64) -> Result<Self> {
        if !anchor.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("anchor"));
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::InvalidWeight(weight));
        }
        let unit = normalize_direction(&direction)?;
        Ok(Self {
            anchor,
            direction: unit,
            weight,
            measured_norm: direction.norm(),
        })
    }

    pub fn from_unit(anchor: Point3, direction: UnitVec3, weight: f64) -> Result<Self> {
        Self::new(anchor, direction.into_inner(), weight)
    }

    pub fn anchor(&self) -> &Point3 {
        &self.anchor
    }

    pub fn direction(&self) -> &UnitVec3 {
        &self.direction
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Norm of the direction vector as it was measured, before normalization.
    pub fn measured_norm(&self) -> f64 {
        self.measured_norm
    }

    /// The direction vector as measured (unit direction times measured norm).
    pub fn measured_direction(&self) -> Vector3<f64> {
        self.direction.into_inner() * self.measured_norm
    }

    pub fn with_weight(self, weight: f64) -> Result<Self> {
        Self::new(self.anchor, self.measured_direction(), weight)
    }

    /// The same line with the direction sign flipped.
    pub fn flipped(self) -> Self {
        Self {
            direction: -self.direction,
            ..self
        }
    }

    pub fn translated(self, t: &Vector3<f64>) -> Self {
        Self {
            anchor: self.anchor + t,
            ..self
        }
    }

    /// `I - n n^T` for the unit direction.
    pub fn projector(&self) -> Matrix3<f64> {
        let n = self.direction.into_inner();
        Matrix3::identity() - n * n.transpose()
    }
}

/// `(I - n n^T)(c - a)`: the component of `c - a` orthogonal to the line.
pub fn point_line_residual(c: &Point3, line: &LineObservation) -> Vector3<f64> {
    let r = c - line.anchor;
    let n = line.direction.as_ref();
    r - n * r.dot(n)
}

pub fn point_line_distance(c: &Point3, line: &LineObservation) -> f64 {
    point_line_residual(c, line).norm()
}

/// An ordered, non-empty collection of line observations.
///
/// Row blocks of the assembled systems follow this order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObservationSet {
    observations: Vec<LineObservation>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    ax: f64,
    ay: f64,
    az: f64,
    nx: f64,
    ny: f64,
    nz: f64,
    w: f64,
}

impl ObservationSet {
    /// Wraps a list of observations. Empty sets are allowed here so that
    /// extraction can report "nothing found"; the builders reject them.
    pub fn new(observations: Vec<LineObservation>) -> Self {
        Self { observations }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LineObservation> {
        self.observations.iter()
    }

    pub fn as_slice(&self) -> &[LineObservation] {
        &self.observations
    }

    pub fn into_vec(self) -> Vec<LineObservation> {
        self.observations
    }

    pub fn ensure_non_empty(&self) -> Result<()> {
        if self.observations.is_empty() {
            Err(Error::EmptyObservations)
        } else {
            Ok(())
        }
    }

    /// Reads the `ax,ay,az,nx,ny,nz,w` CSV format. Directions are renormalized.
    /// Input without any content reads as an empty set.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| parse_error(1, e.to_string()))?
            .clone();
        if headers.is_empty() {
            return Ok(Self::default());
        }
        let expected = ["ax", "ay", "az", "nx", "ny", "nz", "w"];
        if headers.iter().ne(expected.iter().copied()) {
            return Err(parse_error(
                1,
                format!("expected header `{}`", expected.join(",")),
            ));
        }
        let mut observations = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize);
                parse_error(line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let row: CsvRow = record
                .deserialize(Some(&headers))
                .map_err(|e| parse_error(line, e.to_string()))?;
            let obs = LineObservation::new(
                Point3::new(row.ax, row.ay, row.az),
                Vector3::new(row.nx, row.ny, row.nz),
                row.w,
            )
            .map_err(|e| parse_error(line, e.to_string()))?;
            observations.push(obs);
        }
        Ok(Self { observations })
    }

    /// Writes the CSV format, with each direction as measured.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        if self.observations.is_empty() {
            wtr.write_record(["ax", "ay", "az", "nx", "ny", "nz", "w"])
                .map_err(csv_io)?;
        }
        for obs in &self.observations {
            let n = obs.measured_direction();
            wtr.serialize(CsvRow {
                ax: obs.anchor.x,
                ay: obs.anchor.y,
                az: obs.anchor.z,
                nx: n.x,
                ny: n.y,
                nz: n.z,
                w: obs.weight,
            })
            .map_err(csv_io)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

impl FromIterator<LineObservation> for ObservationSet {
    fn from_iter<I: IntoIterator<Item = LineObservation>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a ObservationSet {
    type Item = &'a LineObservation;
    type IntoIter = std::slice::Iter<'a, LineObservation>;

    fn into_iter(self) -> Self::IntoIter {
        self.observations.iter()
    }
}

fn parse_error(line: usize, message: String) -> Error {
    Error::Parse { line, message }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
