use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{PsfError, Result};

/// A scalar volume stored x-fastest: voxel `(x, y, z)` lives at
/// `x + nx * (y + ny * z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VolumeStack {
    dims: [usize; 3],
    voxels: Vec<f32>,
    value_range: (f32, f32),
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    nx: usize,
    ny: usize,
    nz: usize,
    value_min: f32,
    value_max: f32,
}

/// 12-bit encoding.
pub const DEFAULT_RANGE: (f32, f32) = (0.0, 4095.0);

impl VolumeStack {
    pub fn new(dims: [usize; 3], voxels: Vec<f32>, value_range: (f32, f32)) -> Result<Self> {
        if dims.contains(&0) {
            return Err(PsfError::InvalidParams(format!(
                "dimensions must be positive, got {dims:?}"
            )));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if voxels.len() != expected {
            return Err(PsfError::SizeMismatch {
                expected,
                found: voxels.len(),
            });
        }
        if !(value_range.0 <= value_range.1) {
            return Err(PsfError::InvalidParams(format!(
                "empty value range {value_range:?}"
            )));
        }
        if let Some(v) = voxels
            .iter()
            .find(|v| !(**v >= value_range.0 && **v <= value_range.1))
        {
            return Err(PsfError::InvalidParams(format!(
                "voxel value {v} outside {value_range:?}"
            )));
        }
        Ok(Self {
            dims,
            voxels,
            value_range,
        })
    }

    pub fn filled(dims: [usize; 3], value: f32, value_range: (f32, f32)) -> Result<Self> {
        Self::new(dims, vec![value; dims.iter().product()], value_range)
    }

    /// Same shape and range with new contents; values are clamped into range.
    pub(crate) fn with_voxels(&self, mut voxels: Vec<f32>) -> Self {
        debug_assert_eq!(voxels.len(), self.voxels.len());
        let (lo, hi) = self.value_range;
        voxels.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
        Self {
            dims: self.dims,
            voxels,
            value_range: self.value_range,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn value_range(&self) -> (f32, f32) {
        self.value_range
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.voxels[self.index(x, y, z)]
    }

    /// Index of the brightest voxel (first one on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.voxels.iter().enumerate() {
            if *v > self.voxels[best] {
                best = i;
            }
        }
        best
    }

    /// Sidecar path used next to a raw file: `<raw>.json`.
    pub fn sidecar_path(raw: &Path) -> PathBuf {
        let mut s = raw.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    /// Writes little-endian `u16` voxels (rounded) and the JSON sidecar.
    pub fn write(&self, raw: &Path) -> Result<()> {
        if self.value_range.0 < 0.0 || self.value_range.1 > u16::MAX as f32 {
            return Err(PsfError::InvalidParams(format!(
                "value range {:?} does not fit 16-bit storage",
                self.value_range
            )));
        }
        let mut out = BufWriter::new(fs::File::create(raw)?);
        for v in &self.voxels {
            out.write_all(&(v.round() as u16).to_le_bytes())?;
        }
        out.flush()?;
        let sidecar = Sidecar {
            nx: self.dims[0],
            ny: self.dims[1],
            nz: self.dims[2],
            value_min: self.value_range.0,
            value_max: self.value_range.1,
        };
        fs::write(
            Self::sidecar_path(raw),
            serde_json::to_string_pretty(&sidecar)?,
        )?;
        Ok(())
    }

    pub fn read(raw: &Path) -> Result<Self> {
        let sidecar: Sidecar = serde_json::from_slice(&fs::read(Self::sidecar_path(raw))?)?;
        let bytes = fs::read(raw)?;
        if bytes.len() % 2 != 0 {
            return Err(PsfError::InvalidParams(
                "raw stack has an odd byte count".into(),
            ));
        }
        let voxels = bytes
            .chunks_exact(2)
            .map(|b| u16::from_le_bytes([b[0], b[1]]) as f32)
            .collect();
        Self::new(
            [sidecar.nx, sidecar.ny, sidecar.nz],
            voxels,
            (sidecar.value_min, sidecar.value_max),
        )
    }
}
