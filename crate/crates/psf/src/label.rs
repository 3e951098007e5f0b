use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::error::{PsfError, Result};
use crate::stack::VolumeStack;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThresholdSpec {
    Value(f64),
    Otsu,
}

impl fmt::Display for ThresholdSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdSpec::Value(v) => write!(f, "{v}"),
            ThresholdSpec::Otsu => f.write_str("otsu"),
        }
    }
}

impl FromStr for ThresholdSpec {
    type Err = PsfError;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("otsu") {
            return Ok(ThresholdSpec::Otsu);
        }
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(ThresholdSpec::Value)
            .ok_or_else(|| {
                PsfError::InvalidParams(format!("threshold `{s}` is neither a number nor `otsu`"))
            })
    }
}

/// One connected set of voxels, as stack indices in increasing order.
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub label: usize,
    pub voxels: Vec<usize>,
}

impl Component {
    pub fn volume(&self) -> usize {
        self.voxels.len()
    }
}

pub const OTSU_BINS: usize = 1024;

/// Otsu's threshold over a histogram of the stack's actual value span.
/// Returns the lower edge of the first bin of the upper class.
pub fn otsu_threshold(stack: &VolumeStack) -> f64 {
    let (lo, hi) = stack
        .voxels()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), v| {
            (a.min(*v), b.max(*v))
        });
    if !(hi > lo) {
        // a flat stack has no foreground
        return f64::INFINITY;
    }
    let (lo, hi) = (lo as f64, hi as f64);
    let width = (hi - lo) / OTSU_BINS as f64;
    let mut hist = vec![0u64; OTSU_BINS];
    for v in stack.voxels() {
        let b = (((*v as f64 - lo) / width) as usize).min(OTSU_BINS - 1);
        hist[b] += 1;
    }
    let total = stack.len() as f64;
    let center = |b: usize| lo + (b as f64 + 0.5) * width;
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(b, c)| *c as f64 * center(b))
        .sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_split) = (-1.0, 1);
    for split in 1..OTSU_BINS {
        w0 += hist[split - 1] as f64;
        sum0 += hist[split - 1] as f64 * center(split - 1);
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best {
            best = between;
            best_split = split;
        }
    }
    lo + best_split as f64 * width
}

/// Thresholds (`value >= threshold` is foreground) and labels the
/// 26-connected components. Labels run 1..=M in the scan order of each
/// component's first voxel.
pub fn threshold_and_label(stack: &VolumeStack, threshold: ThresholdSpec) -> Vec<Component> {
    let t = match threshold {
        ThresholdSpec::Value(v) => v,
        ThresholdSpec::Otsu => otsu_threshold(stack),
    };
    let [nx, ny, nz] = stack.dims();
    let mut label = vec![0usize; stack.len()];
    for (i, v) in stack.voxels().iter().enumerate() {
        if *v as f64 >= t {
            label[i] = usize::MAX;
        }
    }
    let mut components = Vec::new();
    let mut queue = VecDeque::new();
    for seed in 0..label.len() {
        if label[seed] != usize::MAX {
            continue;
        }
        let id = components.len() + 1;
        label[seed] = id;
        queue.push_back(seed);
        let mut voxels = Vec::new();
        while let Some(i) = queue.pop_front() {
            voxels.push(i);
            let [x, y, z] = stack.coords(i);
            for dz in -1isize..=1 {
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let (qx, qy, qz) = (x as isize + dx, y as isize + dy, z as isize + dz);
                        if qx < 0
                            || qy < 0
                            || qz < 0
                            || qx >= nx as isize
                            || qy >= ny as isize
                            || qz >= nz as isize
                        {
                            continue;
                        }
                        let j = stack.index(qx as usize, qy as usize, qz as usize);
                        if label[j] == usize::MAX {
                            label[j] = id;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        voxels.sort_unstable();
        components.push(Component { label: id, voxels });
    }
    components
}

/// Drops components smaller than `min_volume` voxels, then crops each
/// survivor to a box of `max_extent` voxels per axis centered on its
/// intensity centroid. Surviving components keep their labels.
pub fn volume_filter(
    stack: &VolumeStack,
    components: Vec<Component>,
    min_volume: usize,
    max_extent: [usize; 3],
) -> Result<Vec<Component>> {
    if min_volume == 0 || max_extent.contains(&0) {
        return Err(PsfError::InvalidParams(
            "min_volume and every max_extent must be at least 1".into(),
        ));
    }
    let (floor, _) = stack.value_range();
    let mut kept = Vec::new();
    for mut c in components {
        if c.volume() < min_volume {
            continue;
        }
        let mut centroid = [0.0f64; 3];
        let mut mass = 0.0;
        for &i in &c.voxels {
            let w = (stack.voxels()[i] - floor) as f64;
            let p = stack.coords(i);
            for k in 0..3 {
                centroid[k] += w * p[k] as f64;
            }
            mass += w;
        }
        if mass > 0.0 {
            centroid.iter_mut().for_each(|v| *v /= mass);
        } else {
            // unweighted fallback for an all-floor component
            for &i in &c.voxels {
                let p = stack.coords(i);
                for k in 0..3 {
                    centroid[k] += p[k] as f64 / c.volume() as f64;
                }
            }
        }
        let start: Vec<f64> = (0..3)
            .map(|k| (centroid[k] - (max_extent[k] as f64 - 1.0) / 2.0).round())
            .collect();
        c.voxels.retain(|&i| {
            let p = stack.coords(i);
            (0..3).all(|k| {
                let offset = p[k] as f64 - start[k];
                offset >= 0.0 && offset < max_extent[k] as f64
            })
        });
        if !c.voxels.is_empty() {
            kept.push(c);
        }
    }
    Ok(kept)
}
