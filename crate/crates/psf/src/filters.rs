use crate::error::{PsfError, Result};
use crate::stack::VolumeStack;

/// Kernel radius in standard deviations.
pub const TRUNCATE: f64 = 4.0;

/// Calls `f(start, stride, len)` for every 1-D line of the volume along `axis`.
fn for_each_line(dims: [usize; 3], axis: usize, mut f: impl FnMut(usize, usize, usize)) {
    let [nx, ny, nz] = dims;
    match axis {
        0 => {
            for z in 0..nz {
                for y in 0..ny {
                    f(nx * (y + ny * z), 1, nx);
                }
            }
        }
        1 => {
            for z in 0..nz {
                for x in 0..nx {
                    f(x + nx * ny * z, nx, ny);
                }
            }
        }
        _ => {
            for y in 0..ny {
                for x in 0..nx {
                    f(x + nx * y, nx * ny, nz);
                }
            }
        }
    }
}

/// Mirror index across the borders, repeating the edge sample
/// (`... b a | a b c ... | c b ...`).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Normalized sampled Gaussian truncated at `TRUNCATE * sigma`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![1.0];
    }
    let radius = (TRUNCATE * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|j| (-(j * j) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Separable Gaussian smoothing with per-axis standard deviations and
/// reflective borders. A zero sigma leaves that axis untouched.
pub fn gaussian_blur(stack: &VolumeStack, sigmas: [f64; 3]) -> Result<VolumeStack> {
    if sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(PsfError::InvalidParams(format!(
            "blur sigmas must be nonnegative, got {sigmas:?}"
        )));
    }
    let dims = stack.dims();
    let mut data = stack.voxels().to_vec();
    let mut line = Vec::new();
    for (axis, &sigma) in sigmas.iter().enumerate() {
        if sigma == 0.0 {
            continue;
        }
        let kernel = gaussian_kernel(sigma);
        let radius = (kernel.len() / 2) as isize;
        for_each_line(dims, axis, |start, stride, len| {
            line.clear();
            line.extend((0..len).map(|i| data[start + i * stride] as f64));
            for i in 0..len {
                let mut acc = 0.0;
                for (j, w) in kernel.iter().enumerate() {
                    acc += w * line[reflect(i as isize + j as isize - radius, len)];
                }
                data[start + i * stride] = acc as f32;
            }
        });
    }
    Ok(stack.with_voxels(data))
}

fn box_filter(data: &mut [f32], dims: [usize; 3], half: [usize; 3], pick: fn(f32, f32) -> f32) {
    let mut line = Vec::new();
    for (axis, &w) in half.iter().enumerate() {
        if w == 0 {
            continue;
        }
        for_each_line(dims, axis, |start, stride, len| {
            line.clear();
            line.extend((0..len).map(|i| data[start + i * stride]));
            for i in 0..len {
                let lo = i.saturating_sub(w);
                let hi = (i + w).min(len - 1);
                let v = line[lo..=hi]
                    .iter()
                    .copied()
                    .reduce(pick)
                    .expect("window is never empty");
                data[start + i * stride] = v;
            }
        });
    }
}

/// Grayscale erosion by a box of the given half-sizes; the box is clipped
/// at the borders.
pub fn erode(stack: &VolumeStack, half: [usize; 3]) -> VolumeStack {
    let mut data = stack.voxels().to_vec();
    box_filter(&mut data, stack.dims(), half, f32::min);
    stack.with_voxels(data)
}

pub fn dilate(stack: &VolumeStack, half: [usize; 3]) -> VolumeStack {
    let mut data = stack.voxels().to_vec();
    box_filter(&mut data, stack.dims(), half, f32::max);
    stack.with_voxels(data)
}

/// White top-hat: the stack minus its opening by a box. Nonnegative by
/// construction; the value range is kept.
pub fn tophat(stack: &VolumeStack, half: [usize; 3]) -> Result<VolumeStack> {
    if half.contains(&0) {
        return Err(PsfError::InvalidParams(format!(
            "top-hat half-sizes must be at least 1, got {half:?}"
        )));
    }
    let opened = dilate(&erode(stack, half), half);
    let (lo, _) = stack.value_range();
    let data = stack
        .voxels()
        .iter()
        .zip(opened.voxels())
        .map(|(v, o)| lo + (v - o))
        .collect();
    Ok(stack.with_voxels(data))
}
