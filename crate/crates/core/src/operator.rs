use nalgebra::{DMatrix, DVector};

/// A real linear map given by its forward and adjoint actions.
pub trait LinearOperator: Send + Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;
    fn apply_transpose(&self, v: &DVector<f64>) -> DVector<f64>;
}

impl LinearOperator for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }

    fn ncols(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self * x
    }

    fn apply_transpose(&self, v: &DVector<f64>) -> DVector<f64> {
        self.tr_mul(v)
    }
}

/// Power-iteration count used for step-size selection.
pub const POWER_ITERATIONS: usize = 100;
pub const POWER_TOLERANCE: f64 = 1e-10;

/// Domains up to this size get an exact Gram-matrix eigenvalue instead of
/// power iteration.
pub const EXACT_NORM_MAX_DIM: usize = 64;

/// Spectral norm of the vertical stack `[L_1; L_2; ...]`.
///
/// Small domains form `G = sum_r L_r^T L_r` explicitly and take its largest
/// eigenvalue; larger ones use [`estimate_operator_norm_with`].
///
/// # Panics
/// If `maps` is empty or the maps disagree on their column count.
pub fn estimate_operator_norm(maps: &[&dyn LinearOperator]) -> f64 {
    assert!(!maps.is_empty(), "operator norm of an empty stack");
    let n = maps[0].ncols();
    if n == 0 || n > EXACT_NORM_MAX_DIM {
        return estimate_operator_norm_with(maps, POWER_ITERATIONS, POWER_TOLERANCE);
    }
    let mut gram = DMatrix::zeros(n, n);
    let mut e = DVector::zeros(n);
    for j in 0..n {
        e[j] = 1.0;
        let mut col = DVector::zeros(n);
        for m in maps {
            col += m.apply_transpose(&m.apply(&e));
        }
        gram.set_column(j, &col);
        e[j] = 0.0;
    }
    let gram = (&gram + gram.transpose()) * 0.5;
    gram.symmetric_eigenvalues().max().max(0.0).sqrt()
}

/// Power iteration on `sum_r L_r^T L_r`, stopping after `iterations` steps
/// or once the estimate changes by less than `tolerance` (relative).
pub fn estimate_operator_norm_with(
    maps: &[&dyn LinearOperator],
    iterations: usize,
    tolerance: f64,
) -> f64 {
    assert!(!maps.is_empty(), "operator norm of an empty stack");
    let n = maps[0].ncols();
    assert!(
        maps.iter().all(|m| m.ncols() == n),
        "stacked maps must share a domain"
    );
    if n == 0 {
        return 0.0;
    }
    // Deterministic start with no special alignment to coordinate axes.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i * 7919) % 13) as f64);
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let mut w = DVector::zeros(n);
        for m in maps {
            w += m.apply_transpose(&m.apply(&v));
        }
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm.sqrt();
        v = w / norm;
        let done = (next - estimate).abs() <= tolerance * next;
        estimate = next;
        if done {
            break;
        }
    }
    estimate
}
