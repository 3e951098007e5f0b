use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::formulations::{extract_solution, LinearSystem, Solution, Termination};

/// `|v_last|` below this means no classical TLS solution exists.
pub const MIN_V_LAST: f64 = 1e-12;
/// Relative gap under which the two smallest singular values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-10;
/// Relative size of the smallest singular value of `H` that counts as rank loss.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Classical total least squares on the system `Hx ~ y`.
pub fn solve_tls(system: &LinearSystem) -> Result<Solution> {
    let h = system.to_dense();
    let x = solve_tls_dense(&h, system.rhs())?;
    let mut solution = extract_solution(system, &x)?;
    solution.diagnostics.termination = Termination::Direct;
    solution.diagnostics.objective = tls_objective(&h, system.rhs(), &x);
    Ok(solution)
}

/// TLS solution of a dense problem.
///
/// The smallest right singular vector `v` of `[H | y]` decides existence
/// (`x = -v[..n] / v_last`). In the generic case the same solution is
/// evaluated as `(H^T H - s^2 I)^{-1} H^T y` through the SVD of `H`, which
/// keeps full accuracy when `|x|` is large.
pub fn solve_tls_dense(h: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (rows, cols) = h.shape();
    if y.len() != rows {
        return Err(Error::DimensionMismatch {
            expected: rows,
            found: y.len(),
        });
    }
    if rows <= cols {
        return Err(Error::InvalidConfig(format!(
            "total least squares needs more rows than unknowns ({rows} x {cols})"
        )));
    }
    let mut aug = DMatrix::zeros(rows, cols + 1);
    aug.columns_mut(0, cols).copy_from(h);
    aug.column_mut(cols).copy_from(y);
    if !aug.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("total least squares input"));
    }

    let (s_aug, v_aug) = {
        let (_, s, v) = thin_svd(&aug)?;
        (s, v)
    };
    // singular values come out in decreasing order
    let k = s_aug.len();
    let s_min = s_aug[k - 1];
    let s_next = s_aug[k - 2];
    let tied = s_next - s_min < TIE_TOLERANCE * s_next.max(f64::MIN_POSITIVE);
    let candidates: &[usize] = if tied { &[k - 1, k - 2] } else { &[k - 1] };
    let chosen = candidates
        .iter()
        .copied()
        .max_by(|a, b| v_aug[(cols, *a)].abs().total_cmp(&v_aug[(cols, *b)].abs()))
        .expect("at least one candidate");
    let v_last = v_aug[(cols, chosen)];
    if v_last.abs() < MIN_V_LAST {
        return Err(Error::NongenericTls { v_last });
    }

    let (u, s_h, v) = thin_svd(h)?;
    let sigma_max = s_h.max();
    let sigma_min = s_h.min();
    if sigma_min <= RANK_TOLERANCE * sigma_max {
        return Err(Error::RankDeficient { sigma_min });
    }

    let sigma = s_aug[chosen];
    if !tied && sigma_min > sigma {
        let uty = u.tr_mul(y);
        let mut coeff = DVector::zeros(s_h.len());
        for i in 0..s_h.len() {
            let s = s_h[i];
            coeff[i] = s * uty[i] / ((s - sigma) * (s + sigma));
        }
        Ok(v * coeff)
    } else {
        Ok(-v_aug.column(chosen).rows(0, cols) / v_last)
    }
}

/// Thin SVD `(U, s, V)` with `s` decreasing.
fn thin_svd(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let f = faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let svd = f
        .thin_svd()
        .map_err(|_| Error::NonFinite("singular value decomposition did not converge"))?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    Ok((
        DMatrix::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)]),
        DVector::from_fn(s.nrows(), |i, _| s[i]),
        DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)]),
    ))
}

/// `|Hx - y|^2 / (1 + |x|^2)`, the minimal `|dH|^2 + |dy|^2` for a given `x`.
pub fn tls_objective(h: &DMatrix<f64>, y: &DVector<f64>, x: &DVector<f64>) -> f64 {
    (h * x - y).norm_squared() / (1.0 + x.norm_squared())
}
