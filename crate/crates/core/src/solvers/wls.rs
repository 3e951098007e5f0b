use nalgebra::{DVector, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::formulations::{extract_solution, Layout, LinearSystem, Solution};

/// Normal matrices with a larger condition number are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Closed-form minimizer of `sum_i |H_i c - y_i|^2` for a Model-1 system.
pub fn solve_wls_closed_form(system: &LinearSystem) -> Result<Solution> {
    if system.layout() != Layout::Model1 {
        return Err(Error::InvalidConfig(
            "closed-form weighted least squares needs a Model 1 system".into(),
        ));
    }
    let mut normal = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    for i in 0..system.n_observations() {
        let block = system.row_block(i);
        let hi = Matrix3::from_iterator(block.iter().copied());
        let yi = system.rhs().fixed_rows::<3>(3 * i);
        normal += hi.transpose() * hi;
        rhs += hi.transpose() * yi;
    }
    let c = solve_normal(&normal, &rhs)?;
    extract_solution(system, &DVector::from_column_slice(c.as_slice()))
}

pub(crate) fn solve_normal(normal: &Matrix3<f64>, rhs: &Vector3<f64>) -> Result<Vector3<f64>> {
    let eig = normal.symmetric_eigen();
    let max = eig.eigenvalues.amax();
    let min = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularNormalMatrix { condition });
    }
    // Cholesky is exact enough once conditioning is checked.
    normal
        .cholesky()
        .map(|ch| ch.solve(rhs))
        .ok_or(Error::SingularNormalMatrix { condition })
}

/// Least-squares starting point for an arbitrary system.
///
/// Model 1: the closed-form solution. Model 2: the same center, with each
/// `d_i` the minimizer of `|c - a_i + d_i n_i|` for that center.
pub(crate) fn least_squares_start(system: &LinearSystem) -> Result<DVector<f64>> {
    match system.layout() {
        Layout::Model1 => {
            let h = system.to_dense();
            let normal = Matrix3::from_iterator(h.tr_mul(&h).iter().copied());
            let rhs = h.tr_mul(system.rhs());
            let c = solve_normal(&normal, &Vector3::new(rhs[0], rhs[1], rhs[2]))?;
            Ok(DVector::from_column_slice(c.as_slice()))
        }
        Layout::Model2 => {
            // Eliminating d from |w_i (c + d_i n_i - a_i)|^2 leaves the
            // projector system sum w_i^2 P_i c = sum w_i^2 P_i a_i.
            let n = system.n_observations();
            let mut normal = Matrix3::zeros();
            let mut rhs = Vector3::zeros();
            let mut parts = Vec::with_capacity(n);
            for i in 0..n {
                let block = system.row_block(i);
                let w = block[(0, 0)];
                let dir = Vector3::new(block[(0, 3 + i)], block[(1, 3 + i)], block[(2, 3 + i)]) / w;
                let a =
                    Vector3::from_iterator(system.rhs().fixed_rows::<3>(3 * i).iter().copied()) / w;
                let p = Matrix3::identity() - dir * dir.transpose() / dir.norm_squared();
                normal += p * (w * w);
                rhs += p * a * (w * w);
                parts.push((dir, a));
            }
            let c = solve_normal(&normal, &rhs)?;
            let mut x = DVector::zeros(3 + n);
            x.fixed_rows_mut::<3>(0).copy_from(&c);
            for (i, (dir, a)) in parts.iter().enumerate() {
                x[3 + i] = dir.dot(&(a - c)) / dir.norm_squared();
            }
            Ok(x)
        }
    }
}
