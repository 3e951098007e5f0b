//! Primal-dual splitting for
//! `min_x Phi(Hx - y) + i_C(x) + sum_r psi_r(V_r x)`.
//!
//! Monotone + skew forward-backward-forward iteration: one primal
//! projection onto `C`, one dual prox per composite term, then a forward
//! correction. Converges for `0 < step < 1 / |[H; V_1; ...; V_R]|`.
//!
//! Stops once both the primal and the dual iterates change by less than
//! the relative tolerance, or at the iteration cap.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::formulations::{
    extract_solution, LinearSystem, Solution, SolveDiagnostics, Termination,
};
use crate::operator::{estimate_operator_norm, LinearOperator};
use crate::prox::{BoxConstraint, Loss, LossSpec, ProxFunction};

use super::wls::least_squares_start;

/// Fraction of `1 / |L|` used by [`StepSize::Auto`].
pub const AUTO_STEP_FRACTION: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSize {
    Auto,
    Fixed(f64),
}

/// One `psi_r(V_r x)` term.
#[derive(Clone)]
pub struct Regularizer {
    pub map: Arc<dyn LinearOperator>,
    pub function: Arc<dyn ProxFunction>,
}

/// Initial primal point and duals (`duals[0]` pairs with `H`, then one per
/// regularizer). Missing duals start at zero.
#[derive(Clone, Debug, Default)]
pub struct WarmStart {
    pub primal: Option<DVector<f64>>,
    pub duals: Vec<DVector<f64>>,
}

#[derive(Clone)]
pub struct PrimalDualConfig {
    pub step: StepSize,
    pub max_iterations: usize,
    pub relative_tolerance: f64,
    pub regularizers: Vec<Regularizer>,
    pub constraint: Option<BoxConstraint>,
    pub record_trace: bool,
    pub warm_start: WarmStart,
}

impl Default for PrimalDualConfig {
    fn default() -> Self {
        Self {
            step: StepSize::Auto,
            max_iterations: 20_000,
            relative_tolerance: 1e-8,
            regularizers: Vec::new(),
            constraint: None,
            record_trace: false,
            warm_start: WarmStart::default(),
        }
    }
}

impl std::fmt::Debug for PrimalDualConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PrimalDualConfig")
            .field("step", &self.step)
            .field("max_iterations", &self.max_iterations)
            .field("relative_tolerance", &self.relative_tolerance)
            .field("regularizers", &self.regularizers.len())
            .field("constraint", &self.constraint)
            .finish()
    }
}

/// Extra outputs of the primal-dual solver.
#[derive(Clone, Debug)]
pub struct PrimalDualOutput {
    pub solution: Solution,
    pub step: f64,
    pub loss: Loss,
    /// Final dual variables, same layout as [`WarmStart::duals`].
    pub duals: Vec<DVector<f64>>,
}

pub fn solve_primal_dual(
    system: &LinearSystem,
    loss: LossSpec,
    config: &PrimalDualConfig,
) -> Result<PrimalDualOutput> {
    let n = system.cols();
    let m = system.rows();
    if config.max_iterations == 0 {
        return Err(Error::InvalidConfig(
            "max_iterations must be positive".into(),
        ));
    }
    if !(config.relative_tolerance > 0.0) {
        return Err(Error::InvalidConfig(
            "relative_tolerance must be positive".into(),
        ));
    }
    for reg in &config.regularizers {
        if reg.map.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: reg.map.ncols(),
            });
        }
    }
    if let Some(c) = &config.constraint {
        if c.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: c.dim(),
            });
        }
    }

    let gamma = match config.step {
        StepSize::Fixed(g) => g,
        StepSize::Auto => {
            let mut maps: Vec<&dyn LinearOperator> = vec![system];
            maps.extend(config.regularizers.iter().map(|r| r.map.as_ref()));
            AUTO_STEP_FRACTION / estimate_operator_norm(&maps)
        }
    };
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::StepSizeNotPositive(gamma));
    }

    let mut x = match &config.warm_start.primal {
        Some(x0) if x0.len() == n => x0.clone(),
        Some(x0) => {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: x0.len(),
            })
        }
        None => least_squares_start(system).unwrap_or_else(|_| DVector::zeros(n)),
    };
    let loss = loss.resolve(&system.residual(&x));
    let y = system.rhs();

    let dual_len = |r: usize| {
        if r == 0 {
            m
        } else {
            config.regularizers[r - 1].map.nrows()
        }
    };
    let mut duals: Vec<DVector<f64>> = (0..=config.regularizers.len())
        .map(|r| match config.warm_start.duals.get(r) {
            Some(v) if v.len() == dual_len(r) => Ok(v.clone()),
            Some(v) => Err(Error::DimensionMismatch {
                expected: dual_len(r),
                found: v.len(),
            }),
            None => Ok(DVector::zeros(dual_len(r))),
        })
        .collect::<Result<_>>()?;

    let inv_gamma = 1.0 / gamma;
    let mut y1 = DVector::zeros(n);
    let mut p1 = DVector::zeros(n);
    let mut q1 = DVector::zeros(n);
    let mut tmp_n = DVector::zeros(n);
    let mut hx = DVector::zeros(m);
    let mut hp1 = DVector::zeros(m);
    let mut y20 = DVector::zeros(m);
    let mut p20 = DVector::zeros(m);
    let mut prox_buf = DVector::zeros(m);
    let mut dual_step = DVector::zeros(m);

    let objective_at = |hp: &DVector<f64>, point: &DVector<f64>, buf: &mut DVector<f64>| -> f64 {
        buf.copy_from(hp);
        *buf -= y;
        let mut value = loss.value(buf.as_slice());
        for reg in &config.regularizers {
            value += reg.function.value(reg.map.apply(point).as_slice());
        }
        value
    };

    let mut best_x = x.clone();
    system.apply_into(&x, &mut hx);
    let mut best_objective = if config.constraint.as_ref().is_none_or(|c| c.contains(&x)) {
        objective_at(&hx, &x, &mut prox_buf)
    } else {
        f64::INFINITY
    };
    let mut trace = config.record_trace.then(Vec::new);
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    for k in 0..config.max_iterations {
        iterations = k + 1;
        // y1 = x - g (H^T v0 + sum V_r^T v_r)
        system.apply_transpose_into(&duals[0], &mut tmp_n);
        for (r, reg) in config.regularizers.iter().enumerate() {
            tmp_n += reg.map.apply_transpose(&duals[r + 1]);
        }
        y1.copy_from(&x);
        y1.axpy(-gamma, &tmp_n, 1.0);
        // p1 = P_C(y1)
        p1.copy_from(&y1);
        if let Some(c) = &config.constraint {
            c.project_in_place(&mut p1);
        }

        // data block: y20 = v0 + g H x; p20 = y20 - g (prox_{Phi/g}(y20/g - y) + y)
        system.apply_into(&x, &mut hx);
        y20.copy_from(&duals[0]);
        y20.axpy(gamma, &hx, 1.0);
        prox_buf.copy_from(&y20);
        prox_buf *= inv_gamma;
        prox_buf -= y;
        loss.prox_in_place(prox_buf.as_mut_slice(), inv_gamma);
        prox_buf += y;
        p20.copy_from(&y20);
        p20.axpy(-gamma, &prox_buf, 1.0);
        // q20 = p20 + g H p1; v0 <- v0 - y20 + q20
        system.apply_into(&p1, &mut hp1);
        dual_step.copy_from(&p20);
        dual_step.axpy(gamma, &hp1, 1.0);
        dual_step -= &y20;
        let dual_norm = duals[0].norm();
        let mut dual_change = dual_step.norm_squared();
        duals[0] += &dual_step;

        let mut reg_p2 = Vec::with_capacity(config.regularizers.len());
        for (r, reg) in config.regularizers.iter().enumerate() {
            let vx = reg.map.apply(&x);
            let y2 = &duals[r + 1] + &vx * gamma;
            let mut pr = &y2 * inv_gamma;
            reg.function.prox_in_place(pr.as_mut_slice(), inv_gamma);
            let p2 = &y2 - pr * gamma;
            let q2 = &p2 + reg.map.apply(&p1) * gamma;
            let step = q2 - y2;
            dual_change += step.norm_squared();
            duals[r + 1] += step;
            reg_p2.push(p2);
        }

        // q1 = p1 - g (H^T p20 + sum V_r^T p2r); x <- x - y1 + q1
        system.apply_transpose_into(&p20, &mut tmp_n);
        for (reg, p2) in config.regularizers.iter().zip(&reg_p2) {
            tmp_n += reg.map.apply_transpose(p2);
        }
        q1.copy_from(&p1);
        q1.axpy(-gamma, &tmp_n, 1.0);

        let x_norm = x.norm();
        // x_next - x = q1 - y1
        tmp_n.copy_from(&q1);
        tmp_n -= &y1;
        let step_norm = tmp_n.norm();
        x += &tmp_n;

        if !(step_norm.is_finite() && dual_change.is_finite() && x_norm.is_finite()) {
            return Err(Error::NonFiniteIterate { iteration: k });
        }

        let objective = objective_at(&hp1, &p1, &mut prox_buf);
        if let Some(t) = trace.as_mut() {
            t.push(objective);
        }
        if objective < best_objective {
            best_objective = objective;
            best_x.copy_from(&p1);
        }

        // the dual test keeps a stationary warm start from stopping at once
        if step_norm / x_norm.max(1.0) < config.relative_tolerance
            && dual_change.sqrt() / dual_norm.max(1.0) < config.relative_tolerance
        {
            termination = Termination::Converged;
            break;
        }
    }

    // the last primal iterate, projected, is a candidate as well
    let mut last = x.clone();
    if let Some(c) = &config.constraint {
        c.project_in_place(&mut last);
    }
    system.apply_into(&last, &mut hx);
    let last_objective = objective_at(&hx, &last, &mut prox_buf);
    if last_objective <= best_objective {
        best_objective = last_objective;
        best_x = last;
    }

    let mut solution = extract_solution(system, &best_x)?;
    solution.diagnostics = SolveDiagnostics {
        iterations,
        objective: best_objective,
        residual_norm: solution.diagnostics.residual_norm,
        termination,
        trace,
    };
    Ok(PrimalDualOutput {
        solution,
        step: gamma,
        loss,
        duals,
    })
}
