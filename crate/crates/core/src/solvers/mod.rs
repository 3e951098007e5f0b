//! Closed-form weighted least squares, primal-dual splitting and total
//! least squares, plus a [`Method`] descriptor that ties a solver to a
//! formulation and loss.

mod primal_dual;
mod tls;
mod wls;

use std::fmt;
use std::str::FromStr;

pub use primal_dual::{
    solve_primal_dual, PrimalDualConfig, PrimalDualOutput, Regularizer, StepSize, WarmStart,
    AUTO_STEP_FRACTION,
};
pub use tls::{solve_tls, solve_tls_dense, tls_objective};
pub use wls::{solve_wls_closed_form, MAX_CONDITION};

use crate::error::{Error, Result};
use crate::formulations::{build, DirectionMode, Layout, Solution};
use crate::geometry::ObservationSet;
use crate::prox::LossSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SolverKind {
    Wls,
    PrimalDual,
    Tls,
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wls" => Ok(SolverKind::Wls),
            "pd" => Ok(SolverKind::PrimalDual),
            "tls" => Ok(SolverKind::Tls),
            _ => Err(Error::InvalidConfig(format!(
                "unknown solver `{s}` (expected wls, pd or tls)"
            ))),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Wls => "wls",
            SolverKind::PrimalDual => "pd",
            SolverKind::Tls => "tls",
        })
    }
}

/// A (solver, model, loss) combination.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Method {
    pub solver: SolverKind,
    pub layout: Layout,
    /// Only used by the primal-dual solver.
    pub loss: LossSpec,
}

impl Method {
    pub fn new(solver: SolverKind, layout: Layout, loss: LossSpec) -> Result<Self> {
        if solver == SolverKind::Wls && layout != Layout::Model1 {
            return Err(Error::InvalidConfig(
                "closed-form weighted least squares is defined for Model 1 only".into(),
            ));
        }
        Ok(Self {
            solver,
            layout,
            loss,
        })
    }

    pub fn wls() -> Self {
        Self {
            solver: SolverKind::Wls,
            layout: Layout::Model1,
            loss: LossSpec::SquaredBlocks,
        }
    }

    pub fn tls(layout: Layout) -> Self {
        Self {
            solver: SolverKind::Tls,
            layout,
            loss: LossSpec::SquaredBlocks,
        }
    }

    pub fn primal_dual(layout: Layout, loss: LossSpec) -> Self {
        Self {
            solver: SolverKind::PrimalDual,
            layout,
            loss,
        }
    }

    pub fn solve(
        &self,
        obs: &ObservationSet,
        directions: DirectionMode,
        config: &PrimalDualConfig,
    ) -> Result<Solution> {
        let system = build(obs, self.layout, directions)?;
        match self.solver {
            SolverKind::Wls => solve_wls_closed_form(&system),
            SolverKind::Tls => solve_tls(&system),
            SolverKind::PrimalDual => Ok(solve_primal_dual(&system, self.loss, config)?.solution),
        }
    }
}

impl fmt::Display for Method {
    /// `pd:<model>:<loss>`, `tls:<model>` or `wls:1`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.solver {
            SolverKind::PrimalDual => {
                write!(f, "pd:{}:{}", self.layout.index(), self.loss)
            }
            _ => write!(f, "{}:{}", self.solver, self.layout.index()),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.trim().splitn(3, ':');
        let solver: SolverKind = parts.next().unwrap_or_default().parse()?;
        let layout = match parts.next() {
            Some("1") => Layout::Model1,
            Some("2") => Layout::Model2,
            None if solver == SolverKind::Wls => Layout::Model1,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "method `{s}`: model must be 1 or 2, got {other:?}"
                )))
            }
        };
        let loss = match (solver, parts.next()) {
            (SolverKind::PrimalDual, Some(l)) => l.parse()?,
            (SolverKind::PrimalDual, None) => {
                return Err(Error::InvalidConfig(format!(
                    "method `{s}`: primal-dual needs a loss, e.g. pd:2:l1"
                )))
            }
            (_, None) => LossSpec::SquaredBlocks,
            (_, Some(_)) => {
                return Err(Error::InvalidConfig(format!(
                    "method `{s}`: only the primal-dual solver takes a loss"
                )))
            }
        };
        Method::new(solver, layout, loss)
    }
}
