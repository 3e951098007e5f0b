//! Robust estimation of the optical center of a confocal macroscope from a
//! bundle of noisy 3D lines (bead centers of mass and principal axes).
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`]: points, unit directions, line observations and the
//!   point-to-line residual.
//! * [`formulations`]: the two linear observation systems and how to read an
//!   optical-center estimate back out of a solution vector.
//! * [`prox`]: proximity operators for every loss in the menu.
//! * [`solvers`]: closed-form weighted least squares, primal-dual splitting
//!   and total least squares.
//! * [`bench`]: synthetic two-layer bead scenes, Bernoulli-Gaussian
//!   corruption and the Monte Carlo bias/sigma harness.

pub mod bench;
pub mod error;
pub mod formulations;
pub mod geometry;
pub mod operator;
pub mod prox;
pub mod solvers;

pub use error::{Error, Result};
pub use formulations::{
    build_model1, build_model2, extract_solution, DirectionMode, Layout, LinearSystem, Solution,
    SolveDiagnostics, Termination,
};
pub use geometry::{
    normalize_direction, point_line_distance, point_line_residual, LineObservation, ObservationSet,
    Point3, UnitVec3,
};
pub use prox::{BoxConstraint, LossSpec, Threshold};
pub use solvers::{Method, SolverKind};
