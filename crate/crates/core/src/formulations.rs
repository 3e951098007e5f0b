//! Assembly of the two linear observation systems.
//!
//! * Model 1 ([`Layout::Model1`]): unknown `x = c`, block `i` of `H` is
//!   `w_i (I - n_i n_i^T)` and block `i` of `y` is `H_i a_i`.
//! * Model 2 ([`Layout::Model2`]): unknown `x = [c; d]`, `H = [C D]` with
//!   `C` the stack of `w_i I` and column `i` of `D` holding `w_i n_i` in
//!   rows `3i..3i+3`; block `i` of `y` is `w_i a_i`.
//!
//! In Model 2, `Hx = y` reads `w_i (c + d_i n_i) = w_i a_i`, so at the
//! truth `d_i = n_i^T (a_i - c)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{ObservationSet, Point3};
use crate::operator::LinearOperator;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Layout {
    Model1,
    Model2,
}

impl Layout {
    pub fn index(self) -> u8 {
        match self {
            Layout::Model1 => 1,
            Layout::Model2 => 2,
        }
    }
}

/// Which direction vector enters the system.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DirectionMode {
    /// Renormalized unit directions.
    #[default]
    Unit,
    /// Directions exactly as measured, including their (noisy) norm.
    AsMeasured,
}

#[derive(Clone, Debug)]
enum Design {
    Dense(DMatrix<f64>),
    /// `[C D]` kept as per-observation weights and directions.
    CenterDistance {
        weights: Vec<f64>,
        directions: Vec<Vector3<f64>>,
    },
}

#[derive(Clone, Debug)]
pub struct LinearSystem {
    design: Design,
    rhs: DVector<f64>,
    layout: Layout,
    weights: Vec<f64>,
}

pub fn build_model1(obs: &ObservationSet) -> Result<LinearSystem> {
    build_model1_with(obs, DirectionMode::Unit)
}

pub fn build_model1_with(obs: &ObservationSet, mode: DirectionMode) -> Result<LinearSystem> {
    obs.ensure_non_empty()?;
    let n = obs.len();
    let mut h = DMatrix::zeros(3 * n, 3);
    let mut y = DVector::zeros(3 * n);
    for (i, line) in obs.iter().enumerate() {
        let dir = direction_of(line, mode);
        let block = (nalgebra::Matrix3::identity() - dir * dir.transpose()) * line.weight();
        let yi = block * line.anchor().coords;
        h.fixed_view_mut::<3, 3>(3 * i, 0).copy_from(&block);
        y.fixed_rows_mut::<3>(3 * i).copy_from(&yi);
    }
    Ok(LinearSystem {
        design: Design::Dense(h),
        rhs: y,
        layout: Layout::Model1,
        weights: obs.iter().map(|l| l.weight()).collect(),
    })
}

pub fn build_model2(obs: &ObservationSet) -> Result<LinearSystem> {
    build_model2_with(obs, DirectionMode::Unit)
}

pub fn build_model2_with(obs: &ObservationSet, mode: DirectionMode) -> Result<LinearSystem> {
    obs.ensure_non_empty()?;
    let n = obs.len();
    let mut y = DVector::zeros(3 * n);
    for (i, line) in obs.iter().enumerate() {
        y.fixed_rows_mut::<3>(3 * i)
            .copy_from(&(line.anchor().coords * line.weight()));
    }
    let weights: Vec<f64> = obs.iter().map(|l| l.weight()).collect();
    Ok(LinearSystem {
        design: Design::CenterDistance {
            weights: weights.clone(),
            directions: obs.iter().map(|l| direction_of(l, mode)).collect(),
        },
        rhs: y,
        layout: Layout::Model2,
        weights,
    })
}

pub fn build(obs: &ObservationSet, layout: Layout, mode: DirectionMode) -> Result<LinearSystem> {
    match layout {
        Layout::Model1 => build_model1_with(obs, mode),
        Layout::Model2 => build_model2_with(obs, mode),
    }
}

fn direction_of(line: &crate::geometry::LineObservation, mode: DirectionMode) -> Vector3<f64> {
    match mode {
        DirectionMode::Unit => line.direction().into_inner(),
        DirectionMode::AsMeasured => line.measured_direction(),
    }
}

impl LinearSystem {
    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn n_observations(&self) -> usize {
        self.weights.len()
    }

    pub fn rows(&self) -> usize {
        3 * self.weights.len()
    }

    pub fn cols(&self) -> usize {
        match self.layout {
            Layout::Model1 => 3,
            Layout::Model2 => 3 + self.weights.len(),
        }
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.rhs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Row block `i` of `H` as a dense `3 x cols` matrix.
    pub fn row_block(&self, i: usize) -> DMatrix<f64> {
        match &self.design {
            Design::Dense(h) => h.rows(3 * i, 3).into_owned(),
            Design::CenterDistance {
                weights,
                directions,
            } => {
                let mut b = DMatrix::zeros(3, self.cols());
                for j in 0..3 {
                    b[(j, j)] = weights[i];
                    b[(j, 3 + i)] = weights[i] * directions[i][j];
                }
                b
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.design {
            Design::Dense(h) => h.clone(),
            Design::CenterDistance { .. } => {
                let mut h = DMatrix::zeros(self.rows(), self.cols());
                for i in 0..self.n_observations() {
                    h.rows_mut(3 * i, 3).copy_from(&self.row_block(i));
                }
                h
            }
        }
    }

    /// Writes `H - y` into `out` without allocating.
    pub fn residual_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        self.apply_into(x, out);
        *out -= &self.rhs;
    }

    pub fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.rows());
        self.residual_into(x, &mut out);
        out
    }

    pub fn apply_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        assert_eq!(x.len(), self.cols());
        match &self.design {
            Design::Dense(h) => h.mul_to(x, out),
            Design::CenterDistance {
                weights,
                directions,
            } => {
                let c = Vector3::new(x[0], x[1], x[2]);
                for (i, (w, n)) in weights.iter().zip(directions).enumerate() {
                    let v = (c + n * x[3 + i]) * *w;
                    out.fixed_rows_mut::<3>(3 * i).copy_from(&v);
                }
            }
        }
    }

    pub fn apply_transpose_into(&self, v: &DVector<f64>, out: &mut DVector<f64>) {
        assert_eq!(v.len(), self.rows());
        match &self.design {
            Design::Dense(h) => h.tr_mul_to(v, out),
            Design::CenterDistance {
                weights,
                directions,
            } => {
                let mut c = Vector3::zeros();
                for (i, (w, n)) in weights.iter().zip(directions).enumerate() {
                    let vi = v.fixed_rows::<3>(3 * i);
                    c += vi * *w;
                    out[3 + i] = *w * n.dot(&vi);
                }
                out.fixed_rows_mut::<3>(0).copy_from(&c);
            }
        }
    }

    /// Same system with `H` and `y` multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let design = match &self.design {
            Design::Dense(h) => Design::Dense(h * factor),
            Design::CenterDistance {
                weights,
                directions,
            } => Design::CenterDistance {
                weights: weights.iter().map(|w| w * factor).collect(),
                directions: directions.clone(),
            },
        };
        Self {
            design,
            rhs: &self.rhs * factor,
            layout: self.layout,
            weights: self.weights.iter().map(|w| w * factor).collect(),
        }
    }

    /// Dumps `H` (coordinate format) and `y` (array format) in Matrix
    /// Market text form.
    pub fn write_matrix_market<W: Write, V: Write>(
        &self,
        mut h_out: W,
        mut y_out: V,
    ) -> Result<()> {
        let h = self.to_dense();
        let nnz = h.iter().filter(|v| **v != 0.0).count();
        writeln!(h_out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(h_out, "% layout Model{}", self.layout.index())?;
        writeln!(h_out, "{} {} {}", h.nrows(), h.ncols(), nnz)?;
        for j in 0..h.ncols() {
            for i in 0..h.nrows() {
                let v = h[(i, j)];
                if v != 0.0 {
                    writeln!(h_out, "{} {} {:e}", i + 1, j + 1, v)?;
                }
            }
        }
        writeln!(y_out, "%%MatrixMarket matrix array real general")?;
        writeln!(y_out, "{} 1", self.rhs.len())?;
        for v in self.rhs.iter() {
            writeln!(y_out, "{v:e}")?;
        }
        Ok(())
    }
}

impl LinearOperator for LinearSystem {
    fn nrows(&self) -> usize {
        self.rows()
    }

    fn ncols(&self) -> usize {
        self.cols()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.rows());
        self.apply_into(x, &mut out);
        out
    }

    fn apply_transpose(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.cols());
        self.apply_transpose_into(v, &mut out);
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Closed-form or direct solve.
    Direct,
    Converged,
    MaxIterations,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Direct => "direct",
            Termination::Converged => "converged",
            Termination::MaxIterations => "max_iterations",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub objective: f64,
    pub residual_norm: f64,
    pub termination: Termination,
    /// Objective per iteration, when requested.
    pub trace: Option<Vec<f64>>,
}

impl Default for SolveDiagnostics {
    fn default() -> Self {
        Self {
            iterations: 0,
            objective: 0.0,
            residual_norm: 0.0,
            termination: Termination::Direct,
            trace: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub center: Point3,
    /// Per-line distances `d`, present for Model 2 only.
    pub aux_distances: Option<DVector<f64>>,
    pub diagnostics: SolveDiagnostics,
}

/// Reads the optical center (and Model-2 distances) out of a solution vector.
pub fn extract_solution(system: &LinearSystem, x: &DVector<f64>) -> Result<Solution> {
    if x.len() != system.cols() {
        return Err(Error::DimensionMismatch {
            expected: system.cols(),
            found: x.len(),
        });
    }
    let center = Point3::new(x[0], x[1], x[2]);
    let aux_distances = match system.layout {
        Layout::Model1 => None,
        Layout::Model2 => Some(x.rows(3, x.len() - 3).into_owned()),
    };
    Ok(Solution {
        center,
        aux_distances,
        diagnostics: SolveDiagnostics {
            residual_norm: system.residual(x).norm(),
            ..Default::default()
        },
    })
}
