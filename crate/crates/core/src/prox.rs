//! Proximity operators for the loss menu and the box constraint.
//!
//! `prox_{g f}(x) = argmin_u 1/2 |u - x|^2 + g f(u)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Huber function: `u^2 / 2` for `|u| <= t`, `t (|u| - t / 2)` beyond.
pub fn huber(u: f64, t: f64) -> f64 {
    let a = u.abs();
    if a <= t {
        0.5 * u * u
    } else {
        t * (a - 0.5 * t)
    }
}

/// Componentwise soft threshold.
pub fn prox_abs(x: &DVector<f64>, gamma: f64) -> DVector<f64> {
    let mut out = x.clone();
    soft_threshold_in_place(out.as_mut_slice(), gamma);
    out
}

/// Block soft threshold: shrinks the whole vector towards zero by `gamma`.
pub fn prox_norm(x: &DVector<f64>, gamma: f64) -> DVector<f64> {
    let mut out = x.clone();
    shrink_norm_in_place(out.as_mut_slice(), gamma);
    out
}

/// Prox of `gamma * L_t` on a scalar.
///
/// Closed form of the variational definition: `x / (1 + gamma)` inside
/// `|x| <= t (1 + gamma)`, `x - gamma t sign(x)` outside.
pub fn prox_huber(x: f64, t: f64, gamma: f64) -> f64 {
    if x.abs() <= t * (1.0 + gamma) {
        x / (1.0 + gamma)
    } else {
        x - gamma * t * x.signum()
    }
}

/// Prox of `gamma * L_t(|.|)`, applied radially.
pub fn prox_huber_of_norm(x: &DVector<f64>, t: f64, gamma: f64) -> DVector<f64> {
    let mut out = x.clone();
    huber_norm_in_place(out.as_mut_slice(), t, gamma);
    out
}

/// Applies `prox` to each consecutive block of `block_size` entries.
pub fn prox_separable<F>(x: &DVector<f64>, block_size: usize, prox: F) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if block_size == 0 || !x.len().is_multiple_of(block_size) {
        return Err(Error::DimensionMismatch {
            expected: block_size.max(1) * (x.len() / block_size.max(1)),
            found: x.len(),
        });
    }
    let mut out = DVector::zeros(x.len());
    for (k, chunk) in x.as_slice().chunks(block_size).enumerate() {
        let p = prox(&DVector::from_column_slice(chunk));
        if p.len() != block_size {
            return Err(Error::DimensionMismatch {
                expected: block_size,
                found: p.len(),
            });
        }
        out.rows_mut(k * block_size, block_size).copy_from(&p);
    }
    Ok(out)
}

/// Euclidean projection onto the ball of the given radius.
pub fn project_ball(x: &DVector<f64>, radius: f64) -> DVector<f64> {
    let n = x.norm();
    if n <= radius {
        x.clone()
    } else {
        x * (radius / n)
    }
}

pub(crate) fn soft_threshold_in_place(x: &mut [f64], gamma: f64) {
    for v in x {
        *v = if v.abs() >= gamma {
            (v.abs() - gamma) * v.signum()
        } else {
            0.0
        };
    }
}

pub(crate) fn shrink_norm_in_place(x: &mut [f64], gamma: f64) {
    let n = norm(x);
    // also covers x = 0
    let scale = if n > 0.0 { 1.0 - gamma / n } else { 0.0 };
    let scale = if scale > 0.0 { scale } else { 0.0 };
    x.iter_mut().for_each(|v| *v *= scale);
}

pub(crate) fn huber_norm_in_place(x: &mut [f64], t: f64, gamma: f64) {
    let n = norm(x);
    if n == 0.0 {
        return;
    }
    let scale = prox_huber(n, t, gamma) / n;
    x.iter_mut().for_each(|v| *v *= scale);
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Box `C = prod [lower_j, upper_j]`; bounds may be infinite.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxConstraint {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxConstraint {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| l.is_nan() || u.is_nan() || l > u)
        {
            return Err(Error::InvalidConfig(
                "box bounds must satisfy lower <= upper".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    /// `[0, width] x [0, height] x [0, inf)` on the center, free elsewhere.
    pub fn field_of_view(width: f64, height: f64, dim: usize) -> Result<Self> {
        let mut b = Self::unbounded(dim);
        if dim < 3 {
            return Err(Error::DimensionMismatch {
                expected: 3,
                found: dim,
            });
        }
        b.lower[..3].copy_from_slice(&[0.0, 0.0, 0.0]);
        b.upper[..3].copy_from_slice(&[width, height, f64::INFINITY]);
        Self::new(b.lower, b.upper)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    pub(crate) fn project_in_place(&self, x: &mut DVector<f64>) {
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*l, *u);
        }
    }
}

pub fn project_box(x: &DVector<f64>, bounds: &BoxConstraint) -> DVector<f64> {
    assert_eq!(x.len(), bounds.dim(), "box dimension mismatch");
    let mut out = x.clone();
    bounds.project_in_place(&mut out);
    out
}

/// Huber threshold, either given or derived from the warm-start residual.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Threshold {
    Fixed(f64),
    /// `1.345 * MAD / 0.6745` of the initial residual.
    Auto,
}

/// The error measure applied to `Hx - y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossSpec {
    /// `|u|_1`
    Abs,
    /// `|u|`
    GlobalNorm,
    /// `sum_i |u_i|` over 3-blocks
    BlockNorm,
    /// `sum_j L_t(u_j)`
    HuberComponentwise(Threshold),
    /// `L_t(|u|)`
    HuberGlobalNorm(Threshold),
    /// `sum_i L_t(|u_i|)`
    BlockHuberNorm(Threshold),
    /// `sum_i |u_i|^2`
    SquaredBlocks,
}

impl LossSpec {
    pub fn threshold(&self) -> Option<Threshold> {
        match self {
            LossSpec::HuberComponentwise(t)
            | LossSpec::HuberGlobalNorm(t)
            | LossSpec::BlockHuberNorm(t) => Some(*t),
            _ => None,
        }
    }

    /// Fixes an automatic Huber threshold from a residual vector.
    pub fn resolve(&self, residual: &DVector<f64>) -> Loss {
        let auto = |kind: &LossSpec| -> f64 {
            let scale = match kind {
                LossSpec::HuberComponentwise(_) => {
                    median(residual.iter().map(|v| v.abs()).collect())
                }
                LossSpec::BlockHuberNorm(_) => {
                    median(residual.as_slice().chunks(3).map(norm).collect())
                }
                _ => {
                    median(residual.iter().map(|v| v.abs()).collect())
                        * (residual.len() as f64).sqrt()
                }
            } / 0.6745;
            let t = 1.345 * scale;
            if t.is_finite() && t > 0.0 {
                t
            } else {
                1.0
            }
        };
        let t = match self.threshold() {
            Some(Threshold::Fixed(t)) => t,
            Some(Threshold::Auto) => auto(self),
            None => 0.0,
        };
        Loss { spec: *self, t }
    }

    fn validate(self) -> Result<Self> {
        if let Some(Threshold::Fixed(t)) = self.threshold() {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::InvalidLoss {
                    input: self.to_string(),
                    reason: "Huber threshold must be positive".into(),
                });
            }
        }
        Ok(self)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let with_t = |f: &mut fmt::Formatter<'_>, name: &str, t: &Threshold| match t {
            Threshold::Fixed(v) => write!(f, "{name}:t={v}"),
            Threshold::Auto => write!(f, "{name}:t=auto"),
        };
        match self {
            LossSpec::Abs => f.write_str("l1"),
            LossSpec::GlobalNorm => f.write_str("l2"),
            LossSpec::BlockNorm => f.write_str("block-l2"),
            LossSpec::HuberComponentwise(t) => with_t(f, "huber", t),
            LossSpec::HuberGlobalNorm(t) => with_t(f, "huber-norm", t),
            LossSpec::BlockHuberNorm(t) => with_t(f, "block-huber", t),
            LossSpec::SquaredBlocks => f.write_str("sq"),
        }
    }
}

impl FromStr for LossSpec {
    type Err = Error;

    /// Grammar: `l1 | l2 | block-l2 | sq | huber[:t=<v>|auto] |
    /// huber-norm[:t=<v>|auto] | block-huber[:t=<v>|auto]`. A Huber kind
    /// without `:t=` uses the automatic threshold.
    fn from_str(s: &str) -> Result<Self> {
        let invalid = |reason: &str| Error::InvalidLoss {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        let (name, param) = match s.trim().split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (s.trim(), None),
        };
        let threshold = || -> Result<Threshold> {
            match param {
                None => Ok(Threshold::Auto),
                Some(p) => {
                    let v = p
                        .strip_prefix("t=")
                        .ok_or_else(|| invalid("expected `t=<value>`"))?;
                    if v == "auto" {
                        Ok(Threshold::Auto)
                    } else {
                        v.parse::<f64>()
                            .map(Threshold::Fixed)
                            .map_err(|_| invalid("threshold is not a number"))
                    }
                }
            }
        };
        let no_param = |spec: LossSpec| -> Result<LossSpec> {
            match param {
                None => Ok(spec),
                Some(_) => Err(invalid("this loss takes no parameter")),
            }
        };
        let spec = match name {
            "l1" => no_param(LossSpec::Abs)?,
            "l2" => no_param(LossSpec::GlobalNorm)?,
            "block-l2" => no_param(LossSpec::BlockNorm)?,
            "sq" => no_param(LossSpec::SquaredBlocks)?,
            "huber" => LossSpec::HuberComponentwise(threshold()?),
            "huber-norm" => LossSpec::HuberGlobalNorm(threshold()?),
            "block-huber" => LossSpec::BlockHuberNorm(threshold()?),
            _ => return Err(invalid("unknown loss")),
        };
        spec.validate()
    }
}

/// A convex function with a computable proximity operator.
pub trait ProxFunction: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;

    /// Overwrites `x` with `prox_{gamma f}(x)`.
    fn prox_in_place(&self, x: &mut [f64], gamma: f64);
}

/// A [`LossSpec`] with its Huber threshold fixed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Loss {
    spec: LossSpec,
    t: f64,
}

impl Loss {
    pub fn spec(&self) -> LossSpec {
        self.spec
    }

    /// The Huber threshold in force (0 for non-Huber losses).
    pub fn huber_threshold(&self) -> f64 {
        self.t
    }
}

impl ProxFunction for Loss {
    fn value(&self, x: &[f64]) -> f64 {
        let t = self.t;
        match self.spec {
            LossSpec::Abs => x.iter().map(|v| v.abs()).sum(),
            LossSpec::GlobalNorm => norm(x),
            LossSpec::BlockNorm => x.chunks(3).map(norm).sum(),
            LossSpec::HuberComponentwise(_) => x.iter().map(|v| huber(*v, t)).sum(),
            LossSpec::HuberGlobalNorm(_) => huber(norm(x), t),
            LossSpec::BlockHuberNorm(_) => x.chunks(3).map(|b| huber(norm(b), t)).sum(),
            LossSpec::SquaredBlocks => x.iter().map(|v| v * v).sum(),
        }
    }

    fn prox_in_place(&self, x: &mut [f64], gamma: f64) {
        let t = self.t;
        match self.spec {
            LossSpec::Abs => soft_threshold_in_place(x, gamma),
            LossSpec::GlobalNorm => shrink_norm_in_place(x, gamma),
            LossSpec::BlockNorm => x.chunks_mut(3).for_each(|b| shrink_norm_in_place(b, gamma)),
            LossSpec::HuberComponentwise(_) => {
                x.iter_mut().for_each(|v| *v = prox_huber(*v, t, gamma))
            }
            LossSpec::HuberGlobalNorm(_) => huber_norm_in_place(x, t, gamma),
            LossSpec::BlockHuberNorm(_) => x
                .chunks_mut(3)
                .for_each(|b| huber_norm_in_place(b, t, gamma)),
            LossSpec::SquaredBlocks => {
                let s = 1.0 / (1.0 + 2.0 * gamma);
                x.iter_mut().for_each(|v| *v *= s);
            }
        }
    }
}
