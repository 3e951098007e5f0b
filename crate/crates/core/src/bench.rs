//! Synthetic two-layer bead scenes, Bernoulli-Gaussian corruption and the
//! Monte Carlo bias/sigma harness.
//!
//! Each observation is an inlier with probability `1 - eps` and an outlier
//! otherwise. Inliers get direction noise `N(0, s1^2)` and anchor noise
//! `N(0, s3^2)` per component; outliers use `s2` and `s4`. The same draw
//! gates both the direction and the anchor of an observation.

use std::fmt::Write as _;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::formulations::DirectionMode;
use crate::geometry::{LineObservation, ObservationSet, Point3};
use crate::prox::{LossSpec, Threshold};
use crate::solvers::{Method, PrimalDualConfig};

/// Reports with a larger share of failed replicates are marked invalid.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub n_beads: usize,
    /// Range of both lateral anchor coordinates (voxels).
    pub lateral_range: (f64, f64),
    pub layer_depths: Vec<f64>,
    /// Relative share of beads per layer; beads are split deterministically.
    pub layer_weights: Vec<f64>,
    pub true_center: Point3,
    pub outlier_probability: f64,
    /// Direction noise, inlier / outlier.
    pub sigma_direction: (f64, f64),
    /// Anchor noise in voxels, inlier / outlier.
    pub sigma_anchor: (f64, f64),
    pub seed: u64,
    /// Draw a new bead layout for every replicate instead of one per report.
    pub redraw_scene: bool,
    /// How corrupted directions enter the linear systems.
    pub directions: DirectionMode,
}

impl ScenarioConfig {
    /// 200 beads on `[0, 2048]^2` at depths 50 and 250, center
    /// `(1000, 1000, 5000)`, 25% outliers, noise `0.015 / 0.030` on directions
    /// and `30 / 60` voxels on anchors.
    pub fn reference() -> Self {
        Self {
            n_beads: 200,
            lateral_range: (0.0, 2048.0),
            layer_depths: vec![50.0, 250.0],
            layer_weights: vec![1.0, 1.0],
            true_center: Point3::new(1000.0, 1000.0, 5000.0),
            outlier_probability: 0.25,
            sigma_direction: (0.015, 0.030),
            sigma_anchor: (30.0, 60.0),
            seed: 0,
            redraw_scene: false,
            directions: DirectionMode::AsMeasured,
        }
    }

    pub fn noiseless(mut self) -> Self {
        self.sigma_direction = (0.0, 0.0);
        self.sigma_anchor = (0.0, 0.0);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_beads == 0 {
            return bad("n_beads must be at least 1");
        }
        let (lo, hi) = self.lateral_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return bad("lateral range must be a finite interval");
        }
        if self.layer_depths.is_empty() || self.layer_depths.iter().any(|z| !z.is_finite()) {
            return bad("need at least one finite layer depth");
        }
        if self.layer_weights.len() != self.layer_depths.len()
            || self
                .layer_weights
                .iter()
                .any(|w| !(w.is_finite() && *w >= 0.0))
            || self.layer_weights.iter().sum::<f64>() <= 0.0
        {
            return bad("layer weights must be non-negative, one per layer, not all zero");
        }
        if !self.true_center.iter().all(|v| v.is_finite()) {
            return bad("true center must be finite");
        }
        if !(0.0..=1.0).contains(&self.outlier_probability) {
            return bad("outlier probability must lie in [0, 1]");
        }
        let (s1, s2) = self.sigma_direction;
        let (s3, s4) = self.sigma_anchor;
        if [s1, s2, s3, s4]
            .iter()
            .any(|s| !(s.is_finite() && *s >= 0.0))
        {
            return bad("noise levels must be finite and non-negative");
        }
        if s2 < s1 || s4 < s3 {
            return bad("outlier noise must not be smaller than inlier noise");
        }
        Ok(())
    }

    /// Number of beads per layer under the deterministic split.
    pub fn layer_counts(&self) -> Vec<usize> {
        let total: f64 = self.layer_weights.iter().sum();
        let mut counts: Vec<usize> = self
            .layer_weights
            .iter()
            .map(|w| (self.n_beads as f64 * w / total).floor() as usize)
            .collect();
        let mut assigned: usize = counts.iter().sum();
        // hand out the remainder in layer order, skipping zero-weight layers
        let layers = counts.len();
        let mut k = 0;
        while assigned < self.n_beads {
            if self.layer_weights[k % layers] > 0.0 {
                counts[k % layers] += 1;
                assigned += 1;
            }
            k += 1;
        }
        counts
    }
}

/// Noiseless scene: anchors on the layers, unit directions towards the center.
pub fn generate_scene<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<ObservationSet> {
    config.validate()?;
    let (lo, hi) = config.lateral_range;
    let c = config.true_center;
    let mut observations = Vec::with_capacity(config.n_beads);
    for (layer, count) in config.layer_counts().into_iter().enumerate() {
        let z = config.layer_depths[layer];
        for _ in 0..count {
            let a = Point3::new(uniform(rng, lo, hi), uniform(rng, lo, hi), z);
            observations.push(LineObservation::new(a, (c - a).normalize(), 1.0)?);
        }
    }
    Ok(ObservationSet::new(observations))
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Corrupted observations together with which ones were outliers.
#[derive(Clone, Debug)]
pub struct Corrupted {
    pub observations: ObservationSet,
    pub outlier: Vec<bool>,
}

pub fn corrupt<R: Rng + ?Sized>(
    obs: &ObservationSet,
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<ObservationSet> {
    Ok(corrupt_detailed(obs, config, rng)?.observations)
}

pub fn corrupt_detailed<R: Rng + ?Sized>(
    obs: &ObservationSet,
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<Corrupted> {
    config.validate()?;
    let mut observations = Vec::with_capacity(obs.len());
    let mut outlier = Vec::with_capacity(obs.len());
    for line in obs {
        let rho: f64 = rng.random();
        let is_outlier = rho <= config.outlier_probability;
        let (sd_dir, sd_anchor) = if is_outlier {
            (config.sigma_direction.1, config.sigma_anchor.1)
        } else {
            (config.sigma_direction.0, config.sigma_anchor.0)
        };
        let dir_noise = gaussian3(rng, sd_dir);
        let anchor_noise = gaussian3(rng, sd_anchor);
        let direction = line.measured_direction() + dir_noise;
        let anchor = line.anchor() + anchor_noise;
        observations.push(LineObservation::new(anchor, direction, line.weight())?);
        outlier.push(is_outlier);
    }
    Ok(Corrupted {
        observations: ObservationSet::new(observations),
        outlier,
    })
}

fn gaussian3<R: Rng + ?Sized>(rng: &mut R, sd: f64) -> Vector3<f64> {
    let mut v = Vector3::zeros();
    for c in v.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *c = sd * z;
    }
    v
}

/// Generator for replicate `r`: the base seed on stream `r + 1`. Stream 0
/// is reserved for the fixed scene.
pub fn replicate_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate + 1);
    rng
}

pub fn scene_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub method: String,
    /// `100 * mean(c_j - c_true_j) / c_true_j`
    pub bias_percent: [f64; 3],
    /// `100 * std(c_j) / c_true_j`, unbiased standard deviation
    pub sigma_percent: [f64; 3],
    /// `sqrt(mean |c - c_true|^2)`
    pub aggregate_error: f64,
    /// `mean |c - c_true|^2`
    pub mean_squared_error: f64,
    pub realizations: usize,
    pub failures: usize,
    pub valid: bool,
    #[serde(skip)]
    pub estimates: Vec<Option<Point3>>,
}

pub fn compute_metrics(estimates: &[Point3], truth: &Point3) -> Result<MonteCarloReport> {
    let n = estimates.len();
    if n < 2 {
        return Err(Error::InsufficientReplicates(n));
    }
    let nf = n as f64;
    let mut bias = [0.0; 3];
    let mut sigma = [0.0; 3];
    for j in 0..3 {
        let mean = estimates.iter().map(|e| e[j]).sum::<f64>() / nf;
        let var = estimates.iter().map(|e| (e[j] - mean).powi(2)).sum::<f64>() / (nf - 1.0);
        bias[j] = 100.0 * (mean - truth[j]) / truth[j];
        sigma[j] = 100.0 * var.sqrt() / truth[j].abs();
    }
    let mse = estimates
        .iter()
        .map(|e| (e - truth).norm_squared())
        .sum::<f64>()
        / nf;
    Ok(MonteCarloReport {
        method: String::new(),
        bias_percent: bias,
        sigma_percent: sigma,
        aggregate_error: mse.sqrt(),
        mean_squared_error: mse,
        realizations: n,
        failures: 0,
        valid: true,
        estimates: estimates.iter().copied().map(Some).collect(),
    })
}

/// The six primal-dual cells and the two TLS cells of the reference tables.
pub fn default_methods() -> Vec<Method> {
    use crate::formulations::Layout::{Model1, Model2};
    let losses = [
        LossSpec::Abs,
        LossSpec::BlockNorm,
        LossSpec::HuberComponentwise(Threshold::Auto),
    ];
    let mut methods = Vec::new();
    for layout in [Model1, Model2] {
        for loss in losses {
            methods.push(Method::primal_dual(layout, loss));
        }
    }
    methods.push(Method::tls(Model1));
    methods.push(Method::tls(Model2));
    methods
}

/// Runs every method on `replications` noise draws.
///
/// Replicates are solved in parallel; all methods see the same corrupted
/// observations within a replicate. Results do not depend on the number of
/// worker threads.
pub fn run_monte_carlo(
    config: &ScenarioConfig,
    methods: &[Method],
    replications: usize,
    solver_config: &PrimalDualConfig,
) -> Result<Vec<MonteCarloReport>> {
    config.validate()?;
    if replications < 2 {
        return Err(Error::InsufficientReplicates(replications));
    }
    let fixed_scene = if config.redraw_scene {
        None
    } else {
        Some(generate_scene(config, &mut scene_rng(config.seed))?)
    };

    let per_replicate: Vec<Result<Vec<Option<Point3>>>> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(config.seed, r);
            let scene = match &fixed_scene {
                Some(s) => s.clone(),
                None => generate_scene(config, &mut rng)?,
            };
            let noisy = corrupt(&scene, config, &mut rng)?;
            Ok(methods
                .iter()
                .map(|m| {
                    m.solve(&noisy, config.directions, solver_config)
                        .ok()
                        .map(|s| s.center)
                        .filter(|c| c.iter().all(|v| v.is_finite()))
                })
                .collect())
        })
        .collect();

    let mut rows = Vec::with_capacity(replications);
    for r in per_replicate {
        rows.push(r?);
    }
    Ok(methods
        .iter()
        .enumerate()
        .map(|(k, m)| {
            summarize(
                m,
                rows.iter().map(|row| row[k]).collect(),
                &config.true_center,
            )
        })
        .collect())
}

fn summarize(method: &Method, estimates: Vec<Option<Point3>>, truth: &Point3) -> MonteCarloReport {
    let ok: Vec<Point3> = estimates.iter().flatten().copied().collect();
    let failures = estimates.len() - ok.len();
    let mut report = compute_metrics(&ok, truth).unwrap_or_else(|_| MonteCarloReport {
        method: String::new(),
        bias_percent: [f64::NAN; 3],
        sigma_percent: [f64::NAN; 3],
        aggregate_error: f64::NAN,
        mean_squared_error: f64::NAN,
        realizations: ok.len(),
        failures: 0,
        valid: false,
        estimates: Vec::new(),
    });
    report.method = method.to_string();
    report.failures = failures;
    report.realizations = estimates.len();
    report.valid =
        report.valid && (failures as f64) <= MAX_FAILURE_FRACTION * estimates.len() as f64;
    report.estimates = estimates;
    report
}

/// Text table with one column per method: bias and sigma per axis, then the
/// aggregate error.
pub fn format_table(reports: &[MonteCarloReport]) -> String {
    let width = reports
        .iter()
        .map(|r| r.method.len())
        .max()
        .unwrap_or(0)
        .max(9);
    let mut out = String::new();
    let header = |out: &mut String, title: &str| {
        let _ = write!(out, "{title:<12}");
        for r in reports {
            let _ = write!(out, " | {:>width$}", r.method);
        }
        out.push('\n');
    };
    let row =
        |out: &mut String, label: &str, f: &dyn Fn(&MonteCarloReport) -> f64, precision: usize| {
            let _ = write!(out, "{label:<12}");
            for r in reports {
                let _ = write!(out, " | {:>width$.precision$}", f(r));
            }
            out.push('\n');
        };
    header(&mut out, "method");
    let rule = "-".repeat(12 + reports.len() * (width + 3));
    let _ = writeln!(out, "{rule}");
    let _ = writeln!(out, "Bias (%)");
    for j in 0..3 {
        row(
            &mut out,
            &format!("  j={}", j + 1),
            &|r| r.bias_percent[j],
            2,
        );
    }
    let _ = writeln!(out, "Sigma (%)");
    for j in 0..3 {
        row(
            &mut out,
            &format!("  j={}", j + 1),
            &|r| r.sigma_percent[j],
            2,
        );
    }
    let _ = writeln!(out, "{rule}");
    row(&mut out, "MSE (rms)", &|r| r.aggregate_error, 1);
    row(&mut out, "failures", &|r| r.failures as f64, 0);
    out
}

/// Per-replicate estimates as CSV: `method,replicate,cx,cy,cz` (empty
/// coordinates for failed replicates).
pub fn estimates_csv(reports: &[MonteCarloReport]) -> String {
    let mut out = String::from("method,replicate,cx,cy,cz\n");
    for r in reports {
        for (k, e) in r.estimates.iter().enumerate() {
            match e {
                Some(c) => {
                    let _ = writeln!(out, "{},{},{},{},{}", r.method, k, c.x, c.y, c.z);
                }
                None => {
                    let _ = writeln!(out, "{},{},,,", r.method, k);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formulations::Layout;
    use crate::geometry::point_line_distance;
    use approx::assert_relative_eq;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            n_beads: 40,
            ..ScenarioConfig::reference()
        }
    }

    #[test]
    fn bead_below_center_points_up() {
        let c = Point3::new(1000.0, 1000.0, 5000.0);
        let l = LineObservation::new(
            Point3::new(1000.0, 1000.0, 50.0),
            c - Point3::new(1000.0, 1000.0, 50.0),
            1.0,
        )
        .unwrap();
        assert_relative_eq!(l.direction().into_inner(), Vector3::z(), epsilon = 1e-15);
    }

    #[test]
    fn scene_lines_pass_through_center() {
        let cfg = ScenarioConfig::reference();
        let scene = generate_scene(&cfg, &mut scene_rng(3)).unwrap();
        assert_eq!(scene.len(), 200);
        for l in &scene {
            assert!(point_line_distance(&cfg.true_center, l) < 1e-9);
            assert!((0.0..=2048.0).contains(&l.anchor().x));
            assert_eq!(l.weight(), 1.0);
        }
        let lower = scene.iter().filter(|l| l.anchor().z == 50.0).count();
        assert_eq!(lower, 100);
    }

    #[test]
    fn scene_is_deterministic() {
        let cfg = small();
        let a = generate_scene(&cfg, &mut scene_rng(9)).unwrap();
        let b = generate_scene(&cfg, &mut scene_rng(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn layer_split_handles_remainders() {
        let cfg = ScenarioConfig {
            n_beads: 7,
            layer_depths: vec![1.0, 2.0, 3.0],
            layer_weights: vec![1.0, 0.0, 1.0],
            ..ScenarioConfig::reference()
        };
        assert_eq!(cfg.layer_counts(), vec![4, 0, 3]);
    }

    #[test]
    fn zero_noise_is_identity() {
        let cfg = small().noiseless();
        let scene = generate_scene(&cfg, &mut scene_rng(1)).unwrap();
        let noisy = corrupt(&scene, &cfg, &mut replicate_rng(1, 0)).unwrap();
        assert_eq!(noisy, scene);
    }

    #[test]
    fn all_outliers_when_probability_is_one() {
        let cfg = ScenarioConfig {
            outlier_probability: 1.0,
            ..small()
        };
        let scene = generate_scene(&cfg, &mut scene_rng(1)).unwrap();
        let c = corrupt_detailed(&scene, &cfg, &mut replicate_rng(1, 0)).unwrap();
        assert!(c.outlier.iter().all(|o| *o));
    }

    #[test]
    fn outlier_fraction_follows_probability() {
        let cfg = ScenarioConfig {
            n_beads: 100_000,
            layer_depths: vec![50.0],
            layer_weights: vec![1.0],
            ..ScenarioConfig::reference()
        };
        let scene = generate_scene(&cfg, &mut scene_rng(5)).unwrap();
        let c = corrupt_detailed(&scene, &cfg, &mut replicate_rng(5, 0)).unwrap();
        let frac = c.outlier.iter().filter(|o| **o).count() as f64 / 100_000.0;
        assert!((frac - 0.25).abs() < 0.005, "{frac}");
    }

    #[test]
    fn anchor_and_direction_share_the_regime() {
        // inlier anchor noise is tiny, outlier anchor noise huge; direction noise
        // mirrors that, so the two magnitudes must agree on the regime
        let cfg = ScenarioConfig {
            n_beads: 2000,
            sigma_direction: (1e-6, 1.0),
            sigma_anchor: (1e-6, 1000.0),
            ..ScenarioConfig::reference()
        };
        let scene = generate_scene(&cfg, &mut scene_rng(2)).unwrap();
        let c = corrupt_detailed(&scene, &cfg, &mut replicate_rng(2, 0)).unwrap();
        for ((clean, noisy), out) in scene.iter().zip(c.observations.iter()).zip(&c.outlier) {
            let da = (noisy.anchor() - clean.anchor()).norm();
            let dn = (noisy.measured_direction() - clean.measured_direction()).norm();
            assert_eq!(da > 1.0, *out);
            assert_eq!(dn > 1e-3, *out);
        }
    }

    #[test]
    fn validation() {
        assert!(ScenarioConfig::reference().validate().is_ok());
        let bad = [
            ScenarioConfig {
                outlier_probability: 1.5,
                ..ScenarioConfig::reference()
            },
            ScenarioConfig {
                sigma_direction: (0.03, 0.015),
                ..ScenarioConfig::reference()
            },
            ScenarioConfig {
                sigma_anchor: (-1.0, 60.0),
                ..ScenarioConfig::reference()
            },
            ScenarioConfig {
                n_beads: 0,
                ..ScenarioConfig::reference()
            },
            ScenarioConfig {
                layer_weights: vec![1.0],
                ..ScenarioConfig::reference()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn metrics_examples() {
        let c = Point3::new(1000.0, 1000.0, 5000.0);
        let same = compute_metrics(&[c, c, c], &c).unwrap();
        assert_eq!(same.bias_percent, [0.0; 3]);
        assert_eq!(same.sigma_percent, [0.0; 3]);
        assert_eq!(same.aggregate_error, 0.0);

        let d = Vector3::new(10.0, 0.0, 0.0);
        let m = compute_metrics(&[c + d, c - d], &c).unwrap();
        assert_relative_eq!(m.bias_percent[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(
            m.sigma_percent[0],
            2f64.sqrt() * 10.0 / 1000.0 * 100.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(m.aggregate_error, 10.0, epsilon = 1e-12);

        let e = Vector3::new(20.0, 0.0, 0.0);
        let m = compute_metrics(&[c + e, c + e, c + e], &c).unwrap();
        assert_relative_eq!(m.bias_percent[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(m.sigma_percent[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(m.aggregate_error, 20.0, epsilon = 1e-12);

        assert!(matches!(
            compute_metrics(&[c], &c),
            Err(Error::InsufficientReplicates(1))
        ));
    }

    #[test]
    fn zero_noise_monte_carlo_is_exact() {
        let cfg = small().noiseless();
        let methods = [
            Method::wls(),
            Method::tls(Layout::Model2),
            Method::primal_dual(Layout::Model2, LossSpec::Abs),
        ];
        let reports = run_monte_carlo(&cfg, &methods, 3, &PrimalDualConfig::default()).unwrap();
        for r in &reports {
            assert!(r.valid, "{}", r.method);
            for j in 0..3 {
                assert!(
                    r.bias_percent[j].abs() < 1e-8 && r.sigma_percent[j] < 1e-8,
                    "{r:?}"
                );
            }
            assert!(
                r.aggregate_error < 1e-6,
                "{}: {}",
                r.method,
                r.aggregate_error
            );
        }
    }

    #[test]
    fn monte_carlo_rejects_single_replicate() {
        assert!(matches!(
            run_monte_carlo(&small(), &[Method::wls()], 1, &PrimalDualConfig::default()),
            Err(Error::InsufficientReplicates(1))
        ));
    }

    #[test]
    fn table_and_csv_shapes() {
        let cfg = small();
        let reports = run_monte_carlo(
            &cfg,
            &[Method::wls(), Method::tls(Layout::Model2)],
            4,
            &PrimalDualConfig::default(),
        )
        .unwrap();
        let table = format_table(&reports);
        assert!(table.contains("Bias (%)") && table.contains("Sigma (%)") && table.contains("MSE"));
        assert!(table.contains("wls:1") && table.contains("tls:2"));
        let csv = estimates_csv(&reports);
        assert_eq!(csv.lines().count(), 1 + 2 * 4);
    }
}
