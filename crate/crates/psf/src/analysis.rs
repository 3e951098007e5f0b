use opticenter_core::{ObservationSet, Point3};
use serde::Serialize;

/// Least-squares line `angle = slope * distance + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Tilt of each line against its lateral distance from the center.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct OrientationTable {
    /// `(distance, angle)` pairs in observation order.
    pub rows: Vec<(f64, f64)>,
    /// Absent with fewer than two rows or a single distinct distance.
    pub fit: Option<LinearFit>,
}

impl OrientationTable {
    pub fn max_angle(&self) -> Option<f64> {
        self.rows.iter().map(|r| r.1).reduce(f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("dist,angle\n");
        for (d, a) in &self.rows {
            s.push_str(&format!("{d},{a}\n"));
        }
        s
    }
}

/// For every observation: the lateral distance of its anchor from `center`
/// and `arccos(n_z)` in radians, with the direction taken pointing up.
pub fn orientation_vs_distance(obs: &ObservationSet, center: &Point3) -> OrientationTable {
    let rows: Vec<(f64, f64)> = obs
        .iter()
        .map(|o| {
            let a = o.anchor();
            let dist = (a.x - center.x).hypot(a.y - center.y);
            let angle = o.direction().z.abs().min(1.0).acos();
            (dist, angle)
        })
        .collect();
    let fit = fit_line(&rows);
    OrientationTable { rows, fit }
}

fn fit_line(rows: &[(f64, f64)]) -> Option<LinearFit> {
    if rows.len() < 2 {
        return None;
    }
    let n = rows.len() as f64;
    let mx = rows.iter().map(|r| r.0).sum::<f64>() / n;
    let my = rows.iter().map(|r| r.1).sum::<f64>() / n;
    let sxx: f64 = rows.iter().map(|r| (r.0 - mx).powi(2)).sum();
    let sxy: f64 = rows.iter().map(|r| (r.0 - mx) * (r.1 - my)).sum();
    let syy: f64 = rows.iter().map(|r| (r.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual: f64 = rows
        .iter()
        .map(|r| (r.1 - slope * r.0 - intercept).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - residual / syy } else { 1.0 };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}
