use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Least-squares line through `(ln n, ln count)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub points: Vec<(f64, f64)>,
    pub fitted_slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
}

pub fn fit_exponent(points: &[(f64, f64)]) -> Result<ScalingReport> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(points.len()));
    }
    if let Some(&(n, c)) = points.iter().find(|(n, c)| !(*n > 0.0 && *c > 0.0)) {
        return Err(Error::InvalidConfig(format!("scaling points must be positive, got ({n}, {c})")));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(n, c)| (n.ln(), c.ln())).collect();
    let m = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / m;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidConfig("scaling points need at least two distinct sizes".into()));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = logs.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(ScalingReport {
        points: points.to_vec(),
        fitted_slope: slope,
        intercept,
        residual: (sse / m).sqrt(),
    })
}
