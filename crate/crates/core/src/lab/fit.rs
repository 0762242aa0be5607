//! Weighted least squares for power laws on log-log scale.

use serde::{Deserialize, Serialize};

use crate::error::{ArmlabError, Result};

/// One estimated point: grid value g, estimate m̂ of a positive quantity and
/// its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub grid_value: f64,
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr_slope: f64,
    pub r_squared: f64,
    /// χ² of the weighted residuals over `points.len() − 2` degrees of freedom.
    pub reduced_chi2: f64,
    pub predicted: Option<f64>,
    pub points: Vec<FitPoint>,
    /// Grid values left out (zero estimate or zero variance).
    pub excluded: Vec<f64>,
}

impl ExponentFit {
    /// (slope − predicted) / stderr_slope.
    pub fn z_score(&self) -> Option<f64> {
        self.predicted.map(|p| (self.slope - p) / self.stderr_slope)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.predicted.is_some_and(|p| (self.slope - p).abs() <= tol)
    }
}

/// Fits log m̂ = intercept + slope·log g with weights 1/Var(log m̂), using
/// the delta method Var(log m̂) ≈ (se/m̂)². For binomial estimates this is
/// (1 − p̂)/(N p̂).
pub fn fit_power_law(points: &[FitPoint], predicted: Option<f64>) -> Result<ExponentFit> {
    let mut used = Vec::new();
    let mut excluded = Vec::new();
    for p in points {
        let usable = p.grid_value > 0.0 && p.estimate > 0.0 && p.stderr > 0.0 && p.stderr.is_finite();
        if usable {
            used.push(*p);
        } else {
            excluded.push(p.grid_value);
        }
    }
    if used.len() < 3 {
        return Err(ArmlabError::InsufficientData(used.len()));
    }
    let xs: Vec<f64> = used.iter().map(|p| p.grid_value.ln()).collect();
    let ys: Vec<f64> = used.iter().map(|p| p.estimate.ln()).collect();
    let ws: Vec<f64> = used.iter().map(|p| (p.estimate / p.stderr).powi(2)).collect();
    let sw: f64 = ws.iter().sum();
    let xbar = ws.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ybar = ws.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..xs.len() {
        let (dx, dy) = (xs[i] - xbar, ys[i] - ybar);
        sxx += ws[i] * dx * dx;
        sxy += ws[i] * dx * dy;
        syy += ws[i] * dy * dy;
    }
    if !(sxx > 0.0) {
        return Err(ArmlabError::param("grid values must not all coincide"));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let chi2: f64 = (0..xs.len()).map(|i| ws[i] * (ys[i] - intercept - slope * xs[i]).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - chi2 / syy } else { 1.0 };
    Ok(ExponentFit {
        slope,
        intercept,
        stderr_slope: (1.0 / sxx).sqrt(),
        r_squared,
        reduced_chi2: chi2 / (xs.len() - 2).max(1) as f64,
        predicted,
        points: used,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pts(f: impl Fn(f64) -> f64) -> Vec<FitPoint> {
        (1..=6)
            .map(|k| {
                let g = 0.5f64.powi(k);
                FitPoint { grid_value: g, estimate: f(g), stderr: 0.01 * f(g) }
            })
            .collect()
    }

    #[test]
    fn exact_power_law() {
        let fit = fit_power_law(&pts(|g| 3.0 * g.powf(0.75)), Some(0.75)).unwrap();
        assert_relative_eq!(fit.slope, 0.75, max_relative = 1e-12);
        assert_relative_eq!(fit.intercept, 3f64.ln(), max_relative = 1e-12);
        assert!(fit.r_squared > 1.0 - 1e-12);
        assert!(fit.z_score().unwrap().abs() < 1e-6);
        // Equal relative errors 1%: se(slope) = 0.01/sqrt(Σ(dx)²).
        let xs: Vec<f64> = (1..=6).map(|k| -(k as f64) * 2f64.ln()).collect();
        let m = xs.iter().sum::<f64>() / 6.0;
        let sxx: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
        assert_relative_eq!(fit.stderr_slope, 0.01 / sxx.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn exclusions_and_shortage() {
        let mut p = pts(|g| g);
        p[0].estimate = 0.0;
        p[1].stderr = 0.0;
        let fit = fit_power_law(&p, None).unwrap();
        assert_eq!(fit.excluded.len(), 2);
        assert_eq!(fit.points.len(), 4);
        p.truncate(4);
        assert!(matches!(fit_power_law(&p, None), Err(ArmlabError::InsufficientData(2))));
    }
}
