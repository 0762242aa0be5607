//! Monte Carlo estimation of crossing probabilities over a grid, with the
//! log-log fit against the predicted exponent.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::exponents::{predicted_slope, GridAxis};
use super::fit::{fit_power_law, ExponentFit, FitPoint};
use crate::crossing::{
    simulate_hpi, simulate_threshold, simulate_threshold_multi, simulate_trace_gt4, CrossingRecord, DetectConfig,
    DetectionMode, EventSpec, Terminal,
};
use crate::error::{ArmlabError, Result};
use crate::rng::{path_rng, PathRng};

const ESTIMATE_STREAM: u64 = 0xe571;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateConfig {
    /// Template event; the grid overrides ε, x or y according to `axis`.
    pub event: EventSpec,
    pub axis: GridAxis,
    pub grid: Vec<f64>,
    pub paths_per_point: u64,
    pub seed: u64,
    #[serde(default)]
    pub detect: DetectConfig,
    #[serde(default)]
    pub mode: DetectionMode,
    /// Reuse the driving noise of path i at every grid point.
    #[serde(default)]
    pub coupled: bool,
}

impl EstimateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths_per_point == 0 {
            return Err(ArmlabError::param("paths_per_point must be at least 1"));
        }
        if self.grid.is_empty() {
            return Err(ArmlabError::param("empty grid"));
        }
        let increasing = self.grid.windows(2).all(|w| w[0] < w[1]);
        let decreasing = self.grid.windows(2).all(|w| w[0] > w[1]);
        if !(increasing || decreasing) {
            return Err(ArmlabError::param("grid must be strictly monotone"));
        }
        if self.mode == DetectionMode::Trace && self.detect.importance_nu.is_some() {
            return Err(ArmlabError::param("importance sampling is only available in threshold mode"));
        }
        if self.event.variant.is_pi() && self.detect.importance_nu.is_some() {
            return Err(ArmlabError::param("importance sampling does not apply to H^π events"));
        }
        self.detect.validate()?;
        for &g in &self.grid {
            self.spec_at(g)?.validate()?;
        }
        predicted_slope(self.event.variant, self.event.n, self.event.kappa, self.axis)?;
        Ok(())
    }

    /// Event at grid value `g`.
    pub fn spec_at(&self, g: f64) -> Result<EventSpec> {
        let mut s = self.event;
        match self.axis {
            GridAxis::Epsilon => s.epsilon = g,
            GridAxis::EpsilonTiedX { ratio } => {
                s.epsilon = g;
                s.x = ratio * g;
            }
            GridAxis::Ratio => {
                if !(g > 0.0 && g <= 1.0) {
                    return Err(ArmlabError::param(format!("x/(x−y) = {g} outside (0, 1]")));
                }
                s.y = s.x - s.x / g;
            }
        }
        Ok(s)
    }

    pub fn predicted(&self) -> Result<f64> {
        predicted_slope(self.event.variant, self.event.n, self.event.kappa, self.axis)
    }

    fn stream(&self, point: usize) -> u64 {
        if self.coupled {
            ESTIMATE_STREAM
        } else {
            ESTIMATE_STREAM + 1 + point as u64
        }
    }
}

/// Per-path contribution to a grid point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathOutcome {
    /// Summand of the estimator: 1{success}·weight for probabilities.
    pub value: f64,
    pub success: bool,
    pub terminal: Terminal,
    pub near_cutoff: bool,
    pub steps: u64,
}

impl PathOutcome {
    pub fn from_record(rec: &CrossingRecord) -> Self {
        PathOutcome {
            value: if rec.success { rec.weight } else { 0.0 },
            success: rec.success,
            terminal: rec.terminal,
            near_cutoff: rec.near_cutoff,
            steps: rec.steps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub grid_value: f64,
    pub trials: u64,
    pub hits: u64,
    /// Mean of the path values (a probability, or a moment).
    pub p_hat: f64,
    pub stderr: f64,
    pub horizon_failures: u64,
    pub near_cutoff: u64,
    pub mean_steps: f64,
}

impl PointEstimate {
    /// Reduces outcomes in index order, so the result does not depend on how
    /// paths were scheduled.
    pub fn reduce(grid_value: f64, outcomes: &[PathOutcome]) -> Self {
        let n = outcomes.len() as f64;
        let (mut s1, mut s2, mut steps) = (0.0, 0.0, 0.0);
        let (mut hits, mut horizon, mut cutoff) = (0, 0, 0);
        for o in outcomes {
            s1 += o.value;
            s2 += o.value * o.value;
            steps += o.steps as f64;
            hits += u64::from(o.success);
            horizon += u64::from(o.terminal == Terminal::Horizon);
            cutoff += u64::from(o.near_cutoff);
        }
        let mean = s1 / n;
        let var = (s2 / n - mean * mean).max(0.0);
        PointEstimate {
            grid_value,
            trials: outcomes.len() as u64,
            hits,
            p_hat: mean,
            stderr: (var / n).sqrt(),
            horizon_failures: horizon,
            near_cutoff: cutoff,
            mean_steps: steps / n,
        }
    }

    pub fn fit_point(&self) -> FitPoint {
        FitPoint { grid_value: self.grid_value, estimate: self.p_hat, stderr: self.stderr }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateResult {
    pub config: EstimateConfig,
    pub predicted: f64,
    pub points: Vec<PointEstimate>,
    pub fit: Option<ExponentFit>,
    pub warnings: Vec<String>,
}

/// Runs `paths` evaluations of `f(path_index)` in parallel and returns them
/// in index order.
pub fn run_paths<F>(paths: u64, f: F) -> Result<Vec<PathOutcome>>
where
    F: Fn(u64) -> Result<PathOutcome> + Sync + Send,
{
    (0..paths).into_par_iter().map(f).collect()
}

/// Fits the points and collects the warnings the fit raises.
pub fn fit_points(points: &[PointEstimate], predicted: Option<f64>, warnings: &mut Vec<String>) -> Option<ExponentFit> {
    for p in points {
        if p.hits == 0 || p.p_hat <= 0.0 {
            warnings.push(format!("grid value {:e}: no hits, excluded from the fit", p.grid_value));
        }
        if p.horizon_failures > 0 {
            warnings.push(format!(
                "grid value {:e}: {} of {} paths reached the horizon",
                p.grid_value, p.horizon_failures, p.trials
            ));
        }
        if p.near_cutoff > 0 {
            warnings.push(format!(
                "grid value {:e}: {} traces came near the strip truncation",
                p.grid_value, p.near_cutoff
            ));
        }
    }
    let fit_points: Vec<FitPoint> = points.iter().map(PointEstimate::fit_point).collect();
    match fit_power_law(&fit_points, predicted) {
        Ok(f) => Some(f),
        Err(e) => {
            warnings.push(format!("fit aborted: {e}"));
            None
        }
    }
}

fn simulate_one(spec: &EventSpec, cfg: &EstimateConfig, rng: &mut PathRng) -> Result<CrossingRecord> {
    if spec.variant.is_pi() {
        simulate_hpi(spec, &cfg.detect, rng)
    } else {
        match cfg.mode {
            DetectionMode::Threshold => simulate_threshold(spec, &cfg.detect, rng),
            DetectionMode::Trace => simulate_trace_gt4(spec, &cfg.detect, rng),
        }
    }
}

/// Estimates the event probability at every grid point and fits the slope.
pub fn estimate_probability(config: &EstimateConfig) -> Result<EstimateResult> {
    config.validate()?;
    let predicted = config.predicted()?;
    let n = config.paths_per_point;
    let multi = config.coupled
        && config.axis == GridAxis::Epsilon
        && config.mode == DetectionMode::Threshold
        && !config.event.variant.is_pi();
    let points: Vec<PointEstimate> = if multi {
        // One path settles every ε at once.
        let spec = config.spec_at(config.grid[0])?;
        let records: Vec<Vec<CrossingRecord>> = (0..n)
            .into_par_iter()
            .map(|p| {
                let mut rng = path_rng(config.seed, config.stream(0), p);
                simulate_threshold_multi(&spec, &config.grid, &config.detect, &mut rng)
            })
            .collect::<Result<_>>()?;
        (0..config.grid.len())
            .map(|i| {
                let outcomes: Vec<PathOutcome> = records.iter().map(|r| PathOutcome::from_record(&r[i])).collect();
                PointEstimate::reduce(config.grid[i], &outcomes)
            })
            .collect()
    } else {
        let mut points = Vec::with_capacity(config.grid.len());
        for (i, &g) in config.grid.iter().enumerate() {
            let spec = config.spec_at(g)?;
            let stream = config.stream(i);
            let outcomes = run_paths(n, |p| {
                let mut rng = path_rng(config.seed, stream, p);
                Ok(PathOutcome::from_record(&simulate_one(&spec, config, &mut rng)?))
            })?;
            points.push(PointEstimate::reduce(g, &outcomes));
        }
        points
    };
    let mut warnings = Vec::new();
    let fit = fit_points(&points, Some(predicted), &mut warnings);
    Ok(EstimateResult { config: config.clone(), predicted, points, fit, warnings })
}

/// Log-spaced grid from `start` by factors of `ratio`, `count` values.
pub fn geometric_grid(start: f64, ratio: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start * ratio.powi(k as i32)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossing::Variant;

    fn config(coupled: bool) -> EstimateConfig {
        EstimateConfig {
            event: EventSpec { variant: Variant::HOdd, n: 1, epsilon: 0.5, x: 1.0, y: 0.0, kappa: 6.0 },
            axis: GridAxis::Epsilon,
            grid: geometric_grid(0.5, 0.5, 4),
            paths_per_point: 300,
            seed: 5,
            detect: DetectConfig::default(),
            mode: DetectionMode::Threshold,
            coupled,
        }
    }

    #[test]
    fn reduce_is_binomial_for_indicators() {
        let o = |s: bool| PathOutcome {
            value: f64::from(u8::from(s)),
            success: s,
            terminal: Terminal::TargetReached,
            near_cutoff: false,
            steps: 1,
        };
        let outs: Vec<_> = (0..10).map(|i| o(i < 3)).collect();
        let p = PointEstimate::reduce(1.0, &outs);
        assert_eq!(p.hits, 3);
        assert!((p.p_hat - 0.3).abs() < 1e-15);
        assert!((p.stderr - (0.3f64 * 0.7 / 10.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn deterministic_and_coupled_monotone() {
        let a = estimate_probability(&config(true)).unwrap();
        let b = estimate_probability(&config(true)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        for w in a.points.windows(2) {
            assert!(w[0].hits >= w[1].hits, "{:?}", a.points);
        }
        let c = estimate_probability(&config(false)).unwrap();
        assert_eq!(c.points.len(), 4);
        assert!(c.fit.is_some());
    }

    #[test]
    fn spec_at_axes() {
        let mut c = config(false);
        c.axis = GridAxis::EpsilonTiedX { ratio: 2.0 };
        let s = c.spec_at(0.1).unwrap();
        assert_eq!((s.epsilon, s.x), (0.1, 0.2));
        c.axis = GridAxis::Ratio;
        let s = c.spec_at(0.25).unwrap();
        assert!((s.y + 3.0).abs() < 1e-15);
        assert!(c.spec_at(1.5).is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = config(false);
        c.grid = vec![0.1, 0.3, 0.2];
        assert!(c.validate().is_err());
        let mut c = config(false);
        c.paths_per_point = 0;
        assert!(c.validate().is_err());
        let mut c = config(false);
        c.event.variant = Variant::HpiOdd;
        assert!(c.validate().is_err(), "H^π needs κ ≤ 4");
    }
}
