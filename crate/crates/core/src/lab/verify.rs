//! Statistical verification suites: martingale drift, change of measure,
//! the stationary law of the Ĵ diffusion and moment scaling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use super::estimate::{fit_points, run_paths, PathOutcome, PointEstimate};
use super::exponents::u1;
use super::fit::ExponentFit;
use crate::crossing::{simulate_hpi, simulate_threshold, DetectConfig, EventSpec, Terminal, TipWatcher, Variant};
use crate::driver::{martingale_value, DriverConfig, MartingaleSpec, SleRun};
use crate::error::{ArmlabError, Result};
use crate::loewner::DtPolicy;
use crate::rng::{normal, path_rng, stream_seed};

const DENSITY_STREAM: u64 = 0xd3e5;
const MOMENT_STREAM: u64 = 0x303e;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub spec: MartingaleSpec,
    pub paths: u64,
    pub horizon: f64,
    /// Mean of M_τ/M₀ with τ the freeze time.
    pub mean_ratio: f64,
    pub stderr: f64,
    pub z_score: f64,
    /// Paths frozen before the horizon because a gap became singular.
    pub frozen_early: u64,
}

/// Runs plain SLE_κ with the force points of `spec` tracked, stopped at the
/// horizon or once a force-point gap falls below 10·δ_hit·|x|.
fn run_frozen(
    spec: &MartingaleSpec,
    seed: u64,
    dt_policy: DtPolicy,
    path: u64,
    horizon: f64,
    mut watch: Option<(&mut TipWatcher, &mut bool)>,
) -> Result<(f64, bool)> {
    let cfg = spec.plain_driver(seed, dt_policy);
    let mut run = SleRun::new(&cfg, path, &[])?;
    if watch.is_some() {
        run = run.record_chain();
    }
    let idx: Vec<usize> = [run.left_index(), run.right_index()].into_iter().flatten().collect();
    let m0 = spec.initial_value();
    let mut value = 1.0;
    while run.state.t < horizon && horizon - run.state.t > 1e-15 * horizon {
        let near = idx.iter().any(|&i| {
            let m = &run.state.marks[i];
            m.swallowed || m.gap(run.state.w) < 10.0 * m.threshold()
        });
        if near {
            return Ok((value, true));
        }
        run.step(horizon - run.state.t)?;
        if run.force_point_hit().is_some() {
            return Ok((value, true));
        }
        value = martingale_value(spec, &run.state)? / m0;
        if let Some((w, hit)) = watch.as_mut() {
            if !**hit {
                let ri = run.right_index().expect("right force point");
                let ups = run.state.upsilon_j(ri)?.upsilon;
                **hit = w.observe(run.chain.as_ref().expect("chain"), ups)?;
            }
        }
    }
    Ok((value, false))
}

/// Checks E[M_τ/M₀] = 1 for the SLE_κ(ρ^L; ρ^R) martingale under plain SLE_κ.
pub fn martingale_drift_test(
    spec: &MartingaleSpec,
    paths: u64,
    horizon: f64,
    seed: u64,
    dt_policy: DtPolicy,
) -> Result<MartingaleReport> {
    if paths < 2 || !(horizon > 0.0) {
        return Err(ArmlabError::param("need at least 2 paths and a positive horizon"));
    }
    let out: Vec<(f64, bool)> = (0..paths)
        .into_par_iter()
        .map(|p| run_frozen(spec, seed, dt_policy, p, horizon, None))
        .collect::<Result<_>>()?;
    let n = paths as f64;
    let mean = out.iter().map(|o| o.0).sum::<f64>() / n;
    let var = out.iter().map(|o| (o.0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let stderr = (var / n).sqrt();
    let z_score = if stderr > 0.0 { (mean - 1.0) / stderr } else { 0.0 };
    Ok(MartingaleReport {
        spec: *spec,
        paths,
        horizon,
        mean_ratio: mean,
        stderr,
        z_score,
        frozen_early: out.iter().filter(|o| o.1).count() as u64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GirsanovReport {
    pub kappa: f64,
    pub rho: f64,
    pub x: f64,
    pub horizon: f64,
    pub radius: f64,
    pub direct: f64,
    pub direct_stderr: f64,
    pub reweighted: f64,
    pub reweighted_stderr: f64,
    /// Difference over the combined standard error.
    pub z_score: f64,
}

/// Estimates P[dist(η[0,h], x) < radius] under SLE_κ(ρ) with force point x
/// directly and by reweighting plain SLE_κ paths with M_h/M₀.
pub fn girsanov_check(
    kappa: f64,
    rho: f64,
    x: f64,
    radius: f64,
    horizon: f64,
    paths: u64,
    seed: u64,
    dt_policy: DtPolicy,
) -> Result<GirsanovReport> {
    if !(x > 0.0 && radius > 0.0 && horizon > 0.0) || paths < 2 {
        return Err(ArmlabError::param("girsanov_check needs x, radius, horizon > 0 and 2 paths"));
    }
    let spec = MartingaleSpec::right(kappa, rho, x);
    let direct: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let cfg = spec.weighted_driver(seed, dt_policy);
            let mut run = SleRun::new(&cfg, p, &[])?.record_chain();
            let ri = run.right_index().expect("right force point");
            let mut watch = TipWatcher::new(x, radius);
            while run.state.t < horizon && horizon - run.state.t > 1e-15 * horizon {
                run.step(horizon - run.state.t)?;
                if run.force_point_hit().is_some() {
                    break;
                }
                let ups = run.state.upsilon_j(ri)?.upsilon;
                if watch.observe(run.chain.as_ref().expect("chain"), ups)? {
                    return Ok(1.0);
                }
            }
            Ok(0.0)
        })
        .collect::<Result<_>>()?;
    let reweighted: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let mut watch = TipWatcher::new(x, radius);
            let mut hit = false;
            // A separate seed keeps the two estimates independent.
            let (m, _) = run_frozen(&spec, seed ^ 0x9e37, dt_policy, p, horizon, Some((&mut watch, &mut hit)))?;
            Ok(if hit { m } else { 0.0 })
        })
        .collect::<Result<_>>()?;
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (var / n).sqrt())
    };
    let (d, ds) = stats(&direct);
    let (r, rs) = stats(&reweighted);
    let se = (ds * ds + rs * rs).sqrt();
    Ok(GirsanovReport {
        kappa,
        rho,
        x,
        horizon,
        radius,
        direct: d,
        direct_stderr: ds,
        reweighted: r,
        reweighted_stderr: rs,
        z_score: if se > 0.0 { (d - r) / se } else { 0.0 },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub kappa: f64,
    pub nu: f64,
    pub samples: usize,
    pub burn_in: f64,
    /// Parameters of the Beta law y^{a−1}(1 − y)^{b−1}.
    pub beta_a: f64,
    pub beta_b: f64,
    pub ks: f64,
    pub mean: f64,
    pub mean_stderr: f64,
    pub expected_mean: f64,
}

/// Stationary law of dĴ = (κ−ν−4 − (κ−ν−2)Ĵ)ds + √(κĴ(1−Ĵ))dB on (0, 1):
/// density ∝ y^{1−(8+2ν)/κ}(1 − y)^{4/κ−1}, i.e. Beta(2 − (8+2ν)/κ, 4/κ).
pub fn stationary_beta(kappa: f64, nu: f64) -> Result<(f64, f64)> {
    if !(kappa > 0.0) || !(8.0 + 2.0 * nu < 2.0 * kappa) {
        return Err(ArmlabError::Regime { kappa, what: format!("invariant density needs 8 + 2ν < 2κ, ν = {nu}") });
    }
    Ok((2.0 - (8.0 + 2.0 * nu) / kappa, 4.0 / kappa))
}

/// Simulates independent copies of the Ĵ diffusion from Ĵ₀ = 1 up to time
/// `burn_in` and compares the end points with the stationary Beta law.
///
/// The diffusion is integrated in the angle θ with Ĵ = (1 − cos θ)/2, which
/// has constant volatility √κ; both ends reflect. Steps shrink near the ends
/// where the drift is singular.
pub fn invariant_density_test(
    kappa: f64,
    nu: f64,
    samples: usize,
    burn_in: f64,
    seed: u64,
    ds_max: f64,
) -> Result<DensityReport> {
    let (a, b) = stationary_beta(kappa, nu)?;
    if samples < 2 || !(burn_in > 0.0) || !(ds_max > 0.0) {
        return Err(ArmlabError::param("need samples ≥ 2, burn_in > 0, ds_max > 0"));
    }
    let drift_a = kappa - nu - 4.0;
    let drift_b = kappa - nu - 2.0;
    let pi = std::f64::consts::PI;
    let mut ys: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, DENSITY_STREAM, i);
            let mut theta = pi;
            let mut s = 0.0;
            while s < burn_in {
                let edge = theta.min(pi - theta).max(1e-6);
                let ds = (0.25 * edge * edge / kappa).clamp(1e-8, ds_max).min(burn_in - s);
                let sin = theta.sin().max(1e-12);
                let mu = (2.0 * drift_a - drift_b * (1.0 - theta.cos()) - 0.5 * kappa * theta.cos()) / sin;
                theta += mu * ds + (kappa * ds).sqrt() * normal(&mut rng);
                // Reflect into [0, π]; a huge overshoot is folded repeatedly.
                theta = theta.rem_euclid(2.0 * pi);
                if theta > pi {
                    theta = 2.0 * pi - theta;
                }
                s += ds;
            }
            0.5 * (1.0 - theta.cos())
        })
        .collect();
    ys.sort_by(f64::total_cmp);
    let law = Beta::new(a, b).map_err(|e| ArmlabError::param(e.to_string()))?;
    let n = ys.len() as f64;
    let mut ks: f64 = 0.0;
    for (i, &y) in ys.iter().enumerate() {
        let f = law.cdf(y);
        ks = ks.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    let mean = ys.iter().sum::<f64>() / n;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(DensityReport {
        kappa,
        nu,
        samples,
        burn_in,
        beta_a: a,
        beta_b: b,
        ks,
        mean,
        mean_stderr: (var / n).sqrt(),
        expected_mean: a / (a + b),
    })
}

/// Moment-scaling experiments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MomentKind {
    /// E[(g_T(x) − g_T(y))^λ] under SLE_κ(ν), ν ≤ κ/2 − 4, T the time x is
    /// reached; grid over x − y.
    SwallowGap { nu: f64, lambda: f64 },
    /// E[(g_σ(x) − g_σ(y))^λ 1_F] under SLE_κ(ν), ν ≥ κ/2 − 2, σ the hitting
    /// time of (−∞, y], F = {Υ_σ ≥ 4c·x} ⊂ {dist(η[0,σ], x) ≥ c·x}; grid
    /// over x − y.
    SwallowGapFar { nu: f64, lambda: f64, c: f64 },
    /// E[(g(x) − W)^{λ−b} g'(x)^b 1{τ̂_ε < T}] at τ̂_ε = inf{Υ ≤ ε}, κ > 4;
    /// grid over ε.
    BallDerivative { lambda: f64, b: f64 },
    /// The same moment at the Euclidean time τ_ε = inf{|η − x| ≤ ε}, κ ≤ 4.
    ArcDerivative { lambda: f64, b: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentConfig {
    pub kind: MomentKind,
    pub kappa: f64,
    pub x: f64,
    pub grid: Vec<f64>,
    pub paths_per_point: u64,
    pub seed: u64,
    #[serde(default)]
    pub detect: DetectConfig,
}

impl MomentConfig {
    /// Checks the parameter regime and returns the predicted slope.
    pub fn predicted(&self) -> Result<f64> {
        let k = self.kappa;
        let regime = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(ArmlabError::Regime { kappa: k, what: what.to_string() })
            }
        };
        match self.kind {
            MomentKind::SwallowGap { nu, lambda } => {
                regime(nu <= k / 2.0 - 4.0 && lambda <= 0.0, "swallow_gap needs ν ≤ κ/2 − 4 and λ ≤ 0")?;
                Ok(lambda)
            }
            MomentKind::SwallowGapFar { nu, lambda, c } => {
                regime(
                    k > 4.0 && nu >= k / 2.0 - 2.0 && lambda <= 0.0 && c > 0.0 && c < 1.0,
                    "swallow_gap_far needs κ > 4, ν ≥ κ/2 − 2, λ ≤ 0, c ∈ (0, 1)",
                )?;
                Ok(lambda)
            }
            MomentKind::BallDerivative { lambda, b } => {
                let u = u1(k, lambda);
                regime(
                    k > 4.0
                        && lambda >= 0.0
                        && k * lambda - k * u + 8.0 - 2.0 * k < k * b
                        && k * b <= k * lambda + k * u,
                    "ball_derivative needs κ > 4, λ ≥ 0 and κλ − κu₁ + 8 − 2κ < κb ≤ κλ + κu₁",
                )?;
                Ok(u + lambda - b)
            }
            MomentKind::ArcDerivative { lambda, b } => {
                regime(
                    k <= 4.0 && lambda >= 0.0 && 4.0 * b >= (lambda - b) * (k * lambda - k * b + 4.0 - k),
                    "arc_derivative needs κ ≤ 4, λ ≥ 0 and 4b ≥ (λ − b)(κλ − κb + 4 − κ)",
                )?;
                Ok(u1(k, lambda) + lambda - b)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths_per_point == 0 || self.grid.is_empty() || !(self.x > 0.0) {
            return Err(ArmlabError::param("need paths ≥ 1, a non-empty grid and x > 0"));
        }
        if !self.grid.iter().all(|&g| g > 0.0) {
            return Err(ArmlabError::param("grid values must be positive"));
        }
        self.detect.validate()?;
        self.predicted().map(|_| ())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentResult {
    pub config: MomentConfig,
    pub predicted: f64,
    pub points: Vec<PointEstimate>,
    pub fit: Option<ExponentFit>,
    pub warnings: Vec<String>,
    /// Paths where g(x) − g(y) < x − y at the stopping time (lemmas only).
    pub pathwise_violations: u64,
}

fn outcome(value: f64, success: bool, terminal: Terminal, steps: u64) -> PathOutcome {
    PathOutcome { value, success, terminal, near_cutoff: false, steps }
}

/// Runs SLE_κ(ν) with force point x and a tracked mark at y until `stop`
/// says so; returns (X − Y, Υ_x, steps, stopped).
fn run_force_point(
    kappa: f64,
    nu: f64,
    x: f64,
    y: f64,
    seed: u64,
    path: u64,
    dt_policy: DtPolicy,
    horizon: f64,
    stop_on_y: bool,
) -> Result<(f64, f64, u64, bool)> {
    let cfg = DriverConfig { dt_policy, ..DriverConfig::sle(kappa, seed) }.with_right(x, Some(nu)).with_left(y, None);
    let mut run = SleRun::new(&cfg, path, &[])?;
    let xi = run.right_index().expect("force point");
    let yi = run.left_index().expect("y mark");
    let mut upsilon = x;
    let mut steps = 0;
    while run.state.t < horizon && horizon - run.state.t > 1e-15 * horizon {
        run.step(horizon - run.state.t)?;
        steps += 1;
        let st = &run.state;
        if !st.marks[xi].swallowed {
            upsilon = st.upsilon_j(xi)?.upsilon;
        }
        let done = if stop_on_y { st.marks[yi].swallowed } else { st.marks[xi].swallowed };
        if done {
            return Ok((st.marks[xi].image - st.y_left, upsilon, steps, true));
        }
    }
    let st = &run.state;
    Ok((st.marks[xi].image - st.y_left, upsilon, steps, false))
}

/// Estimates the moment of `config.kind` at each grid value and fits its
/// scaling exponent.
pub fn moment_scaling_test(config: &MomentConfig) -> Result<MomentResult> {
    config.validate()?;
    let predicted = config.predicted()?;
    let k = config.kappa;
    let x = config.x;
    let n = config.paths_per_point;
    let mut points = Vec::with_capacity(config.grid.len());
    let mut violations = 0u64;
    for (gi, &g) in config.grid.iter().enumerate() {
        let seed = stream_seed(config.seed, MOMENT_STREAM, gi as u64);
        let outcomes: Vec<(PathOutcome, bool)> = match config.kind {
            MomentKind::SwallowGap { nu, lambda } | MomentKind::SwallowGapFar { nu, lambda, .. } => {
                let far = matches!(config.kind, MomentKind::SwallowGapFar { .. });
                let y = x - g;
                let horizon = config.detect.horizon_factor * g * g;
                (0..n)
                    .into_par_iter()
                    .map(|p| {
                        let (gap, ups, steps, stopped) =
                            run_force_point(k, nu, x, y, seed, p, config.detect.dt_policy, horizon, far)?;
                        let violated = gap < g * (1.0 - 1e-9);
                        let in_f = match config.kind {
                            MomentKind::SwallowGapFar { c, .. } => ups >= 4.0 * c * x,
                            _ => true,
                        };
                        let terminal = if stopped { Terminal::TargetReached } else { Terminal::Horizon };
                        let value = if in_f && stopped { gap.powf(lambda) } else { 0.0 };
                        Ok((outcome(value, in_f && stopped, terminal, steps), violated))
                    })
                    .collect::<Result<_>>()?
            }
            MomentKind::BallDerivative { lambda, b } | MomentKind::ArcDerivative { lambda, b } => {
                let arc = matches!(config.kind, MomentKind::ArcDerivative { .. });
                let variant = if arc { Variant::HpiOdd } else { Variant::HOdd };
                let spec = EventSpec { variant, n: 1, epsilon: g, x, y: 0.0, kappa: k };
                let outs = run_paths(n, |p| {
                    let mut rng = path_rng(seed, MOMENT_STREAM, p);
                    let rec = if arc {
                        simulate_hpi(&spec, &config.detect, &mut rng)?
                    } else {
                        simulate_threshold(&spec, &config.detect, &mut rng)?
                    };
                    let value = match (rec.success, rec.hit_state) {
                        (true, Some(h)) => h.gap.powf(lambda - b) * h.deriv.powf(b),
                        _ => 0.0,
                    };
                    Ok(outcome(value, rec.success, rec.terminal, rec.steps))
                })?;
                outs.into_iter().map(|o| (o, false)).collect()
            }
        };
        violations += outcomes.iter().filter(|o| o.1).count() as u64;
        let outs: Vec<PathOutcome> = outcomes.into_iter().map(|o| o.0).collect();
        points.push(PointEstimate::reduce(g, &outs));
    }
    let mut warnings = Vec::new();
    if violations > 0 {
        warnings.push(format!("{violations} paths violate g(x) − g(y) ≥ x − y"));
    }
    let fit = fit_points(&points, Some(predicted), &mut warnings);
    Ok(MomentResult { config: config.clone(), predicted, points, fit, warnings, pathwise_violations: violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_rho_is_exactly_one() {
        let spec = MartingaleSpec::right(6.0, 0.0, 1.0);
        let r = martingale_drift_test(&spec, 20, 0.05, 1, DtPolicy::default()).unwrap();
        assert_eq!(r.mean_ratio, 1.0);
        assert_eq!(r.z_score, 0.0);
    }

    #[test]
    fn beta_parameters() {
        let (a, b) = stationary_beta(6.0, -1.0).unwrap();
        assert_relative_eq!(a, 1.0, max_relative = 1e-15);
        assert_relative_eq!(b, 2.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(a / (a + b), 0.6, max_relative = 1e-15);
        assert!(stationary_beta(6.0, 2.0).is_err());
    }

    #[test]
    fn beta_mean_by_quadrature() {
        // Normalise y^{a−1}(1−y)^{b−1} numerically; substitute y = 1 − t³ to
        // remove the endpoint singularity at b = 2/3.
        let (a, b) = stationary_beta(6.0, -1.0).unwrap();
        let m = 200_000;
        let (mut z, mut m1) = (0.0, 0.0);
        for i in 0..m {
            let t = (i as f64 + 0.5) / m as f64;
            let y = 1.0 - t * t * t;
            let w = y.powf(a - 1.0) * (t * t * t).powf(b - 1.0) * 3.0 * t * t;
            z += w;
            m1 += w * y;
        }
        assert_relative_eq!(m1 / z, 0.6, max_relative = 1e-6);
    }

    #[test]
    fn regimes() {
        let base = MomentConfig {
            kind: MomentKind::SwallowGap { nu: -1.0, lambda: 0.0 },
            kappa: 6.0,
            x: 0.5,
            grid: vec![1.0, 2.0],
            paths_per_point: 1,
            seed: 0,
            detect: DetectConfig::default(),
        };
        assert_eq!(base.predicted().unwrap(), 0.0);
        let bad = MomentConfig { kind: MomentKind::SwallowGap { nu: 0.0, lambda: 0.0 }, ..base.clone() };
        assert!(bad.predicted().is_err());
        let p31 = MomentConfig { kind: MomentKind::BallDerivative { lambda: 1.0, b: 1.0 }, ..base.clone() };
        assert_relative_eq!(p31.predicted().unwrap(), 1.0, max_relative = 1e-14);
        let p42 = MomentConfig { kind: MomentKind::ArcDerivative { lambda: 1.0, b: 1.0 }, ..base };
        assert!(p42.predicted().is_err());
    }

    #[test]
    fn lemma24_trivial_moment() {
        let cfg = MomentConfig {
            kind: MomentKind::SwallowGap { nu: -1.0, lambda: 0.0 },
            kappa: 6.0,
            x: 0.5,
            grid: vec![1.0, 2.0, 4.0],
            paths_per_point: 40,
            seed: 2,
            detect: DetectConfig { horizon_factor: 1e6, ..DetectConfig::default() },
        };
        let r = moment_scaling_test(&cfg).unwrap();
        assert_eq!(r.pathwise_violations, 0);
        for p in &r.points {
            // X − W is Bessel of dimension 4/3: P(T > t) decays like t^{-1/3}.
            assert!(p.horizon_failures <= 2, "{p:?}");
            assert_eq!(p.p_hat * p.trials as f64, p.hits as f64);
        }
    }
}
