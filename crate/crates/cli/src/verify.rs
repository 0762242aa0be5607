//! `verify <suite>`: recursion identities, martingale drift, comparison
//! principle, stationary density, moment scaling and change of measure.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use armlab::crossing::{comparison_check, random_fixture, reference_fixture};
use armlab::driver::MartingaleSpec;
use armlab::lab::{
    check_recursions, girsanov_check, invariant_density_test, martingale_drift_test, moment_scaling_test, MomentConfig,
    MomentKind,
};
use armlab::{DetectConfig, DtPolicy};
use clap::{Args, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::estimate::parse_grid;
use crate::output::{plot_svg, results_csv, to_json, write_file, Manifest};
use crate::usage;

/// Statistical checks fail the process only beyond this |z|.
pub const Z_FAIL: f64 = 5.0;
pub const RECURSION_TOL: f64 = 1e-12;

#[derive(Debug, Subcommand)]
pub enum VerifySuite {
    /// Exponent recursion identities.
    Recursions(RecursionsArgs),
    /// E[M_τ/M₀] = 1 for the SLE_κ(ρ) martingale under plain SLE_κ.
    Martingale(MartingaleArgs),
    /// Monotonicity of well-oriented crossing counts on random fixtures.
    Comparison(ComparisonArgs),
    /// Stationary law of the Ĵ diffusion against its beta density.
    Density(DensityArgs),
    /// Scaling of derivative and distance moments.
    Moments(MomentsArgs),
    /// Direct SLE_κ(ρ) sampling against reweighted SLE_κ.
    Girsanov(GirsanovArgs),
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct RecursionsArgs {
    /// κ values in (4, 8); defaults to 4.5, 5, 16/3, 6, 7.
    #[arg(long, num_args = 1..)]
    pub kappa: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    pub n_max: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct MartingaleArgs {
    #[arg(long, default_value_t = 6.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub rho: f64,
    #[arg(long, default_value_t = 1.0)]
    pub x: f64,
    #[arg(long, default_value_t = 20_000)]
    pub paths: u64,
    #[arg(long, default_value_t = 0.05)]
    pub horizon: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// The drift bias is first order in the step constant (about 0.07·c_step).
    #[arg(long, default_value_t = 0.0025)]
    pub c_step: f64,
    /// Repeat at c_step/2.
    #[arg(long)]
    pub halve: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct ComparisonArgs {
    #[arg(long, default_value_t = 100)]
    pub fixtures: u64,
    #[arg(long, default_value_t = 3)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct DensityArgs {
    #[arg(long, default_value_t = 6.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub nu: f64,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 3.0)]
    pub burn_in: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 2e-3)]
    pub ds_max: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct MomentsArgs {
    /// ball_derivative, arc_derivative, swallow_gap or swallow_gap_far.
    #[arg(long, default_value = "ball_derivative")]
    pub kind: String,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub b: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub nu: f64,
    /// Distance constant of swallow_gap_far.
    #[arg(long, default_value_t = 0.01)]
    pub c: f64,
    #[arg(long, default_value_t = 6.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    pub x: f64,
    /// ε grid for ball_derivative/arc_derivative, x − y grid for the gap moments.
    #[arg(long, default_value = "2^-3..2^-7")]
    pub grid: String,
    #[arg(long, default_value_t = 10_000)]
    pub paths: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub c_step: Option<f64>,
    #[arg(long)]
    pub horizon_factor: Option<f64>,
    /// A MomentConfig JSON file; replaces all other settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct GirsanovArgs {
    #[arg(long, default_value_t = 6.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub rho: f64,
    #[arg(long, default_value_t = 1.0)]
    pub x: f64,
    #[arg(long, default_value_t = 0.3)]
    pub radius: f64,
    #[arg(long, default_value_t = 0.2)]
    pub horizon: f64,
    #[arg(long, default_value_t = 4000)]
    pub paths: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.01)]
    pub c_step: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
}

/// Outcome of a suite: JSON report, pass flag and human-readable lines.
pub struct SuiteOutcome {
    pub report: serde_json::Value,
    pub passed: bool,
    pub lines: Vec<String>,
    /// Extra artifacts (name, contents).
    pub files: Vec<(String, String)>,
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn recursions(a: &RecursionsArgs) -> Result<SuiteOutcome> {
    let kappas = if a.kappa.is_empty() { vec![4.5, 5.0, 16.0 / 3.0, 6.0, 7.0] } else { a.kappa.clone() };
    let mut reports = Vec::new();
    let mut lines = Vec::new();
    let mut passed = true;
    for &k in &kappas {
        let r = check_recursions(k, a.n_max)?;
        let ok = r.max_residual <= RECURSION_TOL;
        passed &= ok;
        lines.push(format!("{} κ={k}: max residual {:.3e} over n ≤ {}", verdict(ok), r.max_residual, a.n_max));
        reports.push(r);
    }
    Ok(SuiteOutcome { report: serde_json::to_value(&reports)?, passed, lines, files: vec![] })
}

fn dt(c_step: f64) -> DtPolicy {
    DtPolicy { c_step, ..DtPolicy::default() }
}

pub fn martingale(a: &MartingaleArgs) -> Result<SuiteOutcome> {
    let spec = MartingaleSpec::right(a.kappa, a.rho, a.x);
    let mut steps = vec![a.c_step];
    if a.halve {
        steps.push(a.c_step / 2.0);
    }
    let mut reports = Vec::new();
    let mut lines = Vec::new();
    let mut passed = true;
    for c in steps {
        let r = martingale_drift_test(&spec, a.paths, a.horizon, a.seed, dt(c))?;
        let ok = r.z_score.abs() <= Z_FAIL;
        passed &= ok;
        lines.push(format!(
            "{} c_step={c}: E[M/M0] = {:.6} ± {:.6}, z = {:.3} ({} of {} frozen early)",
            verdict(ok),
            r.mean_ratio,
            r.stderr,
            r.z_score,
            r.frozen_early,
            r.paths
        ));
        reports.push(serde_json::json!({ "c_step": c, "result": r }));
    }
    Ok(SuiteOutcome { report: serde_json::Value::Array(reports), passed, lines, files: vec![] })
}

pub fn comparison(a: &ComparisonArgs) -> Result<SuiteOutcome> {
    let fig = comparison_check(&reference_fixture());
    let fig_ok = fig.consistent && (fig.outer_count, fig.inner_count) == (2, 5);
    let mut violations = Vec::new();
    for i in 0..a.fixtures {
        let v = comparison_check(&random_fixture(a.seed, i));
        if !v.consistent {
            violations.push(serde_json::json!({ "index": i, "verdict": v }));
        }
    }
    let lines = vec![
        format!("{} reference fixture: counts ({}, {})", verdict(fig_ok), fig.outer_count, fig.inner_count),
        format!("{} {} random fixtures: {} violations", verdict(violations.is_empty()), a.fixtures, violations.len()),
    ];
    let report = serde_json::json!({
        "reference": fig,
        "fixtures": a.fixtures,
        "seed": a.seed,
        "violations": violations,
    });
    Ok(SuiteOutcome { passed: fig_ok && violations.is_empty(), report, lines, files: vec![] })
}

pub fn density(a: &DensityArgs) -> Result<SuiteOutcome> {
    let r = invariant_density_test(a.kappa, a.nu, a.samples, a.burn_in, a.seed, a.ds_max)?;
    let z = (r.mean - r.expected_mean) / r.mean_stderr;
    let ok = z.abs() <= Z_FAIL;
    let lines = vec![format!(
        "{} Beta({:.4}, {:.4}): KS {:.4}, mean {:.5} ± {:.5} vs {:.5} (z = {:.2})",
        verdict(ok),
        r.beta_a,
        r.beta_b,
        r.ks,
        r.mean,
        r.mean_stderr,
        r.expected_mean,
        z
    )];
    Ok(SuiteOutcome { report: serde_json::json!({ "result": r, "mean_z": z }), passed: ok, lines, files: vec![] })
}

/// `a^-b..a^-c` as a geometric grid; anything else goes to `parse_grid`.
fn parse_power_grid(s: &str) -> Result<Vec<f64>> {
    if let Some((lo, hi)) = s.split_once("..") {
        let pow = |t: &str| -> Option<(f64, i32)> {
            let (b, e) = t.split_once('^')?;
            Some((b.trim().parse().ok()?, e.trim().parse().ok()?))
        };
        match (pow(lo), pow(hi)) {
            (Some((b1, e1)), Some((b2, e2))) if b1 == b2 && b1 > 0.0 => {
                let step = if e2 >= e1 { 1 } else { -1 };
                let mut out = Vec::new();
                let mut e = e1;
                loop {
                    out.push(b1.powi(e));
                    if e == e2 {
                        break;
                    }
                    e += step;
                }
                return Ok(out);
            }
            _ => return Err(usage(format!("bad grid '{s}'"))),
        }
    }
    parse_grid(s)
}

pub fn moment_config(a: &MomentsArgs) -> Result<MomentConfig> {
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())));
    }
    let kind = match a.kind.as_str() {
        "ball_derivative" => MomentKind::BallDerivative { lambda: a.lambda, b: a.b },
        "arc_derivative" => MomentKind::ArcDerivative { lambda: a.lambda, b: a.b },
        "swallow_gap" => MomentKind::SwallowGap { nu: a.nu, lambda: a.lambda },
        "swallow_gap_far" => MomentKind::SwallowGapFar { nu: a.nu, lambda: a.lambda, c: a.c },
        other => return Err(usage(format!("unknown moment kind '{other}'"))),
    };
    let mut detect = DetectConfig::default();
    if let Some(c) = a.c_step {
        detect.dt_policy.c_step = c;
    }
    if let Some(h) = a.horizon_factor {
        detect.horizon_factor = h;
    }
    Ok(MomentConfig {
        kind,
        kappa: a.kappa,
        x: a.x,
        grid: parse_power_grid(&a.grid)?,
        paths_per_point: a.paths,
        seed: a.seed,
        detect,
    })
}

pub fn moments(cfg: &MomentConfig) -> Result<SuiteOutcome> {
    cfg.validate()?;
    let r = moment_scaling_test(cfg)?;
    let mut lines = Vec::new();
    let passed = match &r.fit {
        Some(f) => {
            let z = f.z_score().unwrap_or(0.0);
            let ok = z.abs() <= Z_FAIL;
            lines.push(format!(
                "{} {:?}: slope {:.4} ± {:.4} vs predicted {:.4} (z = {:.2})",
                verdict(ok),
                cfg.kind,
                f.slope,
                f.stderr_slope,
                r.predicted,
                z
            ));
            ok
        }
        None => {
            lines.push(format!("FAIL {:?}: no fit", cfg.kind));
            false
        }
    };
    for w in &r.warnings {
        lines.push(format!("warning: {w}"));
    }
    let svg = plot_svg(
        &format!("{:?}, κ = {}", cfg.kind, cfg.kappa),
        "grid value",
        &r.points,
        r.fit.as_ref(),
        Some(r.predicted),
    );
    let files = vec![("results.csv".to_string(), results_csv(&r.points)), ("plot.svg".to_string(), svg)];
    Ok(SuiteOutcome { report: serde_json::to_value(&r)?, passed, lines, files })
}

pub fn girsanov(a: &GirsanovArgs) -> Result<SuiteOutcome> {
    let r = girsanov_check(a.kappa, a.rho, a.x, a.radius, a.horizon, a.paths, a.seed, dt(a.c_step))?;
    let ok = r.z_score.abs() <= Z_FAIL;
    let lines = vec![format!(
        "{} direct {:.4} ± {:.4}, reweighted {:.4} ± {:.4} (z = {:.2})",
        verdict(ok),
        r.direct,
        r.direct_stderr,
        r.reweighted,
        r.reweighted_stderr,
        r.z_score
    )];
    Ok(SuiteOutcome { report: serde_json::to_value(&r)?, passed: ok, lines, files: vec![] })
}

fn finish(command: &str, params: serde_json::Value, out: SuiteOutcome, out_dir: Option<&Path>) -> Result<bool> {
    for l in &out.lines {
        println!("{l}");
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let report =
            serde_json::json!({ "command": command, "passed": out.passed, "params": params, "report": out.report });
        write_file(dir, "report.json", &to_json(&report)?)?;
        let mut names: Vec<&str> = vec!["report.json"];
        for (name, contents) in &out.files {
            write_file(dir, name, contents)?;
            names.push(name);
        }
        names.push("manifest.json");
        write_file(dir, "manifest.json", &to_json(&Manifest::new(command, params, &names)?)?)?;
    }
    Ok(out.passed)
}

fn run_suite<P: Serialize>(
    command: &str,
    params: &P,
    out_dir: Option<&Path>,
    f: impl FnOnce(&P) -> Result<SuiteOutcome>,
) -> Result<bool> {
    let value = serde_json::to_value(params)?;
    let out = f(params)?;
    finish(command, value, out, out_dir)
}

pub fn run(suite: VerifySuite) -> Result<bool> {
    match suite {
        VerifySuite::Recursions(a) => run_suite("verify-recursions", &a, a.out_dir.as_deref(), recursions),
        VerifySuite::Martingale(a) => run_suite("verify-martingale", &a, a.out_dir.as_deref(), martingale),
        VerifySuite::Comparison(a) => run_suite("verify-comparison", &a, a.out_dir.as_deref(), comparison),
        VerifySuite::Density(a) => run_suite("verify-density", &a, a.out_dir.as_deref(), density),
        VerifySuite::Girsanov(a) => run_suite("verify-girsanov", &a, a.out_dir.as_deref(), girsanov),
        VerifySuite::Moments(a) => {
            let cfg = moment_config(&a)?;
            run_suite("verify-moments", &cfg, a.out_dir.as_deref(), moments)
        }
    }
}

fn from<P: DeserializeOwned>(v: serde_json::Value) -> Result<P> {
    serde_json::from_value(v).map_err(|e| usage(format!("manifest config: {e}")))
}

/// Re-runs a suite recorded in a manifest.
pub fn rerun(command: &str, config: serde_json::Value, out_dir: &Path) -> Result<bool> {
    let d = Some(out_dir);
    match command {
        "verify-recursions" => run_suite(command, &from::<RecursionsArgs>(config)?, d, recursions),
        "verify-martingale" => run_suite(command, &from::<MartingaleArgs>(config)?, d, martingale),
        "verify-comparison" => run_suite(command, &from::<ComparisonArgs>(config)?, d, comparison),
        "verify-density" => run_suite(command, &from::<DensityArgs>(config)?, d, density),
        "verify-girsanov" => run_suite(command, &from::<GirsanovArgs>(config)?, d, girsanov),
        "verify-moments" => run_suite(command, &from::<MomentConfig>(config)?, d, moments),
        other => Err(usage(format!("manifest names unknown command '{other}'"))),
    }
}
