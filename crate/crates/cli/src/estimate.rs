//! `estimate` and `simulate`: flag/config merging and the estimation run.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use armlab::crossing::{simulate_hpi, simulate_threshold, simulate_trace_gt4, DetectionMode, Family};
use armlab::lab::{estimate_probability, geometric_grid, EstimateResult};
use armlab::rng::path_rng;
use armlab::{DetectConfig, EstimateConfig, EventSpec, GridAxis, Variant};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::output::{plot_svg, results_csv, to_json, write_file, Manifest};
use crate::usage;

const SIMULATE_STREAM: u64 = 0x5117;

fn parse_family(s: &str) -> std::result::Result<Family, String> {
    match s.to_ascii_lowercase().as_str() {
        "h" => Ok(Family::H),
        "hhat" => Ok(Family::Hhat),
        "hpi" => Ok(Family::Hpi),
        _ => Err(format!("unknown event '{s}' (expected H, Hhat or Hpi)")),
    }
}

fn parse_mode(s: &str) -> std::result::Result<DetectionMode, String> {
    match s {
        "threshold" => Ok(DetectionMode::Threshold),
        "trace" => Ok(DetectionMode::Trace),
        _ => Err(format!("unknown mode '{s}' (expected threshold or trace)")),
    }
}

/// Estimation settings. Every field is optional so that flags can be layered
/// over a JSON file with the same keys.
#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateArgs {
    /// Event family: H, Hhat or Hpi.
    #[arg(long, value_parser = parse_family)]
    pub event: Option<Family>,
    /// Number of arms (crossings); 1 gives H₁, Ĥ₁ or H^π₁.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub x: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub y: Option<f64>,
    /// ε when the grid does not vary it.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// start:count[:factor] (factor defaults to 1/2) or a comma separated list.
    #[arg(long, alias = "grid")]
    pub eps_grid: Option<String>,
    /// eps, ratio (grid over x/(x − y)) or tied:R (x = R·ε).
    #[arg(long)]
    pub axis: Option<String>,
    /// Paths per grid point.
    #[arg(long)]
    pub paths: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<DetectionMode>,
    /// Sample under SLE_κ(ν) with force point x and reweight.
    #[arg(long, allow_hyphen_values = true)]
    pub importance: Option<f64>,
    #[arg(long)]
    pub c_step: Option<f64>,
    #[arg(long)]
    pub dt_max: Option<f64>,
    #[arg(long)]
    pub delta_hit: Option<f64>,
    #[arg(long)]
    pub horizon_factor: Option<f64>,
    #[arg(long)]
    pub c_ball: Option<f64>,
    #[arg(long)]
    pub strip_cutoff: Option<f64>,
    #[arg(long)]
    pub k_skip: Option<usize>,
    /// Reuse the driving noise of each path across grid points.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub coupled: Option<bool>,
    /// JSON file with any of the keys above; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

/// The JSON config file accepted by `--config`.
pub type EstimateFile = EstimateArgs;

macro_rules! layer {
    ($hi:expr, $lo:expr, $($f:ident),*) => {
        EstimateArgs { $($f: $hi.$f.or($lo.$f),)* config: None }
    };
}

impl EstimateArgs {
    /// Fields set in `self` win over those in `lower`.
    pub fn over(self, lower: EstimateArgs) -> EstimateArgs {
        layer!(
            self,
            lower,
            event,
            n,
            kappa,
            x,
            y,
            epsilon,
            eps_grid,
            axis,
            paths,
            seed,
            out_dir,
            mode,
            importance,
            c_step,
            dt_max,
            delta_hit,
            horizon_factor,
            c_ball,
            strip_cutoff,
            k_skip,
            coupled
        )
    }

    /// Flags layered over the `--config` file, if any.
    pub fn merged(self) -> Result<EstimateArgs> {
        match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let file: EstimateFile =
                    serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
                Ok(self.over(file))
            }
            None => Ok(self),
        }
    }

    pub fn to_config(&self) -> Result<EstimateConfig> {
        let family = self.event.unwrap_or(Family::H);
        let (variant, n) = Variant::from_arms(family, self.n.unwrap_or(1))?;
        let axis = match self.axis.as_deref() {
            Some(s) => parse_axis(s)?,
            None if family == Family::Hhat => GridAxis::Ratio,
            None => GridAxis::Epsilon,
        };
        let grid = parse_grid(self.eps_grid.as_deref().unwrap_or("2e-1:8"))?;
        let d = DetectConfig::default();
        let mut detect = DetectConfig {
            c_ball: self.c_ball.unwrap_or(d.c_ball),
            horizon_factor: self.horizon_factor.unwrap_or(d.horizon_factor),
            importance_nu: self.importance,
            strip_cutoff: self.strip_cutoff.unwrap_or(d.strip_cutoff),
            k_skip: self.k_skip.unwrap_or(d.k_skip),
            ..d
        };
        detect.dt_policy.c_step = self.c_step.unwrap_or(d.dt_policy.c_step);
        detect.dt_policy.dt_max = self.dt_max.unwrap_or(d.dt_policy.dt_max);
        detect.dt_policy.delta_hit = self.delta_hit.unwrap_or(d.dt_policy.delta_hit);
        let x = self.x.unwrap_or(1.0);
        let cfg = EstimateConfig {
            event: EventSpec {
                variant,
                n,
                epsilon: self.epsilon.unwrap_or(0.25 * x),
                x,
                y: self.y.unwrap_or(0.0),
                kappa: self.kappa.unwrap_or(6.0),
            },
            axis,
            grid,
            paths_per_point: self.paths.unwrap_or(10_000),
            seed: self.seed.unwrap_or(0),
            detect,
            mode: self.mode.unwrap_or_default(),
            coupled: self.coupled.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_axis(s: &str) -> Result<GridAxis> {
    match s {
        "eps" | "epsilon" => Ok(GridAxis::Epsilon),
        "ratio" => Ok(GridAxis::Ratio),
        _ => match s.strip_prefix("tied:").map(str::parse::<f64>) {
            Some(Ok(ratio)) if ratio > 0.0 => Ok(GridAxis::EpsilonTiedX { ratio }),
            _ => Err(usage(format!("bad axis '{s}' (expected eps, ratio or tied:R)"))),
        },
    }
}

/// `start:count[:factor]` or `a,b,c`.
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || usage(format!("bad grid '{s}' (expected start:count[:factor] or a comma list)"));
    let grid = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() > 3 {
            return Err(bad());
        }
        let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let count: usize = parts[1].trim().parse().map_err(|_| bad())?;
        let factor: f64 = match parts.get(2) {
            Some(f) => f.trim().parse().map_err(|_| bad())?,
            None => 0.5,
        };
        if !(factor > 0.0) || factor == 1.0 {
            return Err(bad());
        }
        geometric_grid(start, factor, count)
    } else {
        s.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>>>()?
    };
    if grid.is_empty() || grid.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
        return Err(bad());
    }
    Ok(grid)
}

pub fn event_label(variant: Variant, n: usize) -> String {
    let family = match variant {
        Variant::HOdd | Variant::HEven => "H",
        Variant::HhatOdd | Variant::HhatEven => "Hhat",
        Variant::HpiOdd | Variant::HpiEven => "Hpi",
    };
    format!("{family}_{}", variant.arms(n))
}

pub fn axis_label(axis: GridAxis) -> String {
    match axis {
        GridAxis::Epsilon => "ε".into(),
        GridAxis::Ratio => "x/(x − y)".into(),
        GridAxis::EpsilonTiedX { ratio } => format!("ε (x = {ratio}·ε)"),
    }
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    event: String,
    arms: usize,
    axis: GridAxis,
    predicted: f64,
    slope: Option<f64>,
    slope_stderr: Option<f64>,
    z_score: Option<f64>,
    fit: Option<&'a armlab::ExponentFit>,
    points: &'a [armlab::lab::PointEstimate],
    warnings: &'a [String],
    seed: u64,
    config: &'a EstimateConfig,
}

pub fn write_estimate(r: &EstimateResult, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let c = &r.config;
    let label = event_label(c.event.variant, c.event.n);
    let summary = Summary {
        event: label.clone(),
        arms: c.event.variant.arms(c.event.n),
        axis: c.axis,
        predicted: r.predicted,
        slope: r.fit.as_ref().map(|f| f.slope),
        slope_stderr: r.fit.as_ref().map(|f| f.stderr_slope),
        z_score: r.fit.as_ref().and_then(|f| f.z_score()),
        fit: r.fit.as_ref(),
        points: &r.points,
        warnings: &r.warnings,
        seed: c.seed,
        config: c,
    };
    write_file(out_dir, "results.csv", &results_csv(&r.points))?;
    write_file(out_dir, "summary.json", &to_json(&summary)?)?;
    let title = format!("{label}, κ = {}", c.event.kappa);
    write_file(
        out_dir,
        "plot.svg",
        &plot_svg(&title, &axis_label(c.axis), &r.points, r.fit.as_ref(), Some(r.predicted)),
    )?;
    let files = ["results.csv", "summary.json", "plot.svg", "manifest.json"];
    let manifest = Manifest::new("estimate", serde_json::to_value(c)?, &files)?;
    write_file(out_dir, "manifest.json", &to_json(&manifest)?)
}

pub fn run_config(cfg: EstimateConfig, out_dir: &Path, quiet: bool) -> Result<bool> {
    let r = estimate_probability(&cfg)?;
    write_estimate(&r, out_dir)?;
    if !quiet {
        let label = event_label(cfg.event.variant, cfg.event.n);
        match &r.fit {
            Some(f) => println!(
                "{label} κ={}: slope {:.4} ± {:.4} vs predicted {:.4} (z = {:.2})",
                cfg.event.kappa,
                f.slope,
                f.stderr_slope,
                r.predicted,
                f.z_score().unwrap_or(f64::NAN)
            ),
            None => println!("{label} κ={}: no fit (predicted {:.4})", cfg.event.kappa, r.predicted),
        }
        for w in &r.warnings {
            eprintln!("warning: {w}");
        }
        println!("wrote {}", out_dir.display());
    }
    Ok(true)
}

pub fn run(args: EstimateArgs) -> Result<bool> {
    let merged = args.merged()?;
    let out_dir = merged.out_dir.clone().unwrap_or_else(|| PathBuf::from("armlab-out"));
    let cfg = merged.to_config()?;
    run_config(cfg, &out_dir, false)
}

#[derive(Clone, Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub settings: EstimateArgs,
    /// Path index within the seed's stream.
    #[arg(long, default_value_t = 0)]
    pub path: u64,
}

pub fn simulate(args: SimulateArgs) -> Result<bool> {
    let cfg = args.settings.merged()?.to_config()?;
    let spec = cfg.event;
    spec.validate()?;
    let mut rng = path_rng(cfg.seed, SIMULATE_STREAM, args.path);
    let rec = if spec.variant.is_pi() {
        simulate_hpi(&spec, &cfg.detect, &mut rng)?
    } else {
        match cfg.mode {
            DetectionMode::Threshold => simulate_threshold(&spec, &cfg.detect, &mut rng)?,
            DetectionMode::Trace => simulate_trace_gt4(&spec, &cfg.detect, &mut rng)?,
        }
    };
    print!("{}", to_json(&serde_json::json!({ "event": spec, "path": args.path, "record": rec }))?);
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("2e-1:3").unwrap(), vec![0.2, 0.1, 0.05]);
        assert_eq!(parse_grid("1:3:2").unwrap(), vec![1.0, 2.0, 4.0]);
        assert_eq!(parse_grid("0.5, 0.25").unwrap(), vec![0.5, 0.25]);
        for bad in ["", "1:x", "1:3:1", "0.5,-1", "1:2:3:4"] {
            assert!(parse_grid(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn axes() {
        assert_eq!(parse_axis("eps").unwrap(), GridAxis::Epsilon);
        assert_eq!(parse_axis("tied:2").unwrap(), GridAxis::EpsilonTiedX { ratio: 2.0 });
        assert!(parse_axis("tied:-1").is_err());
    }

    #[test]
    fn flags_override_file() {
        let file = EstimateArgs { kappa: Some(5.0), paths: Some(7), ..Default::default() };
        let flags = EstimateArgs { kappa: Some(6.0), ..Default::default() };
        let m = flags.over(file);
        assert_eq!(m.kappa, Some(6.0));
        assert_eq!(m.paths, Some(7));
    }

    #[test]
    fn arms_map_to_variants() {
        let a = EstimateArgs { event: Some(Family::H), n: Some(2), y: Some(-1.0), ..Default::default() };
        let c = a.to_config().unwrap();
        assert_eq!((c.event.variant, c.event.n), (Variant::HEven, 1));
        assert_eq!(event_label(c.event.variant, c.event.n), "H_2");
        let hat = EstimateArgs { event: Some(Family::Hhat), ..Default::default() }.to_config().unwrap();
        assert_eq!(hat.axis, GridAxis::Ratio);
    }

    #[test]
    fn regime_mismatch_is_rejected() {
        let a = EstimateArgs { event: Some(Family::Hpi), kappa: Some(6.0), ..Default::default() };
        assert!(a.to_config().is_err());
    }
}
