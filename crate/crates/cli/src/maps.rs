//! `maps eval` and `maps selftest`.

use std::str::FromStr;

use anyhow::Result;
use armlab::lab::maps_selftest;
use armlab::maps::{halfstrip_f, halfstrip_f_prime, halfstrip_g, phi_iter, semidisc_g, SemiDisc};
use armlab::Complex64;
use clap::{Subcommand, ValueEnum};

use crate::usage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MapName {
    /// f = f_{L⁻_y}: H ∖ L⁻_y → H.
    HalfstripF,
    /// Inverse of halfstrip-f.
    HalfstripG,
    /// Derivative of halfstrip-f.
    HalfstripFPrime,
    /// Hydrodynamic map removing the half-disc of centre x0, radius r.
    Semidisc,
    /// k-th iterate of φ at a real point.
    Phi,
}

#[derive(Debug, Subcommand)]
pub enum MapsCommand {
    /// Print map values at the given points.
    Eval {
        #[arg(long, value_enum)]
        map: MapName,
        /// Points such as 1, -2.5, 0+2i, 1-0.5i.
        #[arg(long, required = true, allow_hyphen_values = true)]
        z: Vec<String>,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        y: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        x0: f64,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = 1)]
        k: usize,
    },
    /// Run the conformal-map invariant suite.
    Selftest {
        #[arg(long, default_value_t = 100_000)]
        walkers: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

pub fn parse_complex(s: &str) -> Result<Complex64> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    Complex64::from_str(&t).map_err(|_| usage(format!("malformed complex number '{s}'")))
}

/// Rounds to 12 significant digits, so values that are zero up to rounding
/// print as 0.
fn fmt_real(v: f64, scale: f64) -> String {
    if v.abs() <= 1e-12 * scale.max(1.0) {
        return "0".into();
    }
    let digits = 11 - v.abs().log10().floor() as i32;
    let p = 10f64.powi(digits.clamp(0, 300));
    let r = (v * p).round() / p;
    format!("{r}")
}

pub fn fmt_complex(z: Complex64) -> String {
    let scale = z.norm();
    let re = fmt_real(z.re, scale);
    let im = fmt_real(z.im, scale);
    if im.starts_with('-') {
        format!("{re}{im}i")
    } else {
        format!("{re}+{im}i")
    }
}

fn eval_one(map: MapName, z: Complex64, y: f64, disc: Option<&SemiDisc>, k: usize) -> Result<String> {
    Ok(match map {
        MapName::HalfstripF => fmt_complex(halfstrip_f(y, z)?),
        MapName::HalfstripG => fmt_complex(halfstrip_g(y, z)?),
        MapName::HalfstripFPrime => fmt_complex(halfstrip_f_prime(y, z)?),
        MapName::Semidisc => fmt_complex(semidisc_g(disc.expect("disc"), z)?),
        MapName::Phi => {
            if z.im != 0.0 {
                return Err(usage("phi takes real points"));
            }
            fmt_real(phi_iter(k, z.re), z.re.abs())
        }
    })
}

pub fn run(cmd: MapsCommand) -> Result<bool> {
    match cmd {
        MapsCommand::Eval { map, z, y, x0, r, k } => {
            let disc = if map == MapName::Semidisc { Some(SemiDisc::new(x0, r)?) } else { None };
            let points = z.iter().map(|s| parse_complex(s)).collect::<Result<Vec<_>>>()?;
            for p in points {
                println!("{}", eval_one(map, p, y, disc.as_ref(), k)?);
            }
            Ok(true)
        }
        MapsCommand::Selftest { walkers, seed } => {
            let checks = maps_selftest(walkers, seed)?;
            let mut ok = true;
            for c in &checks {
                ok &= c.passed;
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(ok)
        }
    }
}
