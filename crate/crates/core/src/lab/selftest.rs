//! Deterministic checks of the explicit maps, the φ contraction, the Loewner
//! integrator and the harmonic-measure estimator.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::loewner::{FlowState, Integrator};
use crate::maps::{
    halfstrip_f, halfstrip_f_prime, halfstrip_g, hm_brownian, hm_infinity, phi_iter, semidisc_g, SemiDisc,
};
use crate::Complex64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// The measured quantity (error, violation count, ratio, ...).
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl CheckResult {
    fn at_most(name: &str, value: f64, tolerance: f64, detail: String) -> Self {
        CheckResult { name: name.to_string(), passed: value <= tolerance, value, tolerance, detail }
    }
}

/// 200 points of H ∖ L⁻₀: a 20 × 10 grid over Re ∈ [−4, 4], Im ∈ (0, 8]
/// with the points inside the half-strip lifted above it.
pub fn strip_grid() -> Vec<Complex64> {
    let mut pts = Vec::with_capacity(200);
    for i in 0..20 {
        for j in 0..10 {
            let re = -4.0 + 8.0 * (i as f64 + 0.5) / 20.0;
            let mut im = 8.0 * (j as f64 + 0.5) / 10.0;
            if re <= 0.0 && im <= PI {
                im += PI;
            }
            pts.push(Complex64::new(re, im));
        }
    }
    pts
}

/// Boundary values, round trip g∘f = id and f' against central differences
/// for the half-strip map with y = 0.
pub fn map_identities(tol: f64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let f1 = halfstrip_f(0.0, Complex64::new(1.0, 0.0))?;
    out.push(CheckResult::at_most("f(1) = 0", f1.norm(), tol, format!("f(1) = {f1}")));
    let fm1 = halfstrip_f(0.0, Complex64::new(-1.0, 0.0))?;
    out.push(CheckResult::at_most(
        "f(-1) = i*pi",
        (fm1 - Complex64::new(0.0, PI)).norm(),
        tol,
        format!("f(-1) = {fm1}"),
    ));
    let grid = strip_grid();
    let mut worst_rt: f64 = 0.0;
    let mut worst_d: f64 = 0.0;
    let h = 1e-5;
    for &z in &grid {
        let w = halfstrip_f(0.0, z)?;
        let back = halfstrip_g(0.0, w)?;
        worst_rt = worst_rt.max((back - z).norm() / z.norm().max(1.0));
        let d = halfstrip_f_prime(0.0, z)?;
        let fd = (halfstrip_f(0.0, z + h)? - halfstrip_f(0.0, z - h)?) / (2.0 * h);
        worst_d = worst_d.max((d - fd).norm() / d.norm().max(1.0));
    }
    out.push(CheckResult::at_most(
        "g(f(z)) = z on 200 points",
        worst_rt,
        tol,
        format!("max relative round-trip error {worst_rt:e}"),
    ));
    // Central differences at h = 1e-5 carry O(h²|f'''|) truncation plus
    // O(ε/h) rounding, both well below 1e-8 on this grid.
    out.push(CheckResult::at_most(
        "f' vs finite difference",
        worst_d,
        tol,
        format!("max relative derivative error {worst_d:e}"),
    ));
    let disc = SemiDisc::new(0.0, 1.0)?;
    let s = semidisc_g(&disc, Complex64::new(0.0, 2.0))?;
    out.push(CheckResult::at_most(
        "semidisc g(2i) = 1.5i",
        (s - Complex64::new(0.0, 1.5)).norm(),
        tol,
        format!("g(2i) = {s}"),
    ));
    Ok(out)
}

/// φ^{(k)}(x) ≥ x/2 for k = 1..=k_max on `points` values of x in [6k + 3, 100].
pub fn phi_bound(k_max: usize, points: usize) -> CheckResult {
    let mut violations = 0usize;
    let mut worst = f64::INFINITY;
    for k in 1..=k_max {
        let lo = 6.0 * k as f64 + 3.0;
        for i in 0..points {
            let x = lo + (100.0 - lo) * i as f64 / (points - 1).max(1) as f64;
            let v = phi_iter(k, x);
            worst = worst.min(v / x);
            if v < x / 2.0 {
                violations += 1;
            }
        }
    }
    CheckResult::at_most(
        "phi^(k)(x) >= x/2",
        violations as f64,
        0.0,
        format!("{violations} violations; min phi^(k)(x)/x = {worst:.6}"),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormError {
    pub dt: f64,
    pub image: f64,
    pub deriv: f64,
}

/// Max relative error of the Euler scheme against g_t(x) = √(x² + 4t),
/// g_t'(x) = x/√(x² + 4t) for W ≡ 0, over x ∈ {0.5, 1, 2, −1} up to t = 1.
pub fn loewner_closed_form_error(dt: f64) -> Result<ClosedFormError> {
    let xs = [0.5, 1.0, 2.0, -1.0];
    let t_end = 1.0;
    let n = (t_end / dt).round() as usize;
    let mut s = FlowState::new(0.0, &xs, 0.0, 1e-12)?;
    for _ in 0..n {
        s.advance(0.0, dt, Integrator::Euler)?;
    }
    let t = n as f64 * dt;
    let mut err = ClosedFormError { dt, image: 0.0, deriv: 0.0 };
    for (m, &x) in s.marks.iter().zip(&xs) {
        let r = (x * x + 4.0 * t).sqrt().copysign(x);
        err.image = err.image.max((m.image - r).abs() / r.abs());
        err.deriv = err.deriv.max((m.deriv - x / r).abs() / (x / r).abs());
    }
    Ok(err)
}

/// Error at `dt` within `tol` and first-order convergence under halving.
pub fn loewner_check(dt: f64, tol: f64) -> Result<Vec<CheckResult>> {
    let e1 = loewner_closed_form_error(dt)?;
    let e2 = loewner_closed_form_error(dt / 2.0)?;
    let worst = e1.image.max(e1.deriv);
    let ratio = (e1.image / e2.image).min(e1.deriv / e2.deriv);
    let ratio_hi = (e1.image / e2.image).max(e1.deriv / e2.deriv);
    Ok(vec![
        CheckResult::at_most(
            "Euler vs closed form",
            worst,
            tol,
            format!("dt={dt:e}: image {:.3e}, deriv {:.3e}", e1.image, e1.deriv),
        ),
        CheckResult {
            name: "first-order convergence".into(),
            passed: ratio >= 1.8 && ratio_hi <= 2.2,
            value: ratio,
            tolerance: 1.8,
            detail: format!("error ratios under halving in [{ratio:.4}, {ratio_hi:.4}]"),
        },
    ])
}

/// Brownian estimate of π·h·hm from m + ih of the segment [y, y + iπ]
/// against its exact value |g_{L⁻_y}(I)| = 2.
pub fn harmonic_measure_check(h: f64, walkers: usize, seed: u64, rel_tol: f64) -> Result<CheckResult> {
    let y = 0.0;
    let a = Complex64::new(y, 0.0);
    let b = Complex64::new(y, PI);
    let exact = hm_infinity(y, a, b)?;
    let est = hm_brownian(y, a, b, 0.0, h, walkers, seed)?;
    let rel = (est.value - exact).abs() / exact;
    Ok(CheckResult::at_most(
        "harmonic measure at infinity",
        rel,
        rel_tol,
        format!("estimate {:.4} ± {:.4} vs exact {exact:.6}", est.value, est.stderr),
    ))
}

/// The conformal-map suite: identities, φ bound, Loewner closed form and a
/// small harmonic-measure run.
pub fn maps_selftest(walkers: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = map_identities(1e-8)?;
    out.push(phi_bound(5, 1000));
    out.extend(loewner_check(1e-4, 1e-3)?);
    out.push(harmonic_measure_check(200.0, walkers, seed, 0.05)?);
    Ok(out)
}
