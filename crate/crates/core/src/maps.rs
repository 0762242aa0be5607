//! Explicit conformal maps: half-disc removal, the half-strip map f_{L⁻_y}
//! and its inverse, the contraction φ, and harmonic measure from ∞ in
//! H ∖ L⁻_y (closed form and Brownian estimate).

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ArmlabError, Result};
use crate::rng::path_rng;

const HM_STREAM: u64 = 0x4a11;

/// Closed half-disc B̄⁺(x0, r).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemiDisc {
    pub x0: f64,
    pub r: f64,
}

impl SemiDisc {
    pub fn new(x0: f64, r: f64) -> Result<Self> {
        if !(r > 0.0) || !x0.is_finite() {
            return Err(ArmlabError::param(format!("semidisc x0={x0}, r={r}")));
        }
        Ok(SemiDisc { x0, r })
    }

    pub fn hcap(&self) -> f64 {
        self.r * self.r
    }

    pub fn image_interval(&self) -> (f64, f64) {
        (self.x0 - 2.0 * self.r, self.x0 + 2.0 * self.r)
    }
}

/// g(z) = z + r²/(z − x0), mapping H ∖ B̄⁺(x0, r) onto H.
pub fn semidisc_g(disc: &SemiDisc, z: Complex64) -> Result<Complex64> {
    let u = z - disc.x0;
    if u.norm() < disc.r * (1.0 - 1e-14) || z.im < 0.0 {
        return Err(ArmlabError::OutsideDomain(format!("{z} for {disc:?}")));
    }
    Ok(z + disc.r * disc.r / u)
}

/// Left half-strip L⁻_{y;r} = {z ∈ H : Im z ≤ r, Re z ≤ y}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfStrip {
    pub y: f64,
    pub r: f64,
}

impl HalfStrip {
    pub fn new(y: f64) -> Self {
        HalfStrip { y, r: PI }
    }

    pub fn with_height(y: f64, r: f64) -> Result<Self> {
        if !(r > 0.0) || !y.is_finite() {
            return Err(ArmlabError::param(format!("half-strip y={y}, r={r}")));
        }
        Ok(HalfStrip { y, r })
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z.im >= 0.0 && z.im <= self.r && z.re <= self.y
    }

    /// Open interior relative to H̄: points strictly inside the strip.
    fn interior(&self, z: Complex64) -> bool {
        z.re < self.y && z.im < self.r
    }

    /// f_{L⁻_{y;r}}: H → H ∖ L⁻_{y;r}, obtained from f_{L⁻₀} by scaling.
    pub fn f(&self, z: Complex64) -> Result<Complex64> {
        let c = self.r / PI;
        Ok(self.y + c * halfstrip_f(0.0, (z - self.y) / c)?)
    }

    pub fn g(&self, w: Complex64) -> Result<Complex64> {
        let c = self.r / PI;
        if w.im < 0.0 || self.interior(w) {
            return Err(ArmlabError::OutsideDomain(format!("{w} for {self:?}")));
        }
        Ok(self.y + c * halfstrip_g(0.0, (w - self.y) / c)?)
    }
}

/// s = √(z²−1) on the branch cut along [−1, 1], as √(z−1)·√(z+1).
#[inline]
fn joukowski_root(z: Complex64) -> Complex64 {
    (z - 1.0).sqrt() * (z + 1.0).sqrt()
}

/// f_{L⁻₀}(z) = √(z²−1) + log(z + √(z²−1)), with w = z + √(z²−1) in H.
#[inline]
fn f0(z: Complex64) -> Complex64 {
    let s = joukowski_root(z);
    let w = z + s;
    (w * w - 1.0) / (2.0 * w) + w.ln()
}

#[inline]
fn f0_prime(z: Complex64) -> Complex64 {
    (z + 1.0) / joukowski_root(z)
}

/// f_{L⁻_y}(z) = f_{L⁻₀}(z − y) + y. On the real segment (y−1, y+1) the
/// boundary value from H is returned.
pub fn halfstrip_f(y: f64, z: Complex64) -> Result<Complex64> {
    if z.im < 0.0 || !z.is_finite() {
        return Err(ArmlabError::OutsideDomain(format!("{z} is not in the closed upper half-plane")));
    }
    let u = z - y;
    if u == Complex64::new(1.0, 0.0) {
        return Ok(Complex64::new(y, 0.0));
    }
    Ok(f0(u) + y)
}

/// f'_{L⁻_y}(z) = √((z−y+1)/(z−y−1)).
pub fn halfstrip_f_prime(y: f64, z: Complex64) -> Result<Complex64> {
    if z.im < 0.0 {
        return Err(ArmlabError::OutsideDomain(format!("{z}")));
    }
    Ok(f0_prime(z - y))
}

fn in_domain0(w: Complex64) -> bool {
    w.im >= 0.0 && !(w.re < 0.0 && w.im < PI)
}

/// Newton solve of f0(z) = w from `z`, with backtracking that keeps iterates
/// in H̄ and never increases the residual.
fn newton0(w: Complex64, mut z: Complex64, tol: f64, max_iter: usize) -> Option<Complex64> {
    let mut res = f0(z) - w;
    let mut failures = 0;
    for _ in 0..max_iter {
        if res.norm() <= tol {
            return Some(z);
        }
        let d = f0_prime(z);
        if !d.is_finite() || d.norm() == 0.0 {
            return None;
        }
        let step = res / d;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let mut cand = z - lambda * step;
            if cand.im < 0.0 {
                cand.im = 0.0;
            }
            let r = f0(cand) - w;
            if r.is_finite() && r.norm() < res.norm() {
                z = cand;
                res = r;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            failures += 1;
            if failures >= 3 {
                return None;
            }
        }
    }
    (res.norm() <= tol).then_some(z)
}

/// g_{L⁻_y} = f_{L⁻_y}⁻¹ on H̄ ∖ L⁻_y.
pub fn halfstrip_g(y: f64, w: Complex64) -> Result<Complex64> {
    let u = w - y;
    if !u.is_finite() || !in_domain0(u) {
        return Err(ArmlabError::OutsideDomain(format!("{w} is inside L⁻_{y} or below ℝ")));
    }
    let tol = 1e-12 * u.norm().max(1.0);
    if u.norm() == 0.0 {
        return Ok(Complex64::new(1.0 + y, 0.0));
    }
    if (u - Complex64::new(0.0, PI)).norm() == 0.0 {
        return Ok(Complex64::new(-1.0 + y, 0.0));
    }
    let guess = u - (2.0 * u.norm().max(1.0)).ln();
    let guess = Complex64::new(guess.re, guess.im.max(0.0));
    if let Some(z) = newton0(u, guess, tol, 100) {
        return Ok(z + y);
    }
    // Continuation from far above, where the asymptotic guess is accurate.
    let lift = 4.0 * u.norm().max(PI);
    let n = 64;
    let mut z = {
        let top = u + Complex64::new(0.0, lift);
        newton0(top, top - (2.0 * top.norm()).ln(), 1e-13 * top.norm(), 100)
    }
    .ok_or_else(|| ArmlabError::NoConvergence(format!("g_L({w}) start of continuation")))?;
    for k in 1..=n {
        let target = u + Complex64::new(0.0, lift * (1.0 - k as f64 / n as f64));
        let t = if k == n { tol } else { 1e-10 * target.norm().max(1.0) };
        z = newton0(target, z, t, 100)
            .ok_or_else(|| ArmlabError::NoConvergence(format!("g_L({w}) at continuation step {k}")))?;
    }
    Ok(z + y)
}

/// f_{L⁻₀}(3) = 2√2 + log(3 + 2√2), the threshold below which φ vanishes.
pub fn phi_threshold() -> f64 {
    2.0 * 2f64.sqrt() + (3.0 + 2.0 * 2f64.sqrt()).ln()
}

/// φ(x) = f_{L⁻₀}(g_{L⁻₀}(x) − 2) for x ≥ f_{L⁻₀}(3), else 0.
pub fn phi(x: f64) -> f64 {
    if !(x >= phi_threshold()) {
        return 0.0;
    }
    let g = real_g0(x);
    f0(Complex64::new(g - 2.0, 0.0)).re.max(0.0)
}

/// Inverse of f_{L⁻₀} on [1, ∞) → [0, ∞), by safeguarded Newton on ℝ.
fn real_g0(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let f = |z: f64| {
        let s = (z * z - 1.0).max(0.0).sqrt();
        s + (z + s).ln()
    };
    // Bracket [1, hi] with f(hi) ≥ x; f(z) ≥ z − 1 so hi = x + 1 suffices.
    let (mut lo, mut hi) = (1.0, x + 1.0);
    let mut z = (x - (2.0 * x.max(1.0)).ln()).clamp(lo, hi);
    if z <= 1.0 {
        z = 1.0 + x * x / 8.0;
    }
    for _ in 0..200 {
        let r = f(z) - x;
        if r.abs() <= 1e-15 * x.max(1.0) {
            break;
        }
        if r > 0.0 {
            hi = z;
        } else {
            lo = z;
        }
        let d = ((z + 1.0) / (z - 1.0)).sqrt();
        let mut next = z - r / d;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if next == z {
            break;
        }
        z = next;
    }
    z
}

/// φ composed k times; φ^{(0)} is the identity.
pub fn phi_iter(k: usize, x: f64) -> f64 {
    let mut v = x;
    for _ in 0..k {
        if v == 0.0 {
            break;
        }
        v = phi(v);
    }
    v
}

/// Position along ∂(H ∖ L⁻_y), increasing from the far end of the top edge
/// to +∞ on ℝ: top edge Re = u ↦ u − y − π, vertical segment y + iv ↦ −v,
/// real axis x ↦ x − y.
pub fn boundary_param(y: f64, z: Complex64) -> Result<f64> {
    let tol = 1e-12 * (1.0 + z.norm() + y.abs());
    if z.im.abs() <= tol && z.re >= y - tol {
        Ok((z.re - y).max(0.0))
    } else if (z.re - y).abs() <= tol && z.im >= -tol && z.im <= PI + tol {
        Ok(-z.im.clamp(0.0, PI))
    } else if (z.im - PI).abs() <= tol && z.re <= y + tol {
        Ok(z.re.min(y) - y - PI)
    } else {
        Err(ArmlabError::OutsideDomain(format!("{z} is not on the boundary of H ∖ L⁻_{y}")))
    }
}

/// Harmonic measure from ∞ (normalised as lim π·h·hm) of the boundary arc
/// between `a` and `b`: the length of its image under g_{L⁻_y}.
pub fn hm_infinity(y: f64, a: Complex64, b: Complex64) -> Result<f64> {
    boundary_param(y, a)?;
    boundary_param(y, b)?;
    let ga = halfstrip_g(y, a)?;
    let gb = halfstrip_g(y, b)?;
    Ok((gb.re - ga.re).abs())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmEstimate {
    /// Estimate of π·h·hm(m + ih; I).
    pub value: f64,
    pub stderr: f64,
    pub walkers: usize,
}

/// Brownian estimate of π·h·hm(m + ih, H ∖ L⁻_y; I) for the boundary arc I
/// between `a` and `b`.
///
/// Each walker first jumps exactly (Cauchy law) to the line Im z = π, with the
/// landing quantile stratified across walkers. From there it runs
/// walk-on-spheres, jumping again to Im z = π whenever it rises above it.
/// Walkers landing near the strip are split into several independent
/// continuations.
pub fn hm_brownian(
    y: f64,
    a: Complex64,
    b: Complex64,
    m: f64,
    h: f64,
    walkers: usize,
    seed: u64,
) -> Result<HmEstimate> {
    if !(h > PI) || walkers < 2 {
        return Err(ArmlabError::param(format!("need h > π and ≥ 2 walkers, got h={h}")));
    }
    let (sa, sb) = (boundary_param(y, a)?, boundary_param(y, b)?);
    let (lo, hi) = (sa.min(sb), sa.max(sb));
    let absorb = 1e-7;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for i in 0..walkers {
        let mut rng = path_rng(seed, HM_STREAM, i as u64);
        let u = (i as f64 + rng.random::<f64>()) / walkers as f64;
        let x = m + (h - PI) * (PI * (u - 0.5)).tan();
        let est = if x <= y {
            f64::from(in_range(x - y - PI, lo, hi))
        } else {
            let d = x - y;
            let copies = if d < 30.0 {
                64
            } else if d < 300.0 {
                16
            } else {
                2
            };
            let hits: u32 = (0..copies)
                .map(|_| {
                    let s = walk_on_spheres(y, Complex64::new(x, PI), absorb, &mut rng);
                    u32::from(in_range(s, lo, hi))
                })
                .sum();
            f64::from(hits) / f64::from(copies)
        };
        sum += est;
        sum_sq += est * est;
    }
    let n = walkers as f64;
    let mean = sum / n;
    let var = ((sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
    let scale = PI * h;
    Ok(HmEstimate { value: scale * mean, stderr: scale * (var / n).sqrt(), walkers })
}

#[inline]
fn in_range(s: f64, lo: f64, hi: f64) -> bool {
    s >= lo && s <= hi
}

/// Runs Brownian motion from `z` (Im z ≤ π, outside L⁻_y) until it is within
/// `absorb` of the boundary; returns the boundary parameter of the exit point.
fn walk_on_spheres(y: f64, mut z: Complex64, absorb: f64, rng: &mut impl Rng) -> f64 {
    loop {
        if z.im > PI {
            let c = (PI * (rng.random::<f64>() - 0.5)).tan();
            z = Complex64::new(z.re + (z.im - PI) * c, PI);
            if z.re <= y {
                return z.re - y - PI;
            }
        }
        let dx = z.re - y;
        let to_strip = if dx > 0.0 {
            let dy = (z.im - PI).max(0.0);
            dx.hypot(dy)
        } else {
            z.im - PI
        };
        let r = z.im.min(to_strip);
        if r < absorb {
            return if z.im <= to_strip {
                dx.max(0.0)
            } else if z.im <= PI {
                -z.im
            } else {
                -PI
            };
        }
        let theta = 2.0 * PI * rng.random::<f64>();
        z += Complex64::from_polar(r, theta);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn boundary_values() {
        assert!(halfstrip_f(0.0, c(1.0, 0.0)).unwrap().norm() < 1e-15);
        assert!((halfstrip_f(0.0, c(-1.0, 0.0)).unwrap() - c(0.0, PI)).norm() < 1e-14);
        assert!((halfstrip_f(2.5, c(3.5, 0.0)).unwrap() - c(2.5, 0.0)).norm() < 1e-14);
        let f3 = halfstrip_f(0.0, c(3.0, 0.0)).unwrap();
        assert_relative_eq!(f3.re, 4.591174, max_relative = 1e-6);
        assert_eq!(f3.im, 0.0);
    }

    #[test]
    fn cut_maps_to_vertical_segment_and_ray_to_top_edge() {
        for x in [-0.9, -0.3, 0.0, 0.5, 0.99] {
            let w = halfstrip_f(0.0, c(x, 0.0)).unwrap();
            assert!(w.re.abs() < 1e-12 && w.im >= 0.0 && w.im <= PI, "{x} -> {w}");
        }
        for x in [-1.5, -4.0, -100.0] {
            let w = halfstrip_f(0.0, c(x, 0.0)).unwrap();
            assert!((w.im - PI).abs() < 1e-12 && w.re < 0.0, "{x} -> {w}");
        }
    }

    #[test]
    fn inverse_boundary_values() {
        assert!((halfstrip_g(0.0, c(0.0, 0.0)).unwrap() - 1.0).norm() < 1e-12);
        assert!((halfstrip_g(0.0, c(0.0, PI)).unwrap() + 1.0).norm() < 1e-12);
        let g = halfstrip_g(0.0, c(phi_threshold(), 0.0)).unwrap();
        assert!((g - 3.0).norm() < 1e-8);
        assert!(halfstrip_g(0.0, c(-1.0, 1.0)).is_err());
        assert!(halfstrip_g(0.0, c(1.0, -1.0)).is_err());
    }

    #[test]
    fn derivative_matches_closed_form() {
        let d = halfstrip_f_prime(0.0, c(2.0, 0.0)).unwrap();
        assert_relative_eq!(d.re, 3f64.sqrt(), max_relative = 1e-14);
        let d3 = halfstrip_f_prime(0.0, c(3.0, 0.0)).unwrap();
        assert_relative_eq!(d3.re, 2f64.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn scaled_strip() {
        let s = HalfStrip::with_height(1.0, 2.0).unwrap();
        // The corner images sit at square-root singularities, so rounding in
        // the argument is amplified.
        let w = s.f(c(1.0 + 2.0 / PI, 0.0)).unwrap();
        assert!((w - 1.0).norm() < 1e-6);
        let w = s.f(c(1.0 - 2.0 / PI, 0.0)).unwrap();
        assert!((w - c(1.0, 2.0)).norm() < 1e-6);
        let z = c(0.3, 0.7);
        assert!((s.g(s.f(z).unwrap()).unwrap() - z).norm() < 1e-10);
    }

    #[test]
    fn semidisc() {
        let d = SemiDisc::new(0.0, 1.0).unwrap();
        assert!((semidisc_g(&d, c(0.0, 2.0)).unwrap() - c(0.0, 1.5)).norm() < 1e-15);
        assert_eq!(semidisc_g(&d, c(2.0, 0.0)).unwrap(), c(2.5, 0.0));
        assert_eq!(semidisc_g(&d, c(-2.0, 0.0)).unwrap(), c(-2.5, 0.0));
        assert_eq!(semidisc_g(&d, c(1.0, 0.0)).unwrap(), c(2.0, 0.0));
        assert!(semidisc_g(&d, c(0.1, 0.1)).is_err());
        assert_eq!(d.image_interval(), (-2.0, 2.0));
    }

    #[test]
    fn phi_basics() {
        assert_eq!(phi(4.5), 0.0);
        assert_eq!(phi_iter(0, 7.0), 7.0);
        assert!(phi(phi_threshold()).abs() < 1e-7);
        assert!(phi(20.0) < 20.0 && phi(20.0) > 0.0);
    }

    #[test]
    fn hm_closed_forms() {
        let y = -0.7;
        let v = hm_infinity(y, c(y, 0.0), c(y, PI)).unwrap();
        assert_relative_eq!(v, 2.0, max_relative = 1e-10);
        let v = hm_infinity(y, c(y, 0.0), c(y + 3.0, 0.0)).unwrap();
        assert_relative_eq!(v, halfstrip_g(0.0, c(3.0, 0.0)).unwrap().re - 1.0, max_relative = 1e-12);
        assert!(hm_infinity(y, c(y, 1.0), c(y + 1.0, 1.0)).is_err());
    }

    #[test]
    fn boundary_params() {
        assert_eq!(boundary_param(0.0, c(2.0, 0.0)).unwrap(), 2.0);
        assert_eq!(boundary_param(0.0, c(0.0, 1.0)).unwrap(), -1.0);
        assert_eq!(boundary_param(0.0, c(-1.0, PI)).unwrap(), -1.0 - PI);
    }

    #[test]
    fn brownian_estimate_small() {
        let est = hm_brownian(0.0, c(0.0, 0.0), c(0.0, PI), 0.0, 50.0, 4000, 5).unwrap();
        assert!((est.value - 2.0).abs() < 4.0 * est.stderr + 0.1, "{est:?}");
    }
}
