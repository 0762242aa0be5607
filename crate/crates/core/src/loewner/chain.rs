use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ArmlabError, Result};

/// One step of a discretised chain: the driver moves from `w_start` to
/// `w_end`, then a slit of capacity `2·dt` grows at `w_end`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainStep {
    pub dt: f64,
    pub w_start: f64,
    pub w_end: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscretizedChain {
    steps: Vec<ChainStep>,
    times: Vec<f64>,
}

/// Branch of √(u² + c) asymptotic to `u` (upper half-plane valued, and with
/// the sign of Re u on the real line).
#[inline]
fn sqrt_like(u: Complex64, c: f64) -> Complex64 {
    let s = (u * u + c).sqrt();
    if s.im < 0.0 || (s.im == 0.0 && s.re * u.re < 0.0) {
        -s
    } else {
        s
    }
}

/// Inverse slit map f(z) = w + √((z−w)² − 4dt), upper branch.
#[inline]
pub(crate) fn slit_inverse(z: Complex64, w: f64, dt: f64) -> Complex64 {
    let u = z - w;
    w + sqrt_like(u, -4.0 * dt)
}

/// Forward slit map, returned as the increment g(z) − z for accuracy far away.
#[inline]
pub(crate) fn slit_forward_increment(z: Complex64, w: f64, dt: f64) -> (Complex64, Complex64) {
    let u = z - w;
    let s = sqrt_like(u, 4.0 * dt);
    (4.0 * dt / (s + u), s)
}

impl DiscretizedChain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        DiscretizedChain { steps: Vec::with_capacity(n), times: Vec::with_capacity(n) }
    }

    pub fn push(&mut self, dt: f64, w_start: f64, w_end: f64) -> Result<()> {
        if !(dt > 0.0) || !w_start.is_finite() || !w_end.is_finite() {
            return Err(ArmlabError::param(format!("bad chain step dt={dt}")));
        }
        let t = self.total_time() + dt;
        self.steps.push(ChainStep { dt, w_start, w_end });
        self.times.push(t);
        Ok(())
    }

    /// Chain driven by a constant driver `w` with `n` equal steps.
    pub fn constant(w: f64, dt: f64, n: usize) -> Result<Self> {
        let mut c = Self::with_capacity(n);
        for _ in 0..n {
            c.push(dt, w, w)?;
        }
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[ChainStep] {
        &self.steps
    }

    /// Cumulative time after each step.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn total_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn truncate(&mut self, k: usize) {
        self.steps.truncate(k);
        self.times.truncate(k);
    }

    /// η(t_k): the slit tip of step `k` pulled back through steps `k−1, …, 1`.
    /// `k = 0` gives the starting point on ℝ.
    pub fn trace_tip(&self, k: usize) -> Result<Complex64> {
        if k > self.steps.len() {
            return Err(ArmlabError::param(format!("tip {k} requested from a chain of {} steps", self.steps.len())));
        }
        if k == 0 {
            let w0 = self.steps.first().map_or(0.0, |s| s.w_start);
            return Ok(Complex64::new(w0, 0.0));
        }
        let last = self.steps[k - 1];
        let mut z = Complex64::new(last.w_end, 2.0 * last.dt.sqrt());
        for s in self.steps[..k - 1].iter().rev() {
            z = slit_inverse(z, s.w_end, s.dt);
        }
        if z.im < 0.0 || !z.is_finite() {
            return Err(ArmlabError::StepFailure {
                t: self.times[k - 1],
                reason: format!("trace tip {z} left the closed upper half-plane"),
            });
        }
        Ok(z)
    }

    /// Trace polyline: tips at steps 0, k_skip, 2·k_skip, … and the last step.
    pub fn trace(&self, k_skip: usize) -> Result<Vec<Complex64>> {
        let k_skip = k_skip.max(1);
        let n = self.steps.len();
        let mut ks: Vec<usize> = (0..=n).step_by(k_skip).collect();
        if ks.last() != Some(&n) {
            ks.push(n);
        }
        ks.into_iter().map(|k| self.trace_tip(k)).collect()
    }

    /// Applies the forward map g_{t_k} to `z`.
    pub fn forward(&self, z: Complex64, k: usize) -> Complex64 {
        let mut z = z;
        for s in &self.steps[..k.min(self.steps.len())] {
            z += slit_forward_increment(z, s.w_end, s.dt).0;
        }
        z
    }

    /// Applies the inverse map g_{t_k}^{-1} to a point of the upper half-plane.
    pub fn inverse(&self, w: Complex64, k: usize) -> Complex64 {
        let mut z = w;
        for s in self.steps[..k.min(self.steps.len())].iter().rev() {
            z = slit_inverse(z, s.w_end, s.dt);
        }
        z
    }
}

/// hcap(K) from g_K(iR) ≈ iR + hcap/(iR) at R = 10³·√t.
pub fn hcap_estimate(chain: &DiscretizedChain) -> f64 {
    let t = chain.total_time();
    if t <= 0.0 {
        return 0.0;
    }
    let r = 1e3 * t.sqrt();
    let mut z = Complex64::new(0.0, r);
    let mut disp = Complex64::new(0.0, 0.0);
    for s in chain.steps() {
        let (inc, _) = slit_forward_increment(z, s.w_end, s.dt);
        z += inc;
        disp += inc;
    }
    -r * disp.im
}

/// Forward flow of interior (or boundary) points with their derivatives,
/// driven by the same slit steps as [`DiscretizedChain`].
#[derive(Clone, Debug)]
pub struct ComplexFlow {
    pub points: Vec<Complex64>,
    pub derivs: Vec<Complex64>,
    /// Cleared once a point gets within `hit_radius` of the driver.
    pub alive: Vec<bool>,
    pub hit_radius: f64,
}

impl ComplexFlow {
    pub fn new(points: Vec<Complex64>, hit_radius: f64) -> Self {
        let n = points.len();
        ComplexFlow { points, derivs: vec![Complex64::new(1.0, 0.0); n], alive: vec![true; n], hit_radius }
    }

    pub fn step(&mut self, w: f64, dt: f64) {
        for i in 0..self.points.len() {
            if !self.alive[i] {
                continue;
            }
            let z = self.points[i];
            let u = z - w;
            if u.norm() <= self.hit_radius {
                self.alive[i] = false;
                continue;
            }
            let (inc, s) = slit_forward_increment(z, w, dt);
            self.points[i] = z + inc;
            self.derivs[i] *= u / s;
        }
    }

    pub fn run(&mut self, chain: &DiscretizedChain) {
        for s in chain.steps() {
            self.step(s.w_end, s.dt);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_step_tip() {
        let c = DiscretizedChain::constant(0.0, 0.04, 1).unwrap();
        let tip = c.trace_tip(1).unwrap();
        assert_relative_eq!(tip.im, 0.4, max_relative = 1e-14);
        assert_eq!(tip.re, 0.0);
    }

    #[test]
    fn zero_driver_trace_is_vertical() {
        let c = DiscretizedChain::constant(0.0, 1e-3, 500).unwrap();
        for k in [1, 10, 250, 500] {
            let tip = c.trace_tip(k).unwrap();
            assert!(tip.re.abs() < 1e-12);
            assert_relative_eq!(tip.im, 2.0 * (k as f64 * 1e-3).sqrt(), max_relative = 1e-9);
        }
    }

    #[test]
    fn forward_inverse_roundtrip() {
        let mut c = DiscretizedChain::new();
        let mut w = 0.0;
        for k in 0..200 {
            let w_next = w + 0.03 * ((k as f64) * 0.7).sin();
            c.push(1e-3, w, w_next).unwrap();
            w = w_next;
        }
        for z in [Complex64::new(0.3, 1.0), Complex64::new(-2.0, 0.1), Complex64::new(5.0, 3.0)] {
            let g = c.forward(z, c.len());
            let back = c.inverse(g, c.len());
            assert!((back - z).norm() < 1e-10, "{z} -> {g} -> {back}");
        }
    }

    #[test]
    fn hcap_of_constant_chain() {
        let c = DiscretizedChain::constant(0.3, 0.01, 50).unwrap();
        assert_relative_eq!(hcap_estimate(&c), 1.0, max_relative = 1e-5);
        assert_eq!(hcap_estimate(&DiscretizedChain::new()), 0.0);
    }

    #[test]
    fn tip_out_of_range() {
        let c = DiscretizedChain::constant(0.0, 0.01, 3).unwrap();
        assert!(c.trace_tip(4).is_err());
        assert_eq!(c.trace_tip(0).unwrap(), Complex64::new(0.0, 0.0));
    }
}
