//! Chordal Loewner flow of marked boundary points.
//!
//! The flow is driven step by step: the caller samples the next driving value
//! and a time increment, and [`FlowState::advance`] moves every tracked
//! quantity forward. Two update rules are available, see [`Integrator`].

mod chain;

pub use chain::{hcap_estimate, ChainStep, ComplexFlow, DiscretizedChain};

use serde::{Deserialize, Serialize};

use crate::error::{ArmlabError, Result};

/// Update rule used by [`FlowState::advance`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    /// Explicit Euler for dX = 2dt/(X−W) and dD = −2D dt/(X−W)², evaluated
    /// at the driving value before the step.
    Euler,
    /// Exact flow of a constant driver over the step: the driving value jumps
    /// to `w_next` and then a vertical slit of capacity 2dt grows at it.
    /// Matches trace reconstruction in [`DiscretizedChain`] step for step.
    #[default]
    Slit,
}

/// Adaptive step contract `dt = min(dt_max, c_step·s²/κ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtPolicy {
    pub c_step: f64,
    /// Serialised as null when infinite.
    #[serde(with = "unbounded")]
    pub dt_max: f64,
    /// A gap counts as hit once it is below `delta_hit` times its initial value.
    pub delta_hit: f64,
}

mod unbounded {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl Default for DtPolicy {
    fn default() -> Self {
        DtPolicy { c_step: 0.01, dt_max: 1e-2, delta_hit: 1e-6 }
    }
}

impl DtPolicy {
    pub fn validate(&self) -> Result<()> {
        let ok = self.c_step > 0.0
            && self.c_step.is_finite()
            && self.dt_max > 0.0
            && self.delta_hit > 0.0
            && self.delta_hit < 1.0;
        if ok {
            Ok(())
        } else {
            Err(ArmlabError::param(format!("bad dt policy {self:?}")))
        }
    }

    /// Step for gap scale `s`. With κ = 0 there is no noise to resolve and
    /// `dt_max` is returned.
    #[inline]
    pub fn dt(&self, kappa: f64, s: f64) -> f64 {
        if kappa <= 0.0 {
            return self.dt_max;
        }
        (self.c_step * s * s / kappa).min(self.dt_max)
    }

    pub fn halved(&self) -> Self {
        DtPolicy { c_step: 0.5 * self.c_step, dt_max: 0.5 * self.dt_max, ..*self }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkedPoint {
    pub x0: f64,
    /// g_t(x0); after swallowing it follows O_t (right marks) or Y_t (left marks).
    pub image: f64,
    /// g_t'(x0), frozen once swallowed.
    pub deriv: f64,
    pub swallowed: bool,
    pub swallow_time: Option<f64>,
    threshold: f64,
}

impl MarkedPoint {
    fn new(x0: f64, w0: f64, delta_hit: f64) -> Self {
        MarkedPoint {
            x0,
            image: x0,
            deriv: 1.0,
            swallowed: false,
            swallow_time: None,
            threshold: delta_hit * (x0 - w0).abs(),
        }
    }

    /// Distance from the driving value, positive while unswallowed.
    #[inline]
    pub fn gap(&self, w: f64) -> f64 {
        if self.x0 > 0.0 {
            self.image - w
        } else {
            w - self.image
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

/// Snapshot of the flow at time `t` (capacity parametrisation, hcap = 2t).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub t: f64,
    pub w: f64,
    pub marks: Vec<MarkedPoint>,
    /// O_t: image of the rightmost point of the hull on ℝ.
    pub o_right: f64,
    /// Y_t: image of the leftmost point of the hull on ℝ, or of `y` while
    /// it is unswallowed.
    pub y_left: f64,
}

/// Υ_t and J_t for one marked point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpsilonJ {
    pub upsilon: f64,
    pub j: f64,
}

impl FlowState {
    /// Starts the flow at `w0` with marks `xs` (all different from `w0`).
    /// `y` seeds the Y process and must satisfy `y ≤ w0`.
    pub fn new(w0: f64, xs: &[f64], y: f64, delta_hit: f64) -> Result<Self> {
        if !(y <= w0) {
            return Err(ArmlabError::param(format!("y = {y} must not exceed w0 = {w0}")));
        }
        if let Some(x) = xs.iter().find(|&&x| x == w0 || !x.is_finite()) {
            return Err(ArmlabError::param(format!("mark {x} coincides with the driver")));
        }
        let marks = xs.iter().map(|&x| MarkedPoint::new(x, w0, delta_hit)).collect();
        Ok(FlowState { t: 0.0, w: w0, marks, o_right: w0, y_left: y })
    }

    pub fn mark_index(&self, x0: f64) -> Option<usize> {
        self.marks.iter().position(|m| m.x0 == x0)
    }

    /// Smallest gap between the driver and an unswallowed mark, floored by
    /// that mark's hit threshold so that the step never collapses to zero.
    pub fn min_mark_gap(&self) -> f64 {
        self.marks.iter().filter(|m| !m.swallowed).map(|m| m.gap(self.w).max(m.threshold)).fold(f64::INFINITY, f64::min)
    }

    /// Moves the flow forward by `dt` with the driving value ending at `w_next`.
    pub fn advance(&mut self, w_next: f64, dt: f64, integrator: Integrator) -> Result<()> {
        if !(dt > 0.0) || !w_next.is_finite() {
            return Err(ArmlabError::StepFailure { t: self.t, reason: format!("dt = {dt}, w_next = {w_next}") });
        }
        let t_next = self.t + dt;
        match integrator {
            Integrator::Euler => {
                let w = self.w;
                for m in self.marks.iter_mut().filter(|m| !m.swallowed) {
                    let d = m.image - w;
                    m.image += 2.0 * dt / d;
                    m.deriv *= 1.0 - 2.0 * dt / (d * d);
                }
                self.o_right = w + ((self.o_right - w).powi(2) + 4.0 * dt).sqrt();
                self.y_left = w - ((w - self.y_left).powi(2) + 4.0 * dt).sqrt();
                self.w = w_next;
                self.o_right = self.o_right.max(w_next);
                self.y_left = self.y_left.min(w_next);
                for m in self.marks.iter_mut().filter(|m| !m.swallowed) {
                    let g = m.gap(w_next);
                    if g <= m.threshold || m.deriv <= 0.0 {
                        m.swallowed = true;
                        m.swallow_time = Some(t_next);
                    }
                }
            }
            Integrator::Slit => {
                let w = w_next;
                self.w = w;
                for m in self.marks.iter_mut().filter(|m| !m.swallowed) {
                    if m.gap(w) <= m.threshold {
                        m.swallowed = true;
                        m.swallow_time = Some(t_next);
                    }
                }
                self.o_right = self.o_right.max(w);
                self.y_left = self.y_left.min(w);
                for m in self.marks.iter_mut().filter(|m| !m.swallowed) {
                    let d = m.image - w;
                    let r = (d * d + 4.0 * dt).sqrt().copysign(d);
                    m.image = w + r;
                    m.deriv *= d / r;
                }
                self.o_right = w + ((self.o_right - w).powi(2) + 4.0 * dt).sqrt();
                self.y_left = w - ((w - self.y_left).powi(2) + 4.0 * dt).sqrt();
            }
        }
        for m in self.marks.iter_mut().filter(|m| m.swallowed) {
            m.image = if m.x0 > 0.0 { self.o_right } else { self.y_left };
        }
        self.t = t_next;
        let finite = self.o_right.is_finite()
            && self.y_left.is_finite()
            && self.marks.iter().all(|m| m.image.is_finite() && m.deriv.is_finite());
        if !finite {
            return Err(ArmlabError::StepFailure { t: self.t, reason: "non-finite flow state".into() });
        }
        Ok(())
    }

    /// Υ_t = (g_t(x) − O_t)/g_t'(x) and J_t = (g_t(x) − O_t)/(g_t(x) − W_t)
    /// for the right mark with index `idx`.
    pub fn upsilon_j(&self, idx: usize) -> Result<UpsilonJ> {
        let m = self.marks.get(idx).ok_or_else(|| ArmlabError::param(format!("no mark {idx}")))?;
        if m.swallowed || m.x0 <= 0.0 {
            return Err(ArmlabError::param(format!("Υ needs an unswallowed right mark, got x0 = {}", m.x0)));
        }
        let above = m.image - self.o_right;
        Ok(UpsilonJ { upsilon: above / m.deriv, j: above / (m.image - self.w) })
    }
}

/// Convenience wrapper for [`FlowState::upsilon_j`].
pub fn conformal_radius_proxy(state: &FlowState, idx: usize) -> Result<f64> {
    state.upsilon_j(idx).map(|u| u.upsilon)
}
