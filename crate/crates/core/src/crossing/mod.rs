//! Boundary crossing events between B(x, ε) and the half-line (−∞, y].
//!
//! For κ > 4 the stopping times are detected from the marked-point flow
//! (threshold mode) or from the reconstructed trace (trace mode). For κ ≤ 4
//! the H^π events count well-oriented crossings of the reconstructed trace
//! with the crosscuts ∂⁺B(x, ε) and ∂⁻L⁻_y.

mod geometry;
mod threshold;
mod trace;

pub use geometry::point_segment_distance;
pub use geometry::{
    comparison_check, random_fixture, reference_fixture, segment_intersection, well_oriented_count, ComparisonFixture,
    ComparisonVerdict, Crosscut, CrosscutShape, Hit, WellOrientedState,
};
pub use threshold::{
    bridge_extremes, detect_crossings_gt4, renewal_leg, simulate_threshold, simulate_threshold_multi, Renewal,
    RenewalMode,
};
pub use trace::{detect_hpi, hpi_crosscuts, simulate_hpi, simulate_trace_gt4, TipWatcher};

use serde::{Deserialize, Serialize};

use crate::error::{ArmlabError, Result};
use crate::loewner::DtPolicy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// H_{2n−1}: τ₁ < σ₁ < … < τ_n < T.
    #[serde(rename = "H_odd")]
    HOdd,
    /// H_{2n}: σ₁ < τ₁ < … < σ_n < τ_n < T.
    #[serde(rename = "H_even")]
    HEven,
    /// Ĥ_{2n}: τ₁ < σ₁ < … < τ_n < σ_n < T.
    #[serde(rename = "Hhat_even")]
    HhatEven,
    /// Ĥ_{2n−1}: σ₁ < τ₁ < … < τ_{n−1} < σ_n < T.
    #[serde(rename = "Hhat_odd")]
    HhatOdd,
    /// H^π_{2n−1}: 2n−1 well-oriented (ball, strip) crossings.
    #[serde(rename = "Hpi_odd")]
    HpiOdd,
    /// H^π_{2n}: 2n well-oriented (strip, ball) crossings.
    #[serde(rename = "Hpi_even")]
    HpiEven,
}

/// Event family as exposed on the command line, indexed by arm count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    H,
    Hhat,
    Hpi,
}

impl Variant {
    /// Variant and per-variant `n` for the event with `arms` crossings.
    pub fn from_arms(family: Family, arms: usize) -> Result<(Variant, usize)> {
        if arms == 0 {
            return Err(ArmlabError::param("arm count must be positive"));
        }
        let odd = arms % 2 == 1;
        let v = match (family, odd) {
            (Family::H, true) => Variant::HOdd,
            (Family::H, false) => Variant::HEven,
            (Family::Hhat, true) => Variant::HhatOdd,
            (Family::Hhat, false) => Variant::HhatEven,
            (Family::Hpi, true) => Variant::HpiOdd,
            (Family::Hpi, false) => Variant::HpiEven,
        };
        Ok((v, arms.div_ceil(2)))
    }

    pub fn arms(self, n: usize) -> usize {
        match self {
            Variant::HOdd | Variant::HhatOdd | Variant::HpiOdd => 2 * n - 1,
            Variant::HEven | Variant::HhatEven | Variant::HpiEven => 2 * n,
        }
    }

    pub fn is_pi(self) -> bool {
        matches!(self, Variant::HpiOdd | Variant::HpiEven)
    }

    pub fn is_hat(self) -> bool {
        matches!(self, Variant::HhatOdd | Variant::HhatEven)
    }

    /// Whether the first target is the ball.
    pub fn ball_first(self) -> bool {
        matches!(self, Variant::HOdd | Variant::HhatEven | Variant::HpiOdd)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Leg {
    /// Visit to the ball; `first` marks the visit that opens the sequence,
    /// detected through Υ_t ≤ ε.
    Ball {
        first: bool,
    },
    Line,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub variant: Variant,
    pub n: usize,
    pub epsilon: f64,
    pub x: f64,
    pub y: f64,
    pub kappa: f64,
}

impl EventSpec {
    pub fn validate(&self) -> Result<()> {
        let s = self;
        if s.n == 0 {
            return Err(ArmlabError::param("n must be positive"));
        }
        if !(s.kappa > 0.0) || !s.kappa.is_finite() {
            return Err(ArmlabError::param(format!("κ = {}", s.kappa)));
        }
        if !(s.epsilon > 0.0) || !(s.x > 0.0) || !s.y.is_finite() || !s.x.is_finite() {
            return Err(ArmlabError::param(format!("need ε > 0 and x > 0, got {s:?}")));
        }
        if s.variant.is_pi() {
            if s.kappa > 4.0 {
                return Err(ArmlabError::Regime { kappa: s.kappa, what: "H^π events (κ ≤ 4)".into() });
            }
            if !(s.x > s.y) || !(s.epsilon < s.x - s.y) {
                return Err(ArmlabError::param(format!("H^π needs ε < x − y and x > y, got {s:?}")));
            }
        } else {
            if s.kappa <= 4.0 {
                return Err(ArmlabError::Regime { kappa: s.kappa, what: "H and Ĥ events (κ > 4)".into() });
            }
            if !(s.y <= 0.0) || !(s.epsilon <= s.x) {
                return Err(ArmlabError::param(format!("need y ≤ 0 < ε ≤ x, got {s:?}")));
            }
        }
        Ok(())
    }

    /// Leg sequence for the threshold detector.
    pub fn legs(&self) -> Vec<Leg> {
        let n = self.n;
        let mut legs = Vec::with_capacity(2 * n);
        match self.variant {
            Variant::HOdd | Variant::HpiOdd => {
                legs.push(Leg::Ball { first: true });
                for _ in 1..n {
                    legs.extend([Leg::Line, Leg::Ball { first: false }]);
                }
            }
            Variant::HhatEven => {
                legs.extend([Leg::Ball { first: true }, Leg::Line]);
                for _ in 1..n {
                    legs.extend([Leg::Ball { first: false }, Leg::Line]);
                }
            }
            Variant::HEven | Variant::HpiEven => {
                for _ in 0..n {
                    legs.extend([Leg::Line, Leg::Ball { first: false }]);
                }
            }
            Variant::HhatOdd => {
                for _ in 1..n {
                    legs.extend([Leg::Line, Leg::Ball { first: false }]);
                }
                legs.push(Leg::Line);
            }
        }
        legs
    }

    /// Scale used for the line-hit threshold and the horizon.
    pub fn scale(&self) -> f64 {
        self.x - self.y
    }

    pub fn with_epsilon(mut self, eps: f64) -> Self {
        self.epsilon = eps;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    TargetReached,
    SwallowedX,
    Horizon,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossingRecord {
    pub success: bool,
    pub leg_times: Vec<f64>,
    pub terminal: Terminal,
    /// Likelihood ratio dP/dQ at the stopping time (1 without importance sampling).
    pub weight: f64,
    pub steps: u64,
    /// Set when an H^π trace came near the truncation of the strip ray.
    #[serde(default)]
    pub near_cutoff: bool,
    /// Flow observables of x when the last leg completed.
    #[serde(default)]
    pub hit_state: Option<HitState>,
}

/// g_t(x) − W_t and g_t'(x) at a stopping time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitState {
    pub gap: f64,
    pub deriv: f64,
}

impl CrossingRecord {
    pub(crate) fn failed(terminal: Terminal, leg_times: Vec<f64>, steps: u64) -> Self {
        CrossingRecord { success: false, leg_times, terminal, weight: 0.0, steps, near_cutoff: false, hit_state: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DetectionMode {
    #[default]
    Threshold,
    Trace,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectConfig {
    pub dt_policy: DtPolicy,
    /// Subsequent ball legs end once g_t(x) − W_t ≤ c_ball·ε·g_t'(x).
    pub c_ball: f64,
    /// Horizon in units of (x − y)².
    pub horizon_factor: f64,
    /// Sample under SLE_κ(ν) with force point x and reweight.
    pub importance_nu: Option<f64>,
    /// The strip ray is cut at Re = y − strip_cutoff·(x − y).
    pub strip_cutoff: f64,
    /// Trace tips are evaluated every `k_skip` steps.
    pub k_skip: usize,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig {
            dt_policy: DtPolicy { c_step: 0.01, dt_max: f64::INFINITY, delta_hit: 1e-6 },
            c_ball: 4.0,
            horizon_factor: 50.0,
            importance_nu: None,
            strip_cutoff: 10.0,
            k_skip: 1,
        }
    }
}

impl DetectConfig {
    pub fn horizon(&self, spec: &EventSpec) -> f64 {
        self.horizon_factor * spec.scale() * spec.scale()
    }

    pub fn validate(&self) -> Result<()> {
        self.dt_policy.validate()?;
        if !(self.c_ball > 0.0) || !(self.horizon_factor > 0.0) || !(self.strip_cutoff > 0.0) || self.k_skip == 0 {
            return Err(ArmlabError::param(format!("bad detection config {self:?}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legs_per_variant() {
        let spec = |variant, n| EventSpec { variant, n, epsilon: 0.1, x: 1.0, y: 0.0, kappa: 6.0 };
        let b1 = Leg::Ball { first: true };
        let b = Leg::Ball { first: false };
        let l = Leg::Line;
        assert_eq!(spec(Variant::HOdd, 1).legs(), vec![b1]);
        assert_eq!(spec(Variant::HOdd, 2).legs(), vec![b1, l, b]);
        assert_eq!(spec(Variant::HEven, 1).legs(), vec![l, b]);
        assert_eq!(spec(Variant::HhatEven, 2).legs(), vec![b1, l, b, l]);
        assert_eq!(spec(Variant::HhatOdd, 1).legs(), vec![l]);
        assert_eq!(spec(Variant::HhatOdd, 2).legs(), vec![l, b, l]);
        for (v, n) in [(Variant::HOdd, 3), (Variant::HEven, 2), (Variant::HhatEven, 2), (Variant::HhatOdd, 3)] {
            assert_eq!(spec(v, n).legs().len(), v.arms(n));
        }
    }

    #[test]
    fn arm_indexing() {
        assert_eq!(Variant::from_arms(Family::H, 1).unwrap(), (Variant::HOdd, 1));
        assert_eq!(Variant::from_arms(Family::H, 4).unwrap(), (Variant::HEven, 2));
        assert_eq!(Variant::from_arms(Family::Hhat, 1).unwrap(), (Variant::HhatOdd, 1));
        assert_eq!(Variant::from_arms(Family::Hhat, 2).unwrap(), (Variant::HhatEven, 1));
        assert_eq!(Variant::from_arms(Family::Hpi, 3).unwrap(), (Variant::HpiOdd, 2));
        assert!(Variant::from_arms(Family::H, 0).is_err());
    }

    #[test]
    fn regime_checks() {
        let ok = EventSpec { variant: Variant::HOdd, n: 1, epsilon: 0.1, x: 1.0, y: 0.0, kappa: 6.0 };
        assert!(ok.validate().is_ok());
        assert!(EventSpec { kappa: 3.0, ..ok }.validate().is_err());
        assert!(EventSpec { epsilon: 2.0, ..ok }.validate().is_err());
        assert!(EventSpec { y: 0.5, ..ok }.validate().is_err());
        assert!(EventSpec { variant: Variant::HpiOdd, ..ok }.validate().is_err());
        assert!(EventSpec { variant: Variant::HpiOdd, kappa: 3.0, ..ok }.validate().is_ok());
    }
}
