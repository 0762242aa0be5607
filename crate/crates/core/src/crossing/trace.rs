//! Trace-based detection: H^π events for κ ≤ 4 via well-oriented crossings,
//! and Euclidean ball visits for κ > 4 (trace mode).

use std::f64::consts::PI;

use num_complex::Complex64;

use super::geometry::{point_segment_distance, Crosscut, WellOrientedState};
use super::{CrossingRecord, DetectConfig, EventSpec, HitState, Leg, Terminal};
use crate::error::{ArmlabError, Result};
use crate::loewner::{DiscretizedChain, FlowState, Integrator};
use crate::rng::{normal, PathRng};

/// (ξ₋₁, ξ₁) for an H^π event: ball first for odd arm counts, strip first
/// for even ones.
pub fn hpi_crosscuts(spec: &EventSpec, cfg: &DetectConfig) -> Result<[Crosscut; 2]> {
    let ball = Crosscut::ball(spec.x, spec.epsilon);
    let strip = Crosscut::strip(spec.y, PI, spec.y - cfg.strip_cutoff * spec.scale())?;
    Ok(if spec.variant.ball_first() { [ball, strip] } else { [strip, ball] })
}

struct HpiTracker {
    pair: [Crosscut; 2],
    state: WellOrientedState,
    scratch: Vec<(f64, f64, usize)>,
    target: usize,
    cutoff_zone: f64,
    near_cutoff: bool,
    prev: Complex64,
    prev_t: f64,
    first: bool,
}

impl HpiTracker {
    fn new(spec: &EventSpec, cfg: &DetectConfig) -> Result<Self> {
        Ok(HpiTracker {
            pair: hpi_crosscuts(spec, cfg)?,
            state: WellOrientedState::default(),
            scratch: Vec::new(),
            target: spec.variant.arms(spec.n),
            cutoff_zone: spec.y - (cfg.strip_cutoff - 1.0) * spec.scale(),
            near_cutoff: false,
            prev: Complex64::new(0.0, 0.0),
            prev_t: 0.0,
            first: true,
        })
    }

    fn feed(&mut self, tip: Complex64, t: f64) -> bool {
        if tip.re < self.cutoff_zone {
            self.near_cutoff = true;
        }
        let [a, b] = &self.pair;
        let done = self.state.feed([a, b], self.prev, tip, self.prev_t, t, self.first, self.target, &mut self.scratch);
        self.first = false;
        self.prev = tip;
        self.prev_t = t;
        done
    }

    fn record(self, terminal: Terminal, steps: u64, hit_state: Option<HitState>) -> CrossingRecord {
        let success = terminal == Terminal::TargetReached;
        CrossingRecord {
            success,
            leg_times: self.state.times,
            terminal,
            weight: if success { 1.0 } else { 0.0 },
            steps,
            near_cutoff: self.near_cutoff,
            hit_state: if success { hit_state } else { None },
        }
    }
}

/// Tracks the distance from the trace polyline to a boundary point x and
/// reports when it drops to `radius`. By Koebe 1/4, dist(x, K_t) ≥ Υ_t(x)/4,
/// so tips are only reconstructed while Υ ≤ 4·radius (with a margin for the
/// polyline approximation).
pub struct TipWatcher {
    target: Complex64,
    radius: f64,
    prev: Option<Complex64>,
}

impl TipWatcher {
    pub fn new(x: f64, radius: f64) -> Self {
        TipWatcher { target: Complex64::new(x, 0.0), radius, prev: Some(Complex64::new(0.0, 0.0)) }
    }

    /// Forget the last tip; the next check uses the tip alone.
    pub fn reset(&mut self) {
        self.prev = None;
    }

    /// Checks the latest segment of the trace of `chain`, given the current
    /// Υ_t(x).
    pub fn observe(&mut self, chain: &DiscretizedChain, upsilon: f64) -> Result<bool> {
        if upsilon > 5.0 * self.radius {
            self.prev = None;
            return Ok(false);
        }
        let tip = chain.trace_tip(chain.len())?;
        let d = match self.prev {
            Some(p) => point_segment_distance(self.target, p, tip),
            None => (tip - self.target).norm(),
        };
        self.prev = Some(tip);
        Ok(d <= self.radius)
    }
}

fn hit_state(flow: &FlowState) -> HitState {
    let m = &flow.marks[0];
    HitState { gap: m.image - flow.w, deriv: m.deriv }
}

/// H^π detection on a recorded chain.
pub fn detect_hpi(chain: &DiscretizedChain, spec: &EventSpec, cfg: &DetectConfig) -> Result<CrossingRecord> {
    spec.validate()?;
    if !spec.variant.is_pi() {
        return Err(ArmlabError::param("detect_hpi needs an H^π variant"));
    }
    let mut tr = HpiTracker::new(spec, cfg)?;
    tr.prev = chain.trace_tip(0)?;
    let n = chain.len();
    let times = chain.times();
    let mut k = 0;
    while k < n {
        k = (k + cfg.k_skip).min(n);
        let tip = chain.trace_tip(k)?;
        if tr.feed(tip, times[k - 1]) {
            return Ok(tr.record(Terminal::TargetReached, k as u64, None));
        }
    }
    Ok(tr.record(Terminal::Horizon, n as u64, None))
}

/// Simulates SLE_κ (κ ≤ 4) and detects the H^π event on the fly.
pub fn simulate_hpi(spec: &EventSpec, cfg: &DetectConfig, rng: &mut PathRng) -> Result<CrossingRecord> {
    spec.validate()?;
    cfg.validate()?;
    if !spec.variant.is_pi() {
        return Err(ArmlabError::param("simulate_hpi needs an H^π variant"));
    }
    let horizon = cfg.horizon(spec);
    let kappa = spec.kappa;
    let mut flow = FlowState::new(0.0, &[spec.x], spec.y.min(0.0), cfg.dt_policy.delta_hit)?;
    let mut chain = DiscretizedChain::new();
    let mut tr = HpiTracker::new(spec, cfg)?;
    let mut steps = 0u64;
    while flow.t < horizon {
        let dt = cfg.dt_policy.dt(kappa, flow.min_mark_gap()).min(horizon - flow.t);
        let w0 = flow.w;
        let w1 = w0 + (kappa * dt).sqrt() * normal(rng);
        flow.advance(w1, dt, Integrator::Slit)?;
        chain.push(dt, w0, w1)?;
        steps += 1;
        if flow.marks[0].swallowed {
            return Ok(tr.record(Terminal::SwallowedX, steps, None));
        }
        if steps % cfg.k_skip as u64 == 0 || flow.t >= horizon {
            let tip = chain.trace_tip(chain.len())?;
            if tr.feed(tip, flow.t) {
                return Ok(tr.record(Terminal::TargetReached, steps, Some(hit_state(&flow))));
            }
        }
    }
    Ok(tr.record(Terminal::Horizon, steps, None))
}

/// Trace mode for κ > 4: ball legs end when the trace polyline comes within
/// ε of x, line legs when W_t reaches Y_t as in threshold mode.
pub fn simulate_trace_gt4(spec: &EventSpec, cfg: &DetectConfig, rng: &mut PathRng) -> Result<CrossingRecord> {
    spec.validate()?;
    cfg.validate()?;
    if spec.variant.is_pi() {
        return Err(ArmlabError::param("use simulate_hpi for H^π variants"));
    }
    let legs = spec.legs();
    let horizon = cfg.horizon(spec);
    let kappa = spec.kappa;
    let thr_line = cfg.dt_policy.delta_hit * spec.scale();
    let mut flow = FlowState::new(0.0, &[spec.x], spec.y, cfg.dt_policy.delta_hit)?;
    let mut chain = DiscretizedChain::new();
    let mut watch = TipWatcher::new(spec.x, spec.epsilon);
    let mut leg = 0;
    let mut times = Vec::new();
    let mut steps = 0u64;
    while flow.t < horizon {
        let mut s = flow.min_mark_gap();
        if legs[leg] == Leg::Line {
            s = s.min((flow.w - flow.y_left).max(thr_line));
        }
        let dt = cfg.dt_policy.dt(kappa, s).min(horizon - flow.t);
        let w0 = flow.w;
        let y_pre = flow.y_left;
        let w1 = w0 + (kappa * dt).sqrt() * normal(rng);
        flow.advance(w1, dt, Integrator::Slit)?;
        chain.push(dt, w0, w1)?;
        steps += 1;
        if flow.marks[0].swallowed {
            return Ok(CrossingRecord::failed(Terminal::SwallowedX, times, steps));
        }
        let hit = match legs[leg] {
            Leg::Line => {
                watch.reset();
                w1 - y_pre <= thr_line
            }
            Leg::Ball { .. } => watch.observe(&chain, flow.upsilon_j(0)?.upsilon)?,
        };
        if hit {
            times.push(flow.t);
            leg += 1;
            if leg == legs.len() {
                return Ok(CrossingRecord {
                    success: true,
                    leg_times: times,
                    terminal: Terminal::TargetReached,
                    weight: 1.0,
                    steps,
                    near_cutoff: false,
                    hit_state: Some(hit_state(&flow)),
                });
            }
        }
    }
    Ok(CrossingRecord::failed(Terminal::Horizon, times, steps))
}
