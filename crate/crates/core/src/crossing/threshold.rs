//! Threshold detection of crossing events for κ > 4 from the marked-point
//! flow (W, g_t(x), g_t'(x), O_t, Y_t).

use serde::{Deserialize, Serialize};

use super::{CrossingRecord, DetectConfig, EventSpec, HitState, Leg, Terminal};
use crate::driver::DriverPath;
use crate::error::{ArmlabError, Result};
use crate::loewner::FlowState;
use rand::Rng;

use crate::rng::{normal, PathRng};

/// Crossing progress for several ε sharing one path.
struct Detector {
    legs: Vec<Leg>,
    eps: Vec<f64>,
    progress: Vec<usize>,
    times: Vec<Vec<f64>>,
    done: Vec<Option<Terminal>>,
    weights: Vec<f64>,
    hit_states: Vec<Option<HitState>>,
    open: usize,
    c_ball: f64,
    thr_line: f64,
    /// (ν/κ, derivative exponent, ln M₀) under importance sampling.
    importance: Option<(f64, f64, f64)>,
    t: f64,
    w: f64,
    x_img: f64,
    d: f64,
    o: f64,
    /// g_t(x) − O_t, tracked directly: the difference of the two images
    /// cancels catastrophically near swallowing.
    xo: f64,
    yl: f64,
    steps: u64,
}

impl Detector {
    fn new(spec: &EventSpec, eps: &[f64], cfg: &DetectConfig) -> Self {
        let k = eps.len();
        let importance = cfg.importance_nu.map(|nu| {
            let kappa = spec.kappa;
            let a = nu * (nu + 4.0 - kappa) / (4.0 * kappa);
            (nu / kappa, a, nu / kappa * spec.x.ln())
        });
        Detector {
            legs: spec.legs(),
            eps: eps.to_vec(),
            progress: vec![0; k],
            times: vec![Vec::new(); k],
            done: vec![None; k],
            weights: vec![1.0; k],
            hit_states: vec![None; k],
            open: k,
            c_ball: cfg.c_ball,
            thr_line: cfg.dt_policy.delta_hit * spec.scale(),
            importance,
            t: 0.0,
            w: 0.0,
            x_img: spec.x,
            d: 1.0,
            o: 0.0,
            xo: spec.x,
            yl: spec.y,
            steps: 0,
        }
    }

    fn on_line_leg(&self) -> bool {
        (0..self.eps.len()).any(|i| self.done[i].is_none() && self.legs[self.progress[i]] == Leg::Line)
    }

    /// Gap scale for the step policy: g_t(x) − W_t, and W_t − Y_t while some
    /// ε waits for a line hit.
    fn gap_scale(&self) -> f64 {
        let mut s = self.x_img - self.w;
        if self.on_line_leg() {
            s = s.min((self.w - self.yl).max(self.thr_line));
        }
        s
    }

    fn drift(&self, kappa: f64) -> f64 {
        match self.importance {
            Some((nu_over_kappa, _, _)) => nu_over_kappa * kappa / (self.w - self.x_img),
            None => 0.0,
        }
    }

    fn finish_all(&mut self, terminal: Terminal) {
        for i in 0..self.eps.len() {
            if self.done[i].is_none() {
                self.done[i] = Some(terminal);
            }
        }
        self.open = 0;
    }

    /// Jump of the driver to `w_new` followed by slit growth for `dt`.
    /// `extremes` holds the maximum and minimum of the driver over the step
    /// (a sampled Brownian bridge); without them only the endpoints count.
    /// Returns true when every ε is settled.
    fn observe(&mut self, w_new: f64, dt: f64, extremes: Option<(f64, f64)>) -> bool {
        self.steps += 1;
        let (hi, lo) = extremes.unwrap_or((w_new, w_new));
        let (hi, lo) = (hi.max(w_new), lo.min(w_new));
        let y_pre = self.yl;
        let floor = 4.0 * f64::EPSILON * (self.x_img.abs() + w_new.abs());
        if self.x_img - hi <= floor {
            self.t += dt;
            self.w = w_new;
            self.finish_all(Terminal::SwallowedX);
            return true;
        }
        if hi > self.o {
            self.o = hi;
            self.xo = self.x_img - hi;
        }
        self.yl = self.yl.min(lo);
        let g = self.x_img - w_new;
        let r = (g * g + 4.0 * dt).sqrt();
        let b = self.o - w_new;
        let ro = (b * b + 4.0 * dt).sqrt();
        self.xo *= (g + b) / (r + ro);
        self.x_img = w_new + r;
        self.d *= g / r;
        self.o = w_new + ro;
        self.yl = w_new - ((w_new - self.yl).powi(2) + 4.0 * dt).sqrt();
        self.t += dt;
        self.w = w_new;
        let line_hit = lo - y_pre <= self.thr_line;
        let upsilon = self.xo / self.d;
        let ball_ratio = (self.x_img - self.w) / (self.c_ball * self.d);
        for i in 0..self.eps.len() {
            if self.done[i].is_some() {
                continue;
            }
            let eps = self.eps[i];
            let hit = match self.legs[self.progress[i]] {
                Leg::Ball { first: true } => upsilon <= eps,
                Leg::Ball { first: false } => ball_ratio <= eps,
                Leg::Line => line_hit,
            };
            if hit {
                self.times[i].push(self.t);
                self.progress[i] += 1;
                if self.progress[i] == self.legs.len() {
                    self.done[i] = Some(Terminal::TargetReached);
                    self.hit_states[i] = Some(HitState { gap: self.x_img - self.w, deriv: self.d });
                    self.open -= 1;
                    if let Some((nu_k, a, ln_m0)) = self.importance {
                        let ln_m = a * self.d.ln() + nu_k * (self.x_img - self.w).ln();
                        self.weights[i] = (ln_m0 - ln_m).exp();
                    }
                }
            }
        }
        self.open == 0
    }

    fn records(mut self) -> Vec<CrossingRecord> {
        self.finish_all(Terminal::Horizon);
        (0..self.eps.len())
            .map(|i| {
                let terminal = self.done[i].expect("settled");
                let success = terminal == Terminal::TargetReached;
                CrossingRecord {
                    success,
                    leg_times: std::mem::take(&mut self.times[i]),
                    terminal,
                    weight: if success { self.weights[i] } else { 0.0 },
                    steps: self.steps,
                    near_cutoff: false,
                    hit_state: self.hit_states[i],
                }
            })
            .collect()
    }
}

/// Maximum and minimum of a Brownian bridge from `a` to `b` with variance
/// `var` over the step, sampled from their exact marginal laws.
pub fn bridge_extremes(a: f64, b: f64, var: f64, rng: &mut PathRng) -> (f64, f64) {
    let h = b - a;
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = 1.0 - rng.random::<f64>();
    let hi = a + 0.5 * (h + (h * h - 2.0 * var * u1.ln()).sqrt());
    let lo = a + 0.5 * (h - (h * h - 2.0 * var * u2.ln()).sqrt());
    (hi, lo)
}

/// Simulates one path and settles the event for every ε in `eps` (coupled:
/// the same driving noise serves all of them).
pub fn simulate_threshold_multi(
    spec: &EventSpec,
    eps: &[f64],
    cfg: &DetectConfig,
    rng: &mut PathRng,
) -> Result<Vec<CrossingRecord>> {
    spec.validate()?;
    cfg.validate()?;
    for &e in eps {
        spec.with_epsilon(e).validate()?;
    }
    let horizon = cfg.horizon(spec);
    let kappa = spec.kappa;
    let mut det = Detector::new(spec, eps, cfg);
    while det.t < horizon {
        let dt = cfg.dt_policy.dt(kappa, det.gap_scale()).min(horizon - det.t);
        if !(dt > 0.0) {
            break;
        }
        let dw = det.drift(kappa) * dt + (kappa * dt).sqrt() * normal(rng);
        let ext = bridge_extremes(det.w, det.w + dw, kappa * dt, rng);
        if det.observe(det.w + dw, dt, Some(ext)) {
            break;
        }
        if !det.x_img.is_finite() || !det.d.is_finite() {
            return Err(ArmlabError::StepFailure { t: det.t, reason: "non-finite flow".into() });
        }
    }
    Ok(det.records())
}

pub fn simulate_threshold(spec: &EventSpec, cfg: &DetectConfig, rng: &mut PathRng) -> Result<CrossingRecord> {
    Ok(simulate_threshold_multi(spec, &[spec.epsilon], cfg, rng)?.remove(0))
}

/// Runs the threshold detector over a pre-sampled driving path.
pub fn detect_crossings_gt4(driver: &DriverPath, spec: &EventSpec, cfg: &DetectConfig) -> Result<CrossingRecord> {
    spec.validate()?;
    if spec.variant.is_pi() {
        return Err(ArmlabError::param("H^π events need trace detection"));
    }
    let mut det = Detector::new(spec, &[spec.epsilon], cfg);
    for inc in &driver.increments {
        if det.observe(det.w + inc.dw, inc.dt, None) {
            break;
        }
    }
    Ok(det.records().remove(0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenewalMode {
    /// ε' = ε·g_t'(x).
    Identity,
    /// ε' = 8ε·g_t'(x + 3ε) around g_t(x + 3ε); needs a mark at x + 3ε.
    Upper,
    /// ε' = ε·g_t'(x)/4.
    Lower,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Renewal {
    pub epsilon: f64,
    pub x: f64,
    pub y: f64,
}

/// Parameters of the event seen through the centred map after a leg.
///
/// After a line leg the map is centred at Y_σ (the image of the hit point),
/// so y' = 0 and x' = g_σ(x) − Y_σ ≥ x − y. After a ball leg it is centred
/// at W_τ.
pub fn renewal_leg(spec: &EventSpec, state: &FlowState, completed: Leg, mode: RenewalMode) -> Result<Renewal> {
    let xi = state.mark_index(spec.x).ok_or_else(|| ArmlabError::param("flow state has no mark at x"))?;
    let center = match completed {
        Leg::Line => state.y_left,
        Leg::Ball { .. } => state.w,
    };
    let (img, deriv, factor) = match mode {
        RenewalMode::Identity => (state.marks[xi].image, state.marks[xi].deriv, 1.0),
        RenewalMode::Lower => (state.marks[xi].image, state.marks[xi].deriv, 0.25),
        RenewalMode::Upper => {
            let j = state
                .mark_index(spec.x + 3.0 * spec.epsilon)
                .ok_or_else(|| ArmlabError::param("upper renewal needs a mark at x + 3ε"))?;
            (state.marks[j].image, state.marks[j].deriv, 8.0)
        }
    };
    if state.marks[xi].swallowed {
        return Err(ArmlabError::param("x is swallowed; nothing to renew"));
    }
    let y = match completed {
        Leg::Line => 0.0,
        Leg::Ball { .. } => state.y_left - state.w,
    };
    Ok(Renewal { epsilon: factor * spec.epsilon * deriv, x: img - center, y })
}
