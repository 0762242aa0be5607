//! Driving processes: √κ·B for SLE_κ and the coupled SDE for SLE_κ(ρ^L; ρ^R).

use serde::{Deserialize, Serialize};

use crate::error::{ArmlabError, Result};
use crate::loewner::{DiscretizedChain, DtPolicy, FlowState, Integrator};
use crate::rng::{normal, path_rng, PathRng};

/// RNG stream tag for driver paths.
const DRIVER_STREAM: u64 = 0x5d1e;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriverConfig {
    pub kappa: f64,
    pub rho_left: Option<f64>,
    pub rho_right: Option<f64>,
    /// Left force point, 0 when absent.
    pub x_left: f64,
    /// Right force point, 0 when absent.
    pub x_right: f64,
    pub seed: u64,
    pub dt_policy: DtPolicy,
}

impl DriverConfig {
    pub fn sle(kappa: f64, seed: u64) -> Self {
        DriverConfig {
            kappa,
            rho_left: None,
            rho_right: None,
            x_left: 0.0,
            x_right: 0.0,
            seed,
            dt_policy: DtPolicy::default(),
        }
    }

    pub fn with_right(mut self, x: f64, rho: Option<f64>) -> Self {
        self.x_right = x;
        self.rho_right = rho;
        self
    }

    pub fn with_left(mut self, x: f64, rho: Option<f64>) -> Self {
        self.x_left = x;
        self.rho_left = rho;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(ArmlabError::param(format!("κ must be positive, got {}", self.kappa)));
        }
        if self.x_left > 0.0 || self.x_right < 0.0 {
            return Err(ArmlabError::param("force points must satisfy x_left ≤ 0 ≤ x_right"));
        }
        if self.rho_left.is_some() && self.x_left == 0.0 {
            return Err(ArmlabError::param("rho_left given without a left force point"));
        }
        if self.rho_right.is_some() && self.x_right == 0.0 {
            return Err(ArmlabError::param("rho_right given without a right force point"));
        }
        self.dt_policy.validate()
    }

    fn has_rho(&self) -> bool {
        self.rho_left.is_some_and(|r| r != 0.0) || self.rho_right.is_some_and(|r| r != 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    HorizonReached,
    ForcePointHit { side: Side, time: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Increment {
    pub dt: f64,
    pub dw: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriverPath {
    pub increments: Vec<Increment>,
    /// V^L after each step (empty without a left force point).
    pub v_left: Vec<f64>,
    /// V^R after each step (empty without a right force point).
    pub v_right: Vec<f64>,
    pub termination: Termination,
}

impl DriverPath {
    /// W after each step, starting from W_0 = 0 (not included).
    pub fn w_values(&self) -> Vec<f64> {
        let mut w = 0.0;
        self.increments
            .iter()
            .map(|inc| {
                w += inc.dw;
                w
            })
            .collect()
    }

    pub fn total_time(&self) -> f64 {
        self.increments.iter().map(|i| i.dt).sum()
    }

    pub fn chain(&self) -> Result<DiscretizedChain> {
        let mut c = DiscretizedChain::with_capacity(self.increments.len());
        let mut w = 0.0;
        for inc in &self.increments {
            c.push(inc.dt, w, w + inc.dw)?;
            w += inc.dw;
        }
        Ok(c)
    }
}

/// Step-by-step SLE_κ(ρ^L; ρ^R) simulation coupled to the flow of its force
/// points. Other marks can be tracked alongside via `extra_marks`.
pub struct SleRun {
    pub cfg: DriverConfig,
    pub state: FlowState,
    rng: PathRng,
    left: Option<usize>,
    right: Option<usize>,
    repelled_left: bool,
    repelled_right: bool,
    /// Steps are recorded here when present.
    pub chain: Option<DiscretizedChain>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub dt: f64,
    pub dw: f64,
}

impl SleRun {
    pub fn new(cfg: &DriverConfig, path_index: u64, extra_marks: &[f64]) -> Result<Self> {
        cfg.validate()?;
        let mut xs = Vec::with_capacity(2 + extra_marks.len());
        let mut left = None;
        let mut right = None;
        if cfg.x_left < 0.0 {
            left = Some(xs.len());
            xs.push(cfg.x_left);
        }
        if cfg.x_right > 0.0 {
            right = Some(xs.len());
            xs.push(cfg.x_right);
        }
        xs.extend_from_slice(extra_marks);
        let y = if cfg.x_left < 0.0 { cfg.x_left } else { 0.0 };
        let state = FlowState::new(0.0, &xs, y, cfg.dt_policy.delta_hit)?;
        let threshold = cfg.kappa / 2.0 - 2.0;
        Ok(SleRun {
            cfg: cfg.clone(),
            state,
            rng: path_rng(cfg.seed, DRIVER_STREAM, path_index),
            left,
            right,
            repelled_left: cfg.rho_left.is_some_and(|r| r >= threshold),
            repelled_right: cfg.rho_right.is_some_and(|r| r >= threshold),
            chain: None,
        })
    }

    pub fn record_chain(mut self) -> Self {
        self.chain = Some(DiscretizedChain::new());
        self
    }

    pub fn left_index(&self) -> Option<usize> {
        self.left
    }

    pub fn right_index(&self) -> Option<usize> {
        self.right
    }

    pub fn force_point_hit(&self) -> Option<Side> {
        let sw = |i: Option<usize>| i.is_some_and(|i| self.state.marks[i].swallowed);
        if sw(self.left) {
            Some(Side::Left)
        } else if sw(self.right) {
            Some(Side::Right)
        } else {
            None
        }
    }

    fn drift(&self) -> f64 {
        let st = &self.state;
        let mut d = 0.0;
        if let (Some(i), Some(r)) = (self.left, self.cfg.rho_left) {
            if !st.marks[i].swallowed {
                d += r / (st.w - st.marks[i].image);
            }
        }
        if let (Some(i), Some(r)) = (self.right, self.cfg.rho_right) {
            if !st.marks[i].swallowed {
                d += r / (st.w - st.marks[i].image);
            }
        }
        d
    }

    fn would_cross(&self, w_new: f64) -> bool {
        let st = &self.state;
        let hit = |idx: Option<usize>, repelled: bool| {
            repelled
                && idx.is_some_and(|i| {
                    let m = &st.marks[i];
                    !m.swallowed && m.gap(w_new) <= m.threshold()
                })
        };
        hit(self.left, self.repelled_left) || hit(self.right, self.repelled_right)
    }

    /// Step length suggested by the dt policy, capped at `max_dt`.
    pub fn next_dt(&self, max_dt: f64) -> f64 {
        let s = self.state.min_mark_gap();
        let dt = if s.is_finite() { self.cfg.dt_policy.dt(self.cfg.kappa, s) } else { self.cfg.dt_policy.dt_max };
        dt.min(max_dt)
    }

    /// Samples one increment of length at most `max_dt` and advances the flow.
    pub fn step(&mut self, max_dt: f64) -> Result<StepInfo> {
        let mut dt = self.next_dt(max_dt);
        let drift = self.drift();
        let z = normal(&mut self.rng);
        let kappa = self.cfg.kappa;
        let mut dw = drift * dt + (kappa * dt).sqrt() * z;
        let mut halvings = 0;
        while self.would_cross(self.state.w + dw) && halvings < 64 {
            dt *= 0.5;
            dw = drift * dt + (kappa * dt).sqrt() * z;
            halvings += 1;
        }
        if !dw.is_finite() {
            return Err(ArmlabError::StepFailure {
                t: self.state.t,
                reason: format!("driver increment {dw} (drift {drift})"),
            });
        }
        let w0 = self.state.w;
        self.state.advance(w0 + dw, dt, Integrator::Slit)?;
        if let Some(c) = self.chain.as_mut() {
            c.push(dt, w0, w0 + dw)?;
        }
        Ok(StepInfo { dt, dw })
    }

    fn into_path(mut self, horizon: f64) -> Result<DriverPath> {
        let mut path = DriverPath {
            increments: Vec::new(),
            v_left: Vec::new(),
            v_right: Vec::new(),
            termination: Termination::HorizonReached,
        };
        while self.state.t < horizon {
            let info = self.step(horizon - self.state.t)?;
            path.increments.push(Increment { dt: info.dt, dw: info.dw });
            if let Some(i) = self.left {
                path.v_left.push(self.state.marks[i].image);
            }
            if let Some(i) = self.right {
                path.v_right.push(self.state.marks[i].image);
            }
            if let Some(side) = self.force_point_hit() {
                path.termination = Termination::ForcePointHit { side, time: self.state.t };
                break;
            }
            // Guard against rounding leaving a sliver of time.
            if horizon - self.state.t <= 1e-15 * horizon {
                break;
            }
        }
        Ok(path)
    }
}

/// SLE_κ driver. Force points, if given, are only tracked (they shape the
/// adaptive step), so that `sample_sle` and `sample_sle_rho` with zero ρ
/// produce the same W for the same seed.
pub fn sample_sle(cfg: &DriverConfig, horizon: f64) -> Result<DriverPath> {
    if cfg.has_rho() {
        return Err(ArmlabError::param("sample_sle takes a configuration without ρ"));
    }
    sample_sle_rho(cfg, horizon)
}

/// SLE_κ(ρ^L; ρ^R) driver by Euler–Maruyama with the adaptive step policy.
pub fn sample_sle_rho(cfg: &DriverConfig, horizon: f64) -> Result<DriverPath> {
    if !(horizon >= 0.0) {
        return Err(ArmlabError::param(format!("horizon {horizon}")));
    }
    SleRun::new(cfg, 0, &[])?.into_path(horizon)
}

/// Like [`sample_sle_rho`] with an explicit path index for the seed stream.
pub fn sample_path(cfg: &DriverConfig, path_index: u64, horizon: f64) -> Result<DriverPath> {
    SleRun::new(cfg, path_index, &[])?.into_path(horizon)
}

/// Exponents of the local martingale
/// M = ∏ g'(x_j)^{ρ_j(ρ_j+4−κ)/(4κ)} |g(x_j) − W|^{ρ_j/κ} · (g(x^R) − g(x^L))^{ρ^Lρ^R/(2κ)}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MartingaleSpec {
    pub kappa: f64,
    pub rho_left: f64,
    pub rho_right: f64,
    pub x_left: f64,
    pub x_right: f64,
}

impl MartingaleSpec {
    pub fn right(kappa: f64, rho: f64, x: f64) -> Self {
        MartingaleSpec { kappa, rho_left: 0.0, rho_right: rho, x_left: 0.0, x_right: x }
    }

    pub fn deriv_exponent(&self, rho: f64) -> f64 {
        rho * (rho + 4.0 - self.kappa) / (4.0 * self.kappa)
    }

    pub fn distance_exponent(&self, rho: f64) -> f64 {
        rho / self.kappa
    }

    pub fn cross_exponent(&self) -> f64 {
        self.rho_left * self.rho_right / (2.0 * self.kappa)
    }

    fn has_left(&self) -> bool {
        self.x_left < 0.0
    }

    fn has_right(&self) -> bool {
        self.x_right > 0.0
    }

    /// Driver configuration of the SLE_κ(ρ) process this martingale weights to.
    pub fn weighted_driver(&self, seed: u64, dt_policy: DtPolicy) -> DriverConfig {
        let mut cfg = DriverConfig::sle(self.kappa, seed);
        cfg.dt_policy = dt_policy;
        if self.has_left() {
            cfg = cfg.with_left(self.x_left, Some(self.rho_left));
        }
        if self.has_right() {
            cfg = cfg.with_right(self.x_right, Some(self.rho_right));
        }
        cfg
    }

    /// Same force points with ρ dropped: the plain SLE_κ whose flow M is read from.
    pub fn plain_driver(&self, seed: u64, dt_policy: DtPolicy) -> DriverConfig {
        let mut cfg = self.weighted_driver(seed, dt_policy);
        cfg.rho_left = None;
        cfg.rho_right = None;
        cfg
    }

    /// ln M_t from the observables (W, g(x^L), g'(x^L), g(x^R), g'(x^R)).
    pub fn ln_value(&self, w: f64, left: Option<(f64, f64)>, right: Option<(f64, f64)>) -> f64 {
        let mut ln = 0.0;
        if let Some((img, d)) = left {
            ln += self.deriv_exponent(self.rho_left) * d.ln() + self.distance_exponent(self.rho_left) * (w - img).ln();
        }
        if let Some((img, d)) = right {
            ln +=
                self.deriv_exponent(self.rho_right) * d.ln() + self.distance_exponent(self.rho_right) * (img - w).ln();
        }
        if let (Some((l, _)), Some((r, _))) = (left, right) {
            let c = self.cross_exponent();
            if c != 0.0 {
                ln += c * (r - l).ln();
            }
        }
        ln
    }

    pub fn initial_value(&self) -> f64 {
        let left = self.has_left().then_some((self.x_left, 1.0));
        let right = self.has_right().then_some((self.x_right, 1.0));
        self.ln_value(0.0, left, right).exp()
    }
}

/// M_t read from the force-point marks of `state` (located by their x0).
pub fn martingale_value(spec: &MartingaleSpec, state: &FlowState) -> Result<f64> {
    let read = |x0: f64| -> Result<(f64, f64)> {
        let i = state.mark_index(x0).ok_or_else(|| ArmlabError::param(format!("no mark at force point {x0}")))?;
        let m = &state.marks[i];
        if m.swallowed {
            return Err(ArmlabError::param(format!("force point {x0} swallowed; M is stopped")));
        }
        Ok((m.image, m.deriv))
    };
    let left = if spec.has_left() { Some(read(spec.x_left)?) } else { None };
    let right = if spec.has_right() { Some(read(spec.x_right)?) } else { None };
    Ok(spec.ln_value(state.w, left, right).exp())
}
