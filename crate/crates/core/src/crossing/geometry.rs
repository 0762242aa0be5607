//! Crosscuts, curve–crosscut intersections and well-oriented crossing counts.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ArmlabError, Result};
use crate::rng::path_rng;

const FIXTURE_STREAM: u64 = 0xf1c5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CrosscutShape {
    /// Open polyline; parameter is normalised arclength in [0, 1].
    Polyline { points: Vec<[f64; 2]> },
    /// Upper semicircle from `center − radius` to `center + radius`;
    /// parameter (π − arg)/π.
    Arc { center: f64, radius: f64 },
}

/// Oriented crosscut of H with parameter in [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crosscut {
    pub shape: CrosscutShape,
    /// Reverses the parameter (s ↦ 1 − s).
    #[serde(default)]
    pub reversed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    /// Position along the curve segment, in (0, 1].
    pub u: f64,
    /// Crosscut parameter.
    pub s: f64,
}

impl Crosscut {
    pub fn polyline(points: Vec<Complex64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(ArmlabError::param("crosscut polyline needs two points"));
        }
        Ok(Crosscut {
            shape: CrosscutShape::Polyline { points: points.iter().map(|p| [p.re, p.im]).collect() },
            reversed: false,
        })
    }

    /// ∂⁺B(x, ε) oriented from x − ε to x + ε.
    pub fn ball(x: f64, eps: f64) -> Self {
        Crosscut { shape: CrosscutShape::Arc { center: x, radius: eps }, reversed: false }
    }

    /// ∂⁻L⁻_{y;r}: the segment [y, y + ir] followed by the ray Im = r towards
    /// −∞, truncated at Re = `cutoff`.
    pub fn strip(y: f64, r: f64, cutoff: f64) -> Result<Self> {
        if !(cutoff < y) || !(r > 0.0) {
            return Err(ArmlabError::param(format!("strip y={y}, r={r}, cutoff={cutoff}")));
        }
        Self::polyline(vec![Complex64::new(y, 0.0), Complex64::new(y, r), Complex64::new(cutoff, r)])
    }

    /// Boundary of the rectangle [left, y] × [0, r] seen from H: a crosscut
    /// from y to `left` on ℝ.
    pub fn strip_closed(y: f64, r: f64, left: f64) -> Result<Self> {
        let mut c = Self::strip(y, r, left)?;
        if let CrosscutShape::Polyline { points } = &mut c.shape {
            points.push([left, 0.0]);
        }
        Ok(c)
    }

    pub fn reversed(mut self) -> Self {
        self.reversed = !self.reversed;
        self
    }

    /// Point at parameter `s`.
    pub fn point(&self, s: f64) -> Complex64 {
        let s = if self.reversed { 1.0 - s } else { s };
        match &self.shape {
            CrosscutShape::Arc { center, radius } => *center + Complex64::from_polar(*radius, PI * (1.0 - s)),
            CrosscutShape::Polyline { points } => {
                let lens = seg_lengths(points);
                let total: f64 = lens.iter().sum();
                let mut acc = 0.0;
                for (i, l) in lens.iter().enumerate() {
                    if acc + l >= s * total || i + 1 == lens.len() {
                        let f = if *l > 0.0 { ((s * total - acc) / l).clamp(0.0, 1.0) } else { 0.0 };
                        let a = c64(points[i]);
                        let b = c64(points[i + 1]);
                        return a + (b - a) * f;
                    }
                    acc += l;
                }
                c64(points[0])
            }
        }
    }

    /// Intersections of the segment p→q with the crosscut, with u ∈ (0, 1]
    /// (u = 0 is included when `include_start`).
    pub fn intersect(&self, p: Complex64, q: Complex64, include_start: bool, out: &mut Vec<Hit>) {
        let start = out.len();
        match &self.shape {
            CrosscutShape::Arc { center, radius } => {
                let d = q - p;
                let f = p - *center;
                let a = d.norm_sqr();
                if a == 0.0 {
                    return;
                }
                let b = 2.0 * (f.re * d.re + f.im * d.im);
                let c = f.norm_sqr() - radius * radius;
                let disc = b * b - 4.0 * a * c;
                if disc < 0.0 {
                    return;
                }
                let sq = disc.sqrt();
                // Numerically stable roots.
                let qq = -0.5 * (b + sq.copysign(b));
                let mut roots = [qq / a, if qq != 0.0 { c / qq } else { -b / (2.0 * a) }];
                roots.sort_by(f64::total_cmp);
                let mut last = f64::NAN;
                for u in roots {
                    if u == last || !(u <= 1.0) || u < 0.0 || (u == 0.0 && !include_start) {
                        continue;
                    }
                    last = u;
                    let z = p + d * u - *center;
                    if z.im < 0.0 {
                        continue;
                    }
                    let theta = z.im.atan2(z.re);
                    out.push(Hit { u, s: (PI - theta) / PI });
                }
            }
            CrosscutShape::Polyline { points } => {
                let lens = seg_lengths(points);
                let total: f64 = lens.iter().sum();
                let mut acc = 0.0;
                for (i, l) in lens.iter().enumerate() {
                    let a = c64(points[i]);
                    let b = c64(points[i + 1]);
                    if let Some((u, v)) = segment_intersection(p, q, a, b) {
                        if (u > 0.0 || include_start) && u <= 1.0 {
                            let s = (acc + v * l) / total;
                            // A crossing through a shared vertex shows up twice.
                            let dup = out[start..].iter().any(|h| (h.u - u).abs() <= 1e-12 && (h.s - s).abs() <= 1e-12);
                            if !dup {
                                out.push(Hit { u, s });
                            }
                        }
                    }
                    acc += l;
                }
            }
        }
        if self.reversed {
            for h in &mut out[start..] {
                h.s = 1.0 - h.s;
            }
        }
    }

    /// Euclidean distance from `z` to the crosscut.
    pub fn distance(&self, z: Complex64) -> f64 {
        match &self.shape {
            CrosscutShape::Arc { center, radius } => {
                let u = z - *center;
                if u.im >= 0.0 {
                    (u.norm() - radius).abs()
                } else {
                    (u - radius).norm().min((u + radius).norm())
                }
            }
            CrosscutShape::Polyline { points } => {
                points.windows(2).map(|w| point_segment_distance(z, c64(w[0]), c64(w[1]))).fold(f64::INFINITY, f64::min)
            }
        }
    }
}

#[inline]
fn c64(p: [f64; 2]) -> Complex64 {
    Complex64::new(p[0], p[1])
}

fn seg_lengths(points: &[[f64; 2]]) -> Vec<f64> {
    points.windows(2).map(|w| (c64(w[1]) - c64(w[0])).norm()).collect()
}

#[inline]
fn cross(a: Complex64, b: Complex64) -> f64 {
    a.re * b.im - a.im * b.re
}

/// Proper or touching intersection of p→q with a→b as (u, v) positions on
/// each; parallel segments report nothing.
pub fn segment_intersection(p: Complex64, q: Complex64, a: Complex64, b: Complex64) -> Option<(f64, f64)> {
    let r = q - p;
    let s = b - a;
    let denom = cross(r, s);
    if denom == 0.0 {
        return None;
    }
    let ap = a - p;
    let u = cross(ap, s) / denom;
    let v = cross(ap, r) / denom;
    ((0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v)).then_some((u, v))
}

pub fn point_segment_distance(z: Complex64, a: Complex64, b: Complex64) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (z - a).norm();
    }
    let t = (((z - a) * d.conj()).re / len2).clamp(0.0, 1.0);
    (z - (a + d * t)).norm()
}

/// Progress of the well-oriented crossing count for a crosscut pair
/// (ξ₋₁, ξ₁), index 0 and 1 respectively.
#[derive(Clone, Debug, PartialEq)]
pub struct WellOrientedState {
    /// Running maxima R₋₁(t), R₁(t) of parameters visited so far.
    pub progress: [f64; 2],
    pub count: usize,
    /// Crosscut the next crossing must land on.
    pub next_target: usize,
    /// R_target(τ_n), frozen at the last crossing.
    pub frozen: f64,
    pub times: Vec<f64>,
}

impl Default for WellOrientedState {
    fn default() -> Self {
        WellOrientedState { progress: [0.0; 2], count: 0, next_target: 0, frozen: 0.0, times: Vec::new() }
    }
}

impl WellOrientedState {
    /// Feeds the segment a→b traversed over curve times [ta, tb]. Returns
    /// true once `max_n` crossings have been counted.
    pub fn feed(
        &mut self,
        pair: [&Crosscut; 2],
        a: Complex64,
        b: Complex64,
        ta: f64,
        tb: f64,
        include_start: bool,
        max_n: usize,
        scratch: &mut Vec<(f64, f64, usize)>,
    ) -> bool {
        if self.count >= max_n {
            return true;
        }
        scratch.clear();
        let mut hits = Vec::new();
        for (j, xi) in pair.iter().enumerate() {
            hits.clear();
            xi.intersect(a, b, include_start, &mut hits);
            scratch.extend(hits.iter().map(|h| (h.u, h.s, j)));
        }
        // Curve order first, then crosscut parameter.
        scratch.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
        for &(u, s, j) in scratch.iter() {
            if j == self.next_target && s > self.frozen {
                self.count += 1;
                self.times.push(ta + u * (tb - ta));
                self.next_target = 1 - j;
                self.frozen = self.progress[1 - j];
            }
            self.progress[j] = self.progress[j].max(s);
            if self.count >= max_n {
                return true;
            }
        }
        false
    }
}

/// Number of well-oriented (ξ₋₁, ξ₁)-crossings of the polyline `curve`
/// (vertex k at time k), capped at `max_n`, with the crossing times.
pub fn well_oriented_count(
    curve: &[Complex64],
    xi_minus: &Crosscut,
    xi_plus: &Crosscut,
    max_n: usize,
) -> (usize, Vec<f64>) {
    let mut st = WellOrientedState::default();
    let mut scratch = Vec::new();
    for (k, w) in curve.windows(2).enumerate() {
        if st.feed([xi_minus, xi_plus], w[0], w[1], k as f64, (k + 1) as f64, k == 0, max_n, &mut scratch) {
            break;
        }
    }
    (st.count, st.times)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonFixture {
    pub name: String,
    pub curve: Vec<[f64; 2]>,
    /// (ξ₋₁, ξ₁)
    pub outer: [Crosscut; 2],
    /// (ξ̂₋₁, ξ̂₁)
    pub inner: [Crosscut; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonVerdict {
    pub outer_count: usize,
    pub inner_count: usize,
    pub consistent: bool,
}

impl ComparisonFixture {
    pub fn curve_points(&self) -> Vec<Complex64> {
        self.curve.iter().map(|&p| c64(p)).collect()
    }
}

/// Checks count(inner pair) ≥ count(outer pair).
pub fn comparison_check(fixture: &ComparisonFixture) -> ComparisonVerdict {
    let curve = fixture.curve_points();
    let cap = curve.len() * 8 + 8;
    let (outer_count, _) = well_oriented_count(&curve, &fixture.outer[0], &fixture.outer[1], cap);
    let (inner_count, _) = well_oriented_count(&curve, &fixture.inner[0], &fixture.inner[1], cap);
    ComparisonVerdict { outer_count, inner_count, consistent: inner_count >= outer_count }
}

/// Hand-built configuration with 2 outer and 5 inner well-oriented crossings.
pub fn reference_fixture() -> ComparisonFixture {
    let curve = vec![
        [0.0, 0.0],
        [2.5, 0.3],
        [2.5, 1.0],
        [-0.6, 1.0],
        [-0.6, 1.5],
        [3.0, 1.5],
        [3.9, 0.2],
        [4.3, 0.2],
        [4.3, 2.5],
        [-1.5, 2.5],
        [-1.5, 5.0],
        [7.0, 5.0],
        [5.5, 0.5],
    ];
    ComparisonFixture {
        name: "reference".into(),
        curve,
        outer: [Crosscut::ball(4.0, 0.5), Crosscut::strip_closed(-1.0, PI, -9.0).expect("valid strip")],
        inner: [Crosscut::ball(4.0, 2.0), Crosscut::strip_closed(-0.3, 4.5, -10.0).expect("valid strip")],
    }
}

/// Random nested circle/strip configuration with a random simple curve from
/// 0, valid for the comparison principle by construction:
/// y < ŷ < 0 < x − ε̂ < x − ε, π < r̂, and the inner strip encloses the outer
/// one. With `swap` the strips play the role of ξ₋₁.
pub fn random_fixture(seed: u64, index: u64) -> ComparisonFixture {
    let mut rng = path_rng(seed, FIXTURE_STREAM, index);
    let x: f64 = rng.random_range(2.0..6.0);
    let eps_hat = rng.random_range(0.5..(x - 0.3).min(2.5));
    let eps = eps_hat * rng.random_range(0.2..0.8);
    let y_hat = -rng.random_range(0.1..1.0);
    let y = y_hat - rng.random_range(0.1..1.5);
    let r = PI;
    let r_hat = r + rng.random_range(0.2..1.5);
    let left = y - 10.0;
    let left_hat = left - rng.random_range(0.5..2.0);
    let ball = Crosscut::ball(x, eps);
    let ball_hat = Crosscut::ball(x, eps_hat);
    let strip = Crosscut::strip_closed(y, r, left).expect("valid strip");
    let strip_hat = Crosscut::strip_closed(y_hat, r_hat, left_hat).expect("valid strip");
    let swap = rng.random_bool(0.5);
    let curve = random_simple_curve(&mut rng, x, eps, y, r);
    let (outer, inner) =
        if swap { ([strip, ball], [strip_hat, ball_hat]) } else { ([ball, strip], [ball_hat, strip_hat]) };
    ComparisonFixture { name: format!("random-{seed}-{index}"), curve, outer, inner }
}

/// Self-avoiding polyline in H from 0 that wanders alternately towards the
/// ball around x and into the strip left of y.
fn random_simple_curve(rng: &mut impl Rng, x: f64, eps: f64, y: f64, r: f64) -> Vec<[f64; 2]> {
    let mut pts = vec![Complex64::new(0.0, 0.0)];
    let legs = rng.random_range(2..9);
    let mut stuck = 0;
    for leg in 0..legs {
        let target = if leg % 2 == 0 {
            Complex64::new(x + rng.random_range(-1.2..1.2) * eps, rng.random_range(0.05..1.3) * eps)
        } else {
            Complex64::new(y - rng.random_range(0.2..4.0), rng.random_range(0.1..1.4) * r)
        };
        for _ in 0..60 {
            let cur = *pts.last().expect("nonempty");
            let to = target - cur;
            if to.norm() < 0.1 {
                break;
            }
            let len = rng.random_range(0.15..0.9_f64).min(to.norm());
            let ang = to.arg() + rng.random_range(-0.9..0.9);
            let next = cur + Complex64::from_polar(len, ang);
            if next.im <= 1e-3 || crosses_curve(&pts, cur, next) {
                stuck += 1;
                if stuck > 400 {
                    return pts.iter().map(|p| [p.re, p.im]).collect();
                }
                continue;
            }
            pts.push(next);
        }
    }
    pts.iter().map(|p| [p.re, p.im]).collect()
}

fn crosses_curve(pts: &[Complex64], a: Complex64, b: Complex64) -> bool {
    let n = pts.len();
    // Folding back onto the previous segment.
    if n >= 2 && point_segment_distance(b, pts[n - 2], a) < 1e-3 {
        return true;
    }
    // All segments except the one ending at `a`.
    pts[..n.saturating_sub(1)].windows(2).any(|w| segment_intersection(a, b, w[0], w[1]).is_some())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn disjoint_curve_counts_zero() {
        let curve = vec![c(0.0, 0.0), c(0.5, 0.5), c(0.5, 3.0)];
        let (n, t) =
            well_oriented_count(&curve, &Crosscut::ball(3.0, 0.5), &Crosscut::strip(-1.0, PI, -10.0).unwrap(), 10);
        assert_eq!(n, 0);
        assert!(t.is_empty());
    }

    #[test]
    fn zig_zag_counts_two() {
        let curve = vec![c(0.0, 0.0), c(3.0, 0.2), c(3.0, 1.5), c(-2.0, 1.5)];
        let (n, t) =
            well_oriented_count(&curve, &Crosscut::ball(3.0, 0.5), &Crosscut::strip(-1.0, PI, -10.0).unwrap(), 10);
        assert_eq!(n, 2);
        assert!(t[0] < t[1]);
    }

    #[test]
    fn revisit_at_old_parameter_does_not_count() {
        // Crosses the strip at height 1, visits the ball, then crosses the
        // strip again lower down: the second strip visit is not beyond R₁.
        let curve = vec![c(3.0, 0.1), c(-2.0, 1.0), c(-2.0, 2.0), c(3.0, 2.0), c(3.0, 0.3), c(0.0, 0.3), c(-2.0, 0.5)];
        let ball = Crosscut::ball(3.0, 0.5);
        let strip = Crosscut::strip(-1.0, PI, -10.0).unwrap();
        let (n, _) = well_oriented_count(&curve, &strip, &ball, 10);
        assert_eq!(n, 2);
    }

    #[test]
    fn arc_intersections() {
        let ball = Crosscut::ball(0.0, 1.0);
        let mut hits = Vec::new();
        ball.intersect(c(-2.0, 0.5), c(2.0, 0.5), true, &mut hits);
        assert_eq!(hits.len(), 2);
        assert!(hits[0].s < hits[1].s);
        let p = ball.point(hits[0].s);
        assert!((p - c(-(0.75f64).sqrt(), 0.5)).norm() < 1e-12);
        hits.clear();
        ball.intersect(c(-2.0, -0.5), c(2.0, -0.5), true, &mut hits);
        assert!(hits.is_empty());
    }

    #[test]
    fn polyline_point_and_param_agree() {
        let strip = Crosscut::strip(0.0, PI, -5.0).unwrap();
        let mut hits = Vec::new();
        strip.intersect(c(1.0, 1.0), c(-1.0, 1.0), true, &mut hits);
        assert_eq!(hits.len(), 1);
        assert!((strip.point(hits[0].s) - c(0.0, 1.0)).norm() < 1e-12);
        let rev = strip.clone().reversed();
        hits.clear();
        rev.intersect(c(1.0, 1.0), c(-1.0, 1.0), true, &mut hits);
        assert!((rev.point(hits[0].s) - c(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn reference_counts() {
        let f = reference_fixture();
        let v = comparison_check(&f);
        assert_eq!((v.outer_count, v.inner_count), (2, 5));
        assert!(v.consistent);
    }

    #[test]
    fn random_fixtures_are_simple_curves() {
        for i in 0..20 {
            let f = random_fixture(1, i);
            let pts = f.curve_points();
            for a in 0..pts.len().saturating_sub(1) {
                for b in a + 2..pts.len().saturating_sub(1) {
                    assert!(segment_intersection(pts[a], pts[a + 1], pts[b], pts[b + 1]).is_none());
                }
            }
        }
    }
}
