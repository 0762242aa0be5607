//! Boundary arm exponents α_j⁺ and α̂_j⁺, the functions u₁, u₂ and the
//! recursions linking consecutive exponents.

use serde::{Deserialize, Serialize};

use crate::crossing::Variant;
use crate::error::{ArmlabError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentKind {
    /// α_j⁺ for κ < 8.
    AlphaPlusLt8,
    /// α_j⁺ for κ ≥ 8.
    AlphaPlusGe8,
    /// α̂_j⁺, κ ∈ (4, 8).
    AlphaHat,
}

impl ExponentKind {
    /// The α⁺ branch valid at `kappa`.
    pub fn alpha_plus_for(kappa: f64) -> Self {
        if kappa < 8.0 {
            ExponentKind::AlphaPlusLt8
        } else {
            ExponentKind::AlphaPlusGe8
        }
    }

    fn check(self, kappa: f64) -> Result<()> {
        let ok = kappa > 0.0
            && match self {
                ExponentKind::AlphaPlusLt8 => kappa < 8.0,
                ExponentKind::AlphaPlusGe8 => kappa >= 8.0,
                ExponentKind::AlphaHat => kappa > 4.0 && kappa < 8.0,
            };
        if ok {
            Ok(())
        } else {
            Err(ArmlabError::Regime { kappa, what: format!("{self:?} exponents") })
        }
    }
}

/// α_j⁺ (κ<8, κ≥8 branches) or α̂_j⁺ for j ≥ 0; index 0 gives 0.
pub fn predicted_exponent(kind: ExponentKind, kappa: f64, j: usize) -> Result<f64> {
    kind.check(kappa)?;
    if j == 0 {
        return Ok(0.0);
    }
    let n = j.div_ceil(2) as f64;
    let odd = j % 2 == 1;
    let v = match (kind, odd) {
        (ExponentKind::AlphaPlusLt8, true) => n * (4.0 * n + 4.0 - kappa) / kappa,
        (ExponentKind::AlphaPlusLt8, false) => n * (4.0 * n + 8.0 - kappa) / kappa,
        (ExponentKind::AlphaPlusGe8, true) => (n - 1.0) * (4.0 * n + kappa - 8.0) / kappa,
        (ExponentKind::AlphaPlusGe8, false) => n * (4.0 * n + kappa - 8.0) / kappa,
        (ExponentKind::AlphaHat, true) => n * (4.0 * n + kappa - 8.0) / kappa,
        (ExponentKind::AlphaHat, false) => n * (4.0 * n + kappa - 4.0) / kappa,
    };
    Ok(v)
}

/// α_j⁺ on the branch matching κ.
pub fn alpha_plus(kappa: f64, j: usize) -> Result<f64> {
    predicted_exponent(ExponentKind::alpha_plus_for(kappa), kappa, j)
}

pub fn alpha_hat(kappa: f64, j: usize) -> Result<f64> {
    predicted_exponent(ExponentKind::AlphaHat, kappa, j)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentTable {
    pub kind: ExponentKind,
    pub kappa: f64,
    /// values[j] = exponent with index j, starting at j = 0.
    pub values: Vec<f64>,
}

impl ExponentTable {
    pub fn new(kind: ExponentKind, kappa: f64, j_max: usize) -> Result<Self> {
        let values = (0..=j_max).map(|j| predicted_exponent(kind, kappa, j)).collect::<Result<Vec<_>>>()?;
        Ok(ExponentTable { kind, kappa, values })
    }
}

pub fn u1(kappa: f64, lambda: f64) -> f64 {
    let a = 4.0 - kappa / 2.0;
    (a + (4.0 * kappa * lambda + a * a).sqrt()) / kappa
}

pub fn u2(kappa: f64, lambda: f64) -> f64 {
    let a = kappa / 2.0 - 2.0;
    (a + (4.0 * kappa * lambda + a * a).sqrt()) / kappa
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecursionResidual {
    pub identity: String,
    pub n: usize,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecursionReport {
    pub kappa: f64,
    pub n_max: usize,
    pub residuals: Vec<RecursionResidual>,
    pub max_residual: f64,
}

/// Evaluates both sides of
///   u₂(α_{2n−1}⁺) = α_{2n}⁺ − α_{2n−1}⁺,   α_{2n+1}⁺ = u₁(α_{2n}⁺) + α_{2n}⁺,
///   α̂_{2n}⁺ = u₁(α̂_{2n−1}⁺) + α̂_{2n−1}⁺,  α̂_{2n+1}⁺ = u₂(α̂_{2n}⁺) + α̂_{2n}⁺
/// for n = 1..=n_max. Requires κ ∈ (4, 8).
pub fn check_recursions(kappa: f64, n_max: usize) -> Result<RecursionReport> {
    ExponentKind::AlphaHat.check(kappa)?;
    let a = |j| alpha_plus(kappa, j);
    let h = |j| alpha_hat(kappa, j);
    let mut residuals = Vec::new();
    for n in 1..=n_max {
        let rows = [
            ("u2(a[2n-1]) = a[2n] - a[2n-1]", u2(kappa, a(2 * n - 1)?), a(2 * n)? - a(2 * n - 1)?),
            ("a[2n+1] = u1(a[2n]) + a[2n]", a(2 * n + 1)?, u1(kappa, a(2 * n)?) + a(2 * n)?),
            ("ah[2n] = u1(ah[2n-1]) + ah[2n-1]", h(2 * n)?, u1(kappa, h(2 * n - 1)?) + h(2 * n - 1)?),
            ("ah[2n+1] = u2(ah[2n]) + ah[2n]", h(2 * n + 1)?, u2(kappa, h(2 * n)?) + h(2 * n)?),
        ];
        for (identity, lhs, rhs) in rows {
            residuals.push(RecursionResidual { identity: identity.to_string(), n, lhs, rhs });
        }
    }
    let max_residual = residuals.iter().map(|r| (r.lhs - r.rhs).abs()).fold(0.0, f64::max);
    Ok(RecursionReport { kappa, n_max, residuals, max_residual })
}

/// Which parameter a grid varies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridAxis {
    /// ε varies; x and y fixed.
    Epsilon,
    /// ε varies with x = ratio·ε; y fixed.
    EpsilonTiedX { ratio: f64 },
    /// r = x/(x − y) varies; x and ε fixed.
    Ratio,
}

/// Slope of log P against log(grid value) implied by the two-parameter
/// asymptotics (x/(x−y))^a (ε/x)^b of each event.
pub fn predicted_slope(variant: Variant, n: usize, kappa: f64, axis: GridAxis) -> Result<f64> {
    if n == 0 {
        return Err(ArmlabError::param("n must be positive"));
    }
    // (exponent of x/(x−y), exponent of ε/x)
    let (a, b) = match variant {
        Variant::HOdd | Variant::HpiOdd => (alpha_plus(kappa, 2 * n - 2)?, alpha_plus(kappa, 2 * n - 1)?),
        Variant::HEven | Variant::HpiEven => (alpha_plus(kappa, 2 * n)?, alpha_plus(kappa, 2 * n - 1)?),
        Variant::HhatOdd => (alpha_hat(kappa, 2 * n - 1)?, alpha_hat(kappa, 2 * n - 2)?),
        Variant::HhatEven => (alpha_hat(kappa, 2 * n - 1)?, alpha_hat(kappa, 2 * n)?),
    };
    match axis {
        GridAxis::Epsilon => Ok(b),
        GridAxis::EpsilonTiedX { .. } => Ok(a),
        GridAxis::Ratio if variant.is_pi() => {
            Err(ArmlabError::param("the x − y dependence of H^π events is not a pure power; use an ε axis"))
        }
        GridAxis::Ratio => Ok(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kappa6_table() {
        let t = ExponentTable::new(ExponentKind::AlphaPlusLt8, 6.0, 8).unwrap();
        for (j, v) in t.values.iter().enumerate() {
            assert_relative_eq!(*v, (j * (j + 1)) as f64 / 6.0, max_relative = 1e-15);
        }
        assert_relative_eq!(alpha_hat(6.0, 1).unwrap(), 1.0 / 3.0);
        assert_relative_eq!(alpha_hat(6.0, 2).unwrap(), 1.0);
        assert_eq!(predicted_exponent(ExponentKind::AlphaPlusGe8, 8.0, 1).unwrap(), 0.0);
        assert!(predicted_exponent(ExponentKind::AlphaHat, 3.0, 1).is_err());
        assert!(predicted_exponent(ExponentKind::AlphaPlusLt8, 9.0, 1).is_err());
    }

    #[test]
    fn u_functions() {
        assert_relative_eq!(u1(6.0, 0.0), 1.0 / 3.0, max_relative = 1e-15);
        assert_eq!(u1(10.0, 0.0), 0.0);
        assert_relative_eq!(u2(6.0, 0.0), 1.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(u1(6.0, 1.0), 1.0, max_relative = 1e-15);
        // u₁ solves κu² − (8 − κ)u − 4λ = 0.
        for &(k, l) in &[(5.0, 0.3), (6.0, 2.0), (7.5, 0.01)] {
            let u = u1(k, l);
            assert!((k * u * u - (8.0 - k) * u - 4.0 * l).abs() < 1e-12);
        }
    }

    #[test]
    fn recursions_hold() {
        for &k in &[4.5, 5.0, 6.0, 16.0 / 3.0, 7.0] {
            let r = check_recursions(k, 5).unwrap();
            assert_eq!(r.residuals.len(), 20);
            assert!(r.max_residual <= 1e-12, "κ={k}: {}", r.max_residual);
        }
        let r = check_recursions(6.0, 1).unwrap();
        assert_relative_eq!(r.residuals[0].lhs, 2.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(r.residuals[1].lhs, 2.0, max_relative = 1e-15);
        assert!(check_recursions(3.0, 2).is_err());
    }

    #[test]
    fn slopes() {
        let s = |v, n, axis| predicted_slope(v, n, 6.0, axis).unwrap();
        assert_relative_eq!(s(Variant::HOdd, 1, GridAxis::Epsilon), 1.0 / 3.0);
        assert_relative_eq!(s(Variant::HEven, 1, GridAxis::EpsilonTiedX { ratio: 2.0 }), 1.0);
        assert_relative_eq!(s(Variant::HhatOdd, 1, GridAxis::Ratio), 1.0 / 3.0);
        assert_eq!(s(Variant::HhatOdd, 1, GridAxis::Epsilon), 0.0);
        assert_relative_eq!(predicted_slope(Variant::HOdd, 1, 16.0 / 3.0, GridAxis::Epsilon).unwrap(), 0.5);
        assert_relative_eq!(predicted_slope(Variant::HpiOdd, 1, 3.0, GridAxis::Epsilon).unwrap(), 5.0 / 3.0);
        assert!(predicted_slope(Variant::HpiOdd, 1, 3.0, GridAxis::Ratio).is_err());
    }
}
