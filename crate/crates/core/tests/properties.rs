use armlab::crossing::{bridge_extremes, comparison_check, random_fixture, Variant};
use armlab::lab::{check_recursions, estimate_probability, fit_power_law, EstimateConfig, FitPoint, GridAxis};
use armlab::maps::{halfstrip_f, halfstrip_g, phi, phi_threshold, semidisc_g, SemiDisc};
use armlab::rng::path_rng;
use armlab::{Complex64, DetectConfig, EventSpec, FlowState, Integrator};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn recursions_for_any_kappa(kappa in 4.01f64..7.99) {
        let r = check_recursions(kappa, 5).unwrap();
        prop_assert!(r.max_residual <= 1e-12, "{}", r.max_residual);
    }

    #[test]
    fn fit_recovers_exact_power_law(slope in -3.0f64..3.0, c in 0.1f64..10.0, start in 1e-3f64..1.0, ratio in 1.2f64..4.0) {
        let pts: Vec<FitPoint> = (0..6)
            .map(|k| {
                let g = start * ratio.powi(k);
                let m = c * g.powf(slope);
                FitPoint { grid_value: g, estimate: m, stderr: 0.05 * m }
            })
            .collect();
        let fit = fit_power_law(&pts, Some(slope)).unwrap();
        prop_assert!((fit.slope - slope).abs() < 1e-9);
        prop_assert!((fit.intercept - c.ln()).abs() < 1e-7 * (1.0 + start.ln().abs() * slope.abs()));
    }

    /// Slit steps keep the ordering Y ≤ W ≤ O < g(x), shrink g'(x) and never
    /// decrease g(x) − Y.
    #[test]
    fn slit_flow_invariants(steps in prop::collection::vec((-0.3f64..0.3, 1e-4f64..1e-2), 1..200)) {
        let mut s = FlowState::new(0.0, &[1.0], -1.0, 1e-9).unwrap();
        let mut prev_gap = 2.0;
        for (dw, dt) in steps {
            let w = s.w + dw;
            s.advance(w, dt, Integrator::Slit).unwrap();
            let m = &s.marks[0];
            prop_assert!(s.y_left <= s.w && s.w <= s.o_right);
            prop_assert!(m.deriv > 0.0 && m.deriv <= 1.0);
            if m.swallowed {
                break;
            }
            prop_assert!(s.o_right < m.image);
            let gap = m.image - s.y_left;
            prop_assert!(gap >= prev_gap * (1.0 - 1e-14));
            prev_gap = gap;
        }
    }

    #[test]
    fn bridge_extremes_bracket_endpoints(a in -5.0f64..5.0, b in -5.0f64..5.0, var in 1e-8f64..4.0, seed: u64) {
        let mut rng = path_rng(seed, 0, 0);
        let (hi, lo) = bridge_extremes(a, b, var, &mut rng);
        prop_assert!(hi >= a.max(b) && lo <= a.min(b));
    }

    #[test]
    fn halfstrip_round_trip(re in -6.0f64..6.0, im in 0.01f64..8.0, y in -3.0f64..3.0) {
        let im = if re <= 0.0 && im <= std::f64::consts::PI { im + std::f64::consts::PI } else { im };
        let z = Complex64::new(y + re, im);
        let w = halfstrip_f(y, z).unwrap();
        prop_assert!(w.im >= -1e-12);
        let back = halfstrip_g(y, w).unwrap();
        prop_assert!((back - z).norm() <= 1e-8 * z.norm().max(1.0), "{z} -> {w} -> {back}");
    }

    #[test]
    fn semidisc_maps_real_axis_outward(x0 in -2.0f64..2.0, r in 0.1f64..3.0, d in 0.0f64..10.0, left: bool) {
        let disc = SemiDisc::new(x0, r).unwrap();
        let x = if left { x0 - r - d } else { x0 + r + d };
        let g = semidisc_g(&disc, Complex64::new(x, 0.0)).unwrap();
        prop_assert!(g.im.abs() < 1e-12);
        prop_assert!((g.re - x0).abs() >= (x - x0).abs() - 1e-12);
    }

    #[test]
    fn phi_contracts(x in 4.6f64..200.0) {
        let v = phi(x);
        prop_assert!(v >= 0.0 && v < x);
        prop_assert!(x < phi_threshold() || v >= 0.0);
    }

    #[test]
    fn comparison_fixtures_are_monotone(seed in 0u64..1000, index in 0u64..50) {
        let v = comparison_check(&random_fixture(seed, index));
        prop_assert!(v.consistent, "{v:?}");
    }
}

#[test]
fn estimates_are_deterministic() {
    let cfg = EstimateConfig {
        event: EventSpec { variant: Variant::HOdd, n: 1, epsilon: 0.25, x: 1.0, y: 0.0, kappa: 6.0 },
        axis: GridAxis::Epsilon,
        grid: vec![0.5, 0.25, 0.125],
        paths_per_point: 60,
        seed: 99,
        detect: DetectConfig::default(),
        mode: Default::default(),
        coupled: false,
    };
    let a = serde_json::to_string(&estimate_probability(&cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&estimate_probability(&cfg).unwrap()).unwrap();
    assert_eq!(a, b);
}
