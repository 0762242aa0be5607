//! Experiments: probability estimation over parameter grids, exponent fits
//! and the statistical verification suites.

pub mod estimate;
pub mod exponents;
pub mod fit;
pub mod selftest;
pub mod verify;

pub use estimate::{estimate_probability, geometric_grid, EstimateConfig, EstimateResult, PathOutcome, PointEstimate};
pub use exponents::{
    alpha_hat, alpha_plus, check_recursions, predicted_exponent, predicted_slope, u1, u2, ExponentKind, ExponentTable,
    GridAxis, RecursionReport, RecursionResidual,
};
pub use fit::{fit_power_law, ExponentFit, FitPoint};
pub use selftest::{
    harmonic_measure_check, loewner_check, loewner_closed_form_error, map_identities, maps_selftest, phi_bound,
    strip_grid, CheckResult, ClosedFormError,
};
pub use verify::{
    girsanov_check, invariant_density_test, martingale_drift_test, moment_scaling_test, stationary_beta, DensityReport,
    GirsanovReport, MartingaleReport, MomentConfig, MomentKind, MomentResult,
};
