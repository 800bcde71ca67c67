//! Pinned thresholds of the verification suites.

/// FFT coefficients (H, A, b, b-bar, lapA) against direct summation, relative to the field maximum.
pub const ORACLE_COEFF_REL: f64 = 1e-10;
/// `Q(f)` against direct summation.
pub const ORACLE_Q_REL: f64 = 1e-8;
/// Largest points per axis of the oracle grids.
pub const ORACLE_MAX_POINTS: usize = 6;

pub const MASS_DRIFT_REL: f64 = 1e-12;
/// Momentum drift is measured against `sqrt(M E)`, energy drift against `E(0)`.
pub const MOMENTUM_ENERGY_DRIFT_REL: f64 = 1e-6;
/// Coarse drift over fine drift when both resolutions double.
pub const REFINEMENT_GAIN: f64 = 2.0;
/// Drifts below this are treated as converged roundoff in the refinement test.
pub const DRIFT_ROUNDOFF_FLOOR: f64 = 1e-13;

/// Per-step increase of `int f log f` relative to `|S|`.
pub const ENTROPY_STEP_REL: f64 = 1e-8;
/// Faithful-mode entropy balance residual relative to `|Delta S|`.
pub const ENTROPY_BALANCE_REL: f64 = 1e-4;

/// `min alpha_hat` over a run relative to `alpha_hat(0)`.
pub const ELLIPTICITY_RETENTION: f64 = 0.5;
pub const ELLIPTICITY_SAMPLES: usize = 2000;

/// Allowed `d/dt fisher_x / fisher_x(0)`.
pub const FISHER_X_SLOPE_REL: f64 = 1e-6;

pub const FISHER_IDENTITY_GAP: f64 = 0.05;
/// Agreement of the two forms of the lifted operator.
pub const LIFTED_FORMS_REL: f64 = 1e-4;
/// Allowed excess of the commutator-term inequality ratio over 1.
pub const GS24_RATIO_SLACK: f64 = 1e-2;

pub const COMMUTATOR_ABS: f64 = 1e-12;
pub const COMMUTATOR_POINTS: usize = 1000;

pub const GENERIC_RESIDUAL_REL: f64 = 1e-6;
pub const DEGENERACY_REL: f64 = 1e-8;
pub const PAIRING_REL: f64 = 1e-8;
pub const PAIRING_SAMPLES: usize = 20;

/// Per-step slack of the discrete entropy inequality of the implicit scheme.
pub const APP_S_SLACK: f64 = 1e-6;
/// Per-step relative mass change of the implicit scheme.
pub const FAITHFUL_MASS_REL: f64 = 1e-10;

/// Relative spread of the fitted `L^p` rates between two resolutions.
pub const LP_RATE_STABILITY: f64 = 0.25;
/// Absolute allowance for rates that vanish at both resolutions.
pub const LP_RATE_FLOOR: f64 = 1e-3;
