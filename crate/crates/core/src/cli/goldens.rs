//! Constants pinned from the first trusted run at the default seed. The
//! inequalities under test hold with unspecified universal constants, so the
//! checks assert stability against these values.

/// Bound on `|epsilon_n| * n` for the exponential profile.
pub const ISO_EXP_EPS_TIMES_N: f64 = 6.0;

/// Bound on `|epsilon'_n| * sqrt(n)` for the polynomial profile.
pub const ISO_POLY_EPS_TIMES_SQRT_N: f64 = 1.2;

/// Bound on `sup_t |F_exp(t) - F_poly(t)| * sqrt(n)` for the radial CDFs.
pub const ISO_SUP_DISTANCE_TIMES_SQRT_N: f64 = 0.02;

/// Constant in `ks <= C * sum |theta_k|^3 + dkw_floor` on `B_{1/2}^n`.
pub const CLT_BERRY_ESSEEN: f64 = 0.08;

/// Constant in `ks(theta . Y, G W) <= C / sqrt(n) + 3 dkw_floor`.
pub const COUNTEREXAMPLE_GW: f64 = 0.05;

/// Required slope window for the diagonal CLT rate fit.
pub const CLT_SLOPE_TARGET: f64 = -0.5;
pub const CLT_SLOPE_TOLERANCE: f64 = 0.15;

/// Required decay slope for the isotropy error and the shell deficit.
pub const ISO_MAX_SLOPE: f64 = -0.9;

/// Lemma checks: spread allowed around the first dimension of the sweep.
pub const LEMMA_VARIANCE_FACTOR: f64 = 2.0;
pub const LEMMA_MOMENT_SPREAD: f64 = 0.20;

/// Gaussian controls.
pub const GAUSSIAN_VARIANCE_RATIO: f64 = 2.0;
pub const GAUSSIAN_VARIANCE_REL_TOL: f64 = 0.05;
pub const GAUSSIAN_Q3_REL_TOL: f64 = 0.01;

/// Minimum probability in the chi concentration check.
pub const CHI_MIN_PROBABILITY: f64 = 0.999;
