//! Default numerical tolerances shared by the modules.
//!
//! Every threshold that appears in a contract lives here so tests and the
//! harness pin the same numbers.

/// Absolute band around zero used when classifying the sign of `(Ax+u)_i`.
pub const ZERO_BAND: f64 = 1e-10;

/// Slack on `d_i x_i ∈ [0, 1]` when testing membership of the state polytope.
pub const MEMBERSHIP: f64 = 1e-9;

/// A certificate is valid only when `λ_max(AᵀΛ + ΛA) < -CERT_EPS`.
pub const CERT_EPS: f64 = 1e-8;

/// Inequality slack for the equilibrium case conditions.
pub const EQUILIBRIUM: f64 = 1e-9;

/// Points closer than this (sup norm) are the same equilibrium.
pub const DEDUP: f64 = 1e-9;

/// Residual `‖f_τ(x*)‖∞` accepted when checking that `x*` is an equilibrium.
pub const EQUILIBRIUM_RESIDUAL: f64 = 1e-9;

/// Width of the switching-surface band `|g_i| ≤ SURFACE_BAND` for the
/// hard-selector integrator.
pub const SURFACE_BAND: f64 = 1e-8;

/// Event localization resolution in time.
pub const EVENT_TIME: f64 = 1e-12;

/// A sliding selector is admissible when the tangency residual is below this.
pub const SLIDE_ADMISSIBLE: f64 = 1e-6;

/// Relative and absolute slack before a Lyapunov sample counts as a violation.
pub const VIOLATION_REL: f64 = 1e-6;
pub const VIOLATION_ABS: f64 = 1e-10;

/// Lyapunov values below this are not audited.
pub const LYAPUNOV_FLOOR: f64 = 1e-12;

/// Monte-Carlo convergence threshold on the final sup-norm distance.
pub const CONVERGENCE: f64 = 1e-5;

/// Upper bound for the violation severity of a Lyapunov trace whose bound
/// collapsed to zero; keeps reports finite.
pub const MAX_SEVERITY: f64 = 1e300;
