//! Equilibria of the family: exact solve by enumerating regime patterns,
//! a fixed-point cross-check, and the τ-independence audit.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::project_tangent;
use crate::net::{
    regime_of, sat, slow_field_pointwise_banded, tau_field_unchecked, NetworkSpec, Regime,
    RegimePattern,
};
use crate::tol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveMethod {
    Enumeration,
    FixedPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPoint {
    #[serde(with = "crate::serde_util::dvec")]
    pub state: DVector<f64>,
    pub pattern: RegimePattern,
    /// `‖f_1(x*)‖∞`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub points: Vec<EquilibriumPoint>,
    pub method: SolveMethod,
    /// Patterns whose linear block was singular and were skipped.
    pub singular_patterns: Vec<RegimePattern>,
}

impl EquilibriumResult {
    pub fn unique(&self) -> Option<&EquilibriumPoint> {
        match self.points.as_slice() {
            [p] => Some(p),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EnumerationConfig {
    pub max_dim: usize,
    /// Slack on the case inequalities.
    pub tol: f64,
    pub dedup: f64,
}

impl Default for EnumerationConfig {
    fn default() -> Self {
        Self {
            max_dim: 12,
            tol: tol::EQUILIBRIUM,
            dedup: tol::DEDUP,
        }
    }
}

/// `‖-Dx + [Wx+u]_0^1‖∞`.
pub fn ltn_residual(spec: &NetworkSpec, x: &DVector<f64>) -> f64 {
    let s = spec.synaptic_input(x);
    (0..spec.n())
        .map(|i| (-spec.d()[i] * x[i] + sat(s[i], 1.0)).abs())
        .fold(0.0, f64::max)
}

/// Check the case conditions coordinate by coordinate:
/// `Lo ⇒ g_i ≤ tol, d_i x_i ≤ tol`; `Lin ⇒ |g_i| ≤ tol, d_i x_i ∈ [-tol, 1+tol]`;
/// `Hi ⇒ g_i ≥ -tol, |d_i x_i - 1| ≤ tol`.
pub fn satisfies_case_conditions(
    spec: &NetworkSpec,
    x: &DVector<f64>,
    pattern: &RegimePattern,
    tol: f64,
) -> bool {
    let g = spec.drift(x);
    pattern.labels().iter().enumerate().all(|(i, r)| {
        let y = spec.d()[i] * x[i];
        match r {
            Regime::Lo => g[i] <= tol && y.abs() <= tol,
            Regime::Lin => g[i].abs() <= tol && y >= -tol && y <= 1.0 + tol,
            Regime::Hi => g[i] >= -tol && (y - 1.0).abs() <= tol,
        }
    })
}

/// Solve one pattern: pin `Lo`/`Hi` coordinates to the faces and solve
/// `(Ax+u)_i = 0` on the `Lin` block. `Err(())` marks a singular block.
fn solve_pattern(
    spec: &NetworkSpec,
    pattern: &RegimePattern,
) -> std::result::Result<DVector<f64>, ()> {
    let n = spec.n();
    let a = spec.a();
    let mut x = DVector::zeros(n);
    let mut lin = Vec::new();
    for (i, r) in pattern.labels().iter().enumerate() {
        match r {
            Regime::Lo => x[i] = 0.0,
            Regime::Hi => x[i] = 1.0 / spec.d()[i],
            Regime::Lin => lin.push(i),
        }
    }
    if lin.is_empty() {
        return Ok(x);
    }
    let m = lin.len();
    let block = DMatrix::from_fn(m, m, |r, c| a[(lin[r], lin[c])]);
    let rhs = DVector::from_fn(m, |r, _| {
        let i = lin[r];
        let fixed: f64 = (0..n)
            .filter(|j| !lin.contains(j))
            .map(|j| a[(i, j)] * x[j])
            .sum();
        -(spec.u()[i] + fixed)
    });
    let lu = block.lu();
    // Relative pivot test: a numerically singular block is a degenerate face.
    let scale = a.amax().max(1.0);
    let min_pivot = lu
        .u()
        .diagonal()
        .iter()
        .map(|v| v.abs())
        .fold(f64::INFINITY, f64::min);
    if min_pivot <= 1e-12 * scale {
        return Err(());
    }
    let sol = lu.solve(&rhs).ok_or(())?;
    for (r, &i) in lin.iter().enumerate() {
        x[i] = sol[r];
    }
    Ok(x)
}

fn lex_cmp(a: &DVector<f64>, b: &DVector<f64>) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Solve `Dx = [Wx+u]_0^1` exactly by visiting all `3^n` regime patterns.
///
/// Accepted points satisfy the case conditions within `config.tol`; points
/// closer than `config.dedup` are merged, keeping the lexicographically first
/// pattern. Output is sorted lexicographically by state.
pub fn solve_by_enumeration(
    spec: &NetworkSpec,
    config: &EnumerationConfig,
) -> Result<EquilibriumResult> {
    let n = spec.n();
    if n > config.max_dim {
        return Err(Error::Config(format!(
            "enumeration over 3^{n} patterns exceeds the limit n ≤ {}",
            config.max_dim
        )));
    }
    let total = RegimePattern::count(n);
    let outcomes: Vec<(RegimePattern, std::result::Result<DVector<f64>, ()>)> = (0..total)
        .into_par_iter()
        .map(|idx| {
            let p = RegimePattern::from_index(n, idx);
            let sol = solve_pattern(spec, &p);
            (p, sol)
        })
        .collect();

    let mut singular = Vec::new();
    let mut accepted: Vec<(DVector<f64>, RegimePattern)> = Vec::new();
    for (p, sol) in outcomes {
        match sol {
            Err(()) => {
                log::debug!("pattern {p} has a singular linear block; skipped");
                singular.push(p);
            }
            Ok(x) => {
                if satisfies_case_conditions(spec, &x, &p, config.tol) {
                    accepted.push((x, p));
                }
            }
        }
    }
    if !singular.is_empty() {
        log::info!("{} of {total} patterns skipped as singular", singular.len());
    }

    // Patterns are already in lexicographic order, so the first pattern wins
    // when two patterns land on the same point.
    let mut points: Vec<(DVector<f64>, RegimePattern)> = Vec::new();
    for (x, p) in accepted {
        if !points.iter().any(|(q, _)| (q - &x).amax() < config.dedup) {
            points.push((x, p));
        }
    }
    points.sort_by(|a, b| lex_cmp(&a.0, &b.0));

    Ok(EquilibriumResult {
        points: points
            .into_iter()
            .map(|(state, pattern)| EquilibriumPoint {
                residual: ltn_residual(spec, &state),
                state,
                pattern,
            })
            .collect(),
        method: SolveMethod::Enumeration,
        singular_patterns: singular,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedPointConfig {
    pub max_iters: usize,
    /// Stop once `‖x_{k+1} - x_k‖∞ < tol`.
    pub tol: f64,
    /// Starting relaxation `τ` of `T_τ`; `1.0` is the plain map `D^{-1}[Wx+u]_0^1`.
    pub initial_tau: f64,
    pub min_tau: f64,
    /// Iterations per relaxation level before deciding whether to back off.
    pub block: usize,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            max_iters: 200_000,
            tol: 1e-13,
            initial_tau: 1.0,
            min_tau: 1e-4,
            block: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FixedPointOutcome {
    Converged {
        result: EquilibriumResult,
        iterations: usize,
        /// Relaxation in effect when the iteration converged.
        tau: f64,
    },
    NotConverged {
        #[serde(with = "crate::serde_util::dvec")]
        last: DVector<f64>,
        iterations: usize,
        last_step: f64,
    },
}

impl FixedPointOutcome {
    pub fn point(&self) -> Option<&DVector<f64>> {
        match self {
            FixedPointOutcome::Converged { result, .. } => result.points.first().map(|p| &p.state),
            FixedPointOutcome::NotConverged { .. } => None,
        }
    }
}

/// `T_τ(x) = D^{-1}[Dx + τ(Ax+u)]_0^1`. Its fixed points are the equilibria
/// for every `τ > 0`; `T_1` is `D^{-1}[Wx+u]_0^1`.
fn relaxed_map(spec: &NetworkSpec, tau: f64, x: &DVector<f64>) -> DVector<f64> {
    let d = spec.d();
    if tau == 1.0 {
        let s = spec.synaptic_input(x);
        return DVector::from_fn(spec.n(), |i, _| sat(s[i], 1.0) / d[i]);
    }
    let g = spec.drift(x);
    DVector::from_fn(spec.n(), |i, _| sat(d[i] * x[i] + tau * g[i], 1.0) / d[i])
}

/// Fixed-point iteration cross-check.
///
/// Starts with `T = D^{-1}[Wx+u]_0^1`. That map is not a contraction in
/// general, so when a block of iterations fails to halve the step, the
/// relaxation `τ` is halved and the iteration continues with `T_τ`, which has
/// the same fixed points. Non-convergence is an outcome, not an error.
pub fn solve_by_fixed_point(
    spec: &NetworkSpec,
    x0: &DVector<f64>,
    config: &FixedPointConfig,
) -> Result<FixedPointOutcome> {
    spec.check_dim(x0, "solve_by_fixed_point")?;
    if !spec.polytope().contains(x0, tol::MEMBERSHIP) {
        return Err(Error::Domain("solve_by_fixed_point: x0 outside X".into()));
    }
    if !(config.initial_tau > 0.0 && config.min_tau > 0.0 && config.block > 0) {
        return Err(Error::Config(
            "fixed-point relaxation parameters must be positive".into(),
        ));
    }
    let mut x = x0.clone();
    let mut tau = config.initial_tau;
    let mut step = f64::INFINITY;
    let mut block_start_step = f64::INFINITY;
    for k in 1..=config.max_iters {
        let next = relaxed_map(spec, tau, &x);
        step = (&next - &x).amax();
        x = next;
        if step < config.tol {
            let pattern = regime_of(spec, &x, tol::EQUILIBRIUM);
            return Ok(FixedPointOutcome::Converged {
                result: EquilibriumResult {
                    points: vec![EquilibriumPoint {
                        residual: ltn_residual(spec, &x),
                        state: x,
                        pattern,
                    }],
                    method: SolveMethod::FixedPoint,
                    singular_patterns: Vec::new(),
                },
                iterations: k,
                tau,
            });
        }
        if k % config.block == 0 {
            // NaN steps count as stalled.
            let stalled =
                step.partial_cmp(&(0.5 * block_start_step)) != Some(std::cmp::Ordering::Less);
            if stalled && tau > config.min_tau {
                tau = (tau * 0.5).max(config.min_tau);
                log::trace!(
                    "fixed point: relaxing to τ = {tau} after {k} iterations (step {step:.3e})"
                );
            }
            block_start_step = step;
        }
    }
    Ok(FixedPointOutcome::NotConverged {
        last: x,
        iterations: config.max_iters,
        last_step: step,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauResidual {
    pub tau: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauIndependenceReport {
    pub per_tau: Vec<TauResidual>,
    /// `‖Π_X(x, Ax+u)‖∞`.
    pub pds_residual: f64,
    /// `‖F_∞(x)‖∞`.
    pub slow_residual: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Check that `x` is a rest point of every listed member and of both limits.
pub fn verify_tau_independence(
    spec: &NetworkSpec,
    taus: &[f64],
    x: &DVector<f64>,
    tol: f64,
) -> Result<TauIndependenceReport> {
    spec.check_dim(x, "verify_tau_independence")?;
    if let Some(t) = taus.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(Error::Domain(format!(
            "τ must be positive and finite, got {t}"
        )));
    }
    let per_tau: Vec<TauResidual> = taus
        .iter()
        .map(|&tau| TauResidual {
            tau,
            residual: tau_field_unchecked(spec, tau, x).amax(),
        })
        .collect();
    let g = spec.drift(x);
    let pds_residual = project_tangent(spec, x, &g, tol::MEMBERSHIP).amax();
    let slow_residual = slow_field_pointwise_banded(spec, x, tol::ZERO_BAND).amax();
    let passed =
        per_tau.iter().all(|r| r.residual <= tol) && pds_residual <= tol && slow_residual <= tol;
    Ok(TauIndependenceReport {
        per_tau,
        pds_residual,
        slow_residual,
        tol,
        passed,
    })
}
