//! Endpoint Lyapunov functions and descent audits along trajectories.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cert::DiagonalCertificate;
use crate::error::{Error, Result};
use crate::integrate::{
    integrate_hss, integrate_pds, integrate_tau_ltn, HssOptions, Mode, PdsOptions, Recording,
    StepControl, TauOptions, TimeScale, Trajectory,
};
use crate::net::{neg, pos, NetworkSpec};
use crate::tol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LyapunovKind {
    /// `V_Λ(x) = ½ Σ λ_i (x_i - x*_i)²`, decaying at `2μ` in fast time.
    FastVLambda,
    /// `V_∞`, decaying at `d_min` in slow time.
    SlowVInfinity,
}

impl LyapunovKind {
    pub fn name(self) -> &'static str {
        match self {
            LyapunovKind::FastVLambda => "fast_v_lambda",
            LyapunovKind::SlowVInfinity => "slow_v_infinity",
        }
    }

    /// Whether the theory predicts the envelope for trajectories of `mode`.
    pub fn guaranteed_for(self, mode: &Mode) -> bool {
        matches!(
            (self, mode),
            (LyapunovKind::FastVLambda, Mode::Pds) | (LyapunovKind::SlowVInfinity, Mode::Hss)
        )
    }
}

fn check_lambda(spec: &NetworkSpec, cert: &DiagonalCertificate) -> Result<()> {
    if cert.lambda.len() != spec.n() {
        return Err(Error::Config(format!(
            "certificate has {} weights, spec has n = {}",
            cert.lambda.len(),
            spec.n()
        )));
    }
    Ok(())
}

pub fn v_fast(
    spec: &NetworkSpec,
    cert: &DiagonalCertificate,
    x_star: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<f64> {
    check_lambda(spec, cert)?;
    spec.check_dim(x_star, "v_fast")?;
    spec.check_dim(x, "v_fast")?;
    Ok(0.5
        * cert
            .lambda
            .iter()
            .zip(x.iter().zip(x_star.iter()))
            .map(|(l, (a, b))| l * (a - b) * (a - b))
            .sum::<f64>())
}

/// Closed form `Σ λ_i ((g_i)_+(1 - d_i x_i) + (g_i)_- d_i x_i)`.
pub fn v_slow(spec: &NetworkSpec, cert: &DiagonalCertificate, x: &DVector<f64>) -> Result<f64> {
    check_lambda(spec, cert)?;
    spec.check_dim(x, "v_slow")?;
    Ok(v_slow_unchecked(spec, &cert.lambda, x))
}

fn v_slow_unchecked(spec: &NetworkSpec, lambda: &[f64], x: &DVector<f64>) -> f64 {
    let g = spec.drift(x);
    let d = spec.d();
    (0..x.len())
        .map(|i| {
            let y = d[i] * x[i];
            lambda[i] * (pos(g[i]) * (1.0 - y) + neg(g[i]) * y)
        })
        .sum()
}

/// A Lipschitz constant of `V_∞` on `X` in the Euclidean norm, from the
/// gradients of its affine-quadratic pieces.
pub fn v_slow_lipschitz(spec: &NetworkSpec, cert: &DiagonalCertificate) -> Result<f64> {
    check_lambda(spec, cert)?;
    let a = spec.a();
    let d = spec.d();
    let u = spec.u();
    let mut total = 0.0;
    for i in 0..spec.n() {
        let row_norm = a.row(i).norm();
        let g_max: f64 = (0..spec.n()).map(|j| a[(i, j)].abs() / d[j]).sum::<f64>() + u[i].abs();
        total += cert.lambda[i] * (row_norm + d[i] * g_max);
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    pub v: f64,
    pub bound: f64,
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentReport {
    pub kind: LyapunovKind,
    pub mode: Mode,
    /// `μ` for the fast function, `d_min` for the slow one.
    pub mu_or_dmin: f64,
    pub rate: f64,
    /// Times in the function's own time variable.
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `V(t_0) e^{-rate (t - t_0)}`.
    pub envelope: Vec<f64>,
    pub normalized: Vec<f64>,
    pub violations: Vec<Violation>,
    pub guarantee_expected: bool,
}

impl DescentReport {
    /// Largest `v / bound - 1` among violations, 0 when there are none.
    pub fn severity(&self) -> f64 {
        self.violations
            .iter()
            .map(|v| v.v / v.bound - 1.0)
            .fold(0.0, f64::max)
    }

    pub fn max_excess(&self) -> f64 {
        self.violations.iter().map(|v| v.excess).fold(0.0, f64::max)
    }
}

/// Convert trajectory times into the time variable of `kind`.
fn audit_times(traj: &Trajectory, kind: LyapunovKind) -> Vec<f64> {
    let factor = match (kind, traj.mode) {
        (
            LyapunovKind::FastVLambda,
            Mode::TauLtn {
                tau,
                scale: TimeScale::Slow,
            },
        ) => tau,
        (
            LyapunovKind::SlowVInfinity,
            Mode::TauLtn {
                tau,
                scale: TimeScale::Fast,
            },
        ) => 1.0 / tau,
        _ => 1.0,
    };
    traj.times.iter().map(|t| t * factor).collect()
}

/// Evaluate `kind` along `traj` and check every ordered pair of samples
/// against the exponential envelope `V(t_2) ≤ e^{-rate (t_2 - t_1)} V(t_1)`.
/// Samples below the numerical floor are neither audited nor used as
/// reference points.
pub fn audit_descent(
    spec: &NetworkSpec,
    traj: &Trajectory,
    kind: LyapunovKind,
    cert: Option<&DiagonalCertificate>,
    x_star: &DVector<f64>,
) -> Result<DescentReport> {
    let cert = cert.ok_or_else(|| Error::Config("descent audit requires a certificate".into()))?;
    check_lambda(spec, cert)?;
    spec.check_dim(x_star, "audit_descent")?;
    let (mu_or_dmin, rate) = match kind {
        LyapunovKind::FastVLambda => (cert.mu, 2.0 * cert.mu),
        LyapunovKind::SlowVInfinity => (spec.d_min(), spec.d_min()),
    };
    let times = audit_times(traj, kind);
    let values: Vec<f64> = traj
        .states
        .iter()
        .map(|x| match kind {
            LyapunovKind::FastVLambda => v_fast(spec, cert, x_star, x),
            LyapunovKind::SlowVInfinity => Ok(v_slow_unchecked(spec, &cert.lambda, x)),
        })
        .collect::<Result<_>>()?;
    let (t0, v0) = (
        times.first().copied().unwrap_or(0.0),
        values.first().copied().unwrap_or(0.0),
    );
    let envelope = times
        .iter()
        .map(|t| v0 * (-rate * (t - t0)).exp())
        .collect();
    let normalized = values
        .iter()
        .map(|v| if v0 > 0.0 { v / v0 } else { 0.0 })
        .collect();

    // min_j (ln V_j + rate t_j) over earlier audited samples.
    let mut best = f64::INFINITY;
    let mut violations = Vec::new();
    for (&t, &v) in times.iter().zip(&values) {
        if v < tol::LYAPUNOV_FLOOR {
            continue;
        }
        if best.is_finite() {
            let bound = (best - rate * t).exp();
            if v > bound * (1.0 + tol::VIOLATION_REL) + tol::VIOLATION_ABS {
                violations.push(Violation {
                    t,
                    v,
                    bound,
                    excess: v - bound,
                });
            }
        }
        best = best.min(v.ln() + rate * t);
    }
    Ok(DescentReport {
        kind,
        mode: traj.mode,
        mu_or_dmin,
        rate,
        times,
        values,
        envelope,
        normalized,
        violations,
        guarantee_expected: kind.guaranteed_for(&traj.mode),
    })
}

/// Integration settings for [`descent_matrix_study`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyOptions {
    /// Horizon for the fast limit and members with `τ < 1` (fast time).
    pub t_end_fast: f64,
    /// Horizon for the slow limit and members with `τ ≥ 1` (slow time).
    pub s_end_slow: f64,
    pub pds_h: f64,
    pub hss: HssOptions,
    pub rtol: f64,
    pub atol: f64,
    /// Keep traces in the reports (large for long runs).
    pub keep_traces: bool,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            t_end_fast: 20.0,
            s_end_slow: 60.0,
            pds_h: 1e-3,
            hss: HssOptions::default(),
            rtol: 1e-10,
            atol: 1e-13,
            keep_traces: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "tau", rename_all = "snake_case")]
pub enum StudyMode {
    Pds,
    Tau(f64),
    Hss,
}

impl StudyMode {
    pub fn label(&self) -> String {
        match self {
            StudyMode::Pds => "pds".into(),
            StudyMode::Tau(t) => format!("tau={t}"),
            StudyMode::Hss => "hss".into(),
        }
    }

    /// Position on the timescale axis: PDS first, HSS last.
    pub fn order_key(&self) -> f64 {
        match self {
            StudyMode::Pds => 0.0,
            StudyMode::Tau(t) => *t,
            StudyMode::Hss => f64::INFINITY,
        }
    }
}

pub fn integrate_study_mode(
    spec: &NetworkSpec,
    mode: StudyMode,
    x0: &DVector<f64>,
    opts: &StudyOptions,
) -> Result<Trajectory> {
    match mode {
        StudyMode::Pds => integrate_pds(
            spec,
            x0,
            opts.t_end_fast,
            &PdsOptions {
                h: opts.pds_h,
                ..Default::default()
            },
        ),
        StudyMode::Hss => integrate_hss(spec, x0, opts.s_end_slow, &opts.hss),
        StudyMode::Tau(tau) => {
            let (scale, end) = if tau < 1.0 {
                (TimeScale::Fast, opts.t_end_fast)
            } else {
                (TimeScale::Slow, opts.s_end_slow)
            };
            let step = StepControl::Adaptive {
                rtol: opts.rtol,
                atol: opts.atol,
                h_init: 1e-6,
                h_min: 1e-15,
                h_max: 1e-2,
            };
            integrate_tau_ltn(
                spec,
                tau,
                x0,
                end,
                &TauOptions {
                    scale,
                    step: Some(step),
                    recording: Recording::default(),
                },
            )
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DescentCell {
    pub mode: StudyMode,
    pub kind: LyapunovKind,
    pub guarantee_expected: bool,
    /// "guaranteed" on the diagonal, "no guarantee expected" elsewhere.
    pub label: String,
    pub violation_count: usize,
    pub max_excess: f64,
    pub severity: f64,
    pub reports: Vec<DescentReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DescentStudy {
    pub cells: Vec<DescentCell>,
}

impl DescentStudy {
    pub fn cell(&self, mode: StudyMode, kind: LyapunovKind) -> Option<&DescentCell> {
        self.cells.iter().find(|c| c.mode == mode && c.kind == kind)
    }
}

/// Run every mode from every `x0`, and audit both functions on each run.
pub fn descent_matrix_study(
    spec: &NetworkSpec,
    cert: &DiagonalCertificate,
    x_star: &DVector<f64>,
    taus: &[f64],
    x0s: &[DVector<f64>],
    opts: &StudyOptions,
) -> Result<DescentStudy> {
    check_lambda(spec, cert)?;
    if x0s.is_empty() {
        return Err(Error::Config(
            "descent study needs at least one initial state".into(),
        ));
    }
    let mut modes = vec![StudyMode::Pds];
    modes.extend(taus.iter().map(|&t| StudyMode::Tau(t)));
    modes.push(StudyMode::Hss);
    let jobs: Vec<(usize, &DVector<f64>)> = (0..modes.len())
        .flat_map(|m| x0s.iter().map(move |x| (m, x)))
        .collect();
    let runs: Vec<(usize, Trajectory)> = jobs
        .par_iter()
        .map(|&(m, x0)| integrate_study_mode(spec, modes[m], x0, opts).map(|t| (m, t)))
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for (m, &mode) in modes.iter().enumerate() {
        for kind in [LyapunovKind::FastVLambda, LyapunovKind::SlowVInfinity] {
            let mut reports = Vec::new();
            for (_, traj) in runs.iter().filter(|(k, _)| *k == m) {
                let mut r = audit_descent(spec, traj, kind, Some(cert), x_star)?;
                if !opts.keep_traces {
                    r.times.clear();
                    r.values.clear();
                    r.envelope.clear();
                    r.normalized.clear();
                }
                reports.push(r);
            }
            let guarantee_expected = reports.first().is_some_and(|r| r.guarantee_expected);
            cells.push(DescentCell {
                mode,
                kind,
                guarantee_expected,
                label: if guarantee_expected {
                    "guaranteed"
                } else {
                    "no guarantee expected"
                }
                .into(),
                violation_count: reports.iter().map(|r| r.violations.len()).sum(),
                max_excess: reports
                    .iter()
                    .map(DescentReport::max_excess)
                    .fold(0.0, f64::max),
                severity: reports
                    .iter()
                    .map(DescentReport::severity)
                    .fold(0.0, f64::max),
                reports,
            });
        }
    }
    Ok(DescentStudy { cells })
}
