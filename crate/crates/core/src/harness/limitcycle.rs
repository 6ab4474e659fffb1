use std::fs::File;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{x0_or_centre, LimitCycleConfig, RunDir};
use crate::equilibrium::{solve_by_enumeration, EnumerationConfig};
use crate::error::Result;
use crate::integrate::{
    integrate_hss, integrate_pds, integrate_tau_ltn, PdsOptions, TauOptions, TimeScale, Trajectory,
};
use crate::lyapunov::StudyMode;
use crate::net::NetworkSpec;

/// Hysteresis on `g_1` when detecting section crossings.
const SECTION_BAND: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeOrbitReport {
    pub mode: StudyMode,
    pub time_scale: TimeScale,
    /// Largest sup norm along the run.
    pub max_norm: f64,
    pub bounded: bool,
    /// Final sup-norm distance to each equilibrium.
    pub final_distances: Vec<f64>,
    pub converged: bool,
    /// The state never moved.
    pub degenerate: bool,
    /// Upward crossings of `(Ax+u)_1 = 0` after the transient.
    pub crossings: usize,
    pub return_distances: Vec<f64>,
    pub last_return_distance: Option<f64>,
    pub period: Option<f64>,
}

impl ModeOrbitReport {
    pub fn oscillates(&self, return_tol: f64) -> bool {
        self.bounded
            && !self.converged
            && !self.degenerate
            && self.last_return_distance.is_some_and(|d| d < return_tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCycleReport {
    #[serde(with = "crate::serde_util::dvec")]
    pub x0: DVector<f64>,
    #[serde(with = "crate::serde_util::dvec_list")]
    pub equilibria: Vec<DVector<f64>>,
    pub modes: Vec<ModeOrbitReport>,
}

impl LimitCycleReport {
    pub fn oscillation_persists(&self, return_tol: f64) -> bool {
        self.modes.iter().all(|m| m.oscillates(return_tol))
    }
}

fn run_mode(
    spec: &NetworkSpec,
    mode: StudyMode,
    x0: &DVector<f64>,
    cfg: &LimitCycleConfig,
) -> Result<Trajectory> {
    match mode {
        StudyMode::Pds => integrate_pds(spec, x0, cfg.horizon, &PdsOptions::default()),
        StudyMode::Hss => integrate_hss(spec, x0, cfg.horizon, &cfg.hss),
        StudyMode::Tau(tau) => {
            integrate_tau_ltn(spec, tau, x0, cfg.horizon, &TauOptions::default())
        }
    }
}

/// Upward crossings of `g_1 = 0`, located by linear interpolation in `g_1`.
fn section_crossings(spec: &NetworkSpec, traj: &Trajectory) -> Vec<(f64, DVector<f64>)> {
    let a = spec.a();
    let u1 = spec.u()[0];
    let g1 = |x: &DVector<f64>| {
        a.row(0)
            .iter()
            .zip(x.iter())
            .map(|(p, q)| p * q)
            .sum::<f64>()
            + u1
    };
    let mut out = Vec::new();
    let mut armed = false;
    let mut prev: Option<(f64, f64, &DVector<f64>)> = None;
    for (&t, x) in traj.times.iter().zip(&traj.states) {
        let g = g1(x);
        if g < -SECTION_BAND {
            armed = true;
        } else if g > SECTION_BAND && armed {
            armed = false;
            if let Some((tp, gp, xp)) = prev {
                let w = if g != gp {
                    (-gp / (g - gp)).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                out.push((tp + w * (t - tp), xp + (x - xp) * w));
            }
        }
        prev = Some((t, g, x));
    }
    out
}

pub fn analyze_orbit(
    spec: &NetworkSpec,
    mode: StudyMode,
    traj: &Trajectory,
    equilibria: &[DVector<f64>],
    cfg: &LimitCycleConfig,
) -> ModeOrbitReport {
    let max_norm = traj.states.iter().map(|x| x.amax()).fold(0.0, f64::max);
    let bound = spec.d().iter().map(|d| 1.0 / d).fold(0.0, f64::max);
    let last = traj.last_state().expect("non-empty trajectory");
    let final_distances: Vec<f64> = equilibria.iter().map(|e| (last - e).amax()).collect();
    let converged = final_distances.iter().any(|&d| d <= cfg.convergence_tol);
    let first = &traj.states[0];
    let degenerate = traj.states.iter().all(|x| (x - first).amax() <= 1e-12);
    let late: Vec<(f64, DVector<f64>)> = section_crossings(spec, traj)
        .into_iter()
        .filter(|(t, _)| *t >= cfg.transient)
        .collect();
    let return_distances: Vec<f64> = late
        .windows(2)
        .map(|w| (&w[1].1 - &w[0].1).amax())
        .collect();
    let period = (late.len() >= 2).then(|| late[late.len() - 1].0 - late[late.len() - 2].0);
    ModeOrbitReport {
        mode,
        time_scale: traj.mode.time_scale(),
        max_norm,
        bounded: max_norm <= bound * (1.0 + 1e-8),
        final_distances,
        converged,
        degenerate,
        crossings: late.len(),
        last_return_distance: return_distances.last().copied(),
        return_distances,
        period,
    }
}

/// Run every configured mode from one initial state and measure whether the
/// orbit settles on a periodic cycle. Trajectories are persisted when `out`
/// is given (every tenth sample).
pub fn run_limit_cycle_study(
    spec: &NetworkSpec,
    cfg: &LimitCycleConfig,
    out: Option<&RunDir>,
) -> Result<LimitCycleReport> {
    let x0 = x0_or_centre(spec, &cfg.x0)?;
    let equilibria: Vec<DVector<f64>> = solve_by_enumeration(spec, &EnumerationConfig::default())?
        .points
        .into_iter()
        .map(|p| p.state)
        .collect();
    let runs: Vec<(StudyMode, Trajectory)> = cfg
        .modes
        .par_iter()
        .map(|&m| run_mode(spec, m, &x0, cfg).map(|t| (m, t)))
        .collect::<Result<_>>()?;
    let mut modes = Vec::new();
    for (m, traj) in &runs {
        modes.push(analyze_orbit(spec, *m, traj, &equilibria, cfg));
        if let Some(dir) = out {
            let mut thin = traj.clone();
            let keep: Vec<usize> = (0..traj.len())
                .filter(|k| k % 10 == 0 || *k + 1 == traj.len())
                .collect();
            thin.times = keep.iter().map(|&k| traj.times[k]).collect();
            thin.states = keep.iter().map(|&k| traj.states[k].clone()).collect();
            thin.regimes = keep.iter().map(|&k| traj.regimes[k].clone()).collect();
            thin.write_csv(File::create(dir.trajectory_path(&m.label()))?)?;
        }
    }
    Ok(LimitCycleReport {
        x0,
        equilibria,
        modes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_network_converges_without_returns() {
        let s = NetworkSpec::from_rows(&[&[0.0, -1.6], &[1.6, 0.0]], &[0.8, 1.0], &[1.0, -1.0])
            .unwrap();
        let cfg = LimitCycleConfig {
            modes: vec![StudyMode::Tau(1.0), StudyMode::Pds],
            horizon: 40.0,
            transient: 20.0,
            ..Default::default()
        };
        let r = run_limit_cycle_study(&s, &cfg, None).unwrap();
        for m in &r.modes {
            assert!(m.converged && m.bounded && !m.degenerate);
            assert!(m.last_return_distance.is_none());
        }
        assert!(!r.oscillation_persists(1e-2));
    }

    #[test]
    fn equilibrium_start_is_degenerate() {
        let s = NetworkSpec::from_rows(&[&[0.0, -1.6], &[1.6, 0.0]], &[0.8, 1.0], &[1.0, -1.0])
            .unwrap();
        let xs = vec![2.6 / 3.36, 0.8 / 3.36];
        let cfg = LimitCycleConfig {
            modes: vec![StudyMode::Pds],
            x0: xs,
            horizon: 1.0,
            transient: 0.5,
            ..Default::default()
        };
        let r = run_limit_cycle_study(&s, &cfg, None).unwrap();
        assert!(r.modes[0].degenerate);
    }
}
