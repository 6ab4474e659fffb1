use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::rk::{Dopri5, Rk4};
use super::trajectory::{Event, EventKind, Mode, Recording, TimeScale, Trajectory};
use crate::error::{Error, Result};
use crate::net::{clamp_slice, regime_of_slice, sat, FlatNet, NetworkSpec};
use crate::tol;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepControl {
    Fixed {
        h: f64,
    },
    Adaptive {
        rtol: f64,
        atol: f64,
        h_init: f64,
        h_min: f64,
        h_max: f64,
    },
}

impl StepControl {
    /// Fixed step `1e-3 · min(1, τ)` in fast time, expressed in the requested scale.
    pub fn default_for(tau: f64, scale: TimeScale) -> Self {
        let h_fast = 1e-3 * tau.min(1.0);
        let h = match scale {
            TimeScale::Fast => h_fast,
            TimeScale::Slow => h_fast / tau,
        };
        StepControl::Fixed { h }
    }

    pub fn adaptive(rtol: f64, atol: f64) -> Self {
        StepControl::Adaptive {
            rtol,
            atol,
            h_init: 1e-4,
            h_min: 1e-14,
            h_max: 0.1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TauOptions {
    pub scale: TimeScale,
    /// `None` selects [`StepControl::default_for`].
    pub step: Option<StepControl>,
    pub recording: Recording,
}

impl Default for TauOptions {
    fn default() -> Self {
        Self {
            scale: TimeScale::Fast,
            step: None,
            recording: Recording::default(),
        }
    }
}

/// `f_τ` (fast time) or `F_τ = τ f_τ` (slow time) on flat slices.
fn tau_rhs(net: &FlatNet, tau: f64, scale: TimeScale) -> impl FnMut(&[f64], &mut [f64]) + '_ {
    let inv = match scale {
        TimeScale::Fast => 1.0 / tau,
        TimeScale::Slow => 1.0,
    };
    move |x: &[f64], out: &mut [f64]| {
        for i in 0..net.n {
            let y = net.d[i] * x[i];
            let g = net.g_i(i, x);
            out[i] = (-y + sat(y + tau * g, 1.0)) * inv;
        }
    }
}

pub(crate) fn check_start(spec: &NetworkSpec, x0: &DVector<f64>, what: &str) -> Result<()> {
    spec.check_dim(x0, what)?;
    if !spec.polytope().contains(x0, tol::MEMBERSHIP) {
        return Err(Error::Domain(format!(
            "{what}: initial state outside X (excursion {:.3e})",
            spec.polytope().excursion(x0)
        )));
    }
    Ok(())
}

pub(crate) struct Recorder<'a> {
    pub traj: Trajectory,
    every: usize,
    since: usize,
    d: &'a [f64],
    on_face: Vec<bool>,
}

impl<'a> Recorder<'a> {
    pub fn new(mode: Mode, d: &'a [f64], every: usize) -> Self {
        Self {
            traj: Trajectory::new(mode),
            every: every.max(1),
            since: 0,
            d,
            on_face: vec![false; d.len()],
        }
    }

    pub fn push(&mut self, t: f64, x: &[f64]) {
        self.traj.times.push(t);
        self.traj.states.push(DVector::from_column_slice(x));
        self.traj
            .regimes
            .push(regime_of_slice(self.d, x, tol::MEMBERSHIP));
    }

    /// Record after an accepted step, honoring the stride.
    pub fn step(&mut self, t: f64, x: &[f64]) {
        self.since += 1;
        if self.since >= self.every {
            self.since = 0;
            self.push(t, x);
        }
    }

    /// Ensure the final state is stored.
    pub fn finish(&mut self, t: f64, x: &[f64]) {
        if self.traj.times.last() != Some(&t) {
            self.push(t, x);
        }
    }

    /// Emit `BoundaryContact` for coordinates that newly sit on a face.
    pub fn faces(&mut self, t: f64, x: &[f64]) {
        let mut hit = Vec::new();
        for (i, (&xi, &di)) in x.iter().zip(self.d).enumerate() {
            let y = di * xi;
            let on = y <= tol::MEMBERSHIP || y >= 1.0 - tol::MEMBERSHIP;
            if on && !self.on_face[i] {
                hit.push(i);
            }
            self.on_face[i] = on;
        }
        if !hit.is_empty() {
            self.traj.events.push(Event {
                time: t,
                coords: hit,
                kind: EventKind::BoundaryContact,
            });
        }
    }
}

/// Integrate the τ-member from `x0` up to `t_end` (in the time variable of
/// `opts.scale`). States are projected back into `X` after every step; the
/// projection size is compared against a local truncation estimate.
pub fn integrate_tau_ltn(
    spec: &NetworkSpec,
    tau: f64,
    x0: &DVector<f64>,
    t_end: f64,
    opts: &TauOptions,
) -> Result<Trajectory> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Domain(format!(
            "τ must be positive and finite, got {tau}"
        )));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::Domain(format!(
            "t_end must be non-negative, got {t_end}"
        )));
    }
    check_start(spec, x0, "integrate_tau_ltn")?;
    let net = FlatNet::new(spec);
    let n = net.n;
    let mut f = tau_rhs(&net, tau, opts.scale);
    let mode = Mode::TauLtn {
        tau,
        scale: opts.scale,
    };
    let mut rec = Recorder::new(mode, &net.d, opts.recording.every);

    let mut x: Vec<f64> = x0.iter().copied().collect();
    let mut next = vec![0.0; n];
    let mut t = 0.0;
    rec.push(t, &x);
    rec.faces(t, &x);

    match opts
        .step
        .unwrap_or_else(|| StepControl::default_for(tau, opts.scale))
    {
        StepControl::Fixed { h } => {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Config(format!("step must be positive, got {h}")));
            }
            let mut rk = Rk4::new(n);
            let mut half = vec![0.0; n];
            let mut twice = vec![0.0; n];
            while t < t_end - 1e-12 * h {
                let hs = h.min(t_end - t);
                rk.step(&mut f, &x, hs, &mut next);
                let moved = clamp_slice(&net.d, &mut next);
                if moved > 0.0 {
                    // Step-doubling estimate of the local error.
                    rk.step(&mut f, &x, 0.5 * hs, &mut half);
                    rk.step(&mut f, &half, 0.5 * hs, &mut twice);
                    clamp_slice(&net.d, &mut twice);
                    let lte = next
                        .iter()
                        .zip(&twice)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                        / 15.0;
                    if moved > 10.0 * lte + 1e-15 {
                        rec.traj.stats.clamp_exceedances += 1;
                    }
                    rec.traj.stats.max_clamp = rec.traj.stats.max_clamp.max(moved);
                }
                std::mem::swap(&mut x, &mut next);
                t += hs;
                rec.traj.stats.steps += 1;
                rec.faces(t, &x);
                if opts.recording.should_stop(&x) {
                    rec.traj.stats.stopped_at = Some(t);
                    break;
                }
                rec.step(t, &x);
            }
        }
        StepControl::Adaptive {
            rtol,
            atol,
            h_init,
            h_min,
            h_max,
        } => {
            if !(rtol > 0.0 && atol > 0.0 && h_init > 0.0 && h_min > 0.0 && h_max >= h_min) {
                return Err(Error::Config(
                    "adaptive step parameters must be positive".into(),
                ));
            }
            let mut dp = Dopri5::new(n);
            let mut h = h_init.min(h_max);
            while t < t_end - 1e-12 * h_min.max(1e-300) {
                let hs = h.min(t_end - t);
                let err = dp.step(&mut f, &x, hs, rtol, atol, &mut next);
                if err <= 1.0 {
                    let moved = clamp_slice(&net.d, &mut next);
                    if moved > 0.0 {
                        let lte = err * (atol + rtol);
                        if moved > 10.0 * lte + 1e-15 {
                            rec.traj.stats.clamp_exceedances += 1;
                        }
                        rec.traj.stats.max_clamp = rec.traj.stats.max_clamp.max(moved);
                    }
                    std::mem::swap(&mut x, &mut next);
                    t += hs;
                    rec.traj.stats.steps += 1;
                    rec.faces(t, &x);
                    if opts.recording.should_stop(&x) {
                        rec.traj.stats.stopped_at = Some(t);
                        break;
                    }
                    rec.step(t, &x);
                } else {
                    rec.traj.stats.rejected_steps += 1;
                }
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                h = (hs * factor).min(h_max);
                if h < h_min {
                    rec.finish(t, &x);
                    return Err(Error::Integration {
                        time: t,
                        reason: format!("step size underflow ({h:.3e} < {h_min:.3e})"),
                        partial: Box::new(rec.traj),
                    });
                }
            }
        }
    }
    rec.finish(t, &x);
    Ok(rec.traj)
}
