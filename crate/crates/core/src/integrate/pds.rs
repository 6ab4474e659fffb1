use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::rk::Rk4;
use super::tau::{check_start, Recorder};
use super::trajectory::{Mode, Recording, Trajectory};
use crate::error::{Error, Result};
use crate::net::{clamp_slice, FlatNet, NetworkSpec};

/// Scaled distance `d_i x_i` below which a face counts as active.
const FACE: f64 = 1e-12;

/// Predictor used before projecting back onto `X`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdsScheme {
    /// `x ← P_X(x + h(Ax + u))`.
    Euler,
    /// `x ← P_X(RK4 step of ẋ = Π_X(x, Ax + u))`, with every stage point
    /// clamped into `X`. Equilibria are exact fixed points of the step, and
    /// away from face changes it is fourth order.
    Rk4,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PdsOptions {
    pub h: f64,
    pub scheme: PdsScheme,
    pub recording: Recording,
}

impl Default for PdsOptions {
    fn default() -> Self {
        Self {
            h: 1e-3,
            scheme: PdsScheme::Rk4,
            recording: Recording::default(),
        }
    }
}

/// Catching-up scheme: an unconstrained step of the drift followed by the
/// Euclidean projection onto `X`. Feasible by construction.
pub fn integrate_pds(
    spec: &NetworkSpec,
    x0: &DVector<f64>,
    t_end: f64,
    opts: &PdsOptions,
) -> Result<Trajectory> {
    let h = opts.h;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!("step must be positive, got {h}")));
    }
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::Domain(format!(
            "t_end must be non-negative, got {t_end}"
        )));
    }
    check_start(spec, x0, "integrate_pds")?;
    let net = FlatNet::new(spec);
    let mut rec = Recorder::new(Mode::Pds, &net.d, opts.recording.every);
    let mut x: Vec<f64> = x0.iter().copied().collect();
    let mut g = vec![0.0; net.n];
    let mut rk = Rk4::new(net.n);
    let mut yc = vec![0.0; net.n];
    let mut projected = |y: &[f64], out: &mut [f64]| {
        yc.copy_from_slice(y);
        clamp_slice(&net.d, &mut yc);
        net.g_into(&yc, out);
        for i in 0..net.n {
            let s = net.d[i] * yc[i];
            if (s <= FACE && out[i] < 0.0) || (s >= 1.0 - FACE && out[i] > 0.0) {
                out[i] = 0.0;
            }
        }
    };
    let mut t = 0.0;
    rec.push(t, &x);
    rec.faces(t, &x);
    while t < t_end - 1e-12 * h {
        let hs = h.min(t_end - t);
        match opts.scheme {
            PdsScheme::Euler => {
                net.g_into(&x, &mut g);
                for (xi, gi) in x.iter_mut().zip(&g) {
                    *xi += hs * gi;
                }
            }
            PdsScheme::Rk4 => {
                rk.step(&mut projected, &x, hs, &mut g);
                x.copy_from_slice(&g);
            }
        }
        clamp_slice(&net.d, &mut x);
        t += hs;
        rec.traj.stats.steps += 1;
        rec.faces(t, &x);
        if opts.recording.should_stop(&x) {
            rec.traj.stats.stopped_at = Some(t);
            break;
        }
        rec.step(t, &x);
    }
    rec.finish(t, &x);
    Ok(rec.traj)
}
