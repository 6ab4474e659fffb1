use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::rk::Rk4;
use super::tau::{check_start, integrate_tau_ltn, Recorder, StepControl, TauOptions};
use super::trajectory::{Event, EventKind, Mode, Recording, TimeScale, Trajectory};
use crate::error::{Error, Result};
use crate::net::{clamp_slice, FlatNet, NetworkSpec};
use crate::tol;

/// Slack on `σ ∈ [0, 1]` for sliding selectors; events fire at twice this.
const SIGMA_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HssOptions {
    /// Macro step in slow time.
    pub h: f64,
    pub band: f64,
    pub event_time: f64,
    /// Localized events within one macro step that count as chattering.
    pub chatter_events: usize,
    /// Member used for the regularized fallback.
    pub tau_big: f64,
    pub choice_seed: u64,
    /// Largest active set enumerated exactly (`3^k` label combinations).
    pub max_active: usize,
    pub recording: Recording,
}

impl Default for HssOptions {
    fn default() -> Self {
        Self {
            h: 1e-3,
            band: tol::SURFACE_BAND,
            event_time: tol::EVENT_TIME,
            chatter_events: 64,
            tau_big: 1e6,
            choice_seed: 0,
            max_active: 8,
            recording: Recording::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Label {
    Minus,
    Plus,
    Slide,
}

/// Active surfaces and the selector values chosen on them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlidingState {
    pub active: Vec<usize>,
    pub sigma: Vec<f64>,
}

impl SlidingState {
    /// Selector at `x` under the default options, taking the first admissible
    /// continuation when several exist.
    pub fn at(spec: &NetworkSpec, x: &DVector<f64>) -> Result<SlidingState> {
        spec.check_dim(x, "SlidingState::at")?;
        let net = FlatNet::new(spec);
        let opts = HssOptions::default();
        let cands = candidates(&net, x.as_slice(), &opts)?;
        let Some(c) = cands.into_iter().next() else {
            return Err(Error::Numerical("no admissible Filippov selector".into()));
        };
        let active: Vec<usize> = (0..net.n).filter(|&i| c.in_band[i]).collect();
        let sigma = active.iter().map(|&i| c.sigma[i]).collect();
        Ok(SlidingState { active, sigma })
    }
}

/// One smooth piece of the inclusion: fixed selectors on `fixed`, tangency on
/// `slide` via `v_S = K v_N`.
#[derive(Debug, Clone)]
struct ModeField {
    labels: Vec<Label>,
    in_band: Vec<bool>,
    fixed: Vec<usize>,
    slide: Vec<usize>,
    k: DMatrix<f64>,
    /// Pseudo-inverse of `A_SS`, used to pull `g_S` back to zero.
    pinv_ss: DMatrix<f64>,
    sigma: Vec<f64>,
}

impl ModeField {
    fn build(net: &FlatNet, labels: Vec<Label>, in_band: Vec<bool>) -> Result<Self> {
        let slide: Vec<usize> = (0..net.n).filter(|&i| labels[i] == Label::Slide).collect();
        let fixed: Vec<usize> = (0..net.n).filter(|&i| labels[i] != Label::Slide).collect();
        let (k, pinv_ss) = if slide.is_empty() {
            (DMatrix::zeros(0, fixed.len()), DMatrix::zeros(0, 0))
        } else {
            let a_ss =
                DMatrix::from_fn(slide.len(), slide.len(), |r, c| net.row(slide[r])[slide[c]]);
            let a_sn =
                DMatrix::from_fn(slide.len(), fixed.len(), |r, c| net.row(slide[r])[fixed[c]]);
            let pinv = a_ss
                .pseudo_inverse(1e-12)
                .map_err(|e| Error::Numerical(e.to_string()))?;
            (-(&pinv * a_sn), pinv)
        };
        Ok(Self {
            labels,
            in_band,
            fixed,
            slide,
            k,
            pinv_ss,
            sigma: vec![0.0; net.n],
        })
    }

    fn velocity(&self, d: &[f64], x: &[f64], out: &mut [f64]) {
        for &i in &self.fixed {
            let s = if self.labels[i] == Label::Plus {
                1.0
            } else {
                0.0
            };
            out[i] = s - d[i] * x[i];
        }
        for (r, &i) in self.slide.iter().enumerate() {
            out[i] = self
                .fixed
                .iter()
                .enumerate()
                .map(|(c, &j)| self.k[(r, c)] * out[j])
                .sum();
        }
    }

    fn sigma_at(&self, d: &[f64], x: &[f64], v: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            out[i] = v[i] + d[i] * x[i];
        }
    }

    /// Remove roundoff drift of `g_S` along the slide set.
    fn pull_to_surface(&self, net: &FlatNet, x: &mut [f64]) {
        if self.slide.is_empty() {
            return;
        }
        let g: DVector<f64> =
            DVector::from_iterator(self.slide.len(), self.slide.iter().map(|&i| net.g_i(i, x)));
        let delta = &self.pinv_ss * g;
        if delta.amax() <= 1e-9 {
            for (r, &i) in self.slide.iter().enumerate() {
                x[i] -= delta[r];
            }
        }
    }

    /// True when the mode has become inconsistent at `x`.
    fn triggered(
        &self,
        net: &FlatNet,
        band: f64,
        x: &[f64],
        v: &mut [f64],
        hit: &mut Vec<usize>,
    ) -> bool {
        hit.clear();
        for &i in &self.fixed {
            let sgn = if self.labels[i] == Label::Plus {
                1.0
            } else {
                -1.0
            };
            let g = sgn * net.g_i(i, x);
            let limit = if self.in_band[i] { -2.0 * band } else { 0.0 };
            if g < limit {
                hit.push(i);
            }
        }
        if !self.slide.is_empty() {
            self.velocity(&net.d, x, v);
            for &i in &self.slide {
                let s = v[i] + net.d[i] * x[i];
                if !(-2.0 * SIGMA_TOL..=1.0 + 2.0 * SIGMA_TOL).contains(&s) {
                    hit.push(i);
                }
            }
        }
        !hit.is_empty()
    }
}

fn candidates(net: &FlatNet, x: &[f64], opts: &HssOptions) -> Result<Vec<ModeField>> {
    let n = net.n;
    let mut g = vec![0.0; n];
    net.g_into(x, &mut g);
    let in_band: Vec<bool> = g.iter().map(|gi| gi.abs() <= opts.band).collect();
    let active: Vec<usize> = (0..n).filter(|&i| in_band[i]).collect();
    let base: Vec<Label> = g
        .iter()
        .map(|&gi| if gi > 0.0 { Label::Plus } else { Label::Minus })
        .collect();
    if active.is_empty() {
        let mut m = ModeField::build(net, base, in_band)?;
        let mut v = vec![0.0; n];
        m.velocity(&net.d, x, &mut v);
        let mut s = vec![0.0; n];
        m.sigma_at(&net.d, x, &v, &mut s);
        m.sigma = s;
        return Ok(vec![m]);
    }
    if active.len() > opts.max_active {
        return Ok(Vec::new());
    }

    let scale = 1.0 + net.a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let w_tol = 1e-10 * scale;
    let mut out: Vec<ModeField> = Vec::new();
    let mut v = vec![0.0; n];
    let combos = 3usize.pow(active.len() as u32);
    for code in 0..combos {
        let mut labels = base.clone();
        let mut c = code;
        for &i in &active {
            labels[i] = [Label::Slide, Label::Minus, Label::Plus][c % 3];
            c /= 3;
        }
        let mut m = ModeField::build(net, labels, in_band.clone())?;
        m.velocity(&net.d, x, &mut v);
        let mut ok = true;
        for &i in &active {
            let w = net.a_dot(i, &v);
            ok &= match m.labels[i] {
                Label::Plus => w >= -w_tol,
                Label::Minus => w <= w_tol,
                Label::Slide => {
                    let s = v[i] + net.d[i] * x[i];
                    w.abs() <= tol::SLIDE_ADMISSIBLE && (-SIGMA_TOL..=1.0 + SIGMA_TOL).contains(&s)
                }
            };
            if !ok {
                break;
            }
        }
        if !ok {
            continue;
        }
        let mut s = vec![0.0; n];
        m.sigma_at(&net.d, x, &v, &mut s);
        m.sigma = s;
        out.push(m);
    }

    // Sliding on a surface that can also be left is not pursued: keep the
    // candidates with the fewest sliding coordinates.
    let fewest = out.iter().map(|m| m.slide.len()).min().unwrap_or(0);
    out.retain(|m| m.slide.len() == fewest);
    let mut unique: Vec<ModeField> = Vec::new();
    for m in out {
        let dup = unique.iter().any(|u| {
            u.sigma
                .iter()
                .zip(&m.sigma)
                .all(|(a, b)| (a - b).abs() <= tol::DEDUP)
        });
        if !dup {
            unique.push(m);
        }
    }
    Ok(unique)
}

fn singular_warning(spec: &NetworkSpec) -> Option<String> {
    let a = spec.a();
    let n = a.nrows();
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let det = a.clone().lu().determinant();
    if det.abs() <= 1e-12 * scale.powi(n as i32) {
        Some(format!(
            "det A = {det:.3e}: outside the invertibility hypothesis of the Filippov limit"
        ))
    } else {
        None
    }
}

/// Event-driven integration of `x' ∈ -Dx + H(Ax+u)` in slow time.
///
/// Each macro step flows an affine piece of the inclusion with RK4. Sign
/// changes and sliding exits are localized by bisection; continuation on
/// the switching set comes from the admissible selector with the fewest
/// sliding coordinates, ties broken by `choice_seed`.
pub fn integrate_hss(
    spec: &NetworkSpec,
    x0: &DVector<f64>,
    s_end: f64,
    opts: &HssOptions,
) -> Result<Trajectory> {
    let h = opts.h;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!("step must be positive, got {h}")));
    }
    if !(s_end >= 0.0 && s_end.is_finite()) {
        return Err(Error::Domain(format!(
            "s_end must be non-negative, got {s_end}"
        )));
    }
    if opts.band < 0.0 || opts.event_time <= 0.0 || opts.chatter_events == 0 {
        return Err(Error::Config("invalid event-detection options".into()));
    }
    check_start(spec, x0, "integrate_hss")?;
    let net = FlatNet::new(spec);
    let n = net.n;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.choice_seed);
    let mut rec = Recorder::new(Mode::Hss, &net.d, 1);
    rec.traj.stats.hypothesis_warning = singular_warning(spec);
    if let Some(w) = &rec.traj.stats.hypothesis_warning {
        log::warn!("integrate_hss: {w}");
    }

    let mut rk = Rk4::new(n);
    let mut x: Vec<f64> = x0.iter().copied().collect();
    let mut trial = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut hit = Vec::new();
    let mut s = 0.0;
    let mut since = opts.recording.every.max(1);
    let mut prev_slide: Vec<bool> = vec![false; n];
    rec.faces(s, &x);

    let tau_opts = TauOptions {
        scale: TimeScale::Slow,
        step: Some(StepControl::Adaptive {
            rtol: 1e-9,
            atol: 1e-12,
            h_init: 1e-7,
            h_min: 1e-16,
            h_max: 1e-4,
        }),
        recording: Recording {
            every: usize::MAX,
            stop_near: None,
        },
    };

    let mut target = 0.0;
    let mut localized = 0usize;
    while s < s_end {
        if s >= target {
            target = (s + h).min(s_end);
            localized = 0;
        }
        let mut cands = candidates(&net, &x, opts)?;
        let record_here = since >= opts.recording.every.max(1);
        if cands.is_empty() || localized >= opts.chatter_events {
            // Regularized fallback until the end of the macro step.
            if record_here {
                rec.push(s, &x);
                rec.traj
                    .selectors
                    .push(fallback_selector(&net, &x, opts.band));
                since = 0;
            }
            let start = DVector::from_column_slice(&x);
            let sub = integrate_tau_ltn(spec, opts.tau_big, &start, target - s, &tau_opts)?;
            x.copy_from_slice(sub.last_state().expect("non-empty").as_slice());
            rec.traj.stats.steps += sub.stats.steps;
            rec.traj.events.push(Event {
                time: s,
                coords: (0..n).collect(),
                kind: EventKind::Fallback,
            });
            rec.traj.stats.fallback_steps += 1;
            prev_slide.iter_mut().for_each(|p| *p = false);
            s = target;
            since += 1;
            rec.faces(s, &x);
            if opts.recording.should_stop(&x) {
                rec.traj.stats.stopped_at = Some(s);
                break;
            }
            continue;
        }
        let pick = if cands.len() > 1 {
            let k = rng.gen_range(0..cands.len());
            let coords = (0..n).filter(|&i| cands[0].in_band[i]).collect();
            rec.traj.events.push(Event {
                time: s,
                coords,
                kind: EventKind::Choice,
            });
            k
        } else {
            0
        };
        let mode = cands.swap_remove(pick);

        let now_slide: Vec<bool> = mode.labels.iter().map(|l| *l == Label::Slide).collect();
        let started: Vec<usize> = (0..n).filter(|&i| now_slide[i] && !prev_slide[i]).collect();
        let ended: Vec<usize> = (0..n).filter(|&i| !now_slide[i] && prev_slide[i]).collect();
        if !started.is_empty() {
            rec.traj.events.push(Event {
                time: s,
                coords: started,
                kind: EventKind::SlideStart,
            });
        }
        if !ended.is_empty() {
            rec.traj.events.push(Event {
                time: s,
                coords: ended,
                kind: EventKind::SlideEnd,
            });
        }
        prev_slide = now_slide;

        if record_here {
            rec.push(s, &x);
            rec.traj
                .selectors
                .push(DVector::from_column_slice(&mode.sigma));
            since = 0;
        }

        let hs = target - s;
        let mut f = |y: &[f64], out: &mut [f64]| mode.velocity(&net.d, y, out);
        rk.step(&mut f, &x, hs, &mut trial);
        let mut full = true;
        if mode.triggered(&net, opts.band, &trial, &mut scratch, &mut hit) {
            let (mut lo, mut hi) = (0.0, hs);
            while hi - lo > opts.event_time {
                let mid = 0.5 * (lo + hi);
                rk.step(&mut f, &x, mid, &mut trial);
                if mode.triggered(&net, opts.band, &trial, &mut scratch, &mut hit) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            rk.step(&mut f, &x, hi, &mut trial);
            mode.triggered(&net, opts.band, &trial, &mut scratch, &mut hit);
            localized += 1;
            let crossed: Vec<usize> = hit
                .iter()
                .copied()
                .filter(|i| !mode.slide.contains(i))
                .collect();
            if !crossed.is_empty() {
                rec.traj.events.push(Event {
                    time: s + hi,
                    coords: crossed,
                    kind: EventKind::SurfaceHit,
                });
            }
            if hi < hs {
                full = false;
                s += hi;
            }
        }
        if full {
            s = target;
        }
        mode.pull_to_surface(&net, &mut trial);
        let moved = clamp_slice(&net.d, &mut trial);
        rec.traj.stats.max_clamp = rec.traj.stats.max_clamp.max(moved);
        std::mem::swap(&mut x, &mut trial);
        rec.traj.stats.steps += 1;
        since += 1;
        rec.faces(s, &x);
        if opts.recording.should_stop(&x) {
            rec.traj.stats.stopped_at = Some(s);
            break;
        }
    }

    if rec.traj.times.last() != Some(&s) {
        let sigma = match candidates(&net, &x, opts)?.into_iter().next() {
            Some(m) => DVector::from_vec(m.sigma),
            None => fallback_selector(&net, &x, opts.band),
        };
        rec.push(s, &x);
        rec.traj.selectors.push(sigma);
    }
    Ok(rec.traj)
}

/// A legal selector at `x` when no affine piece is admissible: the sign
/// selector off the band, the equilibrium value `d_i x_i` on it.
fn fallback_selector(net: &FlatNet, x: &[f64], band: f64) -> DVector<f64> {
    DVector::from_fn(net.n, |i, _| {
        let g = net.g_i(i, x);
        if g > band {
            1.0
        } else if g < -band {
            0.0
        } else {
            (net.d[i] * x[i]).clamp(0.0, 1.0)
        }
    })
}
