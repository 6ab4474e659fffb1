use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::net::RegimePattern;

/// Which time variable a trajectory is expressed in: fast time `t` or slow
/// time `s = t/τ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeScale {
    Fast,
    Slow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Mode {
    TauLtn { tau: f64, scale: TimeScale },
    Pds,
    Hss,
}

impl Mode {
    pub fn label(&self) -> String {
        match self {
            Mode::TauLtn { tau, .. } => format!("tau={tau}"),
            Mode::Pds => "pds".into(),
            Mode::Hss => "hss".into(),
        }
    }

    /// Native time variable of the integrator output.
    pub fn time_scale(&self) -> TimeScale {
        match self {
            Mode::TauLtn { scale, .. } => *scale,
            Mode::Pds => TimeScale::Fast,
            Mode::Hss => TimeScale::Slow,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    /// A coordinate reached its switching surface `g_i = 0`.
    SurfaceHit,
    SlideStart,
    SlideEnd,
    /// A coordinate touched a face of `X` (or was clamped back onto it).
    BoundaryContact,
    /// Several Filippov continuations were admissible; one was drawn from the
    /// choice seed.
    Choice,
    /// Chattering detected; the regularized member took over for one macro step.
    Fallback,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::SurfaceHit => "surface_hit",
            EventKind::SlideStart => "slide_start",
            EventKind::SlideEnd => "slide_end",
            EventKind::BoundaryContact => "boundary_contact",
            EventKind::Choice => "choice",
            EventKind::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub coords: Vec<usize>,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrationStats {
    pub steps: usize,
    pub rejected_steps: usize,
    /// Largest post-step projection back into `X`.
    pub max_clamp: f64,
    /// Steps whose clamp exceeded ten times the local truncation estimate.
    pub clamp_exceedances: usize,
    pub fallback_steps: usize,
    /// Set when the run violated a hypothesis of the underlying theory
    /// (e.g. singular `A` for the hard-selector limit).
    pub hypothesis_warning: Option<String>,
    /// Time at which the run stopped because it reached its target, if any.
    pub stopped_at: Option<f64>,
}

/// Time-stamped states with regime annotations and events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub mode: Mode,
    pub times: Vec<f64>,
    #[serde(with = "crate::serde_util::dvec_list")]
    pub states: Vec<DVector<f64>>,
    pub regimes: Vec<RegimePattern>,
    pub events: Vec<Event>,
    /// Selector `σ ∈ H(g(x))` applied on the step leaving each sample
    /// (hard-selector runs only); velocity is `σ - Dx`.
    #[serde(with = "crate::serde_util::dvec_list", default)]
    pub selectors: Vec<DVector<f64>>,
    pub stats: IntegrationStats,
}

impl Trajectory {
    pub(crate) fn new(mode: Mode) -> Self {
        Self {
            mode,
            times: Vec::new(),
            states: Vec::new(),
            regimes: Vec::new(),
            events: Vec::new(),
            selectors: Vec::new(),
            stats: IntegrationStats::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> Option<&DVector<f64>> {
        self.states.last()
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Sup-norm distance of every sample to `target`.
    pub fn distances(&self, target: &DVector<f64>) -> Vec<f64> {
        self.states.iter().map(|x| (x - target).amax()).collect()
    }

    /// Write `time,x1..xn,regime,event`, one row per stored sample. Events are
    /// attached to the first sample at or after their time, `;`-separated.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.states.first().map_or(0, |x| x.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["time".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.push("regime".into());
        header.push("event".into());
        w.write_record(&header)?;

        let mut ev = 0;
        for (k, (&t, x)) in self.times.iter().zip(&self.states).enumerate() {
            let mut names = Vec::new();
            while ev < self.events.len() && self.events[ev].time <= t {
                let e = &self.events[ev];
                let coords: Vec<String> = e.coords.iter().map(|c| (c + 1).to_string()).collect();
                names.push(format!("{}[{}]", e.kind.name(), coords.join("|")));
                ev += 1;
            }
            let mut row = vec![format!("{t:e}")];
            row.extend(x.iter().map(|v| format!("{v:e}")));
            row.push(self.regimes.get(k).map(|r| r.code()).unwrap_or_default());
            row.push(names.join(";"));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Shared recording and early-stop options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Recording {
    /// Keep every `every`-th accepted step (the first and last are always kept).
    pub every: usize,
    /// Stop once the sup-norm distance to `target` falls below `radius`.
    #[serde(skip)]
    pub stop_near: Option<(DVector<f64>, f64)>,
}

impl Default for Recording {
    fn default() -> Self {
        Self {
            every: 1,
            stop_near: None,
        }
    }
}

impl Recording {
    pub(crate) fn should_stop(&self, x: &[f64]) -> bool {
        match &self.stop_near {
            Some((target, r)) => x.iter().zip(target.iter()).all(|(a, b)| (a - b).abs() < *r),
            None => false,
        }
    }
}
