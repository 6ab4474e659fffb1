use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cert::SamplerConfig;
use crate::error::{Error, Result};
use crate::integrate::HssOptions;
use crate::lyapunov::StudyMode;
use crate::net::{NetworkSpec, SpecJson};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    MonteCarlo,
    FieldGrid,
    DescentStudy,
    LimitCycle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecSource {
    Inline(SpecJson),
    File(PathBuf),
}

impl SpecSource {
    pub fn load(&self) -> Result<NetworkSpec> {
        match self {
            SpecSource::Inline(raw) => NetworkSpec::try_from(raw.clone()),
            SpecSource::File(path) => NetworkSpec::from_json(&fs::read_to_string(path)?),
        }
    }
}

/// Step and horizon settings that override the integrator defaults in batch
/// runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegratorOverrides {
    /// Fixed RK4 step for τ-members, in the member's native time.
    pub tau_h: f64,
    pub pds_h: f64,
    pub hss_h: f64,
    /// Horizon is `horizon_factor / d_min`.
    pub horizon_factor: f64,
    pub convergence_tol: f64,
    /// Runs stop once within this sup-norm distance of the equilibrium.
    pub early_stop: f64,
}

impl Default for IntegratorOverrides {
    fn default() -> Self {
        Self {
            tau_h: 1e-2,
            pds_h: 1e-2,
            hss_h: 1e-2,
            horizon_factor: 100.0,
            convergence_tol: crate::tol::CONVERGENCE,
            early_stop: 1e-7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonteCarloConfig {
    pub dimensions: Vec<usize>,
    pub samples: usize,
    pub initial_conditions: usize,
    pub modes: Vec<StudyMode>,
    pub sampler: SamplerConfig,
    pub overrides: IntegratorOverrides,
    /// Extra networks pushed through the certification gate alongside the
    /// random draws.
    pub injected: Vec<SpecJson>,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            dimensions: vec![3, 4, 5],
            samples: 200,
            initial_conditions: 5,
            modes: vec![StudyMode::Tau(1.0), StudyMode::Pds, StudyMode::Hss],
            sampler: SamplerConfig::default(),
            overrides: IntegratorOverrides::default(),
            injected: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldConfig {
    pub modes: Vec<StudyMode>,
    pub resolution: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            modes: vec![
                StudyMode::Tau(1e-4),
                StudyMode::Tau(1.0),
                StudyMode::Tau(1e4),
            ],
            resolution: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DescentConfig {
    pub taus: Vec<f64>,
    pub x0: Vec<Vec<f64>>,
    pub t_end_fast: f64,
    pub s_end_slow: f64,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            taus: vec![1e-3, 1.0, 1e3],
            x0: Vec::new(),
            t_end_fast: 20.0,
            s_end_slow: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimitCycleConfig {
    pub modes: Vec<StudyMode>,
    /// Empty means the centre of `X`.
    pub x0: Vec<f64>,
    pub horizon: f64,
    /// Crossings before this time are transient.
    pub transient: f64,
    /// Distance to an equilibrium below which a run counts as converged.
    pub convergence_tol: f64,
    pub hss: HssOptions,
}

impl Default for LimitCycleConfig {
    fn default() -> Self {
        Self {
            modes: vec![
                StudyMode::Tau(0.2),
                StudyMode::Tau(1.0),
                StudyMode::Tau(2.0),
                StudyMode::Pds,
                StudyMode::Hss,
            ],
            x0: Vec::new(),
            horizon: 100.0,
            transient: 50.0,
            convergence_tol: 1e-3,
            hss: HssOptions::default(),
        }
    }
}

/// One experiment: what to run, on which network, with which seed, and
/// where to write. Sub-configurations for other kinds are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub spec: Option<SpecSource>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub monte_carlo: MonteCarloConfig,
    #[serde(default)]
    pub field: FieldConfig,
    #[serde(default)]
    pub descent: DescentConfig,
    #[serde(default)]
    pub limit_cycle: LimitCycleConfig,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            seed: None,
            spec: None,
            output_dir: None,
            monte_carlo: MonteCarloConfig::default(),
            field: FieldConfig::default(),
            descent: DescentConfig::default(),
            limit_cycle: LimitCycleConfig::default(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ExperimentKind::MonteCarlo => {
                if self.seed.is_none() {
                    return Err(Error::Config("Monte-Carlo runs require a seed".into()));
                }
                let mc = &self.monte_carlo;
                if let Some(&n) = mc.dimensions.iter().find(|&&n| !(2..=12).contains(&n)) {
                    return Err(Error::Config(format!("dimension {n} outside [2, 12]")));
                }
                if mc.initial_conditions == 0 || mc.modes.is_empty() {
                    return Err(Error::Config(
                        "need at least one mode and initial condition".into(),
                    ));
                }
                let o = &mc.overrides;
                if !(o.tau_h > 0.0 && o.pds_h > 0.0 && o.hss_h > 0.0 && o.horizon_factor > 0.0) {
                    return Err(Error::Config(
                        "integrator overrides must be positive".into(),
                    ));
                }
            }
            ExperimentKind::FieldGrid
            | ExperimentKind::DescentStudy
            | ExperimentKind::LimitCycle => {
                if self.spec.is_none() {
                    return Err(Error::Config(format!("{:?} needs a spec", self.kind)));
                }
            }
        }
        for m in self.all_modes() {
            if let StudyMode::Tau(t) = m {
                if !(t > 0.0 && t.is_finite()) {
                    return Err(Error::Config(format!("τ must be positive, got {t}")));
                }
            }
        }
        Ok(())
    }

    fn all_modes(&self) -> Vec<StudyMode> {
        let mut m = self.monte_carlo.modes.clone();
        m.extend(&self.field.modes);
        m.extend(&self.limit_cycle.modes);
        m.extend(self.descent.taus.iter().map(|&t| StudyMode::Tau(t)));
        m
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex(&Sha256::digest(canonical.as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of a network's JSON form, used to identify samples.
pub fn spec_hash(spec: &NetworkSpec) -> String {
    hex(&Sha256::digest(
        spec.to_json().expect("spec serializes").as_bytes(),
    ))
}

pub(crate) fn x0_or_centre(spec: &NetworkSpec, x0: &[f64]) -> Result<DVector<f64>> {
    if x0.is_empty() {
        return Ok(spec.d().map(|d| 0.5 / d));
    }
    let x = DVector::from_column_slice(x0);
    spec.check_dim(&x, "x0")?;
    Ok(x)
}

/// Provenance stamped on every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub config_hash: String,
    pub tool_version: String,
}

impl Stamp {
    pub fn of(config: &ExperimentConfig) -> Self {
        Self {
            config_hash: config.hash(),
            tool_version: TOOL_VERSION.to_string(),
        }
    }
}

/// Output directory of one run: `config.json`, `report.json`, `samples/`,
/// `trajectories/`. Every JSON artifact carries the stamp.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
    stamp: Stamp,
}

impl RunDir {
    pub fn create(root: &Path, config: &ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(root.join("samples"))?;
        fs::create_dir_all(root.join("trajectories"))?;
        let stamp = Stamp::of(config);
        let dir = Self {
            root: root.to_path_buf(),
            stamp,
        };
        let body = serde_json::json!({ "stamp": dir.stamp, "config": config });
        fs::write(
            root.join("config.json"),
            serde_json::to_string_pretty(&body)?,
        )?;
        Ok(dir)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn stamp(&self) -> &Stamp {
        &self.stamp
    }

    pub fn write_report<T: Serialize>(&self, report: &T) -> Result<PathBuf> {
        let path = self.root.join("report.json");
        let body = serde_json::json!({ "stamp": self.stamp, "report": report });
        fs::write(&path, serde_json::to_string_pretty(&body)?)?;
        Ok(path)
    }

    /// JSON lines under `samples/`, each record wrapped with the stamp.
    pub fn write_samples<T: Serialize>(&self, name: &str, records: &[T]) -> Result<PathBuf> {
        let path = self.root.join("samples").join(format!("{name}.jsonl"));
        let mut out = String::new();
        for r in records {
            out.push_str(&serde_json::to_string(
                &serde_json::json!({ "stamp": self.stamp, "record": r }),
            )?);
            out.push('\n');
        }
        fs::write(&path, out)?;
        Ok(path)
    }

    pub fn trajectory_path(&self, name: &str) -> PathBuf {
        self.root.join("trajectories").join(format!("{name}.csv"))
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

/// Read stamped JSON-lines records, rejecting any whose stamp differs from
/// the first one.
pub fn read_stamped_records<T: for<'de> Deserialize<'de>>(text: &str) -> Result<(Stamp, Vec<T>)> {
    #[derive(Deserialize)]
    struct Wrapped<T> {
        stamp: Stamp,
        record: T,
    }
    let mut stamp: Option<Stamp> = None;
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let w: Wrapped<T> = serde_json::from_str(line)?;
        match &stamp {
            None => stamp = Some(w.stamp),
            Some(s) if *s != w.stamp => {
                return Err(Error::Config(format!(
                    "artifact from config {} mixed into run {}",
                    w.stamp.config_hash, s.config_hash
                )))
            }
            _ => {}
        }
        out.push(w.record);
    }
    let stamp = stamp.ok_or_else(|| Error::Config("no records".into()))?;
    Ok((stamp, out))
}
