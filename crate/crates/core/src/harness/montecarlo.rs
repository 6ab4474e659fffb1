use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{spec_hash, IntegratorOverrides, MonteCarloConfig, RunDir};
use crate::cert::{
    find_certificate, member_rng, sample_member, CertificateSearch, DiagonalCertificate,
};
use crate::equilibrium::{
    ltn_residual, solve_by_enumeration, solve_by_fixed_point, EnumerationConfig, FixedPointConfig,
    FixedPointOutcome,
};
use crate::error::{Error, Result};
use crate::integrate::{
    integrate_hss, integrate_pds, integrate_tau_ltn, HssOptions, PdsOptions, Recording,
    StepControl, TauOptions, TimeScale, Trajectory,
};
use crate::lyapunov::StudyMode;
use crate::net::{NetworkSpec, SpecJson};
use crate::tol;

/// Stream salt separating initial-condition draws from network draws.
const IC_SALT: u64 = 0x1c0f_fee5_eed5_a17e;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Converged,
    Failed,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub total: usize,
    pub converged: usize,
    pub failed: usize,
    pub inconclusive: usize,
}

impl Counts {
    fn add(&mut self, o: Outcome) {
        self.total += 1;
        match o {
            Outcome::Converged => self.converged += 1,
            Outcome::Failed => self.failed += 1,
            Outcome::Inconclusive => self.inconclusive += 1,
        }
    }

    pub fn balanced(&self) -> bool {
        self.converged + self.failed + self.inconclusive == self.total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRun {
    pub mode: StudyMode,
    /// Final sup-norm distance to the equilibrium, one per initial condition.
    pub final_distances: Vec<f64>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub n: usize,
    pub index: usize,
    /// Seed of the dimension's stream family; with `index` it fixes the draw.
    pub seed: u64,
    pub attempts: usize,
    pub spec_hash: String,
    pub spec: SpecJson,
    pub certificate: DiagonalCertificate,
    pub equilibria: Vec<Vec<f64>>,
    pub fixed_point_converged: bool,
    pub modes: Vec<ModeRun>,
    pub outcome: Outcome,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedSpec {
    pub spec: SpecJson,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub counts: BTreeMap<usize, Counts>,
    pub records: Vec<SampleRecord>,
    /// Injected networks stopped by the certification gate.
    pub rejected: Vec<RejectedSpec>,
}

impl MonteCarloReport {
    pub fn balanced(&self) -> bool {
        self.counts.values().all(Counts::balanced)
            && self.counts.values().map(|c| c.total).sum::<usize>() == self.records.len()
    }

    pub fn failed(&self) -> impl Iterator<Item = &SampleRecord> {
        self.records.iter().filter(|r| r.outcome == Outcome::Failed)
    }

    pub fn total(&self) -> Counts {
        let mut t = Counts::default();
        for c in self.counts.values() {
            t.total += c.total;
            t.converged += c.converged;
            t.failed += c.failed;
            t.inconclusive += c.inconclusive;
        }
        t
    }
}

/// Seed of the stream family for dimension `n`.
pub fn dimension_seed(seed: u64, n: usize) -> u64 {
    seed ^ (n as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn initial_conditions(spec: &NetworkSpec, seed: u64, index: usize, k: usize) -> Vec<DVector<f64>> {
    let mut rng = member_rng(seed ^ IC_SALT, index);
    (0..k)
        .map(|_| spec.d().map(|d| rng.gen_range(0.0..=1.0) / d))
        .collect()
}

fn integrate_mode(
    spec: &NetworkSpec,
    mode: StudyMode,
    x0: &DVector<f64>,
    x_star: &DVector<f64>,
    o: &IntegratorOverrides,
) -> Result<Trajectory> {
    let horizon = o.horizon_factor / spec.d_min();
    // Keep only the endpoints; the classification needs the final state.
    let recording = Recording {
        every: usize::MAX,
        stop_near: Some((x_star.clone(), o.early_stop)),
    };
    match mode {
        StudyMode::Pds => integrate_pds(
            spec,
            x0,
            horizon,
            &PdsOptions {
                h: o.pds_h,
                recording,
                ..Default::default()
            },
        ),
        StudyMode::Hss => integrate_hss(
            spec,
            x0,
            horizon,
            &HssOptions {
                h: o.hss_h,
                recording,
                ..Default::default()
            },
        ),
        StudyMode::Tau(tau) => {
            // Large τ runs in slow time, where the horizon means the same thing.
            let scale = if tau > 1.0 {
                TimeScale::Slow
            } else {
                TimeScale::Fast
            };
            let h = o.tau_h * tau.min(1.0);
            let opts = TauOptions {
                scale,
                step: Some(StepControl::Fixed { h }),
                recording,
            };
            integrate_tau_ltn(spec, tau, x0, horizon, &opts)
        }
    }
}

/// Classify one certified network. Deterministic in its inputs.
pub fn classify_sample(
    n: usize,
    index: usize,
    seed: u64,
    attempts: usize,
    spec: &NetworkSpec,
    certificate: DiagonalCertificate,
    cfg: &MonteCarloConfig,
) -> Result<SampleRecord> {
    let o = &cfg.overrides;
    let eq = solve_by_enumeration(spec, &EnumerationConfig::default())?;
    let equilibria: Vec<Vec<f64>> = eq
        .points
        .iter()
        .map(|p| p.state.iter().copied().collect())
        .collect();
    let centre = spec.d().map(|d| 0.5 / d);
    let fp = solve_by_fixed_point(spec, &centre, &FixedPointConfig::default())?;
    let mut record = SampleRecord {
        n,
        index,
        seed,
        attempts,
        spec_hash: spec_hash(spec),
        spec: SpecJson::from(spec),
        certificate,
        equilibria,
        fixed_point_converged: matches!(fp, FixedPointOutcome::Converged { .. }),
        modes: Vec::new(),
        outcome: Outcome::Inconclusive,
        note: String::new(),
    };

    if eq.points.len() > 1 {
        record.outcome = Outcome::Failed;
        record.note = format!("{} verified equilibria", eq.points.len());
        return Ok(record);
    }
    let Some(x_star) = eq.unique().map(|p| p.state.clone()) else {
        record.note = "no equilibrium found by enumeration".into();
        return Ok(record);
    };
    if let Some(p) = fp.point() {
        if (p - &x_star).amax() > 1e-6 && ltn_residual(spec, p) <= tol::EQUILIBRIUM_RESIDUAL {
            record.outcome = Outcome::Failed;
            record.note = "fixed-point iteration found a second equilibrium".into();
            return Ok(record);
        }
    }

    let x0s = initial_conditions(spec, seed, index, cfg.initial_conditions);
    let mut all_converged = true;
    let mut any_error = false;
    let mut stalled = false;
    for &mode in &cfg.modes {
        let mut run = ModeRun {
            mode,
            final_distances: Vec::new(),
            errors: Vec::new(),
        };
        for x0 in &x0s {
            match integrate_mode(spec, mode, x0, &x_star, o) {
                Ok(tr) => {
                    let d = (tr.last_state().expect("non-empty") - &x_star).amax();
                    if d > o.convergence_tol {
                        all_converged = false;
                        let d0 = (x0 - &x_star).amax();
                        // No net progress over the whole horizon.
                        stalled |= d >= 0.5 * d0;
                    }
                    run.final_distances.push(d);
                }
                Err(e) => {
                    any_error = true;
                    all_converged = false;
                    run.errors.push(e.to_string());
                    run.final_distances.push(f64::NAN);
                }
            }
        }
        record.modes.push(run);
    }

    (record.outcome, record.note) = if all_converged {
        let note = if record.fixed_point_converged {
            ""
        } else {
            "fixed-point cross-check did not converge"
        };
        (Outcome::Converged, note.to_string())
    } else if any_error {
        (Outcome::Inconclusive, "integration error".into())
    } else if stalled {
        (
            Outcome::Failed,
            "bounded run made no progress toward the unique equilibrium".into(),
        )
    } else if !record.fixed_point_converged {
        (
            Outcome::Inconclusive,
            "fixed-point cross-check did not converge; runs still contracting".into(),
        )
    } else {
        (
            Outcome::Inconclusive,
            "still contracting at the horizon".into(),
        )
    };
    Ok(record)
}

fn run_one(n: usize, index: usize, cfg: &MonteCarloConfig, seed: u64) -> Result<SampleRecord> {
    let member = sample_member(n, index, seed, &cfg.sampler)?;
    classify_sample(
        n,
        index,
        seed,
        member.attempts,
        &member.spec,
        member.certificate,
        cfg,
    )
}

/// Draw `samples` certified networks per dimension, integrate every mode
/// from random starts, and classify each network. Results do not depend on
/// the worker count.
pub fn run_monte_carlo(
    cfg: &MonteCarloConfig,
    seed: u64,
    out: Option<&RunDir>,
) -> Result<MonteCarloReport> {
    if let Some(&n) = cfg.dimensions.iter().find(|&&n| !(2..=12).contains(&n)) {
        return Err(Error::Config(format!("dimension {n} outside [2, 12]")));
    }
    let jobs: Vec<(usize, usize)> = cfg
        .dimensions
        .iter()
        .flat_map(|&n| (0..cfg.samples).map(move |i| (n, i)))
        .collect();
    let mut records: Vec<SampleRecord> = jobs
        .par_iter()
        .map(|&(n, i)| run_one(n, i, cfg, dimension_seed(seed, n)))
        .collect::<Result<_>>()?;

    let mut rejected = Vec::new();
    for (k, raw) in cfg.injected.iter().enumerate() {
        let spec = NetworkSpec::try_from(raw.clone())?;
        match find_certificate(spec.a(), &cfg.sampler.search)? {
            CertificateSearch::Certified(c) => {
                records.push(classify_sample(
                    spec.n(),
                    cfg.samples + k,
                    seed,
                    1,
                    &spec,
                    c,
                    cfg,
                )?);
            }
            CertificateSearch::NotCertified {
                best_margin,
                obstruction,
                ..
            } => rejected.push(RejectedSpec {
                spec: raw.clone(),
                reason: match obstruction {
                    Some(o) => format!("rejected by sampler: {o:?}"),
                    None => format!("rejected by sampler: best margin {best_margin:.3e}"),
                },
            }),
        }
    }

    let mut counts: BTreeMap<usize, Counts> = BTreeMap::new();
    for r in &records {
        counts.entry(r.n).or_default().add(r.outcome);
    }
    let report = MonteCarloReport {
        counts,
        records,
        rejected,
    };
    debug_assert!(report.balanced());

    if let Some(dir) = out {
        for &n in &cfg.dimensions {
            let rs: Vec<&SampleRecord> = report.records.iter().filter(|r| r.n == n).collect();
            dir.write_samples(&format!("n{n}"), &rs)?;
        }
        let failed: Vec<&SampleRecord> = report.failed().collect();
        dir.write_samples("failed", &failed)?;
        dir.write_report(&serde_json::json!({
            "counts": report.counts,
            "rejected": report.rejected,
            "balanced": report.balanced(),
        }))?;
    }
    Ok(report)
}

/// Recompute a persisted sample from its seed and index. Injected networks
/// are replayed from their stored spec.
pub fn replay_sample(record: &SampleRecord, cfg: &MonteCarloConfig) -> Result<SampleRecord> {
    if record.index < cfg.samples {
        let again = run_one(record.n, record.index, cfg, record.seed)?;
        if again.spec_hash != record.spec_hash {
            return Err(Error::Config(
                "replayed draw differs from the persisted spec".into(),
            ));
        }
        return Ok(again);
    }
    let spec = NetworkSpec::try_from(record.spec.clone())?;
    classify_sample(
        record.n,
        record.index,
        record.seed,
        record.attempts,
        &spec,
        record.certificate.clone(),
        cfg,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cert::SamplerConfig;
    use nalgebra::DMatrix;

    fn small(dims: Vec<usize>, samples: usize) -> MonteCarloConfig {
        MonteCarloConfig {
            dimensions: dims,
            samples,
            initial_conditions: 2,
            ..Default::default()
        }
    }

    #[test]
    fn minus_identity_converges() {
        // w_bar = 0 and d ≡ 1 force A = -I.
        let cfg = MonteCarloConfig {
            sampler: SamplerConfig {
                w_bar: 0.0,
                d_range: [1.0, 1.0],
                ..Default::default()
            },
            ..small(vec![3], 1)
        };
        let r = run_monte_carlo(&cfg, 5, None).unwrap();
        assert_eq!(r.records[0].spec.w, vec![vec![0.0; 3]; 3]);
        assert_eq!(
            r.counts[&3],
            Counts {
                total: 1,
                converged: 1,
                failed: 0,
                inconclusive: 0
            }
        );
    }

    #[test]
    fn non_lds_injection_is_rejected_not_failed() {
        let fig3 = NetworkSpec::from_rows(&[&[4.1, -4.0], &[3.0, -0.5]], &[1.0, 1.0], &[0.5, -0.5])
            .unwrap();
        let cfg = MonteCarloConfig {
            injected: vec![SpecJson::from(&fig3)],
            ..small(vec![2], 0)
        };
        let r = run_monte_carlo(&cfg, 1, None).unwrap();
        assert_eq!(r.rejected.len(), 1);
        assert!(r.rejected[0].reason.starts_with("rejected by sampler"));
        assert_eq!(r.failed().count(), 0);
        assert!(r.balanced());
    }

    #[test]
    fn bistable_network_is_a_failure() {
        // Not diagonally stable, but classification itself only needs the
        // equilibria: two verified points mean failure.
        let spec = NetworkSpec::from_a(
            DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 2.0, -1.0]),
            DVector::from_vec(vec![1.0, 1.0]),
            DVector::from_vec(vec![-0.5, -0.5]),
        )
        .unwrap();
        let cert = DiagonalCertificate {
            lambda: vec![1.0, 1.0],
            mu: 0.0,
            margin: 0.0,
        };
        let r = classify_sample(2, 0, 0, 1, &spec, cert, &small(vec![2], 1)).unwrap();
        assert_eq!(r.outcome, Outcome::Failed);
    }

    #[test]
    fn deterministic_and_replayable() {
        let cfg = small(vec![2, 3], 3);
        let a = run_monte_carlo(&cfg, 11, None).unwrap();
        let b = run_monte_carlo(&cfg, 11, None).unwrap();
        assert_eq!(a, b);
        assert!(a.balanced());
        let again = replay_sample(&a.records[4], &cfg).unwrap();
        assert_eq!(again, a.records[4]);
    }
}
