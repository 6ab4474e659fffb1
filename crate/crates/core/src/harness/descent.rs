use std::fs::File;

use nalgebra::DVector;

use super::config::{x0_or_centre, DescentConfig, RunDir};
use crate::cert::{find_certificate, CertSearchConfig, CertificateSearch, DiagonalCertificate};
use crate::equilibrium::{solve_by_enumeration, EnumerationConfig};
use crate::error::{Error, Result};
use crate::lyapunov::{descent_matrix_study, DescentStudy, StudyOptions};
use crate::net::NetworkSpec;

/// Certify `spec` (unless `cert` is given), locate its equilibrium and run
/// the descent matrix.
///
/// Traces are written as `trajectories/<mode>_<function>_<k>.csv` with
/// columns `t,v,envelope,normalized`; the report keeps only the summaries.
pub fn run_descent_study(
    spec: &NetworkSpec,
    cfg: &DescentConfig,
    cert: Option<DiagonalCertificate>,
    out: Option<&RunDir>,
) -> Result<(DiagonalCertificate, DescentStudy)> {
    let cert = match cert {
        Some(c) => DiagonalCertificate::from_lambda(spec.a(), &c.lambda)
            .map_err(|e| Error::Config(format!("supplied certificate: {e}")))?,
        None => match find_certificate(spec.a(), &CertSearchConfig::default())? {
            CertificateSearch::Certified(c) => c,
            CertificateSearch::NotCertified { best_margin, .. } => {
                return Err(Error::Config(format!(
                    "descent study needs a diagonally stable A (best margin {best_margin:.3e})"
                )))
            }
        },
    };
    let eq = solve_by_enumeration(spec, &EnumerationConfig::default())?;
    let x_star = eq
        .unique()
        .ok_or_else(|| {
            Error::Numerical(format!(
                "expected one equilibrium, found {}",
                eq.points.len()
            ))
        })?
        .state
        .clone();
    let x0s: Vec<DVector<f64>> = if cfg.x0.is_empty() {
        vec![DVector::zeros(spec.n())]
    } else {
        cfg.x0
            .iter()
            .map(|x| x0_or_centre(spec, x))
            .collect::<Result<_>>()?
    };
    let opts = StudyOptions {
        t_end_fast: cfg.t_end_fast,
        s_end_slow: cfg.s_end_slow,
        keep_traces: out.is_some(),
        ..Default::default()
    };
    let mut study = descent_matrix_study(spec, &cert, &x_star, &cfg.taus, &x0s, &opts)?;

    if let Some(dir) = out {
        for cell in &mut study.cells {
            for (k, r) in cell.reports.iter_mut().enumerate() {
                let name = format!("{}_{}_{k}", cell.mode.label(), r.kind.name());
                let mut w = csv::Writer::from_writer(File::create(dir.trajectory_path(&name))?);
                w.write_record(["t", "v", "envelope", "normalized"])?;
                for i in 0..r.times.len() {
                    w.write_record(
                        [r.times[i], r.values[i], r.envelope[i], r.normalized[i]]
                            .map(|v| v.to_string()),
                    )?;
                }
                w.flush()?;
                r.times.clear();
                r.values.clear();
                r.envelope.clear();
                r.normalized.clear();
            }
        }
        let x_star: Vec<f64> = x_star.iter().copied().collect();
        dir.write_report(&serde_json::json!({
            "certificate": cert,
            "equilibrium": x_star,
            "cells": study.cells,
        }))?;
    }
    Ok((cert, study))
}


#[cfg(test)]
mod supplied {
    use super::*;

    #[test]
    fn supplied_certificate_is_rechecked() {
        let spec =
            NetworkSpec::from_rows(&[&[0.0, -0.5], &[0.5, 0.0]], &[1.0, 1.0], &[0.5, 0.5]).unwrap();
        let cfg = DescentConfig {
            taus: vec![],
            t_end_fast: 1.0,
            s_end_slow: 1.0,
            ..Default::default()
        };
        let good = DiagonalCertificate {
            lambda: vec![1.0, 2.0],
            mu: 0.0,
            margin: 0.0,
        };
        let (c, _) = run_descent_study(&spec, &cfg, Some(good), None).unwrap();
        assert!(c.mu > 0.0);
        let bad = DiagonalCertificate {
            lambda: vec![1.0, 1e6],
            mu: 0.0,
            margin: 0.0,
        };
        assert!(matches!(
            run_descent_study(&spec, &cfg, Some(bad), None),
            Err(Error::Config(_))
        ));
    }
}
