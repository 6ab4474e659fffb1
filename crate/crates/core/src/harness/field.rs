use std::fs::File;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::config::{FieldConfig, RunDir};
use crate::error::{Error, Result};
use crate::integrate::TimeScale;
use crate::lyapunov::StudyMode;
use crate::net::{pds_field, slow_field_pointwise, tau_ltn_field, tau_ltn_field_slow, NetworkSpec};

/// One grid point: position, velocity and its Euclidean norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub x1: f64,
    pub x2: f64,
    pub v1: f64,
    pub v2: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub mode: StudyMode,
    /// Time in which the velocity is measured.
    pub time_scale: TimeScale,
    pub samples: Vec<FieldSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldReport {
    pub resolution: usize,
    pub grids: Vec<FieldGrid>,
    /// Clipped `g_i = 0` segments, one per neuron; empty when the line misses X.
    pub loci: Vec<Vec<[f64; 2]>>,
}

/// Velocity at `x` in the mode's natural time: `f_τ` for `τ ≤ 1`, `F_τ` for
/// `τ > 1`, the projected drift for PDS and `F_∞` for HSS.
pub fn natural_field(
    spec: &NetworkSpec,
    mode: StudyMode,
    x: &DVector<f64>,
) -> Result<(TimeScale, DVector<f64>)> {
    Ok(match mode {
        StudyMode::Pds => (TimeScale::Fast, pds_field(spec, x)?),
        StudyMode::Hss => (TimeScale::Slow, slow_field_pointwise(spec, x)?),
        StudyMode::Tau(t) if t <= 1.0 => (TimeScale::Fast, tau_ltn_field(spec, t, x)?),
        StudyMode::Tau(t) => (TimeScale::Slow, tau_ltn_field_slow(spec, t, x)?),
    })
}

/// Segment of `{a·x + u = 0}` inside the box `[0, hi1] × [0, hi2]`.
pub fn clip_line_to_box(a: [f64; 2], u: f64, hi: [f64; 2]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = Vec::new();
    let eps = 1e-12 * (1.0 + hi[0].max(hi[1]));
    for (k, fixed) in [(0, 0.0), (0, hi[0]), (1, 0.0), (1, hi[1])] {
        let j = 1 - k;
        if a[j] == 0.0 {
            continue;
        }
        let other = -(u + a[k] * fixed) / a[j];
        if other < -eps || other > hi[j] + eps {
            continue;
        }
        let mut p = [0.0; 2];
        p[k] = fixed;
        p[j] = other.clamp(0.0, hi[j]);
        if !pts
            .iter()
            .any(|q| (q[0] - p[0]).abs() <= eps && (q[1] - p[1]).abs() <= eps)
        {
            pts.push(p);
        }
    }
    if pts.len() < 2 {
        return Vec::new();
    }
    // A line through a corner can hit three edges; keep the extremes.
    pts.sort_by(|p, q| p.partial_cmp(q).expect("finite"));
    vec![pts[0], pts[pts.len() - 1]]
}

/// Sample the vector field of every configured mode on a uniform grid over X.
/// Only two-neuron networks are supported.
pub fn emit_field_grid(
    spec: &NetworkSpec,
    cfg: &FieldConfig,
    out: Option<&RunDir>,
) -> Result<FieldReport> {
    if spec.n() != 2 {
        return Err(Error::Config(format!(
            "field grids need n = 2, got n = {}",
            spec.n()
        )));
    }
    if cfg.resolution < 2 {
        return Err(Error::Config("field resolution must be at least 2".into()));
    }
    let hi = [1.0 / spec.d()[0], 1.0 / spec.d()[1]];
    let m = cfg.resolution;
    let coord = |k: usize, i: usize| hi[k] * i as f64 / (m - 1) as f64;

    let mut grids = Vec::with_capacity(cfg.modes.len());
    for &mode in &cfg.modes {
        let mut samples = Vec::with_capacity(m * m);
        let mut scale = TimeScale::Fast;
        for i in 0..m {
            for j in 0..m {
                let x = DVector::from_vec(vec![coord(0, i), coord(1, j)]);
                let (s, v) = natural_field(spec, mode, &x)?;
                scale = s;
                samples.push(FieldSample {
                    x1: x[0],
                    x2: x[1],
                    v1: v[0],
                    v2: v[1],
                    speed: v.norm(),
                });
            }
        }
        grids.push(FieldGrid {
            mode,
            time_scale: scale,
            samples,
        });
    }

    let a = spec.a();
    let loci: Vec<Vec<[f64; 2]>> = (0..2)
        .map(|i| clip_line_to_box([a[(i, 0)], a[(i, 1)]], spec.u()[i], hi))
        .collect();

    let report = FieldReport {
        resolution: m,
        grids,
        loci,
    };
    if let Some(dir) = out {
        for g in &report.grids {
            let mut w = csv::Writer::from_writer(File::create(
                dir.file(&format!("field_{}.csv", g.mode.label())),
            )?);
            for s in &g.samples {
                w.serialize(s)?;
            }
            w.flush()?;
        }
        for (i, seg) in report.loci.iter().enumerate() {
            let mut w =
                csv::Writer::from_writer(File::create(dir.file(&format!("locus_g{}.csv", i + 1)))?);
            w.write_record(["x1", "x2"])?;
            for p in seg {
                w.write_record([p[0].to_string(), p[1].to_string()])?;
            }
            w.flush()?;
        }
        let summary: Vec<_> = report
            .grids
            .iter()
            .map(|g| {
                let max = g.samples.iter().map(|s| s.speed).fold(0.0, f64::max);
                serde_json::json!({ "mode": g.mode, "time_scale": g.time_scale, "max_speed": max })
            })
            .collect();
        dir.write_report(
            &serde_json::json!({ "resolution": m, "grids": summary, "loci": report.loci }),
        )?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotor() -> NetworkSpec {
        NetworkSpec::from_rows(&[&[0.0, -1.0], &[1.0, 0.0]], &[1.0, 1.0], &[0.5, 0.0]).unwrap()
    }

    #[test]
    fn rejects_other_dimensions() {
        let s = NetworkSpec::from_rows(&[&[0.0]], &[1.0], &[0.0]).unwrap();
        assert!(matches!(
            emit_field_grid(&s, &FieldConfig::default(), None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn grid_covers_polytope_corners() {
        let r = emit_field_grid(
            &rotor(),
            &FieldConfig {
                resolution: 5,
                ..Default::default()
            },
            None,
        )
        .unwrap();
        assert_eq!(r.grids.len(), 3);
        let g = &r.grids[0];
        assert_eq!(g.samples.len(), 25);
        assert_eq!((g.samples[0].x1, g.samples[0].x2), (0.0, 0.0));
        assert_eq!((g.samples[24].x1, g.samples[24].x2), (1.0, 1.0));
        assert_eq!(r.grids[2].time_scale, TimeScale::Slow);
    }

    #[test]
    fn large_tau_speed_approaches_slow_limit_off_surfaces() {
        let s = rotor();
        let x = DVector::from_vec(vec![0.3, 0.8]);
        let (_, v) = natural_field(&s, StudyMode::Tau(1e8), &x).unwrap();
        let (_, w) = natural_field(&s, StudyMode::Hss, &x).unwrap();
        assert!((v - w).amax() < 1e-6);
    }

    #[test]
    fn small_tau_grid_matches_projection_on_the_boundary() {
        let s = NetworkSpec::from_rows(&[&[0.0, -1.6], &[1.6, 0.0]], &[0.8, 1.0], &[1.0, -1.0])
            .unwrap();
        let cfg = FieldConfig {
            modes: vec![StudyMode::Tau(1e-4), StudyMode::Pds],
            resolution: 64,
        };
        let r = emit_field_grid(&s, &cfg, None).unwrap();
        let hi = [1.0 / 0.8, 1.0];
        let on_face =
            |p: &FieldSample| p.x1 == 0.0 || p.x2 == 0.0 || p.x1 == hi[0] || p.x2 == hi[1];
        let mut checked = 0;
        for (p, q) in r.grids[0].samples.iter().zip(&r.grids[1].samples) {
            let x = DVector::from_vec(vec![p.x1, p.x2]);
            let g = s.drift(&x);
            if on_face(p) {
                let t = crate::integrate::project_tangent(&s, &x, &g, 1e-9);
                assert!((p.v1 - t[0]).abs() <= 1e-3 && (p.v2 - t[1]).abs() <= 1e-3);
                checked += 1;
            } else {
                // Interior: the projection is the identity.
                assert_eq!((q.v1, q.v2), (g[0], g[1]));
            }
        }
        assert_eq!(checked, 4 * 63);
    }

    #[test]
    fn locus_clipping() {
        // x1 - x2 = 0 across the unit box.
        assert_eq!(
            clip_line_to_box([1.0, -1.0], 0.0, [1.0, 1.0]),
            vec![[0.0, 0.0], [1.0, 1.0]]
        );
        // Vertical line x1 = 0.25.
        assert_eq!(
            clip_line_to_box([1.0, 0.0], -0.25, [1.0, 2.0]),
            vec![[0.25, 0.0], [0.25, 2.0]]
        );
        // Misses the box.
        assert!(clip_line_to_box([1.0, 1.0], 5.0, [1.0, 1.0]).is_empty());
        assert!(clip_line_to_box([0.0, 0.0], 1.0, [1.0, 1.0]).is_empty());
    }

    #[test]
    fn loci_lie_on_the_switching_lines() {
        let s = rotor();
        let r = emit_field_grid(
            &s,
            &FieldConfig {
                resolution: 3,
                ..Default::default()
            },
            None,
        )
        .unwrap();
        for (i, seg) in r.loci.iter().enumerate() {
            for p in seg {
                let g = s.drift(&DVector::from_vec(p.to_vec()));
                assert!(g[i].abs() < 1e-12);
            }
        }
    }
}
