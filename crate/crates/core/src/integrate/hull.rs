use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{slow_field_pointwise_banded, NetworkSpec};
use crate::tol;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HullOptions {
    /// Sample only `B(x, r) ∩ X`. Off by default: at a face of `X` the
    /// intersection hides the regimes on the far side of the surface.
    pub restrict_to_polytope: bool,
    /// Support directions used in dimension three and above.
    pub directions: usize,
    pub band: f64,
}

impl Default for HullOptions {
    fn default() -> Self {
        Self {
            restrict_to_polytope: false,
            directions: 512,
            band: tol::ZERO_BAND,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullEstimate {
    #[serde(with = "crate::serde_util::dvec_list")]
    pub vertices: Vec<DVector<f64>>,
    pub samples: usize,
}

impl HullEstimate {
    /// Euclidean distance from `p` to the hull (planar and scalar hulls only).
    pub fn distance_to(&self, p: &DVector<f64>) -> Result<f64> {
        point_to_hull_distance(&self.vertices, p)
    }
}

/// Inner approximation of the convexified slow field near `x`: the convex
/// hull of `F_∞(y)` over `samples` points `y` drawn uniformly from the ball.
pub fn filippov_hull_estimate(
    spec: &NetworkSpec,
    x: &DVector<f64>,
    radius: f64,
    samples: usize,
    seed: u64,
    opts: &HullOptions,
) -> Result<HullEstimate> {
    spec.check_dim(x, "filippov_hull_estimate")?;
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Domain(format!(
            "radius must be positive, got {radius}"
        )));
    }
    if samples == 0 {
        return Err(Error::Domain("at least one sample is required".into()));
    }
    let n = x.len();
    let poly = spec.polytope();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vels = Vec::with_capacity(samples);
    let mut tries = 0usize;
    while vels.len() < samples {
        tries += 1;
        if tries > samples.saturating_mul(1000) {
            return Err(Error::Numerical("ball ∩ X too thin to sample".into()));
        }
        // Rejection from the enclosing cube.
        let off = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..=1.0));
        if off.norm() > 1.0 {
            continue;
        }
        let y = x + off * radius;
        if opts.restrict_to_polytope && !poly.contains(&y, 0.0) {
            continue;
        }
        vels.push(slow_field_pointwise_banded(spec, &y, opts.band));
    }
    let vertices = match n {
        1 => {
            let lo = vels.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
            let hi = vels.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
            dedup(vec![
                DVector::from_element(1, lo),
                DVector::from_element(1, hi),
            ])
        }
        2 => monotone_chain(&vels),
        _ => support_points(&vels, opts.directions, &mut rng),
    };
    Ok(HullEstimate { vertices, samples })
}

fn dedup(points: Vec<DVector<f64>>) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::new();
    for p in points {
        if !out.iter().any(|q| (q - &p).amax() <= 1e-12) {
            out.push(p);
        }
    }
    out
}

fn cross(o: &[f64; 2], a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise hull vertices, collinear points dropped.
fn monotone_chain(vels: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut pts: Vec<[f64; 2]> = vels.iter().map(|v| [v[0], v[1]]).collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup_by(|a, b| (a[0] - b[0]).abs() <= 1e-12 && (a[1] - b[1]).abs() <= 1e-12);
    if pts.len() <= 2 {
        return pts.iter().map(|p| DVector::from_row_slice(p)).collect();
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2
                && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 1e-15
            {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull.iter().map(|p| DVector::from_row_slice(p)).collect()
}

fn support_points(
    vels: &[DVector<f64>],
    directions: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<DVector<f64>> {
    let n = vels[0].len();
    let mut picks = Vec::new();
    for k in 0..directions.max(2 * n) {
        let dir = if k < 2 * n {
            let mut e = DVector::zeros(n);
            e[k / 2] = if k % 2 == 0 { 1.0 } else { -1.0 };
            e
        } else {
            DVector::from_fn(n, |_, _| rng.gen_range(-1.0..=1.0))
        };
        let best = vels
            .iter()
            .max_by(|a, b| a.dot(&dir).total_cmp(&b.dot(&dir)))
            .expect("non-empty");
        picks.push(best.clone());
    }
    dedup(picks)
}

fn seg_dist(p: &[f64; 2], a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
    };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

/// Distance from `p` to the convex hull of `vertices` (given in
/// counter-clockwise order, as returned for planar hulls).
pub fn point_to_hull_distance(vertices: &[DVector<f64>], p: &DVector<f64>) -> Result<f64> {
    if vertices.is_empty() {
        return Err(Error::Domain("empty hull".into()));
    }
    match p.len() {
        1 => {
            let lo = vertices.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
            let hi = vertices
                .iter()
                .map(|v| v[0])
                .fold(f64::NEG_INFINITY, f64::max);
            Ok((lo - p[0]).max(p[0] - hi).max(0.0))
        }
        2 => {
            let vs: Vec<[f64; 2]> = vertices.iter().map(|v| [v[0], v[1]]).collect();
            let q = [p[0], p[1]];
            if vs.len() >= 3
                && (0..vs.len()).all(|i| cross(&vs[i], &vs[(i + 1) % vs.len()], &q) >= 0.0)
            {
                return Ok(0.0);
            }
            if vs.len() == 1 {
                return Ok(seg_dist(&q, &vs[0], &vs[0]));
            }
            Ok((0..vs.len())
                .map(|i| seg_dist(&q, &vs[i], &vs[(i + 1) % vs.len()]))
                .fold(f64::INFINITY, f64::min))
        }
        k => Err(Error::Domain(format!(
            "hull distance implemented for n ≤ 2, got {k}"
        ))),
    }
}

/// Hausdorff distance between a planar hull and the segment `[a, b]`.
/// Both sets are convex, so the extreme points realize it.
pub fn hausdorff_to_segment(
    vertices: &[DVector<f64>],
    a: &DVector<f64>,
    b: &DVector<f64>,
) -> Result<f64> {
    let pa = [a[0], a[1]];
    let pb = [b[0], b[1]];
    let from_hull = vertices
        .iter()
        .map(|v| seg_dist(&[v[0], v[1]], &pa, &pb))
        .fold(0.0, f64::max);
    let from_seg = point_to_hull_distance(vertices, a)?.max(point_to_hull_distance(vertices, b)?);
    Ok(from_hull.max(from_seg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn v2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    #[test]
    fn off_surface_hull_shrinks_to_pointwise_value() {
        let s = NetworkSpec::from_rows(&[&[0.0, -1.6], &[1.6, 0.0]], &[0.8, 1.0], &[1.0, -1.0])
            .unwrap();
        let x = v2(0.2, 0.9);
        let h = filippov_hull_estimate(&s, &x, 1e-4, 200, 1, &HullOptions::default()).unwrap();
        let expect = crate::net::slow_field_pointwise(&s, &x).unwrap();
        assert!(!h.vertices.is_empty());
        for v in &h.vertices {
            assert!((v - &expect).amax() < 2e-4);
        }
    }

    #[test]
    fn collapse_to_segment() {
        let s = NetworkSpec::from_a(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]),
            v2(1.0, 1.0),
            v2(0.0, 0.0),
        )
        .unwrap();
        let h = filippov_hull_estimate(&s, &v2(0.0, 0.0), 1e-3, 2000, 7, &HullOptions::default())
            .unwrap();
        let d = hausdorff_to_segment(&h.vertices, &v2(0.0, 0.0), &v2(1.0, 1.0)).unwrap();
        assert!(d < 5e-2, "hausdorff {d}");
        assert!(h.distance_to(&v2(1.0, 0.0)).unwrap() >= 0.3);
    }

    #[test]
    fn single_surface_gives_adjacent_velocities() {
        // A = -I + off-diagonal, surface g_1 = 0 crossed at an interior point.
        let s =
            NetworkSpec::from_rows(&[&[0.0, 0.5], &[0.2, 0.0]], &[1.0, 1.0], &[0.0, 0.0]).unwrap();
        let x = v2(0.4, 0.8);
        // g_1 = -0.4 + 0.4 = 0, g_2 = 0.08 - 0.8 < 0.
        let h = filippov_hull_estimate(&s, &x, 1e-6, 500, 3, &HullOptions::default()).unwrap();
        let plus = v2(1.0 - 0.4, -0.8);
        let minus = v2(-0.4, -0.8);
        let d = hausdorff_to_segment(&h.vertices, &minus, &plus).unwrap();
        assert!(d < 1e-5, "hausdorff {d}");
    }

    #[test]
    fn distance_helpers() {
        let square = vec![v2(0.0, 0.0), v2(1.0, 0.0), v2(1.0, 1.0), v2(0.0, 1.0)];
        assert_eq!(point_to_hull_distance(&square, &v2(0.5, 0.5)).unwrap(), 0.0);
        assert!((point_to_hull_distance(&square, &v2(2.0, 0.5)).unwrap() - 1.0).abs() < 1e-15);
        let seg = vec![v2(0.0, 0.0), v2(1.0, 1.0)];
        assert!(
            (point_to_hull_distance(&seg, &v2(1.0, 0.0)).unwrap() - 0.5f64.sqrt()).abs() < 1e-15
        );
    }

    #[test]
    fn rejects_bad_arguments() {
        let s = NetworkSpec::from_rows(&[&[0.0]], &[1.0], &[0.0]).unwrap();
        let x = DVector::from_element(1, 0.5);
        assert!(filippov_hull_estimate(&s, &x, 0.0, 10, 0, &HullOptions::default()).is_err());
        assert!(filippov_hull_estimate(&s, &x, 0.1, 0, 0, &HullOptions::default()).is_err());
    }
}
