//! Time integrators for the τ-members and both timescale limits.

mod hss;
mod hull;
mod pds;
mod rk;
mod tau;
mod trajectory;

use nalgebra::DVector;

use crate::net::{neg, pos, NetworkSpec};

pub use hss::{integrate_hss, HssOptions, SlidingState};
pub use hull::{
    filippov_hull_estimate, hausdorff_to_segment, point_to_hull_distance, HullEstimate, HullOptions,
};
pub use pds::{integrate_pds, PdsOptions, PdsScheme};
pub use tau::{integrate_tau_ltn, StepControl, TauOptions};
pub use trajectory::{Event, EventKind, IntegrationStats, Mode, Recording, TimeScale, Trajectory};

/// Tangent-cone projection of `v` at `x ∈ X`: the positive part on lower
/// faces, minus the negative part on upper faces, `v` elsewhere.
pub fn project_tangent(
    spec: &NetworkSpec,
    x: &DVector<f64>,
    v: &DVector<f64>,
    face_tol: f64,
) -> DVector<f64> {
    let d = spec.d();
    DVector::from_fn(x.len(), |i, _| {
        let y = d[i] * x[i];
        if y <= face_tol {
            pos(v[i])
        } else if y >= 1.0 - face_tol {
            -neg(v[i])
        } else {
            v[i]
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tol;

    fn fig1() -> NetworkSpec {
        NetworkSpec::from_rows(&[&[0.0, -1.6], &[1.6, 0.0]], &[0.8, 1.0], &[1.0, -1.0]).unwrap()
    }

    #[test]
    fn interior_is_identity() {
        let s = fig1();
        let x = DVector::from_vec(vec![0.5, 0.5]);
        let v = DVector::from_vec(vec![-3.0, 7.0]);
        assert_eq!(project_tangent(&s, &x, &v, tol::MEMBERSHIP), v);
    }

    #[test]
    fn lower_face_keeps_positive_part() {
        let s = fig1();
        let v = s.u().clone();
        let p = project_tangent(&s, &DVector::zeros(2), &v, tol::MEMBERSHIP);
        assert_eq!(p.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn upper_face_keeps_negative_part() {
        let s = fig1();
        let x = DVector::from_vec(vec![1.0 / 0.8, 0.5]);
        let v = DVector::from_vec(vec![2.0, 2.0]);
        let p = project_tangent(&s, &x, &v, tol::MEMBERSHIP);
        assert_eq!(p.as_slice(), &[0.0, 2.0]);
        let v = DVector::from_vec(vec![-2.0, 1.0]);
        assert_eq!(project_tangent(&s, &x, &v, tol::MEMBERSHIP)[0], -2.0);
    }
}
