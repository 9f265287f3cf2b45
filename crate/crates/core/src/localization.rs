//! Closed-form position fix from angle-of-arrival bearings.
//!
//! Each bearing defines the line `anchor + t·k` with `k` the unit direction
//! of the user as seen from the anchor. The position estimate minimizes the
//! summed squared distance to all bearing lines:
//!
//! `p̂ = argmin Σ_i ‖(I − k_i·k_iᵀ)(p − anchor_i)‖²`
//!
//! which reduces to the 3×3 linear system `(Σ_i K_i)·p = Σ_i K_i·anchor_i`
//! with projectors `K_i = I − k_i·k_iᵀ`. Two bearings suffice unless their
//! directions are (nearly) parallel, which leaves the system singular along
//! the common direction.

use nalgebra::{Matrix3, Point3, Vector3};
use thiserror::Error;

use crate::geometry::{direction_vector, AnglePair};

/// Relative condition-number ceiling beyond which the normal matrix is
/// treated as singular.
const CONDITION_LIMIT: f64 = 1e12;

/// Errors from the position solve.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LocalizationError {
    /// Fewer than two bearings were supplied.
    #[error("at least two bearings are required for a 3D fix")]
    NotEnoughBearings,
    /// All bearing lines are (nearly) parallel; the fix is unobservable
    /// along the shared direction.
    #[error("bearing lines are parallel or nearly parallel")]
    CollinearGeometry,
}

/// Least-squares intersection of bearing lines; see the module docs.
pub fn locate(
    bearings: &[(Point3<f64>, AnglePair)],
) -> Result<Point3<f64>, LocalizationError> {
    if bearings.len() < 2 {
        return Err(LocalizationError::NotEnoughBearings);
    }
    let mut normal = Matrix3::<f64>::zeros();
    let mut rhs = Vector3::<f64>::zeros();
    for (anchor, angles) in bearings {
        let k = direction_vector(*angles);
        let proj = Matrix3::identity() - k * k.transpose();
        normal += proj;
        rhs += proj * anchor.coords;
    }
    let svd = normal.svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    if !(s_min > 0.0) || s_max / s_min > CONDITION_LIMIT {
        return Err(LocalizationError::CollinearGeometry);
    }
    let p = svd
        .solve(&rhs, 0.0)
        .map_err(|_| LocalizationError::CollinearGeometry)?;
    Ok(Point3::from(p))
}

/// Summed squared distance from `p` to every bearing line; the objective
/// [`locate`] minimizes. Exposed for diagnostics and tests.
pub fn bearing_residual(p: &Point3<f64>, bearings: &[(Point3<f64>, AnglePair)]) -> f64 {
    bearings
        .iter()
        .map(|(anchor, angles)| {
            let k = direction_vector(*angles);
            let d = p - anchor;
            (d - k * d.dot(&k)).norm_squared()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::angles_between;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn reference_bearings() -> (Point3<f64>, Vec<(Point3<f64>, AnglePair)>) {
        let user = Point3::new(3.5, 26.7, 0.7);
        let bs = Point3::new(0.0, 0.0, 10.0);
        let ris = Point3::new(-10.0, 23.3, 0.5);
        let bearings = vec![
            (ris, angles_between(&user, &ris).unwrap()),
            (bs, angles_between(&user, &bs).unwrap()),
        ];
        (user, bearings)
    }

    /// Derivative-free coordinate descent over 3D, the slow oracle the
    /// closed form must match.
    fn pattern_search_oracle(
        start: Point3<f64>,
        bearings: &[(Point3<f64>, AnglePair)],
    ) -> Point3<f64> {
        let mut cur = start;
        let mut f_cur = bearing_residual(&cur, bearings);
        let mut step = 8.0;
        while step > 1e-9 {
            let mut moved = false;
            for axis in 0..3 {
                for sign in [-1.0, 1.0] {
                    let mut cand = cur;
                    cand.coords[axis] += sign * step;
                    let f = bearing_residual(&cand, bearings);
                    if f < f_cur {
                        cur = cand;
                        f_cur = f;
                        moved = true;
                    }
                }
            }
            if !moved {
                step /= 2.0;
            }
        }
        cur
    }

    #[test]
    fn exact_bearings_recover_the_user() {
        let (user, bearings) = reference_bearings();
        let p = locate(&bearings).unwrap();
        assert_abs_diff_eq!((p - user).norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn closed_form_matches_pattern_search_oracle() {
        let (_, mut bearings) = reference_bearings();
        // Perturb one bearing so the lines no longer intersect and the
        // minimizer is a genuine compromise point.
        bearings[0].1.el += 0.02;
        bearings[0].1.az -= 0.015;
        bearings[1].1.az += 0.01;
        let closed = locate(&bearings).unwrap();
        let midpoint = Point3::from(
            (bearings[0].0.coords + bearings[1].0.coords) / 2.0,
        );
        let oracle = pattern_search_oracle(midpoint, &bearings);
        assert_abs_diff_eq!((closed - oracle).norm(), 0.0, epsilon = 1e-6);
        // And the closed form is no worse than the oracle's objective.
        assert!(
            bearing_residual(&closed, &bearings)
                <= bearing_residual(&oracle, &bearings) + 1e-12
        );
    }

    #[test]
    fn translation_equivariance() {
        let (user, bearings) = reference_bearings();
        let shift = Vector3::new(-3.0, 7.5, 1.25);
        let shifted: Vec<_> = bearings
            .iter()
            .map(|(a, ang)| (a + shift, *ang))
            .collect();
        let p = locate(&shifted).unwrap();
        assert_abs_diff_eq!((p - (user + shift)).norm(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn parallel_bearings_are_rejected() {
        let dir = AnglePair::new(1.1, 0.4);
        let parallel = vec![
            (Point3::new(0.0, 0.0, 0.0), dir),
            (Point3::new(5.0, 1.0, -2.0), dir),
        ];
        assert_eq!(
            locate(&parallel).unwrap_err(),
            LocalizationError::CollinearGeometry
        );
        // Nearly parallel is also rejected by the condition guard.
        let nearly = vec![
            (Point3::new(0.0, 0.0, 0.0), dir),
            (
                Point3::new(5.0, 1.0, -2.0),
                AnglePair::new(dir.el + 1e-9, dir.az),
            ),
        ];
        assert_eq!(
            locate(&nearly).unwrap_err(),
            LocalizationError::CollinearGeometry
        );
    }

    #[test]
    fn single_bearing_is_rejected() {
        let one = vec![(Point3::origin(), AnglePair::new(1.0, 0.0))];
        assert_eq!(
            locate(&one).unwrap_err(),
            LocalizationError::NotEnoughBearings
        );
    }

    proptest! {
        #[test]
        fn prop_estimate_is_a_local_minimum(
            ux in -20.0f64..20.0,
            uy in 5.0f64..40.0,
            uz in -5.0f64..15.0,
            del in -0.05f64..0.05,
            daz in -0.05f64..0.05,
        ) {
            let user = Point3::new(ux, uy, uz);
            let bs = Point3::new(0.0, 0.0, 10.0);
            let ris = Point3::new(-10.0, 23.3, 0.5);
            prop_assume!((user - bs).norm() > 1.0 && (user - ris).norm() > 1.0);
            let mut b1 = angles_between(&user, &ris).unwrap();
            b1.el += del;
            b1.az += daz;
            let b2 = angles_between(&user, &bs).unwrap();
            let bearings = vec![(ris, b1), (bs, b2)];
            // Skip geometries the solver itself rejects (nearly parallel).
            let Ok(p) = locate(&bearings) else {
                return Ok(());
            };
            let f0 = bearing_residual(&p, &bearings);
            for axis in 0..3 {
                for sign in [-1.0, 1.0] {
                    let mut q = p;
                    q.coords[axis] += sign * 1e-4;
                    prop_assert!(bearing_residual(&q, &bearings) >= f0 - 1e-12);
                }
            }
        }
    }
}
