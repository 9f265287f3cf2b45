//! Spherical direction geometry shared by every array model.
//!
//! Directions are parameterized by an elevation/azimuth pair: elevation is
//! the polar angle measured from the +z axis (range `[0, π]`), azimuth is the
//! angle of the x–y projection measured from the +x axis (range `(−π, π]`).
//! The unit direction vector for a pair `(el, az)` is
//! `[sin el · cos az, sin el · sin az, cos el]`.
//!
//! # Example
//!
//! ```
//! use nalgebra::Point3;
//! use fas_aris_loc::geometry::{angles_between, direction_vector};
//!
//! let user = Point3::new(3.5, 26.7, 0.7);
//! let bs = Point3::new(0.0, 0.0, 10.0);
//! let aoa = angles_between(&user, &bs).unwrap();
//! let k = direction_vector(aoa);
//! let expected = (user - bs).normalize();
//! assert!((k - expected).norm() < 1e-12);
//! ```

use nalgebra::{Point3, Vector3};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

/// Errors produced by direction computations.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    /// Both points coincide, so no direction is defined.
    #[error("cannot compute a direction between coincident points")]
    CoincidentPoints,
}

/// An elevation/azimuth direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnglePair {
    /// Polar angle from the +z axis, in `[0, π]`.
    pub el: f64,
    /// Angle of the x–y projection from the +x axis, in `(−π, π]`.
    pub az: f64,
}

impl AnglePair {
    /// Creates a pair without range normalization.
    pub fn new(el: f64, az: f64) -> Self {
        Self { el, az }
    }
}

/// Unit propagation vector for a direction:
/// `[sin el · cos az, sin el · sin az, cos el]`.
pub fn direction_vector(angles: AnglePair) -> Vector3<f64> {
    let (sin_el, cos_el) = angles.el.sin_cos();
    let (sin_az, cos_az) = angles.az.sin_cos();
    Vector3::new(sin_el * cos_az, sin_el * sin_az, cos_el)
}

/// Partial derivative of [`direction_vector`] with respect to elevation.
pub fn direction_el_derivative(angles: AnglePair) -> Vector3<f64> {
    let (sin_el, cos_el) = angles.el.sin_cos();
    let (sin_az, cos_az) = angles.az.sin_cos();
    Vector3::new(cos_el * cos_az, cos_el * sin_az, -sin_el)
}

/// Partial derivative of [`direction_vector`] with respect to azimuth.
pub fn direction_az_derivative(angles: AnglePair) -> Vector3<f64> {
    let (sin_el, cos_el) = angles.el.sin_cos();
    let (sin_az, cos_az) = angles.az.sin_cos();
    let _ = cos_el;
    Vector3::new(-sin_el * sin_az, sin_el * cos_az, 0.0)
}

/// Direction of `target` as seen from `observer`, i.e. the angles of the
/// vector `target − observer`.
///
/// Returns [`GeometryError::CoincidentPoints`] when the two points are equal.
/// The azimuth of a point on the −x axis is reported as `+π` so the result
/// always lies in `(−π, π]`.
pub fn angles_between(
    target: &Point3<f64>,
    observer: &Point3<f64>,
) -> Result<AnglePair, GeometryError> {
    let d = target - observer;
    let r = d.norm();
    if r == 0.0 {
        return Err(GeometryError::CoincidentPoints);
    }
    let el = (d.z / r).clamp(-1.0, 1.0).acos();
    let mut az = d.y.atan2(d.x);
    if az == -PI {
        az = PI;
    }
    Ok(AnglePair { el, az })
}

/// Signed angular difference `a − b` wrapped into `(−π, π]`.
///
/// Used when accumulating azimuth estimation errors, where estimates near
/// `+π` and truths near `−π` are the same physical direction.
pub fn angle_difference(a: f64, b: f64) -> f64 {
    let mut d = (a - b) % TAU;
    if d <= -PI {
        d += TAU;
    } else if d > PI {
        d -= TAU;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    #[test]
    fn direction_vector_is_unit_norm() {
        for &(el, az) in &[(0.3, -2.0), (1.2, 0.4), (2.9, 3.1), (0.0, 0.0), (PI, 1.0)] {
            let k = direction_vector(AnglePair::new(el, az));
            assert_relative_eq!(k.norm(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn reference_scenario_angles() {
        // Frozen values for the reference deployment used throughout the
        // test suite: user at [3.5, 26.7, 0.7], base station at [0, 0, 10],
        // surface at [-10, 23.3, 0.5].
        let user = Point3::new(3.5, 26.7, 0.7);
        let bs = Point3::new(0.0, 0.0, 10.0);
        let ris = Point3::new(-10.0, 23.3, 0.5);

        let ub = angles_between(&user, &bs).unwrap();
        assert_abs_diff_eq!(ub.el, 1.903332, epsilon = 1e-6);
        assert_abs_diff_eq!(ub.az, 1.440453, epsilon = 1e-6);

        let ur = angles_between(&user, &ris).unwrap();
        assert_abs_diff_eq!(ur.el, 1.556431, epsilon = 1e-6);
        assert_abs_diff_eq!(ur.az, 0.246721, epsilon = 1e-6);

        // Direction of the base station as seen from the surface: used as
        // the known departure direction of the surface-to-BS link.
        let bs_from_ris = angles_between(&bs, &ris).unwrap();
        assert_abs_diff_eq!(bs_from_ris.el, 1.212310, epsilon = 1e-6);
        assert_abs_diff_eq!(bs_from_ris.az, -1.165387, epsilon = 1e-6);
        let k = direction_vector(bs_from_ris);
        assert_abs_diff_eq!(k.x, 0.369323, epsilon = 1e-6);
        assert_abs_diff_eq!(k.y, -0.860523, epsilon = 1e-6);
        assert_abs_diff_eq!(k.z, 0.350857, epsilon = 1e-6);
    }

    #[test]
    fn angles_between_matches_normalized_difference() {
        let a = Point3::new(1.0, -2.0, 3.0);
        let b = Point3::new(-4.0, 0.5, 2.0);
        let pair = angles_between(&a, &b).unwrap();
        let k = direction_vector(pair);
        let expected = (a - b).normalize();
        assert_relative_eq!((k - expected).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn coincident_points_are_rejected() {
        let p = Point3::new(1.0, 2.0, 3.0);
        assert_eq!(
            angles_between(&p, &p),
            Err(GeometryError::CoincidentPoints)
        );
    }

    #[test]
    fn azimuth_on_negative_x_axis_maps_to_plus_pi() {
        let target = Point3::new(-5.0, 0.0, 0.0);
        let origin = Point3::origin();
        let pair = angles_between(&target, &origin).unwrap();
        assert_eq!(pair.az, PI);
        assert_abs_diff_eq!(pair.el, PI / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let base = AnglePair::new(1.1, -0.7);
        let h = 1e-6;
        let d_el_fd = (direction_vector(AnglePair::new(base.el + h, base.az))
            - direction_vector(AnglePair::new(base.el - h, base.az)))
            / (2.0 * h);
        let d_az_fd = (direction_vector(AnglePair::new(base.el, base.az + h))
            - direction_vector(AnglePair::new(base.el, base.az - h)))
            / (2.0 * h);
        assert_relative_eq!(
            (direction_el_derivative(base) - d_el_fd).norm(),
            0.0,
            epsilon = 1e-9
        );
        assert_relative_eq!(
            (direction_az_derivative(base) - d_az_fd).norm(),
            0.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn angle_difference_wraps() {
        assert_abs_diff_eq!(angle_difference(3.1, -3.1), -0.083185307, epsilon = 1e-9);
        assert_abs_diff_eq!(angle_difference(-3.1, 3.1), 0.083185307, epsilon = 1e-9);
        assert_abs_diff_eq!(angle_difference(0.5, 0.2), 0.3, epsilon = 1e-12);
        // The wrapped difference of identical angles is exactly zero.
        assert_eq!(angle_difference(2.0, 2.0), 0.0);
    }

    proptest! {
        #[test]
        fn prop_round_trip_angles(
            x in -100.0f64..100.0,
            y in -100.0f64..100.0,
            z in -100.0f64..100.0,
        ) {
            let target = Point3::new(x, y, z);
            let observer = Point3::origin();
            prop_assume!((target - observer).norm() > 1e-6);
            let pair = angles_between(&target, &observer).unwrap();
            prop_assert!((0.0..=PI).contains(&pair.el));
            prop_assert!(pair.az > -PI && pair.az <= PI);
            let k = direction_vector(pair);
            let expected = (target - observer).normalize();
            prop_assert!((k - expected).norm() < 1e-10);
        }

        #[test]
        fn prop_angle_difference_in_range(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let d = angle_difference(a, b);
            prop_assert!(d > -PI && d <= PI);
            // The wrapped difference preserves the angle modulo 2π.
            let residual = ((a - b) - d) % TAU;
            prop_assert!(residual.abs() < 1e-9 || (residual.abs() - TAU).abs() < 1e-9);
        }
    }
}
