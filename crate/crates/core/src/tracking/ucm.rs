//! Polar to Cartesian measurement conversion with multiplicative debiasing.
//!
//! With Gaussian angle noise of variance σ², E[cos(θ + n)] = e^{−σ²/2} cos θ
//! and likewise for sine, so the raw conversion is biased towards the
//! observer. Dividing each coordinate by the product of the bias factors of
//! the noisy angles it contains removes the bias in expectation.

use nalgebra::Matrix3;

use crate::channels::VdMeasurement;
use crate::error::{Error, Result};
use crate::world::Vec3;

use super::CartesianMeasurement;

/// Angle variances at or above this leave the small-angle regime.
pub const MAX_ANGLE_VARIANCE: f64 = 0.25;

/// Added to the converted covariance diagonal so it stays positive definite
/// when the measurement is noiseless.
pub const COVARIANCE_FLOOR: f64 = 1e-9;

/// Multiplicative bias of a cosine or sine of an angle with noise variance `var`.
pub fn bias_factor(var: f64) -> f64 {
    (-0.5 * var).exp()
}

/// Plain spherical-to-Cartesian offset, no bias compensation.
pub fn raw_offset(range: f64, azimuth: f64, elevation: f64) -> Vec3 {
    crate::world::polar_to_offset(range, azimuth, elevation)
}

/// Debiased offset for the given angle variances.
pub fn debiased_offset(range: f64, azimuth: f64, elevation: f64, var_az: f64, var_el: f64) -> Vec3 {
    let la = bias_factor(var_az);
    let le = bias_factor(var_el);
    let raw = raw_offset(range, azimuth, elevation);
    Vec3::new(raw.x / (la * le), raw.y / (la * le), raw.z / le)
}

/// Polar noise of a converted measurement, kept so its covariance can be
/// re-evaluated at another point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarNoise {
    pub observer: Vec3,
    pub var_range: f64,
    pub var_azimuth: f64,
    pub var_elevation: f64,
}

/// First-order covariance of the debiased conversion at (r, a, e).
pub fn conversion_covariance(
    range: f64,
    azimuth: f64,
    elevation: f64,
    noise: &PolarNoise,
) -> Matrix3<f64> {
    let kxy = 1.0 / (bias_factor(noise.var_azimuth) * bias_factor(noise.var_elevation));
    let kz = 1.0 / bias_factor(noise.var_elevation);
    let r = range;
    let (sa, ca) = azimuth.sin_cos();
    let (se, ce) = elevation.sin_cos();

    // Jacobian of the debiased conversion with respect to (r, a, e).
    let j = Matrix3::new(
        kxy * ce * ca,
        -kxy * r * ce * sa,
        -kxy * r * se * ca,
        kxy * ce * sa,
        kxy * r * ce * ca,
        -kxy * r * se * sa,
        kz * se,
        0.0,
        kz * r * ce,
    );
    let s = Matrix3::from_diagonal(&Vec3::new(
        noise.var_range,
        noise.var_azimuth,
        noise.var_elevation,
    ));
    let cov = j * s * j.transpose();
    0.5 * (cov + cov.transpose()) + Matrix3::identity() * COVARIANCE_FLOOR
}

pub fn ucm_convert(m: &VdMeasurement, observer_position: Vec3) -> Result<CartesianMeasurement> {
    let worst = m.var_azimuth.max(m.var_elevation);
    if !(worst < MAX_ANGLE_VARIANCE) {
        return Err(Error::AngleNoiseTooLarge(worst));
    }
    let noise = PolarNoise {
        observer: observer_position,
        var_range: m.var_range,
        var_azimuth: m.var_azimuth,
        var_elevation: m.var_elevation,
    };
    let (r, a, e) = (m.range_m, m.azimuth_rad, m.elevation_rad);
    Ok(CartesianMeasurement {
        position: observer_position + debiased_offset(r, a, e, m.var_azimuth, m.var_elevation),
        covariance: conversion_covariance(r, a, e, &noise),
        radial_velocity: m.radial_velocity_mps,
        time_s: m.time_s,
        rotor_class: Some(m.rotor_class),
        true_source: m.true_source,
        polar: Some(noise),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::RotorClass;
    use crate::world::NodeId;

    fn meas(r: f64, a: f64, e: f64, var_angle: f64) -> VdMeasurement {
        VdMeasurement {
            observer: NodeId(0),
            range_m: r,
            azimuth_rad: a,
            elevation_rad: e,
            radial_velocity_mps: 0.0,
            rotor_class: RotorClass::Quad,
            var_range: 0.25,
            var_azimuth: var_angle,
            var_elevation: var_angle,
            var_radial_velocity: 0.01,
            time_s: 0.0,
            true_source: None,
        }
    }

    #[test]
    fn zero_angle_noise_is_plain_conversion() {
        let m = meas(100.0, 0.3, -0.2, 0.0);
        let c = ucm_convert(&m, Vec3::new(1.0, 2.0, 3.0)).unwrap();
        let plain = Vec3::new(1.0, 2.0, 3.0) + raw_offset(100.0, 0.3, -0.2);
        assert!((c.position - plain).norm() < 1e-12);
        assert!(c.covariance.cholesky().is_some());
    }

    #[test]
    fn bias_factor_at_point_one_rad() {
        let f = bias_factor(0.01) * bias_factor(0.01);
        assert_close!(f, 0.990_049_833_749_168, 1e-12);
    }

    #[test]
    fn rejects_large_angle_noise() {
        assert!(matches!(
            ucm_convert(&meas(10.0, 0.0, 0.0, 0.3), Vec3::zeros()),
            Err(Error::AngleNoiseTooLarge(_))
        ));
    }

    #[test]
    fn covariance_is_symmetric_positive_definite() {
        let c = ucm_convert(&meas(150.0, 2.0, 0.7, 0.0004), Vec3::zeros()).unwrap();
        assert_eq!(c.covariance, c.covariance.transpose());
        assert!(c.covariance.cholesky().is_some());
        // Along-range variance equals σ_r² to first order at a = e = 0.
        let c0 = ucm_convert(&meas(150.0, 0.0, 0.0, 0.0004), Vec3::zeros()).unwrap();
        assert_close!(
            c0.covariance[(0, 0)],
            0.25 * (1.0 / bias_factor(0.0004).powi(4)),
            1e-6
        );
    }

    #[test]
    fn covariance_follows_evaluation_point() {
        let c = ucm_convert(&meas(100.0, 0.0, 0.0, 0.0004), Vec3::zeros()).unwrap();
        assert_eq!(
            c.evaluated_at(Vec3::new(100.0, 0.0, 0.0)).covariance,
            c.covariance
        );
        // Seen along y the cross-range axis becomes x.
        let turned = c.evaluated_at(Vec3::new(0.0, 100.0, 0.0)).covariance;
        assert_close!(turned[(0, 0)], c.covariance[(1, 1)], 1e-9);
        assert_close!(turned[(1, 1)], c.covariance[(0, 0)], 1e-9);
        let plain = CartesianMeasurement::new(Vec3::zeros(), Matrix3::identity(), 0.0);
        assert_eq!(plain.evaluated_at(Vec3::new(5.0, 0.0, 0.0)), plain);
    }
}
