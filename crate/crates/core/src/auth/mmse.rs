//! Consistency of claimed positions with a certifier's own track.

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::identity::Pid;
use crate::tracking::{require_confirmed, Track};

/// Upper 0.1% point of the chi-square distribution with 3 degrees of freedom.
pub const CHI2_3DOF_999: f64 = 16.266_236_196_238_13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmseResult {
    pub score: f64,
    pub pass: bool,
    pub samples: usize,
}

/// Mean squared Mahalanobis distance between each claimed position and the
/// track estimate recorded nearest in time, normalized by the sum of the
/// claim covariance (σ_claim²·I) and the track position covariance.
pub fn mmse_check(claimed: &[Pid], track: &Track, tau: f64) -> Result<MmseResult> {
    require_confirmed(track)?;
    let mut total = 0.0;
    let mut n = 0usize;
    for pid in claimed {
        let (Some(pos), Some(sigma)) = (pid.position(), pid.position_sigma()) else {
            continue;
        };
        let Some(sample) = track.sample_near(pid.time_s) else {
            continue;
        };
        let cov = Matrix3::identity() * sigma * sigma + sample.position_cov;
        let inv = cov.cholesky().ok_or(Error::NonPdCovariance)?.inverse();
        let d = pos - sample.position;
        total += (d.transpose() * inv * d)[(0, 0)];
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyWindow);
    }
    let score = total / n as f64;
    Ok(MmseResult {
        score,
        pass: score <= tau,
        samples: n,
    })
}
