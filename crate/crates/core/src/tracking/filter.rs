//! Constant-velocity Kalman filter on a (position, velocity) state.

use nalgebra::{Matrix3, Matrix3x6, Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{polar_between, Vec3};

use super::{require_confirmed, CartesianMeasurement, Track, TrackStatus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// White-acceleration spectral density, m²/s³.
    pub q: f64,
    pub init_velocity_sigma_mps: f64,
    /// A confirmed track not updated for this long starts coasting.
    pub stale_after_s: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            q: 1.0,
            init_velocity_sigma_mps: 15.0,
            stale_after_s: 0.5,
        }
    }
}

pub fn transition(dt: f64) -> Matrix6<f64> {
    let mut f = Matrix6::identity();
    for i in 0..3 {
        f[(i, i + 3)] = dt;
    }
    f
}

/// Discretized white-acceleration process noise.
pub fn process_noise(q: f64, dt: f64) -> Matrix6<f64> {
    let mut m = Matrix6::zeros();
    let (a, b, c) = (dt.powi(3) / 3.0, dt.powi(2) / 2.0, dt);
    for i in 0..3 {
        m[(i, i)] = q * a;
        m[(i, i + 3)] = q * b;
        m[(i + 3, i)] = q * b;
        m[(i + 3, i + 3)] = q * c;
    }
    m
}

fn observation() -> Matrix3x6<f64> {
    let mut h = Matrix3x6::zeros();
    for i in 0..3 {
        h[(i, i)] = 1.0;
    }
    h
}

fn symmetrize(p: &Matrix6<f64>) -> Matrix6<f64> {
    0.5 * (p + p.transpose())
}

pub fn kf_predict(track: &Track, dt: f64, cfg: &FilterConfig) -> Track {
    let mut t = track.clone();
    if dt > 0.0 {
        let f = transition(dt);
        t.state = f * track.state;
        t.covariance =
            symmetrize(&(f * track.covariance * f.transpose() + process_noise(cfg.q, dt)));
        t.time_s = track.time_s + dt;
    }
    if t.status == TrackStatus::Confirmed && t.time_s - t.last_update_s > cfg.stale_after_s {
        t.status = TrackStatus::Coasting;
    }
    t
}

/// Position-only measurement update in Joseph form.
pub fn kf_update(track: &Track, z: &CartesianMeasurement) -> Result<Track> {
    if z.covariance.cholesky().is_none() || z.covariance != z.covariance.transpose() {
        return Err(Error::NonPdCovariance);
    }
    let h = observation();
    let p = &track.covariance;
    let s: Matrix3<f64> = h * p * h.transpose() + z.covariance;
    let s_inv = s.cholesky().ok_or(Error::NonPdCovariance)?.inverse();
    let k = p * h.transpose() * s_inv;
    let innovation = z.position - h * track.state;
    let ikh = Matrix6::identity() - k * h;

    let mut t = track.clone();
    t.state = track.state + k * innovation;
    t.covariance = symmetrize(&(ikh * p * ikh.transpose() + k * z.covariance * k.transpose()));
    t.hits += 1;
    t.misses = 0;
    t.last_update_s = z.time_s.max(track.last_update_s);
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub state: Vector6<f64>,
    pub position: Vec3,
    pub range: f64,
    pub azimuth: f64,
    pub elevation: f64,
    pub time_s: f64,
}

/// State `k` transitions of length `dt` ahead of the track, and the
/// pointing angles from `observer`. The track is not modified.
pub fn predict_ahead(track: &Track, k: u32, dt: f64, observer: Vec3) -> Result<Prediction> {
    require_confirmed(track)?;
    if !(1..=2).contains(&k) {
        return Err(Error::InvalidArgument(format!(
            "prediction depth must be 1 or 2, got {k}"
        )));
    }
    let f = transition(dt);
    let mut state = track.state;
    for _ in 0..k {
        state = f * state;
    }
    let position: Vec3 = state.fixed_rows::<3>(0).into();
    let polar = polar_between(observer, Vec3::zeros(), position, Vec3::zeros())?;
    Ok(Prediction {
        state,
        position,
        range: polar.range,
        azimuth: polar.azimuth,
        elevation: polar.elevation,
        time_s: track.time_s + k as f64 * dt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracking::TrackId;

    fn confirmed_track(p: [f64; 3], v: [f64; 3]) -> Track {
        let z = CartesianMeasurement::new(Vec3::from(p), Matrix3::identity(), 0.0);
        let mut t = Track::init(TrackId(1), &z, 1.0);
        t.state[3] = v[0];
        t.state[4] = v[1];
        t.state[5] = v[2];
        t.status = TrackStatus::Confirmed;
        t
    }

    #[test]
    fn zero_dt_is_identity() {
        let t = confirmed_track([1., 2., 3.], [4., 5., 6.]);
        let p = kf_predict(&t, 0.0, &FilterConfig::default());
        assert_eq!(p.state, t.state);
        assert_eq!(p.covariance, t.covariance);
    }

    #[test]
    fn noiseless_cv_prediction() {
        let t = confirmed_track([1., 2., 3.], [4., 5., 6.]);
        let cfg = FilterConfig {
            q: 0.0,
            ..FilterConfig::default()
        };
        let p = kf_predict(&t, 1.0, &cfg);
        assert_eq!(p.position(), Vec3::new(5., 7., 9.));
        assert_eq!(p.velocity(), Vec3::new(4., 5., 6.));
    }

    #[test]
    fn trace_grows_with_time() {
        let t = confirmed_track([0., 0., 0.], [0., 0., 0.]);
        let p = kf_predict(&t, 0.1, &FilterConfig::default());
        assert!(p.covariance.trace() > t.covariance.trace());
    }

    #[test]
    fn stale_track_coasts() {
        let t = confirmed_track([0., 0., 0.], [0., 0., 0.]);
        let p = kf_predict(&t, 0.6, &FilterConfig::default());
        assert_eq!(p.status, TrackStatus::Coasting);
    }

    #[test]
    fn near_exact_measurement_pins_position() {
        let t = confirmed_track([0., 0., 0.], [0., 0., 0.]);
        let z = CartesianMeasurement::new(Vec3::new(3., -1., 2.), Matrix3::identity() * 1e-12, 0.0);
        let u = kf_update(&t, &z).unwrap();
        assert!((u.position() - z.position).norm() < 1e-9);
        assert_eq!(u.hits, t.hits + 1);
    }

    #[test]
    fn update_shrinks_position_block() {
        let t = confirmed_track([0., 0., 0.], [1., 0., 0.]);
        let z = CartesianMeasurement::new(Vec3::new(0.5, 0., 0.), Matrix3::identity() * 0.3, 0.0);
        let u = kf_update(&t, &z).unwrap();
        let diff = t.position_cov() - u.position_cov();
        assert!(diff.symmetric_eigenvalues().iter().all(|e| *e >= -1e-12));
        assert!(u.covariance.cholesky().is_some());
    }

    #[test]
    fn rejects_non_pd_measurement() {
        let t = confirmed_track([0., 0., 0.], [0., 0., 0.]);
        let z = CartesianMeasurement::new(Vec3::zeros(), Matrix3::zeros(), 0.0);
        assert!(matches!(kf_update(&t, &z), Err(Error::NonPdCovariance)));
    }

    #[test]
    fn prediction_is_side_effect_free() {
        let t = confirmed_track([0., 0., 0.], [20., 0., 0.]);
        let cfg = FilterConfig::default();
        let one = predict_ahead(&t, 1, 0.05, Vec3::new(0., -100., 0.)).unwrap();
        assert_eq!(one.state, kf_predict(&t, 0.05, &cfg).state);
        let still = confirmed_track([5., 5., 5.], [0., 0., 0.]);
        let a = predict_ahead(&still, 1, 0.05, Vec3::zeros()).unwrap();
        let b = predict_ahead(&still, 2, 0.05, Vec3::zeros()).unwrap();
        assert_eq!(a.position, b.position);
    }

    #[test]
    fn prediction_needs_confirmed_track() {
        let mut t = confirmed_track([0., 0., 0.], [0., 0., 0.]);
        t.status = TrackStatus::Tentative;
        assert!(matches!(
            predict_ahead(&t, 1, 0.05, Vec3::new(1., 0., 0.)),
            Err(Error::UnconfirmedTrack(1))
        ));
    }

    #[test]
    fn noiseless_cv_converges() {
        let cfg = FilterConfig::default();
        let truth = |t: f64| Vec3::new(10.0 + 5.0 * t, -3.0 * t, 100.0);
        let mut track = Track::init(
            TrackId(0),
            &CartesianMeasurement::new(truth(0.0), Matrix3::identity() * 1e-6, 0.0),
            15.0,
        );
        let mut errors = Vec::new();
        for k in 1..=40 {
            let t = k as f64 * 0.05;
            let p = kf_predict(&track, t - track.time_s, &cfg);
            track = kf_update(
                &p,
                &CartesianMeasurement::new(truth(t), Matrix3::identity() * 1e-6, t),
            )
            .unwrap();
            errors.push((track.position() - truth(t)).norm());
        }
        assert!(errors[4] < 1e-3, "{}", errors[4]);
        assert!(*errors.last().unwrap() < 1e-6);
        assert!((track.velocity() - Vec3::new(5.0, -3.0, 0.0)).norm() < 1e-3);
    }
}
