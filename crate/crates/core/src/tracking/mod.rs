//! Identity management between beacons: converted measurements, a
//! constant-velocity Kalman filter per track, greedy gated association and
//! the track lifecycle.

mod association;
pub mod filter;
pub mod ucm;

use std::collections::VecDeque;

use nalgebra::{Matrix3, Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::channels::Did;
use crate::error::{Error, Result};
use crate::identity::RotorClass;
use crate::world::{NodeId, Vec3};

pub use association::{associate, Association};
pub use filter::{kf_predict, kf_update, predict_ahead, FilterConfig, Prediction};
pub use ucm::{ucm_convert, PolarNoise};

/// Rotor labels kept per track for the majority vote.
const ROTOR_HISTORY: usize = 32;
/// Posterior samples kept per track for time alignment.
const STATE_HISTORY: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct CartesianMeasurement {
    pub position: Vec3,
    pub covariance: Matrix3<f64>,
    pub radial_velocity: f64,
    pub time_s: f64,
    pub rotor_class: Option<RotorClass>,
    /// Ground truth for scoring; `None` for clutter or synthetic input.
    pub true_source: Option<NodeId>,
    /// Set for converted echo measurements.
    pub polar: Option<PolarNoise>,
}

impl CartesianMeasurement {
    pub fn new(position: Vec3, covariance: Matrix3<f64>, time_s: f64) -> Self {
        Self {
            position,
            covariance,
            radial_velocity: 0.0,
            time_s,
            rotor_class: None,
            true_source: None,
            polar: None,
        }
    }

    /// The same measurement with its conversion covariance evaluated at
    /// `at` instead of at the noisy measurement. Evaluating it at the
    /// predicted position keeps the weight of a measurement independent of
    /// its own error. Unchanged for non-converted measurements.
    pub fn evaluated_at(&self, at: Vec3) -> Self {
        let mut z = self.clone();
        if let Some(noise) = &self.polar {
            let d = at - noise.observer;
            let r = d.norm();
            if r > 1e-9 {
                let a = d.y.atan2(d.x);
                let e = (d.z / r).clamp(-1.0, 1.0).asin();
                z.covariance = ucm::conversion_covariance(r, a, e, noise);
            }
        }
        z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrackId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackStatus {
    Tentative,
    Confirmed,
    Coasting,
    Dead,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateParams {
    pub gate_radius_m: f64,
    pub confirm_hits: u32,
    pub delete_misses: u32,
}

impl Default for GateParams {
    fn default() -> Self {
        Self {
            gate_radius_m: 20.0,
            confirm_hits: 3,
            delete_misses: 5,
        }
    }
}

/// A past estimate, recorded after every scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackSample {
    pub time_s: f64,
    pub position: Vec3,
    pub position_cov: Matrix3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: TrackId,
    pub state: Vector6<f64>,
    pub covariance: Matrix6<f64>,
    pub status: TrackStatus,
    /// Consecutive hits.
    pub hits: u32,
    /// Consecutive misses.
    pub misses: u32,
    pub associated_did: Option<Did>,
    pub rotor_history: VecDeque<RotorClass>,
    pub history: VecDeque<TrackSample>,
    pub last_update_s: f64,
    /// Time the state refers to.
    pub time_s: f64,
    pub radial_velocity: f64,
    /// Source of the latest associated measurement; scoring only.
    pub true_source: Option<NodeId>,
}

impl Track {
    /// New tentative track at the measured position with zero velocity.
    pub fn init(id: TrackId, z: &CartesianMeasurement, init_velocity_sigma: f64) -> Self {
        let mut state = Vector6::zeros();
        state.fixed_rows_mut::<3>(0).copy_from(&z.position);
        let mut covariance = Matrix6::zeros();
        covariance
            .fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&z.covariance);
        covariance
            .fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&(Matrix3::identity() * init_velocity_sigma * init_velocity_sigma));
        let mut t = Self {
            id,
            state,
            covariance,
            status: TrackStatus::Tentative,
            hits: 1,
            misses: 0,
            associated_did: None,
            rotor_history: VecDeque::new(),
            history: VecDeque::new(),
            last_update_s: z.time_s,
            time_s: z.time_s,
            radial_velocity: z.radial_velocity,
            true_source: z.true_source,
        };
        if let Some(c) = z.rotor_class {
            t.rotor_history.push_back(c);
        }
        t.record();
        t
    }

    pub fn position(&self) -> Vec3 {
        self.state.fixed_rows::<3>(0).into()
    }

    pub fn velocity(&self) -> Vec3 {
        self.state.fixed_rows::<3>(3).into()
    }

    pub fn position_cov(&self) -> Matrix3<f64> {
        self.covariance.fixed_view::<3, 3>(0, 0).into()
    }

    pub fn is_confirmed(&self) -> bool {
        matches!(self.status, TrackStatus::Confirmed | TrackStatus::Coasting)
    }

    /// Most frequent rotor class seen; ties go to the lower class code.
    pub fn majority_rotor(&self) -> Option<RotorClass> {
        let mut counts = [0usize; RotorClass::ALL.len()];
        for c in &self.rotor_history {
            counts[c.code() as usize] += 1;
        }
        let (best, n) =
            counts
                .iter()
                .enumerate()
                .fold((0, 0), |acc, (i, &n)| if n > acc.1 { (i, n) } else { acc });
        (n > 0).then(|| RotorClass::ALL[best])
    }

    /// Estimate recorded closest in time to `t`.
    pub fn sample_near(&self, t: f64) -> Option<&TrackSample> {
        self.history
            .iter()
            .min_by(|a, b| (a.time_s - t).abs().total_cmp(&(b.time_s - t).abs()))
    }

    fn record(&mut self) {
        if self.history.len() == STATE_HISTORY {
            self.history.pop_front();
        }
        self.history.push_back(TrackSample {
            time_s: self.time_s,
            position: self.position(),
            position_cov: self.position_cov(),
        });
    }

    fn push_rotor(&mut self, c: RotorClass) {
        if self.rotor_history.len() == ROTOR_HISTORY {
            self.rotor_history.pop_front();
        }
        self.rotor_history.push_back(c);
    }
}

/// Applies one scan's association to the track set: updates, births,
/// status transitions and deletions. Tracks must already be predicted to
/// the scan time.
pub fn manage_tracks(
    tracks: Vec<Track>,
    assoc: &Association,
    measurements: &[CartesianMeasurement],
    gate: &GateParams,
    next_id: &mut u64,
    init_velocity_sigma: f64,
) -> Result<Vec<Track>> {
    let mut tracks = tracks;
    for &(ti, mi) in &assoc.pairs {
        let z = &measurements[mi];
        let mut t = kf_update(&tracks[ti], &z.evaluated_at(tracks[ti].position()))?;
        if let Some(c) = z.rotor_class {
            t.push_rotor(c);
        }
        t.true_source = z.true_source;
        t.radial_velocity = z.radial_velocity;
        t.status = match t.status {
            TrackStatus::Tentative if t.hits >= gate.confirm_hits => TrackStatus::Confirmed,
            TrackStatus::Coasting => TrackStatus::Confirmed,
            s => s,
        };
        tracks[ti] = t;
    }
    for &ti in &assoc.unmatched_tracks {
        let t = &mut tracks[ti];
        t.misses += 1;
        t.hits = 0;
        if t.misses >= gate.delete_misses {
            t.status = TrackStatus::Dead;
        } else if t.status == TrackStatus::Confirmed {
            t.status = TrackStatus::Coasting;
        }
    }
    for t in tracks.iter_mut() {
        t.record();
    }
    tracks.retain(|t| t.status != TrackStatus::Dead);
    for &mi in &assoc.unmatched_measurements {
        tracks.push(Track::init(
            TrackId(*next_id),
            &measurements[mi],
            init_velocity_sigma,
        ));
        *next_id += 1;
    }
    Ok(tracks)
}

/// One observer's track store.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracker {
    pub tracks: Vec<Track>,
    pub gate: GateParams,
    pub filter: FilterConfig,
    next_id: u64,
}

impl Tracker {
    pub fn new(gate: GateParams, filter: FilterConfig) -> Self {
        Self {
            tracks: Vec::new(),
            gate,
            filter,
            next_id: 0,
        }
    }

    /// Predicts every track to `time_s`, associates the scan and applies the
    /// lifecycle.
    pub fn process_scan(
        &mut self,
        measurements: &[CartesianMeasurement],
        time_s: f64,
    ) -> Result<()> {
        let predicted: Vec<Track> = self
            .tracks
            .iter()
            .map(|t| kf_predict(t, (time_s - t.time_s).max(0.0), &self.filter))
            .collect();
        let assoc = associate(&predicted, measurements, &self.gate);
        self.tracks = manage_tracks(
            predicted,
            &assoc,
            measurements,
            &self.gate,
            &mut self.next_id,
            self.filter.init_velocity_sigma_mps,
        )?;
        Ok(())
    }

    pub fn confirmed(&self) -> impl Iterator<Item = &Track> {
        self.tracks.iter().filter(|t| t.is_confirmed())
    }

    pub fn get(&self, id: TrackId) -> Option<&Track> {
        self.tracks.iter().find(|t| t.id == id)
    }

    pub fn get_mut(&mut self, id: TrackId) -> Option<&mut Track> {
        self.tracks.iter_mut().find(|t| t.id == id)
    }
}

pub(crate) fn require_confirmed(track: &Track) -> Result<()> {
    if track.is_confirmed() {
        Ok(())
    } else {
        Err(Error::UnconfirmedTrack(track.id.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(p: [f64; 3], t: f64) -> CartesianMeasurement {
        CartesianMeasurement::new(Vec3::from(p), Matrix3::identity() * 0.01, t)
    }

    fn tracker() -> Tracker {
        Tracker::new(GateParams::default(), FilterConfig::default())
    }

    #[test]
    fn confirms_after_three_hits() {
        let mut tr = tracker();
        for k in 0..3 {
            tr.process_scan(&[z([0., 0., 0.], k as f64 * 0.05)], k as f64 * 0.05)
                .unwrap();
            let expected = if k < 2 {
                TrackStatus::Tentative
            } else {
                TrackStatus::Confirmed
            };
            assert_eq!(tr.tracks[0].status, expected);
        }
        assert_eq!(tr.tracks.len(), 1);
    }

    #[test]
    fn coasts_then_dies_after_five_misses() {
        let mut tr = tracker();
        for k in 0..4 {
            tr.process_scan(&[z([0., 0., 0.], k as f64 * 0.05)], k as f64 * 0.05)
                .unwrap();
        }
        for k in 4..8 {
            tr.process_scan(&[], k as f64 * 0.05).unwrap();
            assert_eq!(tr.tracks[0].status, TrackStatus::Coasting);
        }
        tr.process_scan(&[], 0.4).unwrap();
        assert!(tr.tracks.is_empty());
    }

    #[test]
    fn coasting_hit_reconfirms() {
        let mut tr = tracker();
        for k in 0..4 {
            tr.process_scan(&[z([0., 0., 0.], k as f64 * 0.05)], k as f64 * 0.05)
                .unwrap();
        }
        tr.process_scan(&[], 0.2).unwrap();
        assert_eq!(tr.tracks[0].status, TrackStatus::Coasting);
        tr.process_scan(&[z([0., 0., 0.], 0.25)], 0.25).unwrap();
        assert_eq!(tr.tracks[0].status, TrackStatus::Confirmed);
    }

    #[test]
    fn two_separated_targets_two_confirmed_tracks() {
        let mut tr = tracker();
        for k in 0..20 {
            let t = k as f64 * 0.05;
            tr.process_scan(&[z([t * 10.0, 0., 0.], t), z([0., 200., 0.], t)], t)
                .unwrap();
        }
        assert_eq!(tr.confirmed().count(), 2);
        assert_eq!(tr.tracks.len(), 2);
    }

    #[test]
    fn majority_vote() {
        let mut t = Track::init(TrackId(0), &z([0., 0., 0.], 0.0), 10.0);
        t.rotor_history = [RotorClass::Quad, RotorClass::Quad, RotorClass::Hex]
            .into_iter()
            .collect();
        assert_eq!(t.majority_rotor(), Some(RotorClass::Quad));
    }
}
