//! Latency models for beam access and emergency alerts.
//!
//! All times are in milliseconds. Feedback over the air grows linearly with
//! the distance to the peer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tracking::{Track, TrackId};
use crate::world::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyConfig {
    /// Echo-based beam acquisition.
    pub t_echo_ms: f64,
    /// Beams in the sweep codebook.
    pub n_codebook: u32,
    /// One synchronization burst per beam.
    pub t_ssb_ms: f64,
    pub t_report_ms: f64,
    /// Feedback cost at zero distance.
    pub t_feedback_ms: f64,
    pub t_feedback_per_m_ms: f64,
    /// One message hop.
    pub t_hop_ms: f64,
    /// Handshake confirmation in the identity-exchange baseline.
    pub t_confirm_ms: f64,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        Self {
            t_echo_ms: 1.0,
            n_codebook: 8,
            t_ssb_ms: 0.25,
            t_report_ms: 1.0,
            t_feedback_ms: 2.562,
            t_feedback_per_m_ms: 0.0032,
            t_hop_ms: 2.3,
            t_confirm_ms: 0.368,
        }
    }
}

impl LatencyConfig {
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        for (name, v) in [
            ("t_echo_ms", self.t_echo_ms),
            ("t_ssb_ms", self.t_ssb_ms),
            ("t_report_ms", self.t_report_ms),
            ("t_feedback_ms", self.t_feedback_ms),
            ("t_feedback_per_m_ms", self.t_feedback_per_m_ms),
            ("t_hop_ms", self.t_hop_ms),
            ("t_confirm_ms", self.t_confirm_ms),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err((name, format!("must be >= 0, got {v}")));
            }
        }
        if self.n_codebook == 0 {
            return Err(("n_codebook", "must be >= 1".into()));
        }
        Ok(())
    }

    pub fn feedback_ms(&self, distance_m: f64) -> f64 {
        self.t_feedback_ms + self.t_feedback_per_m_ms * distance_m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamMethod {
    /// Point straight at the tracked echo.
    Isac,
    /// Exhaustive codebook sweep with report and feedback.
    Sweep,
}

pub fn beam_access_latency(method: BeamMethod, cfg: &LatencyConfig, distance_m: f64) -> f64 {
    match method {
        BeamMethod::Isac => cfg.t_echo_ms,
        BeamMethod::Sweep => {
            cfg.n_codebook as f64 * cfg.t_ssb_ms + cfg.t_report_ms + cfg.feedback_ms(distance_m)
        }
    }
}

/// Sense, then one unicast hop to the mapped identity.
pub fn alert_latency_isac(cfg: &LatencyConfig) -> f64 {
    cfg.t_echo_ms + cfg.t_hop_ms
}

/// Discover, request and receive identities before the unicast, plus the
/// feedback and confirmation of the exchange.
pub fn alert_latency_exchange(cfg: &LatencyConfig, distance_m: f64) -> f64 {
    3.0 * cfg.t_hop_ms + cfg.feedback_ms(distance_m) + cfg.t_confirm_ms
}

/// One candidate for an alert, relative to the sender.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threat {
    pub id: TrackId,
    pub range_m: f64,
    /// Negative while approaching.
    pub radial_velocity_mps: f64,
    /// Time of closest approach, clamped at zero.
    pub tca_s: f64,
}

impl Threat {
    pub fn from_track(track: &Track, own_position: Vec3, own_velocity: Vec3) -> Self {
        Self::from_relative(
            track.id,
            track.position() - own_position,
            track.velocity() - own_velocity,
        )
    }

    pub fn from_relative(id: TrackId, r: Vec3, v: Vec3) -> Self {
        let range = r.norm();
        let radial = if range > 0.0 { r.dot(&v) / range } else { 0.0 };
        let vv = v.norm_squared();
        let tca = if vv > 0.0 {
            (-r.dot(&v) / vv).max(0.0)
        } else {
            0.0
        };
        Self {
            id,
            range_m: range,
            radial_velocity_mps: radial,
            tca_s: tca,
        }
    }
}

/// The nearest approaching candidate; if none approaches, the one with the
/// earliest closest approach (ties by range, then id).
pub fn select_most_endangered(threats: &[Threat]) -> Result<TrackId> {
    if threats.is_empty() {
        return Err(Error::NoConfirmedTracks);
    }
    let approaching = threats
        .iter()
        .filter(|t| t.radial_velocity_mps < 0.0)
        .min_by(|a, b| a.range_m.total_cmp(&b.range_m).then(a.id.cmp(&b.id)));
    if let Some(t) = approaching {
        return Ok(t.id);
    }
    Ok(threats
        .iter()
        .min_by(|a, b| {
            a.tca_s
                .total_cmp(&b.tca_s)
                .then(a.range_m.total_cmp(&b.range_m))
                .then(a.id.cmp(&b.id))
        })
        .expect("non-empty")
        .id)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_minus_isac_at_reference_distances() {
        let c = LatencyConfig::default();
        let d = |m| {
            beam_access_latency(BeamMethod::Sweep, &c, m)
                - beam_access_latency(BeamMethod::Isac, &c, m)
        };
        assert_close!(d(10.0), 4.594, 1e-9);
        assert_close!(d(20.0), 4.626, 1e-9);
    }

    #[test]
    fn alert_reduction_at_ten_metres() {
        let c = LatencyConfig::default();
        let ours = alert_latency_isac(&c);
        let base = alert_latency_exchange(&c, 10.0);
        assert_close!(ours, 3.3, 1e-12);
        assert_close!(base, 9.862, 1e-9);
        assert_close!(1.0 - ours / base, 0.665_382_275_400_527_3, 1e-9);
    }

    fn threat(id: u64, range: f64, radial: f64) -> Threat {
        Threat {
            id: TrackId(id),
            range_m: range,
            radial_velocity_mps: radial,
            tca_s: if radial < 0.0 { range / -radial } else { 0.0 },
        }
    }

    #[test]
    fn nearest_approaching_wins() {
        let t = [
            threat(1, 10.0, -3.0),
            threat(2, 8.0, 2.0),
            threat(3, 20.0, -9.0),
        ];
        assert_eq!(select_most_endangered(&t).unwrap(), TrackId(1));
    }

    #[test]
    fn nobody_approaching_falls_back_to_closest_approach() {
        let t = [threat(1, 10.0, 1.0), threat(2, 8.0, 2.0)];
        assert_eq!(select_most_endangered(&t).unwrap(), TrackId(2));
        assert!(matches!(
            select_most_endangered(&[]),
            Err(Error::NoConfirmedTracks)
        ));
    }

    #[test]
    fn closest_approach_from_geometry() {
        let t = Threat::from_relative(
            TrackId(0),
            Vec3::new(100.0, 10.0, 0.0),
            Vec3::new(-10.0, 0.0, 0.0),
        );
        assert_close!(t.tca_s, 10.0, 1e-12);
        assert!(t.radial_velocity_mps < 0.0);
    }
}
