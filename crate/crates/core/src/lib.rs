//! Dual identity mapping for ISAC-enabled UAV networks.
//!
//! Every node hears its neighbors' digital identities (DIDs) and self-claimed
//! physical state over radio, and independently sees the physical bodies
//! around it through echo sensing. This crate simulates both information
//! domains, maps identities across them with a weighted bipartite assignment,
//! keeps the mapping alive between beacons with Kalman tracking, and uses the
//! mapping for beam management, emergency alerting and Sybil detection.
//!
//! Module map:
//! - [`world`]: ground-truth kinematics and geometry
//! - [`channels`]: beacon emission/delivery and echo measurements
//! - [`identity`]: physical identity vectors, prevalence weights, similarity
//! - [`mapping`]: cost matrix augmentation and the Hungarian solver
//! - [`tracking`]: UCM conversion, CV Kalman filter, association, lifecycle
//! - [`auth`]: MMSE checks, local/global views, Bron-Kerbosch, baseline detector
//! - [`attacks`]: Sybil attack planning and claim fabrication
//! - [`scenarios`]: configuration, scenario runners, metrics and reports

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b, tol): (f64, f64, f64) = ($a, $b, $tol);
        assert!((a - b).abs() <= tol, "{} vs {} (tol {})", a, b, tol);
    }};
}

pub mod attacks;
pub mod auth;
pub mod channels;
pub mod error;
pub mod identity;
pub mod mapping;
pub mod rng;
pub mod scenarios;
pub mod tracking;
pub mod world;

pub use attacks::{AttackConfig, AttackPlan, ClaimMotion, HopMode, IdMode, TimeMode};
pub use auth::{GlobalView, Label, LocalView, Verdict, VerdictClass, WitnessReport};
pub use channels::{AdReception, Beacon, Did, SensorConfig, VdMeasurement};
pub use error::{ConfigError, Error, Result};
pub use identity::{FeatureWeights, IdDomain, Pid, RotorClass};
pub use mapping::{Assignment, CostMatrix, MatchOutcome};
pub use scenarios::{run_scenario, EventLog, Metrics, ScenarioConfig, ScenarioKind};
pub use tracking::{CartesianMeasurement, GateParams, Track, TrackId, TrackStatus};
pub use world::{NodeId, PolarTruth, Role, UavNode, Vec3, WingType, WorldState};
