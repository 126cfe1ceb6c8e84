//! The two information domains.
//!
//! The auditory domain (AD) is what a node hears: periodic beacons carrying a
//! digital identity and self-claimed physical state. The visual domain (VD) is
//! what a node sees: noisy echo measurements of physically present bodies.
//! Phantoms live only in the AD; they never produce an echo.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::attacks::AttackRuntime;
use crate::auth::{LocalView, WitnessReport};
use crate::error::{Error, Result};
use crate::identity::RotorClass;
use crate::rng::{Domain, RngStreams};
use crate::world::NodeId;
use crate::world::{polar_between, Role, Vec3, WingType, WorldState};

/// Variances reported with a measurement never drop below this.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Digital identity: stands for an address, key or RF fingerprint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Did(pub u64);

impl Did {
    const NODE_TAG: u64 = 0xD1D0_0000_0000_0000;

    /// The identity a real node is provisioned with.
    pub fn of_node(id: NodeId) -> Self {
        Did(Self::NODE_TAG | id.0)
    }
}

impl fmt::Display for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Beacon {
    pub sender_did: Did,
    pub claimed_position: Vec3,
    pub claimed_velocity: Vec3,
    pub claimed_wing_type: WingType,
    pub claimed_rotor_count: u8,
    pub witness_reports: Vec<WitnessReport>,
    /// The sender's latest local view, shared for merging.
    pub shared_view: Option<Arc<LocalView>>,
    pub emit_time_s: f64,
    /// Ground truth, used only for scoring.
    pub true_origin: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdReception {
    pub beacon: Beacon,
    pub receiver: NodeId,
    pub receive_time_s: f64,
    /// 1 for direct delivery, 2 when relayed by a forwarder.
    pub hops: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VdMeasurement {
    pub observer: NodeId,
    pub range_m: f64,
    pub azimuth_rad: f64,
    pub elevation_rad: f64,
    pub radial_velocity_mps: f64,
    pub rotor_class: RotorClass,
    pub var_range: f64,
    pub var_azimuth: f64,
    pub var_elevation: f64,
    pub var_radial_velocity: f64,
    pub time_s: f64,
    /// Ground truth for scoring; `None` for clutter.
    pub true_source: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub comm_range_m: f64,
    pub sense_range_m: f64,
    pub t_ad_s: f64,
    pub t_vd_s: f64,
    pub sigma_gnss_m: f64,
    pub sigma_r_m: f64,
    pub sigma_angle_rad: f64,
    pub sigma_v_mps: f64,
    pub p_detect: f64,
    pub rotor_confusion_prob: f64,
    pub clutter: bool,
    /// Mean false alarms per scan when `clutter` is on.
    pub clutter_rate: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            comm_range_m: 500.0,
            sense_range_m: 300.0,
            t_ad_s: 0.2,
            t_vd_s: 0.05,
            sigma_gnss_m: 2.0,
            sigma_r_m: 0.5,
            sigma_angle_rad: 0.017,
            sigma_v_mps: 0.1,
            p_detect: 0.95,
            rotor_confusion_prob: 0.05,
            clutter: false,
            clutter_rate: 0.0,
        }
    }
}

impl SensorConfig {
    /// Checks ranges of every field. Zero noise sigmas are accepted so
    /// noiseless runs can be configured.
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        let positive = [
            ("comm_range_m", self.comm_range_m),
            ("sense_range_m", self.sense_range_m),
            ("t_ad_s", self.t_ad_s),
            ("t_vd_s", self.t_vd_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err((name, format!("must be > 0, got {v}")));
            }
        }
        let sigmas = [
            ("sigma_gnss_m", self.sigma_gnss_m),
            ("sigma_r_m", self.sigma_r_m),
            ("sigma_angle_rad", self.sigma_angle_rad),
            ("sigma_v_mps", self.sigma_v_mps),
            ("clutter_rate", self.clutter_rate),
        ];
        for (name, v) in sigmas {
            if !(v >= 0.0 && v.is_finite()) {
                return Err((name, format!("must be >= 0, got {v}")));
            }
        }
        if self.t_vd_s > self.t_ad_s {
            return Err(("t_vd_s", "must not exceed t_ad_s".into()));
        }
        if !(self.p_detect > 0.0 && self.p_detect <= 1.0) {
            return Err((
                "p_detect",
                format!("must be in (0, 1], got {}", self.p_detect),
            ));
        }
        if !(self.rotor_confusion_prob >= 0.0 && self.rotor_confusion_prob < 1.0) {
            return Err((
                "rotor_confusion_prob",
                format!("must be in [0, 1), got {}", self.rotor_confusion_prob),
            ));
        }
        Ok(())
    }
}

/// Which tick indices are AD and VD epochs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSchedule {
    pub dt: f64,
    pub ad_every: u64,
    pub vd_every: u64,
}

impl EpochSchedule {
    /// Both periods must be whole multiples of `dt`.
    pub fn new(
        dt: f64,
        t_ad_s: f64,
        t_vd_s: f64,
    ) -> std::result::Result<Self, (&'static str, String)> {
        let steps = |name: &'static str, t: f64| {
            let k = (t / dt).round();
            if k < 1.0 || ((k * dt) - t).abs() > 1e-9 * t.max(1.0) {
                Err((
                    name,
                    format!("{t} s is not a whole multiple of dt = {dt} s"),
                ))
            } else {
                Ok(k as u64)
            }
        };
        Ok(Self {
            dt,
            ad_every: steps("t_ad_s", t_ad_s)?,
            vd_every: steps("t_vd_s", t_vd_s)?,
        })
    }

    pub fn is_ad(&self, epoch: u64) -> bool {
        epoch % self.ad_every == 0
    }

    pub fn is_vd(&self, epoch: u64) -> bool {
        epoch % self.vd_every == 0
    }
}

pub(crate) fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("finite sigma").sample(rng)
    } else {
        0.0
    }
}

/// Beacons a node sends at an AD epoch.
///
/// A legitimate node sends one beacon with its GNSS-noised position. A
/// malicious node sends one per identity it operates, with the claimed fields
/// produced by `attack`.
pub fn emit_beacons(
    world: &WorldState,
    node_id: NodeId,
    cfg: &SensorConfig,
    attack: Option<&mut AttackRuntime>,
    streams: &mut RngStreams,
) -> Result<Vec<Beacon>> {
    let node = world.node(node_id)?;
    match (node.role, attack) {
        (Role::SybilPhantom, _) => Err(Error::PhantomTransmit(node_id)),
        (Role::Malicious, Some(rt)) => rt.beacons_for(world, node_id, cfg, streams),
        // An attacker without a plan behaves like a legitimate node.
        _ => Ok(vec![honest_beacon(world, node_id, cfg, streams)?]),
    }
}

/// The beacon a node sends about itself: truth plus GNSS noise.
pub fn honest_beacon(
    world: &WorldState,
    node_id: NodeId,
    cfg: &SensorConfig,
    streams: &mut RngStreams,
) -> Result<Beacon> {
    let node = world.node(node_id)?;
    let rng = streams.stream(node_id, Domain::Gnss);
    let noise = Vec3::new(
        gaussian(rng, cfg.sigma_gnss_m),
        gaussian(rng, cfg.sigma_gnss_m),
        gaussian(rng, cfg.sigma_gnss_m),
    );
    Ok(Beacon {
        sender_did: Did::of_node(node_id),
        claimed_position: node.position + noise,
        claimed_velocity: node.velocity,
        claimed_wing_type: node.wing_type,
        claimed_rotor_count: node.rotor_count,
        witness_reports: Vec::new(),
        shared_view: None,
        emit_time_s: world.time_s(),
        true_origin: node_id,
    })
}

/// Delivers each beacon to every non-phantom node within comm range of the
/// body that physically transmitted it (the host, for phantom identities).
pub fn deliver(
    world: &WorldState,
    beacons: &[Beacon],
    cfg: &SensorConfig,
    hop_latency_s: f64,
) -> Result<BTreeMap<NodeId, Vec<AdReception>>> {
    let mut out: BTreeMap<NodeId, Vec<AdReception>> = BTreeMap::new();
    for b in beacons {
        let body = world.node(world.body_of(b.true_origin)?)?;
        for rx in world
            .nodes
            .iter()
            .filter(|n| !n.is_phantom() && n.id != body.id)
        {
            if (rx.position - body.position).norm() <= cfg.comm_range_m {
                out.entry(rx.id).or_default().push(AdReception {
                    beacon: b.clone(),
                    receiver: rx.id,
                    receive_time_s: b.emit_time_s + hop_latency_s,
                    hops: 1,
                });
            }
        }
    }
    Ok(out)
}

/// Echo measurements taken by `observer` at the current epoch.
pub fn sense(
    world: &WorldState,
    observer: NodeId,
    cfg: &SensorConfig,
    streams: &mut RngStreams,
) -> Result<Vec<VdMeasurement>> {
    let obs = world.node(observer)?;
    let t = world.time_s();
    let var = |s: f64| (s * s).max(VARIANCE_FLOOR);
    let rng = streams.stream(observer, Domain::Sense);
    let mut out = Vec::new();
    for target in &world.nodes {
        if target.id == observer || target.is_phantom() {
            continue;
        }
        let d = (target.position - obs.position).norm();
        if d > cfg.sense_range_m {
            continue;
        }
        if rng.random::<f64>() >= cfg.p_detect {
            continue;
        }
        let truth = polar_between(obs.position, obs.velocity, target.position, target.velocity)?;
        let mut rotor = RotorClass::from_count(target.rotor_count);
        let range = (truth.range + gaussian(rng, cfg.sigma_r_m)).max(0.0);
        let azimuth = crate::world::wrap_angle(truth.azimuth + gaussian(rng, cfg.sigma_angle_rad));
        let elevation = truth.elevation + gaussian(rng, cfg.sigma_angle_rad);
        let radial_velocity = truth.radial_velocity + gaussian(rng, cfg.sigma_v_mps);
        if cfg.rotor_confusion_prob > 0.0 && rng.random::<f64>() < cfg.rotor_confusion_prob {
            rotor = wrong_class(rng, rotor);
        }
        out.push(VdMeasurement {
            observer,
            range_m: range,
            azimuth_rad: azimuth,
            elevation_rad: elevation,
            radial_velocity_mps: radial_velocity,
            rotor_class: rotor,
            var_range: var(cfg.sigma_r_m),
            var_azimuth: var(cfg.sigma_angle_rad),
            var_elevation: var(cfg.sigma_angle_rad),
            var_radial_velocity: var(cfg.sigma_v_mps),
            time_s: t,
            true_source: Some(target.id),
        });
    }
    if cfg.clutter && cfg.clutter_rate > 0.0 {
        let n = Poisson::new(cfg.clutter_rate)
            .expect("positive rate")
            .sample(rng) as usize;
        for _ in 0..n {
            // Uniform in the sensing ball.
            let range = cfg.sense_range_m * rng.random::<f64>().cbrt();
            let azimuth = crate::world::wrap_angle(
                rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            );
            let elevation = (rng.random_range(-1.0..1.0f64)).asin();
            let class = RotorClass::ALL[rng.random_range(0..RotorClass::ALL.len())];
            out.push(VdMeasurement {
                observer,
                range_m: range,
                azimuth_rad: azimuth,
                elevation_rad: elevation,
                radial_velocity_mps: gaussian(rng, 5.0),
                rotor_class: class,
                var_range: var(cfg.sigma_r_m),
                var_azimuth: var(cfg.sigma_angle_rad),
                var_elevation: var(cfg.sigma_angle_rad),
                var_radial_velocity: var(cfg.sigma_v_mps),
                time_s: t,
                true_source: None,
            });
        }
    }
    Ok(out)
}

fn wrong_class<R: Rng + ?Sized>(rng: &mut R, actual: RotorClass) -> RotorClass {
    let others: Vec<RotorClass> = RotorClass::ALL
        .into_iter()
        .filter(|c| *c != actual)
        .collect();
    others[rng.random_range(0..others.len())]
}
