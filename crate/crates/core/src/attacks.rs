//! Sybil attacker behavior: phantom scheduling, identity choice and claim
//! fabrication, plus the relay used by indirect attacks.
//!
//! The attacker can put anything in a beacon but cannot stop its own body
//! from reflecting radar. Phantoms are installed in the world as bodiless
//! nodes riding on the host, so every channel treats them consistently.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::auth::WitnessReport;
use crate::channels::{gaussian, honest_beacon, AdReception, Beacon, Did, SensorConfig};
use crate::error::{Error, Result};
use crate::identity::{IdDomain, Kinematics, Pid, RotorClass};
use crate::rng::{Domain, RngStreams};
use crate::world::{NodeId, Role, Trajectory, UavNode, Vec3, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HopMode {
    Direct,
    Indirect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeMode {
    Simultaneous,
    NonSimultaneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdMode {
    Fabricated,
    Stolen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimMotion {
    FixedOffset,
    IndependentWalk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackConfig {
    pub hop_mode: HopMode,
    pub time_mode: TimeMode,
    pub id_mode: IdMode,
    pub n_sybil: usize,
    pub spawn_interval_s: f64,
    /// Distance of each phantom's claimed position from the host.
    pub claim_offset_m: f64,
    pub claim_motion: ClaimMotion,
    /// Per-axis step of the independent walk, per beacon.
    pub walk_sigma_m: f64,
    /// How far the host misreports its own position.
    pub host_claim_offset_m: f64,
    /// Attach fabricated witness reports vouching for the phantoms.
    pub forge_witness: bool,
    /// Label of the malicious host; the first malicious node if unset.
    pub host: Option<String>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            hop_mode: HopMode::Direct,
            time_mode: TimeMode::Simultaneous,
            id_mode: IdMode::Fabricated,
            n_sybil: 3,
            spawn_interval_s: 5.0,
            claim_offset_m: 30.0,
            claim_motion: ClaimMotion::FixedOffset,
            walk_sigma_m: 1.0,
            host_claim_offset_m: 10.0,
            forge_witness: false,
            host: None,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if self.n_sybil < 1 {
            return Err(("n_sybil", "must be >= 1".into()));
        }
        if self.time_mode == TimeMode::NonSimultaneous && !(self.spawn_interval_s > 0.0) {
            return Err((
                "spawn_interval_s",
                "must be > 0 for non_simultaneous".into(),
            ));
        }
        for (name, v) in [
            ("claim_offset_m", self.claim_offset_m),
            ("walk_sigma_m", self.walk_sigma_m),
            ("host_claim_offset_m", self.host_claim_offset_m),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err((name, format!("must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Namespace for fabricated identities, disjoint from provisioned ones.
const FABRICATED_TAG: u64 = 0xFA8E_0000_0000_0000;

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomPlan {
    pub node_id: NodeId,
    pub did: Did,
    pub spawn_time_s: f64,
    /// Fixed claim offset from the host (FixedOffset motion and walk start).
    pub offset: Vec3,
    /// Real node whose identity was copied (Stolen mode).
    pub stolen_from: Option<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackPlan {
    pub cfg: AttackConfig,
    pub host: NodeId,
    pub phantoms: Vec<PhantomPlan>,
}

/// Schedules the phantoms. Stolen identities are taken from legitimate nodes
/// beyond `comm_range_m` of the host and of everything the host can reach.
pub fn plan_attack(
    cfg: &AttackConfig,
    world: &WorldState,
    comm_range_m: f64,
) -> Result<AttackPlan> {
    cfg.validate()
        .map_err(|(k, m)| Error::InvalidArgument(format!("attack.{k}: {m}")))?;
    let host = match &cfg.host {
        Some(label) => world
            .by_label(label)
            .filter(|n| n.role == Role::Malicious)
            .ok_or(Error::NoMaliciousNode)?,
        None => world
            .nodes
            .iter()
            .find(|n| n.role == Role::Malicious)
            .ok_or(Error::NoMaliciousNode)?,
    };

    let victims = match cfg.id_mode {
        IdMode::Fabricated => Vec::new(),
        IdMode::Stolen => {
            let victims = steal_candidates(world, host, cfg.n_sybil, comm_range_m)?;
            victims.into_iter().map(Some).collect()
        }
    };

    let first_id = world.next_free_id();
    let n = cfg.n_sybil;
    let phantoms = (0..n)
        .map(|k| {
            let bearing = 2.0 * PI * (k + 1) as f64 / (n + 1) as f64;
            let stolen_from = victims.get(k).copied().flatten();
            let did = match stolen_from {
                Some(v) => Did::of_node(v),
                None => Did(FABRICATED_TAG | (host.id.0 << 16) | k as u64),
            };
            PhantomPlan {
                node_id: NodeId(first_id + k as u64),
                did,
                spawn_time_s: match cfg.time_mode {
                    TimeMode::Simultaneous => 0.0,
                    TimeMode::NonSimultaneous => k as f64 * cfg.spawn_interval_s,
                },
                offset: Vec3::new(bearing.cos(), bearing.sin(), 0.0) * cfg.claim_offset_m,
                stolen_from,
            }
        })
        .collect();
    Ok(AttackPlan {
        cfg: cfg.clone(),
        host: host.id,
        phantoms,
    })
}

/// Real nodes outside comm range of the host and of every node the host can
/// reach, nearest first.
pub fn steal_candidates(
    world: &WorldState,
    host: &UavNode,
    needed: usize,
    comm_range_m: f64,
) -> Result<Vec<NodeId>> {
    let real: Vec<&UavNode> = world.nodes.iter().filter(|n| !n.is_phantom()).collect();
    let neighborhood: Vec<Vec3> = real
        .iter()
        .filter(|n| (n.position - host.position).norm() <= comm_range_m)
        .map(|n| n.position)
        .collect();
    let mut victims: Vec<(f64, NodeId)> = real
        .iter()
        .filter(|n| n.role == Role::Legitimate)
        .filter(|n| {
            neighborhood
                .iter()
                .all(|p| (n.position - p).norm() > comm_range_m)
        })
        .map(|n| ((n.position - host.position).norm(), n.id))
        .collect();
    if victims.len() < needed {
        return Err(Error::NoIdentityToSteal);
    }
    victims.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(victims.into_iter().take(needed).map(|(_, id)| id).collect())
}

impl AttackPlan {
    /// Adds the phantom bodies to the world.
    pub fn install(&self, world: &mut WorldState) -> Result<()> {
        let host = world.node(self.host)?.clone();
        for (k, p) in self.phantoms.iter().enumerate() {
            let node = UavNode::phantom(p.node_id.0, &host).with_label(format!("S{}", k + 1));
            world.push_node(node, Trajectory::Hosted)?;
        }
        Ok(())
    }

    pub fn active(&self, time_s: f64) -> impl Iterator<Item = &PhantomPlan> {
        self.phantoms
            .iter()
            .filter(move |p| p.spawn_time_s <= time_s + 1e-9)
    }

    /// Every identity the attacker operates, active or not.
    pub fn attacker_dids(&self) -> BTreeSet<Did> {
        let mut s: BTreeSet<Did> = self.phantoms.iter().map(|p| p.did).collect();
        s.insert(Did::of_node(self.host));
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaimState {
    pub position: Vec3,
    pub time_s: f64,
}

/// Claimed position and velocity of a phantom at `time_s`.
///
/// FixedOffset: host truth plus the phantom's offset. IndependentWalk: starts
/// at the offset position and takes one Gaussian step per call. Velocity is
/// the finite difference from the previous claim (the host's on the first).
pub fn sybil_claims<R: rand::Rng + ?Sized>(
    phantom: &PhantomPlan,
    host: &UavNode,
    cfg: &AttackConfig,
    time_s: f64,
    prev: Option<ClaimState>,
    rng: &mut R,
) -> (Vec3, Vec3) {
    let position = match (cfg.claim_motion, prev) {
        (ClaimMotion::IndependentWalk, Some(p)) => {
            p.position
                + Vec3::new(
                    gaussian(rng, cfg.walk_sigma_m),
                    gaussian(rng, cfg.walk_sigma_m),
                    gaussian(rng, cfg.walk_sigma_m),
                )
        }
        _ => host.position + phantom.offset,
    };
    let velocity = match prev {
        Some(p) if time_s > p.time_s => (position - p.position) / (time_s - p.time_s),
        _ => host.velocity,
    };
    (position, velocity)
}

/// Mutable attacker state over a run.
#[derive(Debug, Clone)]
pub struct AttackRuntime {
    pub plan: AttackPlan,
    claims: BTreeMap<NodeId, ClaimState>,
}

impl AttackRuntime {
    pub fn new(plan: AttackPlan) -> Self {
        Self {
            plan,
            claims: BTreeMap::new(),
        }
    }

    /// The host's own (misreported) beacon plus one per active phantom.
    pub fn beacons_for(
        &mut self,
        world: &WorldState,
        host_id: NodeId,
        cfg: &SensorConfig,
        streams: &mut RngStreams,
    ) -> Result<Vec<Beacon>> {
        if host_id != self.plan.host {
            return honest_beacon(world, host_id, cfg, streams).map(|b| vec![b]);
        }
        let t = world.time_s();
        let host = world.node(host_id)?.clone();
        let mut own = honest_beacon(world, host_id, cfg, streams)?;
        own.claimed_position += Vec3::new(self.plan.cfg.host_claim_offset_m, 0.0, 0.0);
        let mut out = vec![own];
        let active: Vec<PhantomPlan> = self.plan.active(t).cloned().collect();
        for p in &active {
            let prev = self.claims.get(&p.node_id).copied();
            let rng = streams.stream(p.node_id, Domain::Walk);
            let (pos, vel) = sybil_claims(p, &host, &self.plan.cfg, t, prev, rng);
            self.claims.insert(
                p.node_id,
                ClaimState {
                    position: pos,
                    time_s: t,
                },
            );
            out.push(Beacon {
                sender_did: p.did,
                claimed_position: pos,
                claimed_velocity: vel,
                claimed_wing_type: host.wing_type,
                claimed_rotor_count: host.rotor_count,
                witness_reports: Vec::new(),
                shared_view: None,
                emit_time_s: t,
                true_origin: p.node_id,
            });
        }
        if self.plan.cfg.forge_witness {
            forge_reports(&mut out, cfg.sigma_r_m.max(0.1));
        }
        Ok(out)
    }
}

/// Each attacker beacon vouches for every other attacker identity at the
/// position that identity claims.
fn forge_reports(beacons: &mut [Beacon], sigma: f64) {
    let claims: Vec<(Did, Vec3, Vec3, f64)> = beacons
        .iter()
        .map(|b| {
            (
                b.sender_did,
                b.claimed_position,
                b.claimed_velocity,
                b.emit_time_s,
            )
        })
        .collect();
    for b in beacons.iter_mut() {
        for (did, pos, vel, t) in &claims {
            if *did == b.sender_did {
                continue;
            }
            let pid = Pid::standard(
                IdDomain::Vd,
                Kinematics {
                    position: *pos,
                    sigma_position: sigma,
                    speed: vel.norm(),
                    sigma_speed: 0.1,
                    heading: vel.y.atan2(vel.x),
                    sigma_heading: 0.05,
                },
                b.claimed_wing_type,
                RotorClass::from_count(b.claimed_rotor_count),
                *t,
            );
            b.witness_reports
                .push(WitnessReport::new(b.sender_did, *did, pid));
        }
    }
}

/// Nearest legitimate node within comm range of the attacker's body.
pub fn find_forwarder(world: &WorldState, host: NodeId, comm_range_m: f64) -> Result<NodeId> {
    let h = world.node(host)?;
    world
        .nodes
        .iter()
        .filter(|n| n.role == Role::Legitimate)
        .map(|n| ((n.position - h.position).norm(), n.id))
        .filter(|(d, _)| *d <= comm_range_m)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| id)
        .ok_or(Error::NoForwarder(host))
}

/// Indirect attacks: a legitimate forwarder re-broadcasts the attacker's
/// beacons to its own neighborhood, one extra hop later. Receivers that
/// already heard a beacon directly are skipped. Direct mode passes through.
pub fn relay_indirect(
    world: &WorldState,
    plan: &AttackPlan,
    receptions: &mut BTreeMap<NodeId, Vec<AdReception>>,
    cfg: &SensorConfig,
    hop_latency_s: f64,
) -> Result<()> {
    if plan.cfg.hop_mode == HopMode::Direct {
        return Ok(());
    }
    let fwd_id = find_forwarder(world, plan.host, cfg.comm_range_m)?;
    let fwd = world.node(fwd_id)?;
    let host_body = plan.host;
    let relayed: Vec<Beacon> = receptions
        .get(&fwd_id)
        .map(|rs| {
            rs.iter()
                .filter(|r| world.body_of(r.beacon.true_origin).ok() == Some(host_body))
                .map(|r| r.beacon.clone())
                .collect()
        })
        .unwrap_or_default();
    for rx in world.nodes.iter().filter(|n| !n.is_phantom()) {
        if rx.id == fwd_id
            || rx.id == host_body
            || (rx.position - fwd.position).norm() > cfg.comm_range_m
        {
            continue;
        }
        let list = receptions.entry(rx.id).or_default();
        for b in &relayed {
            let already = list.iter().any(|r| {
                r.beacon.sender_did == b.sender_did
                    && r.beacon.true_origin == b.true_origin
                    && r.beacon.emit_time_s == b.emit_time_s
            });
            if !already {
                list.push(AdReception {
                    beacon: b.clone(),
                    receiver: rx.id,
                    receive_time_s: b.emit_time_s + 2.0 * hop_latency_s,
                    hops: 2,
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::deliver;
    use crate::rng::stream_rng;

    fn world_with_host() -> WorldState {
        let m = UavNode::new(
            0,
            Role::Malicious,
            Vec3::new(0., 0., 100.),
            Vec3::new(5., 0., 0.),
        )
        .with_label("M");
        let u = UavNode::new(
            1,
            Role::Legitimate,
            Vec3::new(100., 0., 100.),
            Vec3::zeros(),
        )
        .with_label("U1");
        let far = UavNode::new(
            2,
            Role::Legitimate,
            Vec3::new(3000., 0., 100.),
            Vec3::zeros(),
        )
        .with_label("F1");
        WorldState::constant_velocity(vec![m, u, far], 0.01).unwrap()
    }

    #[test]
    fn simultaneous_spawns_at_zero() {
        let plan = plan_attack(&AttackConfig::default(), &world_with_host(), 500.0).unwrap();
        assert_eq!(plan.phantoms.len(), 3);
        assert!(plan.phantoms.iter().all(|p| p.spawn_time_s == 0.0));
        let dids: BTreeSet<Did> = plan.phantoms.iter().map(|p| p.did).collect();
        assert_eq!(dids.len(), 3);
        assert!(!dids.contains(&Did::of_node(NodeId(1))));
    }

    #[test]
    fn non_simultaneous_schedule() {
        let cfg = AttackConfig {
            time_mode: TimeMode::NonSimultaneous,
            spawn_interval_s: 5.0,
            ..AttackConfig::default()
        };
        let plan = plan_attack(&cfg, &world_with_host(), 500.0).unwrap();
        let spawns: Vec<f64> = plan.phantoms.iter().map(|p| p.spawn_time_s).collect();
        assert_eq!(spawns, vec![0.0, 5.0, 10.0]);
        assert_eq!(plan.active(4.99).count(), 1);
        assert_eq!(plan.active(10.0).count(), 3);
    }

    #[test]
    fn stolen_identity_is_a_far_node() {
        let cfg = AttackConfig {
            id_mode: IdMode::Stolen,
            n_sybil: 1,
            ..AttackConfig::default()
        };
        let plan = plan_attack(&cfg, &world_with_host(), 500.0).unwrap();
        assert_eq!(plan.phantoms[0].did, Did::of_node(NodeId(2)));
        let cfg = AttackConfig { n_sybil: 2, ..cfg };
        assert!(matches!(
            plan_attack(&cfg, &world_with_host(), 500.0),
            Err(Error::NoIdentityToSteal)
        ));
    }

    #[test]
    fn needs_a_malicious_node() {
        let u = UavNode::new(1, Role::Legitimate, Vec3::zeros(), Vec3::zeros());
        let w = WorldState::constant_velocity(vec![u], 0.01).unwrap();
        assert!(matches!(
            plan_attack(&AttackConfig::default(), &w, 500.0),
            Err(Error::NoMaliciousNode)
        ));
    }

    #[test]
    fn fixed_offset_claims() {
        let w = world_with_host();
        let plan = plan_attack(&AttackConfig::default(), &w, 500.0).unwrap();
        let host = w.node(NodeId(0)).unwrap();
        let mut rng = stream_rng(1, NodeId(9), Domain::Walk);
        let (p0, v0) = sybil_claims(&plan.phantoms[0], host, &plan.cfg, 0.0, None, &mut rng);
        assert_close!((p0 - host.position).norm(), 30.0, 1e-9);
        assert_eq!(v0, host.velocity);
        let w1 = crate::world::run_steps(&w, 20);
        let host1 = w1.node(NodeId(0)).unwrap();
        let prev = ClaimState {
            position: p0,
            time_s: 0.0,
        };
        let (p1, v1) = sybil_claims(
            &plan.phantoms[0],
            host1,
            &plan.cfg,
            0.2,
            Some(prev),
            &mut rng,
        );
        assert_close!((p1 - host1.position).norm(), 30.0, 1e-9);
        assert!(((p1 - p0) / 0.2 - v1).norm() < 1e-9);
    }

    #[test]
    fn host_emits_one_beacon_per_identity() {
        let mut w = world_with_host();
        let plan = plan_attack(&AttackConfig::default(), &w, 500.0).unwrap();
        plan.install(&mut w).unwrap();
        let mut rt = AttackRuntime::new(plan);
        let mut s = RngStreams::new(3);
        let b = crate::channels::emit_beacons(
            &w,
            NodeId(0),
            &SensorConfig::default(),
            Some(&mut rt),
            &mut s,
        )
        .unwrap();
        assert_eq!(b.len(), 4);
        let dids: BTreeSet<Did> = b.iter().map(|b| b.sender_did).collect();
        assert_eq!(dids.len(), 4);
    }

    #[test]
    fn relay_adds_second_hop() {
        let m = UavNode::new(0, Role::Malicious, Vec3::new(0., 0., 100.), Vec3::zeros());
        let f = UavNode::new(
            1,
            Role::Legitimate,
            Vec3::new(300., 0., 100.),
            Vec3::zeros(),
        );
        let u = UavNode::new(
            2,
            Role::Legitimate,
            Vec3::new(600., 0., 100.),
            Vec3::zeros(),
        );
        let mut w = WorldState::constant_velocity(vec![m, f, u], 0.01).unwrap();
        let cfg = AttackConfig {
            hop_mode: HopMode::Indirect,
            ..AttackConfig::default()
        };
        let plan = plan_attack(&cfg, &w, 500.0).unwrap();
        plan.install(&mut w).unwrap();
        let mut rt = AttackRuntime::new(plan.clone());
        let sensor = SensorConfig::default();
        let mut s = RngStreams::new(1);
        let beacons =
            crate::channels::emit_beacons(&w, NodeId(0), &sensor, Some(&mut rt), &mut s).unwrap();
        let mut rx = deliver(&w, &beacons, &sensor, 0.0023).unwrap();
        assert!(!rx.contains_key(&NodeId(2)));
        relay_indirect(&w, &plan, &mut rx, &sensor, 0.0023).unwrap();
        let at_u = &rx[&NodeId(2)];
        assert_eq!(at_u.len(), 4);
        assert!(at_u
            .iter()
            .all(|r| r.hops == 2 && (r.receive_time_s - 0.0046).abs() < 1e-12));

        // Direct mode leaves receptions untouched.
        let direct = AttackPlan {
            cfg: AttackConfig::default(),
            ..plan
        };
        let before = rx.clone();
        relay_indirect(&w, &direct, &mut rx, &sensor, 0.0023).unwrap();
        assert_eq!(rx, before);
    }
}
