//! Epoch-driven simulation shared by every scenario kind.
//!
//! Each tick the world advances by `dt`. On VD epochs every legitimate node
//! senses and updates its tracks; on AD epochs every transmitting node
//! beacons, and every legitimate node maps identities, checks claims and
//! rebuilds its local view. Views and witness reports ride on the next
//! beacon, so they arrive one AD epoch after they were built.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use nalgebra::Matrix3;
use serde_json::json;

use crate::attacks::{plan_attack, relay_indirect, AttackRuntime};
use crate::auth::{
    build_local_view, mmse_check, AuthConfig, HeardDid, LocalView, ViewInput, WitnessReport,
};
use crate::channels::{
    deliver, emit_beacons, sense, AdReception, Did, EpochSchedule, SensorConfig,
};
use crate::error::Result;
use crate::identity::{extract_pid_ad, extract_pid_vd, population_weights, IdentityConfig, Pid};
use crate::mapping::{map_identities, MatchOutcome};
use crate::rng::RngStreams;
use crate::tracking::{
    kf_predict, ucm_convert, FilterConfig, Track, TrackId, TrackStatus, Tracker,
};
use crate::world::{NodeId, Role, Vec3, WorldState};

use super::config::ScenarioConfig;
use super::report::EventLog;

/// What a certifier remembers about one identity.
#[derive(Debug, Clone, PartialEq)]
pub struct HeardState {
    pub first_heard_s: f64,
    /// Recent claims, oldest first.
    pub claims: VecDeque<Pid>,
    /// Recent claimed positions, oldest first.
    pub positions: VecDeque<Vec3>,
    /// Ground truth of the latest beacon; scoring only.
    pub origin: NodeId,
    pub last_heard_s: f64,
    /// AD epochs since the identity was last bound to a track.
    pub since_bound: Option<usize>,
}

/// A legitimate node's authentication state.
#[derive(Debug, Clone)]
pub struct Certifier {
    pub id: NodeId,
    pub did: Did,
    pub tracker: Tracker,
    pub heard: BTreeMap<Did, HeardState>,
    /// Identities heard at the latest AD epoch.
    pub heard_now: BTreeSet<Did>,
    /// Identity to track bindings from the latest mapping.
    pub bindings: BTreeMap<Did, TrackId>,
    pub view: Option<Arc<LocalView>>,
    /// Latest view received from each other certifier.
    pub received_views: BTreeMap<NodeId, Arc<LocalView>>,
    reports_out: Vec<WitnessReport>,
}

impl Certifier {
    fn new(id: NodeId, tracker: Tracker) -> Self {
        Self {
            id,
            did: Did::of_node(id),
            tracker,
            heard: BTreeMap::new(),
            heard_now: BTreeSet::new(),
            bindings: BTreeMap::new(),
            view: None,
            received_views: BTreeMap::new(),
            reports_out: Vec::new(),
        }
    }

    pub fn track_of(&self, did: Did) -> Option<&Track> {
        self.bindings.get(&did).and_then(|t| self.tracker.get(*t))
    }

    pub fn did_of(&self, track: TrackId) -> Option<Did> {
        self.bindings
            .iter()
            .find(|(_, t)| **t == track)
            .map(|(d, _)| *d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochInfo {
    pub epoch: u64,
    pub time_s: f64,
    pub ad: bool,
    pub vd: bool,
}

pub struct Simulation {
    pub cfg: ScenarioConfig,
    pub world: WorldState,
    pub schedule: EpochSchedule,
    pub attack: Option<AttackRuntime>,
    pub certifiers: BTreeMap<NodeId, Certifier>,
    pub events: EventLog,
    /// Times an identity arrived from two different transmitters in one epoch.
    pub did_collisions: u64,
    sensor: SensorConfig,
    auth: AuthConfig,
    identity: IdentityConfig,
    filter: FilterConfig,
    streams: RngStreams,
    hop_latency_s: f64,
    history_cap: usize,
    epoch: u64,
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let mut world = cfg.build_world()?;
        let attack = match &cfg.attack {
            Some(a) => {
                let plan = plan_attack(a, &world, cfg.noise.comm_range_m)?;
                plan.install(&mut world)?;
                Some(AttackRuntime::new(plan))
            }
            None => None,
        };
        let th = &cfg.thresholds;
        let certifiers = world
            .nodes
            .iter()
            .filter(|n| n.role == Role::Legitimate)
            .map(|n| {
                (
                    n.id,
                    Certifier::new(n.id, Tracker::new(th.gate(), th.filter())),
                )
            })
            .collect();
        Ok(Self {
            world,
            schedule: cfg.schedule(),
            attack,
            certifiers,
            events: EventLog::default(),
            did_collisions: 0,
            sensor: cfg.noise.clone(),
            auth: th.auth(),
            identity: th.identity(),
            filter: th.filter(),
            streams: RngStreams::new(cfg.scenario.seed),
            hop_latency_s: cfg.latency.t_hop_ms / 1000.0,
            history_cap: th.mmse_window.max(th.baseline_window),
            epoch: 0,
            cfg: cfg.clone(),
        })
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Display label of an identity: the node (or phantom) it belongs to.
    pub fn did_label(&self, did: Did) -> String {
        if let Some(rt) = &self.attack {
            if let Some(p) = rt.plan.phantoms.iter().find(|p| p.did == did) {
                if let Ok(n) = self.world.node(p.node_id) {
                    return n.label.clone();
                }
            }
        }
        self.world
            .nodes
            .iter()
            .find(|n| !n.is_phantom() && Did::of_node(n.id) == did)
            .map(|n| n.label.clone())
            .unwrap_or_else(|| did.to_string())
    }

    /// Sensing and/or beaconing for the current tick, without advancing time.
    pub fn run_epoch(&mut self) -> Result<EpochInfo> {
        let info = EpochInfo {
            epoch: self.epoch,
            time_s: self.world.time_s(),
            ad: self.schedule.is_ad(self.epoch),
            vd: self.schedule.is_vd(self.epoch),
        };
        self.events.push(
            info.epoch,
            info.time_s,
            "tick",
            json!({ "ad": info.ad, "vd": info.vd }),
        );
        if info.vd {
            self.vd_scan()?;
        }
        if info.ad {
            self.ad_round(info)?;
        }
        Ok(info)
    }

    pub fn advance(&mut self) {
        self.world = self.world.step();
        self.epoch += 1;
    }

    fn vd_scan(&mut self) -> Result<()> {
        let t = self.world.time_s();
        for c in self.certifiers.values_mut() {
            let own = self.world.node(c.id)?.position;
            let raw = sense(&self.world, c.id, &self.sensor, &mut self.streams)?;
            let scan = raw
                .iter()
                .map(|m| ucm_convert(m, own))
                .collect::<Result<Vec<_>>>()?;
            c.tracker.process_scan(&scan, t)?;
        }
        Ok(())
    }

    fn ad_round(&mut self, info: EpochInfo) -> Result<()> {
        let mut beacons = Vec::new();
        let senders: Vec<NodeId> = self
            .world
            .nodes
            .iter()
            .filter(|n| !n.is_phantom())
            .map(|n| n.id)
            .collect();
        for id in senders {
            let mut out = emit_beacons(
                &self.world,
                id,
                &self.sensor,
                self.attack.as_mut(),
                &mut self.streams,
            )?;
            if let Some(c) = self.certifiers.get(&id) {
                for b in &mut out {
                    b.witness_reports = c.reports_out.clone();
                    b.shared_view = c.view.clone();
                }
            }
            beacons.extend(out);
        }
        let mut receptions = deliver(&self.world, &beacons, &self.sensor, self.hop_latency_s)?;
        if let Some(rt) = &self.attack {
            relay_indirect(
                &self.world,
                &rt.plan,
                &mut receptions,
                &self.sensor,
                self.hop_latency_s,
            )?;
        }
        let ids: Vec<NodeId> = self.certifiers.keys().copied().collect();
        for id in ids {
            let list = receptions.remove(&id).unwrap_or_default();
            self.certify(id, &list, info)?;
        }
        Ok(())
    }

    fn certify(&mut self, id: NodeId, receptions: &[AdReception], info: EpochInfo) -> Result<()> {
        let t = info.time_s;
        let own = self.world.node(id)?.position;
        let cap = self.history_cap;

        // One reception per identity: fewest hops, then arrival order.
        let mut chosen: BTreeMap<Did, &AdReception> = BTreeMap::new();
        let mut origins: BTreeMap<Did, BTreeSet<NodeId>> = BTreeMap::new();
        for r in receptions {
            let did = r.beacon.sender_did;
            origins.entry(did).or_default().insert(r.beacon.true_origin);
            match chosen.get(&did) {
                Some(prev) if prev.hops <= r.hops => {}
                _ => {
                    chosen.insert(did, r);
                }
            }
        }
        let mut collisions = Vec::new();
        for (did, o) in &origins {
            if o.len() > 1 {
                self.did_collisions += 1;
                collisions.push((*did, o.iter().map(|n| n.0).collect::<Vec<_>>()));
            }
        }
        for (did, o) in collisions {
            let label = self.did_label(did);
            let receiver = self.world.node(id)?.label.clone();
            self.events.push(
                info.epoch,
                t,
                "did_collision",
                json!({ "receiver": receiver, "did": label, "origins": o }),
            );
        }

        let sensor = &self.sensor;
        let ident = &self.identity;
        let c = self.certifiers.get_mut(&id).expect("certifier exists");
        let mut reports = Vec::new();
        for r in receptions {
            reports.extend(r.beacon.witness_reports.iter().cloned());
            if let Some(v) = &r.beacon.shared_view {
                if v.owner != id {
                    let newer = c
                        .received_views
                        .get(&v.owner)
                        .map_or(true, |old| old.time_s <= v.time_s);
                    if newer {
                        c.received_views.insert(v.owner, Arc::clone(v));
                    }
                }
            }
        }

        c.heard_now.clear();
        let mut ad_dids = Vec::new();
        let mut ad_pids = Vec::new();
        for (did, r) in &chosen {
            let pid = extract_pid_ad(r, sensor, ident);
            let hs = c.heard.entry(*did).or_insert_with(|| HeardState {
                first_heard_s: t,
                claims: VecDeque::new(),
                positions: VecDeque::new(),
                origin: r.beacon.true_origin,
                last_heard_s: t,
                since_bound: None,
            });
            if hs.claims.len() == cap {
                hs.claims.pop_front();
                hs.positions.pop_front();
            }
            hs.claims.push_back(pid.clone());
            hs.positions.push_back(r.beacon.claimed_position);
            hs.origin = r.beacon.true_origin;
            hs.last_heard_s = t;
            c.heard_now.insert(*did);
            ad_dids.push(*did);
            ad_pids.push(pid);
        }

        let mut vd_ids = Vec::new();
        let mut vd_pids = Vec::new();
        for tr in c.tracker.confirmed() {
            let now = kf_predict(tr, t - tr.time_s, &self.filter);
            if !now.is_confirmed() {
                continue;
            }
            vd_pids.push(extract_pid_vd(&now, ident)?);
            vd_ids.push(tr.id);
        }

        c.bindings.clear();
        let mut similarity_of = BTreeMap::new();
        if !vd_pids.is_empty() || !ad_pids.is_empty() {
            let w = population_weights(&ad_pids, ident.weight_floor);
            let outcomes =
                map_identities(&vd_pids, &ad_pids, &w, self.cfg.thresholds.sim_min, ident)?;
            for o in outcomes {
                if let MatchOutcome::Matched { vd, ad, similarity } = o {
                    c.bindings.insert(ad_dids[ad], vd_ids[vd]);
                    similarity_of.insert(ad_dids[ad], similarity);
                }
            }
        }
        for tr in c.tracker.tracks.iter_mut() {
            tr.associated_did = None;
        }
        for (did, tid) in &c.bindings {
            if let Some(tr) = c.tracker.get_mut(*tid) {
                tr.associated_did = Some(*did);
            }
        }

        let window = self.auth.mmse_window;
        for did in &ad_dids {
            let hs = c.heard.get_mut(did).expect("just inserted");
            hs.since_bound = match (c.bindings.contains_key(did), hs.since_bound) {
                (true, _) => Some(0),
                (false, Some(n)) => Some(n + 1),
                (false, None) => None,
            };
        }
        let mut heard = Vec::new();
        for did in &ad_dids {
            let hs = &c.heard[did];
            let claim = hs.claims.back().expect("just pushed").clone();
            let track = c.bindings.get(did).copied();
            let mmse = track.and_then(|tid| {
                let tr = c.tracker.get(tid)?;
                let skip = hs.claims.len().saturating_sub(window);
                let recent: Vec<Pid> = hs.claims.iter().skip(skip).cloned().collect();
                mmse_check(&recent, tr, self.auth.mmse_tau).ok()
            });
            let pending_track =
                track.is_none() && pending_near(&c.tracker, claim.position(), t, &self.filter);
            heard.push(HeardDid {
                did: *did,
                claimed_range_m: (claim.position().unwrap_or(own) - own).norm(),
                claim,
                first_heard_s: hs.first_heard_s,
                pending_track,
                bound_recently: hs.since_bound.is_some_and(|n| n < window),
                track,
                mmse,
            });
        }
        let input = ViewInput {
            owner: id,
            owner_did: c.did,
            time_s: t,
            heard,
            reports,
        };
        let view = build_local_view(&input, &self.auth, sensor.sense_range_m);

        let mut out = Vec::new();
        for did in view.consistent() {
            if did == c.did || out.len() >= self.auth.witness_cap {
                continue;
            }
            if let Some(tr) = c.track_of(did) {
                let now = kf_predict(tr, t - tr.time_s, &self.filter);
                if let Ok(pid) = extract_pid_vd(&now, ident) {
                    out.push(WitnessReport::new(c.did, did, pid));
                }
            }
        }
        c.reports_out = out;

        let inconsistent = view
            .labels
            .values()
            .filter(|l| **l == crate::auth::Label::Inconsistent)
            .count();
        let payload = json!({
            "node": self.world.node(id)?.label,
            "heard": ad_dids.len(),
            "tracks": vd_ids.len(),
            "matched": c.bindings.len(),
            "inconsistent": inconsistent,
        });
        c.view = Some(Arc::new(view));
        self.events.push(info.epoch, t, "certify", payload);
        Ok(())
    }

    /// Position and velocity truth of a node.
    pub fn truth(&self, id: NodeId) -> Result<(Vec3, Vec3)> {
        let n = self.world.node(id)?;
        Ok((n.position, n.velocity))
    }

    /// Claim covariance used for fusion, floored to stay invertible.
    pub fn claim_covariance(&self) -> Matrix3<f64> {
        Matrix3::identity() * (self.sensor.sigma_gnss_m.powi(2)).max(1e-12)
    }
}

/// Whether a tentative track sits within the gate of `claim`.
fn pending_near(tracker: &Tracker, claim: Option<Vec3>, t: f64, filter: &FilterConfig) -> bool {
    let Some(claim) = claim else { return false };
    tracker
        .tracks
        .iter()
        .filter(|tr| tr.status == TrackStatus::Tentative)
        .any(|tr| {
            (kf_predict(tr, t - tr.time_s, filter).position() - claim).norm()
                <= tracker.gate.gate_radius_m
        })
}
