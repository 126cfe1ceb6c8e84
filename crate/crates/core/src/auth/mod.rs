//! Requestor/witness/certifier authentication.
//!
//! Each certifier labels every identity it hears by checking the claimed
//! physical state against what it sees, and records which identities it has
//! verified as distinct bodies. Views from several certifiers are merged: the
//! largest clique of identities that a quorum agrees are real and mutually
//! distinct forms the trusted core.

pub mod baseline;
pub mod clique;
pub mod mmse;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::channels::Did;
use crate::identity::{IdDomain, Pid};
use crate::tracking::TrackId;
use crate::world::NodeId;

pub use baseline::{baseline_mobility_detect, BaselineConfig};
pub use clique::{bron_kerbosch, Graph};
pub use mmse::{mmse_check, MmseResult, CHI2_3DOF_999};

/// A witness's own VD measurement of a subject, carried in its beacons.
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessReport {
    pub witness_did: Did,
    pub subject_did: Did,
    pub measured_pid: Pid,
    pub time_s: f64,
}

impl WitnessReport {
    pub fn new(witness_did: Did, subject_did: Did, measured_pid: Pid) -> Self {
        debug_assert_eq!(measured_pid.domain, IdDomain::Vd);
        let time_s = measured_pid.time_s;
        Self {
            witness_did,
            subject_did,
            measured_pid,
            time_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Consistent,
    Inconsistent,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuthConfig {
    pub mmse_tau: f64,
    /// Claims per identity used by the MMSE check.
    pub mmse_window: usize,
    pub quorum: usize,
    /// Identities heard for less than this are not judged yet.
    pub grace_s: f64,
    /// Claims farther than sense range minus this margin are not judged.
    pub range_margin_m: f64,
    /// Witness reports carried per beacon.
    pub witness_cap: usize,
    /// Accept reports from consistent witnesses for identities beyond range.
    pub corroborate: bool,
}

impl Default for AuthConfig {
    fn default() -> Self {
        Self {
            mmse_tau: CHI2_3DOF_999,
            mmse_window: 5,
            quorum: 2,
            grace_s: 0.2,
            range_margin_m: 10.0,
            witness_cap: 8,
            corroborate: true,
        }
    }
}

/// What a certifier knows about one heard identity at an AD epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct HeardDid {
    pub did: Did,
    /// Latest claim.
    pub claim: Pid,
    /// Distance from the certifier to the claimed position.
    pub claimed_range_m: f64,
    pub first_heard_s: f64,
    /// Track the identity was mapped to at this epoch.
    pub track: Option<TrackId>,
    pub mmse: Option<MmseResult>,
    /// An unconfirmed track lies near the claimed position.
    pub pending_track: bool,
    /// Mapped to a track at one of the last `mmse_window` AD epochs.
    pub bound_recently: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViewInput {
    pub owner: NodeId,
    pub owner_did: Did,
    pub time_s: f64,
    pub heard: Vec<HeardDid>,
    pub reports: Vec<WitnessReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalView {
    pub owner: NodeId,
    pub owner_did: Did,
    pub time_s: f64,
    pub labels: BTreeMap<Did, Label>,
    /// Unordered pairs stored as (smaller, larger).
    pub edges: BTreeSet<(Did, Did)>,
    /// Identities this owner bound to one of its tracks.
    pub matched: BTreeSet<Did>,
}

impl LocalView {
    pub fn new(owner: NodeId, owner_did: Did, time_s: f64) -> Self {
        let mut labels = BTreeMap::new();
        labels.insert(owner_did, Label::Consistent);
        Self {
            owner,
            owner_did,
            time_s,
            labels,
            edges: BTreeSet::new(),
            matched: BTreeSet::new(),
        }
    }

    pub fn label(&self, did: Did) -> Option<Label> {
        self.labels.get(&did).copied()
    }

    pub fn add_edge(&mut self, a: Did, b: Did) {
        if a != b && self.labels.contains_key(&a) && self.labels.contains_key(&b) {
            self.edges.insert((a.min(b), a.max(b)));
        }
    }

    pub fn consistent(&self) -> impl Iterator<Item = Did> + '_ {
        self.labels
            .iter()
            .filter(|(_, l)| **l == Label::Consistent)
            .map(|(d, _)| *d)
    }
}

/// Labels every heard identity and adds distinctness edges.
///
/// The owner is always Consistent. A heard identity is Unknown during its
/// grace period; Consistent if mapped to a track and its claims pass MMSE;
/// Inconsistent if mapped and failing, or unmapped while claiming a position
/// the owner should be able to see; Unknown if unmapped and claiming a
/// position beyond sensing range (unless a consistent witness vouches for
/// it) or next to a track that is not confirmed yet.
pub fn build_local_view(input: &ViewInput, cfg: &AuthConfig, sense_range_m: f64) -> LocalView {
    let mut view = LocalView::new(input.owner, input.owner_did, input.time_s);
    let mut beyond = Vec::new();
    for h in &input.heard {
        if h.did == input.owner_did {
            continue;
        }
        if h.track.is_some() || h.bound_recently {
            view.matched.insert(h.did);
        }
        let label = if input.time_s - h.first_heard_s < cfg.grace_s - 1e-9 {
            Label::Unknown
        } else {
            match (h.track, h.mmse) {
                (Some(_), Some(m)) if m.pass => Label::Consistent,
                (Some(_), Some(_)) => Label::Inconsistent,
                (Some(_), None) => Label::Unknown,
                (None, _) if h.claimed_range_m > sense_range_m - cfg.range_margin_m => {
                    beyond.push(h);
                    Label::Unknown
                }
                (None, _) if h.pending_track => Label::Unknown,
                (None, _) => Label::Inconsistent,
            }
        };
        view.labels.insert(h.did, label);
    }

    if cfg.corroborate {
        for h in beyond {
            if corroborated(h, &input.reports, &view, cfg.mmse_tau) {
                view.labels.insert(h.did, Label::Consistent);
            }
        }
    }

    // Distinctness: consistent identities on different tracks, plus the owner.
    let bound: Vec<(Did, TrackId)> = input
        .heard
        .iter()
        .filter(|h| view.label(h.did) == Some(Label::Consistent))
        .filter_map(|h| h.track.map(|t| (h.did, t)))
        .collect();
    for (i, (a, ta)) in bound.iter().enumerate() {
        view.add_edge(input.owner_did, *a);
        for (b, tb) in &bound[i + 1..] {
            if ta != tb {
                view.add_edge(*a, *b);
            }
        }
    }
    view
}

fn corroborated(h: &HeardDid, reports: &[WitnessReport], view: &LocalView, tau: f64) -> bool {
    let (Some(claim), Some(sc)) = (h.claim.position(), h.claim.position_sigma()) else {
        return false;
    };
    reports.iter().any(|r| {
        if r.subject_did != h.did || view.label(r.witness_did) != Some(Label::Consistent) {
            return false;
        }
        let (Some(p), Some(sm)) = (r.measured_pid.position(), r.measured_pid.position_sigma())
        else {
            return false;
        };
        (claim - p).norm_squared() / (sc * sc + sm * sm) <= tau
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GlobalView {
    pub trusted_core: BTreeSet<Did>,
    pub suspects: BTreeSet<Did>,
    /// Every identity labeled in any contributing view.
    pub heard: BTreeSet<Did>,
    /// Identities some contributing certifier bound to a real track.
    pub matched: BTreeSet<Did>,
    pub contributing_views: usize,
}

/// Merges local views under quorum `q`.
///
/// Agreement graph: identities Consistent in at least `q` views and
/// Inconsistent in none, joined where at least `q` views hold the
/// distinctness edge. The trusted core is its largest maximal clique (ties to
/// the lexicographically smallest sorted identity list).
pub fn merge_views(views: &[LocalView], q: usize) -> GlobalView {
    let q = q.max(1);
    let mut consistent: BTreeMap<Did, usize> = BTreeMap::new();
    let mut inconsistent: BTreeMap<Did, usize> = BTreeMap::new();
    let mut edge_votes: BTreeMap<(Did, Did), usize> = BTreeMap::new();
    let mut out = GlobalView {
        contributing_views: views.len(),
        ..GlobalView::default()
    };
    for v in views {
        for (d, l) in &v.labels {
            out.heard.insert(*d);
            match l {
                Label::Consistent => *consistent.entry(*d).or_default() += 1,
                Label::Inconsistent => *inconsistent.entry(*d).or_default() += 1,
                Label::Unknown => {}
            }
        }
        for e in &v.edges {
            *edge_votes.entry(*e).or_default() += 1;
        }
        out.matched.extend(v.matched.iter().copied());
    }

    let vertices: Vec<Did> = consistent
        .iter()
        .filter(|(d, n)| **n >= q && !inconsistent.contains_key(d))
        .map(|(d, _)| *d)
        .collect();
    let index: BTreeMap<Did, usize> = vertices.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let mut g = Graph::new(vertices.len());
    for ((a, b), n) in &edge_votes {
        if *n >= q {
            if let (Some(&i), Some(&j)) = (index.get(a), index.get(b)) {
                g.add_edge(i, j);
            }
        }
    }
    // Cliques come back sorted, so the first of maximal size is the
    // lexicographically smallest.
    let cliques = bron_kerbosch(&g);
    let best = cliques
        .iter()
        .fold(None::<&Vec<usize>>, |acc, c| match acc {
            Some(b) if b.len() >= c.len() => Some(b),
            _ => Some(c),
        });
    if let Some(c) = best {
        out.trusted_core = c.iter().map(|&i| vertices[i]).collect();
    }
    out.suspects = out
        .heard
        .iter()
        .filter(|d| !out.trusted_core.contains(d) && inconsistent.contains_key(d))
        .copied()
        .collect();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictClass {
    Trusted,
    Sybil,
    Malicious,
    Unknown,
}

impl VerdictClass {
    pub fn is_flagged(self) -> bool {
        matches!(self, VerdictClass::Sybil | VerdictClass::Malicious)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub did: Did,
    pub class: VerdictClass,
}

/// One verdict per heard identity, in identity order. A suspect with a
/// body (bound to a real track by some certifier) is Malicious; one without
/// is Sybil.
pub fn classify(global: &GlobalView) -> Vec<Verdict> {
    global
        .heard
        .iter()
        .map(|&did| {
            let class = if global.trusted_core.contains(&did) {
                VerdictClass::Trusted
            } else if global.suspects.contains(&did) {
                if global.matched.contains(&did) {
                    VerdictClass::Malicious
                } else {
                    VerdictClass::Sybil
                }
            } else {
                VerdictClass::Unknown
            };
            Verdict { did, class }
        })
        .collect()
}
