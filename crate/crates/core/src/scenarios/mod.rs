//! End-to-end scenarios: beam management, emergency alerts and Sybil
//! detection, driven from a TOML configuration.

pub mod config;
pub mod latency;
pub mod metrics;
pub mod report;
pub mod sim;

use std::collections::{BTreeMap, BTreeSet};

use serde_json::json;

use crate::auth::{
    baseline_mobility_detect, classify, merge_views, LocalView, Verdict, VerdictClass,
};
use crate::channels::Did;
use crate::error::{Error, Result};
use crate::tracking::predict_ahead;
use crate::world::{NodeId, Role, Vec3};

pub use config::{NodeSpec, ScenarioConfig, ScenarioKind, ScenarioSection, Thresholds};
pub use latency::{
    alert_latency_exchange, alert_latency_isac, beam_access_latency, select_most_endangered,
    BeamMethod, LatencyConfig, Threat,
};
pub use metrics::{detection_metrics, mean, metric_names, percentile, DetectionScores, Metrics};
pub use report::{emit_report, format_g9, EventLog};
pub use sim::{Certifier, EpochInfo, Simulation};

/// Runs a scenario to completion.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<(Metrics, EventLog)> {
    let mut sim = Simulation::new(cfg)?;
    let mut obs: Box<dyn Observer> = match cfg.scenario.kind {
        ScenarioKind::BeamManagement => Box::new(BeamObserver::new(&sim)?),
        ScenarioKind::EmergencyAlert => Box::new(AlertObserver::new(&sim)?),
        ScenarioKind::SybilDetection => Box::new(SybilObserver::new(&sim)?),
    };
    for _ in 0..cfg.epochs() {
        let info = sim.run_epoch()?;
        obs.after_epoch(&mut sim, info)?;
        sim.advance();
    }
    let name = if cfg.scenario.name.is_empty() {
        cfg.scenario.kind.as_str().to_string()
    } else {
        cfg.scenario.name.clone()
    };
    let mut m = Metrics::new(name, cfg.scenario.kind, cfg.scenario.seed);
    obs.finish(&sim, &mut m);
    debug_assert_eq!(
        m.scalars.keys().map(String::as_str).collect::<Vec<_>>(),
        metric_names(cfg.scenario.kind)
    );
    Ok((m, sim.events))
}

/// Signed range errors (estimated minus true) from an emergency-alert
/// configuration, pooled over seeds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RangingErrors {
    pub ad: Vec<f64>,
    pub vd: Vec<f64>,
    pub fused: Vec<f64>,
}

pub fn ranging_error_suite(cfg: &ScenarioConfig, seeds: &[u64]) -> Result<RangingErrors> {
    if cfg.scenario.kind != ScenarioKind::EmergencyAlert {
        return Err(Error::InvalidArgument(
            "ranging needs an emergency_alert scenario".into(),
        ));
    }
    let mut out = RangingErrors::default();
    for &seed in seeds {
        let mut c = cfg.clone();
        c.scenario.seed = seed;
        let (m, _) = run_scenario(&c)?;
        out.ad.extend_from_slice(m.series("ranging_error_ad_m"));
        out.vd.extend_from_slice(m.series("ranging_error_vd_m"));
        out.fused
            .extend_from_slice(m.series("ranging_error_fused_m"));
    }
    Ok(out)
}

trait Observer {
    fn after_epoch(&mut self, sim: &mut Simulation, info: EpochInfo) -> Result<()>;
    fn finish(&self, sim: &Simulation, m: &mut Metrics);
}

fn legit_by_label(sim: &Simulation, label: Option<&String>, last: bool) -> Result<NodeId> {
    if let Some(l) = label {
        return sim
            .world
            .by_label(l)
            .map(|n| n.id)
            .ok_or_else(|| Error::InvalidArgument(format!("no node `{l}`")));
    }
    let mut legit = sim
        .world
        .nodes
        .iter()
        .filter(|n| n.role == Role::Legitimate);
    let pick = if last {
        legit.next_back()
    } else {
        legit.next()
    };
    pick.map(|n| n.id)
        .ok_or_else(|| Error::InvalidArgument("no legitimate node".into()))
}

fn angle_deg(a: Vec3, b: Vec3) -> f64 {
    let c = a.dot(&b) / (a.norm() * b.norm());
    c.clamp(-1.0, 1.0).acos().to_degrees()
}

struct PendingPointing {
    due_epoch: u64,
    target: NodeId,
    predicted: Vec3,
    stale: Vec3,
}

/// Pointing accuracy and access latency seen from the sender.
struct BeamObserver {
    sender: NodeId,
    pending: Vec<PendingPointing>,
    pred_err: Vec<f64>,
    stale_err: Vec<f64>,
    isac: Vec<f64>,
    sweep: Vec<f64>,
}

impl BeamObserver {
    fn new(sim: &Simulation) -> Result<Self> {
        Ok(Self {
            sender: legit_by_label(sim, sim.cfg.scenario.sender.as_ref(), false)?,
            pending: Vec::new(),
            pred_err: Vec::new(),
            stale_err: Vec::new(),
            isac: Vec::new(),
            sweep: Vec::new(),
        })
    }
}

impl Observer for BeamObserver {
    fn after_epoch(&mut self, sim: &mut Simulation, info: EpochInfo) -> Result<()> {
        let (own, own_v) = sim.truth(self.sender)?;
        let c = &sim.certifiers[&self.sender];

        let mut due = Vec::new();
        self.pending.retain(|p| {
            if p.due_epoch == info.epoch {
                due.push((p.target, p.predicted, p.stale));
                false
            } else {
                true
            }
        });
        for (target, predicted, stale) in due {
            let truth = sim.truth(target)?.0 - own;
            let (ep, es) = (angle_deg(predicted, truth), angle_deg(stale, truth));
            self.pred_err.push(ep);
            self.stale_err.push(es);
            let label = &sim.world.node(target)?.label;
            sim.events.push(
                info.epoch,
                info.time_s,
                "pointing",
                json!({ "target": label, "pred_deg": ep, "stale_deg": es }),
            );
        }

        if info.vd {
            let t_vd = sim.cfg.noise.t_vd_s;
            let ahead = own + own_v * 2.0 * t_vd;
            for tr in c.tracker.confirmed() {
                let Some(src) = tr.true_source else { continue };
                let pred = predict_ahead(tr, 2, t_vd, ahead)?;
                self.pending.push(PendingPointing {
                    due_epoch: info.epoch + 2 * sim.schedule.vd_every,
                    target: src,
                    predicted: pred.position - ahead,
                    stale: tr.position() - own,
                });
            }
        }

        if info.ad {
            let lc = &sim.cfg.latency;
            let mut accesses = Vec::new();
            for (did, tid) in &c.bindings {
                let Some(tr) = c.tracker.get(*tid) else {
                    continue;
                };
                let Some(src) = tr.true_source else { continue };
                let d = (sim.truth(src)?.0 - own).norm();
                let isac = beam_access_latency(BeamMethod::Isac, lc, d);
                let sweep = beam_access_latency(BeamMethod::Sweep, lc, d);
                self.isac.push(isac);
                self.sweep.push(sweep);
                accesses.push((*did, d, isac, sweep));
            }
            for (did, d, isac, sweep) in accesses {
                let label = sim.did_label(did);
                sim.events.push(
                    info.epoch,
                    info.time_s,
                    "access",
                    json!({ "target": label, "distance_m": d, "isac_ms": isac, "sweep_ms": sweep }),
                );
            }
        }
        Ok(())
    }

    fn finish(&self, _sim: &Simulation, m: &mut Metrics) {
        let delta: Vec<f64> = self
            .sweep
            .iter()
            .zip(&self.isac)
            .map(|(s, i)| s - i)
            .collect();
        m.set("beam_latency_isac_ms", mean(&self.isac));
        m.set("beam_latency_sweep_ms", mean(&self.sweep));
        m.set("beam_latency_delta_ms", mean(&delta));
        m.set("pointing_error_pred_deg", mean(&self.pred_err));
        m.set("pointing_error_stale_deg", mean(&self.stale_err));
        m.set("pointing_events", self.pred_err.len() as f64);
        m.set("access_events", self.isac.len() as f64);
        m.series
            .insert("pointing_error_pred_deg".into(), self.pred_err.clone());
        m.series
            .insert("pointing_error_stale_deg".into(), self.stale_err.clone());
        m.series.insert("beam_latency_delta_ms".into(), delta);
    }
}

/// Alert targeting and latency, plus range errors of bound pairs.
struct AlertObserver {
    sender: NodeId,
    ours: Vec<f64>,
    baseline: Vec<f64>,
    correct: usize,
    fallbacks: usize,
    err_ad: Vec<f64>,
    err_vd: Vec<f64>,
    err_fused: Vec<f64>,
}

impl AlertObserver {
    fn new(sim: &Simulation) -> Result<Self> {
        Ok(Self {
            sender: legit_by_label(sim, sim.cfg.scenario.sender.as_ref(), false)?,
            ours: Vec::new(),
            baseline: Vec::new(),
            correct: 0,
            fallbacks: 0,
            err_ad: Vec::new(),
            err_vd: Vec::new(),
            err_fused: Vec::new(),
        })
    }

    fn ranging(&mut self, sim: &Simulation, own: Vec3) -> Result<()> {
        let c = &sim.certifiers[&self.sender];
        let pa = sim.claim_covariance();
        let pa_inv = pa.try_inverse().expect("diagonal, floored");
        for (did, tid) in &c.bindings {
            let Some(tr) = c.tracker.get(*tid) else {
                continue;
            };
            let hs = &c.heard[did];
            let origin = hs.origin;
            if *did != Did::of_node(origin) || tr.true_source != Some(origin) {
                continue;
            }
            let truth = sim.truth(origin)?.0;
            let claim = *hs.positions.back().expect("heard this epoch");
            let est = tr.position();
            let Some(pv_inv) = tr.position_cov().try_inverse() else {
                continue;
            };
            let Some(p) = (pa_inv + pv_inv).try_inverse() else {
                continue;
            };
            let fused = p * (pa_inv * claim + pv_inv * est);
            let true_range = (truth - own).norm();
            let err = |x: Vec3| (x - own).norm() - true_range;
            self.err_ad.push(err(claim));
            self.err_vd.push(err(est));
            self.err_fused.push(err(fused));
        }
        Ok(())
    }
}

impl Observer for AlertObserver {
    fn after_epoch(&mut self, sim: &mut Simulation, info: EpochInfo) -> Result<()> {
        if !info.ad {
            return Ok(());
        }
        let (own, own_v) = sim.truth(self.sender)?;
        self.ranging(sim, own)?;

        let c = &sim.certifiers[&self.sender];
        let threats: Vec<Threat> = c
            .tracker
            .confirmed()
            .map(|t| Threat::from_track(t, own, own_v))
            .collect();
        let Ok(chosen) = select_most_endangered(&threats) else {
            return Ok(());
        };
        let sense_range = sim.cfg.noise.sense_range_m;
        let truths: Vec<(Threat, NodeId)> = sim
            .world
            .nodes
            .iter()
            .filter(|n| {
                !n.is_phantom() && n.id != self.sender && (n.position - own).norm() <= sense_range
            })
            .map(|n| {
                (
                    Threat::from_relative(
                        crate::tracking::TrackId(n.id.0),
                        n.position - own,
                        n.velocity - own_v,
                    ),
                    n.id,
                )
            })
            .collect();
        let true_target =
            select_most_endangered(&truths.iter().map(|(t, _)| *t).collect::<Vec<_>>())
                .ok()
                .map(|tid| NodeId(tid.0));
        let target_did = c.did_of(chosen);
        let correct = match (target_did, true_target) {
            (Some(d), Some(n)) => d == Did::of_node(n),
            _ => false,
        };
        if target_did.is_none() {
            self.fallbacks += 1;
        }
        if correct {
            self.correct += 1;
        }
        let lc = &sim.cfg.latency;
        let d = true_target
            .map(|n| sim.truth(n).map(|(p, _)| (p - own).norm()))
            .transpose()?
            .unwrap_or_else(|| {
                threats
                    .iter()
                    .find(|t| t.id == chosen)
                    .map_or(0.0, |t| t.range_m)
            });
        let ours = alert_latency_isac(lc);
        let base = alert_latency_exchange(lc, d);
        self.ours.push(ours);
        self.baseline.push(base);
        let target = target_did.map(|d| sim.did_label(d));
        sim.events.push(
            info.epoch,
            info.time_s,
            "alert",
            json!({ "target": target, "correct": correct, "ours_ms": ours, "baseline_ms": base }),
        );
        Ok(())
    }

    fn finish(&self, _sim: &Simulation, m: &mut Metrics) {
        let (ours, base) = (mean(&self.ours), mean(&self.baseline));
        let n = self.ours.len();
        m.set("alert_latency_ours_ms", ours);
        m.set("alert_latency_baseline_ms", base);
        m.set("alert_latency_reduction", 1.0 - ours / base);
        m.set(
            "alert_correct_rate",
            if n > 0 {
                self.correct as f64 / n as f64
            } else {
                f64::NAN
            },
        );
        m.set("alert_events", n as f64);
        m.set("broadcast_fallbacks", self.fallbacks as f64);
        let p90 = |v: &[f64]| {
            percentile(&v.iter().map(|e| e.abs()).collect::<Vec<_>>(), 90.0).unwrap_or(f64::NAN)
        };
        m.set("ranging_error_p90_ad_m", p90(&self.err_ad));
        m.set("ranging_error_p90_vd_m", p90(&self.err_vd));
        m.set("ranging_error_p90_fused_m", p90(&self.err_fused));
        m.set("ranging_samples", self.err_ad.len() as f64);
        m.series
            .insert("ranging_error_ad_m".into(), self.err_ad.clone());
        m.series
            .insert("ranging_error_vd_m".into(), self.err_vd.clone());
        m.series
            .insert("ranging_error_fused_m".into(), self.err_fused.clone());
    }
}

/// View merging at the evaluator, scored against the attacker's identities.
struct SybilObserver {
    evaluator: NodeId,
    attackers: BTreeSet<Did>,
    verdicts: Vec<Verdict>,
    detection_time_s: Option<f64>,
}

impl SybilObserver {
    fn new(sim: &Simulation) -> Result<Self> {
        Ok(Self {
            evaluator: legit_by_label(sim, sim.cfg.scenario.evaluator.as_ref(), true)?,
            attackers: sim
                .attack
                .as_ref()
                .map(|a| a.plan.attacker_dids())
                .unwrap_or_default(),
            verdicts: Vec::new(),
            detection_time_s: None,
        })
    }

    fn views(&self, sim: &Simulation) -> Vec<LocalView> {
        let c = &sim.certifiers[&self.evaluator];
        let mut views: Vec<LocalView> = c.view.iter().map(|v| (**v).clone()).collect();
        views.extend(c.received_views.values().map(|v| (**v).clone()));
        views
    }

    fn baseline(&self, sim: &Simulation) -> Vec<Verdict> {
        let c = &sim.certifiers[&self.evaluator];
        let cfg = sim.cfg.thresholds.baseline();
        let history: BTreeMap<Did, Vec<Vec3>> = c
            .heard_now
            .iter()
            .map(|d| (*d, c.heard[d].positions.iter().copied().collect()))
            .collect();
        let judged: BTreeMap<Did, VerdictClass> = baseline_mobility_detect(&history, &cfg)
            .map(|v| v.into_iter().map(|v| (v.did, v.class)).collect())
            .unwrap_or_default();
        self.verdicts
            .iter()
            .map(|v| Verdict {
                did: v.did,
                class: judged.get(&v.did).copied().unwrap_or(VerdictClass::Unknown),
            })
            .collect()
    }
}

impl Observer for SybilObserver {
    fn after_epoch(&mut self, sim: &mut Simulation, info: EpochInfo) -> Result<()> {
        if !info.ad {
            return Ok(());
        }
        let global = merge_views(&self.views(sim), sim.cfg.thresholds.quorum);
        self.verdicts = classify(&global);
        let present: Vec<&Verdict> = self
            .verdicts
            .iter()
            .filter(|v| self.attackers.contains(&v.did))
            .collect();
        if self.detection_time_s.is_none()
            && !present.is_empty()
            && present.iter().all(|v| v.class.is_flagged())
        {
            self.detection_time_s = Some(info.time_s);
        }
        let names = |class: VerdictClass| -> Vec<String> {
            self.verdicts
                .iter()
                .filter(|v| v.class == class)
                .map(|v| sim.did_label(v.did))
                .collect()
        };
        let payload = json!({
            "trusted": names(VerdictClass::Trusted),
            "malicious": names(VerdictClass::Malicious),
            "sybil": names(VerdictClass::Sybil),
            "unknown": names(VerdictClass::Unknown),
            "views": global.contributing_views,
        });
        sim.events
            .push(info.epoch, info.time_s, "verdicts", payload);
        Ok(())
    }

    fn finish(&self, sim: &Simulation, m: &mut Metrics) {
        let ours = detection_metrics(&self.verdicts, &self.attackers);
        let base = detection_metrics(&self.baseline(sim), &self.attackers);
        let legit: Vec<&Verdict> = self
            .verdicts
            .iter()
            .filter(|v| !self.attackers.contains(&v.did))
            .collect();
        m.set("precision", ours.precision);
        m.set("recall", ours.recall);
        m.set("f1", ours.f1);
        m.set("baseline_precision", base.precision);
        m.set("baseline_recall", base.recall);
        m.set("baseline_f1", base.f1);
        m.set("detection_time_s", self.detection_time_s.unwrap_or(-1.0));
        m.set(
            "legit_flagged",
            legit.iter().filter(|v| v.class.is_flagged()).count() as f64,
        );
        m.set("legit_total", legit.len() as f64);
        m.set(
            "attackers_total",
            (self.verdicts.len() - legit.len()) as f64,
        );
        m.set("did_collisions", sim.did_collisions as f64);
    }
}
