//! Scores and summary statistics.

use std::collections::BTreeSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::auth::Verdict;
use crate::channels::Did;

use super::config::ScenarioKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Precision, recall and F1 of the flagged verdicts against the true
/// attacker identities among those judged.
///
/// With nothing flagged, precision is 1 when there was nothing to find and 0
/// otherwise; likewise recall is 1 only if there were no attackers and no
/// false flags.
pub fn detection_metrics(verdicts: &[Verdict], attackers: &BTreeSet<Did>) -> DetectionScores {
    let mut tp = 0;
    let mut fp = 0;
    let mut fn_ = 0;
    for v in verdicts {
        match (v.class.is_flagged(), attackers.contains(&v.did)) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else if fn_ == 0 {
        1.0
    } else {
        0.0
    };
    let recall = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else if fp == 0 {
        1.0
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    DetectionScores {
        precision,
        recall,
        f1,
        tp,
        fp,
        fn_,
    }
}

/// Nearest-rank percentile, `p` in (0, 100].
pub fn percentile(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() || !(p > 0.0 && p <= 100.0) {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * v.len() as f64).ceil() as usize;
    Some(v[rank.clamp(1, v.len()) - 1])
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Names of the scalar metrics each scenario kind reports, in output order.
pub fn metric_names(kind: ScenarioKind) -> &'static [&'static str] {
    match kind {
        ScenarioKind::BeamManagement => &[
            "beam_latency_isac_ms",
            "beam_latency_sweep_ms",
            "beam_latency_delta_ms",
            "pointing_error_pred_deg",
            "pointing_error_stale_deg",
            "pointing_events",
            "access_events",
        ],
        ScenarioKind::EmergencyAlert => &[
            "alert_latency_ours_ms",
            "alert_latency_baseline_ms",
            "alert_latency_reduction",
            "alert_correct_rate",
            "alert_events",
            "broadcast_fallbacks",
            "ranging_error_p90_ad_m",
            "ranging_error_p90_vd_m",
            "ranging_error_p90_fused_m",
            "ranging_samples",
        ],
        ScenarioKind::SybilDetection => &[
            "precision",
            "recall",
            "f1",
            "baseline_precision",
            "baseline_recall",
            "baseline_f1",
            "detection_time_s",
            "legit_flagged",
            "legit_total",
            "attackers_total",
            "did_collisions",
        ],
    }
}

/// Result of one run: scalar metrics in a fixed order plus per-sample series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub scenario: String,
    pub kind: ScenarioKind,
    pub seed: u64,
    pub scalars: IndexMap<String, f64>,
    pub series: IndexMap<String, Vec<f64>>,
}

impl Metrics {
    pub fn new(scenario: impl Into<String>, kind: ScenarioKind, seed: u64) -> Self {
        Self {
            scenario: scenario.into(),
            kind,
            seed,
            scalars: IndexMap::new(),
            series: IndexMap::new(),
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.scalars.get(name).copied()
    }

    pub fn series(&self, name: &str) -> &[f64] {
        self.series.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    pub(crate) fn set(&mut self, name: &str, value: f64) {
        self.scalars.insert(name.to_string(), value);
    }
}
