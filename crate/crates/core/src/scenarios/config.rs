//! Scenario configuration files.
//!
//! A TOML document with six sections: `scenario`, `nodes`, `noise`,
//! `attack`, `thresholds` and `latency`. Every key is optional except
//! `scenario.kind`, `scenario.duration_s` and at least one node. Unknown keys
//! are errors, reported with their dotted path.

use std::path::Path;

use indexmap::IndexMap;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::attacks::AttackConfig;
use crate::auth::{AuthConfig, BaselineConfig, CHI2_3DOF_999};
use crate::channels::{EpochSchedule, SensorConfig};
use crate::error::{ConfigError, Error, Result};
use crate::identity::IdentityConfig;
use crate::tracking::{FilterConfig, GateParams};
use crate::world::{Role, Trajectory, UavNode, Vec3, WingType, WorldState};

use super::latency::LatencyConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    BeamManagement,
    EmergencyAlert,
    SybilDetection,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::BeamManagement => "beam_management",
            ScenarioKind::EmergencyAlert => "emergency_alert",
            ScenarioKind::SybilDetection => "sybil_detection",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    #[serde(default)]
    pub name: String,
    pub kind: ScenarioKind,
    pub duration_s: f64,
    #[serde(default = "default_dt")]
    pub dt_s: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Node that merges views and issues verdicts (sybil detection).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluator: Option<String>,
    /// Node that sends alerts or manages beams.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sender: Option<String>,
}

fn default_dt() -> f64 {
    0.01
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    #[serde(default = "default_role")]
    pub role: Role,
    pub position: [f64; 3],
    #[serde(default)]
    pub velocity: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waypoints: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed: Option<f64>,
    #[serde(default = "default_wing")]
    pub wing: WingType,
    #[serde(default = "default_rotors")]
    pub rotors: u8,
}

fn default_role() -> Role {
    Role::Legitimate
}

fn default_wing() -> WingType {
    WingType::Rotary
}

fn default_rotors() -> u8 {
    4
}

/// Detection and tracking thresholds, flattened into one section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub sim_min: f64,
    pub mmse_tau: f64,
    pub mmse_window: usize,
    pub quorum: usize,
    pub gate_radius_m: f64,
    pub confirm_hits: u32,
    pub delete_misses: u32,
    pub q: f64,
    pub init_velocity_sigma_mps: f64,
    pub stale_after_s: f64,
    pub grace_s: f64,
    pub range_margin_m: f64,
    pub witness_cap: usize,
    pub corroborate: bool,
    pub claim_sigma_speed_mps: f64,
    pub claim_sigma_heading_rad: f64,
    pub kappa_wing: f64,
    pub kappa_rotor: f64,
    pub weight_floor: f64,
    pub baseline_window: usize,
    pub baseline_rho: f64,
    pub baseline_distance_variance_m2: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        let auth = AuthConfig::default();
        let gate = GateParams::default();
        let filter = FilterConfig::default();
        let id = IdentityConfig::default();
        let base = BaselineConfig::default();
        Self {
            sim_min: 1e-4,
            mmse_tau: CHI2_3DOF_999,
            mmse_window: auth.mmse_window,
            quorum: auth.quorum,
            gate_radius_m: gate.gate_radius_m,
            confirm_hits: gate.confirm_hits,
            delete_misses: gate.delete_misses,
            q: filter.q,
            init_velocity_sigma_mps: filter.init_velocity_sigma_mps,
            stale_after_s: filter.stale_after_s,
            grace_s: auth.grace_s,
            range_margin_m: auth.range_margin_m,
            witness_cap: auth.witness_cap,
            corroborate: auth.corroborate,
            claim_sigma_speed_mps: id.claim_sigma_speed_mps,
            claim_sigma_heading_rad: id.claim_sigma_heading_rad,
            kappa_wing: id.kappa_wing,
            kappa_rotor: id.kappa_rotor,
            weight_floor: id.weight_floor,
            baseline_window: base.window,
            baseline_rho: base.rho,
            baseline_distance_variance_m2: base.distance_variance_bound,
        }
    }
}

impl Thresholds {
    pub fn gate(&self) -> GateParams {
        GateParams {
            gate_radius_m: self.gate_radius_m,
            confirm_hits: self.confirm_hits,
            delete_misses: self.delete_misses,
        }
    }

    pub fn filter(&self) -> FilterConfig {
        FilterConfig {
            q: self.q,
            init_velocity_sigma_mps: self.init_velocity_sigma_mps,
            stale_after_s: self.stale_after_s,
        }
    }

    pub fn auth(&self) -> AuthConfig {
        AuthConfig {
            mmse_tau: self.mmse_tau,
            mmse_window: self.mmse_window,
            quorum: self.quorum,
            grace_s: self.grace_s,
            range_margin_m: self.range_margin_m,
            witness_cap: self.witness_cap,
            corroborate: self.corroborate,
        }
    }

    pub fn identity(&self) -> IdentityConfig {
        IdentityConfig {
            claim_sigma_speed_mps: self.claim_sigma_speed_mps,
            claim_sigma_heading_rad: self.claim_sigma_heading_rad,
            kappa_wing: self.kappa_wing,
            kappa_rotor: self.kappa_rotor,
            weight_floor: self.weight_floor,
            ..IdentityConfig::default()
        }
    }

    pub fn baseline(&self) -> BaselineConfig {
        BaselineConfig {
            window: self.baseline_window,
            rho: self.baseline_rho,
            distance_variance_bound: self.baseline_distance_variance_m2,
        }
    }

    fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        if !(self.sim_min > 0.0 && self.sim_min < 1.0) {
            return Err((
                "sim_min",
                format!("must be in (0, 1), got {}", self.sim_min),
            ));
        }
        for (name, v) in [
            ("mmse_tau", self.mmse_tau),
            ("gate_radius_m", self.gate_radius_m),
            ("q", self.q),
            ("init_velocity_sigma_mps", self.init_velocity_sigma_mps),
            ("stale_after_s", self.stale_after_s),
            ("claim_sigma_speed_mps", self.claim_sigma_speed_mps),
            ("claim_sigma_heading_rad", self.claim_sigma_heading_rad),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err((name, format!("must be > 0, got {v}")));
            }
        }
        for (name, v) in [
            ("grace_s", self.grace_s),
            ("range_margin_m", self.range_margin_m),
            ("weight_floor", self.weight_floor),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err((name, format!("must be >= 0, got {v}")));
            }
        }
        for (name, v) in [
            ("kappa_wing", self.kappa_wing),
            ("kappa_rotor", self.kappa_rotor),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err((name, format!("must be in (0, 1), got {v}")));
            }
        }
        for (name, v) in [
            ("mmse_window", self.mmse_window),
            ("quorum", self.quorum),
            ("confirm_hits", self.confirm_hits as usize),
            ("delete_misses", self.delete_misses as usize),
        ] {
            if v == 0 {
                return Err((name, "must be >= 1".into()));
            }
        }
        if self.baseline_window < 3 {
            return Err(("baseline_window", "must be >= 3".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: ScenarioSection,
    pub nodes: IndexMap<String, NodeSpec>,
    pub noise: SensorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackConfig>,
    pub thresholds: Thresholds,
    pub latency: LatencyConfig,
}

const SECTIONS: [&str; 6] = [
    "scenario",
    "nodes",
    "noise",
    "attack",
    "thresholds",
    "latency",
];

fn section<T: DeserializeOwned>(
    name: &str,
    value: toml::Value,
) -> std::result::Result<T, ConfigError> {
    value
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::new(name, e.message().trim().to_string()))
}

fn section_or_default<T: DeserializeOwned + Default>(
    table: &mut toml::Table,
    name: &str,
) -> std::result::Result<T, ConfigError> {
    match table.remove(name) {
        Some(v) => section(name, v),
        None => Ok(T::default()),
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            ConfigError::new("<document>", e.message().trim().to_string())
        })?;
        if let Some(k) = table.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
            return Err(ConfigError::new(k.clone(), "unknown section"));
        }
        let scenario: ScenarioSection = match table.remove("scenario") {
            Some(v) => section("scenario", v)?,
            None => return Err(ConfigError::new("scenario", "missing section")),
        };
        let nodes_value = table
            .remove("nodes")
            .ok_or_else(|| ConfigError::new("nodes", "missing section"))?;
        let toml::Value::Table(node_table) = nodes_value else {
            return Err(ConfigError::new("nodes", "must be a table of node specs"));
        };
        let mut nodes = IndexMap::new();
        for (label, v) in node_table {
            let spec: NodeSpec = section(&format!("nodes.{label}"), v)?;
            nodes.insert(label, spec);
        }
        let cfg = Self {
            scenario,
            nodes,
            noise: section_or_default(&mut table, "noise")?,
            attack: match table.remove("attack") {
                Some(v) => Some(section("attack", v)?),
                None => None,
            },
            thresholds: section_or_default(&mut table, "thresholds")?,
            latency: section_or_default(&mut table, "latency")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_toml_str(&text)?)
    }

    /// The fully resolved configuration, defaults included.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        let s = &self.scenario;
        if !(s.duration_s > 0.0 && s.duration_s.is_finite()) {
            return Err(ConfigError::new(
                "scenario.duration_s",
                format!("must be > 0, got {}", s.duration_s),
            ));
        }
        if !(s.dt_s > 0.0 && s.dt_s.is_finite()) {
            return Err(ConfigError::new(
                "scenario.dt_s",
                format!("must be > 0, got {}", s.dt_s),
            ));
        }
        if self.nodes.is_empty() {
            return Err(ConfigError::new("nodes", "at least one node is required"));
        }
        self.noise
            .validate()
            .map_err(|(k, m)| ConfigError::new(format!("noise.{k}"), m))?;
        EpochSchedule::new(s.dt_s, self.noise.t_ad_s, self.noise.t_vd_s)
            .map_err(|(k, m)| ConfigError::new(format!("noise.{k}"), m))?;
        self.thresholds
            .validate()
            .map_err(|(k, m)| ConfigError::new(format!("thresholds.{k}"), m))?;
        self.latency
            .validate()
            .map_err(|(k, m)| ConfigError::new(format!("latency.{k}"), m))?;
        let angle_var = self.noise.sigma_angle_rad.powi(2);
        if angle_var >= crate::tracking::ucm::MAX_ANGLE_VARIANCE {
            return Err(ConfigError::new(
                "noise.sigma_angle_rad",
                "angle variance must be below 0.25 rad²",
            ));
        }

        for (label, n) in &self.nodes {
            let path = |k: &str| format!("nodes.{label}.{k}");
            if n.role == Role::SybilPhantom {
                return Err(ConfigError::new(
                    path("role"),
                    "phantoms are created by the attack section",
                ));
            }
            if n.position
                .iter()
                .chain(n.velocity.iter())
                .any(|v| !v.is_finite())
            {
                return Err(ConfigError::new(path("position"), "must be finite"));
            }
            match (&n.waypoints, n.speed) {
                (Some(w), Some(sp)) if !w.is_empty() && sp > 0.0 => {}
                (Some(_), _) => {
                    return Err(ConfigError::new(
                        path("speed"),
                        "waypoints need a speed > 0 and at least one point",
                    ))
                }
                (None, Some(_)) => {
                    return Err(ConfigError::new(
                        path("speed"),
                        "speed is only used with waypoints",
                    ))
                }
                (None, None) => {}
            }
        }
        let malicious = self
            .nodes
            .values()
            .filter(|n| n.role == Role::Malicious)
            .count();
        let legit = self
            .nodes
            .values()
            .filter(|n| n.role == Role::Legitimate)
            .count();
        if legit == 0 {
            return Err(ConfigError::new(
                "nodes",
                "at least one legitimate node is required",
            ));
        }
        match &self.attack {
            Some(a) => {
                a.validate()
                    .map_err(|(k, m)| ConfigError::new(format!("attack.{k}"), m))?;
                if malicious == 0 {
                    return Err(ConfigError::new(
                        "attack",
                        "needs a node with role = \"malicious\"",
                    ));
                }
                if let Some(h) = &a.host {
                    match self.nodes.get(h) {
                        Some(n) if n.role == Role::Malicious => {}
                        _ => {
                            return Err(ConfigError::new(
                                "attack.host",
                                format!("`{h}` is not a malicious node"),
                            ))
                        }
                    }
                }
            }
            None if s.kind == ScenarioKind::SybilDetection => {}
            None => {}
        }
        for (key, label) in [
            ("scenario.evaluator", &s.evaluator),
            ("scenario.sender", &s.sender),
        ] {
            if let Some(l) = label {
                match self.nodes.get(l) {
                    Some(n) if n.role == Role::Legitimate => {}
                    _ => {
                        return Err(ConfigError::new(
                            key,
                            format!("`{l}` is not a legitimate node"),
                        ))
                    }
                }
            }
        }
        Ok(())
    }

    pub fn epochs(&self) -> u64 {
        (self.scenario.duration_s / self.scenario.dt_s).round() as u64
    }

    pub fn schedule(&self) -> EpochSchedule {
        EpochSchedule::new(self.scenario.dt_s, self.noise.t_ad_s, self.noise.t_vd_s)
            .expect("validated")
    }

    /// Builds the initial world; node ids follow file order.
    pub fn build_world(&self) -> Result<WorldState> {
        let mut nodes = Vec::new();
        let mut trajs = Vec::new();
        for (i, (label, spec)) in self.nodes.iter().enumerate() {
            let node = UavNode::new(
                i as u64,
                spec.role,
                Vec3::from(spec.position),
                Vec3::from(spec.velocity),
            )
            .with_label(label.clone())
            .with_airframe(spec.wing, spec.rotors);
            let traj = match (&spec.waypoints, spec.speed) {
                (Some(points), Some(speed)) => Trajectory::Waypoints {
                    points: points.iter().map(|p| Vec3::from(*p)).collect(),
                    speed,
                    next: 0,
                },
                _ => Trajectory::ConstantVelocity,
            };
            nodes.push(node);
            trajs.push(traj);
        }
        WorldState::new(nodes, trajs, self.scenario.dt_s)
    }

    /// Same config with every noise sigma scaled (for sweeps).
    pub fn with_noise_scale(&self, factor: f64) -> Self {
        let mut c = self.clone();
        c.noise.sigma_gnss_m *= factor;
        c.noise.sigma_r_m *= factor;
        c.noise.sigma_angle_rad *= factor;
        c.noise.sigma_v_mps *= factor;
        c
    }

    /// Sets a numeric field by dotted key, e.g. `noise.sigma_gnss_m`.
    pub fn set_number(&mut self, key: &str, value: f64) -> std::result::Result<(), ConfigError> {
        let mut doc: toml::Table =
            toml::Table::try_from(&*self).map_err(|e| ConfigError::new(key, e.to_string()))?;
        let parts: Vec<&str> = key.split('.').collect();
        let (last, head) = parts
            .split_last()
            .ok_or_else(|| ConfigError::new(key, "empty key"))?;
        let mut cur = &mut doc;
        for p in head {
            cur = cur
                .get_mut(*p)
                .and_then(|v| v.as_table_mut())
                .ok_or_else(|| ConfigError::new(key, format!("no table `{p}`")))?;
        }
        let slot = cur
            .get_mut(*last)
            .ok_or_else(|| ConfigError::new(key, "unknown key"))?;
        *slot = match slot {
            toml::Value::Integer(_) if value.fract() == 0.0 => toml::Value::Integer(value as i64),
            toml::Value::Float(_) => toml::Value::Float(value),
            _ => return Err(ConfigError::new(key, "not a numeric field")),
        };
        let text = toml::to_string(&doc).map_err(|e| ConfigError::new(key, e.to_string()))?;
        *self = Self::from_toml_str(&text)?;
        Ok(())
    }
}
