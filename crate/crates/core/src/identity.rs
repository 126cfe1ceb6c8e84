//! Physical identities (PIDs): production from either domain, prevalence-based
//! feature weights, and pairwise similarity.
//!
//! A PID is an ordered list of named features. Continuous features carry a
//! 1-sigma uncertainty; categorical features carry a class code. The feature
//! order is fixed for a scenario, see [`FeatureName::STANDARD`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::channels::{AdReception, SensorConfig};
use crate::error::{Error, Result};
use crate::tracking::{Track, TrackStatus};
use crate::world::{wrap_angle, Vec3, WingType};

/// Smallest uncertainty any continuous feature may carry.
pub const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdDomain {
    Ad,
    Vd,
}

/// Airframe class inferred from the micro-Doppler signature of the rotors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotorClass {
    None,
    Single,
    Dual,
    Tri,
    Quad,
    Hex,
    Octo,
    Other,
}

impl RotorClass {
    pub const ALL: [RotorClass; 8] = [
        RotorClass::None,
        RotorClass::Single,
        RotorClass::Dual,
        RotorClass::Tri,
        RotorClass::Quad,
        RotorClass::Hex,
        RotorClass::Octo,
        RotorClass::Other,
    ];

    pub fn from_count(rotors: u8) -> Self {
        match rotors {
            0 => RotorClass::None,
            1 => RotorClass::Single,
            2 => RotorClass::Dual,
            3 => RotorClass::Tri,
            4 => RotorClass::Quad,
            5 | 6 => RotorClass::Hex,
            7 | 8 => RotorClass::Octo,
            _ => RotorClass::Other,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// Fixed-wing airframes show no rotor lines.
    pub fn wing_type(self) -> WingType {
        if self == RotorClass::None {
            WingType::Fixed
        } else {
            WingType::Rotary
        }
    }
}

fn wing_code(w: WingType) -> u8 {
    match w {
        WingType::Fixed => 0,
        WingType::Rotary => 1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureName {
    Position,
    Speed,
    Heading,
    WingType,
    RotorClass,
}

impl FeatureName {
    pub const STANDARD: [FeatureName; 5] = [
        FeatureName::Position,
        FeatureName::Speed,
        FeatureName::Heading,
        FeatureName::WingType,
        FeatureName::RotorClass,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureValue {
    /// Isotropic per-axis sigma.
    Vector {
        value: [f64; 3],
        sigma: f64,
    },
    Scalar {
        value: f64,
        sigma: f64,
    },
    /// Radians; differences wrap into (−π, π].
    Angle {
        value: f64,
        sigma: f64,
    },
    Categorical(u8),
}

impl FeatureValue {
    fn same_kind(&self, other: &FeatureValue) -> bool {
        std::mem::discriminant(self) == std::mem::discriminant(other)
    }

    fn is_continuous(&self) -> bool {
        !matches!(self, FeatureValue::Categorical(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: FeatureName,
    pub value: FeatureValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pid {
    pub domain: IdDomain,
    pub features: Vec<Feature>,
    pub time_s: f64,
}

/// Field values for [`Pid::standard`].
#[derive(Debug, Clone, Copy)]
pub struct Kinematics {
    pub position: Vec3,
    pub sigma_position: f64,
    pub speed: f64,
    pub sigma_speed: f64,
    pub heading: f64,
    pub sigma_heading: f64,
}

impl Pid {
    pub fn standard(
        domain: IdDomain,
        kin: Kinematics,
        wing: WingType,
        rotor: RotorClass,
        time_s: f64,
    ) -> Self {
        let features = vec![
            Feature {
                name: FeatureName::Position,
                value: FeatureValue::Vector {
                    value: [kin.position.x, kin.position.y, kin.position.z],
                    sigma: kin.sigma_position.max(SIGMA_FLOOR),
                },
            },
            Feature {
                name: FeatureName::Speed,
                value: FeatureValue::Scalar {
                    value: kin.speed,
                    sigma: kin.sigma_speed.max(SIGMA_FLOOR),
                },
            },
            Feature {
                name: FeatureName::Heading,
                value: FeatureValue::Angle {
                    value: kin.heading,
                    sigma: kin.sigma_heading.max(SIGMA_FLOOR),
                },
            },
            Feature {
                name: FeatureName::WingType,
                value: FeatureValue::Categorical(wing_code(wing)),
            },
            Feature {
                name: FeatureName::RotorClass,
                value: FeatureValue::Categorical(rotor.code()),
            },
        ];
        Self {
            domain,
            features,
            time_s,
        }
    }

    pub fn feature(&self, name: FeatureName) -> Option<&FeatureValue> {
        self.features
            .iter()
            .find(|f| f.name == name)
            .map(|f| &f.value)
    }

    pub fn position(&self) -> Option<Vec3> {
        match self.feature(FeatureName::Position)? {
            FeatureValue::Vector { value, .. } => Some(Vec3::from(*value)),
            _ => None,
        }
    }

    pub fn position_sigma(&self) -> Option<f64> {
        match self.feature(FeatureName::Position)? {
            FeatureValue::Vector { sigma, .. } => Some(*sigma),
            _ => None,
        }
    }

    pub fn speed(&self) -> Option<f64> {
        match self.feature(FeatureName::Speed)? {
            FeatureValue::Scalar { value, .. } => Some(*value),
            _ => None,
        }
    }

    pub fn rotor_class(&self) -> Option<RotorClass> {
        match self.feature(FeatureName::RotorClass)? {
            FeatureValue::Categorical(c) => RotorClass::from_code(*c),
            _ => None,
        }
    }

    fn same_schema(&self, other: &Pid) -> bool {
        self.features.len() == other.features.len()
            && self
                .features
                .iter()
                .zip(&other.features)
                .all(|(a, b)| a.name == b.name && a.value.same_kind(&b.value))
    }
}

/// Uncertainties and penalties used when producing and comparing PIDs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentityConfig {
    pub claim_sigma_speed_mps: f64,
    pub claim_sigma_heading_rad: f64,
    /// Below this speed heading carries no information (sigma = π).
    pub min_speed_for_heading_mps: f64,
    pub kappa_wing: f64,
    pub kappa_rotor: f64,
    pub weight_floor: f64,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        Self {
            claim_sigma_speed_mps: 0.5,
            claim_sigma_heading_rad: 0.1,
            min_speed_for_heading_mps: 1.0,
            kappa_wing: 0.3,
            kappa_rotor: 0.2,
            weight_floor: 0.01,
        }
    }
}

fn heading_of(v: &Vec3) -> f64 {
    v.y.atan2(v.x)
}

/// AD-domain PID: a projection of the beacon's claimed fields.
pub fn extract_pid_ad(rx: &AdReception, sensor: &SensorConfig, cfg: &IdentityConfig) -> Pid {
    let b = &rx.beacon;
    let speed = b.claimed_velocity.norm();
    let sigma_heading = if b.claimed_velocity.xy().norm() < cfg.min_speed_for_heading_mps {
        PI
    } else {
        cfg.claim_sigma_heading_rad
    };
    Pid::standard(
        IdDomain::Ad,
        Kinematics {
            position: b.claimed_position,
            sigma_position: sensor.sigma_gnss_m,
            speed,
            sigma_speed: cfg.claim_sigma_speed_mps,
            heading: heading_of(&b.claimed_velocity),
            sigma_heading,
        },
        b.claimed_wing_type,
        RotorClass::from_count(b.claimed_rotor_count),
        b.emit_time_s,
    )
}

/// VD-domain PID from a confirmed (or coasting) track.
pub fn extract_pid_vd(track: &Track, cfg: &IdentityConfig) -> Result<Pid> {
    if track.status == TrackStatus::Tentative || track.status == TrackStatus::Dead {
        return Err(Error::UnconfirmedTrack(track.id.0));
    }
    let p = track.position();
    let v = track.velocity();
    let pos_cov = track.covariance.fixed_view::<3, 3>(0, 0);
    let vel_cov = track.covariance.fixed_view::<3, 3>(3, 3);
    // Isotropic bound: the widest axis of the position covariance.
    let sigma_position = nalgebra::Matrix3::from(pos_cov)
        .symmetric_eigenvalues()
        .max()
        .max(0.0)
        .sqrt();

    let speed = v.norm();
    let sigma_speed = if speed > 1e-9 {
        let u = v / speed;
        (u.transpose() * vel_cov * u)[(0, 0)].max(0.0).sqrt()
    } else {
        (vel_cov.trace() / 3.0).sqrt()
    };
    let vxy = v.xy();
    let sxy = vxy.norm();
    // Heading is meaningless until the ground speed is resolved.
    let sigma_heading = if sxy < cfg.min_speed_for_heading_mps.max(2.0 * sigma_speed) {
        PI
    } else {
        // Cross-heading velocity variance over squared ground speed.
        let perp = nalgebra::Vector3::new(-vxy.y / sxy, vxy.x / sxy, 0.0);
        let var = (perp.transpose() * vel_cov * perp)[(0, 0)].max(0.0);
        (var.sqrt() / sxy).min(PI)
    };
    let rotor = track.majority_rotor().unwrap_or(RotorClass::Other);
    Ok(Pid::standard(
        IdDomain::Vd,
        Kinematics {
            position: p,
            sigma_position,
            speed,
            sigma_speed,
            heading: heading_of(&v),
            sigma_heading,
        },
        rotor.wing_type(),
        rotor,
        track.time_s,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeights(pub Vec<f64>);

impl FeatureWeights {
    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Per-feature squared normalized difference, or `None` for categorical
/// features (returned as equality instead).
enum Diff {
    Continuous { delta: f64, sigma_bar: f64 },
    Categorical { equal: bool },
}

fn diff(a: &FeatureValue, b: &FeatureValue) -> Result<Diff> {
    use FeatureValue::*;
    Ok(match (a, b) {
        (
            Vector {
                value: va,
                sigma: sa,
            },
            Vector {
                value: vb,
                sigma: sb,
            },
        ) => {
            let d = Vec3::from(*va) - Vec3::from(*vb);
            Diff::Continuous {
                delta: d.norm(),
                sigma_bar: (sa * sa + sb * sb).sqrt(),
            }
        }
        (
            Scalar {
                value: va,
                sigma: sa,
            },
            Scalar {
                value: vb,
                sigma: sb,
            },
        ) => Diff::Continuous {
            delta: (va - vb).abs(),
            sigma_bar: (sa * sa + sb * sb).sqrt(),
        },
        (
            Angle {
                value: va,
                sigma: sa,
            },
            Angle {
                value: vb,
                sigma: sb,
            },
        ) => Diff::Continuous {
            delta: wrap_angle(va - vb).abs(),
            sigma_bar: (sa * sa + sb * sb).sqrt(),
        },
        (Categorical(ca), Categorical(cb)) => Diff::Categorical { equal: ca == cb },
        _ => return Err(Error::SchemaMismatch),
    })
}

/// Prevalence-based weights: a feature whose values are often
/// indistinguishable between neighbors gets little weight.
///
/// prevalence_n is the fraction of the M(M−1)/2 pairs whose feature-n values
/// are within 2 combined sigmas (continuous) or equal (categorical);
/// w_n ∝ (1 − prevalence_n) + floor. O(N·M²).
pub fn feature_weights(pids: &[Pid], floor: f64) -> Result<FeatureWeights> {
    if pids.len() < 2 {
        return Err(Error::InsufficientPopulation(pids.len()));
    }
    let first = &pids[0];
    if pids.iter().any(|p| !p.same_schema(first)) {
        return Err(Error::SchemaMismatch);
    }
    let n_feat = first.features.len();
    let m = pids.len();
    let pairs = (m * (m - 1) / 2) as f64;
    let mut raw = Vec::with_capacity(n_feat);
    for f in 0..n_feat {
        let mut shared = 0usize;
        for i in 0..m {
            for j in (i + 1)..m {
                let same = match diff(&pids[i].features[f].value, &pids[j].features[f].value)? {
                    Diff::Continuous { delta, sigma_bar } => delta <= 2.0 * sigma_bar,
                    Diff::Categorical { equal } => equal,
                };
                if same {
                    shared += 1;
                }
            }
        }
        raw.push((1.0 - shared as f64 / pairs) + floor);
    }
    let total: f64 = raw.iter().sum();
    Ok(FeatureWeights(raw.into_iter().map(|w| w / total).collect()))
}

/// Weights for a population, falling back to uniform when it is too small.
pub fn population_weights(pids: &[Pid], floor: f64) -> FeatureWeights {
    feature_weights(pids, floor)
        .unwrap_or_else(|_| FeatureWeights::uniform(FeatureName::STANDARD.len()))
}

/// Gaussian-kernel similarity in [0, 1]:
/// exp(−½ Σ_cont w_n (Δ_n/σ̄_n)²) · Π_cat (1 if equal else κ_n).
pub fn similarity(a: &Pid, b: &Pid, w: &FeatureWeights, cfg: &IdentityConfig) -> Result<f64> {
    if !a.same_schema(b) || w.0.len() != a.features.len() {
        return Err(Error::SchemaMismatch);
    }
    let mut exponent = 0.0;
    let mut factor = 1.0;
    for ((fa, fb), wn) in a.features.iter().zip(&b.features).zip(&w.0) {
        match diff(&fa.value, &fb.value)? {
            Diff::Continuous { delta, sigma_bar } => {
                let z = delta / sigma_bar;
                exponent += wn * z * z;
            }
            Diff::Categorical { equal } => {
                if !equal {
                    factor *= match fa.name {
                        FeatureName::WingType => cfg.kappa_wing,
                        FeatureName::RotorClass => cfg.kappa_rotor,
                        _ => cfg.kappa_rotor,
                    };
                }
            }
        }
    }
    debug_assert!(a.features.iter().any(|f| f.value.is_continuous()) || exponent == 0.0);
    Ok((-0.5 * exponent).exp() * factor)
}
