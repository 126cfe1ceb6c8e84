//! End-to-end scenario behaviour on the shipped configurations.

use std::collections::BTreeMap;
use std::path::PathBuf;

use dualid_core::channels::{deliver, honest_beacon, sense};
use dualid_core::rng::RngStreams;
use dualid_core::scenarios::{Simulation, Thresholds};
use dualid_core::world::Role;
use dualid_core::{
    run_scenario, Metrics, NodeId, ScenarioConfig, SensorConfig, UavNode, Vec3, WorldState,
};

fn config(name: &str) -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    ScenarioConfig::from_path(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn seeded(cfg: &ScenarioConfig, seed: u64) -> ScenarioConfig {
    let mut c = cfg.clone();
    c.scenario.seed = seed;
    c
}

fn runs(cfg: &ScenarioConfig, seeds: std::ops::RangeInclusive<u64>) -> Vec<Metrics> {
    seeds
        .map(|s| run_scenario(&seeded(cfg, s)).unwrap().0)
        .collect()
}

fn avg(ms: &[Metrics], name: &str) -> f64 {
    ms.iter().map(|m| m.get(name).unwrap()).sum::<f64>() / ms.len() as f64
}

fn last_verdicts(cfg: &ScenarioConfig) -> serde_json::Value {
    let (_, events) = run_scenario(cfg).unwrap();
    events
        .of_kind("verdicts")
        .last()
        .expect("verdicts logged")
        .payload
        .clone()
}

fn names(v: &serde_json::Value, class: &str) -> Vec<String> {
    v[class]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s.as_str().unwrap().to_string())
        .collect()
}

#[test]
fn twenty_epochs_log_twenty_ticks() {
    let mut cfg = config("sybil_direct.toml");
    cfg.scenario.duration_s = 20.0 * cfg.scenario.dt_s;
    let (_, events) = run_scenario(&cfg).unwrap();
    assert_eq!(events.of_kind("tick").count(), 20);
    assert_eq!(events.of_kind("tick").last().unwrap().epoch, 19);
    // AD epochs every 0.2 s: only epoch 0 falls inside the first 20.
    assert_eq!(events.of_kind("certify").count(), 4);
}

#[test]
fn fixed_offset_attack_verdicts() {
    let v = last_verdicts(&config("sybil_direct.toml"));
    assert_eq!(names(&v, "malicious"), ["M"]);
    assert_eq!(names(&v, "sybil"), ["S1", "S2", "S3"]);
    assert_eq!(names(&v, "trusted"), ["U1", "U2", "U3", "U4"]);
    assert!(names(&v, "unknown").is_empty());
}

#[test]
fn noiseless_detection_is_exact() {
    for name in [
        "sybil_direct.toml",
        "sybil_indirect.toml",
        "sybil_staggered.toml",
        "sybil_walk.toml",
    ] {
        let mut cfg = config(name);
        cfg.noise.sigma_gnss_m = 0.0;
        cfg.noise.sigma_r_m = 0.0;
        cfg.noise.sigma_angle_rad = 0.0;
        cfg.noise.sigma_v_mps = 0.0;
        cfg.noise.p_detect = 1.0;
        for seed in 1..=5 {
            let (m, _) = run_scenario(&seeded(&cfg, seed)).unwrap();
            assert_eq!(
                (m.get("precision"), m.get("recall")),
                (Some(1.0), Some(1.0)),
                "{name} seed {seed}"
            );
            assert_eq!(m.get("legit_flagged"), Some(0.0), "{name} seed {seed}");
        }
    }
}

#[test]
fn indirect_attack_is_detected_later_than_direct() {
    let direct = runs(&config("sybil_direct.toml"), 1..=20);
    let indirect = runs(&config("sybil_indirect.toml"), 1..=20);
    assert_eq!(avg(&indirect, "recall"), 1.0);
    assert!(avg(&indirect, "detection_time_s") > avg(&direct, "detection_time_s"));
}

#[test]
fn stolen_identities_are_flagged() {
    let ms = runs(&config("sybil_stolen.toml"), 1..=20);
    assert_eq!(avg(&ms, "precision"), 1.0);
    assert_eq!(avg(&ms, "recall"), 1.0);
}

#[test]
fn stolen_identity_collision_is_logged() {
    // The first victim flies into range of the legitimate nodes.
    let mut cfg = config("sybil_stolen.toml");
    cfg.nodes.get_mut("V1").unwrap().velocity = [-400.0, 0.0, 0.0];
    let (m, events) = run_scenario(&cfg).unwrap();
    assert!(m.get("did_collisions").unwrap() > 0.0);
    let first = events
        .of_kind("did_collision")
        .next()
        .expect("collision event");
    assert!(first.time_s > 2.0, "victim is out of range at the start");
}

#[test]
fn alerts_go_to_the_approaching_neighbour() {
    let cfg = config("emergency_alert.toml");
    for seed in 1..=10 {
        let (m, events) = run_scenario(&seeded(&cfg, seed)).unwrap();
        assert!(m.get("alert_correct_rate").unwrap() > 0.8, "seed {seed}");
        let late: Vec<_> = events
            .of_kind("alert")
            .filter(|e| e.time_s >= 2.0)
            .collect();
        assert!(!late.is_empty());
        assert!(
            late.iter().all(|e| e.payload["target"] == "U2"),
            "seed {seed}"
        );
    }
}

#[test]
fn fused_ranging_beats_each_domain_when_pooled() {
    let ms = runs(&config("ranging.toml"), 1..=100);
    let fused = avg(&ms, "ranging_error_p90_fused_m");
    assert!(fused < avg(&ms, "ranging_error_p90_ad_m"));
    assert!(fused < avg(&ms, "ranging_error_p90_vd_m"));
}

// Each seed yields about 150 correlated samples, so its p90 carries roughly
// 0.1 m of sampling noise against a 0.15 m fused-to-VD gap.
#[test]
#[ignore = "fused p90 exceeds VD p90 on seeds 53, 55 and 82"]
fn fused_ranging_beats_each_domain_on_every_seed() {
    for m in runs(&config("ranging.toml"), 1..=100) {
        let fused = m.get("ranging_error_p90_fused_m").unwrap();
        assert!(
            fused <= m.get("ranging_error_p90_ad_m").unwrap(),
            "seed {}",
            m.seed
        );
        assert!(
            fused <= m.get("ranging_error_p90_vd_m").unwrap(),
            "seed {}",
            m.seed
        );
    }
}

#[test]
fn fused_ranging_beats_claims_when_sensing_dominates() {
    for m in runs(&config("emergency_alert.toml"), 1..=100) {
        let fused = m.get("ranging_error_p90_fused_m").unwrap();
        assert!(
            fused <= m.get("ranging_error_p90_ad_m").unwrap(),
            "seed {}",
            m.seed
        );
    }
}

#[test]
fn predicted_pointing_beats_stale_pointing() {
    let ms = runs(&config("beam_crossing.toml"), 1..=100);
    assert!(avg(&ms, "pointing_error_pred_deg") <= avg(&ms, "pointing_error_stale_deg"));
}

#[test]
fn isac_access_is_faster_on_every_config() {
    for name in [
        "formation_10m.toml",
        "formation_20m.toml",
        "beam_crossing.toml",
    ] {
        let (m, _) = run_scenario(&config(name)).unwrap();
        assert!(m.get("beam_latency_isac_ms").unwrap() < m.get("beam_latency_sweep_ms").unwrap());
    }
    let (m, _) = run_scenario(&config("emergency_alert.toml")).unwrap();
    assert!(m.get("alert_latency_ours_ms").unwrap() < m.get("alert_latency_baseline_ms").unwrap());
}

#[test]
fn dual_identity_never_loses_to_mobility_baseline() {
    let ms = runs(&config("sybil_walk.toml"), 1..=100);
    let mut strictly = 0;
    for m in &ms {
        let (ours, base) = (
            m.get("precision").unwrap(),
            m.get("baseline_precision").unwrap(),
        );
        assert!(ours >= base, "seed {}", m.seed);
        strictly += usize::from(ours > base);
    }
    assert!(strictly >= 90);
}

// Past 2x noise the host's offset hides inside the GNSS gate while matching
// failures flag nodes at random, so recall climbs back as precision collapses.
#[test]
#[ignore = "recall rises from 0.755 to 0.785 between 2x and 4x noise"]
fn recall_degrades_monotonically_with_noise() {
    let base = config("sybil_direct.toml");
    let mut last = f64::INFINITY;
    for k in [1.0, 2.0, 4.0, 8.0] {
        let mut cfg = base.clone();
        cfg.noise.sigma_angle_rad *= k;
        cfg.noise.sigma_gnss_m *= k;
        let recall = avg(&runs(&cfg, 1..=50), "recall");
        assert!(
            recall <= last + 1e-12,
            "recall {recall} at scale {k} exceeds {last}"
        );
        last = recall;
    }
}

#[test]
fn phantoms_never_produce_tracks() {
    for name in [
        "sybil_direct.toml",
        "sybil_indirect.toml",
        "sybil_stolen.toml",
        "sybil_staggered.toml",
    ] {
        let cfg = config(name);
        let mut sim = Simulation::new(&cfg).unwrap();
        let phantoms: Vec<NodeId> = sim
            .world
            .nodes
            .iter()
            .filter(|n| n.is_phantom())
            .map(|n| n.id)
            .collect();
        assert!(!phantoms.is_empty());
        for _ in 0..cfg.epochs() {
            sim.run_epoch().unwrap();
            for c in sim.certifiers.values() {
                for t in &c.tracker.tracks {
                    assert!(
                        !t.true_source.is_some_and(|s| phantoms.contains(&s)),
                        "{name}"
                    );
                }
            }
            sim.advance();
        }
    }
}

#[test]
fn delivery_is_symmetric() {
    let cfg = SensorConfig {
        comm_range_m: 120.0,
        ..SensorConfig::default()
    };
    let nodes: Vec<UavNode> = (0..12u32)
        .map(|i| {
            let a = f64::from(i) * 0.9;
            let r = 20.0 * f64::from(i);
            UavNode::new(
                u64::from(i),
                Role::Legitimate,
                Vec3::new(r * a.cos(), r * a.sin(), 100.0),
                Vec3::zeros(),
            )
        })
        .collect();
    let world = WorldState::constant_velocity(nodes, 0.01).unwrap();
    let mut streams = RngStreams::new(3);
    let beacons: Vec<_> = world
        .nodes
        .iter()
        .map(|n| honest_beacon(&world, n.id, &cfg, &mut streams).unwrap())
        .collect();
    let rx = deliver(&world, &beacons, &cfg, 0.0).unwrap();
    let heard = |a: u64, b: u64| {
        rx.get(&NodeId(a))
            .is_some_and(|v| v.iter().any(|r| r.beacon.true_origin == NodeId(b)))
    };
    let mut pairs = 0;
    for a in 0..12 {
        for b in 0..12 {
            assert_eq!(heard(a, b), heard(b, a), "{a} {b}");
            pairs += usize::from(heard(a, b));
        }
    }
    assert!(pairs > 0 && pairs < 12 * 11);
}

#[test]
fn sensing_noise_matches_configuration() {
    let cfg = SensorConfig {
        sigma_r_m: 0.7,
        sigma_angle_rad: 0.02,
        sigma_v_mps: 0.3,
        p_detect: 1.0,
        ..SensorConfig::default()
    };
    let nodes = vec![
        UavNode::new(
            0,
            Role::Legitimate,
            Vec3::new(0.0, 0.0, 100.0),
            Vec3::zeros(),
        ),
        UavNode::new(
            1,
            Role::Legitimate,
            Vec3::new(80.0, 30.0, 110.0),
            Vec3::new(3.0, -1.0, 0.0),
        ),
    ];
    let world = WorldState::constant_velocity(nodes, 0.01).unwrap();
    let mut streams = RngStreams::new(11);
    let mut samples: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for _ in 0..100_000 {
        let m = sense(&world, NodeId(0), &cfg, &mut streams)
            .unwrap()
            .remove(0);
        samples.entry("range").or_default().push(m.range_m);
        samples.entry("azimuth").or_default().push(m.azimuth_rad);
        samples
            .entry("elevation")
            .or_default()
            .push(m.elevation_rad);
        samples
            .entry("radial")
            .or_default()
            .push(m.radial_velocity_mps);
    }
    let want = [
        ("azimuth", cfg.sigma_angle_rad),
        ("elevation", cfg.sigma_angle_rad),
        ("radial", cfg.sigma_v_mps),
        ("range", cfg.sigma_r_m),
    ];
    for (name, sigma) in want {
        let x = &samples[name];
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        assert!(
            (var / (sigma * sigma) - 1.0).abs() < 0.05,
            "{name}: {var} vs {}",
            sigma * sigma
        );
    }
}

#[test]
fn default_thresholds_round_trip_through_toml() {
    let t = Thresholds::default();
    let text = toml::to_string(&t).unwrap();
    assert_eq!(toml::from_str::<Thresholds>(&text).unwrap(), t);
}
