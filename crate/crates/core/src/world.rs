//! Ground-truth 3-D world: node kinematics, trajectories and geometric queries.
//!
//! Frames are world-axis aligned. Azimuth is measured in the x-y plane from
//! +x towards +y, elevation from the x-y plane towards +z.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Legitimate,
    Malicious,
    SybilPhantom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WingType {
    Fixed,
    Rotary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UavNode {
    pub id: NodeId,
    pub label: String,
    pub role: Role,
    pub position: Vec3,
    pub velocity: Vec3,
    pub wing_type: WingType,
    pub rotor_count: u8,
    /// Set only for phantoms; points at the malicious host.
    pub host_id: Option<NodeId>,
}

impl UavNode {
    pub fn new(id: u64, role: Role, position: Vec3, velocity: Vec3) -> Self {
        Self {
            id: NodeId(id),
            label: format!("N{id}"),
            role,
            position,
            velocity,
            wing_type: WingType::Rotary,
            rotor_count: 4,
            host_id: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_airframe(mut self, wing_type: WingType, rotor_count: u8) -> Self {
        self.wing_type = wing_type;
        self.rotor_count = rotor_count;
        self
    }

    pub fn phantom(id: u64, host: &UavNode) -> Self {
        Self {
            id: NodeId(id),
            label: format!("S{id}"),
            role: Role::SybilPhantom,
            position: host.position,
            velocity: host.velocity,
            wing_type: host.wing_type,
            rotor_count: host.rotor_count,
            host_id: Some(host.id),
        }
    }

    pub fn is_phantom(&self) -> bool {
        self.role == Role::SybilPhantom
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Trajectory {
    ConstantVelocity,
    /// Piecewise-linear path at constant speed; hovers after the last point.
    Waypoints {
        points: Vec<Vec3>,
        speed: f64,
        next: usize,
    },
    /// Phantoms ride on their host.
    Hosted,
}

/// Ground-truth relative geometry of a target seen from an observer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarTruth {
    pub range: f64,
    pub azimuth: f64,
    pub elevation: f64,
    /// Negative while approaching.
    pub radial_velocity: f64,
}

impl PolarTruth {
    /// Cartesian offset target − observer.
    pub fn to_offset(&self) -> Vec3 {
        polar_to_offset(self.range, self.azimuth, self.elevation)
    }
}

pub fn polar_to_offset(range: f64, azimuth: f64, elevation: f64) -> Vec3 {
    let (se, ce) = elevation.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    Vec3::new(range * ce * ca, range * ce * sa, range * se)
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub epoch: u64,
    pub dt: f64,
    pub nodes: Vec<UavNode>,
    pub trajectories: Vec<Trajectory>,
}

impl WorldState {
    /// Builds a world; phantoms get the `Hosted` trajectory regardless of
    /// what was passed and are snapped onto their host.
    pub fn new(nodes: Vec<UavNode>, trajectories: Vec<Trajectory>, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
        }
        if nodes.len() != trajectories.len() {
            return Err(Error::InvalidArgument(
                "one trajectory per node is required".into(),
            ));
        }
        let mut world = Self {
            epoch: 0,
            dt,
            nodes,
            trajectories,
        };
        world.validate()?;
        for (i, node) in world.nodes.iter().enumerate() {
            if let Trajectory::Waypoints {
                points,
                speed,
                next,
            } = &world.trajectories[i]
            {
                if *speed <= 0.0 || points.is_empty() || *next > points.len() {
                    return Err(Error::InvalidArgument(format!(
                        "bad waypoint trajectory for {}",
                        node.label
                    )));
                }
            }
        }
        for i in 0..world.nodes.len() {
            if world.nodes[i].is_phantom() {
                world.trajectories[i] = Trajectory::Hosted;
            } else if let Trajectory::Waypoints {
                points,
                speed,
                next,
            } = &world.trajectories[i]
            {
                world.nodes[i].velocity =
                    waypoint_velocity(world.nodes[i].position, points, *speed, *next);
            }
        }
        world.sync_phantoms();
        Ok(world)
    }

    /// Constant-velocity world, the common case in tests.
    pub fn constant_velocity(nodes: Vec<UavNode>, dt: f64) -> Result<Self> {
        let n = nodes.len();
        Self::new(nodes, vec![Trajectory::ConstantVelocity; n], dt)
    }

    fn validate(&self) -> Result<()> {
        let mut ids: Vec<NodeId> = self.nodes.iter().map(|n| n.id).collect();
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("node ids must be unique".into()));
        }
        for node in &self.nodes {
            let finite = node
                .position
                .iter()
                .chain(node.velocity.iter())
                .all(|v| v.is_finite());
            if !finite {
                return Err(Error::InvalidArgument(format!(
                    "non-finite kinematics for {}",
                    node.label
                )));
            }
            match (node.role, node.host_id) {
                (Role::SybilPhantom, Some(host)) => {
                    let host = self.node(host)?;
                    if host.role != Role::Malicious {
                        return Err(Error::InvalidArgument(format!(
                            "phantom {} must be hosted by a malicious node",
                            node.label
                        )));
                    }
                }
                (Role::SybilPhantom, None) => {
                    return Err(Error::InvalidArgument(format!(
                        "phantom {} has no host",
                        node.label
                    )))
                }
                (_, Some(_)) => {
                    return Err(Error::InvalidArgument(format!(
                        "only phantoms may have a host ({})",
                        node.label
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn time_s(&self) -> f64 {
        self.epoch as f64 * self.dt
    }

    pub fn node(&self, id: NodeId) -> Result<&UavNode> {
        self.nodes
            .iter()
            .find(|n| n.id == id)
            .ok_or(Error::UnknownNode(id))
    }

    pub fn by_label(&self, label: &str) -> Option<&UavNode> {
        self.nodes.iter().find(|n| n.label == label)
    }

    /// The physical body a node's radio lives on: the host for phantoms.
    pub fn body_of(&self, id: NodeId) -> Result<NodeId> {
        let node = self.node(id)?;
        Ok(node.host_id.unwrap_or(node.id))
    }

    pub fn next_free_id(&self) -> u64 {
        self.nodes.iter().map(|n| n.id.0 + 1).max().unwrap_or(0)
    }

    /// Adds a node (used to install phantoms after attack planning).
    pub fn push_node(&mut self, node: UavNode, trajectory: Trajectory) -> Result<()> {
        self.nodes.push(node);
        self.trajectories.push(trajectory);
        if let Err(e) = self.validate() {
            self.nodes.pop();
            self.trajectories.pop();
            return Err(e);
        }
        let last = self.nodes.len() - 1;
        if self.nodes[last].is_phantom() {
            self.trajectories[last] = Trajectory::Hosted;
        }
        self.sync_phantoms();
        Ok(())
    }

    fn sync_phantoms(&mut self) {
        for i in 0..self.nodes.len() {
            if let Some(host) = self.nodes[i].host_id {
                if let Some(h) = self.nodes.iter().find(|n| n.id == host) {
                    let (p, v) = (h.position, h.velocity);
                    self.nodes[i].position = p;
                    self.nodes[i].velocity = v;
                }
            }
        }
    }

    /// Advances every body by one tick of `self.dt`.
    pub fn step(&self) -> WorldState {
        let dt = self.dt;
        let mut next = self.clone();
        for (node, traj) in next.nodes.iter_mut().zip(next.trajectories.iter_mut()) {
            match traj {
                Trajectory::ConstantVelocity => {
                    node.position += node.velocity * dt;
                }
                Trajectory::Waypoints {
                    points,
                    speed,
                    next,
                } => {
                    advance_waypoints(node, points, *speed, next, dt);
                }
                Trajectory::Hosted => {}
            }
        }
        next.sync_phantoms();
        next.epoch += 1;
        next
    }
}

fn waypoint_velocity(position: Vec3, points: &[Vec3], speed: f64, next: usize) -> Vec3 {
    match points.get(next) {
        Some(target) => {
            let d = target - position;
            let n = d.norm();
            if n > 0.0 {
                d * (speed / n)
            } else {
                Vec3::zeros()
            }
        }
        None => Vec3::zeros(),
    }
}

fn advance_waypoints(node: &mut UavNode, points: &[Vec3], speed: f64, next: &mut usize, dt: f64) {
    let Some(target) = points.get(*next) else {
        node.velocity = Vec3::zeros();
        return;
    };
    let to_target = target - node.position;
    let dist = to_target.norm();
    if dist <= speed * dt {
        node.position = *target;
        *next += 1;
    } else {
        node.position += to_target * (speed * dt / dist);
    }
    node.velocity = waypoint_velocity(node.position, points, speed, *next);
}

/// Convenience wrapper: advance a world `steps` ticks.
pub fn run_steps(world: &WorldState, steps: usize) -> WorldState {
    let mut w = world.clone();
    for _ in 0..steps {
        w = w.step();
    }
    w
}

pub fn relative_polar(observer: &UavNode, target: &UavNode) -> Result<PolarTruth> {
    if observer.id == target.id {
        return Err(Error::InvalidArgument("observer equals target".into()));
    }
    polar_between(
        observer.position,
        observer.velocity,
        target.position,
        target.velocity,
    )
}

pub fn polar_between(op: Vec3, ov: Vec3, tp: Vec3, tv: Vec3) -> Result<PolarTruth> {
    let d = tp - op;
    let range = d.norm();
    if range < 1e-12 {
        return Err(Error::DegenerateGeometry);
    }
    let azimuth = wrap_angle(d.y.atan2(d.x));
    let elevation = (d.z / range).clamp(-1.0, 1.0).asin();
    let radial_velocity = d.dot(&(tv - ov)) / range;
    Ok(PolarTruth {
        range,
        azimuth,
        elevation,
        radial_velocity,
    })
}

pub fn neighbors_within(world: &WorldState, id: NodeId, radius: f64) -> Result<Vec<NodeId>> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "radius must be > 0, got {radius}"
        )));
    }
    let me = world.node(id)?;
    Ok(world
        .nodes
        .iter()
        .filter(|n| n.id != id && (n.position - me.position).norm() <= radius)
        .map(|n| n.id)
        .collect())
}
