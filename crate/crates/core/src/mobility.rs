//! UAV position evolution: 3D random waypoint with speed and hover draws,
//! deterministic waypoint-list trajectories at constant speed, and static
//! nodes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MobilityError {
    #[error("trajectory has zero total length")]
    DegenerateTrajectory,
    #[error("trajectory file malformed at line {line}: {msg}")]
    BadTrajectoryFile { line: usize, msg: String },
}

/// Axis-aligned movement bounds in meters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct Bounds {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub z: [f64; 2],
}

impl Bounds {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        let eps = 1e-9;
        p[0] >= self.x[0] - eps
            && p[0] <= self.x[1] + eps
            && p[1] >= self.y[0] - eps
            && p[1] <= self.y[1] + eps
            && p[2] >= self.z[0] - eps
            && p[2] <= self.z[1] + eps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MobilityKind {
    RandomWaypoint3d,
    FixedTrajectory,
    Static,
}

/// Declarative mobility description attached to a UE.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MobilitySpec {
    pub kind: MobilityKind,
    pub bounds: Bounds,
    /// [v_min, v_max] in m/s.
    pub speed_range: [f64; 2],
    /// [h_min, h_max] hover duration in seconds (random waypoint only).
    pub hover_range: [f64; 2],
    /// Waypoints for fixed trajectories, looped after the last.
    #[serde(default)]
    pub waypoints: Vec<[f64; 3]>,
}

impl MobilitySpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.speed_range[0] < 0.0 || self.speed_range[0] > self.speed_range[1] {
            return Err(format!("bad speed_range {:?}", self.speed_range));
        }
        if self.hover_range[0] < 0.0 || self.hover_range[0] > self.hover_range[1] {
            return Err(format!("bad hover_range {:?}", self.hover_range));
        }
        if self.kind == MobilityKind::FixedTrajectory {
            if self.waypoints.len() < 2 {
                return Err("fixed trajectory needs at least 2 waypoints".into());
            }
            for (i, w) in self.waypoints.iter().enumerate() {
                if !self.bounds.contains(*w) {
                    return Err(format!("waypoint {i} outside bounds"));
                }
            }
        }
        Ok(())
    }

    /// Fixed trajectories fly at the midpoint of the speed range.
    pub fn cruise_speed(&self) -> f64 {
        0.5 * (self.speed_range[0] + self.speed_range[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Moving,
    Hovering,
}

/// Kinematic state advanced by [`step`]. Pure data; the RNG is passed in.
#[derive(Debug, Clone)]
pub struct KinematicState {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub phase: Phase,
    /// Target point currently flown to.
    pub target: [f64; 3],
    /// Index of the target waypoint (fixed trajectories).
    pub waypoint_index: usize,
    pub speed: f64,
    /// Remaining hover time in seconds.
    pub hover_left: f64,
}

impl KinematicState {
    /// Initial state at `position`; random-waypoint UEs draw their first
    /// target and speed.
    pub fn init(spec: &MobilitySpec, position: [f64; 3], rng: &mut ChaCha8Rng) -> Self {
        match spec.kind {
            MobilityKind::Static => KinematicState {
                position,
                velocity: [0.0; 3],
                phase: Phase::Hovering,
                target: position,
                waypoint_index: 0,
                speed: 0.0,
                hover_left: f64::INFINITY,
            },
            MobilityKind::FixedTrajectory => {
                let start = spec.waypoints[0];
                let mut st = KinematicState {
                    position: start,
                    velocity: [0.0; 3],
                    phase: Phase::Moving,
                    target: spec.waypoints[1 % spec.waypoints.len()],
                    waypoint_index: 1 % spec.waypoints.len(),
                    speed: spec.cruise_speed(),
                    hover_left: 0.0,
                };
                st.point_velocity();
                st
            }
            MobilityKind::RandomWaypoint3d => {
                let target = draw_waypoint(&spec.bounds, rng);
                let speed = draw_uniform(spec.speed_range, rng);
                let mut st = KinematicState {
                    position,
                    velocity: [0.0; 3],
                    phase: Phase::Moving,
                    target,
                    waypoint_index: 0,
                    speed,
                    hover_left: 0.0,
                };
                st.point_velocity();
                st
            }
        }
    }

    fn point_velocity(&mut self) {
        let d = sub(self.target, self.position);
        let len = norm(d);
        if len > 0.0 && self.speed > 0.0 {
            self.velocity = [
                d[0] / len * self.speed,
                d[1] / len * self.speed,
                d[2] / len * self.speed,
            ];
        } else {
            self.velocity = [0.0; 3];
        }
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn draw_waypoint(b: &Bounds, rng: &mut ChaCha8Rng) -> [f64; 3] {
    [
        rng.gen_range(b.x[0]..=b.x[1]),
        rng.gen_range(b.y[0]..=b.y[1]),
        rng.gen_range(b.z[0]..=b.z[1]),
    ]
}

fn draw_uniform(range: [f64; 2], rng: &mut ChaCha8Rng) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.gen_range(range[0]..range[1])
    }
}

/// Advance `state` by `dt` seconds. Movement is piecewise: arrival, hover
/// expiry and re-targeting all happen inside the step, so positions are
/// exact regardless of the step size.
pub fn step(spec: &MobilitySpec, state: &mut KinematicState, dt: f64, rng: &mut ChaCha8Rng) {
    assert!(dt > 0.0, "dt must be positive");
    if spec.kind == MobilityKind::Static {
        return;
    }
    let mut remaining = dt;
    // Bounded loop; each iteration either consumes time or advances a
    // waypoint, and zero-length segments are skipped.
    let mut guard = 0;
    while remaining > 1e-12 {
        guard += 1;
        if guard > 10_000 {
            break;
        }
        match state.phase {
            Phase::Moving => {
                let to_target = sub(state.target, state.position);
                let dist = norm(to_target);
                if dist <= 1e-12 {
                    arrive(spec, state, rng);
                    continue;
                }
                if state.speed <= 0.0 {
                    break;
                }
                let t_need = dist / state.speed;
                if t_need > remaining {
                    let frac = remaining * state.speed / dist;
                    state.position = [
                        state.position[0] + to_target[0] * frac,
                        state.position[1] + to_target[1] * frac,
                        state.position[2] + to_target[2] * frac,
                    ];
                    remaining = 0.0;
                } else {
                    state.position = state.target;
                    remaining -= t_need;
                    arrive(spec, state, rng);
                }
            }
            Phase::Hovering => {
                if state.hover_left > remaining {
                    state.hover_left -= remaining;
                    remaining = 0.0;
                } else {
                    remaining -= state.hover_left;
                    state.hover_left = 0.0;
                    depart(spec, state, rng);
                    if state.phase == Phase::Hovering {
                        // Static-like spec (zero speed); nothing to do.
                        break;
                    }
                }
            }
        }
    }
}

fn arrive(spec: &MobilitySpec, state: &mut KinematicState, rng: &mut ChaCha8Rng) {
    match spec.kind {
        MobilityKind::FixedTrajectory => {
            // Advance to the next waypoint, looping to 0 after the last; no
            // hovering on fixed routes.
            let n = spec.waypoints.len();
            let mut next = (state.waypoint_index + 1) % n;
            // Skip coincident waypoints.
            let mut tries = 0;
            while norm(sub(spec.waypoints[next], state.position)) <= 1e-12 && tries < n {
                next = (next + 1) % n;
                tries += 1;
            }
            state.waypoint_index = next;
            state.target = spec.waypoints[next];
            state.point_velocity();
        }
        MobilityKind::RandomWaypoint3d => {
            state.phase = Phase::Hovering;
            state.velocity = [0.0; 3];
            state.hover_left = draw_uniform(spec.hover_range, rng);
        }
        MobilityKind::Static => {}
    }
}

fn depart(spec: &MobilitySpec, state: &mut KinematicState, rng: &mut ChaCha8Rng) {
    state.target = draw_waypoint(&spec.bounds, rng);
    state.speed = draw_uniform(spec.speed_range, rng);
    if state.speed > 0.0 {
        state.phase = Phase::Moving;
        state.point_velocity();
    }
}

/// Duration of one full pass over a fixed trajectory at constant speed.
pub fn trajectory_duration(spec: &MobilitySpec, speed: f64) -> Result<f64, MobilityError> {
    assert!(speed > 0.0, "speed must be positive");
    let total: f64 = spec
        .waypoints
        .windows(2)
        .map(|w| norm(sub(w[1], w[0])))
        .sum();
    if total <= 0.0 {
        return Err(MobilityError::DegenerateTrajectory);
    }
    Ok(total / speed)
}

/// Parse a trajectory file: one `x y z` waypoint per line, meters,
/// `#`-prefixed comment lines skipped.
pub fn parse_trajectory(text: &str) -> Result<Vec<[f64; 3]>, MobilityError> {
    let mut points = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(MobilityError::BadTrajectoryFile {
                line: idx + 1,
                msg: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let mut p = [0.0; 3];
        for (i, f) in fields.iter().enumerate() {
            p[i] = f.parse::<f64>().map_err(|e| MobilityError::BadTrajectoryFile {
                line: idx + 1,
                msg: e.to_string(),
            })?;
        }
        points.push(p);
    }
    Ok(points)
}
