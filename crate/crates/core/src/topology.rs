//! Radio network construction: gNBs, UAV-UEs, multi-interface bindings to
//! operator-specific gNB groups, and UE-gNB association.
//!
//! Scenarios are declared as a JSON tree (see the `ScenarioFile` schema) and
//! resolved into a [`Scenario`]. Randomized UE placement draws from the
//! topology RNG stream so builds are reproducible.

use crate::mobility::{Bounds, MobilityKind, MobilitySpec};
use crate::sim::{RngStream, StreamLabel};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default gNB height when `pos` carries only x/y.
pub const DEFAULT_GNB_HEIGHT_M: f64 = 25.0;
pub const DEFAULT_GNB_POWER_DBM: f64 = 44.0;
pub const DEFAULT_UE_POWER_DBM: f64 = 23.0;
pub const DEFAULT_NOISE_FIGURE_DB: f64 = 5.0;
/// Radius of the coverage disc used for randomized UE placement.
pub const PLACEMENT_RADIUS_M: f64 = 300.0;
/// Default altitude band for aerial UEs.
pub const DEFAULT_ALTITUDE_BAND_M: [f64; 2] = [50.0, 150.0];

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("schema error at `{path}`: {msg}")]
    Schema { path: String, msg: String },
    #[error("constraint violated: {0}")]
    Constraint(String),
    #[error("no candidate gNBs for interface group {0}")]
    NoCandidates(u32),
}

/// One base station.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GnbConfig {
    pub id: u32,
    pub position: [f64; 3],
    pub carrier_freq_ghz: f64,
    pub bandwidth_mhz: f64,
    pub tx_power_dbm: f64,
    pub interface_group: u32,
    pub noise_figure_db: f64,
}

/// A UE interface bound to one operator domain (gNB group).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterfaceBinding {
    pub interface_group: u32,
    pub serving_gnb: Option<u32>,
    pub candidate_gnbs: Vec<u32>,
}

/// One UAV terminal, possibly multi-interface.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UeConfig {
    pub id: u32,
    pub initial_position: [f64; 3],
    pub tx_power_dbm: f64,
    pub mobility: MobilitySpec,
    /// Overrides the run seed for the mobility stream; used for held-out
    /// trajectory sets.
    pub mobility_seed: Option<u64>,
    pub interfaces: Vec<InterfaceBinding>,
}

/// Fully resolved simulation topology.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub gnbs: Vec<GnbConfig>,
    pub ues: Vec<UeConfig>,
    pub area: Area,
    pub duration_s: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Area {
    pub x_m: f64,
    pub y_m: f64,
    pub z_max_m: f64,
}

impl Area {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        p[0] >= 0.0
            && p[0] <= self.x_m
            && p[1] >= 0.0
            && p[1] <= self.y_m
            && p[2] >= 0.0
            && p[2] <= self.z_max_m
    }

    /// Altitude band for aerial mobility inside this area.
    pub fn altitude_band(&self) -> [f64; 2] {
        let hi = self.z_max_m.min(DEFAULT_ALTITUDE_BAND_M[1]).max(1.5);
        let lo = DEFAULT_ALTITUDE_BAND_M[0].min(hi);
        [lo, hi]
    }

    pub fn bounds(&self, z: [f64; 2]) -> Bounds {
        Bounds { x: [0.0, self.x_m], y: [0.0, self.y_m], z }
    }
}

// ---------------------------------------------------------------------------
// On-disk schema
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub gnbs: Vec<GnbEntry>,
    #[serde(default)]
    pub ues: Vec<UeEntry>,
    /// Additional UEs placed uniformly over the union of gNB coverage discs.
    #[serde(default)]
    pub random_ues: Option<u32>,
    pub area: Area,
    pub duration_s: f64,
    pub seed: u64,
    #[serde(default)]
    pub experiment: Option<ExperimentBlock>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GnbEntry {
    pub id: u32,
    /// `[x, y]` (height defaults to 25 m) or `[x, y, z]`, meters.
    pub pos: Vec<f64>,
    pub freq_ghz: f64,
    pub bw_mhz: f64,
    #[serde(default)]
    pub power_dbm: Option<f64>,
    pub group: u32,
    #[serde(default)]
    pub noise_figure_db: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeEntry {
    pub id: u32,
    /// `[x, y]` or `[x, y, z]`, meters. With two coordinates the altitude
    /// comes from the mobility altitude band (or 1.5 m for static ground).
    pub pos: Vec<f64>,
    #[serde(default)]
    pub power_dbm: Option<f64>,
    /// Interface groups, one interface per group. Defaults to `[0]`.
    #[serde(default)]
    pub interfaces: Vec<u32>,
    pub mobility: MobilityEntry,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilityEntry {
    pub kind: MobilityKind,
    #[serde(default)]
    pub speed_range: Option<[f64; 2]>,
    #[serde(default)]
    pub hover_range: Option<[f64; 2]>,
    /// Inline waypoints for fixed trajectories.
    #[serde(default)]
    pub waypoints: Option<Vec<[f64; 3]>>,
    /// Waypoint file (one `x y z` per line), relative to the scenario file.
    #[serde(default)]
    pub waypoints_file: Option<String>,
    /// Seed pinning this UE's trajectory independently of the run seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

/// Experiment defaults carried inside a scenario file. All are overridable
/// from the command line.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    #[serde(default)]
    pub strategy: Option<String>,
    #[serde(default)]
    pub transport: Option<String>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Trajectory seeds for strategy comparison (held-out set).
    #[serde(default)]
    pub trajectories: Vec<u64>,
    /// Constant-bit-rate source rate for UDP flows, Mbit/s.
    #[serde(default)]
    pub cbr_mbps: Option<f64>,
    #[serde(default)]
    pub a3_offset_db: Option<f64>,
    #[serde(default)]
    pub a3_ttt_ms: Option<f64>,
    #[serde(default)]
    pub sweep: Option<SweepBlock>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    /// `ue_count`, `a3_offset` or `reward_weights`.
    pub axis: String,
    pub values: Vec<serde_json::Value>,
}

// ---------------------------------------------------------------------------
// Building
// ---------------------------------------------------------------------------

/// Parse and resolve a scenario from JSON text. `base_dir` anchors relative
/// waypoint-file paths.
pub fn build_scenario(json: &str, base_dir: Option<&std::path::Path>) -> Result<(Scenario, ExperimentBlock), TopologyError> {
    let de = &mut serde_json::Deserializer::from_str(json);
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
        TopologyError::Schema { path: e.path().to_string(), msg: e.inner().to_string() }
    })?;
    resolve(file, base_dir)
}

fn resolve(
    file: ScenarioFile,
    base_dir: Option<&std::path::Path>,
) -> Result<(Scenario, ExperimentBlock), TopologyError> {
    if file.duration_s <= 0.0 {
        return Err(TopologyError::Constraint(format!(
            "duration_s must be positive, got {}",
            file.duration_s
        )));
    }
    let area = file.area;
    if area.x_m <= 0.0 || area.y_m <= 0.0 || area.z_max_m <= 0.0 {
        return Err(TopologyError::Constraint("area dimensions must be positive".into()));
    }

    let mut gnbs = Vec::with_capacity(file.gnbs.len());
    let mut ids = std::collections::BTreeSet::new();
    for g in &file.gnbs {
        if !ids.insert(g.id) {
            return Err(TopologyError::Constraint(format!("duplicate gNB id {}", g.id)));
        }
        if g.freq_ghz <= 0.0 || g.bw_mhz <= 0.0 {
            return Err(TopologyError::Constraint(format!(
                "gNB {} needs positive carrier frequency and bandwidth",
                g.id
            )));
        }
        let position = expand_pos(&g.pos, DEFAULT_GNB_HEIGHT_M)
            .ok_or_else(|| TopologyError::Constraint(format!("gNB {}: pos needs 2 or 3 coordinates", g.id)))?;
        if position[2] < 0.0 {
            return Err(TopologyError::Constraint(format!("gNB {} below ground", g.id)));
        }
        if !area.contains(position) {
            return Err(TopologyError::Constraint(format!(
                "gNB {} at {:?} outside the {}x{} m area",
                g.id, position, area.x_m, area.y_m
            )));
        }
        gnbs.push(GnbConfig {
            id: g.id,
            position,
            carrier_freq_ghz: g.freq_ghz,
            bandwidth_mhz: g.bw_mhz,
            tx_power_dbm: g.power_dbm.unwrap_or(DEFAULT_GNB_POWER_DBM),
            interface_group: g.group,
            noise_figure_db: g.noise_figure_db.unwrap_or(DEFAULT_NOISE_FIGURE_DB),
        });
    }
    if gnbs.is_empty() {
        return Err(TopologyError::Constraint("scenario needs at least one gNB".into()));
    }

    let z_band = area.altitude_band();
    let mut ues = Vec::new();
    let mut ue_ids = std::collections::BTreeSet::new();
    for u in &file.ues {
        if !ue_ids.insert(u.id) {
            return Err(TopologyError::Constraint(format!("duplicate UE id {}", u.id)));
        }
        let ue = resolve_ue(u, &gnbs, &area, z_band, base_dir)?;
        ues.push(ue);
    }

    // Randomized placement: uniform over the union of coverage discs.
    if let Some(count) = file.random_ues {
        let mut rng = RngStream::new(file.seed, StreamLabel::Topology, 0).rng();
        let mut next_id = ue_ids.iter().next_back().map(|m| m + 1).unwrap_or(0);
        for _ in 0..count {
            let pos = draw_in_coverage(&gnbs, &area, z_band, &mut rng);
            let spec = MobilitySpec {
                kind: MobilityKind::Static,
                bounds: area.bounds(z_band),
                speed_range: [0.0, 0.0],
                hover_range: [0.0, 0.0],
                waypoints: vec![],
            };
            ues.push(UeConfig {
                id: next_id,
                initial_position: pos,
                tx_power_dbm: DEFAULT_UE_POWER_DBM,
                mobility: spec,
                mobility_seed: None,
                interfaces: vec![binding_for_group(0, &gnbs)?],
            });
            next_id += 1;
        }
    }

    if ues.is_empty() {
        return Err(TopologyError::Constraint("scenario needs at least one UE".into()));
    }

    let scenario = Scenario { gnbs, ues, area, duration_s: file.duration_s, seed: file.seed };
    Ok((scenario, file.experiment.unwrap_or_default()))
}

fn resolve_ue(
    u: &UeEntry,
    gnbs: &[GnbConfig],
    area: &Area,
    z_band: [f64; 2],
    base_dir: Option<&std::path::Path>,
) -> Result<UeConfig, TopologyError> {
    let kind = u.mobility.kind;
    let default_z = match kind {
        MobilityKind::Static => 1.5f64.min(area.z_max_m),
        _ => z_band[0],
    };
    let mut waypoints = u.mobility.waypoints.clone().unwrap_or_default();
    if let Some(rel) = &u.mobility.waypoints_file {
        let path = match base_dir {
            Some(dir) => dir.join(rel),
            None => std::path::PathBuf::from(rel),
        };
        let text = std::fs::read_to_string(&path).map_err(|e| {
            TopologyError::Constraint(format!("UE {}: cannot read {}: {e}", u.id, path.display()))
        })?;
        waypoints = crate::mobility::parse_trajectory(&text)
            .map_err(|e| TopologyError::Constraint(format!("UE {}: {e}", u.id)))?;
    }

    let bounds = match kind {
        MobilityKind::Static => area.bounds([0.0, area.z_max_m]),
        _ => area.bounds(z_band),
    };
    let spec = MobilitySpec {
        kind,
        bounds,
        speed_range: u.mobility.speed_range.unwrap_or([10.0, 15.0]),
        hover_range: u.mobility.hover_range.unwrap_or([0.0, 2.0]),
        waypoints,
    };
    spec.validate().map_err(|m| TopologyError::Constraint(format!("UE {}: {m}", u.id)))?;

    let initial_position = match kind {
        MobilityKind::FixedTrajectory => spec.waypoints[0],
        _ => expand_pos(&u.pos, default_z).ok_or_else(|| {
            TopologyError::Constraint(format!("UE {}: pos needs 2 or 3 coordinates", u.id))
        })?,
    };
    if !area.contains(initial_position) {
        return Err(TopologyError::Constraint(format!(
            "UE {} at {:?} outside the {}x{} m area",
            u.id, initial_position, area.x_m, area.y_m
        )));
    }

    let groups: Vec<u32> = if u.interfaces.is_empty() { vec![0] } else { u.interfaces.clone() };
    let mut seen = std::collections::BTreeSet::new();
    let mut interfaces = Vec::new();
    for &g in &groups {
        if !seen.insert(g) {
            return Err(TopologyError::Constraint(format!(
                "UE {}: interface group {g} bound twice",
                u.id
            )));
        }
        interfaces.push(binding_for_group(g, gnbs)?);
    }

    Ok(UeConfig {
        id: u.id,
        initial_position,
        tx_power_dbm: u.power_dbm.unwrap_or(DEFAULT_UE_POWER_DBM),
        mobility: spec,
        mobility_seed: u.mobility.seed,
        interfaces,
    })
}

fn binding_for_group(group: u32, gnbs: &[GnbConfig]) -> Result<InterfaceBinding, TopologyError> {
    let candidates: Vec<u32> =
        gnbs.iter().filter(|g| g.interface_group == group).map(|g| g.id).collect();
    if candidates.is_empty() {
        return Err(TopologyError::NoCandidates(group));
    }
    Ok(InterfaceBinding { interface_group: group, serving_gnb: None, candidate_gnbs: candidates })
}

fn expand_pos(pos: &[f64], default_z: f64) -> Option<[f64; 3]> {
    match pos.len() {
        2 => Some([pos[0], pos[1], default_z]),
        3 => Some([pos[0], pos[1], pos[2]]),
        _ => None,
    }
}

fn draw_in_coverage(
    gnbs: &[GnbConfig],
    area: &Area,
    z_band: [f64; 2],
    rng: &mut rand_chacha::ChaCha8Rng,
) -> [f64; 3] {
    loop {
        let g = &gnbs[rng.gen_range(0..gnbs.len())];
        let r = PLACEMENT_RADIUS_M * rng.gen_range(0.0f64..1.0).sqrt();
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let x = g.position[0] + r * theta.cos();
        let y = g.position[1] + r * theta.sin();
        let z = if z_band[0] == z_band[1] { z_band[0] } else { rng.gen_range(z_band[0]..z_band[1]) };
        let p = [x, y, z];
        if area.contains(p) {
            return p;
        }
    }
}

/// Initial cell selection: the candidate with the highest current SINR,
/// ties broken by the lowest gNB id. `sinr_of` maps candidate id to SINR dB.
pub fn associate(
    binding: &InterfaceBinding,
    sinr_of: impl Fn(u32) -> f64,
) -> Result<u32, TopologyError> {
    if binding.candidate_gnbs.is_empty() {
        return Err(TopologyError::NoCandidates(binding.interface_group));
    }
    let mut best = binding.candidate_gnbs[0];
    let mut best_sinr = sinr_of(best);
    for &c in &binding.candidate_gnbs[1..] {
        let s = sinr_of(c);
        if s > best_sinr || (s == best_sinr && c < best) {
            best = c;
            best_sinr = s;
        }
    }
    Ok(best)
}
