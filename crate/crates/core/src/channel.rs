//! Air-to-ground propagation for the urban-micro aerial-vehicle scenario.
//!
//! Covers line-of-sight probability, LoS/NLoS path loss, lognormal shadowing
//! with spatial autocorrelation, thermal noise, and uplink SINR with
//! inter-cell interference. Aerial UEs (22.5 m < h_ut <= 300 m) use the
//! aerial-vehicle coefficient set; at or below 22.5 m the terrestrial
//! urban-micro street-canyon model applies so takeoff and landing stay in a
//! valid domain.

use crate::sim::{RngStream, StreamLabel};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Maximum UE height covered by the aerial model.
pub const MAX_UE_HEIGHT_M: f64 = 300.0;
/// Above this height the aerial coefficient set applies.
pub const AERIAL_HEIGHT_THRESHOLD_M: f64 = 22.5;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("geometry outside model validity: {0}")]
    Domain(String),
}

/// Geometric inputs of one UE-gNB link.
#[derive(Debug, Clone, Copy)]
pub struct LinkGeometry {
    /// Horizontal distance, meters.
    pub d2d: f64,
    /// Slant distance, meters.
    pub d3d: f64,
    /// UE height, meters.
    pub h_ut: f64,
    /// gNB height, meters.
    pub h_bs: f64,
    /// Carrier frequency, GHz.
    pub fc_ghz: f64,
}

impl LinkGeometry {
    pub fn between(ue: [f64; 3], gnb: [f64; 3], fc_ghz: f64) -> Self {
        let dx = ue[0] - gnb[0];
        let dy = ue[1] - gnb[1];
        let dz = ue[2] - gnb[2];
        let d2d = (dx * dx + dy * dy).sqrt();
        let d3d = (dx * dx + dy * dy + dz * dz).sqrt();
        LinkGeometry { d2d, d3d, h_ut: ue[2], h_bs: gnb[2], fc_ghz }
    }
}

/// One propagation sample on a link at an instant.
#[derive(Debug, Clone, Copy)]
pub struct ChannelSample {
    pub t_secs: f64,
    pub los: bool,
    pub path_loss_db: f64,
    pub shadow_db: f64,
    /// tx_power - path_loss - shadow (+ optional pattern gain).
    pub rx_power_dbm: f64,
}

/// Per-link uplink SINR at a timestamp.
#[derive(Debug, Clone, Copy)]
pub struct SinrReport {
    pub t_secs: f64,
    pub sinr_db: f64,
}

/// Channel model knobs. Defaults follow the aerial urban-micro setup used
/// throughout the shipped scenarios.
#[derive(Debug, Clone, Copy)]
pub struct ChannelConfig {
    pub sigma_los_db: f64,
    pub sigma_nlos_db: f64,
    /// Shadowing decorrelation distance, meters.
    pub decorrelation_m: f64,
    /// LoS state is held until the UE moves farther than this.
    pub los_update_distance_m: f64,
    /// Optional per-sample Gaussian jitter stand-in for fast fading (dB).
    pub fast_fading_jitter_db: Option<f64>,
    /// Hook for antenna patterns; isotropic (gains folded into tx power)
    /// when absent.
    pub pattern_gain_db: Option<fn(&LinkGeometry) -> f64>,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            sigma_los_db: 4.0,
            sigma_nlos_db: 6.0,
            decorrelation_m: 13.0,
            los_update_distance_m: 5.0,
            fast_fading_jitter_db: None,
            pattern_gain_db: None,
        }
    }
}

/// LoS probability for horizontal distance `d2d` and UE height `h_ut`.
///
/// Aerial branch (22.5 < h_ut <= 300):
/// `1` for `d2d <= d1`, else `d1/d2d + exp(-d2d/p1) * (1 - d1/d2d)` with
/// `d1 = max(294.05*log10(h_ut) - 432.94, 18)` and
/// `p1 = 233.98*log10(h_ut) - 0.95`.
/// At or below 22.5 m the street-canyon form applies (d1 = 18, p1 = 36).
pub fn los_probability(d2d: f64, h_ut: f64) -> Result<f64, ChannelError> {
    if !(h_ut <= MAX_UE_HEIGHT_M) {
        return Err(ChannelError::Domain(format!("h_ut {h_ut} m above {MAX_UE_HEIGHT_M} m")));
    }
    if d2d < 0.0 {
        return Err(ChannelError::Domain(format!("negative d2d {d2d}")));
    }
    let (d1, p1) = if h_ut > AERIAL_HEIGHT_THRESHOLD_M {
        (
            (294.05 * h_ut.log10() - 432.94).max(18.0),
            233.98 * h_ut.log10() - 0.95,
        )
    } else {
        (18.0, 36.0)
    };
    if d2d <= d1 {
        return Ok(1.0);
    }
    let p = d1 / d2d + (-d2d / p1).exp() * (1.0 - d1 / d2d);
    Ok(p.clamp(0.0, 1.0))
}

/// Path loss in dB for the given geometry and LoS condition.
///
/// Aerial branch:
/// LoS `30.9 + (22.25 - 0.5*log10(h_ut))*log10(d3d) + 20*log10(fc)`;
/// NLoS is the max of the LoS value and
/// `32.4 + (43.2 - 7.6*log10(h_ut))*log10(d3d) + 20*log10(fc)`.
pub fn path_loss_db(g: &LinkGeometry, los: bool) -> Result<f64, ChannelError> {
    if !(g.h_ut <= MAX_UE_HEIGHT_M) {
        return Err(ChannelError::Domain(format!("h_ut {} m above {MAX_UE_HEIGHT_M} m", g.h_ut)));
    }
    if g.d3d < 1.0 {
        return Err(ChannelError::Domain(format!("d3d {} m below 1 m", g.d3d)));
    }
    if g.fc_ghz <= 0.0 {
        return Err(ChannelError::Domain(format!("fc {} GHz not positive", g.fc_ghz)));
    }
    if g.h_ut > AERIAL_HEIGHT_THRESHOLD_M {
        let pl_los = 30.9 + (22.25 - 0.5 * g.h_ut.log10()) * g.d3d.log10() + 20.0 * g.fc_ghz.log10();
        if los {
            Ok(pl_los)
        } else {
            let pl_nlos =
                32.4 + (43.2 - 7.6 * g.h_ut.log10()) * g.d3d.log10() + 20.0 * g.fc_ghz.log10();
            Ok(pl_nlos.max(pl_los))
        }
    } else {
        Ok(street_canyon_path_loss_db(g, los))
    }
}

/// Terrestrial urban-micro street-canyon path loss (UE at or below 22.5 m).
fn street_canyon_path_loss_db(g: &LinkGeometry, los: bool) -> f64 {
    // Breakpoint with 1 m effective environment height.
    let fc_hz = g.fc_ghz * 1e9;
    let d_bp = 4.0 * (g.h_bs - 1.0).max(0.1) * (g.h_ut - 1.0).max(0.1) * fc_hz / 299_792_458.0;
    let pl_los = if g.d2d <= d_bp {
        32.4 + 21.0 * g.d3d.log10() + 20.0 * g.fc_ghz.log10()
    } else {
        32.4 + 40.0 * g.d3d.log10() + 20.0 * g.fc_ghz.log10()
            - 9.5 * (d_bp * d_bp + (g.h_bs - g.h_ut).powi(2)).log10()
    };
    if los {
        pl_los
    } else {
        let pl_nlos = 22.4 + 35.3 * g.d3d.log10() + 21.3 * g.fc_ghz.log10() - 0.3 * (g.h_ut - 1.5);
        pl_nlos.max(pl_los)
    }
}

/// Thermal noise power in dBm for a receiver of the given bandwidth and
/// noise figure: `-174 + 10*log10(BW_Hz) + NF`.
pub fn noise_dbm(bandwidth_mhz: f64, noise_figure_db: f64) -> f64 {
    -174.0 + 10.0 * (bandwidth_mhz * 1e6).log10() + noise_figure_db
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Uplink SINR in dB: signal over the mW-domain sum of interference powers
/// plus thermal noise. An empty interferer set is allowed.
pub fn uplink_sinr_db(signal_dbm: f64, interferers_dbm: &[f64], noise_dbm: f64) -> f64 {
    let denom_mw: f64 =
        interferers_dbm.iter().map(|&i| dbm_to_mw(i)).sum::<f64>() + dbm_to_mw(noise_dbm);
    signal_dbm - mw_to_dbm(denom_mw)
}

/// Same quantity derived purely in the dB domain (iterated pairwise power
/// sum), used as the cross-check route against [`uplink_sinr_db`].
pub fn uplink_sinr_db_log_domain(signal_dbm: f64, interferers_dbm: &[f64], noise_dbm: f64) -> f64 {
    // Pairwise sum in dB: a (+) b = max + 10*log10(1 + 10^(-|a-b|/10)).
    let mut acc = noise_dbm;
    for &i in interferers_dbm {
        let (hi, lo) = if acc >= i { (acc, i) } else { (i, acc) };
        acc = hi + 10.0 * (1.0 + 10f64.powf((lo - hi) / 10.0)).log10();
    }
    signal_dbm - acc
}

/// Per-link shadowing: a unit-variance AR(1) process over distance moved,
/// scaled by the LoS- or NLoS-specific sigma. Keeping the process normalized
/// preserves continuity when the LoS state flips.
#[derive(Debug, Clone)]
pub struct ShadowingProcess {
    normalized: f64,
    rng: ChaCha8Rng,
    decorrelation_m: f64,
}

impl ShadowingProcess {
    pub fn new(stream: RngStream, decorrelation_m: f64) -> Self {
        let mut rng = stream.rng();
        let normalized = standard_normal(&mut rng);
        ShadowingProcess { normalized, rng, decorrelation_m }
    }

    /// Advance by the distance moved since the previous sample and return
    /// the new shadowing value in dB for the given sigma.
    pub fn advance(&mut self, distance_moved_m: f64, sigma_db: f64) -> f64 {
        if distance_moved_m > 0.0 {
            let rho = (-distance_moved_m / self.decorrelation_m).exp();
            let innovation = standard_normal(&mut self.rng);
            self.normalized = rho * self.normalized + (1.0 - rho * rho).sqrt() * innovation;
        }
        self.normalized * sigma_db
    }

    pub fn current(&self, sigma_db: f64) -> f64 {
        self.normalized * sigma_db
    }
}

/// Box-Muller; used instead of a distribution type so the draw sequence is
/// pinned by this crate alone.
fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Holds the LoS state of one link, redrawing from the LoS probability only
/// after the UE has moved far enough to decorrelate the blockage geometry.
#[derive(Debug, Clone)]
pub struct LosState {
    pub los: bool,
    last_position: [f64; 3],
    rng: ChaCha8Rng,
    update_distance_m: f64,
}

impl LosState {
    pub fn new(
        stream: RngStream,
        position: [f64; 3],
        d2d: f64,
        h_ut: f64,
        update_distance_m: f64,
    ) -> Result<Self, ChannelError> {
        let mut rng = stream.rng();
        let p = los_probability(d2d, h_ut)?;
        let los = rng.gen_range(0.0..1.0) < p;
        Ok(LosState { los, last_position: position, rng, update_distance_m })
    }

    /// Resample if the UE moved more than the update distance.
    pub fn update(&mut self, position: [f64; 3], d2d: f64, h_ut: f64) -> Result<bool, ChannelError> {
        let moved = dist3(position, self.last_position);
        if moved > self.update_distance_m {
            let p = los_probability(d2d, h_ut)?;
            self.los = self.rng.gen_range(0.0..1.0) < p;
            self.last_position = position;
        }
        Ok(self.los)
    }
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}
