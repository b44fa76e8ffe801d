//! Abstracted radio link and packet-level transport flows.
//!
//! The radio is reduced to a truncated-Shannon rate plus a step-function
//! packet error probability over SINR. On top of that run four flow models:
//! constant-bit-rate UDP, Reno-style TCP, QUIC with connection migration,
//! and MP-QUIC scheduling over two interfaces. Flows expose the cross-layer
//! telemetry (throughput, loss, RTT) consumed by the handover strategies.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Payload packet size used by every protocol.
pub const PACKET_BYTES: u64 = 1200;
pub const PACKET_BITS: f64 = (PACKET_BYTES * 8) as f64;
/// Spectral-efficiency cap (256-QAM regime) for the truncated-Shannon map.
pub const SPECTRAL_EFFICIENCY_CAP: f64 = 7.4;
/// Fraction of the Shannon bound delivered after protocol overheads.
pub const BANDWIDTH_EFFICIENCY: f64 = 0.6;
/// Below this SINR the link delivers nothing.
pub const SINR_FLOOR_DB: f64 = -10.0;
/// Initial congestion window, packets.
pub const INITIAL_WINDOW: f64 = 10.0;
/// Minimum retransmission timeout, seconds.
pub const RTO_MIN_S: f64 = 0.2;
/// One-way latency between gNB and the server endpoint, seconds.
pub const CORE_LATENCY_S: f64 = 0.010;
/// Sender queue capacity, packets. Overflow is dropped (UDP) or throttles
/// the source (bulk reliable flows never overflow).
pub const QUEUE_CAP_PKTS: u64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Udp,
    Tcp,
    Quic,
    Mpquic,
}

impl Protocol {
    pub fn reliable(self) -> bool {
        !matches!(self, Protocol::Udp)
    }

    pub fn label(self) -> &'static str {
        match self {
            Protocol::Udp => "UDP",
            Protocol::Tcp => "TCP",
            Protocol::Quic => "QUIC",
            Protocol::Mpquic => "MPQUIC",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "udp" => Ok(Protocol::Udp),
            "tcp" => Ok(Protocol::Tcp),
            "quic" => Ok(Protocol::Quic),
            "mpquic" => Ok(Protocol::Mpquic),
            other => Err(format!("unknown transport `{other}`")),
        }
    }
}

/// Instantaneous deliverable rate and packet error probability of a link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkCapacity {
    pub rate_bps: f64,
    pub per_packet_loss: f64,
}

/// Truncated-Shannon abstraction of the radio link.
pub fn capacity(sinr_db: f64, bandwidth_mhz: f64) -> LinkCapacity {
    assert!(bandwidth_mhz > 0.0);
    let bw_hz = bandwidth_mhz * 1e6;
    let rate_bps = if sinr_db < SINR_FLOOR_DB {
        0.0
    } else {
        let sinr_linear = 10f64.powf(sinr_db / 10.0);
        (BANDWIDTH_EFFICIENCY * bw_hz * (1.0 + sinr_linear).log2())
            .min(BANDWIDTH_EFFICIENCY * bw_hz * SPECTRAL_EFFICIENCY_CAP)
    };
    LinkCapacity { rate_bps, per_packet_loss: per_packet_loss(sinr_db) }
}

/// Step-function packet error probability over SINR.
pub fn per_packet_loss(sinr_db: f64) -> f64 {
    if sinr_db < -10.0 {
        1.0
    } else if sinr_db < -5.0 {
        0.5
    } else if sinr_db < 0.0 {
        0.05
    } else if sinr_db < 5.0 {
        0.005
    } else {
        0.0
    }
}

/// Telemetry over a trailing window.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TransportStats {
    pub window_s: f64,
    /// Delivered payload bits divided by the window.
    pub throughput_bps: f64,
    /// Radio loss fraction over packets put on the air in the window
    /// (0/0 counts as 0). Queue drops are tracked separately.
    pub loss_rate: f64,
    pub mean_rtt_s: f64,
}

/// Traffic source feeding a flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Source {
    /// Always-backlogged upload.
    Bulk,
    /// Constant bit rate in bits per second.
    Cbr { rate_bps: f64 },
}

/// Per-path transmission state. Single-path protocols use path 0.
#[derive(Debug, Clone)]
pub struct PathState {
    pub path_id: u8,
    pub interface_group: u32,
    pub cwnd: f64,
    pub ssthresh: f64,
    /// Smoothed RTT, seconds; 0 until the first ACK.
    pub srtt: f64,
    pub rttvar: f64,
    pub in_flight: u64,
    /// Fractional link-capacity credit carried between ticks.
    cap_credit_bits: f64,
    /// Time of the last ACK (or path start); drives the RTO.
    last_progress_s: f64,
}

impl PathState {
    fn new(path_id: u8, interface_group: u32) -> Self {
        PathState {
            path_id,
            interface_group,
            cwnd: INITIAL_WINDOW,
            ssthresh: f64::INFINITY,
            srtt: 0.0,
            rttvar: 0.0,
            in_flight: 0,
            cap_credit_bits: 0.0,
            last_progress_s: 0.0,
        }
    }

    /// Reno ACK response: slow start below ssthresh, else congestion
    /// avoidance (+1/cwnd per ACK).
    pub fn on_ack(&mut self) {
        if self.cwnd < self.ssthresh {
            self.cwnd += 1.0;
        } else {
            self.cwnd += 1.0 / self.cwnd;
        }
    }

    /// Reno loss response (fast recovery abstracted): halve, floor at 2.
    pub fn on_loss(&mut self) {
        self.ssthresh = (self.cwnd / 2.0).max(2.0);
        self.cwnd = self.ssthresh;
    }

    /// Retransmission timeout: collapse to one packet.
    pub fn on_timeout(&mut self) {
        self.ssthresh = (self.cwnd / 2.0).max(2.0);
        self.cwnd = 1.0;
    }

    fn observe_rtt(&mut self, sample_s: f64) {
        if self.srtt == 0.0 {
            self.srtt = sample_s;
            self.rttvar = sample_s / 2.0;
        } else {
            self.rttvar = 0.75 * self.rttvar + 0.25 * (self.srtt - sample_s).abs();
            self.srtt = 0.875 * self.srtt + 0.125 * sample_s;
        }
    }

    fn rto_s(&self) -> f64 {
        (self.srtt + 4.0 * self.rttvar).max(RTO_MIN_S)
    }

    fn window_headroom(&self) -> u64 {
        (self.cwnd.floor() as i64 - self.in_flight as i64).max(0) as u64
    }

    /// Fresh-path reset on QUIC connection migration.
    fn reset_for_migration(&mut self) {
        self.cwnd = INITIAL_WINDOW;
        self.ssthresh = f64::INFINITY;
        self.srtt = 0.0;
        self.rttvar = 0.0;
        self.cap_credit_bits = 0.0;
    }
}

/// Radio conditions one path sees during a tick.
#[derive(Debug, Clone, Copy)]
pub struct PathConditions {
    /// This flow's capacity share on the serving cell, bits/s.
    pub share_bps: f64,
    pub per_packet_loss: f64,
    /// One-way latency UE -> server (radio propagation + core), seconds.
    pub one_way_s: f64,
    /// Interface blacked out (handover interruption).
    pub blackout: bool,
}

#[derive(Debug, Clone)]
struct AirBatch {
    due_s: f64,
    sent_s: f64,
    pkts: u64,
    lost: u64,
    path: u8,
    /// Lost to a handover on a TCP path: never acknowledged, cleared by RTO.
    blackholed: bool,
}

#[derive(Debug, Clone, Copy, Default)]
struct TickStat {
    t_s: f64,
    delivered_pkts: u64,
    air_tx: u64,
    air_lost: u64,
    rtt_sum_s: f64,
    rtt_samples: u64,
}

/// Per-flow connection state and packet accounting.
///
/// Disposition counters conserve payload packets at every instant:
/// `source_pkts = delivered + dead + queued + in_flight`.
#[derive(Debug, Clone)]
pub struct FlowState {
    pub id: u32,
    pub ue: u32,
    pub protocol: Protocol,
    pub source: Source,
    pub paths: Vec<PathState>,
    queue_pkts: u64,
    cbr_credit_bits: f64,
    batches: VecDeque<AirBatch>,
    // Disposition counters (payload packets).
    pub source_pkts: u64,
    pub delivered_pkts: u64,
    pub dead_pkts: u64,
    // Wire counters.
    pub air_tx: u64,
    pub air_lost: u64,
    pub queue_drops: u64,
    /// Delivered payload bytes (survives QUIC migration).
    pub bytes_acked: u64,
    /// Congestion-relevant loss events.
    pub loss_events: u64,
    history: VecDeque<TickStat>,
    history_horizon_s: f64,
}

impl FlowState {
    pub fn new(id: u32, ue: u32, protocol: Protocol, source: Source, groups: &[u32]) -> Self {
        let paths = match protocol {
            Protocol::Mpquic => groups
                .iter()
                .enumerate()
                .map(|(i, &g)| PathState::new(i as u8, g))
                .collect(),
            _ => vec![PathState::new(0, groups[0])],
        };
        FlowState {
            id,
            ue,
            protocol,
            source,
            paths,
            queue_pkts: 0,
            cbr_credit_bits: 0.0,
            batches: VecDeque::new(),
            source_pkts: 0,
            delivered_pkts: 0,
            dead_pkts: 0,
            air_tx: 0,
            air_lost: 0,
            queue_drops: 0,
            bytes_acked: 0,
            loss_events: 0,
            history: VecDeque::new(),
            history_horizon_s: 5.0,
        }
    }

    pub fn queued_pkts(&self) -> u64 {
        self.queue_pkts
    }

    pub fn in_flight_total(&self) -> u64 {
        self.paths.iter().map(|p| p.in_flight).sum()
    }

    /// Packet conservation check.
    pub fn conserved(&self) -> bool {
        self.source_pkts
            == self.delivered_pkts + self.dead_pkts + self.queue_pkts + self.in_flight_total()
    }

    /// Min-RTT path selection with congestion-window headroom; `None` when
    /// every path is full (the packet stays queued).
    pub fn mpquic_schedule(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, p) in self.paths.iter().enumerate() {
            if p.window_headroom() == 0 {
                continue;
            }
            match best {
                None => best = Some(i),
                Some(b) => {
                    if p.srtt < self.paths[b].srtt {
                        best = Some(i);
                    }
                }
            }
        }
        best
    }

    /// QUIC connection migration on `path`: the connection survives, the
    /// path restarts from a fresh congestion state, and whatever was in the
    /// air is written off (re-queued for retransmission).
    pub fn quic_migrate(&mut self, path: u8) {
        debug_assert!(self.protocol == Protocol::Quic || self.protocol == Protocol::Mpquic);
        let mut requeued = 0;
        let mut survivors_lost = 0;
        self.batches.retain(|b| {
            if b.path == path {
                requeued += b.pkts;
                survivors_lost += b.pkts - b.lost;
                false
            } else {
                true
            }
        });
        let p = &mut self.paths[path as usize];
        p.in_flight -= requeued.min(p.in_flight);
        p.reset_for_migration();
        self.queue_pkts += requeued;
        self.air_lost += survivors_lost;
    }

    /// Handover notification. TCP keeps its connection (anchored at the IP
    /// level) but the in-flight burst is gone and the window stays blocked
    /// until the retransmission timer fires. UDP traffic in the air is lost
    /// outright. QUIC paths migrate.
    pub fn on_handover(&mut self, group: u32, now_s: f64) {
        let path_ids: Vec<u8> = self
            .paths
            .iter()
            .filter(|p| p.interface_group == group)
            .map(|p| p.path_id)
            .collect();
        for pid in path_ids {
            match self.protocol {
                Protocol::Quic | Protocol::Mpquic => self.quic_migrate(pid),
                Protocol::Tcp => {
                    for b in self.batches.iter_mut().filter(|b| b.path == pid && !b.blackholed) {
                        self.air_lost += b.pkts - b.lost;
                        b.blackholed = true;
                    }
                }
                Protocol::Udp => {
                    let mut gone = 0;
                    self.batches.retain(|b| {
                        if b.path == pid {
                            gone += b.pkts;
                            false
                        } else {
                            true
                        }
                    });
                    let p = &mut self.paths[pid as usize];
                    p.in_flight -= gone.min(p.in_flight);
                    self.air_lost += gone;
                    self.dead_pkts += gone;
                }
            }
        }
        let _ = now_s;
    }

    /// Advance the flow by `dt` seconds. `conditions[i]` describes path `i`.
    pub fn tick(&mut self, now_s: f64, dt: f64, conditions: &[PathConditions], rng: &mut ChaCha8Rng) {
        debug_assert_eq!(conditions.len(), self.paths.len());
        let mut stat = TickStat { t_s: now_s, ..Default::default() };

        self.admit_source(dt);
        self.process_due(now_s, &mut stat);
        self.check_timeouts(now_s);
        self.send(now_s, dt, conditions, rng, &mut stat);

        self.history.push_back(stat);
        while let Some(front) = self.history.front() {
            if now_s - front.t_s > self.history_horizon_s {
                self.history.pop_front();
            } else {
                break;
            }
        }
        debug_assert!(self.conserved(), "flow {} lost packets in accounting", self.id);
    }

    fn admit_source(&mut self, dt: f64) {
        match self.source {
            Source::Bulk => {
                // Keep the sender backlogged without growing the queue
                // unboundedly.
                let target = QUEUE_CAP_PKTS;
                if self.queue_pkts < target {
                    let add = target - self.queue_pkts;
                    self.queue_pkts += add;
                    self.source_pkts += add;
                }
            }
            Source::Cbr { rate_bps } => {
                self.cbr_credit_bits += rate_bps * dt;
                let arriving = (self.cbr_credit_bits / PACKET_BITS).floor() as u64;
                self.cbr_credit_bits -= arriving as f64 * PACKET_BITS;
                self.source_pkts += arriving;
                let space = QUEUE_CAP_PKTS.saturating_sub(self.queue_pkts);
                let admitted = arriving.min(space);
                self.queue_pkts += admitted;
                let dropped = arriving - admitted;
                self.queue_drops += dropped;
                self.dead_pkts += dropped;
            }
        }
    }

    fn process_due(&mut self, now_s: f64, stat: &mut TickStat) {
        // Blackholed batches stay put until the RTO clears them.
        let mut due: Vec<AirBatch> = Vec::new();
        self.batches.retain(|b| {
            if !b.blackholed && b.due_s <= now_s {
                due.push(b.clone());
                false
            } else {
                true
            }
        });
        for b in due {
            let pi = b.path as usize;
            self.paths[pi].in_flight -= b.pkts.min(self.paths[pi].in_flight);
            if self.protocol.reliable() {
                let acked = b.pkts - b.lost;
                self.delivered_pkts += acked;
                self.bytes_acked += acked * PACKET_BYTES;
                stat.delivered_pkts += acked;
                if acked > 0 {
                    let sample = now_s - b.sent_s;
                    self.paths[pi].observe_rtt(sample);
                    self.paths[pi].last_progress_s = now_s;
                    stat.rtt_sum_s += sample * acked as f64;
                    stat.rtt_samples += acked;
                    for _ in 0..acked {
                        self.paths[pi].on_ack();
                    }
                }
                if b.lost > 0 {
                    self.queue_pkts += b.lost;
                    self.loss_events += 1;
                    self.paths[pi].on_loss();
                }
            } else {
                // UDP batches carry survivors only; this is server receipt.
                self.delivered_pkts += b.pkts;
                self.bytes_acked += b.pkts * PACKET_BYTES;
                stat.delivered_pkts += b.pkts;
                let sample = 2.0 * (now_s - b.sent_s);
                stat.rtt_sum_s += sample * b.pkts as f64;
                stat.rtt_samples += b.pkts;
            }
        }
    }

    fn check_timeouts(&mut self, now_s: f64) {
        if !self.protocol.reliable() {
            return;
        }
        for pi in 0..self.paths.len() {
            let fired = {
                let p = &self.paths[pi];
                p.in_flight > 0 && now_s - p.last_progress_s >= p.rto_s()
            };
            if fired {
                let mut requeued = 0;
                let pid = self.paths[pi].path_id;
                self.batches.retain(|b| {
                    if b.path == pid {
                        requeued += b.pkts;
                        false
                    } else {
                        true
                    }
                });
                let p = &mut self.paths[pi];
                p.in_flight -= requeued.min(p.in_flight);
                p.on_timeout();
                p.last_progress_s = now_s;
                self.queue_pkts += requeued;
                self.loss_events += 1;
            }
        }
    }

    fn send(
        &mut self,
        now_s: f64,
        dt: f64,
        conditions: &[PathConditions],
        rng: &mut ChaCha8Rng,
        stat: &mut TickStat,
    ) {
        // Refresh per-path capacity credit, capped so idle links do not
        // accumulate a burst.
        for (pi, cond) in conditions.iter().enumerate() {
            let p = &mut self.paths[pi];
            if cond.blackout || cond.share_bps <= 0.0 {
                p.cap_credit_bits = 0.0;
            } else {
                p.cap_credit_bits =
                    (p.cap_credit_bits + cond.share_bps * dt).min(2.0 * cond.share_bps * dt);
            }
        }

        match self.protocol {
            Protocol::Mpquic => {
                while self.queue_pkts > 0 {
                    let pick = match self.pick_mpquic_path(conditions) {
                        Some(i) => i,
                        None => break,
                    };
                    self.transmit(pick, 1, now_s, &conditions[pick], rng, stat);
                }
            }
            _ => {
                let cond = &conditions[0];
                if cond.blackout || cond.share_bps <= 0.0 {
                    return;
                }
                let cap_pkts = (self.paths[0].cap_credit_bits / PACKET_BITS).floor() as u64;
                let window = if self.protocol.reliable() {
                    self.paths[0].window_headroom()
                } else {
                    u64::MAX
                };
                let n = self.queue_pkts.min(cap_pkts).min(window);
                if n > 0 {
                    self.transmit(0, n, now_s, cond, rng, stat);
                }
            }
        }
    }

    fn pick_mpquic_path(&self, conditions: &[PathConditions]) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, p) in self.paths.iter().enumerate() {
            let cond = &conditions[i];
            if cond.blackout || cond.share_bps <= 0.0 {
                continue;
            }
            if p.window_headroom() == 0 || p.cap_credit_bits < PACKET_BITS {
                continue;
            }
            match best {
                None => best = Some(i),
                Some(b) => {
                    if p.srtt < self.paths[b].srtt {
                        best = Some(i);
                    }
                }
            }
        }
        best
    }

    fn transmit(
        &mut self,
        pi: usize,
        n: u64,
        now_s: f64,
        cond: &PathConditions,
        rng: &mut ChaCha8Rng,
        stat: &mut TickStat,
    ) {
        let mut lost = 0;
        if cond.per_packet_loss > 0.0 {
            for _ in 0..n {
                if rng.gen_range(0.0..1.0) < cond.per_packet_loss {
                    lost += 1;
                }
            }
        }
        self.air_tx += n;
        self.air_lost += lost;
        stat.air_tx += n;
        stat.air_lost += lost;
        self.queue_pkts -= n;
        let p = &mut self.paths[pi];
        p.cap_credit_bits -= n as f64 * PACKET_BITS;

        if self.protocol.reliable() {
            p.in_flight += n;
            let due = now_s + 2.0 * cond.one_way_s;
            self.batches.push_back(AirBatch {
                due_s: due,
                sent_s: now_s,
                pkts: n,
                lost,
                path: p.path_id,
                blackholed: false,
            });
        } else {
            self.dead_pkts += lost;
            let survivors = n - lost;
            p.in_flight += survivors;
            if survivors > 0 {
                self.batches.push_back(AirBatch {
                    due_s: now_s + cond.one_way_s,
                    sent_s: now_s,
                    pkts: survivors,
                    lost: 0,
                    path: p.path_id,
                    blackholed: false,
                });
            }
        }
    }

    /// Telemetry over the trailing `window_s` seconds ending at `now_s`.
    pub fn transport_stats(&self, now_s: f64, window_s: f64) -> TransportStats {
        assert!(window_s > 0.0);
        let mut delivered = 0u64;
        let mut tx = 0u64;
        let mut lost = 0u64;
        let mut rtt_sum = 0.0;
        let mut rtt_n = 0u64;
        for s in self.history.iter().rev() {
            if now_s - s.t_s >= window_s {
                break;
            }
            delivered += s.delivered_pkts;
            tx += s.air_tx;
            lost += s.air_lost;
            rtt_sum += s.rtt_sum_s;
            rtt_n += s.rtt_samples;
        }
        TransportStats {
            window_s,
            throughput_bps: delivered as f64 * PACKET_BITS / window_s,
            loss_rate: if tx == 0 { 0.0 } else { lost as f64 / tx as f64 },
            mean_rtt_s: if rtt_n == 0 { 0.0 } else { rtt_sum / rtt_n as f64 },
        }
    }
}
