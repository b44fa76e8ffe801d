//! Cross-layer deep-RL handover engine: observation construction, a dueling
//! double-DQN with N-step returns on a small fully-connected network with
//! hand-rolled differentiation, replay buffer, target network, epsilon-greedy
//! exploration and an offline trainer.

mod checkpoint;
mod net;
mod replay;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use net::{Adam, Layer, Momentum, Optimizer, QNetwork};
pub use replay::ReplayBuffer;
pub use train::{train, CurvePoint, Environment, Hyperparams, NStepAssembler, TrainResult};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RlError {
    #[error("no measurements available yet; first decision must wait")]
    ColdStart,
    #[error("state dimension {got} does not match network input {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("training loss became non-finite")]
    NonFiniteLoss,
}

/// Observation vector: `[sinr_0..B, onehot_0..B, delta_best, T, tau, H]`,
/// every component in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState(pub Vec<f64>);

impl AgentState {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn in_bounds(&self) -> bool {
        self.0.iter().all(|v| (0.0..=1.0).contains(v) && v.is_finite())
    }
}

/// Index of the chosen cell in the candidate list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentAction(pub usize);

/// Reward weights: `r = w1*SINR_target + w2*T - w3*HO_cost`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RewardSpec {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub gamma: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        RewardSpec { w1: 0.3, w2: 0.5, w3: 0.2, gamma: 0.99 }
    }
}

/// Scaling constants mapping raw link metrics into `[0, 1]`. Stored in
/// checkpoints so a trained policy carries its own normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub sinr_lo_db: f64,
    pub sinr_span_db: f64,
    pub tau_scale_s: f64,
    pub ho_count_scale: f64,
    pub capacity_max_bps: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization {
            sinr_lo_db: -10.0,
            sinr_span_db: 50.0,
            tau_scale_s: 30.0,
            ho_count_scale: 20.0,
            capacity_max_bps: 1.0,
        }
    }
}

impl Normalization {
    pub fn sinr(&self, db: f64) -> f64 {
        ((db - self.sinr_lo_db) / self.sinr_span_db).clamp(0.0, 1.0)
    }
}

/// Raw inputs for one observation.
#[derive(Debug, Clone)]
pub struct ObservationInputs<'a> {
    /// Sliding-average SINR per candidate, `None` until a cell has samples.
    pub avg_sinr_db: &'a [Option<f64>],
    pub serving_index: usize,
    pub throughput_bps: f64,
    pub secs_since_handover: f64,
    pub handover_count: u64,
}

/// Build the agent observation. Errors with [`RlError::ColdStart`] when the
/// serving cell has no measurements yet.
pub fn observe(inp: &ObservationInputs, norm: &Normalization) -> Result<AgentState, RlError> {
    let b = inp.avg_sinr_db.len();
    let serving = inp.avg_sinr_db[inp.serving_index].ok_or(RlError::ColdStart)?;
    let mut v = Vec::with_capacity(2 * b + 4);
    let mut best = f64::NEG_INFINITY;
    for &s in inp.avg_sinr_db {
        let db = s.unwrap_or(norm.sinr_lo_db);
        best = best.max(db);
        v.push(norm.sinr(db));
    }
    for i in 0..b {
        v.push(if i == inp.serving_index { 1.0 } else { 0.0 });
    }
    // Gap between the best candidate and the serving cell, never negative.
    let delta = ((best - serving) / norm.sinr_span_db).clamp(0.0, 1.0);
    v.push(delta);
    v.push((inp.throughput_bps / norm.capacity_max_bps).clamp(0.0, 1.0));
    v.push((inp.secs_since_handover / norm.tau_scale_s).min(1.0));
    v.push((inp.handover_count as f64 / norm.ho_count_scale).min(1.0));
    let state = AgentState(v);
    debug_assert!(state.in_bounds());
    Ok(state)
}

/// `r = w1*SINR_target + w2*T - w3*[handover happened]`.
pub fn reward(
    spec: &RewardSpec,
    sinr_target_norm: f64,
    throughput_norm: f64,
    handover: bool,
) -> f64 {
    spec.w1 * sinr_target_norm + spec.w2 * throughput_norm
        - spec.w3 * if handover { 1.0 } else { 0.0 }
}

/// One replay record carrying an N-step return.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: AgentState,
    pub action: usize,
    pub n_step_return: f64,
    pub state_after_n: AgentState,
    pub done: bool,
    pub n_actual: u32,
}

/// Double-DQN targets: the online network selects the bootstrap action, the
/// target network evaluates it.
pub fn td_target(
    batch: &[Transition],
    online: &QNetwork,
    target: &QNetwork,
    gamma: f64,
) -> Vec<f64> {
    batch
        .iter()
        .map(|tr| {
            if tr.done {
                tr.n_step_return
            } else {
                let q_online = online.forward(&tr.state_after_n.0);
                let best = argmax(&q_online);
                let q_target = target.forward(&tr.state_after_n.0);
                tr.n_step_return + gamma.powi(tr.n_actual as i32) * q_target[best]
            }
        })
        .collect()
}

fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in q.iter().enumerate() {
        if *v > q[best] {
            best = i;
        }
    }
    let _ = q[best];
    best
}

/// Greedy action with no-op preference: ties involving the current cell
/// resolve to staying; other ties resolve to the lowest index.
pub fn act_greedy(net: &QNetwork, state: &AgentState, current_index: usize) -> AgentAction {
    let q = net.forward(&state.0);
    let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if q[current_index] == max {
        return AgentAction(current_index);
    }
    for (i, v) in q.iter().enumerate() {
        if *v == max {
            return AgentAction(i);
        }
    }
    AgentAction(current_index)
}

/// Linear exploration schedule from `start` to `end` over `decay_steps`.
pub fn epsilon(step: u64, start: f64, end: f64, decay_steps: u64) -> f64 {
    if decay_steps == 0 || step >= decay_steps {
        return end;
    }
    start + (end - start) * step as f64 / decay_steps as f64
}

/// Mean-squared TD error on the taken actions plus one optimizer step.
/// Gradients are clipped to a global norm of 10.
pub fn train_step(
    net: &mut QNetwork,
    opt: &mut Optimizer,
    batch: &[Transition],
    targets: &[f64],
) -> Result<f64, RlError> {
    debug_assert_eq!(batch.len(), targets.len());
    let states: Vec<&[f64]> = batch.iter().map(|t| t.state.0.as_slice()).collect();
    let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
    let (loss, mut grads) = net.loss_and_gradients(&states, &actions, targets)?;
    if !loss.is_finite() {
        return Err(RlError::NonFiniteLoss);
    }
    net::clip_global_norm(&mut grads, 10.0);
    opt.apply(net, &grads);
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_layout_and_values() {
        let norm = Normalization { capacity_max_bps: 10e6, ..Default::default() };
        let avgs = [Some(15.0), Some(25.0), Some(5.0)];
        let inp = ObservationInputs {
            avg_sinr_db: &avgs,
            serving_index: 0,
            throughput_bps: 5e6,
            secs_since_handover: 15.0,
            handover_count: 10,
        };
        let s = observe(&inp, &norm).unwrap();
        assert_eq!(s.dim(), 2 * 3 + 4);
        assert!((s.0[0] - 0.5).abs() < 1e-12, "15 dB maps to 0.5");
        assert_eq!(&s.0[3..6], &[1.0, 0.0, 0.0]);
        // delta_best = (25 - 15)/50 = 0.2
        assert!((s.0[6] - 0.2).abs() < 1e-12);
        assert!((s.0[7] - 0.5).abs() < 1e-12);
        assert!((s.0[8] - 0.5).abs() < 1e-12);
        assert!((s.0[9] - 0.5).abs() < 1e-12);
        assert!(s.in_bounds());
    }

    #[test]
    fn serving_is_best_gives_zero_gap() {
        let norm = Normalization::default();
        let avgs = [Some(20.0), Some(10.0)];
        let inp = ObservationInputs {
            avg_sinr_db: &avgs,
            serving_index: 0,
            throughput_bps: 0.0,
            secs_since_handover: 0.0,
            handover_count: 0,
        };
        let s = observe(&inp, &norm).unwrap();
        assert_eq!(s.0[4], 0.0, "delta_best");
    }

    #[test]
    fn cold_start_without_serving_samples() {
        let norm = Normalization::default();
        let avgs = [None, Some(10.0)];
        let inp = ObservationInputs {
            avg_sinr_db: &avgs,
            serving_index: 0,
            throughput_bps: 0.0,
            secs_since_handover: 0.0,
            handover_count: 0,
        };
        assert_eq!(observe(&inp, &norm), Err(RlError::ColdStart));
    }

    #[test]
    fn reward_hand_values() {
        let spec = RewardSpec { w1: 0.3, w2: 0.5, w3: 0.2, gamma: 0.99 };
        assert!((reward(&spec, 0.8, 0.6, false) - 0.54).abs() < 1e-12);
        assert!((reward(&spec, 0.8, 0.6, true) - 0.34).abs() < 1e-12);
        assert_eq!(reward(&spec, 0.0, 0.0, false), 0.0);
    }

    #[test]
    fn epsilon_schedule_endpoints() {
        assert_eq!(epsilon(0, 1.0, 0.05, 10_000), 1.0);
        assert_eq!(epsilon(10_000, 1.0, 0.05, 10_000), 0.05);
        assert_eq!(epsilon(1_000_000, 1.0, 0.05, 10_000), 0.05);
        let mid = epsilon(5_000, 1.0, 0.05, 10_000);
        assert!((mid - 0.525).abs() < 1e-12);
    }

    #[test]
    fn td_target_hand_arithmetic() {
        // rewards [1,1,1], gamma 0.9, N=3, bootstrap Q* = 2:
        // return = 1 + 0.9 + 0.81 = 2.71; y = 2.71 + 0.729*2 = 4.168.
        let ret = 1.0 + 0.9 + 0.81;
        let y = ret + 0.9f64.powi(3) * 2.0;
        assert!((y - 4.168).abs() < 1e-12);
    }

    #[test]
    fn act_greedy_rules() {
        let net = QNetwork::new(4, 8, 3, 1);
        // Hand-pick Q by running through a crafted state is awkward; instead
        // exercise the tie rules through a tiny custom network.
        let mut net = net;
        net.zero_all();
        // All-zero weights: Q identical -> stay on current.
        let s = AgentState(vec![0.3, 0.4, 0.5, 0.6]);
        assert_eq!(act_greedy(&net, &s, 2), AgentAction(2));
        assert_eq!(act_greedy(&net, &s, 0), AgentAction(0));
    }
}
