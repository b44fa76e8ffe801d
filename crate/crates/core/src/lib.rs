//! System-level simulator for cellular-connected UAV communication in 5G
//! networks.
//!
//! The crate is organized as a set of loosely coupled subsystems driven by a
//! deterministic discrete-event engine:
//!
//! - [`sim`] — virtual clock, ordered event queue, seeded RNG streams
//! - [`topology`] — gNB/UE configuration, interface groups, association
//! - [`mobility`] — 3D random waypoint and fixed-trajectory UAV movement
//! - [`channel`] — urban-micro aerial propagation (LoS probability, path
//!   loss, lognormal shadowing, uplink SINR with inter-cell interference)
//! - [`transport`] — SINR→rate link abstraction plus UDP / TCP / QUIC /
//!   MP-QUIC flow models with cross-layer telemetry
//! - [`handover`] — per-UE measurement windows and pluggable handover
//!   strategies (A3 event, UCB bandit, trained DQN policy)
//! - [`rl`] — dueling double-DQN with N-step returns, replay buffer and a
//!   from-scratch fully-connected network
//! - [`runner`] — binds everything into a runnable simulation
//! - [`metrics`] — trace rows, CSV emission and pure metric aggregation
//! - [`experiment`] — run / train / compare / sweep orchestration

pub mod channel;
pub mod experiment;
pub mod handover;
pub mod metrics;
pub mod mobility;
pub mod rl;
pub mod runner;
pub mod sim;
pub mod topology;
pub mod transport;

pub use channel::{ChannelConfig, ChannelError, LinkGeometry};
pub use handover::{A3Config, HandoverDecision, HandoverError, HandoverRecord, StrategyKind};
pub use metrics::RunMetrics;
pub use mobility::{KinematicState, MobilityError, MobilitySpec};
pub use rl::{AgentAction, AgentState, Hyperparams, QNetwork, RewardSpec};
pub use runner::{RunConfig, RunOutput, Simulation};
pub use sim::{Event, EventKind, SimError, SimTime};
pub use topology::{GnbConfig, Scenario, TopologyError, UeConfig};
pub use transport::{FlowState, Protocol, TransportStats};
