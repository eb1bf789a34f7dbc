//! Deterministic discrete-event simulator for multipath QoS routing in
//! mobile ad hoc networks.
//!
//! Geometry, movement legs, energy accounting and the reservation ledger
//! are generic over the scalar type; the aliases below fix them to `f64`,
//! which is what the simulator runs on.

pub mod config;
pub mod energy;
pub mod ids;
pub mod mobility;
pub mod network;
pub mod qos;
pub mod radio;
pub mod rng;
pub mod routing;
pub mod runner;
pub mod scalar;
pub mod sim;
pub mod trace;
pub mod workload;

pub use config::{parse_scenario, parse_scenario_str, ConfigError, ScenarioConfig};
pub use ids::{FlowId, NodeId, PacketId};
pub use network::{DiscoveryRecord, RunResult, SimError, Simulation};
pub use runner::{run_scenario, RunError, RunOptions};
pub use scalar::Scalar;
pub use sim::{Scheduler, SimTime};
pub use workload::{MetricsSummary, PacketStatus};

pub type Position = radio::Point2<f64>;
pub type Leg = mobility::MovementLeg<f64>;
pub type Mobility = mobility::MobilityManager<f64>;
pub type Energy = energy::EnergyAccount<f64>;
pub type Profile = energy::PowerProfile<f64>;
pub type Ledger = qos::ReservationLedger<f64>;
