//! Tail-aware power control for vehicular links, with centralized and federated
//! estimation of the queue-excess distribution.

pub mod channel;
pub mod config;
pub mod error;
pub mod federated;
pub mod gpd;
pub mod lyapunov;
pub mod queues;
pub mod report;
pub mod scalar;
pub mod sim;

pub use config::{Protocol, ScenarioConfig};
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type GpdParams64 = gpd::GpdParams<f64>;
pub type GradientPair64 = gpd::GradientPair<f64>;
pub type QueueState64 = queues::QueueState<f64>;
pub type ChannelParams64 = channel::ChannelParams<f64>;
pub type Grid64 = channel::Grid<f64>;
