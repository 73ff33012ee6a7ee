//! Energy-aware scheduling of D2D pairs over a shared channel with limited
//! CSI feedback.
//!
//! Each slot one pair is chosen by the drift-plus-penalty metric
//! `V * P - Q * R`. Four policies differ in how much channel state reaches
//! the scheduler: full CSI, a `K1`-pair report subset, one-bit channel
//! indexing over `K2` indicator REs, and round-robin. The [`collision`]
//! module analyses the indexing scheme and tunes `V` for a target collision
//! probability.

pub mod amc;
pub mod channel;
pub mod collision;
pub mod config;
pub mod engine;
pub mod error;
pub mod feedback;
pub mod lyapunov;
pub mod scenario;
pub mod schedulers;
pub mod stats;

pub use amc::{default_amc_table, AmcEntry, AmcTable};
pub use config::ScenarioConfig;
pub use engine::{compare_policies, run_realization, Comparison, EngineConfig, RunMetrics};
pub use error::{AnalysisError, ConfigError, FeedbackError};
pub use lyapunov::{LyapunovParams, Metric, VirtualQueue};
pub use scenario::{D2DPair, PathLossModel};
pub use schedulers::{Network, Policy, SlotOutcome};
