//! Simulator for mobile fog relays that learn where to sit between IoT
//! sensors and their edge server with tabular Q-learning.
//!
//! Each relay runs its own ε-greedy agent over a 27-state view of its
//! link (outage, energy used, redundant neighbours) and is rewarded when the
//! source it serves gets at least 95% of its packets through. A centralized
//! controller with global knowledge serves as the baseline.
//!
//! ```no_run
//! use fogrelay::{config::SimConfig, coordination::Mode, engine::run_experiment};
//!
//! let cfg = SimConfig::default();
//! let run = run_experiment(&cfg, 7, Mode::Decentralized).unwrap();
//! println!("{} episodes", run.episodes.len());
//! ```

pub mod agent;
pub mod channel;
pub mod cli;
pub mod config;
pub mod coordination;
pub mod csvio;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod scenario;
pub mod world;

pub use error::{Error, Result};
