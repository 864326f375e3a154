//! Multi-aircraft terminal-area trajectory optimisation with a sequential
//! Monte Carlo optimiser inside a receding-horizon loop, plus fuel-burn
//! estimation from recorded flight traces.

pub mod aircraft;
pub mod bench;
pub mod constraints;
pub mod error;
pub mod fuel;
pub mod objectives;
pub mod output;
pub mod rng;
pub mod runner;
pub mod scenario;
pub mod smc;
pub mod traces;
pub mod units;
pub mod wind;

pub use error::{Error, ModelError, Result};
