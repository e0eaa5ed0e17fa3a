pub mod coldq;
pub mod error;
pub mod exec;
pub mod expert;
pub mod generators;
pub mod harness;
pub mod metrics;
pub mod problem;
pub mod queue;
pub mod rng;
pub mod solver;
pub mod verify;
