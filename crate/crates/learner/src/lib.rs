//! Learning side of the ABR framework: dense actor/critic networks with an
//! LSTM throughput encoder and exact hand-rolled gradients, plus the
//! advantage actor-critic training loop with parallel experience workers.

pub mod agent;
pub mod error;
pub mod nn;

pub use error::Error;
