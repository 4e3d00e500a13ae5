//! Trace-driven building blocks for ABR streaming experiments over
//! air-to-ground links: throughput/flight-state traces, sensor quantization,
//! a chunked playback simulator, QoE scoring, and rule-based baselines.

pub mod baseline;
pub mod error;
pub mod qoe;
pub mod seed;
pub mod sensor;
pub mod sim;
pub mod trace;

pub use error::Error;
